#include "fairgo/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fairgo {

namespace {

struct FairTrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace

// --- FilterBank ----------------------------------------------------------------

nn::Vector FilterBank::apply(const nn::Vector& e,
                             std::vector<nn::Mlp::Cache>* caches) const {
  if (subfilters.empty()) throw nn::ShapeMismatch("FilterBank: no sub-filters");
  if (caches) caches->resize(subfilters.size());
  nn::Vector f = nn::Vector::Zero(subfilters.front().output_dim());
  for (std::size_t k = 0; k < subfilters.size(); ++k)
    f += subfilters[k].forward(e, caches ? &(*caches)[k] : nullptr);
  return f / static_cast<double>(subfilters.size());
}

nn::Matrix FilterBank::apply_all(const nn::Matrix& embeddings) const {
  nn::Matrix out(subfilters.front().output_dim(), embeddings.cols());
  for (Eigen::Index i = 0; i < embeddings.cols(); ++i)
    out.col(i) = apply(embeddings.col(i));
  return out;
}

// --- Elementary operations -------------------------------------------------------

double predict_filtered(const nn::Vector& f_u, const nn::Vector& f_v) {
  if (f_u.size() != f_v.size())
    throw nn::ShapeMismatch("predict_filtered: dimension mismatch");
  return f_u.dot(f_v);
}

double rating_value(const std::vector<const RatingTriple*>& batch,
                    const nn::Matrix& filtered, int user_count) {
  double value = 0.0;
  for (const auto* t : batch) {
    double err = t->rating - filtered.col(t->user).dot(filtered.col(user_count + t->item));
    value -= err * err;
  }
  return value;
}

double node_value(const DiscriminatorBank& discriminators, const nn::Vector& f_u,
                  const std::vector<int>& labels) {
  double value = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == AttributeTable::kMissing) continue;
    any = true;
    auto logits = discriminators.nets[k].forward(f_u);
    value -= nn::softmax_cross_entropy(logits, labels[k]).loss;
  }
  if (!any) throw FairTrainError("MissingAttribute: user has no labels");
  return value;
}

nn::Vector summarize_first_order(const BipartiteAdjacency& adj,
                                 const nn::Matrix& filtered, int user) {
  nn::Vector p = nn::Vector::Zero(filtered.rows());
  if (adj.neighbors[user].empty()) return p; // excluded from V_S
  for (const auto& [j, w] : adj.neighbors[user]) p += w * filtered.col(j);
  return p / adj.weight_sums[user];
}

std::vector<nn::Matrix> propagate_orders(const BipartiteAdjacency& adj,
                                         const nn::Matrix& filtered, int order,
                                         nn::Matrix* mean_aggregate) {
  std::vector<nn::Matrix> hs;
  const nn::Matrix* prev = &filtered;
  for (int l = 0; l < order; ++l) {
    nn::Matrix h = nn::Matrix::Zero(filtered.rows(), filtered.cols());
    for (int i = 0; i < adj.node_count(); ++i) {
      if (adj.neighbors[i].empty()) continue; // isolated: zero vector
      for (const auto& [j, w] : adj.neighbors[i]) h.col(i) += w * prev->col(j);
      h.col(i) /= adj.weight_sums[i];
    }
    hs.push_back(std::move(h));
    prev = &hs.back();
  }
  if (mean_aggregate) {
    *mean_aggregate = nn::Matrix::Zero(filtered.rows(), filtered.cols());
    for (const auto& h : hs) *mean_aggregate += h;
    *mean_aggregate /= static_cast<double>(order);
  }
  return hs;
}

double graph_value(const DiscriminatorBank& discriminators,
                   const std::vector<nn::Vector>& order_vectors,
                   const std::vector<int>& labels, const SummaryConfig& config) {
  auto value_at = [&](const nn::Vector& vec) {
    double v = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (labels[k] == AttributeTable::kMissing) continue;
      auto logits = discriminators.nets[k].forward(vec);
      v -= nn::softmax_cross_entropy(logits, labels[k]).loss;
    }
    return v;
  };
  if (config.variant == SummaryVariant::ValueAggregation) {
    if (order_vectors.size() != config.layer_weights.size())
      throw nn::ShapeMismatch("graph_value: order/weight count mismatch");
    double v = 0.0;
    for (std::size_t l = 0; l < order_vectors.size(); ++l)
      if (config.layer_weights[l] != 0.0)
        v += config.layer_weights[l] * value_at(order_vectors[l]);
    return v;
  }
  if (order_vectors.size() != 1)
    throw nn::ShapeMismatch("graph_value: expected a single summary vector");
  return value_at(order_vectors[0]);
}

nn::Vector learned_aggregation(const nn::Mlp& aggregator,
                               const std::vector<nn::Vector>& order_vectors) {
  Eigen::Index dim = order_vectors.front().size();
  nn::Vector concat(dim * static_cast<Eigen::Index>(order_vectors.size()));
  for (std::size_t l = 0; l < order_vectors.size(); ++l)
    concat.segment(static_cast<Eigen::Index>(l) * dim, dim) = order_vectors[l];
  return aggregator.forward(concat);
}

// --- Training-time internals --------------------------------------------------------

namespace {

// Sampled, normalized hop-1 coefficients of a node.
std::vector<std::pair<int, double>> sampled_neighbors(const BipartiteAdjacency& adj,
                                                      int node, int cap,
                                                      nn::SeededRng& rng) {
  const auto& all = adj.neighbors[node];
  if (all.empty()) return {};
  std::vector<std::pair<int, double>> picked;
  if (static_cast<int>(all.size()) <= cap) {
    picked = all;
  } else {
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < cap; ++i)
      std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) picked.push_back(all[i]);
  }
  double total = 0.0;
  for (const auto& [j, w] : picked) total += w;
  for (auto& [j, w] : picked) w /= total;
  return picked;
}

std::vector<std::pair<int, double>>
order_coefficients(const BipartiteAdjacency& adj, int node, int order, int cap,
                   nn::SeededRng& rng) {
  if (order == 1) return sampled_neighbors(adj, node, cap, rng);
  std::unordered_map<int, double> acc;
  for (const auto& [v, w] : sampled_neighbors(adj, node, cap, rng))
    for (const auto& [j, c] : order_coefficients(adj, v, order - 1, cap, rng))
      acc[j] += w * c;
  std::vector<std::pair<int, double>> out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

SummaryCoefficients build_summary_coefficients(const BipartiteAdjacency& adj, int user,
                                               int order, int neighbor_cap,
                                               nn::SeededRng& rng) {
  SummaryCoefficients coeffs;
  coeffs.per_order.reserve(order);
  for (int l = 1; l <= order; ++l)
    coeffs.per_order.push_back(order_coefficients(adj, user, l, neighbor_cap, rng));
  return coeffs;
}

FilteredBatch filter_nodes(const FilterBank& filters, const nn::Matrix& embeddings,
                           const std::vector<int>& nodes) {
  FilteredBatch fb;
  fb.nodes = nodes;
  fb.f.resize(filters.subfilters.front().output_dim(),
              static_cast<Eigen::Index>(nodes.size()));
  fb.caches.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    fb.index[nodes[i]] = static_cast<int>(i);
    fb.f.col(static_cast<Eigen::Index>(i)) =
        filters.apply(embeddings.col(nodes[i]), &fb.caches[i]);
  }
  return fb;
}

namespace {

// Summary vectors (one per order) for a user, read out of the filtered batch
// through the coefficient maps.
std::vector<nn::Vector> summary_vectors(const FilteredBatch& fb,
                                        const SummaryCoefficients& coeffs) {
  std::vector<nn::Vector> out;
  out.reserve(coeffs.per_order.size());
  for (const auto& order : coeffs.per_order) {
    nn::Vector h = nn::Vector::Zero(fb.f.rows());
    for (const auto& [j, c] : order) h += c * fb.f.col(fb.index.at(j));
    out.push_back(std::move(h));
  }
  return out;
}

bool has_summary(const SummaryCoefficients& coeffs) {
  for (const auto& order : coeffs.per_order)
    if (!order.empty()) return true;
  return false;
}

nn::Vector concat_orders(const std::vector<nn::Vector>& hs) {
  Eigen::Index dim = hs.front().size();
  nn::Vector concat(dim * static_cast<Eigen::Index>(hs.size()));
  for (std::size_t l = 0; l < hs.size(); ++l)
    concat.segment(static_cast<Eigen::Index>(l) * dim, dim) = hs[l];
  return concat;
}

} // namespace

double discriminator_loss_and_grads(const FairModel& model, const FilteredBatch& fb,
                                    const std::vector<LabeledUser>& users,
                                    const AttributeTable& attrs,
                                    std::vector<nn::MlpGrads>& disc_grads,
                                    nn::MlpGrads* aggregator_grads) {
  if (users.empty()) return 0.0;
  double total = 0.0;
  double inv_users = 1.0 / static_cast<double>(users.size());

  for (const auto& lu : users) {
    const auto& labels = attrs.values[lu.user];
    const nn::Vector f_u = fb.col(lu.user);
    bool summarized = has_summary(lu.coeffs);
    std::vector<nn::Vector> hs;
    nn::Vector p_u;
    nn::Mlp::Cache agg_cache;
    if (summarized) {
      hs = summary_vectors(fb, lu.coeffs);
      if (model.summary.variant == SummaryVariant::Learned)
        p_u = model.aggregator->forward(concat_orders(hs), &agg_cache);
      else if (model.summary.variant == SummaryVariant::FirstOrder)
        p_u = hs[0];
    }
    nn::Vector dp = nn::Vector::Zero(fb.f.rows());

    auto add_term = [&](int k, const nn::Vector& input, double weight,
                        nn::Vector* dinput) {
      nn::Mlp::Cache cache;
      auto logits = model.discriminators.nets[k].forward(input, &cache);
      auto ce = nn::softmax_cross_entropy(logits, labels[k]);
      total += weight * inv_users * ce.loss;
      model.discriminators.nets[k].backward(cache, weight * inv_users * ce.grad,
                                            disc_grads[k]);
      if (dinput)
        *dinput += model.discriminators.nets[k].input_gradient(
            cache, (weight * inv_users) * ce.grad);
    };

    for (int k = 0; k < attrs.attribute_count; ++k) {
      if (labels[k] == AttributeTable::kMissing) continue;
      add_term(k, f_u, 1.0, nullptr); // node-level
      if (!summarized) continue;
      if (model.summary.variant == SummaryVariant::ValueAggregation) {
        for (std::size_t l = 0; l < hs.size(); ++l)
          if (model.summary.layer_weights[l] != 0.0)
            add_term(k, hs[l], model.summary.layer_weights[l], nullptr);
      } else {
        // The aggregator is part of the adversary: collect the gradient of its
        // output so it can be trained to predict labels as well as possible.
        add_term(k, p_u, 1.0,
                 model.summary.variant == SummaryVariant::Learned &&
                         aggregator_grads
                     ? &dp
                     : nullptr);
      }
    }

    if (summarized && model.summary.variant == SummaryVariant::Learned &&
        aggregator_grads && !dp.isZero(0.0))
      model.aggregator->backward(agg_cache, dp, *aggregator_grads);
  }
  return total;
}

FilterPhaseStats filter_phase_loss_and_grads(
    const FairModel& model, const FilteredBatch& fb,
    const std::vector<const RatingTriple*>& batch, int user_count,
    const std::vector<LabeledUser>& users, const AttributeTable& attrs,
    double lambda, std::vector<nn::MlpGrads>& filter_grads,
    nn::MlpGrads* aggregator_grads) {
  FilterPhaseStats stats;
  nn::Matrix df = nn::Matrix::Zero(fb.f.rows(), fb.f.cols());

  // Rating term: mean squared error over the batch.
  double inv_batch = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  for (const auto* t : batch) {
    int u_col = fb.index.at(t->user);
    int v_col = fb.index.at(user_count + t->item);
    const nn::Vector f_u = fb.f.col(u_col);
    const nn::Vector f_v = fb.f.col(v_col);
    double err = f_u.dot(f_v) - t->rating;
    stats.loss += inv_batch * err * err;
    stats.rating_value -= err * err;
    df.col(u_col) += (2.0 * inv_batch * err) * f_v;
    df.col(v_col) += (2.0 * inv_batch * err) * f_u;
  }

  // Fairness term: -lambda * cross-entropy summed over the batch's labeled
  // users (summing, rather than averaging, keeps the adversarial pressure per
  // user independent of batch size and puts useful lambda values near 0.1);
  // gradients flow through frozen discriminators into f (and p) only.
  if (lambda != 0.0 && !users.empty()) {
    for (const auto& lu : users) {
      const auto& labels = attrs.values[lu.user];
      int u_col = fb.index.at(lu.user);
      const nn::Vector f_u = fb.f.col(u_col);
      bool summarized = has_summary(lu.coeffs);
      std::vector<nn::Vector> hs;
      nn::Vector p_u;
      nn::Mlp::Cache agg_cache;
      if (summarized) {
        hs = summary_vectors(fb, lu.coeffs);
        if (model.summary.variant == SummaryVariant::Learned) {
          p_u = model.aggregator->forward(concat_orders(hs), &agg_cache);
        } else if (model.summary.variant == SummaryVariant::FirstOrder) {
          p_u = hs[0];
        }
      }

      nn::Vector dp = nn::Vector::Zero(fb.f.rows());
      std::vector<nn::Vector> dhs(hs.size(), nn::Vector::Zero(fb.f.rows()));

      // evaluates one discriminator term; returns d(loss)/d(input)
      auto term = [&](int k, const nn::Vector& input, double weight, double* value_acc) {
        nn::Mlp::Cache cache;
        auto logits = model.discriminators.nets[k].forward(input, &cache);
        auto ce = nn::softmax_cross_entropy(logits, labels[k]);
        *value_acc -= weight * ce.loss; // weighted ln p_true
        stats.loss -= lambda * weight * ce.loss;
        return model.discriminators.nets[k].input_gradient(
            cache, (-lambda * weight) * ce.grad);
      };

      for (int k = 0; k < attrs.attribute_count; ++k) {
        if (labels[k] == AttributeTable::kMissing) continue;
        df.col(u_col) += term(k, f_u, 1.0, &stats.node_value);
        if (!summarized) continue;
        if (model.summary.variant == SummaryVariant::ValueAggregation) {
          for (std::size_t l = 0; l < hs.size(); ++l)
            if (model.summary.layer_weights[l] != 0.0)
              dhs[l] += term(k, hs[l], model.summary.layer_weights[l],
                             &stats.graph_value);
        } else {
          dp += term(k, p_u, 1.0, &stats.graph_value);
        }
      }

      if (summarized && model.summary.variant == SummaryVariant::Learned) {
        nn::Vector dconcat =
            aggregator_grads
                ? model.aggregator->backward(agg_cache, dp, *aggregator_grads)
                : model.aggregator->input_gradient(agg_cache, dp);
        Eigen::Index dim = hs.front().size();
        for (std::size_t l = 0; l < hs.size(); ++l)
          dhs[l] += dconcat.segment(static_cast<Eigen::Index>(l) * dim, dim);
      } else if (summarized && model.summary.variant == SummaryVariant::FirstOrder) {
        dhs[0] += dp;
      }

      for (std::size_t l = 0; l < dhs.size(); ++l) {
        if (dhs[l].isZero(0.0)) continue;
        for (const auto& [j, c] : lu.coeffs.per_order[l])
          df.col(fb.index.at(j)) += c * dhs[l];
      }
    }
  }

  // Back through the sub-filters: each receives 1/K of the composed gradient.
  double inv_k = 1.0 / static_cast<double>(model.filters.count());
  for (std::size_t i = 0; i < fb.nodes.size(); ++i) {
    Eigen::Index col = static_cast<Eigen::Index>(i);
    if (df.col(col).isZero(0.0)) continue;
    nn::Vector dy = inv_k * df.col(col);
    for (int k = 0; k < model.filters.count(); ++k)
      model.filters.subfilters[k].backward(fb.caches[i][k], dy, filter_grads[k]);
  }
  return stats;
}

// --- Training loop -------------------------------------------------------------------

FairModel make_fair_model(int dim, const AttributeTable& attrs,
                          const FairTrainConfig& config, const SummaryConfig& summary) {
  FairModel model;
  model.summary = summary;
  nn::SeededRng seeder(config.seed ^ 0xFA17C0DEULL);

  std::vector<int> filter_dims = {dim};
  filter_dims.insert(filter_dims.end(), config.filter_hidden.begin(),
                     config.filter_hidden.end());
  filter_dims.push_back(dim);
  for (int k = 0; k < attrs.attribute_count; ++k)
    model.filters.subfilters.emplace_back(filter_dims, seeder.next_u64(),
                                          config.leak_slope);

  for (int k = 0; k < attrs.attribute_count; ++k) {
    std::vector<int> disc_dims = {dim};
    disc_dims.insert(disc_dims.end(), config.discriminator_hidden.begin(),
                     config.discriminator_hidden.end());
    disc_dims.push_back(attrs.cardinalities[k]);
    model.discriminators.nets.emplace_back(disc_dims, seeder.next_u64(),
                                           config.leak_slope);
  }

  if (summary.variant == SummaryVariant::Learned) {
    std::vector<int> agg_dims = {summary.order * dim};
    agg_dims.insert(agg_dims.end(), summary.aggregator_hidden.begin(),
                    summary.aggregator_hidden.end());
    agg_dims.push_back(dim);
    model.aggregator = nn::Mlp(agg_dims, seeder.next_u64(), config.leak_slope);
  }
  return model;
}

FairModel train_adversarial(const nn::Matrix& base_embeddings,
                            const BipartiteAdjacency& adjacency,
                            const RatingStore& store, const AttributeTable& attrs,
                            const FairTrainConfig& config,
                            const SummaryConfig& summary,
                            std::vector<TrainCurvePoint>* curve) {
  auto train = store.by_split(Split::Train);
  if (train.empty()) throw FairTrainError("EmptyTrainingSet");
  if (config.lambda < 0) throw FairTrainError("ConfigInvalid: lambda < 0");

  int dim = static_cast<int>(base_embeddings.rows());
  FairModel model = make_fair_model(dim, attrs, config, summary);

  bool fairness_on = config.discriminators_enabled;
  if (fairness_on) {
    bool any_label = false;
    for (int u = 0; u < store.user_count && !any_label; ++u)
      for (int k = 0; k < attrs.attribute_count; ++k)
        if (attrs.has_label(u, k)) { any_label = true; break; }
    if (!any_label) throw FairTrainError("NoLabeledUsers");
  }

  std::vector<nn::AdamMlp> filter_opts, disc_opts;
  for (const auto& f : model.filters.subfilters)
    filter_opts.emplace_back(f, nn::AdamConfig{.lr = config.filter_lr});
  for (const auto& d : model.discriminators.nets)
    disc_opts.emplace_back(d, nn::AdamConfig{.lr = config.discriminator_lr});
  std::optional<nn::AdamMlp> agg_opt;
  if (model.aggregator)
    agg_opt.emplace(*model.aggregator, nn::AdamConfig{.lr = config.discriminator_lr});

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  nn::SeededRng shuffle_rng(config.seed ^ 0x0BADF00DULL);
  nn::SeededRng sample_rng(config.seed ^ 0x5EEDCAFEULL);

  auto validation = store.by_split(Split::Validation);

  double effective_lambda = fairness_on ? config.lambda : 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_vr = 0.0, epoch_vn = 0.0, epoch_vs = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), start + config.batch_size);

      std::vector<const RatingTriple*> batch;
      std::vector<int> nodes;
      std::unordered_map<int, bool> in_nodes;
      auto add_node = [&](int n) {
        if (!in_nodes.emplace(n, true).second) return;
        nodes.push_back(n);
      };
      std::vector<LabeledUser> labeled;
      std::unordered_map<int, bool> user_seen;
      for (std::size_t i = start; i < end; ++i) {
        const auto* t = train[order[i]];
        batch.push_back(t);
        add_node(t->user);
        add_node(adjacency.item_node(t->item));
        if (!user_seen.emplace(t->user, true).second) continue;
        bool any = false;
        for (int k = 0; k < attrs.attribute_count; ++k)
          if (attrs.has_label(t->user, k)) { any = true; break; }
        if (!any) continue;
        LabeledUser lu;
        lu.user = t->user;
        lu.coeffs = build_summary_coefficients(adjacency, t->user, summary.order,
                                               summary.neighbor_cap, sample_rng);
        for (const auto& per_order : lu.coeffs.per_order)
          for (const auto& [j, c] : per_order) add_node(j);
        labeled.push_back(std::move(lu));
      }

      FilteredBatch fb = filter_nodes(model.filters, base_embeddings, nodes);

      if (fairness_on && !labeled.empty()) {
        for (int step = 0; step < config.discriminator_steps; ++step) {
          std::vector<nn::MlpGrads> disc_grads;
          for (const auto& d : model.discriminators.nets)
            disc_grads.push_back(d.zero_grads());
          nn::MlpGrads agg_grads;
          if (model.aggregator) agg_grads = model.aggregator->zero_grads();
          double dloss = discriminator_loss_and_grads(
              model, fb, labeled, attrs, disc_grads,
              model.aggregator ? &agg_grads : nullptr);
          if (!std::isfinite(dloss))
            throw FairTrainError("DivergenceDetected: discriminator loss not finite");
          for (std::size_t k = 0; k < disc_opts.size(); ++k)
            disc_opts[k].step(model.discriminators.nets[k], disc_grads[k]);
          if (agg_opt) agg_opt->step(*model.aggregator, agg_grads);
        }
      }

      std::vector<nn::MlpGrads> filter_grads;
      for (const auto& f : model.filters.subfilters)
        filter_grads.push_back(f.zero_grads());

      // The aggregator belongs to the adversary and is updated above; during
      // the filter phase it is read-only, like the discriminators.
      auto stats = filter_phase_loss_and_grads(model, fb, batch, store.user_count,
                                               labeled, attrs, effective_lambda,
                                               filter_grads, nullptr);
      if (!std::isfinite(stats.loss))
        throw FairTrainError("DivergenceDetected: filter loss not finite");

      for (std::size_t k = 0; k < filter_opts.size(); ++k)
        filter_opts[k].step(model.filters.subfilters[k], filter_grads[k]);

      epoch_vr += stats.rating_value;
      epoch_vn += stats.node_value;
      epoch_vs += stats.graph_value;
    }

    if (curve) {
      TrainCurvePoint pt;
      pt.epoch = epoch;
      pt.rating_value = epoch_vr;
      pt.node_value = epoch_vn;
      pt.graph_value = epoch_vs;
      pt.validation_rmse = std::numeric_limits<double>::quiet_NaN();
      if (!validation.empty()) {
        nn::Matrix filtered = model.filters.apply_all(base_embeddings);
        double sse = 0.0;
        for (const auto* t : validation) {
          double err = filtered.col(t->user).dot(
                           filtered.col(adjacency.item_node(t->item))) -
                       t->rating;
          sse += err * err;
        }
        pt.validation_rmse = std::sqrt(sse / static_cast<double>(validation.size()));
      }
      curve->push_back(pt);
    }
  }
  return model;
}

} // namespace fairgo
