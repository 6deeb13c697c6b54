#include "fairgo/base_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairgo {

namespace {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void fisher_yates(std::vector<std::size_t>& idx, nn::SeededRng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

std::vector<int> touched_columns(int user_count,
                                 const std::vector<const RatingTriple*>& batch) {
  std::vector<int> cols;
  cols.reserve(batch.size() * 2);
  for (const auto* t : batch) {
    cols.push_back(t->user);
    cols.push_back(user_count + t->item);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

} // namespace

double predict_rating(const EmbeddingMatrix& embeddings, int user_count, int user, int item) {
  int item_col = user_count + item;
  if (user < 0 || user >= user_count || item_col >= embeddings.cols() || item < 0)
    throw DataError("IndexOutOfRange: predict_rating(" + std::to_string(user) + "," +
                    std::to_string(item) + ")");
  return embeddings.col(user).dot(embeddings.col(item_col));
}

double pmf_loss_and_grad(const EmbeddingMatrix& embeddings, int user_count,
                         const std::vector<const RatingTriple*>& batch,
                         double l2_weight, nn::Matrix& grad_out) {
  double loss = 0.0;
  for (const auto* t : batch) {
    auto eu = embeddings.col(t->user);
    auto ev = embeddings.col(user_count + t->item);
    double err = eu.dot(ev) - t->rating;
    loss += err * err + l2_weight * (eu.squaredNorm() + ev.squaredNorm());
    grad_out.col(t->user) += 2.0 * err * ev + 2.0 * l2_weight * eu;
    grad_out.col(user_count + t->item) += 2.0 * err * eu + 2.0 * l2_weight * ev;
  }
  return loss;
}

EmbeddingMatrix train_pmf(const RatingStore& store, const BaseTrainConfig& config) {
  auto train = store.by_split(Split::Train);
  if (train.empty()) throw TrainError("EmptyTrainingSet");

  int nodes = store.user_count + store.item_count;
  EmbeddingMatrix embeddings =
      nn::seeded_uniform(config.embedding_dim, nodes, 0.1, config.seed);
  nn::AdamMatrix opt(config.embedding_dim, nodes, {.lr = config.learning_rate});
  nn::Matrix grad = nn::Matrix::Zero(config.embedding_dim, nodes);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  nn::SeededRng shuffle_rng(config.seed ^ 0xA5A5A5A5ULL);

  std::vector<const RatingTriple*> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    fisher_yates(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      auto cols = touched_columns(store.user_count, batch);
      double loss = pmf_loss_and_grad(embeddings, store.user_count, batch,
                                      config.l2_weight, grad);
      if (!std::isfinite(loss)) throw TrainError("DivergenceDetected: pmf loss not finite");
      opt.step_columns(embeddings, grad, cols);
      for (int c : cols) grad.col(c).setZero();
    }
  }
  return embeddings;
}

// --- GCN --------------------------------------------------------------------

namespace {

// out_i = sum_j a_ij h_j / sum_j a_ij; nodes without neighbors keep their own
// vector (avoids zero-division for cold nodes).
nn::Matrix propagate(const nn::Matrix& h, const BipartiteAdjacency& adj) {
  nn::Matrix out = nn::Matrix::Zero(h.rows(), h.cols());
  for (int i = 0; i < adj.node_count(); ++i) {
    if (adj.neighbors[i].empty()) {
      out.col(i) = h.col(i);
      continue;
    }
    for (const auto& [j, w] : adj.neighbors[i]) out.col(i) += w * h.col(j);
    out.col(i) /= adj.weight_sums[i];
  }
  return out;
}

// Adjoint of propagate: given dL/d(out), accumulate dL/dh.
nn::Matrix propagate_adjoint(const nn::Matrix& dout, const BipartiteAdjacency& adj) {
  nn::Matrix dh = nn::Matrix::Zero(dout.rows(), dout.cols());
  for (int i = 0; i < adj.node_count(); ++i) {
    if (adj.neighbors[i].empty()) {
      dh.col(i) += dout.col(i);
      continue;
    }
    double inv = 1.0 / adj.weight_sums[i];
    for (const auto& [j, w] : adj.neighbors[i]) dh.col(j) += (w * inv) * dout.col(i);
  }
  return dh;
}

} // namespace

std::vector<nn::Matrix> gcn_propagate(const nn::Matrix& free_embeddings,
                                      const BipartiteAdjacency& adjacency,
                                      const std::vector<nn::Matrix>& layer_maps) {
  std::vector<nn::Matrix> states;
  states.reserve(layer_maps.size() + 1);
  states.push_back(free_embeddings);
  for (const auto& map : layer_maps)
    states.push_back(map * propagate(states.back(), adjacency));
  return states;
}

double gcn_loss_and_grad(const nn::Matrix& free_embeddings,
                         const BipartiteAdjacency& adjacency,
                         const std::vector<nn::Matrix>& layer_maps,
                         const std::vector<const RatingTriple*>& batch,
                         double l2_weight, nn::Matrix& free_grad,
                         std::vector<nn::Matrix>& map_grads) {
  int user_count = adjacency.user_count;
  auto states = gcn_propagate(free_embeddings, adjacency, layer_maps);
  std::size_t depth = layer_maps.size();
  double scale = 1.0 / static_cast<double>(depth + 1);

  nn::Matrix final_emb = states[0];
  for (std::size_t l = 1; l <= depth; ++l) final_emb += states[l];
  final_emb *= scale;

  double loss = 0.0;
  nn::Matrix dfinal = nn::Matrix::Zero(final_emb.rows(), final_emb.cols());
  for (const auto* t : batch) {
    auto eu = final_emb.col(t->user);
    auto ev = final_emb.col(user_count + t->item);
    double err = eu.dot(ev) - t->rating;
    loss += err * err;
    dfinal.col(t->user) += 2.0 * err * ev;
    dfinal.col(user_count + t->item) += 2.0 * err * eu;
  }
  loss += l2_weight * free_embeddings.squaredNorm();

  // Each state h^l receives dfinal * scale from the mean, plus whatever flows
  // down from h^{l+1} through its layer map and propagation.
  nn::Matrix g = scale * dfinal; // gradient wrt h^depth
  for (std::size_t l = depth; l >= 1; --l) {
    nn::Matrix hhat = propagate(states[l - 1], adjacency);
    map_grads[l - 1] += g * hhat.transpose();
    nn::Matrix dhhat = layer_maps[l - 1].transpose() * g;
    g = propagate_adjoint(dhhat, adjacency);
    g += scale * dfinal;
  }
  free_grad += g + 2.0 * l2_weight * free_embeddings;
  return loss;
}

EmbeddingMatrix train_gcn(const RatingStore& store, const BipartiteAdjacency& adjacency,
                          const BaseTrainConfig& config) {
  if (config.gcn_layers == 0) return train_pmf(store, config);
  auto train = store.by_split(Split::Train);
  if (train.empty()) throw TrainError("EmptyTrainingSet");

  int nodes = store.user_count + store.item_count;
  int dim = config.embedding_dim;
  nn::Matrix free_emb = nn::seeded_uniform(dim, nodes, 0.1, config.seed);
  std::vector<nn::Matrix> maps(config.gcn_layers, nn::Matrix::Identity(dim, dim));

  nn::AdamMatrix emb_opt(dim, nodes, {.lr = config.learning_rate});
  std::vector<nn::AdamMatrix> map_opts;
  for (int l = 0; l < config.gcn_layers; ++l)
    map_opts.emplace_back(dim, dim, nn::AdamConfig{.lr = config.learning_rate});

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  nn::SeededRng shuffle_rng(config.seed ^ 0x5A5A5A5AULL);

  std::vector<const RatingTriple*> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    fisher_yates(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);

      nn::Matrix free_grad = nn::Matrix::Zero(dim, nodes);
      std::vector<nn::Matrix> map_grads(maps.size(), nn::Matrix::Zero(dim, dim));
      double loss = gcn_loss_and_grad(free_emb, adjacency, maps, batch,
                                      config.l2_weight, free_grad, map_grads);
      if (!std::isfinite(loss)) throw TrainError("DivergenceDetected: gcn loss not finite");
      emb_opt.step(free_emb, free_grad);
      for (std::size_t l = 0; l < maps.size(); ++l) map_opts[l].step(maps[l], map_grads[l]);
    }
  }
  auto states = gcn_propagate(free_emb, adjacency, maps);
  nn::Matrix final_emb = states[0];
  for (std::size_t l = 1; l < states.size(); ++l) final_emb += states[l];
  final_emb /= static_cast<double>(states.size());
  return final_emb;
}

} // namespace fairgo
