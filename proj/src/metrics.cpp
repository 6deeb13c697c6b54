#include "fairgo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace fairgo {

double rmse(const std::vector<double>& predictions, const std::vector<double>& truths) {
  if (predictions.empty() || predictions.size() != truths.size())
    throw MetricError("EmptyInput: rmse needs equal nonzero lengths");
  double sse = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double d = predictions[i] - truths[i];
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(predictions.size()));
}

double auc(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
  if (scores.size() != binary_labels.size() || scores.empty())
    throw MetricError("EmptyInput: auc needs equal nonzero lengths");
  std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks across ties (1-based).
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (binary_labels[k] == 1) {
      pos_rank_sum += ranks[k];
      ++n_pos;
    }
  }
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("SingleClass: auc needs both classes");
  return (pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double micro_f1(const std::vector<int>& predicted_classes,
                const std::vector<int>& true_classes) {
  if (predicted_classes.empty() || predicted_classes.size() != true_classes.size())
    throw MetricError("EmptyInput: micro_f1 needs equal nonzero lengths");
  // Single-label: micro-averaged TP equals the correct count, and FP = FN,
  // so micro-F1 reduces to accuracy.
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted_classes.size(); ++i)
    if (predicted_classes[i] == true_classes[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predicted_classes.size());
}

// --- Leakage audit -----------------------------------------------------------------

LeakageResult leakage_audit(const nn::Matrix& features, const std::vector<int>& labels,
                            int cardinality, std::uint64_t attacker_split_seed) {
  if (static_cast<std::size_t>(features.cols()) != labels.size())
    throw MetricError("EmptyInput: feature/label count mismatch");

  std::vector<int> labeled;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) labeled.push_back(static_cast<int>(i));

  nn::SeededRng rng(attacker_split_seed);
  for (std::size_t i = labeled.size(); i > 1; --i)
    std::swap(labeled[i - 1], labeled[rng.below(i)]);

  std::size_t n_test = labeled.size() / 5;
  std::vector<int> test_idx(labeled.begin(), labeled.begin() + n_test);
  std::vector<int> fit_idx(labeled.begin() + n_test, labeled.end());
  std::size_t n_val = fit_idx.size() / 10;
  std::vector<int> val_idx(fit_idx.begin(), fit_idx.begin() + n_val);
  std::vector<int> train_idx(fit_idx.begin() + n_val, fit_idx.end());

  auto class_count = [&](const std::vector<int>& idx, int cls) {
    return std::count_if(idx.begin(), idx.end(),
                         [&](int i) { return labels[i] == cls; });
  };
  for (int c = 0; c < cardinality && c < 2; ++c)
    if (class_count(train_idx, c) < 2 || class_count(test_idx, c) < 2)
      throw MetricError("InsufficientLabels: < 2 per class in attacker splits");

  // Softmax-linear attacker, full-batch Adam, early stop on validation loss.
  nn::Mlp attacker({static_cast<int>(features.rows()), cardinality},
                   attacker_split_seed ^ 0xA77AC4E5ULL);
  nn::AdamMlp opt(attacker, {.lr = 0.01});

  auto mean_loss = [&](const std::vector<int>& idx, nn::MlpGrads* grads) {
    double total = 0.0;
    double inv = 1.0 / static_cast<double>(idx.size());
    for (int i : idx) {
      nn::Mlp::Cache cache;
      auto logits = attacker.forward(features.col(i), grads ? &cache : nullptr);
      auto ce = nn::softmax_cross_entropy(logits, labels[i]);
      total += inv * ce.loss;
      if (grads) attacker.backward(cache, inv * ce.grad, *grads);
    }
    return total;
  };

  const int max_steps = 2000;
  const int patience = 100;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int step = 0; step < max_steps; ++step) {
    auto grads = attacker.zero_grads();
    mean_loss(train_idx, &grads);
    opt.step(attacker, grads);
    if (!val_idx.empty()) {
      double val = mean_loss(val_idx, nullptr);
      if (val < best_val - 1e-6) {
        best_val = val;
        since_best = 0;
      } else if (++since_best >= patience) {
        break;
      }
    }
  }

  LeakageResult result;
  if (cardinality == 2) {
    std::vector<double> scores;
    std::vector<int> truth;
    for (int i : test_idx) {
      auto logits = attacker.forward(features.col(i));
      scores.push_back(logits[1] - logits[0]); // monotone in P(class 1)
      truth.push_back(labels[i]);
    }
    result.metric_name = "auc";
    result.value = auc(scores, truth);
  } else {
    std::vector<int> pred, truth;
    for (int i : test_idx) {
      auto logits = attacker.forward(features.col(i));
      Eigen::Index argmax;
      logits.maxCoeff(&argmax);
      pred.push_back(static_cast<int>(argmax));
      truth.push_back(labels[i]);
    }
    result.metric_name = "micro_f1";
    result.value = micro_f1(pred, truth);
  }
  return result;
}

LeakageResult leakage_audit_mean(const nn::Matrix& features,
                                 const std::vector<int>& labels, int cardinality,
                                 const std::vector<std::uint64_t>& seeds) {
  LeakageResult out;
  double sum = 0.0;
  for (auto seed : seeds) {
    auto r = leakage_audit(features, labels, cardinality, seed);
    out.metric_name = r.metric_name;
    sum += r.value;
  }
  out.value = sum / static_cast<double>(seeds.size());
  return out;
}

// --- Group fairness ----------------------------------------------------------------

namespace {

GroupMetricResult per_item_group_spread(const std::vector<ScoredPair>& pairs,
                                        const std::vector<int>& user_groups,
                                        int group_count, bool use_error) {
  if (group_count < 1) throw MetricError("NoScoredItems: need >= 1 group");
  // item -> per-group (sum, count)
  std::map<int, std::vector<std::pair<double, int>>> items;
  for (const auto& p : pairs) {
    int g = user_groups[p.user];
    if (g < 0 || g >= group_count) continue;
    auto& slots = items[p.item];
    if (slots.empty()) slots.assign(group_count, {0.0, 0});
    double v = use_error ? std::abs(p.prediction - p.truth) : p.prediction;
    slots[g].first += v;
    slots[g].second += 1;
  }

  GroupMetricResult result{0.0, 0, 0};
  double total = 0.0;
  for (const auto& [item, slots] : items) {
    bool all_present = true;
    for (const auto& [sum, count] : slots)
      if (count == 0) { all_present = false; break; }
    if (!all_present) {
      ++result.items_skipped;
      continue;
    }
    std::vector<double> means;
    for (const auto& [sum, count] : slots) means.push_back(sum / count);
    double spread;
    if (group_count == 2) {
      spread = std::abs(means[0] - means[1]);
    } else {
      double mu = std::accumulate(means.begin(), means.end(), 0.0) /
                  static_cast<double>(means.size());
      double var = 0.0;
      for (double m : means) var += (m - mu) * (m - mu);
      spread = std::sqrt(var / static_cast<double>(means.size()));
    }
    total += spread;
    ++result.items_scored;
  }
  if (result.items_scored == 0) throw MetricError("NoScoredItems");
  result.value = total / static_cast<double>(result.items_scored);
  return result;
}

} // namespace

GroupMetricResult statistical_parity(const std::vector<ScoredPair>& pairs,
                                     const std::vector<int>& user_groups,
                                     int group_count) {
  return per_item_group_spread(pairs, user_groups, group_count, /*use_error=*/false);
}

GroupMetricResult equal_opportunity(const std::vector<ScoredPair>& pairs,
                                    const std::vector<int>& user_groups,
                                    int group_count) {
  return per_item_group_spread(pairs, user_groups, group_count, /*use_error=*/true);
}

// --- Report --------------------------------------------------------------------------

std::string MetricsReport::to_json() const {
  nlohmann::json j; // object keys are kept sorted: stable byte output
  j["rmse"] = rmse_value;
  for (const auto& [name, r] : leakage) {
    j["leakage"][name]["metric"] = r.metric_name;
    j["leakage"][name]["value"] = r.value;
  }
  for (const auto& [name, r] : parity) {
    j["statistical_parity"][name]["value"] = r.value;
    j["statistical_parity"][name]["items_scored"] = r.items_scored;
    j["statistical_parity"][name]["items_skipped"] = r.items_skipped;
  }
  for (const auto& [name, r] : opportunity) {
    j["equal_opportunity"][name]["value"] = r.value;
    j["equal_opportunity"][name]["items_scored"] = r.items_scored;
    j["equal_opportunity"][name]["items_skipped"] = r.items_skipped;
  }
  for (const auto& [k, v] : metadata) j["metadata"][k] = v;
  return j.dump(2) + "\n";
}

} // namespace fairgo
