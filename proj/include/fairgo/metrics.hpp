#ifndef FAIRGO_METRICS_HPP
#define FAIRGO_METRICS_HPP

#include "fairgo/data.hpp"
#include "fairgo/nn.hpp"

#include <map>
#include <optional>

namespace fairgo {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double rmse(const std::vector<double>& predictions, const std::vector<double>& truths);

/// Rank-based (Mann-Whitney) AUC; ties receive half credit. Labels are 0/1.
double auc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

/// Micro-averaged F1; equals accuracy for single-label multi-class input.
double micro_f1(const std::vector<int>& predicted_classes,
                const std::vector<int>& true_classes);

// --- Leakage audit -----------------------------------------------------------

struct LeakageResult {
  std::string metric_name; // "auc" or "micro_f1"
  double value;
};

/// Trains a softmax-linear attacker on 80% of labeled users (with a 10%
/// validation carve-out for early stopping) and scores the held-out 20%.
/// Binary attributes report AUC; multi-class report micro-F1.
LeakageResult leakage_audit(const nn::Matrix& features,
                            const std::vector<int>& labels, int cardinality,
                            std::uint64_t attacker_split_seed);

/// Mean of leakage_audit over several attacker seeds.
LeakageResult leakage_audit_mean(const nn::Matrix& features,
                                 const std::vector<int>& labels, int cardinality,
                                 const std::vector<std::uint64_t>& seeds);

// --- Group fairness ------------------------------------------------------------

struct ScoredPair {
  int user;
  int item;
  double prediction;
  double truth;
};

struct GroupMetricResult {
  double value;
  int items_scored;
  int items_skipped; // lacked raters from every group
};

/// Binary groups: mean over items of |group-0 mean prediction - group-1 mean|.
/// Multi-valued: mean over items of the (population) standard deviation of
/// per-group mean predictions. Items lacking any group's raters are skipped.
GroupMetricResult statistical_parity(const std::vector<ScoredPair>& pairs,
                                     const std::vector<int>& user_groups,
                                     int group_count);

/// Same aggregation over per-group mean absolute errors |prediction - truth|.
GroupMetricResult equal_opportunity(const std::vector<ScoredPair>& pairs,
                                    const std::vector<int>& user_groups,
                                    int group_count);

// --- Report -----------------------------------------------------------------------

struct MetricsReport {
  double rmse_value = 0.0;
  // attribute name -> (metric name, value)
  std::map<std::string, LeakageResult> leakage;
  std::map<std::string, GroupMetricResult> parity;
  std::map<std::string, GroupMetricResult> opportunity;
  std::map<std::string, std::string> metadata; // seeds, config hash, ...

  std::string to_json() const; // stable field order
};

} // namespace fairgo

#endif
