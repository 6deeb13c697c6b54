#ifndef FAIRGO_FAIRNESS_HPP
#define FAIRGO_FAIRNESS_HPP

#include "fairgo/base_models.hpp"
#include "fairgo/data.hpp"
#include "fairgo/nn.hpp"

#include <optional>
#include <unordered_map>

namespace fairgo {

/// K sub-filters, each D -> D; the composed filter output is their mean.
struct FilterBank {
  std::vector<nn::Mlp> subfilters;

  int count() const { return static_cast<int>(subfilters.size()); }
  nn::Vector apply(const nn::Vector& e,
                   std::vector<nn::Mlp::Cache>* caches = nullptr) const;
  /// Filters every column of E.
  nn::Matrix apply_all(const nn::Matrix& embeddings) const;
};

/// K classifiers; net k maps a D-vector to C_k class logits.
struct DiscriminatorBank {
  std::vector<nn::Mlp> nets;
};

enum class SummaryVariant { FirstOrder, ValueAggregation, Learned };

struct SummaryConfig {
  SummaryVariant variant = SummaryVariant::FirstOrder;
  int order = 1;                      // L
  std::vector<double> layer_weights;  // lambda_l, ValueAggregation only
  std::vector<int> aggregator_hidden; // Learned only; input L*D, output D
  int neighbor_cap = 512;             // per-hop sub-sampling cap during training
};

struct FairTrainConfig {
  double lambda = 0.1;
  int epochs = 30;
  int batch_size = 1024;
  double filter_lr = 0.005;
  double discriminator_lr = 0.005;
  int discriminator_steps = 1; // per filter step
  bool discriminators_enabled = true;
  std::vector<int> filter_hidden = {128, 64};
  std::vector<int> discriminator_hidden = {16, 8};
  double leak_slope = 0.01;
  std::uint64_t seed = 1;
};

struct FairModel {
  FilterBank filters;
  DiscriminatorBank discriminators;
  std::optional<nn::Mlp> aggregator; // Learned variant only
  SummaryConfig summary;
};

struct TrainCurvePoint {
  int epoch;
  double rating_value;    // V_R (<= 0)
  double node_value;      // V_N (<= 0)
  double graph_value;     // V_S (<= 0)
  double validation_rmse; // NaN when no validation split
};

// --- Elementary operations ---------------------------------------------------

double predict_filtered(const nn::Vector& f_u, const nn::Vector& f_v);

/// V_R = -sum (r - f_u.f_v)^2 over the batch.
double rating_value(const std::vector<const RatingTriple*>& batch,
                    const nn::Matrix& filtered, int user_count);

/// sum_k ln D^k(f_u)[x_uk] over the user's labeled attributes (<= 0).
double node_value(const DiscriminatorBank& discriminators, const nn::Vector& f_u,
                  const std::vector<int>& labels);

/// p_u = sum_{v in A_u} r_uv f_v / sum r_uv; zero vector (excluded) for
/// users with no training ratings.
nn::Vector summarize_first_order(const BipartiteAdjacency& adj,
                                 const nn::Matrix& filtered, int user);

/// Exact h^1..h^L for every node: h^1_i = sum_j a_ij f_j / sum a_ij and
/// h^l_i = sum_j a_ij h^{l-1}_j / sum a_ij; isolated nodes get zero vectors.
/// mean_aggregate (optional out) receives (1/L) sum_l h^l.
std::vector<nn::Matrix> propagate_orders(const BipartiteAdjacency& adj,
                                         const nn::Matrix& filtered, int order,
                                         nn::Matrix* mean_aggregate = nullptr);

/// V_S for one user given summary vectors per order. FirstOrder/Learned use
/// the single summary vector; ValueAggregation sums lambda_l-weighted values
/// evaluated at each h^l.
double graph_value(const DiscriminatorBank& discriminators,
                   const std::vector<nn::Vector>& order_vectors,
                   const std::vector<int>& labels, const SummaryConfig& config);

/// p_u = MLP(concat(h^1..h^L)).
nn::Vector learned_aggregation(const nn::Mlp& aggregator,
                               const std::vector<nn::Vector>& order_vectors);

// --- Training-time internals (exposed for gradient checking) ----------------

/// Sparse linear coefficients expressing each of a user's order-l summary
/// vectors as sum_j coeff_j * f_j over (sub-sampled) neighborhood nodes.
struct SummaryCoefficients {
  std::vector<std::vector<std::pair<int, double>>> per_order; // [order-1][...]
};

SummaryCoefficients build_summary_coefficients(const BipartiteAdjacency& adj, int user,
                                               int order, int neighbor_cap,
                                               nn::SeededRng& rng);

/// Filtered embeddings for a node subset, with per-subfilter caches kept for
/// the backward pass.
struct FilteredBatch {
  std::vector<int> nodes;
  std::unordered_map<int, int> index; // node -> column in `f`
  nn::Matrix f;                       // D x |nodes|
  std::vector<std::vector<nn::Mlp::Cache>> caches; // [node][subfilter]

  const nn::Vector col(int node) const { return f.col(index.at(node)); }
};

FilteredBatch filter_nodes(const FilterBank& filters, const nn::Matrix& embeddings,
                           const std::vector<int>& nodes);

struct LabeledUser {
  int user;
  SummaryCoefficients coeffs;
};

/// Mean discriminator cross-entropy over labeled users (node term plus
/// summary terms per the variant); accumulates discriminator gradients. The
/// aggregator of the Learned variant is part of the adversary, so its
/// gradients (toward better label prediction) are accumulated here too when
/// `aggregator_grads` is given.
double discriminator_loss_and_grads(const FairModel& model, const FilteredBatch& fb,
                                    const std::vector<LabeledUser>& users,
                                    const AttributeTable& attrs,
                                    std::vector<nn::MlpGrads>& disc_grads,
                                    nn::MlpGrads* aggregator_grads = nullptr);

struct FilterPhaseStats {
  double loss = 0.0;         // mse - lambda * disc cross-entropy
  double rating_value = 0.0; // V_R over the batch (sum form)
  double node_value = 0.0;   // V_N
  double graph_value = 0.0;  // V_S
};

/// Filter-phase objective -V = mse + lambda * (V_N + V_S contribution);
/// backpropagates into sub-filter gradients (and aggregator gradients for the
/// Learned variant). Discriminator parameters are read, never written.
FilterPhaseStats filter_phase_loss_and_grads(
    const FairModel& model, const FilteredBatch& fb,
    const std::vector<const RatingTriple*>& batch, int user_count,
    const std::vector<LabeledUser>& users, const AttributeTable& attrs,
    double lambda, std::vector<nn::MlpGrads>& filter_grads,
    nn::MlpGrads* aggregator_grads);

// --- Training loop ------------------------------------------------------------

/// Adversarial minimax training over frozen base embeddings: alternating
/// discriminator / filter mini-batch updates.
FairModel train_adversarial(const nn::Matrix& base_embeddings,
                            const BipartiteAdjacency& adjacency,
                            const RatingStore& store, const AttributeTable& attrs,
                            const FairTrainConfig& config,
                            const SummaryConfig& summary,
                            std::vector<TrainCurvePoint>* curve = nullptr);

/// Fresh, seed-deterministic model with untrained parameters (the state
/// train_adversarial starts from).
FairModel make_fair_model(int dim, const AttributeTable& attrs,
                          const FairTrainConfig& config, const SummaryConfig& summary);

} // namespace fairgo

#endif
