#ifndef FAIRGO_BASE_MODELS_HPP
#define FAIRGO_BASE_MODELS_HPP

#include "fairgo/data.hpp"
#include "fairgo/nn.hpp"

namespace fairgo {

/// D x (M+N): one column per node, users first.
using EmbeddingMatrix = nn::Matrix;

struct BaseTrainConfig {
  int embedding_dim = 64;
  int epochs = 50;
  int batch_size = 1024;
  double learning_rate = 0.005;
  double l2_weight = 1e-4;
  int gcn_layers = 2;
  std::uint64_t seed = 1;
};

/// r_hat = e_u . e_v
double predict_rating(const EmbeddingMatrix& embeddings, int user_count, int user, int item);

/// Free user/item latent factors fit to squared rating error with L2, by
/// mini-batch Adam.
EmbeddingMatrix train_pmf(const RatingStore& store, const BaseTrainConfig& config);

/// Rating-weighted linear graph convolution over the bipartite adjacency:
/// h0 = free embeddings; h^{l+1}_i = W_l * (sum_j a_ij h^l_j / sum_j a_ij),
/// empty neighborhoods propagate the node's own vector; final embedding is
/// the mean of h^0..h^L. gcn_layers = 0 falls back to train_pmf.
EmbeddingMatrix train_gcn(const RatingStore& store, const BipartiteAdjacency& adjacency,
                          const BaseTrainConfig& config);

// Exposed for gradient checking and reuse by the GCN trainer: squared-error
// loss (plus L2 on touched columns) over a set of triples, with dL/dE.
double pmf_loss_and_grad(const EmbeddingMatrix& embeddings, int user_count,
                         const std::vector<const RatingTriple*>& batch,
                         double l2_weight, nn::Matrix& grad_out);

/// Forward propagation for one GCN evaluation; returns per-layer states
/// h^0..h^L (each D x (M+N)) given free embeddings and layer maps.
std::vector<nn::Matrix> gcn_propagate(const nn::Matrix& free_embeddings,
                                      const BipartiteAdjacency& adjacency,
                                      const std::vector<nn::Matrix>& layer_maps);

/// Full loss/gradient of the GCN objective: squared error of mean(h^0..h^L)
/// predictions plus L2 on free embeddings. Gradients for both the free
/// embeddings and the per-layer maps.
double gcn_loss_and_grad(const nn::Matrix& free_embeddings,
                         const BipartiteAdjacency& adjacency,
                         const std::vector<nn::Matrix>& layer_maps,
                         const std::vector<const RatingTriple*>& batch,
                         double l2_weight, nn::Matrix& free_grad,
                         std::vector<nn::Matrix>& map_grads);

} // namespace fairgo

#endif
