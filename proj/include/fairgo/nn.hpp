#ifndef FAIRGO_NN_HPP
#define FAIRGO_NN_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairgo::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { Linear, LeakyRelu };

// --- Seeded initialization -------------------------------------------------
// Hand-rolled transforms keep draws bit-identical for a given seed,
// independent of the standard library's distribution implementations.

struct SeededRng {
  explicit SeededRng(std::uint64_t seed) : state(seed) {}
  double uniform01();               // [0, 1)
  double uniform(double lo, double hi);
  double normal();                  // Box-Muller, mean 0, std 1
  std::uint64_t next_u64();
  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t splitmix64();
  std::uint64_t state;
  bool has_spare = false;
  double spare = 0.0;
};

Matrix seeded_uniform(Eigen::Index rows, Eigen::Index cols, double a, std::uint64_t seed);
/// He-normal: std = sqrt(2 / fan_in) with fan_in = cols.
Matrix seeded_he_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

// --- MLP --------------------------------------------------------------------

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::LeakyRelu;
};

struct LayerGrads {
  Matrix weight;
  Vector bias;
};

using MlpGrads = std::vector<LayerGrads>;

/// Dense MLP with LeakyReLU hidden layers and hand-written reverse-mode
/// gradients. Output layer is linear; softmax (when needed) lives in the
/// loss, not the network.
class Mlp {
 public:
  struct Cache {
    std::vector<Vector> inputs;  // input to each layer
    std::vector<Vector> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  /// dims = {in, hidden..., out}. Hidden layers use LeakyReLU, the final
  /// layer is linear. Weights are He-normal, biases zero.
  Mlp(const std::vector<int>& dims, std::uint64_t seed, double leak_slope = 0.01);

  /// Identity network: single linear layer with W = I, b = 0.
  static Mlp identity(int dim);

  Vector forward(const Vector& x, Cache* cache = nullptr) const;
  /// Backpropagates dL/dy; accumulates parameter gradients into `grads`
  /// (shaped like zero_grads()) and returns dL/dx.
  Vector backward(const Cache& cache, const Vector& dy, MlpGrads& grads) const;
  /// Input gradient only; parameter gradients are discarded.
  Vector input_gradient(const Cache& cache, const Vector& dy) const;

  MlpGrads zero_grads() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  double leak_slope() const { return slope_; }
  int input_dim() const;
  int output_dim() const;

 private:
  std::vector<Layer> layers_;
  double slope_ = 0.01;
};

// --- Losses ------------------------------------------------------------------

struct SoftmaxCE {
  double loss;
  Vector grad;   // dL/dlogits = softmax - one_hot
  Vector probs;
};

/// loss = -ln softmax(logits)[target], stabilized by max-subtraction.
SoftmaxCE softmax_cross_entropy(const Vector& logits, int target);

// --- Adam ---------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam state for one parameter block. The caller owns the step counter
/// semantics: step() advances it.
class AdamMatrix {
 public:
  AdamMatrix() = default;
  AdamMatrix(Eigen::Index rows, Eigen::Index cols, AdamConfig cfg);
  void step(Matrix& param, const Matrix& grad);
  /// Sparse variant: updates only the listed columns (moments for untouched
  /// columns stay put; the bias-correction step count is global).
  void step_columns(Matrix& param, const Matrix& grad, const std::vector<int>& cols);
  long step_count() const { return t_; }

 private:
  Matrix m_, v_;
  long t_ = 0;
  AdamConfig cfg_;
};

/// Adam over all layers of one Mlp.
class AdamMlp {
 public:
  AdamMlp() = default;
  AdamMlp(const Mlp& net, AdamConfig cfg);
  void step(Mlp& net, const MlpGrads& grads);

 private:
  std::vector<LayerGrads> m_, v_;
  long t_ = 0;
  AdamConfig cfg_;
};

// --- Checkpoints -----------------------------------------------------------
// Versioned binary container: named double matrices plus string metadata.

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, Matrix> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  void put_mlp(const std::string& prefix, const Mlp& net);
  Mlp get_mlp(const std::string& prefix) const;
};

} // namespace fairgo::nn

#endif
