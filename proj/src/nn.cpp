#include "fairgo/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace fairgo::nn {

// --- SeededRng ---------------------------------------------------------------

std::uint64_t SeededRng::splitmix64() {
  state += 0x9E3779B97f4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t SeededRng::next_u64() { return splitmix64(); }

std::uint64_t SeededRng::below(std::uint64_t n) {
  // Rejection sampling for an unbiased draw.
  std::uint64_t limit = n * ((~0ULL) / n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double SeededRng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double SeededRng::normal() {
  if (has_spare) {
    has_spare = false;
    return spare;
  }
  double u1, u2;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  u2 = uniform01();
  double mag = std::sqrt(-2.0 * std::log(u1));
  spare = mag * std::sin(2.0 * std::numbers::pi * u2);
  has_spare = true;
  return mag * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix seeded_uniform(Eigen::Index rows, Eigen::Index cols, double a, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = rng.uniform(-a, a);
  return out;
}

Matrix seeded_he_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  SeededRng rng(seed);
  double stddev = std::sqrt(2.0 / static_cast<double>(cols));
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = stddev * rng.normal();
  return out;
}

// --- Mlp ----------------------------------------------------------------------

Mlp::Mlp(const std::vector<int>& dims, std::uint64_t seed, double leak_slope)
    : slope_(leak_slope) {
  if (dims.size() < 2) throw ShapeMismatch("Mlp needs at least input and output dims");
  layers_.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.weight = seeded_he_normal(dims[l + 1], dims[l], seed + 0x517CC1B7ULL * (l + 1));
    layer.bias = Vector::Zero(dims[l + 1]);
    layer.activation =
        (l + 2 == dims.size()) ? Activation::Linear : Activation::LeakyRelu;
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::identity(int dim) {
  Mlp net;
  Layer layer;
  layer.weight = Matrix::Identity(dim, dim);
  layer.bias = Vector::Zero(dim);
  layer.activation = Activation::Linear;
  net.layers_.push_back(std::move(layer));
  return net;
}

int Mlp::input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }

namespace {

Vector apply_activation(const Vector& z, Activation act, double slope) {
  if (act == Activation::Linear) return z;
  return z.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
}

Vector activation_gradient(const Vector& z, const Vector& dy, Activation act, double slope) {
  if (act == Activation::Linear) return dy;
  Vector out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    out[i] = dy[i] * (z[i] >= 0.0 ? 1.0 : slope);
  return out;
}

} // namespace

Vector Mlp::forward(const Vector& x, Cache* cache) const {
  if (x.size() != input_dim())
    throw ShapeMismatch("Mlp::forward: input size " + std::to_string(x.size()) +
                        " != " + std::to_string(input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Vector h = x;
  for (const auto& layer : layers_) {
    if (cache) cache->inputs.push_back(h);
    Vector z = layer.weight * h + layer.bias;
    if (cache) cache->pre.push_back(z);
    h = apply_activation(z, layer.activation, slope_);
  }
  return h;
}

Vector Mlp::backward(const Cache& cache, const Vector& dy, MlpGrads& grads) const {
  if (cache.inputs.size() != layers_.size())
    throw ShapeMismatch("Mlp::backward: cache/network layer count mismatch");
  Vector d = dy;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    Vector dz = activation_gradient(cache.pre[li], d, layer.activation, slope_);
    grads[li].weight.noalias() += dz * cache.inputs[li].transpose();
    grads[li].bias += dz;
    d.noalias() = layer.weight.transpose() * dz;
  }
  return d;
}

Vector Mlp::input_gradient(const Cache& cache, const Vector& dy) const {
  Vector d = dy;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    Vector dz = activation_gradient(cache.pre[li], d, layer.activation, slope_);
    d.noalias() = layer.weight.transpose() * dz;
  }
  return d;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads grads;
  grads.reserve(layers_.size());
  for (const auto& layer : layers_)
    grads.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                     Vector::Zero(layer.bias.size())});
  return grads;
}

// --- Losses ---------------------------------------------------------------------

SoftmaxCE softmax_cross_entropy(const Vector& logits, int target) {
  if (target < 0 || target >= logits.size())
    throw ShapeMismatch("softmax_cross_entropy: target out of range");
  double mx = logits.maxCoeff();
  Vector exps = (logits.array() - mx).exp();
  double z = exps.sum();
  SoftmaxCE out;
  out.probs = exps / z;
  out.loss = -(logits[target] - mx - std::log(z));
  out.grad = out.probs;
  out.grad[target] -= 1.0;
  return out;
}

// --- Adam ------------------------------------------------------------------------

AdamMatrix::AdamMatrix(Eigen::Index rows, Eigen::Index cols, AdamConfig cfg)
    : m_(Matrix::Zero(rows, cols)), v_(Matrix::Zero(rows, cols)), cfg_(cfg) {}

namespace {

void adam_block(Eigen::Ref<Matrix> p, const Eigen::Ref<const Matrix>& g,
                Eigen::Ref<Matrix> m, Eigen::Ref<Matrix> v, long t,
                const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * g.array().square().matrix();
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

} // namespace

void AdamMatrix::step(Matrix& param, const Matrix& grad) {
  if (param.rows() != m_.rows() || param.cols() != m_.cols())
    throw ShapeMismatch("AdamMatrix::step: shape mismatch");
  ++t_;
  adam_block(param, grad, m_, v_, t_, cfg_);
}

void AdamMatrix::step_columns(Matrix& param, const Matrix& grad,
                              const std::vector<int>& cols) {
  if (param.rows() != m_.rows() || param.cols() != m_.cols())
    throw ShapeMismatch("AdamMatrix::step_columns: shape mismatch");
  ++t_;
  for (int c : cols)
    adam_block(param.col(c), grad.col(c), m_.col(c), v_.col(c), t_, cfg_);
}

AdamMlp::AdamMlp(const Mlp& net, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& layer : net.layers()) {
    m_.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                  Vector::Zero(layer.bias.size())});
    v_.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                  Vector::Zero(layer.bias.size())});
  }
}

void AdamMlp::step(Mlp& net, const MlpGrads& grads) {
  if (grads.size() != net.layers().size() || m_.size() != grads.size())
    throw ShapeMismatch("AdamMlp::step: layer count mismatch");
  ++t_;
  for (std::size_t li = 0; li < grads.size(); ++li) {
    auto& layer = net.layers()[li];
    adam_block(layer.weight, grads[li].weight, m_[li].weight, v_[li].weight, t_, cfg_);
    Matrix bp = layer.bias, bg = grads[li].bias, bm = m_[li].bias, bv = v_[li].bias;
    adam_block(bp, bg, bm, bv, t_, cfg_);
    layer.bias = bp;
    m_[li].bias = bm;
    v_[li].bias = bv;
  }
}

// --- Checkpoints --------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  auto n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

} // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, meta.size());
  for (const auto& [k, v] : meta) {
    write_string(out, k);
    write_string(out, v);
  }
  write_u64(out, tensors.size());
  for (const auto& [name, m] : tensors) {
    write_string(out, name);
    write_u64(out, static_cast<std::uint64_t>(m.rows()));
    write_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  if (!out) throw std::runtime_error("Checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Checkpoint: cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("Checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  auto n_meta = read_u64(in);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    auto k = read_string(in);
    ckpt.meta[k] = read_string(in);
  }
  auto n_tensors = read_u64(in);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    auto name = read_string(in);
    auto rows = static_cast<Eigen::Index>(read_u64(in));
    auto cols = static_cast<Eigen::Index>(read_u64(in));
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    ckpt.tensors[name] = std::move(m);
  }
  if (!in) throw std::runtime_error("Checkpoint: truncated file " + path);
  return ckpt;
}

void Checkpoint::put_mlp(const std::string& prefix, const Mlp& net) {
  meta[prefix + ".layers"] = std::to_string(net.layers().size());
  meta[prefix + ".slope"] = std::to_string(net.leak_slope());
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    const auto& layer = net.layers()[li];
    std::string base = prefix + ".l" + std::to_string(li);
    tensors[base + ".w"] = layer.weight;
    tensors[base + ".b"] = layer.bias;
    meta[base + ".act"] = layer.activation == Activation::Linear ? "linear" : "leaky_relu";
  }
}

Mlp Checkpoint::get_mlp(const std::string& prefix) const {
  auto it = meta.find(prefix + ".layers");
  if (it == meta.end())
    throw std::runtime_error("Checkpoint: no mlp named " + prefix);
  auto n_layers = std::stoul(it->second);
  std::vector<int> dims;
  Mlp net;
  // Rebuild through a dims constructor then overwrite, to keep Mlp's
  // invariants in one place.
  std::vector<Layer> layers;
  for (std::size_t li = 0; li < n_layers; ++li) {
    std::string base = prefix + ".l" + std::to_string(li);
    Layer layer;
    layer.weight = tensors.at(base + ".w");
    layer.bias = tensors.at(base + ".b");
    layer.activation =
        meta.at(base + ".act") == "linear" ? Activation::Linear : Activation::LeakyRelu;
    layers.push_back(std::move(layer));
  }
  dims.push_back(static_cast<int>(layers.front().weight.cols()));
  for (const auto& layer : layers) dims.push_back(static_cast<int>(layer.weight.rows()));
  net = Mlp(dims, 0, std::stod(meta.at(prefix + ".slope")));
  net.layers() = std::move(layers);
  return net;
}

} // namespace fairgo::nn
