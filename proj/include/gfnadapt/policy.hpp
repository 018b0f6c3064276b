#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace gfnadapt {

/// Multi-head ReLU perceptron with a learned log-normalizer.
///
/// All trainable values live in one flat parameter vector:
///
///   [W_1, b_1, ..., W_L, b_L, W_out, b_out, log_z]
///
/// with each W stored column-major (out x in). Layers are Eigen::Map views
/// into that vector, so optimizers and finite-difference checks work on the
/// flat vector directly. The output layer produces the concatenated logits
/// of every head; head h occupies rows [offset(h), offset(h) + size(h)).
template <class Scalar>
class PolicyNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  /// Forward-pass intermediates needed by backward().
  struct Activations {
    std::vector<Matrix> inputs;  // inputs[l] feeds layer l (inputs[0] = features)
    std::vector<Matrix> pre;     // hidden pre-activations
  };

  PolicyNetwork() = default;
  PolicyNetwork(int input_dim, std::vector<int> hidden, std::vector<int> head_sizes)
      : input_dim_(input_dim), hidden_(std::move(hidden)), heads_(std::move(head_sizes)) {
    if (input_dim_ < 1) throw std::invalid_argument("policy: input dimension must be positive");
    for (int w : hidden_)
      if (w < 1) throw std::invalid_argument("policy: hidden widths must be positive");
    if (heads_.empty()) throw std::invalid_argument("policy: at least one head required");
    head_offsets_.resize(heads_.size());
    int offset = 0;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      if (heads_[h] < 1) throw std::invalid_argument("policy: empty head");
      head_offsets_[h] = offset;
      offset += heads_[h];
    }
    output_dim_ = offset;

    int in = input_dim_;
    std::ptrdiff_t cursor = 0;
    for (int out : layer_widths()) {
      weight_offsets_.push_back(cursor);
      cursor += static_cast<std::ptrdiff_t>(out) * in;
      bias_offsets_.push_back(cursor);
      cursor += out;
      layer_in_.push_back(in);
      layer_out_.push_back(out);
      in = out;
    }
    theta_ = Vector::Zero(cursor + 1);
  }

  [[nodiscard]] int input_dim() const { return input_dim_; }
  [[nodiscard]] int output_dim() const { return output_dim_; }
  [[nodiscard]] const std::vector<int>& hidden() const { return hidden_; }
  [[nodiscard]] const std::vector<int>& heads() const { return heads_; }
  [[nodiscard]] int head_offset(std::size_t head) const { return head_offsets_[head]; }
  [[nodiscard]] int head_size(std::size_t head) const { return heads_[head]; }
  [[nodiscard]] std::size_t layer_count() const { return layer_out_.size(); }

  [[nodiscard]] Vector& parameters() { return theta_; }
  [[nodiscard]] const Vector& parameters() const { return theta_; }
  [[nodiscard]] Eigen::Index parameter_count() const { return theta_.size(); }

  [[nodiscard]] Scalar& log_z() { return theta_[theta_.size() - 1]; }
  [[nodiscard]] Scalar log_z() const { return theta_[theta_.size() - 1]; }

  [[nodiscard]] MatrixMap weight(std::size_t l) {
    return MatrixMap(theta_.data() + weight_offsets_[l], layer_out_[l], layer_in_[l]);
  }
  [[nodiscard]] ConstMatrixMap weight(std::size_t l) const {
    return ConstMatrixMap(theta_.data() + weight_offsets_[l], layer_out_[l], layer_in_[l]);
  }
  [[nodiscard]] VectorMap bias(std::size_t l) {
    return VectorMap(theta_.data() + bias_offsets_[l], layer_out_[l]);
  }
  [[nodiscard]] ConstVectorMap bias(std::size_t l) const {
    return ConstVectorMap(theta_.data() + bias_offsets_[l], layer_out_[l]);
  }

  /// Hidden layers: uniform in +-1/sqrt(fan_in). Output layer and log_z: zero,
  /// so a fresh policy is uniform over every head.
  template <class Rng>
  void initialize(Rng& rng) {
    theta_.setZero();
    for (std::size_t l = 0; l + 1 < layer_count(); ++l) {
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(layer_in_[l]));
      std::uniform_real_distribution<double> u(-static_cast<double>(bound),
                                               static_cast<double>(bound));
      for (auto& w : weight(l).reshaped()) w = static_cast<Scalar>(u(rng));
      for (auto& b : bias(l)) b = static_cast<Scalar>(u(rng));
    }
  }

  /// Fills every parameter, output layer included, with fan-in scaled noise.
  template <class Rng>
  void randomize(Rng& rng) {
    initialize(rng);
    const std::size_t l = layer_count() - 1;
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(layer_in_[l]));
    std::uniform_real_distribution<double> u(-static_cast<double>(bound),
                                             static_cast<double>(bound));
    for (auto& w : weight(l).reshaped()) w = static_cast<Scalar>(u(rng));
    for (auto& b : bias(l)) b = static_cast<Scalar>(u(rng));
    log_z() = static_cast<Scalar>(u(rng));
  }

  /// Logits for a batch of feature columns (input_dim x B -> output_dim x B).
  [[nodiscard]] Matrix forward(const Eigen::Ref<const Matrix>& features,
                               Activations* cache = nullptr) const {
    if (features.rows() != input_dim_)
      throw std::invalid_argument("policy: feature dimension mismatch");
    Matrix x = features;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (std::size_t l = 0; l < layer_count(); ++l) {
      if (cache) cache->inputs.push_back(x);
      Matrix z = weight(l) * x;
      z.colwise() += bias(l);
      if (l + 1 == layer_count()) return z;
      if (cache) cache->pre.push_back(z);
      x = z.cwiseMax(Scalar(0));
    }
    return x;
  }

  /// Gradient of a scalar objective with respect to the flat parameter vector,
  /// given the objective's gradient with respect to the logits. The log_z
  /// entry is left at zero.
  [[nodiscard]] Vector backward(const Activations& cache,
                                const Eigen::Ref<const Matrix>& grad_logits) const {
    Vector grad = Vector::Zero(theta_.size());
    Matrix delta = grad_logits;
    for (std::size_t l = layer_count(); l-- > 0;) {
      MatrixMap(grad.data() + weight_offsets_[l], layer_out_[l], layer_in_[l]).noalias() =
          delta * cache.inputs[l].transpose();
      VectorMap(grad.data() + bias_offsets_[l], layer_out_[l]) = delta.rowwise().sum();
      if (l == 0) break;
      Matrix upstream = weight(l).transpose() * delta;
      delta = (cache.pre[l - 1].array() > Scalar(0)).select(upstream, Scalar(0));
    }
    return grad;
  }

  [[nodiscard]] bool all_finite() const { return theta_.allFinite(); }

 private:
  [[nodiscard]] std::vector<int> layer_widths() const {
    std::vector<int> widths = hidden_;
    widths.push_back(output_dim_);
    return widths;
  }

  int input_dim_ = 0;
  int output_dim_ = 0;
  std::vector<int> hidden_;
  std::vector<int> heads_;
  std::vector<int> head_offsets_;
  std::vector<std::ptrdiff_t> weight_offsets_;
  std::vector<std::ptrdiff_t> bias_offsets_;
  std::vector<int> layer_in_;
  std::vector<int> layer_out_;
  Vector theta_;
};

/// Numerically stable log-softmax of a logit vector.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Adaptive-moment optimizer over a flat parameter vector.
template <class Scalar>
class Adam {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit Adam(Eigen::Index size, Scalar lr = Scalar(5e-4), Scalar beta1 = Scalar(0.9),
                Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : lr_(Vector::Constant(size, lr)),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        m_(Vector::Zero(size)),
        v_(Vector::Zero(size)) {}

  /// Per-coordinate learning rate override (e.g. for log_z).
  void set_learning_rate(Eigen::Index i, Scalar lr) { lr_[i] = lr; }

  void step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = beta1_ * m_ + (Scalar(1) - beta1_) * grad;
    v_ = beta2_ * v_ + (Scalar(1) - beta2_) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    params.array() -= lr_.array() * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  [[nodiscard]] long steps() const { return t_; }
  [[nodiscard]] const Vector& first_moment() const { return m_; }
  [[nodiscard]] const Vector& second_moment() const { return v_; }
  void restore(const Vector& m, const Vector& v, long t) {
    m_ = m;
    v_ = v;
    t_ = t;
  }

 private:
  Vector lr_;
  Scalar beta1_, beta2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

}  // namespace gfnadapt
