#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gfn/core.hpp"

namespace gfn {

enum class Activation { LeakyRelu };

inline std::string to_string(Activation) { return "leaky_relu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::LeakyRelu;
  throw ConfigError("unknown activation: " + s);
}

/// Dense network; hidden layers use LeakyReLU, the output layer is linear.
/// Batches are column-major: one column per example.
struct Mlp {
  std::vector<int> sizes;
  std::vector<Eigen::MatrixXd> weights;  // sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::LeakyRelu;
  double leak = 0.01;

  static Mlp zeros(std::vector<int> layer_sizes) {
    require(layer_sizes.size() >= 2, "Mlp: need at least input and output sizes");
    Mlp m;
    m.sizes = std::move(layer_sizes);
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
      require(m.sizes[l] > 0 && m.sizes[l + 1] > 0, "Mlp: layer sizes must be positive");
      m.weights.push_back(Eigen::MatrixXd::Zero(m.sizes[l + 1], m.sizes[l]));
      m.biases.push_back(Eigen::VectorXd::Zero(m.sizes[l + 1]));
    }
    return m;
  }

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static Mlp init(std::vector<int> layer_sizes, Rng& rng) {
    Mlp m = zeros(std::move(layer_sizes));
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(m.sizes[l]));
      auto draw = [&] { return (2.0 * uniform01(rng) - 1.0) * bound; };
      for (Eigen::Index j = 0; j < m.weights[l].cols(); ++j)
        for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) m.weights[l](i, j) = draw();
      for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) m.biases[l](i) = draw();
    }
    return m;
  }

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  void activate(Eigen::MatrixXd& z) const {
    z = z.unaryExpr([this](double v) { return v > 0.0 ? v : leak * v; });
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    require(x.rows() == input_size(), "Mlp::forward: input size mismatch");
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::MatrixXd z = weights[l] * h;
      z.colwise() += biases[l];
      if (l + 1 < weights.size()) activate(z);
      h = std::move(z);
    }
    return h;
  }

  std::vector<double> forward(std::span<const double> x) const {
    require(static_cast<int>(x.size()) == input_size(), "Mlp::forward: input size mismatch");
    Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::VectorXd z = weights[l] * h + biases[l];
      if (l + 1 < weights.size()) z = z.unaryExpr([this](double v) { return v > 0.0 ? v : leak * v; });
      h = std::move(z);
    }
    return {h.data(), h.data() + h.size()};
  }
};

/// Network outputs with invalid actions replaced by kMaskedQ.
inline std::vector<double> forward_masked(const Mlp& net, std::span<const double> encoded,
                                          const Mask& mask) {
  auto q = net.forward(encoded);
  require(q.size() == mask.size(), "forward_masked: mask size mismatch");
  for (std::size_t i = 0; i < q.size(); ++i)
    if (!mask[i]) q[i] = kMaskedQ;
  return q;
}

/// Target network sync: bitwise copy of the online parameters.
inline void hard_update(Mlp& target, const Mlp& online) { target = online; }

struct MlpGrad {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static MlpGrad zeros_like(const Mlp& m) {
    MlpGrad g;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      g.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
      g.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
    return g;
  }
};

/// Pre-activations and activations kept for the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;         // z_l, one per layer
  std::vector<Eigen::MatrixXd> activations;  // h_0 = input, h_l = act(z_l)

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

inline ForwardTrace forward_trace(const Mlp& net, const Eigen::MatrixXd& x) {
  require(x.rows() == net.input_size(), "forward_trace: input size mismatch");
  ForwardTrace t;
  t.activations.push_back(x);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::MatrixXd z = net.weights[l] * t.activations.back();
    z.colwise() += net.biases[l];
    t.pre.push_back(z);
    if (l + 1 < net.weights.size()) net.activate(z);
    t.activations.push_back(std::move(z));
  }
  return t;
}

/// Parameter gradient given dLoss/dOutput (output_size x batch).
inline MlpGrad backward(const Mlp& net, const ForwardTrace& trace, const Eigen::MatrixXd& d_out) {
  require(d_out.rows() == net.output_size() && d_out.cols() == trace.output().cols(),
          "backward: gradient shape mismatch");
  MlpGrad g;
  g.weights.resize(net.weights.size());
  g.biases.resize(net.weights.size());
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = net.weights.size(); l-- > 0;) {
    if (l + 1 < net.weights.size()) {
      const auto& z = trace.pre[l];
      delta = delta.cwiseProduct(
          z.unaryExpr([&net](double v) { return v > 0.0 ? 1.0 : net.leak; }));
    }
    g.weights[l] = delta * trace.activations[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) delta = net.weights[l].transpose() * delta;
  }
  return g;
}

enum class LossKind { Mse, Huber };

struct Loss {
  LossKind kind = LossKind::Mse;
  double delta = 1.0;

  double value(double r) const {
    if (kind == LossKind::Mse) return r * r;
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
  }

  double derivative(double r) const {
    if (kind == LossKind::Mse) return 2.0 * r;
    if (std::abs(r) <= delta) return r;
    return r > 0 ? delta : -delta;
  }
};

inline LossKind loss_from_string(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "huber") return LossKind::Huber;
  throw ConfigError("unknown loss: " + s);
}

/// One regression example: push output[action] towards target.
struct QSample {
  std::vector<double> encoded;
  Mask mask;
  int action = 0;
  double target = 0.0;
  double weight = 1.0;
};

struct RegressionResult {
  MlpGrad grad;
  double loss = 0.0;
  std::vector<double> residuals;  // prediction - target
};

/// Gradient of (1/B) sum_i w_i * loss(Q(s_i)[a_i] - target_i).
inline RegressionResult q_regression(const Mlp& net, std::span<const QSample> batch, Loss loss) {
  require(!batch.empty(), "q_regression: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(net.input_size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = batch[i];
    require(static_cast<int>(s.encoded.size()) == net.input_size(), "q_regression: input size mismatch");
    require(s.action >= 0 && s.action < net.output_size(), "q_regression: action out of range");
    require(s.mask.empty() || s.mask[s.action], "q_regression: masked action");
    x.col(i) = Eigen::Map<const Eigen::VectorXd>(s.encoded.data(), s.encoded.size());
  }
  const auto trace = forward_trace(net, x);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(net.output_size(), n);
  RegressionResult out;
  out.residuals.resize(batch.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = batch[i];
    const double r = trace.output()(s.action, i) - s.target;
    out.residuals[i] = r;
    out.loss += s.weight * loss.value(r);
    d_out(s.action, i) = s.weight * loss.derivative(r) / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);
  out.grad = backward(net, trace, d_out);
  return out;
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  MlpGrad m;
  MlpGrad v;

  static AdamState for_params(const Mlp& net, double lr) {
    AdamState s;
    s.lr = lr;
    s.m = MlpGrad::zeros_like(net);
    s.v = MlpGrad::zeros_like(net);
    return s;
  }
};

/// Bias-corrected Adam; the step counter is incremented before correction.
inline void adam_step(Mlp& net, AdamState& st, const MlpGrad& g) {
  ++st.step_count;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  auto update = [&](auto& p, auto& m, auto& v, const auto& grad) {
    m = st.beta1 * m + (1.0 - st.beta1) * grad;
    v = st.beta2 * v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
    p.array() -= st.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
  };
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    update(net.weights[l], st.m.weights[l], st.v.weights[l], g.weights[l]);
    update(net.biases[l], st.m.biases[l], st.v.biases[l], g.biases[l]);
  }
}

}  // namespace gfn
