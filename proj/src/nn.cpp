#include "dgrl/nn.hpp"

#include "dgrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dgrl::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "?";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

MlpGrads MlpGrads::zeros_like(const Mlp& model) {
  MlpGrads g;
  g.layers.reserve(model.layers().size());
  for (const auto& l : model.layers()) {
    g.layers.push_back({DenseMatrix::Zero(l.out_dim(), l.in_dim()), Vector::Zero(l.out_dim())});
  }
  return g;
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  if (other.layers.size() != layers.size()) throw UsageError("MlpGrads: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights += other.layers[i].weights;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& l : layers) {
    l.weights *= s;
    l.bias *= s;
  }
  return *this;
}

std::vector<double> MlpGrads::flat() const {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

bool MlpGrads::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const LayerGrads& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.out_dim()) {
      throw ConfigError("layer " + std::to_string(i) + ": bias length " +
                        std::to_string(l.bias.size()) + " != output dim " +
                        std::to_string(l.out_dim()));
    }
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      throw ConfigError("layer " + std::to_string(i) + ": input dim " +
                        std::to_string(l.in_dim()) + " does not chain with previous output " +
                        std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

Mlp Mlp::make(std::span<const int> sizes, Activation hidden, Activation output, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("Mlp::make needs at least input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int fan_in = sizes[i];
    const int fan_out = sizes[i + 1];
    if (fan_in <= 0 || fan_out <= 0) throw ConfigError("Mlp::make: layer sizes must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index k = 0; k < layer.weights.size(); ++k) layer.weights.data()[k] = dist(rng);
    layer.bias = Vector::Zero(fan_out);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

Eigen::Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Eigen::Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

namespace {

void apply_activation(DenseMatrix& x, Activation a) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      x = x.cwiseMax(0.0);
      break;
    case Activation::tanh:
      x = x.array().tanh().matrix();
      break;
  }
}

// d(out)/d(pre) expressed through the post-activation value.
void scale_by_activation_grad(DenseMatrix& grad, const DenseMatrix& post, Activation a) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      grad = (post.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::tanh:
      grad.array() *= (1.0 - post.array().square());
      break;
  }
}

}  // namespace

DenseMatrix Mlp::forward(const DenseMatrix& input, GradTape* tape) const {
  if (layers_.empty()) throw UsageError("Mlp::forward on an empty model");
  if (input.cols() != in_dim()) {
    throw ConfigError("Mlp::forward: input dim " + std::to_string(input.cols()) +
                      " != model input dim " + std::to_string(in_dim()));
  }
  if (tape) tape->clear();
  DenseMatrix x = input;
  for (const auto& l : layers_) {
    if (tape) tape->inputs_.push_back(x);
    DenseMatrix y = x * l.weights.transpose();
    y.rowwise() += l.bias.transpose();
    apply_activation(y, l.activation);
    if (tape) tape->outputs_.push_back(y);
    x = std::move(y);
  }
  return x;
}

Vector Mlp::forward(const Vector& input) const {
  DenseMatrix row = input.transpose();
  DenseMatrix out = forward(row, nullptr);
  return out.row(0).transpose();
}

Backprop Mlp::backward(const GradTape& tape, const DenseMatrix& output_grad) const {
  if (tape.empty()) throw UsageError("Mlp::backward: tape has no recorded forward pass");
  if (tape.inputs_.size() != layers_.size()) {
    throw UsageError("Mlp::backward: tape was recorded on a different model");
  }
  const auto batch = tape.inputs_.front().rows();
  if (output_grad.rows() != batch || output_grad.cols() != out_dim()) {
    throw UsageError("Mlp::backward: output gradient shape does not match the recorded output");
  }
  Backprop result;
  result.params.layers.resize(layers_.size());
  DenseMatrix grad = output_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& l = layers_[i];
    scale_by_activation_grad(grad, tape.outputs_[i], l.activation);
    auto& lg = result.params.layers[i];
    lg.weights.noalias() = grad.transpose() * tape.inputs_[i];
    lg.bias = grad.colwise().sum().transpose();
    DenseMatrix next = grad * l.weights;
    grad = std::move(next);
  }
  result.input_grad = std::move(grad);
  return result;
}

std::vector<double> Mlp::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void Mlp::set_flat_params(std::span<const double> params) {
  if (params.size() != param_count()) {
    throw UsageError("set_flat_params: expected " + std::to_string(param_count()) +
                     " values, got " + std::to_string(params.size()));
  }
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy_n(params.begin() + off, l.weights.size(), l.weights.data());
    off += l.weights.size();
    std::copy_n(params.begin() + off, l.bias.size(), l.bias.data());
    off += l.bias.size();
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
        x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw UsageError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    throw UsageError("adam_step: optimizer state does not match parameter count");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::ostringstream os;
      os << "non-finite gradient at parameter " << i << " (step " << state.t + 1 << ")";
      throw TrainingFault(os.str());
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(const Mlp& model, AdamConfig config) : config_(config) {
  state_.m.assign(model.param_count(), 0.0);
  state_.v.assign(model.param_count(), 0.0);
}

void Adam::step(Mlp& model, const MlpGrads& grads) {
  if (grads.layers.size() != model.layers().size()) {
    throw UsageError("Adam::step: gradient layer count does not match model");
  }
  std::vector<double> params = model.flat_params();
  std::vector<double> g = grads.flat();
  if (g.size() != params.size()) throw UsageError("Adam::step: gradient shape mismatch");
  try {
    adam_step(params, g, state_, config_);
  } catch (const TrainingFault& e) {
    // Translate the flat index into a layer-local position for the diagnostic.
    std::size_t off = 0;
    for (std::size_t li = 0; li < grads.layers.size(); ++li) {
      const auto n = static_cast<std::size_t>(grads.layers[li].weights.size() +
                                              grads.layers[li].bias.size());
      for (std::size_t k = 0; k < n; ++k) {
        if (!std::isfinite(g[off + k])) {
          throw TrainingFault(std::string(e.what()) + " [layer " + std::to_string(li) +
                              ", element " + std::to_string(k) + "]");
        }
      }
      off += n;
    }
    throw;
  }
  model.set_flat_params(params);
}

GradCheckReport finite_diff_check(const LossFn& loss, std::span<const double> params,
                                  std::span<const double> analytic, double tolerance,
                                  double step) {
  GradCheckReport report;
  if (params.size() != analytic.size()) {
    report.message = "analytic gradient length does not match parameter count";
    return report;
  }
  std::vector<double> p(params.begin(), params.end());
  const double base = loss(p);
  if (!std::isfinite(base)) {
    report.message = "non-finite loss at the base point";
    return report;
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = loss(p);
    p[i] = orig - step;
    const double down = loss(p);
    p[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      report.passed = false;
      report.worst_index = i;
      report.message = "non-finite loss when perturbing parameter " + std::to_string(i);
      return report;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  std::ostringstream os;
  os << "max relative error " << report.max_rel_error << " at parameter " << report.worst_index
     << " (analytic " << report.analytic_at_worst << ", numeric " << report.numeric_at_worst
     << ")";
  report.message = os.str();
  return report;
}

}  // namespace dgrl::nn
