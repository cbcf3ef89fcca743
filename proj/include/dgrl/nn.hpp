#pragma once

// Small dense networks: layers, reverse-mode gradients, Adam.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgrl {

using Rng = std::mt19937_64;

namespace nn {

// Row-major so a batch stores one sample per row.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { identity = 0, relu = 1, tanh = 2 };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  DenseMatrix weights;  // out x in
  Vector bias;          // out
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

struct LayerGrads {
  DenseMatrix weights;
  Vector bias;
};

class Mlp;

// Gradients with exactly the parameter shapes of one Mlp.
struct MlpGrads {
  std::vector<LayerGrads> layers;

  static MlpGrads zeros_like(const Mlp& model);
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
  std::vector<double> flat() const;
  bool all_finite() const;
};

// Primal values recorded by a forward pass, consumed by backward.
class GradTape {
 public:
  void clear() {
    inputs_.clear();
    outputs_.clear();
  }
  bool empty() const { return inputs_.empty(); }

 private:
  friend class Mlp;
  std::vector<DenseMatrix> inputs_;   // per layer, batch x in
  std::vector<DenseMatrix> outputs_;  // per layer, batch x out (post-activation)
};

struct Backprop {
  MlpGrads params;
  DenseMatrix input_grad;  // batch x in
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // Glorot-uniform weights, zero biases. sizes = {in, h1, ..., out}.
  static Mlp make(std::span<const int> sizes, Activation hidden, Activation output, Rng& rng);

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t param_count() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  bool empty() const { return layers_.empty(); }

  // input: batch x in_dim. Records primals when tape is non-null.
  DenseMatrix forward(const DenseMatrix& input, GradTape* tape = nullptr) const;
  Vector forward(const Vector& input) const;

  // Gradients are summed over the batch rows of output_grad.
  Backprop backward(const GradTape& tape, const DenseMatrix& output_grad) const;

  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> params);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates for a flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update in place. Throws TrainingFault on a
// non-finite gradient, naming the offending element.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& model, AdamConfig config);

  void step(Mlp& model, const MlpGrads& grads);
  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return state_.t; }

 private:
  AdamConfig config_;
  AdamState state_;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::string message;
};

using LossFn = std::function<double(std::span<const double>)>;

// Central finite differences of `loss` around `params`, compared against
// `analytic`. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport finite_diff_check(const LossFn& loss, std::span<const double> params,
                                  std::span<const double> analytic, double tolerance,
                                  double step = 1e-4);

}  // namespace nn
}  // namespace dgrl
