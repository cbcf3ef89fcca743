#pragma once

// Multi-factor vector quantization: a latent of length m is cut into G
// segments of length m/G, and every segment is snapped to its nearest row
// of one shared codebook. Codes move by exponential moving average, never
// by gradient descent.

#include "dgrl/nn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dgrl::vq {

using nn::DenseMatrix;
using nn::Vector;

struct VqConfig {
  int factors = 16;  // G
  int codebook_size = 256;  // L
  double beta = 0.25;
  double eta = 0.99;
  double dead_code_threshold = 1e-3;
  int dead_code_patience = 100;

  // Throws ConfigError on G < 1, L < 1, beta < 0 or eta outside [0, 1].
  void validate() const;
};

class Codebook {
 public:
  Codebook() = default;
  // Zero-initialised codes; EMA cluster sizes start at zero.
  Codebook(int size, int seg_dim, double eta);
  static Codebook from_codes(DenseMatrix codes, double eta);

  int size() const { return static_cast<int>(codes_.rows()); }
  int seg_dim() const { return static_cast<int>(codes_.cols()); }
  double eta() const { return eta_; }
  void set_eta(double eta);

  const DenseMatrix& codes() const { return codes_; }
  Eigen::Map<const Vector> code(int j) const {
    return Eigen::Map<const Vector>(codes_.row(j).data(), codes_.cols());
  }

  // EMA usage statistics and the per-code idle counter that drives revival.
  const Vector& ema_cluster_size() const { return cluster_size_; }
  const DenseMatrix& ema_code_sum() const { return code_sum_; }
  const std::vector<std::int64_t>& idle_updates() const { return idle_; }

  DenseMatrix& mutable_codes() { return codes_; }
  Vector& mutable_cluster_size() { return cluster_size_; }
  DenseMatrix& mutable_code_sum() { return code_sum_; }
  std::vector<std::int64_t>& mutable_idle_updates() { return idle_; }

 private:
  DenseMatrix codes_;      // L x seg_dim
  Vector cluster_size_;    // L
  DenseMatrix code_sum_;   // L x seg_dim
  std::vector<std::int64_t> idle_;
  double eta_ = 0.99;
};

struct QuantizedLatent {
  Vector z_e;
  std::vector<int> factor_indices;
  Vector z_q;
  double commitment = 0.0;
};

struct NearestCode {
  int index = -1;
  double sq_distance = 0.0;
};

struct Assignment {
  Vector segment;
  int index = -1;
};

std::vector<Vector> split_segments(const Vector& z_e, int factors);
Vector concat_segments(std::span<const Vector> segments);

// Lowest index wins ties.
NearestCode nearest_code(std::span<const double> segment, const Codebook& codebook);

QuantizedLatent quantize(const Vector& z_e, const Codebook& codebook, const VqConfig& config);

// (beta / G) * sum_i ||c_i - e_{o_i}||^2.
double commitment_loss(std::span<const Vector> segments, std::span<const Vector> selected_codes,
                       double beta, int factors);

// Mean over latents, for models that quantize several vectors.
double mean_commitment_loss(std::span<const QuantizedLatent> latents);

// Gradient of the commitment loss with respect to z_e; codes are constants.
Vector commitment_grad(const QuantizedLatent& q, double beta, int factors);

// Identity Jacobian through the quantizer.
Vector straight_through_grad(const Vector& upstream_grad_zq);

// e_j <- eta * e_j + (1 - eta) * mean(segments assigned to j) for every j
// that received an assignment; usage statistics decay for all codes. Codes
// whose EMA cluster size is below `dead_code_threshold` accumulate idle
// updates.
void ema_update(Codebook& codebook, std::span<const Assignment> assignments,
                double dead_code_threshold = 1e-3);

// Resets codes that stayed below the usage threshold for `patience` updates
// to randomly chosen recent segments. Returns the number of codes reset.
int revive_dead_codes(Codebook& codebook, std::span<const Vector> recent_segments,
                      const VqConfig& config, Rng& rng);

double factor_match_fraction(std::span<const int> a, std::span<const int> b);
double factor_match_fraction(const QuantizedLatent& a, const QuantizedLatent& b);

// Shannon entropy (nats) of the empirical code-usage distribution.
double code_usage_entropy(std::span<const int> indices, int codebook_size);

// Codes seeded from data segments; the shortfall (fewer segments than L)
// is filled with unit-normal noise.
Codebook init_codebook_from_segments(std::span<const Vector> segments, int size, int seg_dim,
                                     double eta, Rng& rng);

}  // namespace dgrl::vq
