#include "dgrl/vq.hpp"

#include "dgrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dgrl::vq {

void VqConfig::validate() const {
  if (factors < 1) throw ConfigError("vq.factors (G) must be >= 1, got " + std::to_string(factors));
  if (codebook_size < 1) {
    throw ConfigError("vq.codebook_size (L) must be >= 1, got " + std::to_string(codebook_size));
  }
  if (!(beta >= 0.0)) throw ConfigError("vq.beta must be >= 0");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("vq.eta must lie in [0, 1]");
  if (dead_code_patience < 1) throw ConfigError("vq.dead_code_patience must be >= 1");
}

Codebook::Codebook(int size, int seg_dim, double eta)
    : codes_(DenseMatrix::Zero(size, seg_dim)),
      cluster_size_(Vector::Zero(size)),
      code_sum_(DenseMatrix::Zero(size, seg_dim)),
      idle_(static_cast<std::size_t>(size), 0) {
  if (size < 1 || seg_dim < 1) throw ConfigError("codebook needs size >= 1 and seg_dim >= 1");
  set_eta(eta);
}

Codebook Codebook::from_codes(DenseMatrix codes, double eta) {
  Codebook cb(static_cast<int>(codes.rows()), static_cast<int>(codes.cols()), eta);
  if (!codes.allFinite()) throw ConfigError("codebook codes must be finite");
  cb.code_sum_ = codes;
  cb.codes_ = std::move(codes);
  return cb;
}

void Codebook::set_eta(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("codebook eta must lie in [0, 1]");
  eta_ = eta;
}

std::vector<Vector> split_segments(const Vector& z_e, int factors) {
  const auto m = z_e.size();
  if (factors < 1 || m % factors != 0) {
    throw ConfigError("latent length m=" + std::to_string(m) +
                      " is not divisible by factor count G=" + std::to_string(factors));
  }
  const auto d = m / factors;
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(factors));
  for (int i = 0; i < factors; ++i) out.emplace_back(z_e.segment(i * d, d));
  return out;
}

Vector concat_segments(std::span<const Vector> segments) {
  Eigen::Index total = 0;
  for (const auto& s : segments) total += s.size();
  Vector out(total);
  Eigen::Index off = 0;
  for (const auto& s : segments) {
    out.segment(off, s.size()) = s;
    off += s.size();
  }
  return out;
}

NearestCode nearest_code(std::span<const double> segment, const Codebook& codebook) {
  if (codebook.size() == 0) throw ConfigError("nearest_code: empty codebook");
  if (static_cast<int>(segment.size()) != codebook.seg_dim()) {
    throw UsageError("nearest_code: segment length " + std::to_string(segment.size()) +
                     " != codebook seg_dim " + std::to_string(codebook.seg_dim()));
  }
  const auto& codes = codebook.codes();
  const auto d = codes.cols();
  NearestCode best;
  for (Eigen::Index j = 0; j < codes.rows(); ++j) {
    const double* row = codes.data() + j * d;
    double dist = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = segment[static_cast<std::size_t>(k)] - row[k];
      dist += diff * diff;
    }
    if (best.index < 0 || dist < best.sq_distance) {
      best.index = static_cast<int>(j);
      best.sq_distance = dist;
    }
  }
  return best;
}

QuantizedLatent quantize(const Vector& z_e, const Codebook& codebook, const VqConfig& config) {
  const int g = config.factors;
  if (g < 1 || z_e.size() % g != 0) {
    throw ConfigError("latent length m=" + std::to_string(z_e.size()) +
                      " is not divisible by factor count G=" + std::to_string(g));
  }
  const auto d = z_e.size() / g;
  if (d != codebook.seg_dim()) {
    throw ConfigError("segment length m/G=" + std::to_string(d) + " != codebook seg_dim " +
                      std::to_string(codebook.seg_dim()));
  }
  QuantizedLatent q;
  q.z_e = z_e;
  q.z_q.resize(z_e.size());
  q.factor_indices.resize(static_cast<std::size_t>(g));
  double sq_sum = 0.0;
  for (int i = 0; i < g; ++i) {
    std::span<const double> seg(z_e.data() + i * d, static_cast<std::size_t>(d));
    const auto nc = nearest_code(seg, codebook);
    q.factor_indices[static_cast<std::size_t>(i)] = nc.index;
    q.z_q.segment(i * d, d) = codebook.code(nc.index);
    sq_sum += nc.sq_distance;
  }
  q.commitment = config.beta / static_cast<double>(g) * sq_sum;
  return q;
}

double commitment_loss(std::span<const Vector> segments, std::span<const Vector> selected_codes,
                       double beta, int factors) {
  if (segments.size() != selected_codes.size()) {
    throw UsageError("commitment_loss: segment and code counts differ");
  }
  if (factors < 1) throw UsageError("commitment_loss: factors must be >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].size() != selected_codes[i].size()) {
      throw UsageError("commitment_loss: segment " + std::to_string(i) + " has the wrong length");
    }
    sum += (segments[i] - selected_codes[i]).squaredNorm();
  }
  return beta / static_cast<double>(factors) * sum;
}

double mean_commitment_loss(std::span<const QuantizedLatent> latents) {
  if (latents.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& q : latents) sum += q.commitment;
  return sum / static_cast<double>(latents.size());
}

Vector commitment_grad(const QuantizedLatent& q, double beta, int factors) {
  return (2.0 * beta / static_cast<double>(factors)) * (q.z_e - q.z_q);
}

Vector straight_through_grad(const Vector& upstream_grad_zq) { return upstream_grad_zq; }

void ema_update(Codebook& codebook, std::span<const Assignment> assignments,
                double dead_code_threshold) {
  const int size = codebook.size();
  const int d = codebook.seg_dim();
  const double eta = codebook.eta();
  Vector counts = Vector::Zero(size);
  DenseMatrix sums = DenseMatrix::Zero(size, d);
  for (const auto& a : assignments) {
    if (a.index < 0 || a.index >= size) {
      throw UsageError("ema_update: code index " + std::to_string(a.index) + " out of range");
    }
    if (a.segment.size() != d) throw UsageError("ema_update: segment has the wrong length");
    counts[a.index] += 1.0;
    sums.row(a.index) += a.segment.transpose();
  }
  auto& codes = codebook.mutable_codes();
  auto& cluster = codebook.mutable_cluster_size();
  auto& code_sum = codebook.mutable_code_sum();
  auto& idle = codebook.mutable_idle_updates();
  for (int j = 0; j < size; ++j) {
    cluster[j] = eta * cluster[j] + (1.0 - eta) * counts[j];
    code_sum.row(j) = eta * code_sum.row(j) + (1.0 - eta) * sums.row(j);
    if (counts[j] > 0.0) {
      codes.row(j) = eta * codes.row(j) + (1.0 - eta) * (sums.row(j) / counts[j]);
    }
    auto& k = idle[static_cast<std::size_t>(j)];
    k = cluster[j] < dead_code_threshold ? k + 1 : 0;
  }
}

int revive_dead_codes(Codebook& codebook, std::span<const Vector> recent_segments,
                      const VqConfig& config, Rng& rng) {
  if (recent_segments.empty()) throw UsageError("revive_dead_codes: no recent segments");
  auto& idle = codebook.mutable_idle_updates();
  std::uniform_int_distribution<std::size_t> pick(0, recent_segments.size() - 1);
  int revived = 0;
  for (int j = 0; j < codebook.size(); ++j) {
    if (idle[static_cast<std::size_t>(j)] < config.dead_code_patience) continue;
    const Vector& seg = recent_segments[pick(rng)];
    if (seg.size() != codebook.seg_dim()) {
      throw UsageError("revive_dead_codes: segment has the wrong length");
    }
    codebook.mutable_codes().row(j) = seg.transpose();
    codebook.mutable_code_sum().row(j) = seg.transpose();
    codebook.mutable_cluster_size()[j] = 1.0;
    idle[static_cast<std::size_t>(j)] = 0;
    ++revived;
  }
  return revived;
}

double factor_match_fraction(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw UsageError("factor_match_fraction: factor counts differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw UsageError("factor_match_fraction: no factors");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(a.size());
}

double factor_match_fraction(const QuantizedLatent& a, const QuantizedLatent& b) {
  return factor_match_fraction(a.factor_indices, b.factor_indices);
}

double code_usage_entropy(std::span<const int> indices, int codebook_size) {
  if (indices.empty()) return 0.0;
  std::vector<double> counts(static_cast<std::size_t>(codebook_size), 0.0);
  for (int i : indices) {
    if (i < 0 || i >= codebook_size) throw UsageError("code_usage_entropy: index out of range");
    counts[static_cast<std::size_t>(i)] += 1.0;
  }
  const double n = static_cast<double>(indices.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

Codebook init_codebook_from_segments(std::span<const Vector> segments, int size, int seg_dim,
                                     double eta, Rng& rng) {
  Codebook cb(size, seg_dim, eta);
  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& codes = cb.mutable_codes();
  for (int j = 0; j < size; ++j) {
    if (static_cast<std::size_t>(j) < order.size()) {
      const Vector& s = segments[order[static_cast<std::size_t>(j)]];
      if (s.size() != seg_dim) throw UsageError("init_codebook: segment has the wrong length");
      codes.row(j) = s.transpose();
    } else {
      for (int k = 0; k < seg_dim; ++k) codes(j, k) = normal(rng);
    }
  }
  cb.mutable_code_sum() = codes;
  return cb;
}

}  // namespace dgrl::vq
