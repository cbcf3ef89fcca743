#pragma once

// Autoencoder pretraining with the VQ bottleneck between encoder and
// decoder, plus the shape x colour factorization probe.

#include "dgrl/checkpoint.hpp"
#include "dgrl/envs.hpp"
#include "dgrl/nn.hpp"
#include "dgrl/vq.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace dgrl::repr {

using nn::DenseMatrix;
using nn::Vector;

struct PretrainConfig {
  int latent_dim = 64;  // m
  int hidden = 256;
  int epochs = 10;
  int batch_size = 64;
  int downsample_size = 20;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  bool bottleneck = true;

  void validate() const;
};

class EncoderDecoder {
 public:
  EncoderDecoder() = default;
  EncoderDecoder(nn::Mlp encoder, nn::Mlp decoder, vq::Codebook codebook, vq::VqConfig vq,
                 bool bottleneck);

  // Fresh networks (two hidden relu layers each, identity outputs) and an
  // all-zero codebook; pretrain() seeds the codes from data.
  static EncoderDecoder create(int input_dim, const PretrainConfig& config,
                               const vq::VqConfig& vq, Rng& rng);

  int input_dim() const { return static_cast<int>(encoder_.in_dim()); }
  int latent_dim() const { return static_cast<int>(encoder_.out_dim()); }
  bool bottleneck() const { return bottleneck_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  Vector encode(std::span<const double> observation) const;
  vq::QuantizedLatent quantize(const Vector& z_e) const;
  vq::QuantizedLatent encode_quantized(std::span<const double> observation) const;
  Vector decode(const Vector& latent) const;
  // Through the bottleneck when enabled, otherwise decoder(encoder(x)).
  Vector reconstruct(std::span<const double> observation) const;
  // Decoder applied to z_q with the listed factor segments set to zero.
  Vector factor_ablation_reconstruct(std::span<const double> observation,
                                     std::span<const int> zeroed_groups) const;

  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& decoder() const { return decoder_; }
  nn::Mlp& mutable_encoder() { return encoder_; }
  nn::Mlp& mutable_decoder() { return decoder_; }
  const vq::Codebook& codebook() const { return codebook_; }
  vq::Codebook& mutable_codebook() { return codebook_; }
  const vq::VqConfig& vq_config() const { return vq_; }

  void save(io::CheckpointWriter& out, const std::string& prefix = "repr") const;
  static EncoderDecoder load(const io::CheckpointReader& in, const std::string& prefix = "repr");

 private:
  void check_input(std::span<const double> observation) const;

  nn::Mlp encoder_;
  nn::Mlp decoder_;
  vq::Codebook codebook_;
  vq::VqConfig vq_;
  bool bottleneck_ = true;
  bool trained_ = false;
};

struct AutoencoderLoss {
  double total = 0.0;
  double recon_mse = 0.0;
  double commitment = 0.0;  // mean over the batch
  nn::MlpGrads encoder_grads;
  nn::MlpGrads decoder_grads;
  std::vector<vq::Assignment> assignments;
};

// Batch loss mean_b[ MSE(decoder(z_q), x) + commitment ] with the codebook
// held fixed; gradients reach the encoder through the straight-through
// estimator plus the commitment term.
AutoencoderLoss autoencoder_loss(const EncoderDecoder& model, const DenseMatrix& batch,
                                 bool want_grads = true);

struct EpochStats {
  int epoch = 0;
  double recon_mse = 0.0;
  double commitment = 0.0;
  double total = 0.0;
  int revived_codes = 0;
};

struct PretrainResult {
  EncoderDecoder model;
  std::vector<EpochStats> curve;
};

// One sample per row. Throws TrainingFault naming epoch and batch on a
// non-finite loss.
PretrainResult pretrain(const DenseMatrix& dataset, const PretrainConfig& config,
                        const vq::VqConfig& vq);

double reconstruction_mse(const EncoderDecoder& model, const DenseMatrix& data);

// Observations seen by a uniform-random policy, downsampled and flattened.
// Maze corpora pair every state observation with a random candidate goal
// and also include the rendered goal observations.
DenseMatrix collect_random_rollouts(const env::MazeSpec& maze, int count, int downsample_size,
                                    int horizon, Rng& rng);

// ---- synthetic shape x colour dataset ----

inline constexpr int kMaxShapes = 6;
inline constexpr int kMaxColors = 6;

struct SyntheticFactorDataset {
  int shapes = 0;
  int colors = 0;
  int image_size = 16;
  std::vector<std::pair<int, int>> holdout;
  DenseMatrix train_images;  // one flattened H x W x 3 image per row
  std::vector<std::pair<int, int>> train_labels;
  DenseMatrix validation_images;  // fresh draws of the training combinations
  std::vector<std::pair<int, int>> validation_labels;
  DenseMatrix test_images;  // held-out combinations only
  std::vector<std::pair<int, int>> test_labels;

  int input_dim() const { return image_size * image_size * 3; }
};

// Palette entry for colour id c, components in [0, 1].
std::array<double, 3> palette_color(int color);

SyntheticFactorDataset build_synthetic_factor_dataset(int shapes, int colors,
                                                      std::vector<std::pair<int, int>> holdout,
                                                      std::uint64_t seed,
                                                      int samples_per_combo = 40,
                                                      int image_size = 16);

// Nearest-centroid probes fitted on training images: shape from the
// centred foreground map, colour from the foreground-weighted mean hue.
class FactorProbe {
 public:
  static FactorProbe fit(const SyntheticFactorDataset& data);
  int classify_shape(std::span<const double> image) const;
  int classify_color(std::span<const double> image) const;

 private:
  int image_size_ = 0;
  DenseMatrix shape_centroids_;
  DenseMatrix color_centroids_;
};

struct FactorDemoPairRow {
  int shape = 0;
  int color = 0;
  double mse = 0.0;
  double shape_accuracy = 0.0;
  double color_accuracy = 0.0;
};

struct FactorDemoReport {
  std::vector<FactorDemoPairRow> pairs;
  double heldout_mse = 0.0;
  double train_combo_mse = 0.0;
  // flip_rate[group][attribute]; attribute 0 = shape, 1 = colour.
  std::array<std::array<double, 2>, 2> flip_rate{};
  std::array<int, 2> specialization{};  // attribute each group flips most
  bool distinct_specialization = false;
  std::vector<EpochStats> curve;
};

// G = 2 only: zero each factor group of test images in turn and record how
// often the probe's shape and colour predictions change.
FactorDemoReport evaluate_factor_demo(const EncoderDecoder& model,
                                      const SyntheticFactorDataset& data);

}  // namespace dgrl::repr
