#include "dgrl/repr.hpp"

#include "dgrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace dgrl::repr {

void PretrainConfig::validate() const {
  if (latent_dim <= 0) throw ConfigError("repr.latent_dim must be positive");
  if (hidden <= 0) throw ConfigError("repr.hidden must be positive");
  if (epochs <= 0) throw ConfigError("repr.epochs must be positive");
  if (batch_size <= 0) throw ConfigError("repr.batch_size must be positive");
  if (downsample_size <= 0) throw ConfigError("repr.downsample_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("repr.lr must be positive");
}

EncoderDecoder::EncoderDecoder(nn::Mlp encoder, nn::Mlp decoder, vq::Codebook codebook,
                               vq::VqConfig vq, bool bottleneck)
    : encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      codebook_(std::move(codebook)),
      vq_(vq),
      bottleneck_(bottleneck) {
  if (encoder_.out_dim() != decoder_.in_dim()) {
    throw ConfigError("encoder output dim " + std::to_string(encoder_.out_dim()) +
                      " != decoder input dim " + std::to_string(decoder_.in_dim()));
  }
  if (encoder_.in_dim() != decoder_.out_dim()) {
    throw ConfigError("decoder output dim must equal the observation size");
  }
  vq_.validate();
  if (bottleneck_) {
    if (encoder_.out_dim() % vq_.factors != 0) {
      throw ConfigError("latent dim m=" + std::to_string(encoder_.out_dim()) +
                        " is not divisible by G=" + std::to_string(vq_.factors));
    }
    if (codebook_.seg_dim() != encoder_.out_dim() / vq_.factors) {
      throw ConfigError("codebook seg_dim does not equal m/G");
    }
  }
}

EncoderDecoder EncoderDecoder::create(int input_dim, const PretrainConfig& config,
                                      const vq::VqConfig& vq, Rng& rng) {
  config.validate();
  vq.validate();
  if (config.latent_dim % vq.factors != 0) {
    throw ConfigError("latent dim m=" + std::to_string(config.latent_dim) +
                      " is not divisible by G=" + std::to_string(vq.factors));
  }
  const int h = config.hidden;
  const std::array<int, 4> enc_sizes{input_dim, h, h, config.latent_dim};
  const std::array<int, 4> dec_sizes{config.latent_dim, h, h, input_dim};
  auto enc = nn::Mlp::make(enc_sizes, nn::Activation::relu, nn::Activation::identity, rng);
  auto dec = nn::Mlp::make(dec_sizes, nn::Activation::relu, nn::Activation::identity, rng);
  vq::Codebook cb(vq.codebook_size, config.latent_dim / vq.factors, vq.eta);
  return EncoderDecoder(std::move(enc), std::move(dec), std::move(cb), vq, config.bottleneck);
}

void EncoderDecoder::check_input(std::span<const double> observation) const {
  if (static_cast<int>(observation.size()) != input_dim()) {
    throw UsageError("observation has " + std::to_string(observation.size()) +
                     " values, encoder expects " + std::to_string(input_dim()));
  }
}

Vector EncoderDecoder::encode(std::span<const double> observation) const {
  check_input(observation);
  Vector x = Eigen::Map<const Vector>(observation.data(), static_cast<Eigen::Index>(observation.size()));
  return encoder_.forward(x);
}

vq::QuantizedLatent EncoderDecoder::quantize(const Vector& z_e) const {
  return vq::quantize(z_e, codebook_, vq_);
}

vq::QuantizedLatent EncoderDecoder::encode_quantized(std::span<const double> observation) const {
  return quantize(encode(observation));
}

Vector EncoderDecoder::decode(const Vector& latent) const { return decoder_.forward(latent); }

Vector EncoderDecoder::reconstruct(std::span<const double> observation) const {
  Vector z = encode(observation);
  if (bottleneck_) z = quantize(z).z_q;
  return decode(z);
}

Vector EncoderDecoder::factor_ablation_reconstruct(std::span<const double> observation,
                                                   std::span<const int> zeroed_groups) const {
  if (!bottleneck_) throw UsageError("factor ablation needs the VQ bottleneck");
  const int g = vq_.factors;
  for (int k : zeroed_groups) {
    if (k < 0 || k >= g) {
      throw UsageError("factor group " + std::to_string(k) + " outside [0, " + std::to_string(g) + ")");
    }
  }
  Vector z = encode_quantized(observation).z_q;
  const int d = latent_dim() / g;
  for (int k : zeroed_groups) z.segment(k * d, d).setZero();
  return decode(z);
}

void EncoderDecoder::save(io::CheckpointWriter& out, const std::string& prefix) const {
  out.add_mlp(prefix + ".encoder", encoder_);
  out.add_mlp(prefix + ".decoder", decoder_);
  out.add_codebook(prefix + ".codebook", codebook_);
  out.add_scalars(prefix + ".config", {{"factors", vq_.factors},
                                       {"codebook_size", vq_.codebook_size},
                                       {"beta", vq_.beta},
                                       {"eta", vq_.eta},
                                       {"dead_code_threshold", vq_.dead_code_threshold},
                                       {"dead_code_patience", vq_.dead_code_patience},
                                       {"bottleneck", bottleneck_ ? 1.0 : 0.0},
                                       {"trained", trained_ ? 1.0 : 0.0}});
}

EncoderDecoder EncoderDecoder::load(const io::CheckpointReader& in, const std::string& prefix) {
  const auto s = in.scalars(prefix + ".config");
  auto get = [&](const char* key) {
    auto it = s.find(key);
    if (it == s.end()) throw ConfigError(std::string("checkpoint: missing repr field ") + key);
    return it->second;
  };
  vq::VqConfig vq;
  vq.factors = static_cast<int>(get("factors"));
  vq.codebook_size = static_cast<int>(get("codebook_size"));
  vq.beta = get("beta");
  vq.eta = get("eta");
  vq.dead_code_threshold = get("dead_code_threshold");
  vq.dead_code_patience = static_cast<int>(get("dead_code_patience"));
  EncoderDecoder m(in.mlp(prefix + ".encoder"), in.mlp(prefix + ".decoder"),
                   in.codebook(prefix + ".codebook"), vq, get("bottleneck") != 0.0);
  if (get("trained") != 0.0) m.mark_trained();
  return m;
}

AutoencoderLoss autoencoder_loss(const EncoderDecoder& model, const DenseMatrix& batch,
                                 bool want_grads) {
  const auto b = batch.rows();
  const auto d = batch.cols();
  if (b == 0) throw UsageError("autoencoder_loss: empty batch");
  AutoencoderLoss out;
  nn::GradTape enc_tape;
  nn::GradTape dec_tape;
  const DenseMatrix ze = model.encoder().forward(batch, want_grads ? &enc_tape : nullptr);
  DenseMatrix zq = ze;
  const auto& vq = model.vq_config();
  if (model.bottleneck()) {
    const int g = vq.factors;
    const auto seg = ze.cols() / g;
    double commit = 0.0;
    out.assignments.reserve(static_cast<std::size_t>(b * g));
    for (Eigen::Index r = 0; r < b; ++r) {
      const Vector z = ze.row(r).transpose();
      const auto q = model.quantize(z);
      zq.row(r) = q.z_q.transpose();
      commit += q.commitment;
      for (int i = 0; i < g; ++i) {
        out.assignments.push_back({z.segment(i * seg, seg), q.factor_indices[static_cast<std::size_t>(i)]});
      }
    }
    out.commitment = commit / static_cast<double>(b);
  }
  const DenseMatrix recon = model.decoder().forward(zq, want_grads ? &dec_tape : nullptr);
  const DenseMatrix diff = recon - batch;
  const double scale = 1.0 / static_cast<double>(b * d);
  out.recon_mse = diff.squaredNorm() * scale;
  out.total = out.recon_mse + out.commitment;
  if (!want_grads) return out;

  const DenseMatrix d_recon = 2.0 * scale * diff;
  auto dec_bp = model.decoder().backward(dec_tape, d_recon);
  // Straight-through: d/dz_e of the decoder path equals d/dz_q.
  DenseMatrix d_ze = dec_bp.input_grad;
  if (model.bottleneck()) {
    const double k = 2.0 * vq.beta / static_cast<double>(vq.factors) / static_cast<double>(b);
    d_ze += k * (ze - zq);
  }
  auto enc_bp = model.encoder().backward(enc_tape, d_ze);
  out.encoder_grads = std::move(enc_bp.params);
  out.decoder_grads = std::move(dec_bp.params);
  return out;
}

double reconstruction_mse(const EncoderDecoder& model, const DenseMatrix& data) {
  if (data.rows() == 0) return 0.0;
  return autoencoder_loss(model, data, false).recon_mse;
}

PretrainResult pretrain(const DenseMatrix& dataset, const PretrainConfig& config,
                        const vq::VqConfig& vq) {
  config.validate();
  if (dataset.rows() == 0) throw UsageError("pretrain: empty dataset");
  Rng rng(config.seed);
  PretrainResult result{EncoderDecoder::create(static_cast<int>(dataset.cols()), config, vq, rng), {}};
  auto& model = result.model;
  nn::Adam enc_opt(model.encoder(), {.lr = config.lr});
  nn::Adam dec_opt(model.decoder(), {.lr = config.lr});

  std::vector<Eigen::Index> order(static_cast<std::size_t>(dataset.rows()));
  std::iota(order.begin(), order.end(), 0);
  const auto n = static_cast<Eigen::Index>(order.size());
  const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n);
  bool codebook_ready = !model.bottleneck();
  DenseMatrix batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const auto rows = std::min(bs, n - start);
      batch.resize(rows, dataset.cols());
      for (Eigen::Index r = 0; r < rows; ++r) {
        batch.row(r) = dataset.row(order[static_cast<std::size_t>(start + r)]);
      }
      if (!codebook_ready) {
        const DenseMatrix ze = model.encoder().forward(batch);
        std::vector<Vector> segs;
        const int g = vq.factors;
        const auto seg = ze.cols() / g;
        for (Eigen::Index r = 0; r < rows; ++r) {
          for (int i = 0; i < g; ++i) segs.emplace_back(ze.row(r).segment(i * seg, seg).transpose());
        }
        model.mutable_codebook() = vq::init_codebook_from_segments(
            segs, vq.codebook_size, static_cast<int>(seg), vq.eta, rng);
        codebook_ready = true;
      }
      auto loss = autoencoder_loss(model, batch, true);
      if (!std::isfinite(loss.total) || !loss.encoder_grads.all_finite() ||
          !loss.decoder_grads.all_finite()) {
        std::ostringstream os;
        os << "pretrain: non-finite loss at epoch " << epoch << ", batch " << batches;
        throw TrainingFault(os.str());
      }
      enc_opt.step(model.mutable_encoder(), loss.encoder_grads);
      dec_opt.step(model.mutable_decoder(), loss.decoder_grads);
      if (model.bottleneck()) {
        vq::ema_update(model.mutable_codebook(), loss.assignments, vq.dead_code_threshold);
        std::vector<Vector> recent;
        recent.reserve(loss.assignments.size());
        for (auto& a : loss.assignments) recent.push_back(std::move(a.segment));
        stats.revived_codes += vq::revive_dead_codes(model.mutable_codebook(), recent, vq, rng);
      }
      stats.recon_mse += loss.recon_mse;
      stats.commitment += loss.commitment;
      stats.total += loss.total;
      ++batches;
    }
    stats.recon_mse /= batches;
    stats.commitment /= batches;
    stats.total /= batches;
    result.curve.push_back(stats);
  }
  model.mark_trained();
  return result;
}

DenseMatrix collect_random_rollouts(const env::MazeSpec& maze, int count, int downsample_size,
                                    int horizon, Rng& rng) {
  if (count <= 0) throw ConfigError("rollout corpus size must be positive");
  const int dim = downsample_size * downsample_size * env::kChannels;
  DenseMatrix out(count, dim);
  int filled = 0;
  auto push = [&](const env::Raster& r) {
    if (filled >= count) return;
    const auto v = env::downsample(r, downsample_size);
    out.row(filled++) = Eigen::Map<const Vector>(v.data(), dim).transpose();
  };
  std::uniform_int_distribution<int> action(0, env::kNumActions - 1);
  if (maze.key && maze.chest) {
    env::KeyChestEnv e(maze, horizon);
    while (filled < count) {
      push(e.reset(rng));
      bool done = false;
      while (!done && filled < count) {
        done = e.step(static_cast<env::Action>(action(rng))).done;
        push(e.observe());
      }
    }
    return out;
  }
  if (maze.goal_candidates.empty()) throw ConfigError("rollout corpus: maze has no goal candidates");
  env::GoalMazeEnv e(maze, horizon);
  while (filled < count) {
    const auto goal = env::sample_goal(maze.goal_candidates, rng);
    const auto obs = e.reset(goal);
    push(obs.goal);
    push(obs.state);
    bool done = false;
    while (!done && filled < count) {
      done = e.step(static_cast<env::Action>(action(rng))).done;
      push(e.observe());
    }
  }
  return out;
}

// ---- synthetic shape x colour dataset ----

namespace {

constexpr int kTemplate = 9;
constexpr int kShapeSearch = 1;

bool shape_mask(int shape, int r, int c) {
  switch (shape) {
    case 0:  // filled square
      return r >= 1 && r <= 7 && c >= 1 && c <= 7;
    case 1:  // disk
      return (r - 4) * (r - 4) + (c - 4) * (c - 4) <= 16;
    case 2:  // triangle, apex up
      return r >= 1 && r <= 8 && std::abs(c - 4) * 2 <= r - 1;
    case 3:  // plus
      return std::abs(r - 4) <= 1 || std::abs(c - 4) <= 1;
    case 4:  // hollow square
      return !(r >= 2 && r <= 6 && c >= 2 && c <= 6);
    case 5:  // diagonal cross
      return std::abs(r - c) <= 1 || std::abs(r + c - 8) <= 1;
    default:
      return false;
  }
}

constexpr std::array<std::array<double, 3>, kMaxColors> kPalette{{
    {0.90, 0.10, 0.10},  // red
    {0.10, 0.80, 0.15},  // green
    {0.15, 0.25, 0.95},  // blue
    {0.90, 0.85, 0.10},  // yellow
    {0.85, 0.10, 0.85},  // magenta
    {0.10, 0.80, 0.85},  // cyan
}};

void draw(DenseMatrix& out, Eigen::Index row, int size, int shape, int color, int dr, int dc,
          double brightness) {
  out.row(row).setZero();
  const auto& rgb = kPalette[static_cast<std::size_t>(color)];
  for (int r = 0; r < kTemplate; ++r) {
    for (int c = 0; c < kTemplate; ++c) {
      if (!shape_mask(shape, r, c)) continue;
      const int y = r + dr;
      const int x = c + dc;
      if (y < 0 || y >= size || x < 0 || x >= size) continue;
      for (int k = 0; k < 3; ++k) out(row, (y * size + x) * 3 + k) = brightness * rgb[static_cast<std::size_t>(k)];
    }
  }
}

}  // namespace

std::array<double, 3> palette_color(int color) {
  if (color < 0 || color >= kMaxColors) throw UsageError("palette_color: colour id out of range");
  return kPalette[static_cast<std::size_t>(color)];
}

SyntheticFactorDataset build_synthetic_factor_dataset(int shapes, int colors,
                                                      std::vector<std::pair<int, int>> holdout,
                                                      std::uint64_t seed, int samples_per_combo,
                                                      int image_size) {
  if (shapes < 1 || shapes > kMaxShapes) throw ConfigError("synthetic dataset: shapes must be in [1, 6]");
  if (colors < 1 || colors > kMaxColors) throw ConfigError("synthetic dataset: colors must be in [1, 6]");
  if (samples_per_combo < 1) throw ConfigError("synthetic dataset: samples_per_combo must be >= 1");
  if (image_size < kTemplate + 2) throw ConfigError("synthetic dataset: image_size must be >= 11");
  std::set<std::pair<int, int>> held;
  for (const auto& [s, c] : holdout) {
    if (s < 0 || s >= shapes || c < 0 || c >= colors) {
      throw ConfigError("synthetic dataset: holdout pair (" + std::to_string(s) + "," +
                        std::to_string(c) + ") is out of range");
    }
    held.insert({s, c});
  }
  if (static_cast<int>(held.size()) >= shapes * colors) {
    throw ConfigError("synthetic dataset: holdout covers every (shape, colour) combination");
  }
  SyntheticFactorDataset d;
  d.shapes = shapes;
  d.colors = colors;
  d.image_size = image_size;
  d.holdout.assign(held.begin(), held.end());

  const int train_combos = shapes * colors - static_cast<int>(held.size());
  const int val_per_combo = std::max(5, samples_per_combo / 4);
  d.train_images.resize(train_combos * samples_per_combo, d.input_dim());
  d.validation_images.resize(train_combos * val_per_combo, d.input_dim());
  d.test_images.resize(static_cast<Eigen::Index>(held.size()) * samples_per_combo, d.input_dim());

  Rng rng(seed);
  const int max_shift = image_size - kTemplate;
  const int centre = max_shift / 2;
  std::uniform_int_distribution<int> jitter(std::max(0, centre - 2), std::min(max_shift, centre + 2));
  std::uniform_real_distribution<double> bright(0.75, 1.0);
  Eigen::Index tr = 0, va = 0, te = 0;
  for (int s = 0; s < shapes; ++s) {
    for (int c = 0; c < colors; ++c) {
      const bool is_held = held.count({s, c}) != 0;
      const int n = samples_per_combo;
      for (int i = 0; i < n; ++i) {
        const int dr = jitter(rng);
        const int dc = jitter(rng);
        const double b = bright(rng);
        if (is_held) {
          draw(d.test_images, te++, image_size, s, c, dr, dc, b);
          d.test_labels.push_back({s, c});
        } else {
          draw(d.train_images, tr++, image_size, s, c, dr, dc, b);
          d.train_labels.push_back({s, c});
        }
      }
      if (!is_held) {
        for (int i = 0; i < val_per_combo; ++i) {
          const int dr = jitter(rng);
          const int dc = jitter(rng);
          draw(d.validation_images, va++, image_size, s, c, dr, dc, bright(rng));
          d.validation_labels.push_back({s, c});
        }
      }
    }
  }
  return d;
}

namespace {

Vector shape_feature(std::span<const double> img, int size) {
  Vector fg(size * size);
  double mass = 0.0, cy = 0.0, cx = 0.0;
  for (int p = 0; p < size * size; ++p) {
    const double v = std::max({img[static_cast<std::size_t>(3 * p)], img[static_cast<std::size_t>(3 * p + 1)],
                               img[static_cast<std::size_t>(3 * p + 2)], 0.0});
    fg[p] = v;
    mass += v;
    cy += v * (p / size);
    cx += v * (p % size);
  }
  Vector out = Vector::Zero(size * size);
  if (mass <= 1e-9) return out;
  const double peak = fg.maxCoeff();
  const int sy = static_cast<int>(std::lround(cy / mass - (size - 1) / 2.0));
  const int sx = static_cast<int>(std::lround(cx / mass - (size - 1) / 2.0));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int oy = y - sy;
      const int ox = x - sx;
      if (oy < 0 || oy >= size || ox < 0 || ox >= size) continue;
      out[oy * size + ox] = fg[y * size + x] / peak;
    }
  }
  return out;
}

Vector color_feature(std::span<const double> img, int size) {
  Vector rgb = Vector::Zero(3);
  double w_sum = 0.0;
  for (int p = 0; p < size * size; ++p) {
    const double r = std::max(0.0, img[static_cast<std::size_t>(3 * p)]);
    const double g = std::max(0.0, img[static_cast<std::size_t>(3 * p + 1)]);
    const double b = std::max(0.0, img[static_cast<std::size_t>(3 * p + 2)]);
    const double w = std::max({r, g, b});
    rgb += w * Vector{{r, g, b}};
    w_sum += w;
  }
  if (w_sum <= 1e-9) return rgb;
  rgb /= w_sum;
  const double peak = rgb.maxCoeff();
  return peak > 1e-9 ? Vector(rgb / peak) : rgb;
}

int nearest_row(const DenseMatrix& centroids, const Vector& f) {
  int best = 0;
  double best_d = 0.0;
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k).transpose() - f).squaredNorm();
    if (k == 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

std::span<const double> row_span(const DenseMatrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

FactorProbe FactorProbe::fit(const SyntheticFactorDataset& data) {
  FactorProbe p;
  p.image_size_ = data.image_size;
  const int n2 = data.image_size * data.image_size;
  p.shape_centroids_ = DenseMatrix::Zero(data.shapes, n2);
  p.color_centroids_ = DenseMatrix::Zero(data.colors, 3);
  std::vector<double> shape_n(static_cast<std::size_t>(data.shapes), 0.0);
  std::vector<double> color_n(static_cast<std::size_t>(data.colors), 0.0);
  for (Eigen::Index i = 0; i < data.train_images.rows(); ++i) {
    const auto [s, c] = data.train_labels[static_cast<std::size_t>(i)];
    const auto img = row_span(data.train_images, i);
    p.shape_centroids_.row(s) += shape_feature(img, data.image_size).transpose();
    p.color_centroids_.row(c) += color_feature(img, data.image_size).transpose();
    shape_n[static_cast<std::size_t>(s)] += 1.0;
    color_n[static_cast<std::size_t>(c)] += 1.0;
  }
  for (int s = 0; s < data.shapes; ++s) {
    if (shape_n[static_cast<std::size_t>(s)] > 0) p.shape_centroids_.row(s) /= shape_n[static_cast<std::size_t>(s)];
  }
  for (int c = 0; c < data.colors; ++c) {
    if (color_n[static_cast<std::size_t>(c)] > 0) p.color_centroids_.row(c) /= color_n[static_cast<std::size_t>(c)];
  }
  return p;
}

int FactorProbe::classify_shape(std::span<const double> image) const {
  // Centre-of-mass alignment can be off by a pixel, so each centroid is
  // compared at the best of a few small offsets.
  const Vector f = shape_feature(image, image_size_);
  const int size = image_size_;
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < shape_centroids_.rows(); ++k) {
    for (int sy = -kShapeSearch; sy <= kShapeSearch; ++sy) {
      for (int sx = -kShapeSearch; sx <= kShapeSearch; ++sx) {
        double d = 0.0;
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            const int oy = y + sy;
            const int ox = x + sx;
            const double v = oy < 0 || oy >= size || ox < 0 || ox >= size ? 0.0 : f[oy * size + ox];
            const double diff = shape_centroids_(k, y * size + x) - v;
            d += diff * diff;
          }
        }
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
    }
  }
  return best;
}

int FactorProbe::classify_color(std::span<const double> image) const {
  return nearest_row(color_centroids_, color_feature(image, image_size_));
}

FactorDemoReport evaluate_factor_demo(const EncoderDecoder& model,
                                      const SyntheticFactorDataset& data) {
  if (!model.bottleneck() || model.vq_config().factors != 2) {
    throw UsageError("factor demo needs a bottlenecked model with G = 2");
  }
  if (data.test_images.rows() == 0) throw UsageError("factor demo: no held-out test images");
  const auto probe = FactorProbe::fit(data);
  FactorDemoReport rep;
  rep.train_combo_mse = reconstruction_mse(model, data.validation_images);

  std::array<std::array<double, 2>, 2> flips{};
  std::vector<FactorDemoPairRow> rows;
  std::vector<double> counts;
  double mse_sum = 0.0;
  const auto n = data.test_images.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto img = row_span(data.test_images, i);
    const auto [s, c] = data.test_labels[static_cast<std::size_t>(i)];
    const Vector full = model.reconstruct(img);
    const double mse = (full - Eigen::Map<const Vector>(img.data(), static_cast<Eigen::Index>(img.size()))).squaredNorm() /
                       static_cast<double>(img.size());
    mse_sum += mse;
    const std::span<const double> full_span(full.data(), static_cast<std::size_t>(full.size()));
    const int shape_full = probe.classify_shape(full_span);
    const int color_full = probe.classify_color(full_span);
    for (int g = 0; g < 2; ++g) {
      const std::array<int, 1> groups{g};
      const Vector abl = model.factor_ablation_reconstruct(img, groups);
      const std::span<const double> abl_span(abl.data(), static_cast<std::size_t>(abl.size()));
      flips[static_cast<std::size_t>(g)][0] += probe.classify_shape(abl_span) != shape_full ? 1.0 : 0.0;
      flips[static_cast<std::size_t>(g)][1] += probe.classify_color(abl_span) != color_full ? 1.0 : 0.0;
    }
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const FactorDemoPairRow& r) { return r.shape == s && r.color == c; });
    if (it == rows.end()) {
      rows.push_back({s, c, 0.0, 0.0, 0.0});
      counts.push_back(0.0);
      it = rows.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - rows.begin());
    it->mse += mse;
    it->shape_accuracy += shape_full == s ? 1.0 : 0.0;
    it->color_accuracy += color_full == c ? 1.0 : 0.0;
    counts[k] += 1.0;
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].mse /= counts[k];
    rows[k].shape_accuracy /= counts[k];
    rows[k].color_accuracy /= counts[k];
  }
  rep.pairs = std::move(rows);
  rep.heldout_mse = mse_sum / static_cast<double>(n);
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t a = 0; a < 2; ++a) rep.flip_rate[g][a] = flips[g][a] / static_cast<double>(n);
    rep.specialization[g] = rep.flip_rate[g][1] > rep.flip_rate[g][0] ? 1 : 0;
  }
  rep.distinct_specialization = rep.specialization[0] != rep.specialization[1];
  return rep;
}

}  // namespace dgrl::repr
