#include "dgrl/errors.hpp"
#include "dgrl/repr.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace dgrl;
using namespace dgrl::repr;

namespace {

DenseMatrix random_batch(int rows, int cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

EncoderDecoder small_model(int input, int latent, int factors, int codes, Rng& rng, bool bottleneck = true) {
  PretrainConfig pc;
  pc.latent_dim = latent;
  pc.hidden = 8;
  pc.bottleneck = bottleneck;
  vq::VqConfig vc;
  vc.factors = factors;
  vc.codebook_size = codes;
  auto m = EncoderDecoder::create(input, pc, vc, rng);
  std::normal_distribution<double> nd;
  nn::DenseMatrix book(codes, latent / factors);
  for (Eigen::Index i = 0; i < book.size(); ++i) book.data()[i] = nd(rng);
  m.mutable_codebook() = vq::Codebook::from_codes(book, 0.99);
  m.mark_trained();
  return m;
}

std::vector<double> row(const DenseMatrix& m, Eigen::Index r) {
  return {m.row(r).data(), m.row(r).data() + m.cols()};
}

}  // namespace

TEST_CASE("pretrain config validation") {
  CHECK_NOTHROW(PretrainConfig{}.validate());
  PretrainConfig c;
  c.latent_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PretrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(PretrainConfig{}.hidden == 256);
  CHECK(PretrainConfig{}.latent_dim == 64);
}

TEST_CASE("encoding is deterministic and shape checked") {
  Rng rng(1);
  const auto m = small_model(12, 6, 3, 5, rng);
  const auto x = random_batch(2, 12, rng);
  const auto a = row(x, 0);
  CHECK(m.encode(a) == m.encode(a));
  const auto copy = a;
  CHECK(m.encode(copy) == m.encode(a));
  CHECK(m.encode(a).allFinite());
  std::vector<double> wrong(11, 0.0);
  CHECK_THROWS_AS(m.encode(wrong), UsageError);

  Rng r1(5), r2(5);
  const auto m1 = small_model(12, 6, 3, 5, r1);
  const auto m2 = small_model(12, 6, 3, 5, r2);
  CHECK(m1.encode(a) == m2.encode(a));
}

TEST_CASE("composite loss gradient matches the straight-through surrogate") {
  Rng rng(2);
  const auto model = small_model(10, 6, 3, 4, rng);
  const auto batch = random_batch(3, 10, rng);
  const auto loss = autoencoder_loss(model, batch, true);
  const double beta = model.vq_config().beta;
  const int g = model.vq_config().factors;

  // Selected codes frozen at the current parameters.
  const DenseMatrix ze0 = model.encoder().forward(batch);
  DenseMatrix zq0 = ze0;
  for (Eigen::Index r = 0; r < ze0.rows(); ++r) zq0.row(r) = model.quantize(ze0.row(r).transpose()).z_q.transpose();

  // Forward value of the surrogate: decoder sees z_e + (z_q* - z_e*), the
  // commitment compares z_e with z_q*.
  auto surrogate = [&](const nn::Mlp& enc, const nn::Mlp& dec) {
    const DenseMatrix ze = enc.forward(batch);
    const DenseMatrix recon = dec.forward(DenseMatrix(ze + (zq0 - ze0)));
    double mse = (recon - batch).squaredNorm() / static_cast<double>(batch.size());
    double commit = 0;
    for (Eigen::Index r = 0; r < ze.rows(); ++r) commit += beta / g * (ze.row(r) - zq0.row(r)).squaredNorm();
    return mse + commit / static_cast<double>(ze.rows());
  };
  CHECK(surrogate(model.encoder(), model.decoder()) == doctest::Approx(loss.total).epsilon(1e-12));

  const auto enc_params = model.encoder().flat_params();
  const auto enc_report = nn::finite_diff_check(
      [&](std::span<const double> p) {
        nn::Mlp e = model.encoder();
        e.set_flat_params(p);
        return surrogate(e, model.decoder());
      },
      enc_params, loss.encoder_grads.flat(), 1e-4);
  CHECK_MESSAGE(enc_report.passed, enc_report.message);

  const auto dec_params = model.decoder().flat_params();
  const auto dec_report = nn::finite_diff_check(
      [&](std::span<const double> p) {
        nn::Mlp d = model.decoder();
        d.set_flat_params(p);
        return surrogate(model.encoder(), d);
      },
      dec_params, loss.decoder_grads.flat(), 1e-4);
  CHECK_MESSAGE(dec_report.passed, dec_report.message);
  CHECK(loss.assignments.size() == 9u);
}

TEST_CASE("factor ablation") {
  Rng rng(3);
  const auto m = small_model(12, 6, 3, 5, rng);
  const auto x = random_batch(4, 12, rng);
  const auto a = row(x, 0);
  const auto b = row(x, 1);
  CHECK(m.factor_ablation_reconstruct(a, std::vector<int>{}) == m.reconstruct(a));
  const std::vector<int> all{0, 1, 2};
  const Vector za = m.factor_ablation_reconstruct(a, all);
  const Vector zb = m.factor_ablation_reconstruct(b, all);
  CHECK(za == zb);
  CHECK(za == m.decode(Vector::Zero(6)));
  CHECK_THROWS_AS(m.factor_ablation_reconstruct(a, std::vector<int>{3}), UsageError);
  CHECK_THROWS_AS(m.factor_ablation_reconstruct(a, std::vector<int>{-1}), UsageError);
}

TEST_CASE("a single sample is memorised") {
  Rng rng(4);
  const auto x = random_batch(1, 12, rng);
  PretrainConfig pc;
  pc.latent_dim = 8;
  pc.hidden = 32;
  pc.epochs = 1500;
  pc.batch_size = 1;
  vq::VqConfig vc;
  vc.factors = 2;
  vc.codebook_size = 16;
  const auto res = pretrain(x, pc, vc);
  CHECK(res.model.trained());
  CHECK(reconstruction_mse(res.model, x) < 1e-3);
}

TEST_CASE("empty datasets and NaN inputs are rejected") {
  PretrainConfig pc;
  pc.latent_dim = 4;
  pc.hidden = 4;
  vq::VqConfig vc;
  vc.factors = 2;
  CHECK_THROWS_AS(pretrain(DenseMatrix(0, 5), pc, vc), UsageError);
  DenseMatrix bad = DenseMatrix::Zero(4, 5);
  bad(2, 3) = std::nan("");
  try {
    pretrain(bad, pc, vc);
    FAIL("expected TrainingFault");
  } catch (const TrainingFault& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 0") != std::string::npos);
    CHECK(msg.find("batch 0") != std::string::npos);
  }
}

TEST_CASE("gridworld pretraining: loss curve, compression and distinct codes") {
  const auto maze = env::build_maze("loop");
  Rng rng(7);
  const auto corpus = collect_random_rollouts(maze, 3000, 20, 100, rng);
  CHECK(corpus.rows() == 3000);
  CHECK(corpus.cols() == 1200);

  PretrainConfig pc;
  pc.epochs = 12;
  pc.seed = 7;
  vq::VqConfig vc;
  const auto res = pretrain(corpus, pc, vc);

  // Three-epoch trailing average never rises.
  std::vector<double> smooth;
  for (std::size_t i = 2; i < res.curve.size(); ++i) {
    smooth.push_back((res.curve[i].total + res.curve[i - 1].total + res.curve[i - 2].total) / 3.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] <= smooth[i - 1]);

  Rng init_rng(7);
  const auto untrained = EncoderDecoder::create(1200, pc, vc, init_rng);
  PretrainConfig plain = pc;
  plain.bottleneck = false;
  Rng plain_rng(7);
  const auto fresh = EncoderDecoder::create(1200, plain, vc, plain_rng);
  const double before = reconstruction_mse(fresh, corpus);
  const double after = reconstruction_mse(res.model, corpus);
  CHECK(untrained.latent_dim() == 64);
  CHECK(after * 10.0 <= before);

  int pairs = 0, distinct = 0;
  std::vector<std::vector<int>> codes;
  for (const auto c : maze.floor_cells()) {
    env::GridState s;
    s.agent = c;
    s.goal = c;
    const auto obs = env::downsample(env::render_pixels(maze, s, env::RenderMode::goal), 20);
    codes.push_back(res.model.encode_quantized(obs).factor_indices);
  }
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      ++pairs;
      distinct += codes[i] != codes[j];
    }
  }
  CHECK(static_cast<double>(distinct) >= 0.95 * pairs);
}

TEST_CASE("the bottleneck does not beat the plain autoencoder") {
  const auto maze = env::build_maze("spiral");
  Rng rng(8);
  const auto corpus = collect_random_rollouts(maze, 1500, 20, 100, rng);
  PretrainConfig pc;
  pc.epochs = 8;
  pc.seed = 8;
  vq::VqConfig vc;
  const auto with = pretrain(corpus, pc, vc);
  pc.bottleneck = false;
  const auto without = pretrain(corpus, pc, vc);
  CHECK(reconstruction_mse(with.model, corpus) >= 0.95 * reconstruction_mse(without.model, corpus));
}

TEST_CASE("checkpoint round trip of a trained model") {
  Rng rng(9);
  const auto m = small_model(12, 6, 3, 5, rng);
  io::CheckpointWriter w;
  m.save(w);
  const auto back = EncoderDecoder::load(io::CheckpointReader::from_bytes(w.bytes()));
  const auto x = random_batch(1, 12, rng);
  CHECK(back.trained());
  CHECK(back.reconstruct(row(x, 0)) == m.reconstruct(row(x, 0)));
  CHECK(back.vq_config().factors == 3);
}

TEST_CASE("synthetic dataset counts and determinism") {
  const auto d = build_synthetic_factor_dataset(3, 3, {{2, 0}}, 11, 10);
  std::set<std::pair<int, int>> train(d.train_labels.begin(), d.train_labels.end());
  std::set<std::pair<int, int>> test(d.test_labels.begin(), d.test_labels.end());
  CHECK(train.size() == 8u);
  CHECK(test.size() == 1u);
  CHECK(test.count({2, 0}) == 1);
  CHECK(train.count({2, 0}) == 0);
  CHECK(d.train_images.rows() == 80);
  CHECK(d.test_images.rows() == 10);

  const auto again = build_synthetic_factor_dataset(3, 3, {{2, 0}}, 11, 10);
  CHECK(again.train_images == d.train_images);
  CHECK(again.test_images == d.test_images);

  std::vector<std::pair<int, int>> every;
  for (int s = 0; s < 2; ++s) for (int c = 0; c < 2; ++c) every.push_back({s, c});
  CHECK_THROWS_AS(build_synthetic_factor_dataset(2, 2, every, 0), ConfigError);
  CHECK_THROWS_AS(build_synthetic_factor_dataset(2, 2, {{2, 0}}, 0), ConfigError);
}

TEST_CASE("each raster's dominant hue matches its colour label") {
  const auto d = build_synthetic_factor_dataset(6, 6, {{0, 0}}, 12, 4);
  const int px = d.image_size * d.image_size;
  for (Eigen::Index i = 0; i < d.train_images.rows(); ++i) {
    // Sum of the brightest pixels per channel, against the palette by
    // cosine similarity.
    double rgb[3] = {0, 0, 0};
    for (int p = 0; p < px; ++p) {
      const double r = d.train_images(i, p * 3), g = d.train_images(i, p * 3 + 1), b = d.train_images(i, p * 3 + 2);
      if (std::max({r, g, b}) > 0.3) {
        rgb[0] += r;
        rgb[1] += g;
        rgb[2] += b;
      }
    }
    int best = -1;
    double best_cos = -2;
    for (int c = 0; c < 6; ++c) {
      const auto pc = palette_color(c);
      const double dot = rgb[0] * pc[0] + rgb[1] * pc[1] + rgb[2] * pc[2];
      const double cs = dot / (std::sqrt(rgb[0] * rgb[0] + rgb[1] * rgb[1] + rgb[2] * rgb[2]) *
                               std::sqrt(pc[0] * pc[0] + pc[1] * pc[1] + pc[2] * pc[2]));
      if (cs > best_cos) {
        best_cos = cs;
        best = c;
      }
    }
    CHECK(best == d.train_labels[static_cast<std::size_t>(i)].second);
  }
}

TEST_CASE("the probes recover generating labels on clean images") {
  const auto d = build_synthetic_factor_dataset(5, 5, {{0, 1}, {1, 3}}, 13, 10);
  const auto probe = FactorProbe::fit(d);
  int shape_ok = 0, color_ok = 0;
  for (Eigen::Index i = 0; i < d.test_images.rows(); ++i) {
    const auto img = row(d.test_images, i);
    shape_ok += probe.classify_shape(img) == d.test_labels[static_cast<std::size_t>(i)].first;
    color_ok += probe.classify_color(img) == d.test_labels[static_cast<std::size_t>(i)].second;
  }
  CHECK(shape_ok == d.test_images.rows());
  CHECK(color_ok == d.test_images.rows());
}
