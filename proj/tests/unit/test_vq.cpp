#include "dgrl/errors.hpp"
#include "dgrl/vq.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

using namespace dgrl;
using namespace dgrl::vq;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Codebook book(std::initializer_list<std::initializer_list<double>> rows, double eta = 0.99) {
  DenseMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double x : row) m(r, c++) = x;
    ++r;
  }
  return Codebook::from_codes(m, eta);
}

Codebook random_book(int size, int dim, Rng& rng) {
  std::normal_distribution<double> nd;
  DenseMatrix m(size, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return Codebook::from_codes(m, 0.99);
}

Vector random_vec(int n, Rng& rng) {
  std::normal_distribution<double> nd;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

// Exhaustive scan with an explicit squared-distance loop.
int brute_nearest(const Vector& seg, const Codebook& cb) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cb.size(); ++j) {
    double d = 0;
    for (int k = 0; k < cb.seg_dim(); ++k) {
      const double diff = seg[k] - cb.codes()(j, k);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

VqConfig cfg(int g, double beta = 0.25) {
  VqConfig c;
  c.factors = g;
  c.beta = beta;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(VqConfig{}.validate());
  VqConfig c;
  c.factors = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = VqConfig{};
  c.codebook_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = VqConfig{};
  c.beta = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = VqConfig{};
  c.eta = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(VqConfig{}.factors == 16);
  CHECK(VqConfig{}.codebook_size == 256);
}

TEST_CASE("split and concatenate") {
  const auto segs = split_segments(vec({1, 2, 3, 4}), 2);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0] == vec({1, 2}));
  CHECK(segs[1] == vec({3, 4}));
  const auto one = split_segments(vec({5}), 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == vec({5}));

  Rng rng(3);
  for (int g : {1, 2, 3, 4, 6, 12}) {
    const Vector z = random_vec(12, rng);
    CHECK(concat_segments(split_segments(z, g)) == z);
  }
}

TEST_CASE("indivisible latent names m and G") {
  try {
    split_segments(vec({1, 2, 3}), 2);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("m=3") != std::string::npos);
    CHECK(msg.find("G=2") != std::string::npos);
  }
}

TEST_CASE("nearest code examples") {
  Rng rng(4);
  const Codebook cb = random_book(8, 3, rng);
  const Vector member = cb.code(3);
  const auto hit = nearest_code(std::span<const double>(member.data(), 3), cb);
  CHECK(hit.index == 3);
  CHECK(hit.sq_distance == 0.0);

  const Codebook two = book({{0, 0}, {1, 1}});
  const Vector s = vec({0.1, -0.2});
  CHECK(nearest_code(std::span<const double>(s.data(), 2), two).index == brute_nearest(s, two));
  CHECK(nearest_code(std::span<const double>(s.data(), 2), two).index == 0);

  const Codebook ties = book({{9, 9}, {8, 8}, {1, 0}, {7, 7}, {6, 6}, {-1, 0}});
  const Vector origin = vec({0, 0});
  CHECK(nearest_code(std::span<const double>(origin.data(), 2), ties).index == 2);
}

TEST_CASE("nearest code agrees with brute force on random clouds") {
  Rng rng(5);
  const Codebook cb = random_book(64, 4, rng);
  for (int t = 0; t < 500; ++t) {
    const Vector s = random_vec(4, rng);
    CHECK(nearest_code(std::span<const double>(s.data(), 4), cb).index == brute_nearest(s, cb));
  }
}

TEST_CASE("quantize examples") {
  const Codebook cb = book({{0, 0}, {1, 1}});
  const auto q = quantize(vec({0.1, -0.2, 0.9, 1.2}), cb, cfg(2));
  CHECK(q.factor_indices == std::vector<int>{0, 1});
  CHECK(q.z_q == vec({0, 0, 1, 1}));
  // (0.25 / 2) * (0.01 + 0.04 + 0.01 + 0.04)
  CHECK(q.commitment == doctest::Approx(0.0125).epsilon(1e-12));

  const auto fixed = quantize(vec({1, 1, 0, 0}), cb, cfg(2));
  CHECK(fixed.z_q == vec({1, 1, 0, 0}));
  CHECK(fixed.commitment == 0.0);
}

TEST_CASE("idempotence, membership and tie determinism") {
  Rng rng(6);
  for (int g : {1, 2, 4, 8}) {
    const Codebook cb = random_book(32, 16 / g, rng);
    for (int t = 0; t < 50; ++t) {
      const Vector z = random_vec(16, rng);
      const auto q1 = quantize(z, cb, cfg(g));
      const auto q2 = quantize(q1.z_q, cb, cfg(g));
      CHECK(q2.factor_indices == q1.factor_indices);
      CHECK(q2.z_q == q1.z_q);
      CHECK(q2.commitment == 0.0);
      const int d = 16 / g;
      for (int i = 0; i < g; ++i) {
        const int j = q1.factor_indices[static_cast<std::size_t>(i)];
        CHECK(j >= 0);
        CHECK(j < cb.size());
        for (int k = 0; k < d; ++k) CHECK(q1.z_q[i * d + k] == cb.codes()(j, k));
      }
      const auto again = quantize(z, cb, cfg(g));
      CHECK(again.factor_indices == q1.factor_indices);
    }
  }
}

TEST_CASE("commitment loss arithmetic") {
  const std::vector<Vector> segs{vec({0, 0}), vec({0.2, 0})};
  const std::vector<Vector> codes{vec({0, 0}), vec({0, 0})};
  CHECK(commitment_loss(segs, codes, 0.25, 2) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(commitment_loss(codes, codes, 0.25, 2) == 0.0);

  const Codebook cb = book({{0, 0}, {1, 1}});
  std::vector<QuantizedLatent> batch{quantize(vec({0.1, 0, 1, 1}), cb, cfg(2)),
                                     quantize(vec({0.3, 0, 1, 1}), cb, cfg(2))};
  const double expect = 0.5 * (0.125 * 0.01 + 0.125 * 0.09);
  CHECK(mean_commitment_loss(batch) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("straight-through and commitment gradients") {
  const Vector up = vec({1, 2, 3, 4});
  CHECK(straight_through_grad(up) == up);

  Rng rng(7);
  const Codebook cb = random_book(16, 3, rng);
  const int g = 4;
  const double beta = 0.25;
  for (int t = 0; t < 20; ++t) {
    const Vector z = random_vec(12, rng);
    const auto q = quantize(z, cb, cfg(g, beta));
    const Vector grad = commitment_grad(q, beta, g);
    // Zero upstream: commitment only, 2 (beta / G) (z_e - z_q).
    const Vector expect = (2.0 * beta / g) * (z - q.z_q);
    CHECK((grad - expect).cwiseAbs().maxCoeff() < 1e-15);

    // Central differences with the selected codes frozen.
    const std::vector<int> idx = q.factor_indices;
    auto loss = [&](std::span<const double> v) {
      double s = 0;
      for (int i = 0; i < g; ++i) {
        for (int k = 0; k < 3; ++k) {
          const double d = v[static_cast<std::size_t>(i * 3 + k)] - cb.codes()(idx[static_cast<std::size_t>(i)], k);
          s += d * d;
        }
      }
      return beta / g * s;
    };
    std::vector<double> zp(z.data(), z.data() + z.size());
    std::vector<double> ga(grad.data(), grad.data() + grad.size());
    const auto rep = nn::finite_diff_check(loss, zp, ga, 1e-4);
    CHECK_MESSAGE(rep.passed, rep.message);
  }
}

TEST_CASE("ema update extremes and arithmetic") {
  {
    Codebook cb = book({{1.0}, {2.0}}, 1.0);
    const DenseMatrix before = cb.codes();
    ema_update(cb, std::vector<Assignment>{{vec({5.0}), 0}});
    CHECK(cb.codes() == before);
  }
  {
    Codebook cb = book({{1.0, 1.0}, {2.0, 2.0}}, 0.0);
    ema_update(cb, std::vector<Assignment>{{vec({0.3, -0.7}), 1}});
    CHECK(cb.codes()(1, 0) == 0.3);
    CHECK(cb.codes()(1, 1) == -0.7);
    CHECK(cb.codes()(0, 0) == 1.0);
  }
  {
    Codebook cb = book({{1.0}, {4.0}}, 0.99);
    ema_update(cb, std::vector<Assignment>{{vec({0.0}), 0}});
    CHECK(cb.codes()(0, 0) == doctest::Approx(0.99).epsilon(1e-14));
    CHECK(cb.codes()(1, 0) == 4.0);
    CHECK(cb.ema_cluster_size().minCoeff() >= 0.0);
  }
}

TEST_CASE("ema contraction is geometric at rate eta") {
  const double eta = 0.9;
  Codebook cb = book({{3.0, -1.0}}, eta);
  const Vector target = vec({0.5, 0.25});
  const std::vector<Assignment> a{{vec({0.0, 0.0}), 0}, {vec({1.0, 0.5}), 0}};
  double prev = (cb.code(0) - target).norm();
  for (int t = 0; t < 40; ++t) {
    ema_update(cb, a);
    const double err = (cb.code(0) - target).norm();
    CHECK(err == doctest::Approx(eta * prev).epsilon(1e-9));
    prev = err;
  }
}

TEST_CASE("dead code revival") {
  VqConfig c;
  c.dead_code_patience = 3;
  c.dead_code_threshold = 1e-3;
  Rng rng(8);

  Codebook active = book({{0.0}, {1.0}}, 0.5);
  for (int t = 0; t < 5; ++t) {
    ema_update(active, std::vector<Assignment>{{vec({0.0}), 0}, {vec({1.0}), 1}}, c.dead_code_threshold);
  }
  const DenseMatrix kept = active.codes();
  CHECK(revive_dead_codes(active, std::vector<Vector>{vec({9.0})}, c, rng) == 0);
  CHECK(active.codes() == kept);

  Codebook one_dead = book({{0.0}, {50.0}}, 0.5);
  for (int t = 0; t < 5; ++t) {
    ema_update(one_dead, std::vector<Assignment>{{vec({0.0}), 0}}, c.dead_code_threshold);
  }
  CHECK(revive_dead_codes(one_dead, std::vector<Vector>{vec({0.75})}, c, rng) == 1);
  CHECK(one_dead.codes()(1, 0) == 0.75);
  CHECK(one_dead.codes()(0, 0) == 0.0);

  CHECK_THROWS_AS(revive_dead_codes(one_dead, std::vector<Vector>{}, c, rng), UsageError);
}

TEST_CASE("revival raises code usage entropy after a collapse") {
  VqConfig c;
  c.factors = 1;
  c.codebook_size = 8;
  c.dead_code_patience = 5;
  Rng rng(9);
  DenseMatrix codes(8, 1);
  codes(0, 0) = 0.0;
  for (int j = 1; j < 8; ++j) codes(j, 0) = 100.0 + j;
  Codebook cb = Codebook::from_codes(codes, 0.5);

  std::uniform_real_distribution<double> u(-4.0, 4.0);
  std::vector<Vector> data;
  for (int i = 0; i < 400; ++i) data.push_back(vec({u(rng)}));
  auto usage = [&] {
    std::vector<int> idx;
    for (const auto& s : data) idx.push_back(nearest_code(std::span<const double>(s.data(), 1), cb).index);
    return idx;
  };
  auto step = [&] {
    std::vector<Assignment> a;
    for (const auto& s : data) a.push_back({s, nearest_code(std::span<const double>(s.data(), 1), cb).index});
    ema_update(cb, a, c.dead_code_threshold);
  };
  for (int t = 0; t < 10; ++t) step();
  const double collapsed = code_usage_entropy(usage(), 8);
  CHECK(collapsed == 0.0);
  CHECK(revive_dead_codes(cb, data, c, rng) == 7);
  const double revived = code_usage_entropy(usage(), 8);
  CHECK(revived > collapsed);
}

TEST_CASE("factor match fraction") {
  const std::vector<int> a{3, 7, 2, 9};
  const std::vector<int> b{0, 7, 2, 1};
  const std::vector<int> c{0, 1, 4, 5};
  CHECK(factor_match_fraction(a, a) == 1.0);
  CHECK(factor_match_fraction(a, b) == 0.5);
  CHECK(factor_match_fraction(a, c) == 0.0);
  CHECK_THROWS_AS(factor_match_fraction(a, std::vector<int>{1, 2}), UsageError);

  Rng rng(10);
  std::uniform_int_distribution<int> code(0, 3);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> x(6), y(6);
    for (auto& v : x) v = code(rng);
    for (auto& v : y) v = code(rng);
    CHECK(factor_match_fraction(x, y) == factor_match_fraction(y, x));
    CHECK((factor_match_fraction(x, y) == 1.0) == (x == y));
    std::vector<int> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> px(6), py(6);
    for (int i = 0; i < 6; ++i) {
      px[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      py[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    CHECK(factor_match_fraction(px, py) == factor_match_fraction(x, y));
  }
}

TEST_CASE("codebook initialisation from segments") {
  Rng rng(12);
  std::vector<Vector> segs;
  for (int i = 0; i < 5; ++i) segs.push_back(vec({double(i), -double(i)}));
  const Codebook cb = init_codebook_from_segments(segs, 8, 2, 0.99, rng);
  CHECK(cb.size() == 8);
  int from_data = 0;
  for (int j = 0; j < 8; ++j) {
    for (const auto& s : segs) {
      if (cb.codes()(j, 0) == s[0] && cb.codes()(j, 1) == s[1]) {
        ++from_data;
        break;
      }
    }
  }
  CHECK(from_data == 5);
  CHECK(cb.codes().allFinite());
}

TEST_CASE("code usage entropy") {
  CHECK(code_usage_entropy(std::vector<int>{1, 1, 1}, 4) == 0.0);
  CHECK(code_usage_entropy(std::vector<int>{0, 1, 2, 3}, 4) == doctest::Approx(std::log(4.0)));
}
