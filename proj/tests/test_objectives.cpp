#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gaslt/gradcheck.hpp"
#include "gaslt/objectives.hpp"
#include "gaslt/ops.hpp"

using namespace gaslt;
using namespace gaslt::objectives;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("label smoothed cross entropy") {
  SUBCASE("hand value at V=3, logits [2,0,0], eps 0.4") {
    Tensor logits({1, 3}, {2, 0, 0});
    const std::vector<int> gold{0};
    const double z = std::exp(2.0) + 2.0;
    const double expect = -(0.6 * (2.0 - std::log(z)) +
                            0.2 * (0.0 - std::log(z)) +
                            0.2 * (0.0 - std::log(z)));
    const double got = label_smoothed_ce(logits, gold, 0.4, -1).item();
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    CHECK(got == doctest::Approx(1.0395447662219).epsilon(1e-10));
  }
  SUBCASE("eps 0 is plain cross entropy") {
    Tensor logits({1, 4}, {0.3, -1.0, 2.0, 0.1});
    const std::vector<int> gold{2};
    double z = 0.0;
    for (double v : logits.values()) z += std::exp(v);
    CHECK(label_smoothed_ce(logits, gold, 0.0, -1).item() ==
          doctest::Approx(std::log(z) - 2.0).epsilon(1e-12));
  }
  SUBCASE("uniform logits always cost log V") {
    for (double eps : {0.0, 0.2, 0.4}) {
      Tensor logits({2, 5}, std::vector<double>(10, 0.7));
      const std::vector<int> gold{3, 1};
      CHECK(label_smoothed_ce(logits, gold, eps, -1).item() ==
            doctest::Approx(std::log(5.0)).epsilon(1e-12));
    }
  }
  SUBCASE("pad rows are excluded from the average") {
    Tensor logits({3, 3}, {2, 0, 0, 9, 9, 9, 2, 0, 0});
    const std::vector<int> all{1, 0, 1};    // middle row is pad (id 0)
    const std::vector<int> one{1};
    Tensor single({1, 3}, {2, 0, 0});
    CHECK(label_smoothed_ce(logits, all, 0.4, 0).item() ==
          doctest::Approx(label_smoothed_ce(single, one, 0.4, 0).item()));
  }
  SUBCASE("all-pad target rejected") {
    Tensor logits({2, 3}, std::vector<double>(6, 0.0));
    const std::vector<int> pads{0, 0};
    CHECK_THROWS_AS(label_smoothed_ce(logits, pads, 0.4, 0), ContractError);
  }
  SUBCASE("invalid smoothing and targets rejected") {
    Tensor logits({1, 3}, {1, 2, 3});
    const std::vector<int> gold{1};
    CHECK_THROWS_AS(label_smoothed_ce(logits, gold, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(label_smoothed_ce(logits, gold, -0.1, 0), ConfigError);
    const std::vector<int> oov{7};
    CHECK_THROWS_AS(label_smoothed_ce(logits, oov, 0.4, 0), ContractError);
  }
  SUBCASE("gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto point = randn(4 * 6, 200 + seed);
      const std::vector<int> gold{2, 0, 5, 1};  // row 1 is pad
      Tensor logits({4, 6}, point, true);
      label_smoothed_ce(logits, gold, 0.4, 0).backward();

      auto fd = gradcheck::finite_diff_grad(
          [&](std::span<const double> x) {
            Tensor probe({4, 6}, {x.begin(), x.end()});
            return label_smoothed_ce(probe, gold, 0.4, 0).item();
          },
          point);
      CHECK(gradcheck::max_rel_error(logits.grad(), fd) < 1e-6);
    }
  }
}

TEST_CASE("kt loss") {
  Tensor a({3}, {1, 2, 3});
  Tensor b({3}, {-2, 1, 0});  // orthogonal to a
  CHECK(kt_loss(a, a, 1.0).item() == doctest::Approx(0.0));
  CHECK(kt_loss(a, b, 0.0).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kt_loss(a, b, 1.0).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(kt_loss(a, Tensor::zeros({3}), 1.0), ContractError);

  SUBCASE("bounded by 4 and symmetric") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      Tensor x({4}, randn(4, 300 + seed));
      Tensor y({4}, randn(4, 400 + seed));
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(-1, 1);
      const double s = u(rng);
      const double lhs = kt_loss(x, y, s).item();
      CHECK(lhs >= 0.0);
      CHECK(lhs <= 4.0);
      CHECK(lhs == doctest::Approx(kt_loss(y, x, s).item()));
    }
  }

  SUBCASE("minimizing with S=1 drives cosine toward 1") {
    Tensor x({4}, randn(4, 500), true);
    Tensor y({4}, randn(4, 501), true);
    for (int step = 0; step < 1500; ++step) {
      x.zero_grad();
      y.zero_grad();
      kt_loss(x, y, 1.0).backward();
      for (std::size_t i = 0; i < 4; ++i) {
        x.mutable_values()[i] -= 0.5 * x.grad()[i];
        y.mutable_values()[i] -= 0.5 * y.grad()[i];
      }
    }
    CHECK(ops::cosine_similarity(x, y).item() > 0.999);
  }
}

TEST_CASE("kt loss batch") {
  DenseMatrix s(3, 3);
  for (std::size_t i = 0; i < 3; ++i) s.at(i, i) = 1.0;
  s.at(0, 1) = s.at(1, 0) = 0.5;
  s.at(0, 2) = s.at(2, 0) = -0.25;
  s.at(1, 2) = s.at(2, 1) = 0.0;

  std::vector<Tensor> es;
  for (std::uint64_t i = 0; i < 3; ++i) es.emplace_back(Shape{4}, randn(4, 600 + i));

  double expect = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) expect += kt_loss(es[i], es[j], s.at(i, j)).item();
  expect /= 6.0;
  CHECK(kt_loss_batch(es, s).item() == doctest::Approx(expect).epsilon(1e-12));

  // fewer than two embeddings: no pairs, zero loss
  DenseMatrix one(1, 1);
  one.at(0, 0) = 1.0;
  CHECK(kt_loss_batch({es[0]}, one).item() == 0.0);

  DenseMatrix bad(2, 2);
  CHECK_THROWS_AS(kt_loss_batch(es, bad), ShapeError);
}

TEST_CASE("total loss") {
  Tensor tr = Tensor::scalar(2.0);
  Tensor kt = Tensor::scalar(0.5);
  CHECK(total_loss(tr, kt, 1.0).item() == doctest::Approx(2.5));
  CHECK(total_loss(tr, kt, 0.0).item() == doctest::Approx(2.0));
  CHECK_THROWS_AS(total_loss(tr, kt, -1.0), ConfigError);

  double prev = 0.0;
  for (double lam : {0.1, 0.5, 1.0, 1.5, 2.0}) {
    const double t = total_loss(tr, kt, lam).item();
    CHECK(t > prev);
    prev = t;
  }
}
