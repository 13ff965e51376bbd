#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gaslt/gradcheck.hpp"
#include "gaslt/ops.hpp"
#include "gaslt/tensor.hpp"

using namespace gaslt;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed,
                                  bool away_from_zero = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(away_from_zero ? 0.1 : -2.0, 2.0);
  std::bernoulli_distribution flip(0.5);
  std::vector<double> v(n);
  for (double& x : v) {
    x = mag(rng);
    if (away_from_zero && flip(rng)) x = -x;
  }
  return v;
}

// Compares backward() against the central-difference oracle for a scalar
// pipeline evaluated at `point`. `build` maps a leaf tensor to the loss.
double grad_gap(const std::function<Tensor(const Tensor&)>& build,
                const Shape& shape, const std::vector<double>& point) {
  Tensor leaf(shape, point, /*requires_grad=*/true);
  Tensor loss = build(leaf);
  loss.backward();
  const std::vector<double> analytic = leaf.grad();

  auto f = [&](std::span<const double> x) {
    Tensor probe(shape, {x.begin(), x.end()});
    return build(probe).item();
  };
  const std::vector<double> numeric =
      gradcheck::finite_diff_grad(f, point, 1e-5);
  return gradcheck::max_rel_error(analytic, numeric);
}

// Deterministic projection of an arbitrary tensor to a scalar so every output
// coordinate influences the loss with a distinct weight.
Tensor pin(const Tensor& t, std::uint64_t seed = 7) {
  Tensor w(t.shape(), random_values(t.size(), seed));
  return ops::sum_all(ops::mul(t, w));
}

}  // namespace

TEST_CASE("tensor construction and accessors") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK(t.values()[4] == 5.0);
  CHECK_FALSE(t.requires_grad());

  CHECK(Tensor::scalar(4.25).item() == 4.25);
  CHECK(Tensor::zeros({3}).values() == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3, 4}).item(), ContractError);
}

TEST_CASE("relu fixed example") {
  Tensor x({3}, {-1, 0, 2});
  CHECK(ops::relu(x).values() == std::vector<double>{0, 0, 2});
}

TEST_CASE("softmax fixed example, row sums, stabilization") {
  Tensor x({2}, {0, 0});
  auto y = ops::softmax_last_dim(x).values();
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor big({1, 3}, {1000.0, 0.0, -1000.0});
  for (double v : ops::softmax_last_dim(big).values()) {
    CHECK(std::isfinite(v));
  }

  Tensor r({4, 5}, random_values(20, 11));
  auto s = ops::softmax_last_dim(r).values();
  for (std::size_t row = 0; row < 4; ++row) {
    double sum = 0.0;
    for (std::size_t col = 0; col < 5; ++col) {
      const double v = s[row * 5 + col];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("layer_norm fixed example and row statistics") {
  Tensor x({1, 2}, {1, 3});
  Tensor gain = Tensor::ones({2});
  Tensor bias = Tensor::zeros({2});
  auto y = ops::layer_norm(x, gain, bias).values();
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));

  Tensor r({3, 8}, random_values(24, 12));
  Tensor g8 = Tensor::ones({8});
  Tensor b8 = Tensor::zeros({8});
  auto n = ops::layer_norm(r, g8, b8).values();
  for (std::size_t row = 0; row < 3; ++row) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mean += n[row * 8 + c];
    mean /= 8.0;
    for (std::size_t c = 0; c < 8; ++c) {
      const double d = n[row * 8 + c] - mean;
      var += d * d;
    }
    var /= 8.0;
    CHECK(std::fabs(mean) < 1e-7);
    CHECK(std::fabs(var - 1.0) < 1e-5);
  }

  // constant row: variance 0, eps keeps the output finite
  Tensor flat({1, 4}, {5, 5, 5, 5});
  Tensor g4 = Tensor::ones({4});
  Tensor b4 = Tensor::zeros({4});
  for (double v : ops::layer_norm(flat, g4, b4).values()) {
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("backward fixed examples") {
  SUBCASE("sum of squares") {
    Tensor x({2}, {1, 2}, true);
    ops::sum_all(ops::mul(x, x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
  }
  SUBCASE("fan-out accumulation") {
    Tensor x({1}, {1}, true);
    ops::sum_all(ops::add(x, x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
  }
  SUBCASE("shared subexpression equals expanded tree") {
    const std::vector<double> p = random_values(4, 31);
    Tensor a({4}, p, true);
    Tensor shared = ops::relu(a);
    ops::sum_all(ops::mul(shared, shared)).backward();
    const auto lhs = a.grad();

    Tensor b({4}, p, true);
    ops::sum_all(ops::mul(ops::relu(b), ops::relu(b))).backward();
    CHECK(gradcheck::max_rel_error(lhs, b.grad()) < 1e-12);
  }
  SUBCASE("softmax-then-dot composite vs finite differences") {
    const auto gap = grad_gap(
        [](const Tensor& x) {
          Tensor w({4}, {0.3, -1.1, 0.7, 2.0});
          return ops::sum_all(ops::mul(ops::softmax_last_dim(x), w));
        },
        {4}, random_values(4, 32));
    CHECK(gap < 1e-6);
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor x({2}, {1, 2}, true);
    CHECK_THROWS_AS(ops::mul(x, x).backward(), ContractError);
  }
}

TEST_CASE("finite difference oracle sanity") {
  auto square = [](std::span<const double> x) { return x[0] * x[0]; };
  const std::vector<double> at{3.0};
  CHECK(gradcheck::finite_diff_grad(square, at)[0] ==
        doctest::Approx(6.0).epsilon(1e-8));

  auto constant = [](std::span<const double>) { return 1.5; };
  CHECK(gradcheck::finite_diff_grad(constant, at)[0] ==
        doctest::Approx(0.0));
}

TEST_CASE("every primitive matches the finite-difference oracle") {
  // 100 seeded draws spread across the primitives, inputs kept away from
  // relu/max kinks.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pt = random_values(12, 1000 + seed, true);
    const Shape mat{3, 4};

    const double worst = std::max({
        grad_gap([&](const Tensor& x) {
          Tensor b({4, 2}, random_values(8, seed * 7 + 1));
          return pin(ops::matmul(x, b), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          Tensor w({5, 4}, random_values(20, seed * 7 + 2));
          Tensor b({5}, random_values(5, seed * 7 + 3));
          return pin(ops::linear(x, w, b), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          Tensor o(mat, random_values(12, seed * 7 + 4));
          return pin(ops::add(x, o), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          Tensor o(mat, random_values(12, seed * 7 + 5));
          return pin(ops::sub(ops::mul(x, o), x), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          return pin(ops::add_scalar(ops::scale(x, -1.7), 0.3), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) { return pin(ops::relu(x), seed); },
                 mat, pt),
        grad_gap([&](const Tensor& x) {
          return pin(ops::softmax_last_dim(x), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          Tensor g({4}, random_values(4, seed * 7 + 6, true));
          Tensor b({4}, random_values(4, seed * 7 + 7));
          return pin(ops::layer_norm(x, g, b), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) { return pin(ops::mean_rows(x), seed); },
                 mat, pt),
        grad_gap([&](const Tensor& x) { return pin(ops::max_rows(x), seed); },
                 mat, pt),
        grad_gap([&](const Tensor& x) { return ops::mean_all(x); }, mat, pt),
        grad_gap([&](const Tensor& x) {
          return pin(ops::transpose(x), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          return pin(ops::slice_rows(x, 1, 3), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          Tensor o({2, 4}, random_values(8, seed * 7 + 8));
          return pin(ops::concat_rows(x, o), seed);
        }, mat, pt),
        grad_gap([&](const Tensor& x) {
          Tensor o({3, 2}, random_values(6, seed * 7 + 9));
          return pin(ops::concat_cols({x, o}), seed);
        }, mat, pt),
    });
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("cosine similarity") {
  Tensor a({3}, {1, 0, 0});
  Tensor b({3}, {0, 1, 0});
  CHECK(ops::cosine_similarity(a, b).item() == doctest::Approx(0.0));
  CHECK(ops::cosine_similarity(a, a).item() == doctest::Approx(1.0));
  CHECK_THROWS_AS(ops::cosine_similarity(a, Tensor::zeros({3})),
                  ContractError);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto gap = grad_gap(
        [&](const Tensor& x) {
          Tensor other({5}, random_values(5, seed + 400, true));
          return ops::cosine_similarity(x, other);
        },
        {5}, random_values(5, seed + 500, true));
    CHECK(gap < 1e-5);
  }
}

TEST_CASE("batch norm train/eval semantics") {
  Tensor gamma({3}, {1.0, 2.0, 0.5});
  Tensor beta({3}, {0.0, -1.0, 0.25});
  ops::BatchNormState state(3);

  Tensor x({4, 3}, random_values(12, 60));
  Tensor y = ops::batch_norm(x, gamma, beta, state, /*training=*/true);

  // per-column statistics of the normalized output must match gain/bias
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < 4; ++r) mean += y.values()[r * 3 + c];
    mean /= 4.0;
    for (std::size_t r = 0; r < 4; ++r) {
      const double d = y.values()[r * 3 + c] - mean;
      var += d * d;
    }
    var /= 4.0;
    CHECK(mean == doctest::Approx(beta.values()[c]).epsilon(1e-9));
    CHECK(var == doctest::Approx(gamma.values()[c] * gamma.values()[c])
                     .epsilon(1e-4));
  }

  // running stats: (1-m)*old + m*batch, batch variance unbiased
  double col0_mean = 0.0;
  for (std::size_t r = 0; r < 4; ++r) col0_mean += x.values()[r * 3];
  col0_mean /= 4.0;
  double col0_var = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    const double d = x.values()[r * 3] - col0_mean;
    col0_var += d * d;
  }
  col0_var /= 3.0;
  CHECK(state.running_mean[0] == doctest::Approx(0.1 * col0_mean));
  CHECK(state.running_var[0] ==
        doctest::Approx(0.9 * 1.0 + 0.1 * col0_var));

  // eval mode uses the running stats and ignores the batch
  Tensor single({1, 3}, {10.0, -3.0, 0.5});
  Tensor e = ops::batch_norm(single, gamma, beta, state, /*training=*/false);
  const double expect0 = (10.0 - state.running_mean[0]) /
                             std::sqrt(state.running_var[0] + 1e-5) *
                             1.0 +
                         0.0;
  CHECK(e.values()[0] == doctest::Approx(expect0).epsilon(1e-12));

  // batch of one in train mode: variance undefined
  ops::BatchNormState fresh(3);
  CHECK_THROWS_AS(ops::batch_norm(single, gamma, beta, fresh, true),
                  ContractError);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto gap = grad_gap(
        [&](const Tensor& in) {
          Tensor g({3}, random_values(3, seed + 600, true));
          Tensor b({3}, random_values(3, seed + 601));
          ops::BatchNormState s(3);
          return pin(ops::batch_norm(in, g, b, s, true), seed);
        },
        {5, 3}, random_values(15, seed + 602));
    CHECK(gap < 1e-5);
  }
}

TEST_CASE("dropout") {
  Tensor x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  std::mt19937_64 rng(99);

  // eval mode and p=0 are identities
  CHECK(ops::dropout(x, 0.5, false, &rng).values() == x.values());
  CHECK(ops::dropout(x, 0.0, true, &rng).values() == x.values());

  std::mt19937_64 r1(7), r2(7);
  auto a = ops::dropout(x, 0.5, true, &r1).values();
  auto b = ops::dropout(x, 0.5, true, &r2).values();
  CHECK(a == b);  // same seed, same mask
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool kept = a[i] != 0.0;
    if (kept) CHECK(a[i] == doctest::Approx(x.values()[i] / 0.5));
  }

  CHECK_THROWS_AS(ops::dropout(x, 1.0, true, &rng), ConfigError);
  CHECK_THROWS_AS(ops::dropout(x, -0.1, true, &rng), ConfigError);
}

TEST_CASE("embedding lookup") {
  Tensor table({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31}, true);
  const std::vector<int> ids{2, 0, 2};
  Tensor rows = ops::embedding_lookup(table, ids);
  CHECK(rows.values() == std::vector<double>{20, 21, 0, 1, 20, 21});

  // repeated id accumulates gradient
  ops::sum_all(rows).backward();
  CHECK(table.grad()[0] == doctest::Approx(1.0));
  CHECK(table.grad()[4] == doctest::Approx(2.0));
  CHECK(table.grad()[6] == doctest::Approx(0.0));

  const std::vector<int> bad{4};
  CHECK_THROWS_AS(ops::embedding_lookup(table, bad), ContractError);
}

TEST_CASE("max_rows ties route gradient to the first argmax row") {
  Tensor x({3, 1}, {2.0, 2.0, 1.0}, true);
  Tensor m = ops::max_rows(x);
  CHECK(m.values() == std::vector<double>{2.0});
  ops::sum_all(m).backward();
  CHECK(x.grad() == std::vector<double>{1, 0, 0});
}

TEST_CASE("matmul fixed example and shape errors") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  CHECK(ops::matmul(a, b).values() == std::vector<double>{19, 22, 43, 50});

  Tensor bad({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(ops::matmul(a, bad), ShapeError);
  CHECK_THROWS_AS(ops::add(a, bad), ShapeError);
}

TEST_CASE("no-grad guard suppresses taping") {
  Tensor x({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    Tensor y = ops::mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  Tensor z = ops::mul(x, x);
  CHECK(z.requires_grad());
}
