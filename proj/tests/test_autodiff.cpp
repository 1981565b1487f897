#include <catch2/catch_amalgamated.hpp>

#include "doa/adam.hpp"
#include "doa/gradcheck.hpp"
#include "doa/io_util.hpp"
#include "doa/rng.hpp"
#include "doa/tensor.hpp"

using namespace doa;
namespace t = doa::ad;

namespace {

// Weighted-sum readout turning any tensor into a scalar with non-trivial
// adjoints. Weights depend only on the element index.
int readout(t::Tape& tp, int node) {
  const std::size_t n = tp.node(node).size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.3 + 0.1 * static_cast<double>(i % 7) -
           0.05 * static_cast<double>(i % 3);
  const int wn = t::leaf_copy(tp, tp.node(node).rows, tp.node(node).cols,
                              w.data());
  return t::reduce_sum(tp, t::hadamard(tp, node, wn));
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Runs grad_check on `build` at `points` random inputs of size n.
template <class Build>
void check_primitive(const char* name, std::size_t n, int points, Build build,
                     double lo = -2.0, double hi = 2.0, double tol = 1e-4) {
  Rng rng(fnv1a64(name));
  for (int p = 0; p < points; ++p) {
    const auto x = random_vec(rng, n, lo, hi);
    const auto res = t::grad_check(build, x);
    INFO(name << " point " << p << " rel err " << res.max_rel_err);
    REQUIRE(res.max_rel_err < tol);
  }
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform", "[autodiff]") {
  t::Tape tp;
  const std::vector<double> x{0.0, 0.0};
  const int s = t::softmax_rows(tp, t::leaf_copy(tp, 1, 2, x.data()));
  REQUIRE(tp.value(s)[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(tp.value(s)[1] == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("softmax rows sum to one and shift-invariance holds", "[autodiff]") {
  Rng rng(41);
  t::Tape tp;
  for (int rep = 0; rep < 100; ++rep) {
    tp.clear();
    const auto x = random_vec(rng, 12, -5.0, 5.0);
    auto shifted = x;
    const double c = rng.uniform(-3.0, 3.0);
    for (std::size_t j = 0; j < 6; ++j) shifted[j] += c;  // shift first row
    const int a = t::softmax_rows(tp, t::leaf_copy(tp, 2, 6, x.data()));
    const int b = t::softmax_rows(tp, t::leaf_copy(tp, 2, 6, shifted.data()));
    double row0 = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      row0 += tp.value(a)[j];
      REQUIRE(std::abs(tp.value(a)[j] - tp.value(b)[j]) < 1e-12);
    }
    REQUIRE(row0 == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("layernorm of a constant row returns the bias", "[autodiff]") {
  t::Tape tp;
  const std::vector<double> x{3.7, 3.7, 3.7, 3.7};
  const std::vector<double> gain{2.0, 2.0, 2.0, 2.0};
  const std::vector<double> bias{0.5, -0.5, 1.0, 0.0};
  const int ln = t::layernorm(tp, t::leaf_copy(tp, 1, 4, x.data()),
                              t::leaf_copy(tp, 1, 4, gain.data()),
                              t::leaf_copy(tp, 1, 4, bias.data()));
  for (std::size_t j = 0; j < 4; ++j)
    REQUIRE(tp.value(ln)[j] == Catch::Approx(bias[j]).margin(1e-12));
}

TEST_CASE("matmul against identity is a no-op", "[autodiff]") {
  t::Tape tp;
  Rng rng(42);
  const auto a = random_vec(rng, 9);
  const std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  const int prod = t::matmul(tp, t::leaf_copy(tp, 3, 3, eye.data()),
                             t::leaf_copy(tp, 3, 3, a.data()));
  for (std::size_t i = 0; i < 9; ++i)
    REQUIRE(tp.value(prod)[i] == Catch::Approx(a[i]).margin(1e-15));
}

TEST_CASE("backward of x squared", "[autodiff]") {
  t::Tape tp;
  const double x = 3.0;
  const int leaf = t::leaf_copy(tp, 1, 1, &x);
  const int loss = t::reduce_sum(tp, t::hadamard(tp, leaf, leaf));
  t::backward(tp, loss);
  REQUIRE(tp.gradient(leaf)[0] == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("sum of softmax has zero gradient", "[autodiff]") {
  t::Tape tp;
  Rng rng(43);
  const auto x = random_vec(rng, 8);
  const int leaf = t::leaf_copy(tp, 2, 4, x.data());
  const int loss = t::reduce_sum(tp, t::softmax_rows(tp, leaf));
  t::backward(tp, loss);
  for (double g : tp.gradient(leaf)) REQUIRE(std::abs(g) < 1e-12);
}

TEST_CASE("three-layer composite matches finite differences", "[autodiff]") {
  // matmul -> gelu -> layernorm -> softmax -> weighted sum
  auto build = [](t::Tape& tp, int in) {
    const int x = t::reshape(tp, t::slice_cols(tp, in, 0, 12), 3, 4);
    const int w = t::reshape(tp, t::slice_cols(tp, in, 12, 28), 4, 4);
    const int g = t::reshape(tp, t::slice_cols(tp, in, 28, 32), 1, 4);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 32, 36), 1, 4);
    const int h = t::gelu(tp, t::matmul(tp, x, w));
    const int ln = t::layernorm(tp, h, g, b);
    return readout(tp, t::softmax_rows(tp, ln));
  };
  check_primitive("composite", 36, 20, build);
}

TEST_CASE("every primitive matches central finite differences", "[autodiff]") {
  check_primitive("matmul", 12 + 8, 100, [](t::Tape& tp, int in) {
    const int a = t::reshape(tp, t::slice_cols(tp, in, 0, 12), 3, 4);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 12, 20), 4, 2);
    return readout(tp, t::matmul(tp, a, b));
  });
  check_primitive("matmul_nt", 12 + 8, 100, [](t::Tape& tp, int in) {
    const int a = t::reshape(tp, t::slice_cols(tp, in, 0, 12), 3, 4);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 12, 20), 2, 4);
    return readout(tp, t::matmul_nt(tp, a, b));
  });
  check_primitive("add_sub_hadamard_scale", 18, 100, [](t::Tape& tp, int in) {
    const int a = t::reshape(tp, t::slice_cols(tp, in, 0, 6), 2, 3);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 6, 12), 2, 3);
    const int c = t::reshape(tp, t::slice_cols(tp, in, 12, 18), 2, 3);
    const int s = t::sub(tp, t::add(tp, a, b), t::scale(tp, c, 1.7));
    return readout(tp, t::hadamard(tp, s, b));
  });
  check_primitive("linear_rowvec", 8 + 12 + 3, 100, [](t::Tape& tp, int in) {
    const int x = t::reshape(tp, t::slice_cols(tp, in, 0, 8), 2, 4);
    const int w = t::reshape(tp, t::slice_cols(tp, in, 8, 20), 3, 4);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 20, 23), 1, 3);
    return readout(tp, t::linear(tp, x, w, b));
  });
  check_primitive("layernorm", 8 + 4 + 4, 100, [](t::Tape& tp, int in) {
    const int x = t::reshape(tp, t::slice_cols(tp, in, 0, 8), 2, 4);
    const int g = t::reshape(tp, t::slice_cols(tp, in, 8, 12), 1, 4);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 12, 16), 1, 4);
    return readout(tp, t::layernorm(tp, x, g, b));
  });
  check_primitive("softmax_rows", 12, 100, [](t::Tape& tp, int in) {
    return readout(tp, t::softmax_rows(tp, t::reshape(tp, in, 3, 4)));
  });
  check_primitive("gelu", 10, 100, [](t::Tape& tp, int in) {
    return readout(tp, t::gelu(tp, in));
  });
  check_primitive("concat_slice_gather", 12, 100, [](t::Tape& tp, int in) {
    const int a = t::reshape(tp, t::slice_cols(tp, in, 0, 6), 2, 3);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 6, 12), 2, 3);
    const int rows = t::concat_rows(tp, a, b);              // 4 x 3
    const int cols = t::concat_cols(tp, {rows, rows});      // 4 x 6
    const int sr = t::slice_rows(tp, cols, 1, 3);           // 2 x 6
    const int sc = t::slice_cols(tp, sr, 2, 5);             // 2 x 3
    const int gathered = t::gather(tp, sc, {0, 2, 2, 5});   // dup index
    return readout(tp, gathered);
  });
  check_primitive("sqrt_divide", 8, 100, [](t::Tape& tp, int in) {
    const int a = t::reshape(tp, t::slice_cols(tp, in, 0, 4), 1, 4);
    const int b = t::reshape(tp, t::slice_cols(tp, in, 4, 8), 1, 4);
    const int num = t::sqrt_elem(tp, t::hadamard(tp, a, a));  // |a|
    return readout(tp, t::divide(tp, num, b));
  }, 0.5, 2.0);  // keep inputs away from 0
}

TEST_CASE("gradient is zero on dead branches", "[autodiff]") {
  auto build = [](t::Tape& tp, int in) {
    const int used = t::slice_cols(tp, in, 0, 3);
    (void)t::gelu(tp, t::slice_cols(tp, in, 3, 6));  // never reaches the loss
    return t::reduce_sum(tp, t::hadamard(tp, used, used));
  };
  t::Tape tp;
  const std::vector<double> x{1.0, -2.0, 0.5, 4.0, 5.0, 6.0};
  const int leaf = t::leaf_view(tp, 1, 6, x.data());
  const int loss = build(tp, leaf);
  t::backward(tp, loss);
  for (std::size_t i = 3; i < 6; ++i) REQUIRE(tp.gradient(leaf)[i] == 0.0);
  REQUIRE(tp.gradient(leaf)[0] == Catch::Approx(2.0));
}

TEST_CASE("grad_check on a sum of squares is near-exact", "[autodiff]") {
  auto build = [](t::Tape& tp, int in) {
    return t::reduce_sum(tp, t::hadamard(tp, in, in));
  };
  Rng rng(44);
  const auto x = random_vec(rng, 16, -1.0, 1.0);
  // a quadratic has no finite-difference truncation error, so a wider step
  // leaves only rounding noise
  const auto res = t::grad_check(build, x, 1e-4);
  REQUIRE(res.max_rel_err < 1e-10);
}

TEST_CASE("backward requires a scalar loss", "[autodiff]") {
  t::Tape tp;
  const std::vector<double> x{1.0, 2.0};
  const int leaf = t::leaf_copy(tp, 1, 2, x.data());
  REQUIRE_THROWS_AS(t::backward(tp, leaf), InvalidArgument);
}

TEST_CASE("shape mismatches are rejected", "[autodiff]") {
  t::Tape tp;
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const int a = t::leaf_copy(tp, 2, 3, x.data());
  const int b = t::leaf_copy(tp, 3, 2, x.data());
  REQUIRE_THROWS_AS(t::add(tp, a, b), InvalidArgument);
  REQUIRE_THROWS_AS(t::matmul(tp, a, a), InvalidArgument);
  REQUIRE_THROWS_AS(t::gather(tp, a, {7}), InvalidArgument);
}

TEST_CASE("adam first step moves by roughly the learning rate", "[autodiff]") {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  AdamState st(1);
  std::vector<double> p{1.0};
  const std::vector<double> g{2.5};
  adam_step(p, g, st, cfg);
  REQUIRE(p[0] == Catch::Approx(1.0 - cfg.lr).epsilon(1e-6));

  std::vector<double> q{-4.0};
  const std::vector<double> gneg{-0.3};
  AdamState st2(1);
  adam_step(q, gneg, st2, cfg);
  REQUIRE(q[0] == Catch::Approx(-4.0 + cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters alone on zero gradient", "[autodiff]") {
  AdamConfig cfg;
  AdamState st(3);
  std::vector<double> p{1.0, -2.0, 0.25};
  const std::vector<double> zero(3, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(p, zero, st, cfg);
  REQUIRE(p == std::vector<double>{1.0, -2.0, 0.25});
}

TEST_CASE("adam trajectories are deterministic", "[autodiff]") {
  AdamConfig cfg;
  cfg.lr = 1e-2;
  auto run = [&] {
    AdamState st(4);
    std::vector<double> p{1.0, 2.0, 3.0, 4.0};
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> g(4);
      for (double& x : g) x = rng.uniform(-1.0, 1.0);
      adam_step(p, g, st, cfg);
    }
    return p;
  };
  REQUIRE(run() == run());
}
