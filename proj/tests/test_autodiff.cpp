#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>

#include "oracles.hpp"
#include "vsgno/autodiff.hpp"
#include "vsgno/errors.hpp"

using namespace vsgno;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor param(ad::Shape shape, std::uint64_t seed) {
  const auto n = ad::element_count(shape);
  return Tensor::from(std::move(shape), oracle::random_vector(n, seed), true);
}

// Fixed random weighting so every output element reaches the loss.
Tensor weighted_sum(Tape& tape, const Tensor& x, std::uint64_t seed = 99) {
  auto w = ad::constant(x.shape(), oracle::random_vector(x.size(), seed));
  return ad::sum(tape, ad::elementwise_mul(tape, x, w));
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("primitive gradients match central differences") {
    auto a = param({3, 4}, 1), b = param({4, 2}, 2), c = param({3, 4}, 3), v = param({4}, 4);
    auto pos = Tensor::from({2, 3}, oracle::random_vector(6, 5, 0.5, 2.0), true);

    SUBCASE("matmul") {
      std::vector<Tensor> xs{a, b};
      CHECK(ad::grad_check([&](Tape& t) { return weighted_sum(t, ad::matmul(t, a, b)); }, xs, 1e-6) < 1e-8);
    }
    SUBCASE("add sub mul scale") {
      std::vector<Tensor> xs{a, c};
      auto f = [&](Tape& t) {
        auto s = ad::add(t, a, c);
        auto d = ad::sub(t, a, ad::scale(t, c, 0.3));
        return weighted_sum(t, ad::elementwise_mul(t, s, d));
      };
      CHECK(ad::grad_check(f, xs, 1e-6) < 1e-8);
    }
    SUBCASE("concat and broadcast") {
      std::vector<Tensor> xs{a, v};
      auto f = [&](Tape& t) { return weighted_sum(t, ad::concat_columns(t, a, ad::broadcast_row(t, v, 3))); };
      CHECK(ad::grad_check(f, xs, 1e-6) < 1e-8);
    }
    SUBCASE("gelu sigmoid sqrt") {
      CHECK(ad::grad_check([&](Tape& t) { return weighted_sum(t, ad::gelu(t, a)); }, a, 1e-6) < 1e-8);
      CHECK(ad::grad_check([&](Tape& t) { return weighted_sum(t, ad::sigmoid(t, a)); }, a, 1e-6) < 1e-8);
      CHECK(ad::grad_check([&](Tape& t) { return weighted_sum(t, ad::sqrt(t, pos)); }, pos, 1e-6) < 1e-8);
    }
    SUBCASE("mean over steps") {
      std::vector<Tensor> xs{a, c};
      auto f = [&](Tape& t) {
        std::vector<Tensor> items{a, c, a};
        return weighted_sum(t, ad::mean_over(t, items));
      };
      CHECK(ad::grad_check(f, xs, 1e-6) < 1e-8);
    }
    SUBCASE("mode-wise kernel") {
      auto k = param({3, 2, 2}, 6), co = param({3, 2}, 7);
      std::vector<Tensor> xs{k, co};
      CHECK(ad::grad_check([&](Tape& t) { return weighted_sum(t, ad::mode1_kernel(t, k, co)); }, xs, 1e-6) < 1e-8);
    }
    SUBCASE("sparse gated aggregation") {
      auto csr = std::make_shared<ad::CsrMatrix>();
      csr->rows = 3;
      csr->cols = 3;
      csr->row_ptr = {0, 2, 3, 5};
      csr->col = {1, 2, 0, 0, 1};
      csr->value = {0.5, 2.0, 0.5, 2.0, 1.5};
      auto gate = param({5}, 8), x = param({3, 4}, 9);
      std::vector<Tensor> xs{gate, x};
      CHECK(ad::grad_check([&](Tape& t) { return weighted_sum(t, ad::sparse_gated_agg(t, csr, gate, x)); }, xs, 1e-6) <
            1e-8);
    }
  }

  TEST_CASE("sparse gated aggregation equals the dense product") {
    auto csr = std::make_shared<ad::CsrMatrix>();
    csr->rows = 2;
    csr->cols = 2;
    csr->row_ptr = {0, 1, 2};
    csr->col = {1, 0};
    csr->value = {3.0, 4.0};
    auto gate = Tensor::from({2}, {0.5, 2.0});
    auto x = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tape tape(false);
    auto y = ad::sparse_gated_agg(tape, csr, gate, x);
    // [[0, 1.5], [8, 0]] * [[1, 2], [3, 4]]
    CHECK(y[0] == 4.5);
    CHECK(y[1] == 6.0);
    CHECK(y[2] == 8.0);
    CHECK(y[3] == 16.0);
  }

  TEST_CASE("mode-wise kernel multiplies each mode by its own matrix") {
    auto k = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 0, 1, 1, 0});
    auto c = Tensor::from({2, 2}, {1, 1, 5, 7});
    Tape tape(false);
    auto y = ad::mode1_kernel(tape, k, c);
    CHECK(y.values()[0] == 3.0);
    CHECK(y.values()[1] == 7.0);
    CHECK(y.values()[2] == 7.0);
    CHECK(y.values()[3] == 5.0);
  }

  TEST_CASE("backward requires a scalar loss produced on the tape") {
    auto a = param({2, 2}, 1);
    Tape tape;
    auto y = ad::gelu(tape, a);
    CHECK_THROWS_AS(tape.backward(y), NotScalar);
    Tape other;
    auto s = ad::sum(other, a);
    CHECK_THROWS_AS(tape.backward(s), DisconnectedLoss);
  }

  TEST_CASE("leaf gradients accumulate until zeroed") {
    auto a = Tensor::from({2}, {1.0, 2.0}, true);
    for (int i = 0; i < 2; ++i) {
      Tape tape;
      tape.backward(ad::sum(tape, ad::scale(tape, a, 3.0)));
    }
    CHECK(a.grad()[0] == 6.0);
    a.zero_grad();
    CHECK(a.grad()[1] == 0.0);
  }

  TEST_CASE("non-recording tape computes values only") {
    auto a = param({2, 3}, 1);
    Tape tape(false);
    auto y = ad::sum(tape, ad::gelu(tape, a));
    CHECK(std::isfinite(y.item()));
    CHECK_THROWS_AS(tape.backward(y), DisconnectedLoss);
  }

  TEST_CASE("shape and finiteness errors") {
    Tape tape(false);
    CHECK_THROWS_AS(ad::matmul(tape, param({2, 3}, 1), param({2, 3}, 2)), ShapeMismatch);
    CHECK_THROWS_AS(ad::add(tape, param({2, 3}, 1), param({3, 2}, 2)), ShapeMismatch);
    auto big = Tensor::from({1}, {std::numeric_limits<double>::max()});
    CHECK_THROWS_AS(ad::scale(tape, big, 10.0), NonFiniteValue);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0}), ShapeMismatch);
    CHECK_THROWS_AS(ad::sqrt(tape, Tensor::from({1}, {-1.0})), NonFiniteValue);
  }

  TEST_CASE("heaviside forward is inclusive and backward uses the given scale") {
    auto m = Tensor::from({1, 3}, {0.1, 0.0999, 0.5}, true);
    auto theta = Tensor::from({3}, {0.1, 0.1, 0.1}, true);
    Tape tape;
    auto s = ad::heaviside_with_surrogate(tape, m, theta, [](double diff) { return 1.0 + diff; });
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] == 1.0);
    tape.backward(ad::sum(tape, s));
    CHECK(m.grad()[2] == doctest::Approx(1.4).epsilon(1e-14));
    CHECK(theta.grad()[2] == doctest::Approx(-1.4).epsilon(1e-14));
  }

  TEST_CASE("gelu helpers agree with the tensor op") {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
      CHECK(ad::gelu_value(x) == oracle::gelu(x));
      const double h = 1e-6;
      CHECK(ad::gelu_derivative(x) ==
            doctest::Approx((ad::gelu_value(x + h) - ad::gelu_value(x - h)) / (2 * h)).epsilon(1e-8));
    }
    CHECK(ad::gelu_value(0.0) == 0.0);
  }
}
