#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vsgno/errors.hpp"
#include "vsgno/spiking.hpp"

using namespace vsgno;
using ad::Tape;
using ad::Tensor;

namespace {

struct Run {
  std::vector<Tensor> outputs;
  VsnState state;
};

Run run_steps(const VsnLayer& layer, const Tensor& z, std::size_t steps, Tape& tape) {
  Run r;
  for (std::size_t t = 0; t < steps; ++t) r.outputs.push_back(vsn_forward(tape, layer, z, r.state));
  return r;
}

}  // namespace

TEST_SUITE("spiking") {
  TEST_CASE("vectorized VSN equals the scalar replay on random instances") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0), beta(0.05, 0.95);
    std::uniform_int_distribution<std::size_t> steps(1, 10), dim(1, 6);
    for (int instance = 0; instance < 100; ++instance) {
      const std::size_t n = dim(rng), d = dim(rng), T = steps(rng);
      VsnLayer layer = VsnLayer::create(d, instance % 2 ? Activation::gelu : Activation::identity);
      for (std::size_t j = 0; j < d; ++j) {
        layer.theta.mutable_values()[j] = 0.5 * u(rng);
        const double b = beta(rng);
        layer.beta_raw.mutable_values()[j] = std::log(b / (1.0 - b));
      }
      std::vector<double> z(n * d);
      for (double& v : z) v = u(rng);
      Tape tape(false);
      const Tensor zt = Tensor::from({n, d}, z);
      VsnState state;
      const auto trace = oracle::replay_vsn(z, n, d, {layer.theta.values().begin(), layer.theta.values().end()},
                                            {layer.beta_raw.values().begin(), layer.beta_raw.values().end()},
                                            layer.activation, T);
      bool same = true;
      for (std::size_t t = 0; t < T; ++t) {
        const Tensor y = vsn_forward(tape, layer, zt, state);
        for (std::size_t k = 0; k < n * d; ++k) {
          same = same && y[k] == trace.outputs[t][k] && state.membrane[k] == trace.membranes[t][k];
        }
      }
      CHECK(same);
      CHECK(state.spike_count == trace.spikes);
      CHECK(state.opportunity_count == trace.opportunities);
    }
  }

  TEST_CASE("threshold is inclusive and silence gives exactly zero") {
    VsnLayer layer = VsnLayer::create(3, Activation::gelu, 0.5);
    Tape tape(false);
    VsnState state;
    const Tensor y = vsn_forward(tape, layer, Tensor::from({1, 3}, {0.5, 0.4999, 2.0}), state);
    CHECK(y[0] == ad::gelu_value(0.5));
    CHECK(y[1] == 0.0);
    CHECK(y[2] == ad::gelu_value(2.0));
    CHECK(state.spike_count == 2);
    CHECK(state.membrane[0] == 0.0);
    CHECK(state.membrane[1] == 0.4999);
  }

  TEST_CASE("sub-threshold input integrates with leakage until it fires") {
    VsnLayer layer = VsnLayer::create(1, Activation::identity, 0.25, 0.5);
    Tape tape(false);
    VsnState state;
    const Tensor z = Tensor::from({1, 1}, {0.1});
    std::vector<double> out;
    for (int t = 0; t < 4; ++t) out.push_back(vsn_forward(tape, layer, z, state)[0]);
    // membranes 0.1, 0.15, 0.175, 0.1875: never reaches 0.25
    CHECK(out == std::vector<double>{0, 0, 0, 0});
    CHECK(state.membrane[0] == doctest::Approx(0.1875).epsilon(1e-15));
    layer.theta.mutable_values()[0] = 0.15;
    VsnState s2;
    std::vector<double> out2;
    for (int t = 0; t < 3; ++t) out2.push_back(vsn_forward(tape, layer, z, s2)[0]);
    CHECK(out2 == std::vector<double>{0, 0.1, 0});
  }

  TEST_CASE("always spiking reduces to the plain activation") {
    VsnLayer layer = VsnLayer::create(4, Activation::gelu, -1e6);
    Tape tape(false);
    VsnState state;
    const Tensor z = Tensor::from({2, 4}, oracle::random_vector(8, 3));
    const Tensor y = vsn_forward(tape, layer, z, state);
    const Tensor plain = activate(tape, Activation::gelu, z);
    for (std::size_t k = 0; k < 8; ++k) CHECK(y[k] == plain[k]);
    CHECK(spike_rate(state) == 1.0);
  }

  TEST_CASE("counters, rates and reset") {
    VsnLayer layer = VsnLayer::create(3, Activation::gelu);
    VsnState state;
    CHECK_THROWS_AS(spike_rate(state), NoObservations);
    Tape tape;
    const Tensor z = Tensor::from({5, 3}, oracle::random_vector(15, 7));
    for (int t = 0; t < 4; ++t) vsn_forward(tape, layer, z, state);
    CHECK(state.opportunity_count == 5 * 3 * 4);
    CHECK(spike_rate_tensor(tape, state).item() == spike_rate(state));
    reset_state(state);
    CHECK(state.spike_count == 0);
    CHECK(state.opportunity_count == 0);
    for (double v : state.membrane.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(vsn_forward(tape, layer, Tensor::from({1, 2}, {0, 0}), state), ShapeMismatch);
  }

  TEST_CASE("surrogate derivative shape") {
    CHECK(surrogate_grad(0.0, 25.0) == 1.0);
    CHECK(surrogate_grad(0.04, 25.0) == doctest::Approx(0.25));
    CHECK(surrogate_grad(-0.04, 25.0) == surrogate_grad(0.04, 25.0));
  }

  TEST_CASE("surrogate BPTT matches a hand-coded reverse pass") {
    const std::size_t n = 2, d = 3, T = 4;
    VsnLayer layer = VsnLayer::create(d, Activation::gelu);
    const auto theta = oracle::random_vector(d, 5, 0.0, 0.4);
    const auto braw = oracle::random_vector(d, 6, -1.0, 1.0);
    std::copy(theta.begin(), theta.end(), layer.theta.mutable_values().begin());
    std::copy(braw.begin(), braw.end(), layer.beta_raw.mutable_values().begin());
    const auto zv = oracle::random_vector(n * d, 7, -0.3, 0.6);
    const auto w = oracle::random_vector(n * d * T, 8);
    const double spike_weight = 0.7;
    Tensor z = Tensor::from({n, d}, zv, true);

    Tape tape;
    Run r = run_steps(layer, z, T, tape);
    Tensor loss = ad::scale(tape, r.state.spike_sum, spike_weight);
    for (std::size_t t = 0; t < T; ++t) {
      const auto wt = ad::constant({n, d}, {w.begin() + t * n * d, w.begin() + (t + 1) * n * d});
      loss = ad::add(tape, loss, ad::sum(tape, ad::elementwise_mul(tape, r.outputs[t], wt)));
    }
    tape.backward(loss);

    std::vector<double> gz(n * d, 0.0), gtheta(d, 0.0), gbraw(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t k = i * d + j;
        const double b = oracle::sigmoid(braw[j]), zz = zv[k];
        std::vector<double> mem(T), reset(T), spike(T);
        for (std::size_t t = 0; t < T; ++t) {
          mem[t] = t == 0 ? zz : b * reset[t - 1] + zz;
          spike[t] = mem[t] >= theta[j] ? 1.0 : 0.0;
          reset[t] = mem[t] * (1.0 - spike[t]);
        }
        double g_reset = 0.0, gb = 0.0;
        for (std::size_t t = T; t-- > 0;) {
          const double wy = w[t * n * d + k];
          const double dy = ad::gelu_derivative(zz * spike[t]);
          gz[k] += wy * dy * spike[t];
          const double g_spike = wy * dy * zz + spike_weight;
          const double sg = surrogate_grad(mem[t] - theta[j], layer.surrogate_slope);
          const double g_mem = g_spike * sg + g_reset * (1.0 - spike[t]);
          gtheta[j] -= g_spike * sg;
          gz[k] += g_mem;
          if (t > 0) {
            gb += g_mem * reset[t - 1];
            g_reset = g_mem * b;
          }
        }
        gbraw[j] += gb * b * (1.0 - b);
      }
    }
    for (std::size_t k = 0; k < n * d; ++k) CHECK(z.grad()[k] == doctest::Approx(gz[k]).epsilon(1e-12));
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(layer.theta.grad()[j] == doctest::Approx(gtheta[j]).epsilon(1e-12));
      CHECK(layer.beta_raw.grad()[j] == doctest::Approx(gbraw[j]).epsilon(1e-12));
    }
  }

  TEST_CASE("exact-gradient mode matches finite differences away from the threshold") {
    VsnLayer layer = VsnLayer::create(2, Activation::gelu);
    layer.spike_gradient = SpikeGradient::none;
    Tensor z = Tensor::from({3, 2}, {0.5, -0.2, 0.9, 0.31, 0.05, 0.7}, true);
    auto f = [&](Tape& tape) {
      VsnState s;
      Tensor total;
      for (int t = 0; t < 3; ++t) {
        const Tensor y = ad::sum(tape, vsn_forward(tape, layer, z, s));
        total = total.defined() ? ad::add(tape, total, y) : y;
      }
      return total;
    };
    std::vector<Tensor> xs{z, layer.theta, layer.beta_raw};
    CHECK(ad::grad_check(f, xs, 1e-7) < 1e-6);
  }

  TEST_CASE("leakage parametrization") {
    VsnLayer layer = VsnLayer::create(2, Activation::gelu, 0.1, 0.3);
    CHECK(layer.leakage(0) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK_THROWS_AS(layer.set_leakage(1.0), ConfigError);
    CHECK(parse_activation("identity") == Activation::identity);
    CHECK_THROWS_AS(parse_activation("relu"), ConfigError);
  }
}
