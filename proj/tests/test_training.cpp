#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vsgno/errors.hpp"
#include "vsgno/training.hpp"

using namespace vsgno;
using ad::Tape;
using ad::Tensor;

namespace {

struct Fixture {
  Dataset data;
  Graph graph;
  SpectralBasis basis;
  ModelConfig config;

  Geometry geometry() const { return {data.domain.points, graph, basis}; }
  VsGnoModel model(std::uint64_t seed = 1) const { return VsGnoModel::create(config, graph.edge_count(), seed); }
};

Fixture make_fixture(std::size_t count, std::array<double, 3> fracs, OperatorMode mode, SpikingMode spiking) {
  GenerateOptions o;
  o.n_target = 100;
  o.count = count;
  o.split_fracs = fracs;
  o.q_flux = 6;
  o.seed = 17;
  Fixture f;
  f.data = generate_dataset(o);
  f.graph = dataset_graph(f.data, 4);
  f.basis = lowest_eigenpairs(combinatorial_laplacian(f.graph), 6);
  f.config = oracle::tiny_config(mode, spiking);
  f.config.modes = 6;
  f.config.input_dim = f.data.meta.q;
  f.config.output_channels = f.data.meta.k;
  return f;
}

RowMatrix column(std::initializer_list<double> v) {
  RowMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

std::array<std::optional<Tensor>, kComponentCount> rates_of(std::initializer_list<double> values) {
  std::array<std::optional<Tensor>, kComponentCount> r;
  std::size_t i = 0;
  for (double v : values) r[i++] = Tensor::scalar(v);
  return r;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("relative L2 examples") {
    RowMatrix truth(2, 2);
    truth << 1, 3, 0, 4;
    CHECK(relative_l2(truth, truth).mean == 0.0);
    CHECK(relative_l2(column({2, 0}), column({1, 0})).mean == 1.0);
    RowMatrix pred = truth;
    pred(0, 0) += 0.1;  // channel 0 error 0.1
    pred(0, 1) += 1.5;  // channel 1 error 1.5 / 5 = 0.3
    const RelativeL2 r = relative_l2(pred, truth);
    CHECK(r.per_channel[0] == doctest::Approx(0.1));
    CHECK(r.per_channel[1] == doctest::Approx(0.3));
    CHECK(r.mean == doctest::Approx(0.2));
    CHECK_THROWS_AS(relative_l2(column({1, 1}), column({0, 0})), ZeroNormChannel);
    CHECK_THROWS_AS(relative_l2(column({1}), truth), ShapeMismatch);
  }

  TEST_CASE("differentiable relative L2 agrees with the metric and its gradient") {
    RowMatrix truth(4, 3);
    truth << 1, 2, -1, 0.5, 0, 3, -2, 1, 1, 0, 4, 2;
    Tensor pred = Tensor::from({4, 3}, oracle::random_vector(12, 3, -2, 2), true);
    Tape tape;
    const Tensor l = relative_l2_tensor(tape, pred, truth);
    CHECK(l.item() == doctest::Approx(relative_l2(oracle::to_matrix(pred), truth).mean).epsilon(1e-14));
    CHECK(ad::grad_check([&](Tape& t) { return relative_l2_tensor(t, pred, truth); }, pred, 1e-6) < 1e-8);
  }

  TEST_CASE("energy balance loss") {
    Tape tape(false);
    const Tensor l2 = Tensor::scalar(0.02);
    const auto six = rates_of({0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
    CHECK(energy_balance_loss(tape, l2, six, {1.0, 0.5}, OperatorMode::full, SpikingMode::on).item() ==
          doctest::Approx(0.07).epsilon(1e-15));
    CHECK(energy_balance_loss(tape, l2, six, {1.0, 0.0}, OperatorMode::full, SpikingMode::on).item() == 0.02);
    CHECK(energy_balance_loss(tape, l2, six, {2.0, 0.0}, OperatorMode::full, SpikingMode::on).item() == 0.04);

    auto four = rates_of({0.2, 0.4, 0.6, 0.0, 0.0, 0.8});
    four[static_cast<std::size_t>(Component::spatial)].reset();
    four[static_cast<std::size_t>(Component::collab)].reset();
    CHECK(energy_balance_loss(tape, l2, four, {1.0, 1.0}, OperatorMode::spectral_only, SpikingMode::on).item() ==
          doctest::Approx(0.02 + 0.5).epsilon(1e-15));
    CHECK_THROWS_AS(energy_balance_loss(tape, l2, four, {1.0, 1.0}, OperatorMode::full, SpikingMode::on),
                    MissingComponent);
    CHECK(energy_balance_loss(tape, l2, {}, {1.0, 1.0}, OperatorMode::full, SpikingMode::bypass).item() == 0.02);
  }

  TEST_CASE("loss config validation") {
    CHECK_THROWS_AS((LossConfig{0.0, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((LossConfig{-1.0, 0.0}.validate()), ConfigError);
    CHECK_NOTHROW((LossConfig{0.0, 1.0}.validate()));
  }

  TEST_CASE("adam step") {
    OptimState state{AdamConfig{0.1, 0.9, 0.999, 1e-8}, 0, {}, {}};
    std::vector<Tensor> p{Tensor::from({1}, {1.0}, true)};
    std::vector<std::vector<double>> g{{1.0}};
    adam_step(p, g, state);
    CHECK(p[0].values()[0] == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(state.step == 1);

    OptimState zero_state;
    std::vector<Tensor> q{Tensor::from({3}, {1.0, -2.0, 3.0}, true)};
    adam_step(q, std::vector<std::vector<double>>{{0.0, 0.0, 0.0}}, zero_state);
    CHECK(q[0].values()[1] == -2.0);

    std::vector<Tensor> bad{Tensor::from({2}, {1.0, 2.0}, true)};
    OptimState s3;
    CHECK_THROWS_AS(adam_step(bad, std::vector<std::vector<double>>{{1.0}}, s3), ShapeMismatch);
  }

  TEST_CASE("adam is pure and invariant to gradient scale") {
    const auto g = oracle::random_vector(5, 4);
    auto step = [&](double scale, double eps) {
      std::vector<Tensor> p{Tensor::from({5}, oracle::random_vector(5, 5), true)};
      const auto before = std::vector<double>(p[0].values().begin(), p[0].values().end());
      std::vector<std::vector<double>> gs{g};
      for (double& v : gs[0]) v *= scale;
      OptimState s{AdamConfig{1e-3, 0.9, 0.999, eps}, 0, {}, {}};
      adam_step(p, gs, s);
      std::vector<double> delta(5);
      for (std::size_t i = 0; i < 5; ++i) delta[i] = p[0].values()[i] - before[i];
      return delta;
    };
    CHECK(step(1.0, 1e-8) == step(1.0, 1e-8));
    const auto a = step(1.0, 1e-300), b = step(37.0, 1e-300);
    double na = 0, nb = 0, dot = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      na += a[i] * a[i];
      nb += b[i] * b[i];
      dot += a[i] * b[i];
    }
    CHECK(std::abs(std::sqrt(nb / na) - 1.0) <= 1e-6);
    CHECK(dot / std::sqrt(na * nb) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("global norm clipping") {
    std::vector<std::vector<double>> g{{3.0}, {4.0}};
    CHECK(clip_global_norm(g, 1.0) == 5.0);
    CHECK(g[0][0] == doctest::Approx(0.6));
    CHECK(g[1][0] == doctest::Approx(0.8));
    std::vector<std::vector<double>> small{{0.3}};
    clip_global_norm(small, 1.0);
    CHECK(small[0][0] == 0.3);
  }

  TEST_CASE("loss is linear in alpha and gamma") {
    const Fixture f = make_fixture(6, {4.0 / 6, 1.0 / 6, 1.0 / 6}, OperatorMode::full, SpikingMode::on);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const VsGnoModel m = f.model(seed);
      auto loss = [&](double a, double g) {
        Tape tape(false);
        return sample_loss(tape, m, f.geometry(), f.data, seed % 4, {a, g}).item();
      };
      const double alpha = 0.3 * static_cast<double>(seed), gamma = 0.05 * static_cast<double>(seed);
      CHECK(std::abs(loss(alpha, gamma) - (alpha * loss(1, 0) + gamma * loss(0, 1))) <= 1e-12);
    }
  }

  TEST_CASE("one epoch smoke run") {
    Fixture f = make_fixture(6, {4.0 / 6, 1.0 / 6, 1.0 / 6}, OperatorMode::full, SpikingMode::on);
    VsGnoModel m = f.model(3);
    TrainConfig tc;
    tc.epochs = 1;
    tc.loss.gamma = 0.1;
    const TrainResult r = train(m, f.data, f.geometry(), tc);
    REQUIRE(r.history.size() == 1);
    CHECK(std::isfinite(r.history[0].train_loss));
    CHECK(r.best_epoch == 1);
    CHECK(r.history[0].val.spikes.average().has_value());
  }

  TEST_CASE("threads do not change results") {
    Fixture f = make_fixture(8, {0.5, 0.25, 0.25}, OperatorMode::spectral_only, SpikingMode::on);
    auto run = [&](std::size_t threads) {
      VsGnoModel m = f.model(2);
      TrainConfig tc;
      tc.epochs = 2;
      tc.batch_size = 3;
      tc.threads = threads;
      tc.loss.gamma = 0.2;
      const TrainResult r = train(m, f.data, f.geometry(), tc);
      return std::make_pair(r.history.back().train_loss, m.parameters()[0].values()[0]);
    };
    const auto one = run(1);
    CHECK(one == run(1));
    CHECK(one == run(3));
  }

  TEST_CASE("overfitting a single repeated pair decreases the loss monotonically") {
    Fixture f = make_fixture(6, {4.0 / 6, 1.0 / 6, 1.0 / 6}, OperatorMode::spectral_only, SpikingMode::bypass);
    for (std::size_t i = 1; i < f.data.size(); ++i) {
      f.data.inputs[i] = f.data.inputs[0];
      f.data.outputs[i] = f.data.outputs[0];
    }
    VsGnoModel m = f.model(4);
    TrainConfig tc;
    tc.epochs = 20;
    const TrainResult r = train(m, f.data, f.geometry(), tc);
    for (std::size_t e = 1; e < r.history.size(); ++e) {
      CHECK(r.history[e].train_loss < r.history[e - 1].train_loss);
    }
  }

  TEST_CASE("evaluation aggregates spikes over the whole split") {
    const Fixture f = make_fixture(8, {0.5, 0.25, 0.25}, OperatorMode::full, SpikingMode::on);
    const VsGnoModel m = f.model(6);
    const Metrics metrics = evaluate(m, f.data, Split::train, f.geometry());
    std::map<std::size_t, std::pair<double, double>> per_layer;
    std::vector<Component> layer_component;
    double l2 = 0.0;
    const auto idx = f.data.indices(Split::train);
    for (auto i : idx) {
      std::vector<LayerTally> tallies;
      const RowMatrix pred = predict(m, f.geometry(), f.data, i, &tallies);
      l2 += relative_l2(pred, f.data.outputs[i]).mean / static_cast<double>(idx.size());
      layer_component.clear();
      for (std::size_t l = 0; l < tallies.size(); ++l) {
        per_layer[l].first += static_cast<double>(tallies[l].spikes);
        per_layer[l].second += static_cast<double>(tallies[l].opportunities);
        layer_component.push_back(tallies[l].component);
      }
    }
    CHECK(metrics.l2.mean == doctest::Approx(l2).epsilon(1e-12));
    for (std::size_t c = 0; c < kComponentCount; ++c) {
      double sum = 0.0, layers = 0.0;
      for (std::size_t l = 0; l < layer_component.size(); ++l) {
        if (static_cast<std::size_t>(layer_component[l]) != c) continue;
        sum += per_layer[l].first / per_layer[l].second;
        layers += 1.0;
      }
      REQUIRE(metrics.spikes.rates[c].has_value());
      CHECK(*metrics.spikes.rates[c] == doctest::Approx(sum / layers).epsilon(1e-12));
    }
  }

  TEST_CASE("bypass evaluation reports no spike rates") {
    const Fixture f = make_fixture(6, {4.0 / 6, 1.0 / 6, 1.0 / 6}, OperatorMode::full, SpikingMode::bypass);
    const Metrics m = evaluate(f.model(), f.data, Split::test, f.geometry());
    CHECK_FALSE(m.spikes.average().has_value());
  }

  TEST_CASE("training errors") {
    Fixture f = make_fixture(6, {4.0 / 6, 1.0 / 6, 1.0 / 6}, OperatorMode::spectral_only, SpikingMode::bypass);
    Dataset empty = f.data;
    empty.meta.splits = {0, 3, 3};
    VsGnoModel m = f.model();
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train(m, empty, f.geometry(), tc), EmptyDataset);
    CHECK_THROWS_AS(evaluate(m, empty, Split::train, f.geometry()), EmptyDataset);

    for (double& b : m.down_out.bias.mutable_values()) b = 1e308;
    try {
      train(m, f.data, f.geometry(), tc);
      FAIL("non-finite loss accepted");
    } catch (const NonFiniteLoss& e) {
      CHECK(std::string(e.what()).find("epoch 1 batch 0") != std::string::npos);
    }
  }
}
