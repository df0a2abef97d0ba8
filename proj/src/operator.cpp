#include "vsgno/operator.hpp"

#include <cmath>
#include <random>

#include "vsgno/errors.hpp"

namespace vsgno {
namespace {

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> unif(-bound, bound);
  std::vector<double> w(in * out), b(out);
  for (double& v : w) v = unif(rng);
  for (double& v : b) v = unif(rng);
  return Linear{ad::Tensor::from({in, out}, std::move(w), true), ad::Tensor::from({out}, std::move(b), true)};
}

template <typename Model, typename Fn>
void visit_parameters(Model& model, Fn&& fn) {
  auto linear = [&](const std::string& name, auto& lin) {
    fn(name + ".weight", lin.weight);
    fn(name + ".bias", lin.bias);
  };
  auto vsn = [&](const std::string& name, auto& layer) {
    fn(name + ".theta", layer.theta);
    fn(name + ".beta", layer.beta_raw);
  };
  linear("embed.in", model.embed_in);
  vsn("embed.vsn", model.embed_vsn);
  linear("embed.out", model.embed_out);
  linear("lift.in", model.lift_in);
  vsn("lift.vsn_in", model.lift_vsn_in);
  linear("lift.out", model.lift_out);
  vsn("lift.vsn_out", model.lift_vsn_out);
  for (std::size_t l = 0; l < model.spectral.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    auto& spec = model.spectral[l];
    fn(prefix + ".spectral.kernel", spec.kernel);
    linear(prefix + ".spectral.residual", spec.residual);
    vsn(prefix + ".spectral.vsn", spec.vsn);
    if (l < model.spatial.size()) {
      auto& spat = model.spatial[l];
      fn(prefix + ".spatial.weight", spat.weight);
      fn(prefix + ".spatial.gate", spat.gate);
      vsn(prefix + ".spatial.vsn_transform", spat.vsn_transform);
      vsn(prefix + ".spatial.vsn_aggregate", spat.vsn_aggregate);
      linear(prefix + ".collab", spat.collab);
      vsn(prefix + ".collab.vsn", spat.vsn_collab);
    }
  }
  linear("down.in", model.down_in);
  vsn("down.vsn", model.final_vsn);
  linear("down.out", model.down_out);
}

template <typename Model, typename Fn>
void visit_vsns(Model& model, Fn&& fn) {
  fn(model.embed_vsn);
  fn(model.lift_vsn_in);
  fn(model.lift_vsn_out);
  for (auto& s : model.spectral) fn(s.vsn);
  for (auto& s : model.spatial) {
    fn(s.vsn_transform);
    fn(s.vsn_aggregate);
    fn(s.vsn_collab);
  }
  fn(model.final_vsn);
}

}  // namespace

std::string to_string(OperatorMode m) { return m == OperatorMode::full ? "full" : "spectral_only"; }
std::string to_string(SpikingMode m) { return m == SpikingMode::on ? "on" : "bypass"; }

OperatorMode parse_operator_mode(const std::string& s) {
  if (s == "full") return OperatorMode::full;
  if (s == "spectral_only") return OperatorMode::spectral_only;
  throw ConfigError("unknown mode '" + s + "' (expected full or spectral_only)");
}

SpikingMode parse_spiking_mode(const std::string& s) {
  if (s == "on") return SpikingMode::on;
  if (s == "bypass") return SpikingMode::bypass;
  throw ConfigError("unknown spiking mode '" + s + "' (expected on or bypass)");
}

const char* component_label(Component c) {
  static constexpr const char* labels[] = {"S_M", "S_P", "S_spectral", "S_spatial", "S_f", "S_final"};
  return labels[static_cast<std::size_t>(c)];
}

bool component_present(Component c, OperatorMode mode) {
  return mode == OperatorMode::full || (c != Component::spatial && c != Component::collab);
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be at least 1");
  };
  positive(layers, "layers");
  positive(width, "width");
  positive(modes, "modes");
  positive(spike_steps, "spike_steps");
  positive(knn_k, "knn_k");
  positive(embed_dim, "embed_dim");
  positive(input_dim, "input_dim");
  positive(output_channels, "output_channels");
  positive(coord_dim, "coord_dim");
  if (!(surrogate_slope > 0)) throw ConfigError("surrogate_slope must be positive");
  if (!std::isfinite(theta_init)) throw ConfigError("theta_init must be finite");
  if (!(beta_init > 0 && beta_init < 1)) throw ConfigError("beta_init must lie in (0, 1)");
}

ad::Tensor apply_linear(ad::Tape& tape, const Linear& linear, const ad::Tensor& x) {
  return ad::add(tape, ad::matmul(tape, x, linear.weight), ad::broadcast_row(tape, linear.bias, x.rows()));
}

VsGnoModel VsGnoModel::create(const ModelConfig& config, std::size_t edge_count, std::uint64_t seed) {
  config.validate();
  VsGnoModel model;
  model.config_ = config;
  model.edge_count_ = edge_count;
  std::mt19937_64 rng(seed);

  const std::size_t d = config.width, m = config.modes, e = config.embed_dim;
  auto vsn = [&](std::size_t dim, Activation act) {
    return VsnLayer::create(dim, act, config.theta_init, config.beta_init, config.surrogate_slope);
  };

  model.embed_in = make_linear(config.input_dim, e, rng);
  model.embed_vsn = vsn(e, config.embed_activation);
  model.embed_out = make_linear(e, e, rng);
  model.lift_in = make_linear(config.coord_dim + e, d, rng);
  model.lift_vsn_in = vsn(d, config.activation);
  model.lift_out = make_linear(d, d, rng);
  model.lift_vsn_out = vsn(d, config.activation);

  const double kernel_scale = 1.0 / static_cast<double>(d * m);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t l = 0; l < config.layers; ++l) {
    SpectralLayer spec;
    std::vector<double> k(m * d * d);
    for (double& v : k) v = kernel_scale * unit(rng);
    spec.kernel = ad::Tensor::from({m, d, d}, std::move(k), true);
    spec.residual = make_linear(d, d, rng);
    spec.vsn = vsn(d, config.activation);
    model.spectral.push_back(std::move(spec));

    if (config.mode == OperatorMode::full) {
      SpatialLayer spat;
      const double bound = 1.0 / std::sqrt(static_cast<double>(d));
      std::uniform_real_distribution<double> wdist(-bound, bound);
      std::vector<double> w(d * d);
      for (double& v : w) v = wdist(rng);
      spat.weight = ad::Tensor::from({d, d}, std::move(w), true);
      spat.gate = ad::Tensor::filled({edge_count}, 1.0, true);
      spat.vsn_transform = vsn(d, config.activation);
      spat.vsn_aggregate = vsn(d, config.activation);
      spat.collab = make_linear(2 * d, d, rng);
      spat.vsn_collab = vsn(d, config.activation);
      model.spatial.push_back(std::move(spat));
    }
  }
  model.down_in = make_linear(d, d, rng);
  model.final_vsn = vsn(d, config.activation);
  model.down_out = make_linear(d, config.output_channels, rng);
  model.set_spike_gradient(config.spike_gradient);
  return model;
}

std::vector<std::pair<std::string, ad::Tensor>> VsGnoModel::named_parameters() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  visit_parameters(*this, [&](const std::string& name, const ad::Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<ad::Tensor> VsGnoModel::parameters() const {
  std::vector<ad::Tensor> out;
  visit_parameters(*this, [&](const std::string&, const ad::Tensor& t) { out.push_back(t); });
  return out;
}

VsGnoModel VsGnoModel::clone() const {
  VsGnoModel copy = *this;
  visit_parameters(copy, [](const std::string&, ad::Tensor& t) { t = t.clone(); });
  return copy;
}

void VsGnoModel::set_spike_gradient(SpikeGradient gradient) {
  config_.spike_gradient = gradient;
  visit_vsns(*this, [gradient](VsnLayer& layer) { layer.spike_gradient = gradient; });
}

void VsGnoModel::set_thresholds(double theta) {
  visit_vsns(*this, [theta](VsnLayer& layer) {
    for (double& v : layer.theta.mutable_values()) v = theta;
  });
}

ModelState ModelState::fresh(const VsGnoModel& model) {
  ModelState state;
  state.spectral.resize(model.spectral.size());
  state.spatial_transform.resize(model.spatial.size());
  state.spatial_aggregate.resize(model.spatial.size());
  state.collab.resize(model.spatial.size());
  return state;
}

ad::Tensor apply_vsn(ad::Tape& tape, const VsGnoModel& model, const VsnLayer& layer, const ad::Tensor& z,
                     VsnState& state) {
  if (model.config().spiking == SpikingMode::bypass) return activate(tape, layer.activation, z);
  return vsn_forward(tape, layer, z, state);
}

ad::Tensor embed_input(ad::Tape& tape, const VsGnoModel& model, const ad::Tensor& u_q, ModelState& state) {
  if (u_q.size() != model.config().input_dim) {
    throw ShapeMismatch("input has " + std::to_string(u_q.size()) + " values, model expects " +
                        std::to_string(model.config().input_dim));
  }
  const ad::Tensor row = u_q.rank() == 2 ? u_q : ad::constant({1, u_q.size()}, {u_q.values().begin(), u_q.values().end()});
  const ad::Tensor hidden = apply_vsn(tape, model, model.embed_vsn, apply_linear(tape, model.embed_in, row), state.embed);
  return apply_linear(tape, model.embed_out, hidden);
}

ad::Tensor build_node_features(ad::Tape& tape, const PointCloud& points, const ad::Tensor& embedding) {
  const std::size_t n = points.size(), dim = points.dim();
  std::vector<double> coords(points.coords.data(), points.coords.data() + n * dim);
  return ad::concat_columns(tape, ad::constant({n, dim}, std::move(coords)), ad::broadcast_row(tape, embedding, n));
}

ad::Tensor spectral_block(ad::Tape& tape, const VsGnoModel& model, std::size_t layer, const ad::Tensor& v,
                          const ad::Tensor& q, const ad::Tensor& q_t, ModelState& state) {
  const SpectralLayer& spec = model.spectral.at(layer);
  if (q.cols() != model.config().modes) {
    throw ShapeMismatch("basis has " + std::to_string(q.cols()) + " modes, model expects " +
                        std::to_string(model.config().modes));
  }
  const ad::Tensor coeffs = ad::matmul(tape, q_t, v);
  const ad::Tensor mixed = ad::mode1_kernel(tape, spec.kernel, coeffs);
  const ad::Tensor global = ad::matmul(tape, q, mixed);
  const ad::Tensor z = ad::add(tape, global, apply_linear(tape, spec.residual, v));
  return apply_vsn(tape, model, spec.vsn, z, state.spectral.at(layer));
}

ad::Tensor spatial_block(ad::Tape& tape, const VsGnoModel& model, std::size_t layer, const ad::Tensor& v,
                         const Graph& graph, ModelState& state) {
  if (model.config().mode != OperatorMode::full) throw WrongMode("spatial block requested in spectral_only mode");
  const SpatialLayer& spat = model.spatial.at(layer);
  if (spat.gate.size() != graph.edge_count()) {
    throw GateMisaligned("gate has " + std::to_string(spat.gate.size()) + " entries, graph stores " +
                         std::to_string(graph.edge_count()) + " edges");
  }
  const ad::Tensor h =
      apply_vsn(tape, model, spat.vsn_transform, ad::matmul(tape, v, spat.weight), state.spatial_transform.at(layer));
  const ad::Tensor agg = ad::sparse_gated_agg(tape, graph.adjacency, spat.gate, h);
  return apply_vsn(tape, model, spat.vsn_aggregate, agg, state.spatial_aggregate.at(layer));
}

ad::Tensor layer_combine(ad::Tape& tape, const VsGnoModel& model, std::size_t layer, const ad::Tensor& v_spatial,
                         const ad::Tensor& v_spectral, const ad::Tensor& v_prev, ModelState& state) {
  if (model.config().mode != OperatorMode::full) throw WrongMode("collaboration requested in spectral_only mode");
  const SpatialLayer& spat = model.spatial.at(layer);
  const ad::Tensor joined = ad::concat_columns(tape, v_spatial, v_spectral);
  const ad::Tensor z = ad::add(tape, apply_linear(tape, spat.collab, joined), v_prev);
  return apply_vsn(tape, model, spat.vsn_collab, z, state.collab.at(layer));
}

ForwardOutput forward(ad::Tape& tape, const VsGnoModel& model, const PointCloud& points, const Graph& graph,
                      const SpectralBasis& basis, std::span<const double> u_q) {
  const ModelConfig& cfg = model.config();
  const std::size_t n = points.size();
  if (graph.n != n || static_cast<std::size_t>(basis.q_matrix.rows()) != n) {
    throw ShapeMismatch("point cloud, graph and basis disagree on node count");
  }
  if (points.dim() != cfg.coord_dim) throw ShapeMismatch("coordinate dimension differs from model config");
  if (basis.m != cfg.modes) {
    throw ShapeMismatch("basis has " + std::to_string(basis.m) + " modes, model expects " + std::to_string(cfg.modes));
  }

  const ad::Tensor q = ad::constant({n, basis.m}, {basis.q_matrix.data(), basis.q_matrix.data() + n * basis.m});
  const RowMatrix qt_values = basis.q_matrix.transpose();
  const ad::Tensor q_t = ad::constant({basis.m, n}, {qt_values.data(), qt_values.data() + n * basis.m});
  const ad::Tensor u = ad::constant({1, u_q.size()}, {u_q.begin(), u_q.end()});

  ModelState state = ModelState::fresh(model);
  std::vector<ad::Tensor> steps;
  steps.reserve(cfg.spike_steps);
  for (std::size_t t = 0; t < cfg.spike_steps; ++t) {
    const ad::Tensor embedding = embed_input(tape, model, u, state);
    const ad::Tensor features = build_node_features(tape, points, embedding);
    ad::Tensor v = apply_vsn(tape, model, model.lift_vsn_in, apply_linear(tape, model.lift_in, features), state.lift_in);
    v = apply_vsn(tape, model, model.lift_vsn_out, apply_linear(tape, model.lift_out, v), state.lift_out);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const ad::Tensor spec = spectral_block(tape, model, l, v, q, q_t, state);
      if (cfg.mode == OperatorMode::full) {
        const ad::Tensor spat = spatial_block(tape, model, l, v, graph, state);
        v = layer_combine(tape, model, l, spat, spec, v, state);
      } else {
        v = spec;
      }
    }
    steps.push_back(apply_vsn(tape, model, model.final_vsn, apply_linear(tape, model.down_in, v), state.final));
  }

  ForwardOutput out;
  out.output = apply_linear(tape, model.down_out, ad::mean_over(tape, steps));
  if (cfg.spiking == SpikingMode::bypass) return out;

  auto collect = [&](Component c, std::vector<const VsnState*> states) {
    std::vector<ad::Tensor> rates;
    for (const VsnState* s : states) {
      out.tallies.push_back({c, s->spike_count, s->opportunity_count, s->min_margin});
      rates.push_back(spike_rate_tensor(tape, *s));
    }
    if (rates.empty()) return;
    ad::Tensor total = rates.front();
    for (std::size_t i = 1; i < rates.size(); ++i) total = ad::add(tape, total, rates[i]);
    out.rates[static_cast<std::size_t>(c)] = ad::scale(tape, total, 1.0 / static_cast<double>(rates.size()));
  };
  auto pointers = [](const std::vector<VsnState>& v) {
    std::vector<const VsnState*> p;
    for (const auto& s : v) p.push_back(&s);
    return p;
  };
  collect(Component::embed, {&state.embed});
  collect(Component::lift, {&state.lift_in, &state.lift_out});
  collect(Component::spectral, pointers(state.spectral));
  if (cfg.mode == OperatorMode::full) {
    std::vector<const VsnState*> spatial;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      spatial.push_back(&state.spatial_transform[l]);
      spatial.push_back(&state.spatial_aggregate[l]);
    }
    collect(Component::spatial, spatial);
    collect(Component::collab, pointers(state.collab));
  }
  collect(Component::final, {&state.final});
  return out;
}

}  // namespace vsgno
