#include "vsgno/spiking.hpp"

#include <algorithm>
#include <cmath>

#include "vsgno/errors.hpp"

namespace vsgno {

std::string to_string(Activation a) { return a == Activation::gelu ? "gelu" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

VsnLayer VsnLayer::create(std::size_t feature_dim, Activation activation, double theta_init, double beta_init,
                          double surrogate_slope) {
  if (feature_dim == 0) throw ShapeMismatch("VSN feature dimension must be positive");
  if (!(surrogate_slope > 0)) throw ConfigError("surrogate slope must be positive");
  VsnLayer layer;
  layer.feature_dim = feature_dim;
  layer.theta = ad::Tensor::filled({feature_dim}, theta_init, true);
  layer.beta_raw = ad::Tensor::zeros({feature_dim}, true);
  layer.activation = activation;
  layer.surrogate_slope = surrogate_slope;
  layer.set_leakage(beta_init);
  return layer;
}

double VsnLayer::leakage(std::size_t j) const { return 1.0 / (1.0 + std::exp(-beta_raw[j])); }

void VsnLayer::set_leakage(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("leakage must lie in (0, 1)");
  const double raw = std::log(beta / (1.0 - beta));
  for (double& v : beta_raw.mutable_values()) v = raw;
}

ad::Tensor activate(ad::Tape& tape, Activation activation, const ad::Tensor& z) {
  return activation == Activation::gelu ? ad::gelu(tape, z) : z;
}

double surrogate_grad(double membrane_minus_theta, double slope) {
  const double denom = 1.0 + slope * std::abs(membrane_minus_theta);
  return 1.0 / (denom * denom);
}

ad::Tensor vsn_forward(ad::Tape& tape, const VsnLayer& layer, const ad::Tensor& z, VsnState& state) {
  if (z.rank() != 2 || z.cols() != layer.feature_dim) {
    throw ShapeMismatch("VSN expects " + std::to_string(layer.feature_dim) + " features, got " +
                        ad::shape_string(z.shape()));
  }
  const std::size_t n = z.rows();

  ad::Tensor membrane;
  if (!state.membrane.defined()) {
    membrane = z;
  } else {
    if (state.membrane.shape() != z.shape()) throw ShapeMismatch("VSN membrane/input shape changed between steps");
    const ad::Tensor beta = ad::broadcast_row(tape, ad::sigmoid(tape, layer.beta_raw), n);
    membrane = ad::add(tape, ad::elementwise_mul(tape, beta, state.membrane), z);
  }

  std::function<double(double)> backward_scale;
  if (layer.spike_gradient == SpikeGradient::surrogate) {
    backward_scale = [slope = layer.surrogate_slope](double diff) { return surrogate_grad(diff, slope); };
  } else {
    backward_scale = [](double) { return 0.0; };
  }
  const ad::Tensor spikes = ad::heaviside_with_surrogate(tape, membrane, layer.theta, backward_scale);

  // Reset is a hard multiplicative mask; the spike pattern is held fixed in it.
  std::vector<double> keep(spikes.size());
  std::uint64_t fired = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    keep[i] = 1.0 - spikes[i];
    state.min_margin = std::min(state.min_margin, std::abs(membrane[i] - layer.theta[i % layer.feature_dim]));
    fired += spikes[i] != 0.0 ? 1 : 0;
  }
  state.membrane = ad::elementwise_mul(tape, membrane, ad::constant(spikes.shape(), std::move(keep)));
  state.spike_count += fired;
  state.opportunity_count += static_cast<std::uint64_t>(n) * layer.feature_dim;

  const ad::Tensor step_spikes = ad::sum(tape, spikes);
  state.spike_sum = state.spike_sum.defined() ? ad::add(tape, state.spike_sum, step_spikes) : step_spikes;

  return activate(tape, layer.activation, ad::elementwise_mul(tape, z, spikes));
}

double spike_rate(const VsnState& state) {
  if (state.opportunity_count == 0) throw NoObservations("VSN has not processed any step");
  return static_cast<double>(state.spike_count) / static_cast<double>(state.opportunity_count);
}

ad::Tensor spike_rate_tensor(ad::Tape& tape, const VsnState& state) {
  if (state.opportunity_count == 0) throw NoObservations("VSN has not processed any step");
  return ad::scale(tape, state.spike_sum, 1.0 / static_cast<double>(state.opportunity_count));
}

void reset_state(VsnState& state) {
  if (state.membrane.defined()) state.membrane = ad::Tensor::zeros(state.membrane.shape());
  state.spike_count = 0;
  state.min_margin = std::numeric_limits<double>::infinity();
  state.opportunity_count = 0;
  state.spike_sum = ad::Tensor{};
}

}  // namespace vsgno
