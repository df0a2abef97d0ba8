#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>

#include "vsgno/autodiff.hpp"

namespace vsgno {

/// Output nonlinearity of a VSN. Both satisfy activation(0) == 0 exactly.
enum class Activation { gelu, identity };

/// How the Heaviside in a VSN is differentiated during backward.
///  - surrogate: fast-sigmoid stand-in 1 / (1 + slope |M - theta|)^2
///  - none: the exact derivative away from the threshold, i.e. zero
enum class SpikeGradient { surrogate, none };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Variable Spiking Neuron layer with per-feature threshold and leakage.
///
/// Leakage is stored unconstrained (`beta_raw`) and applied as
/// sigmoid(beta_raw), which keeps it in (0, 1).
struct VsnLayer {
  std::size_t feature_dim = 0;
  ad::Tensor theta;     // [d]
  ad::Tensor beta_raw;  // [d]
  Activation activation = Activation::gelu;
  double surrogate_slope = 25.0;
  SpikeGradient spike_gradient = SpikeGradient::surrogate;

  static VsnLayer create(std::size_t feature_dim, Activation activation, double theta_init = 0.1,
                         double beta_init = 0.5, double surrogate_slope = 25.0);

  /// Leakage actually applied to feature j.
  double leakage(std::size_t j) const;
  /// Sets beta_raw so that leakage(j) == beta for every feature.
  void set_leakage(double beta);
};

/// Membrane and spike counters of one VSN for one in-flight forward pass.
struct VsnState {
  ad::Tensor membrane;  // undefined until the first step
  std::uint64_t spike_count = 0;
  std::uint64_t opportunity_count = 0;
  /// Smallest |M - theta| seen over all steps.
  double min_margin = std::numeric_limits<double>::infinity();
  /// Differentiable running sum of emitted spikes (scalar on the tape).
  ad::Tensor spike_sum;
};

/// Plain activation sigma(z), used both inside the VSN and in bypass mode.
ad::Tensor activate(ad::Tape& tape, Activation activation, const ad::Tensor& z);

/// One spike step. M = beta * M_prev + z; spike where M >= theta; spiked
/// membranes reset to zero; returns sigma(z * spike). Counters in `state`
/// advance by the spikes emitted and by n * d opportunities.
ad::Tensor vsn_forward(ad::Tape& tape, const VsnLayer& layer, const ad::Tensor& z, VsnState& state);

/// Fast-sigmoid surrogate derivative g = 1 / (1 + slope |diff|)^2.
double surrogate_grad(double membrane_minus_theta, double slope);

/// spike_count / opportunity_count. Throws NoObservations before any step.
double spike_rate(const VsnState& state);

/// Differentiable spike rate (scalar tensor). Throws NoObservations before any step.
ad::Tensor spike_rate_tensor(ad::Tape& tape, const VsnState& state);

void reset_state(VsnState& state);

}  // namespace vsgno
