#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vsgno/autodiff.hpp"
#include "vsgno/graph_spectral.hpp"
#include "vsgno/spiking.hpp"

namespace vsgno {

enum class OperatorMode { full, spectral_only };
enum class SpikingMode { on, bypass };

std::string to_string(OperatorMode m);
std::string to_string(SpikingMode m);
OperatorMode parse_operator_mode(const std::string& s);
SpikingMode parse_spiking_mode(const std::string& s);

/// Network components whose VSN spike rates are reported and penalised.
enum class Component : std::size_t { embed = 0, lift, spectral, spatial, collab, final };
inline constexpr std::size_t kComponentCount = 6;
/// Column labels: S_M, S_P, S_spectral, S_spatial, S_f, S_final.
const char* component_label(Component c);
/// Whether a component owns VSNs under the given mode.
bool component_present(Component c, OperatorMode mode);

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t width = 32;
  std::size_t modes = 24;
  std::size_t spike_steps = 1;
  OperatorMode mode = OperatorMode::full;
  SpikingMode spiking = SpikingMode::on;
  std::size_t knn_k = 6;
  std::size_t embed_dim = 64;
  std::size_t input_dim = 22;
  std::size_t output_channels = 4;
  std::size_t coord_dim = 2;
  Activation activation = Activation::gelu;
  Activation embed_activation = Activation::gelu;
  double surrogate_slope = 25.0;
  double theta_init = 0.1;
  double beta_init = 0.5;
  SpikeGradient spike_gradient = SpikeGradient::surrogate;

  /// Throws ConfigError on any non-positive dimension or bad parameter.
  void validate() const;
};

/// Affine map x * weight + bias (weight is in x out).
struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;  // [out]

  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }
};

ad::Tensor apply_linear(ad::Tape& tape, const Linear& linear, const ad::Tensor& x);

struct SpectralLayer {
  ad::Tensor kernel;  // m x d x d
  Linear residual;
  VsnLayer vsn;
};

struct SpatialLayer {
  ad::Tensor weight;  // d x d, no bias
  ad::Tensor gate;    // one entry per stored adjacency edge
  VsnLayer vsn_transform;
  VsnLayer vsn_aggregate;
  Linear collab;  // 2d -> d
  VsnLayer vsn_collab;
};

class VsGnoModel {
 public:
  /// Fresh model with seeded initialization. `edge_count` is the number of
  /// stored edges in the symmetrized adjacency the gates align with.
  static VsGnoModel create(const ModelConfig& config, std::size_t edge_count, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t edge_count() const { return edge_count_; }

  /// Every trainable tensor in a fixed order with stable names.
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  std::vector<ad::Tensor> parameters() const;

  /// Independent copy of all parameter values.
  VsGnoModel clone() const;

  /// Applies `gradient` mode to every VSN (used by gradient checks).
  void set_spike_gradient(SpikeGradient gradient);
  /// Sets every threshold entry to `theta`.
  void set_thresholds(double theta);

  Linear embed_in, embed_out;
  VsnLayer embed_vsn;
  Linear lift_in, lift_out;
  VsnLayer lift_vsn_in, lift_vsn_out;
  std::vector<SpectralLayer> spectral;
  std::vector<SpatialLayer> spatial;  // empty in spectral_only mode
  Linear down_in;
  VsnLayer final_vsn;
  Linear down_out;

 private:
  ModelConfig config_;
  std::size_t edge_count_ = 0;
};

/// VSN states of every layer for one in-flight forward pass.
struct ModelState {
  VsnState embed, lift_in, lift_out, final;
  std::vector<VsnState> spectral, spatial_transform, spatial_aggregate, collab;

  static ModelState fresh(const VsGnoModel& model);
};

/// Spike totals of one VSN layer.
struct LayerTally {
  Component component;
  std::uint64_t spikes = 0;
  std::uint64_t opportunities = 0;
  double min_margin = std::numeric_limits<double>::infinity();
};

struct ForwardOutput {
  ad::Tensor output;  // n x k
  /// Per-component spike rate (mean over that component's VSN layers) as
  /// differentiable scalars; empty for absent components or in bypass mode.
  std::array<std::optional<ad::Tensor>, kComponentCount> rates;
  /// Per-layer totals in a fixed layer order; empty in bypass mode.
  std::vector<LayerTally> tallies;
};

/// Passes `z` through a VSN, or through the plain activation in bypass mode.
ad::Tensor apply_vsn(ad::Tape& tape, const VsGnoModel& model, const VsnLayer& layer, const ad::Tensor& z,
                     VsnState& state);

/// Input embedding W2 * V(W1 * u); returns a 1 x embed_dim tensor.
ad::Tensor embed_input(ad::Tape& tape, const VsGnoModel& model, const ad::Tensor& u_q, ModelState& state);

/// Rows [coords_i, embedding] for every node.
ad::Tensor build_node_features(ad::Tape& tape, const PointCloud& points, const ad::Tensor& embedding);

/// V(Q_m K x_1 Q_m^T v + w(v)). `q` is n x m and `q_t` its transpose, both constants.
ad::Tensor spectral_block(ad::Tape& tape, const VsGnoModel& model, std::size_t layer, const ad::Tensor& v,
                          const ad::Tensor& q, const ad::Tensor& q_t, ModelState& state);

/// V2(Gamma . A V1(v W)).
ad::Tensor spatial_block(ad::Tape& tape, const VsGnoModel& model, std::size_t layer, const ad::Tensor& v,
                         const Graph& graph, ModelState& state);

/// V_f(f([spatial || spectral]) + v_prev). Throws WrongMode in spectral_only mode.
ad::Tensor layer_combine(ad::Tape& tape, const VsGnoModel& model, std::size_t layer, const ad::Tensor& v_spatial,
                         const ad::Tensor& v_spectral, const ad::Tensor& v_prev, ModelState& state);

/// Full T-step forward for one input vector.
ForwardOutput forward(ad::Tape& tape, const VsGnoModel& model, const PointCloud& points, const Graph& graph,
                      const SpectralBasis& basis, std::span<const double> u_q);

}  // namespace vsgno
