#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsgno/autodiff.hpp"
#include "vsgno/datagen.hpp"
#include "vsgno/operator.hpp"

namespace vsgno {

struct LossConfig {
  double alpha = 1.0;
  double gamma = 0.0;

  /// Throws ConfigError if negative, non-finite or both zero.
  void validate() const;
};

/// Per-component spike rates; nullopt marks a component that does not apply.
struct SpikeReport {
  std::array<std::optional<double>, kComponentCount> rates;

  std::optional<double> operator[](Component c) const { return rates[static_cast<std::size_t>(c)]; }
  /// Mean over present components, nullopt if none is present.
  std::optional<double> average() const;
};

struct RelativeL2 {
  std::vector<double> per_channel;
  double mean = 0.0;
};

/// Channel-wise ||pred_c - truth_c|| / ||truth_c|| and their mean.
/// Throws ShapeMismatch or ZeroNormChannel.
RelativeL2 relative_l2(const RowMatrix& pred, const RowMatrix& truth);

/// Differentiable channel-mean relative L2 between `pred` (n x k tensor) and a constant truth.
ad::Tensor relative_l2_tensor(ad::Tape& tape, const ad::Tensor& pred, const RowMatrix& truth);

/// alpha * l2 + gamma * (mean of present component rates). Every component
/// present under `mode` must be supplied when spiking is on; in bypass mode
/// the spike term is zero. Throws MissingComponent.
ad::Tensor energy_balance_loss(ad::Tape& tape, const ad::Tensor& l2,
                               const std::array<std::optional<ad::Tensor>, kComponentCount>& rates,
                               const LossConfig& cfg, OperatorMode mode, SpikingMode spiking);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update of `params` from their grad slots.
void adam_step(std::span<ad::Tensor> params, OptimState& state);
/// Same, with explicit gradients (one vector per parameter).
void adam_step(std::span<ad::Tensor> params, std::span<const std::vector<double>> grads, OptimState& state);

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(std::span<std::vector<double>> grads, double max_norm);

struct Metrics {
  RelativeL2 l2;
  SpikeReport spikes;
  double loss = 0.0;
  /// Mean over samples of the per-sample component rates (diagnostic).
  SpikeReport spikes_sample_mean;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  Metrics val;
};

nlohmann::json epoch_record_json(const EpochRecord& record);

struct TrainConfig {
  LossConfig loss;
  AdamConfig adam;
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  /// Global-norm gradient clip; <= 0 disables clipping.
  double clip_norm = 1.0;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  VsGnoModel best_model;
  std::size_t best_epoch = 0;
  double best_val_l2 = 0.0;
};

/// Geometry shared by every sample of a dataset.
struct Geometry {
  const PointCloud& points;
  const Graph& graph;
  const SpectralBasis& basis;
};

/// Prediction for one sample in physical units (n x k).
RowMatrix predict(const VsGnoModel& model, const Geometry& geo, const Dataset& data, std::size_t sample,
                  std::vector<LayerTally>* tallies = nullptr);

/// Trains `model` in place (last-epoch state) and returns the history plus
/// the best-validation model. Throws EmptyDataset or NonFiniteLoss.
TrainResult train(VsGnoModel& model, const Dataset& data, const Geometry& geo, const TrainConfig& cfg);

/// Channel-wise relative L2 (mean over samples) and spike rates aggregated as
/// total spikes / total opportunities over the split. Throws EmptyDataset.
Metrics evaluate(const VsGnoModel& model, const Dataset& data, Split split, const Geometry& geo,
                 const LossConfig& loss = {}, std::size_t threads = 1);

/// Energy-error balance loss of one sample, recorded on `tape`.
ad::Tensor sample_loss(ad::Tape& tape, const VsGnoModel& model, const Geometry& geo, const Dataset& data,
                       std::size_t sample, const LossConfig& loss);

}  // namespace vsgno
