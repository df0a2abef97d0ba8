#include "vsgno/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "vsgno/errors.hpp"
#include "vsgno/log.hpp"

namespace vsgno {
namespace {

/// Runs fn(item, worker) for item in [0, count) on up to `threads` workers.
/// Items are dealt round-robin so the assignment is deterministic.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += threads) fn(i, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ad::Tensor denormalize(ad::Tape& tape, const ad::Tensor& pred, const Normalization& norm) {
  const std::size_t n = pred.rows(), k = pred.cols();
  if (norm.mean.size() != k) throw ShapeMismatch("normalization has " + std::to_string(norm.mean.size()) + " channels");
  std::vector<double> stds(n * k), means(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      stds[i * k + c] = norm.std[c];
      means[i * k + c] = norm.mean[c];
    }
  }
  return ad::add(tape, ad::elementwise_mul(tape, pred, ad::constant({n, k}, std::move(stds))),
                 ad::constant({n, k}, std::move(means)));
}

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0) || !(gamma >= 0) || !std::isfinite(alpha) || !std::isfinite(gamma)) {
    throw ConfigError("alpha and gamma must be finite and non-negative");
  }
  if (alpha == 0 && gamma == 0) throw ConfigError("alpha and gamma cannot both be zero");
}

std::optional<double> SpikeReport::average() const {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : rates) {
    if (r) {
      total += *r;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

RelativeL2 relative_l2(const RowMatrix& pred, const RowMatrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ShapeMismatch("relative_l2: prediction and truth shapes differ");
  }
  RelativeL2 out;
  for (Eigen::Index c = 0; c < truth.cols(); ++c) {
    const double denom = truth.col(c).norm();
    if (denom == 0.0) throw ZeroNormChannel("channel " + std::to_string(c) + " of the truth is identically zero");
    out.per_channel.push_back((pred.col(c) - truth.col(c)).norm() / denom);
  }
  double total = 0.0;
  for (double v : out.per_channel) total += v;
  out.mean = out.per_channel.empty() ? 0.0 : total / static_cast<double>(out.per_channel.size());
  return out;
}

ad::Tensor relative_l2_tensor(ad::Tape& tape, const ad::Tensor& pred, const RowMatrix& truth) {
  const std::size_t n = pred.rows(), k = pred.cols();
  if (static_cast<std::size_t>(truth.rows()) != n || static_cast<std::size_t>(truth.cols()) != k) {
    throw ShapeMismatch("relative_l2_tensor: prediction and truth shapes differ");
  }
  std::vector<double> inv_norm(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double denom = truth.col(static_cast<Eigen::Index>(c)).norm();
    if (denom == 0.0) throw ZeroNormChannel("channel " + std::to_string(c) + " of the truth is identically zero");
    inv_norm[c] = 1.0 / denom;
  }
  const ad::Tensor truth_t = ad::constant({n, k}, {truth.data(), truth.data() + n * k});
  const ad::Tensor diff = ad::sub(tape, pred, truth_t);
  const ad::Tensor col_sq = ad::matmul(tape, ad::constant({1, n}, std::vector<double>(n, 1.0)),
                                       ad::elementwise_mul(tape, diff, diff));
  const ad::Tensor rel = ad::elementwise_mul(tape, ad::sqrt(tape, col_sq), ad::constant({1, k}, std::move(inv_norm)));
  return ad::scale(tape, ad::sum(tape, rel), 1.0 / static_cast<double>(k));
}

ad::Tensor energy_balance_loss(ad::Tape& tape, const ad::Tensor& l2,
                               const std::array<std::optional<ad::Tensor>, kComponentCount>& rates,
                               const LossConfig& cfg, OperatorMode mode, SpikingMode spiking) {
  if (l2.size() != 1) throw NotScalar("reconstruction term must be a scalar");
  const ad::Tensor error_term = ad::scale(tape, l2, cfg.alpha);
  if (spiking == SpikingMode::bypass) return error_term;

  std::optional<ad::Tensor> total;
  std::size_t count = 0;
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    const auto comp = static_cast<Component>(c);
    if (!component_present(comp, mode)) continue;
    if (!rates[c]) throw MissingComponent(std::string(component_label(comp)) + " rate missing");
    total = total ? ad::add(tape, *total, *rates[c]) : *rates[c];
    ++count;
  }
  const ad::Tensor spike_term = ad::scale(tape, *total, cfg.gamma / static_cast<double>(count));
  return ad::add(tape, error_term, spike_term);
}

void adam_step(std::span<ad::Tensor> params, std::span<const std::vector<double>> grads, OptimState& state) {
  if (grads.size() != params.size()) throw ShapeMismatch("adam_step: gradient list length differs");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeMismatch("adam_step: optimizer state size differs");
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].mutable_values();
    const auto& g = grads[p];
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (g.size() != values.size() || m.size() != values.size()) throw ShapeMismatch("adam_step: parameter shape changed");
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

void adam_step(std::span<ad::Tensor> params, OptimState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state);
}

double clip_global_norm(std::span<std::vector<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g) v *= s;
    }
  }
  return norm;
}

nlohmann::json epoch_record_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_l2_mean"] = r.val.l2.mean;
  j["val_l2_per_channel"] = r.val.l2.per_channel;
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    const auto& v = r.val.spikes.rates[c];
    j[component_label(static_cast<Component>(c))] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

ad::Tensor sample_loss(ad::Tape& tape, const VsGnoModel& model, const Geometry& geo, const Dataset& data,
                       std::size_t sample, const LossConfig& loss) {
  const Eigen::VectorXd u = data.normalized_input(sample);
  const ForwardOutput out = forward(tape, model, geo.points, geo.graph, geo.basis, as_span(u));
  const ad::Tensor pred = denormalize(tape, out.output, data.meta.output_norm);
  const ad::Tensor l2 = relative_l2_tensor(tape, pred, data.outputs.at(sample));
  return energy_balance_loss(tape, l2, out.rates, loss, model.config().mode, model.config().spiking);
}

RowMatrix predict(const VsGnoModel& model, const Geometry& geo, const Dataset& data, std::size_t sample,
                  std::vector<LayerTally>* tallies) {
  ad::Tape tape(false);
  const Eigen::VectorXd u = data.normalized_input(sample);
  ForwardOutput out = forward(tape, model, geo.points, geo.graph, geo.basis, as_span(u));
  const ad::Tensor pred = denormalize(tape, out.output, data.meta.output_norm);
  if (tallies != nullptr) *tallies = std::move(out.tallies);
  RowMatrix result(static_cast<Eigen::Index>(pred.rows()), static_cast<Eigen::Index>(pred.cols()));
  std::copy(pred.values().begin(), pred.values().end(), result.data());
  return result;
}

Metrics evaluate(const VsGnoModel& model, const Dataset& data, Split split, const Geometry& geo,
                 const LossConfig& loss, std::size_t threads) {
  const auto idx = data.indices(split);
  if (idx.empty()) throw EmptyDataset(to_string(split) + " split is empty");

  struct SampleResult {
    RelativeL2 l2;
    std::vector<LayerTally> tallies;
  };
  std::vector<SampleResult> results(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i, std::size_t) {
    RowMatrix pred = predict(model, geo, data, idx[i], &results[i].tallies);
    results[i].l2 = relative_l2(pred, data.outputs[idx[i]]);
  });

  Metrics m;
  const std::size_t k = results.front().l2.per_channel.size();
  m.l2.per_channel.assign(k, 0.0);
  const auto& layers = results.front().tallies;
  std::vector<std::uint64_t> spikes(layers.size(), 0), opportunities(layers.size(), 0);
  std::array<double, kComponentCount> sample_rate_sum{};
  double loss_sum = 0.0;
  for (const auto& r : results) {
    for (std::size_t c = 0; c < k; ++c) m.l2.per_channel[c] += r.l2.per_channel[c];
    std::array<double, kComponentCount> rate_sum{};
    std::array<std::size_t, kComponentCount> layer_count{};
    for (std::size_t l = 0; l < r.tallies.size(); ++l) {
      spikes[l] += r.tallies[l].spikes;
      opportunities[l] += r.tallies[l].opportunities;
      const auto c = static_cast<std::size_t>(r.tallies[l].component);
      rate_sum[c] += static_cast<double>(r.tallies[l].spikes) / static_cast<double>(r.tallies[l].opportunities);
      ++layer_count[c];
    }
    double spike_mean = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < kComponentCount; ++c) {
      if (layer_count[c] == 0) continue;
      const double rate = rate_sum[c] / static_cast<double>(layer_count[c]);
      sample_rate_sum[c] += rate;
      spike_mean += rate;
      ++present;
    }
    loss_sum += loss.alpha * r.l2.mean + (present ? loss.gamma * spike_mean / static_cast<double>(present) : 0.0);
  }
  const double count = static_cast<double>(results.size());
  double mean = 0.0;
  for (double& v : m.l2.per_channel) {
    v /= count;
    mean += v;
  }
  m.l2.mean = mean / static_cast<double>(k);
  m.loss = loss_sum / count;

  std::array<double, kComponentCount> ratio_sum{};
  std::array<std::size_t, kComponentCount> ratio_count{};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto c = static_cast<std::size_t>(layers[l].component);
    ratio_sum[c] += static_cast<double>(spikes[l]) / static_cast<double>(opportunities[l]);
    ++ratio_count[c];
  }
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    if (ratio_count[c] == 0) continue;
    m.spikes.rates[c] = ratio_sum[c] / static_cast<double>(ratio_count[c]);
    m.spikes_sample_mean.rates[c] = sample_rate_sum[c] / count;
  }
  return m;
}

TrainResult train(VsGnoModel& model, const Dataset& data, const Geometry& geo, const TrainConfig& cfg) {
  cfg.loss.validate();
  std::vector<std::size_t> order = data.indices(Split::train);
  if (order.empty()) throw EmptyDataset("train split is empty");
  if (data.indices(Split::val).empty()) throw EmptyDataset("validation split is empty");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");

  std::mt19937_64 rng(cfg.seed);
  std::vector<ad::Tensor> params = model.parameters();
  OptimState opt{cfg.adam, 0, {}, {}};

  const std::size_t workers = std::max<std::size_t>(1, cfg.threads);
  std::vector<VsGnoModel> replicas;
  if (workers > 1) {
    for (std::size_t w = 0; w < workers; ++w) replicas.push_back(model.clone());
  }

  TrainResult result;
  result.best_val_l2 = std::numeric_limits<double>::infinity();
  result.best_model = model.clone();

  std::vector<std::vector<double>> total(params.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t size = end - start;
      for (std::size_t p = 0; p < params.size(); ++p) total[p].assign(params[p].size(), 0.0);

      std::vector<double> losses(size);
      std::vector<std::vector<std::vector<double>>> sample_grads;
      auto run_sample = [&](const VsGnoModel& m, std::size_t i) {
        auto ps = m.parameters();
        for (auto& p : ps) p.zero_grad();
        ad::Tape tape;
        const ad::Tensor loss = sample_loss(tape, m, geo, data, order[start + i], cfg.loss);
        losses[i] = loss.item();
        tape.backward(loss);
        std::vector<std::vector<double>> g;
        g.reserve(ps.size());
        for (const auto& p : ps) g.push_back(p.grad());
        return g;
      };
      try {
        if (workers == 1) {
          for (std::size_t i = 0; i < size; ++i) {
            const auto g = run_sample(model, i);
            for (std::size_t p = 0; p < params.size(); ++p) {
              for (std::size_t e = 0; e < g[p].size(); ++e) total[p][e] += g[p][e];
            }
          }
        } else {
          for (auto& r : replicas) {
            auto dst = r.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
              std::copy(params[p].values().begin(), params[p].values().end(), dst[p].mutable_values().begin());
            }
          }
          sample_grads.resize(size);
          parallel_for(size, workers, [&](std::size_t i, std::size_t w) { sample_grads[i] = run_sample(replicas[w], i); });
          for (std::size_t i = 0; i < size; ++i) {
            for (std::size_t p = 0; p < params.size(); ++p) {
              for (std::size_t e = 0; e < total[p].size(); ++e) total[p][e] += sample_grads[i][p][e];
            }
          }
        }
      } catch (const NonFiniteValue& e) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + ": " + e.what());
      }

      for (std::size_t i = 0; i < size; ++i) {
        if (!std::isfinite(losses[i])) {
          throw NonFiniteLoss("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) +
                              ": loss is not finite");
        }
        loss_sum += losses[i];
      }
      const double inv = 1.0 / static_cast<double>(size);
      for (auto& g : total) {
        for (double& v : g) v *= inv;
      }
      for (const auto& g : total) {
        for (double v : g) {
          if (!std::isfinite(v)) {
            throw NonFiniteLoss("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) +
                                ": gradient is not finite");
          }
        }
      }
      clip_global_norm(total, cfg.clip_norm);
      adam_step(params, total, opt);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.val = evaluate(model, data, Split::val, geo, cfg.loss, workers);
    if (record.val.l2.mean < result.best_val_l2) {
      result.best_val_l2 = record.val.l2.mean;
      result.best_epoch = epoch;
      result.best_model = model.clone();
    }
    log::debug("epoch " + std::to_string(epoch) + " train_loss " + std::to_string(record.train_loss) + " val_l2 " +
               std::to_string(record.val.l2.mean));
    if (cfg.on_epoch) cfg.on_epoch(record);
    result.history.push_back(std::move(record));
  }
  return result;
}

}  // namespace vsgno
