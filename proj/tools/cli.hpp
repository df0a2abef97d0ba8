#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsgno/datagen.hpp"
#include "vsgno/operator.hpp"
#include "vsgno/training.hpp"

namespace vsgno::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kNumeric = 4, kIncompatible = 5 };

/// Everything a run needs, serialized as one flat JSON object.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  AdamConfig adam;
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  double clip_norm = 1.0;

  std::string dataset = "data";
  std::string out = "run";
  std::string checkpoint;  // empty: <out>/checkpoint_best.bin
  std::string split = "test";
  std::vector<double> gammas{0.0, 0.05, 0.1, 0.5};

  // dataset generation
  std::size_t n_target = 400;
  std::size_t count = 300;
  std::array<double, 3> split_fracs{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};
  std::size_t q_flux = 20;
  DomainParams domain;
  std::array<double, 2> scalar_a_range{0.5, 1.5};
  std::array<double, 2> scalar_b_range{0.5, 1.5};

  /// Throws ConfigError.
  void validate() const;
  GenerateOptions generate_options() const;
  TrainConfig train_config() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Keys missing from `j` keep the values already in `base`. Unknown keys throw ConfigError.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path);

int cmd_generate(const RunConfig& cfg, bool force, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_sweep(const RunConfig& cfg, std::ostream& out);

/// One report row; nullopt cells print as "—".
struct ReportRow {
  double gamma = 0.0;
  std::optional<double> l2;  // fraction, printed as percent
  SpikeReport spikes;        // fractions, printed as percent
  std::string error;         // non-empty marks a failed run
};

inline const std::array<std::string, 8> kReportColumns = {"gamma", "L2",        "S_M",       "S_P",
                                                          "S_f",   "S_spectral", "S_spatial", "S_final"};

std::string format_report_csv(const std::vector<ReportRow>& rows, bool with_reference = true);
/// Parses the body of a report (comment lines skipped). Values come back
/// rounded to the printed precision. Throws FormatError.
std::vector<ReportRow> parse_report_csv(const std::string& text);

/// Entry point: parses argv, maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vsgno::cli
