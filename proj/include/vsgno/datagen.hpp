#pragma once

// Synthetic sparse-to-dense benchmark: a dimpled 2D channel, boundary inputs
// (two scalars and a wall flux profile) and four dense fields obtained from
// graph-Laplacian reference solves.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vsgno/graph_spectral.hpp"

namespace vsgno {

struct DomainParams {
  double length = 2.0;
  double height = 1.0;
  double amplitude = 0.08;  // dimple depth on both walls; 0 gives a rectangle
  double wavenumber = 3.0;  // dimples along the channel
};

struct SyntheticDomain {
  DomainParams params;
  PointCloud points;
  std::vector<std::size_t> boundary;      // every boundary node
  std::vector<std::size_t> flux_segment;  // bottom wall, ordered by x
  std::vector<std::size_t> inlet;         // left wall
  std::vector<std::size_t> outlet;        // right wall
};

/// Deterministic domain with about n_target nodes (within 5%).
SyntheticDomain generate_domain(std::size_t n_target, std::uint64_t seed, const DomainParams& params = {});

/// Dirichlet-constrained solve of L x = source. Rows of Dirichlet nodes are
/// replaced by the prescribed values. Throws SingularSystem without Dirichlet
/// nodes and Disconnected if some component has none.
Eigen::VectorXd solve_dirichlet(const SparseMatrix& laplacian, std::span<const std::size_t> dirichlet_nodes,
                                std::span<const double> dirichlet_values, const Eigen::VectorXd& source);

inline constexpr std::size_t kChannels = 4;
inline const std::array<std::string, kChannels> kChannelNames = {"temperature", "velocity_x", "velocity_y",
                                                                  "pressure"};

/// Reference solver bound to one domain and graph. The Laplacian restricted
/// to the free nodes is factorized once.
class ReferenceSolver {
 public:
  ReferenceSolver(const SyntheticDomain& domain, const Graph& graph);
  ~ReferenceSolver();
  ReferenceSolver(ReferenceSolver&&) noexcept;
  ReferenceSolver& operator=(ReferenceSolver&&) noexcept;

  /// input = [inlet value, potential drive, flux profile...]; returns n x 4
  /// fields (temperature, velocity x/y, pressure).
  RowMatrix solve(std::span<const double> input) const;
  /// ||L x - b|| / ||b|| over the free rows of the last temperature and
  /// pressure solves, maximum of the two.
  double last_relative_residual() const { return last_residual_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  mutable double last_residual_ = 0.0;
};

/// Convenience wrapper constructing a ReferenceSolver for a single input.
RowMatrix solve_reference(const SyntheticDomain& domain, const Graph& graph, std::span<const double> input);

/// Flux profile values interpolated onto the flux segment nodes by x position.
std::vector<double> flux_on_segment(const SyntheticDomain& domain, std::span<const double> profile);

struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  double apply(std::size_t c, double x) const { return (x - mean[c]) / std[c]; }
  double invert(std::size_t c, double z) const { return z * std[c] + mean[c]; }
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  std::size_t total() const { return train + val + test; }
};

enum class Split { train, val, test };
Split parse_split(const std::string& s);
std::string to_string(Split s);

struct DatasetMeta {
  std::size_t n = 0, k = kChannels, q = 0, q_flux = 0;
  std::vector<std::string> channel_names;
  Normalization output_norm;
  Normalization input_norm;
  SplitSizes splits;
  std::uint64_t seed = 0;
  DomainParams domain;
  std::size_t knn_k = 6;
  std::array<double, 2> scalar_a_range{0.5, 1.5};
  std::array<double, 2> scalar_b_range{0.5, 1.5};

  double reconstruction_ratio() const { return static_cast<double>(n * k) / static_cast<double>(q); }
};

/// In-memory dataset. Samples are stored raw (physical units); the train
/// split comes first, then validation, then test.
struct Dataset {
  DatasetMeta meta;
  SyntheticDomain domain;
  std::vector<Eigen::VectorXd> inputs;  // q values each
  std::vector<RowMatrix> outputs;       // n x k each

  std::size_t size() const { return inputs.size(); }
  /// Sample indices of a split.
  std::vector<std::size_t> indices(Split split) const;
  Eigen::VectorXd normalized_input(std::size_t i) const;
  RowMatrix normalized_output(std::size_t i) const;
};

struct GenerateOptions {
  std::size_t n_target = 400;
  std::size_t count = 300;
  std::array<double, 3> split_fracs{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};
  std::size_t q_flux = 20;
  std::size_t knn_k = 6;
  std::uint64_t seed = 1;
  DomainParams domain;
  std::array<double, 2> scalar_a_range{0.5, 1.5};
  std::array<double, 2> scalar_b_range{0.5, 1.5};
};

/// Split sizes from fractions: train and val rounded to nearest, test takes
/// the remainder. Throws ConfigError if fractions are negative or do not sum to 1.
SplitSizes split_sizes(std::size_t count, const std::array<double, 3>& fracs);

/// Random smooth profile (low-order Fourier series) sampled at q_flux points.
std::vector<double> random_flux_profile(std::size_t q_flux, std::uint64_t seed);

Dataset generate_dataset(const GenerateOptions& options);

/// Writes meta.json, mesh.json and samples.bin into `dir` (created if absent).
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
/// Reads and validates a dataset directory. Throws FormatError,
/// ChecksumMismatch or IoError.
Dataset read_dataset(const std::filesystem::path& dir);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::string fnv1a64_hex(std::span<const unsigned char> bytes);

/// Graph for a dataset's mesh.
Graph dataset_graph(const Dataset& dataset, std::size_t knn_k);

}  // namespace vsgno
