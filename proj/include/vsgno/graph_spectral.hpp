#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <cstddef>
#include <memory>
#include <vector>

#include "vsgno/autodiff.hpp"

namespace vsgno {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Evaluation points, one row per point.
struct PointCloud {
  RowMatrix coords;

  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(coords.cols()); }
};

struct Edge {
  std::size_t from;
  std::size_t to;
  double weight;
};

/// KNN graph with inverse-distance weights. `directed_edges` keeps the raw
/// k-nearest lists; `adjacency` is the symmetrized max(A, A^T).
struct Graph {
  std::size_t n = 0;
  std::size_t k_neighbors = 0;
  std::vector<Edge> directed_edges;
  std::shared_ptr<const ad::CsrMatrix> adjacency;

  std::size_t edge_count() const { return adjacency->nnz(); }
  /// Neighbors of u before symmetrization, nearest first.
  std::vector<std::size_t> knn_of(std::size_t u) const;
};

struct SpectralBasis {
  std::size_t m = 0;
  Eigen::VectorXd eigenvalues;  // ascending
  RowMatrix q_matrix;           // n x m, orthonormal columns
};

/// Exact k-nearest-neighbor graph. Ties in distance go to the lower index.
/// Throws InvalidK or DegenerateGeometry.
Graph build_knn_graph(const PointCloud& points, std::size_t k);

/// Graph over explicit undirected edges (symmetrized, duplicates keep the
/// larger weight). Used for hand-built graphs; k_neighbors is 0.
Graph graph_from_edges(std::size_t n, const std::vector<Edge>& edges);

/// L = D - A over the symmetrized adjacency.
SparseMatrix combinatorial_laplacian(const Graph& graph);

/// m smallest eigenpairs of a symmetric matrix, each column sign-fixed so its
/// largest-magnitude entry is positive. Throws ConvergenceFailure when a pair
/// misses the residual bound ||L q - lambda q|| <= 1e-7 max(1, lambda).
SpectralBasis lowest_eigenpairs(const SparseMatrix& laplacian, std::size_t m);

/// Matrix size at or below which lowest_eigenpairs uses a dense solve.
inline constexpr std::size_t kDenseEigenLimit = 1200;

RowMatrix gft(const SpectralBasis& basis, const RowMatrix& signal);
RowMatrix igft(const SpectralBasis& basis, const RowMatrix& coeffs);

/// Number of connected components of the symmetrized graph.
std::size_t connected_components(const Graph& graph);

}  // namespace vsgno
