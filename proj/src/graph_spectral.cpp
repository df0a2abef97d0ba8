#include "vsgno/graph_spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <utility>

#include "vsgno/errors.hpp"
#include "vsgno/log.hpp"

namespace vsgno {
namespace {

std::shared_ptr<const ad::CsrMatrix> symmetric_csr(std::size_t n, const std::vector<Edge>& edges) {
  std::map<std::pair<std::size_t, std::size_t>, double> entries;
  auto put = [&](std::size_t u, std::size_t v, double w) {
    auto [it, inserted] = entries.emplace(std::make_pair(u, v), w);
    if (!inserted) it->second = std::max(it->second, w);
  };
  for (const auto& e : edges) {
    if (e.from >= n || e.to >= n) throw ShapeMismatch("edge endpoint out of range");
    if (e.from == e.to) continue;
    put(e.from, e.to, e.weight);
    put(e.to, e.from, e.weight);
  }
  auto csr = std::make_shared<ad::CsrMatrix>();
  csr->rows = csr->cols = n;
  csr->row_ptr.assign(n + 1, 0);
  csr->col.reserve(entries.size());
  csr->value.reserve(entries.size());
  for (const auto& [key, w] : entries) {
    ++csr->row_ptr[key.first + 1];
    csr->col.push_back(key.second);
    csr->value.push_back(w);
  }
  for (std::size_t u = 0; u < n; ++u) csr->row_ptr[u + 1] += csr->row_ptr[u];
  return csr;
}

void fix_signs(RowMatrix& q) {
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      // strict comparison keeps the lowest index among equal magnitudes
      if (std::abs(q(i, j)) > best + 1e-12) {
        best = std::abs(q(i, j));
        arg = i;
      }
    }
    if (q(arg, j) < 0) q.col(j) *= -1.0;
  }
}

double residual_bound(double lambda) { return 1e-7 * std::max(1.0, std::abs(lambda)); }

SpectralBasis dense_lowest(const SparseMatrix& laplacian, std::size_t m) {
  const Eigen::MatrixXd dense = Eigen::MatrixXd(laplacian);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
  if (solver.info() != Eigen::Success) throw ConvergenceFailure("dense symmetric eigensolver failed");
  SpectralBasis basis;
  basis.m = m;
  basis.eigenvalues = solver.eigenvalues().head(static_cast<Eigen::Index>(m));
  basis.q_matrix = solver.eigenvectors().leftCols(static_cast<Eigen::Index>(m));
  return basis;
}

// Block shift-invert subspace iteration with Rayleigh-Ritz extraction.
SpectralBasis iterative_lowest(const SparseMatrix& laplacian, std::size_t m) {
  const auto n = static_cast<Eigen::Index>(laplacian.rows());
  const auto block = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * m, m + 10));
  const double shift = 1e-3 * laplacian.diagonal().cwiseAbs().mean() + 1e-12;

  Eigen::SparseMatrix<double> shifted = laplacian;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor(shifted);
  if (factor.info() != Eigen::Success) throw ConvergenceFailure("shifted factorization failed");

  std::mt19937_64 rng(0x5eedu);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::MatrixXd x(n, block);
  for (Eigen::Index j = 0; j < block; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = unif(rng);
  }

  constexpr int kMaxIterations = 500;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    Eigen::MatrixXd y = factor.solve(x);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
    x = qr.householderQ() * Eigen::MatrixXd::Identity(n, block);

    const Eigen::MatrixXd lx = laplacian * x;
    Eigen::MatrixXd h = x.transpose() * lx;
    h = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(h);
    x = x * small.eigenvectors();
    const Eigen::MatrixXd lx_rot = lx * small.eigenvectors();

    bool converged = true;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(m) && converged; ++j) {
      const double lambda = small.eigenvalues()(j);
      converged = (lx_rot.col(j) - lambda * x.col(j)).norm() <= 0.1 * residual_bound(lambda);
    }
    if (converged) {
      log::debug("subspace iteration converged after " + std::to_string(iter + 1) + " iterations");
      SpectralBasis basis;
      basis.m = m;
      basis.eigenvalues = small.eigenvalues().head(static_cast<Eigen::Index>(m));
      basis.q_matrix = x.leftCols(static_cast<Eigen::Index>(m));
      return basis;
    }
  }
  throw ConvergenceFailure("subspace iteration did not reach the residual tolerance in " +
                           std::to_string(kMaxIterations) + " iterations");
}

}  // namespace

std::vector<std::size_t> Graph::knn_of(std::size_t u) const {
  std::vector<std::size_t> out;
  for (const auto& e : directed_edges) {
    if (e.from == u) out.push_back(e.to);
  }
  return out;
}

Graph build_knn_graph(const PointCloud& points, std::size_t k) {
  const std::size_t n = points.size();
  if (n < 2) throw InvalidK("point cloud needs at least 2 points, got " + std::to_string(n));
  if (k < 1 || k >= n) {
    throw InvalidK("k=" + std::to_string(k) + " must satisfy 1 <= k < n=" + std::to_string(n));
  }
  if (!points.coords.allFinite()) throw DegenerateGeometry("non-finite coordinate");

  Graph graph;
  graph.n = n;
  graph.k_neighbors = k;
  graph.directed_edges.reserve(n * k);
  std::vector<std::pair<double, std::size_t>> candidates(n - 1);
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t c = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) continue;
      const double d2 = (points.coords.row(static_cast<Eigen::Index>(u)) -
                         points.coords.row(static_cast<Eigen::Index>(v)))
                            .squaredNorm();
      if (d2 == 0.0) {
        throw DegenerateGeometry("points " + std::to_string(u) + " and " + std::to_string(v) + " coincide");
      }
      candidates[c++] = {d2, v};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end());
    for (std::size_t i = 0; i < k; ++i) {
      graph.directed_edges.push_back({u, candidates[i].second, 1.0 / std::sqrt(candidates[i].first)});
    }
  }
  graph.adjacency = symmetric_csr(n, graph.directed_edges);
  return graph;
}

Graph graph_from_edges(std::size_t n, const std::vector<Edge>& edges) {
  for (const auto& e : edges) {
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw DegenerateGeometry("edge weight must be positive");
  }
  Graph graph;
  graph.n = n;
  graph.k_neighbors = 0;
  graph.directed_edges = edges;
  graph.adjacency = symmetric_csr(n, edges);
  return graph;
}

SparseMatrix combinatorial_laplacian(const Graph& graph) {
  const ad::CsrMatrix& a = *graph.adjacency;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(a.nnz() + a.rows);
  for (std::size_t u = 0; u < a.rows; ++u) {
    double degree = 0.0;
    for (std::size_t e = a.row_ptr[u]; e < a.row_ptr[u + 1]; ++e) {
      degree += a.value[e];
      triplets.emplace_back(static_cast<int>(u), static_cast<int>(a.col[e]), -a.value[e]);
    }
    triplets.emplace_back(static_cast<int>(u), static_cast<int>(u), degree);
  }
  SparseMatrix l(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
  l.setFromTriplets(triplets.begin(), triplets.end());
  return l;
}

SpectralBasis lowest_eigenpairs(const SparseMatrix& laplacian, std::size_t m) {
  const auto n = static_cast<std::size_t>(laplacian.rows());
  if (laplacian.rows() != laplacian.cols()) throw ShapeMismatch("laplacian must be square");
  if (m < 1 || m > n) {
    throw ShapeMismatch("requested " + std::to_string(m) + " modes of a " + std::to_string(n) + "-node graph");
  }
  const bool dense = n <= kDenseEigenLimit || 2 * m >= n;
  SpectralBasis basis = dense ? dense_lowest(laplacian, m) : iterative_lowest(laplacian, m);
  fix_signs(basis.q_matrix);

  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double lambda = basis.eigenvalues(jj);
    const double residual = (laplacian * basis.q_matrix.col(jj) - lambda * basis.q_matrix.col(jj)).norm();
    if (!(residual <= residual_bound(lambda))) {
      throw ConvergenceFailure("eigenpair " + std::to_string(j) + " residual " + std::to_string(residual));
    }
  }
  return basis;
}

RowMatrix gft(const SpectralBasis& basis, const RowMatrix& signal) {
  if (signal.rows() != basis.q_matrix.rows()) {
    throw ShapeMismatch("gft: signal has " + std::to_string(signal.rows()) + " rows, basis " +
                        std::to_string(basis.q_matrix.rows()));
  }
  return basis.q_matrix.transpose() * signal;
}

RowMatrix igft(const SpectralBasis& basis, const RowMatrix& coeffs) {
  if (coeffs.rows() != basis.q_matrix.cols()) {
    throw ShapeMismatch("igft: coefficients have " + std::to_string(coeffs.rows()) + " rows, basis " +
                        std::to_string(basis.q_matrix.cols()) + " modes");
  }
  return basis.q_matrix * coeffs;
}

std::size_t connected_components(const Graph& graph) {
  const ad::CsrMatrix& a = *graph.adjacency;
  std::vector<bool> seen(a.rows, false);
  std::size_t components = 0;
  for (std::size_t s = 0; s < a.rows; ++s) {
    if (seen[s]) continue;
    ++components;
    std::queue<std::size_t> frontier;
    frontier.push(s);
    seen[s] = true;
    while (!frontier.empty()) {
      const auto u = frontier.front();
      frontier.pop();
      for (std::size_t e = a.row_ptr[u]; e < a.row_ptr[u + 1]; ++e) {
        if (!seen[a.col[e]]) {
          seen[a.col[e]] = true;
          frontier.push(a.col[e]);
        }
      }
    }
  }
  return components;
}

}  // namespace vsgno
