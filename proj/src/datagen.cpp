#include "vsgno/datagen.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "vsgno/errors.hpp"

namespace vsgno {
namespace {

double wall_offset(const DomainParams& p, double x) {
  return p.amplitude * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * p.wavenumber * x / p.length));
}

double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double result = 0.0, f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

/// Reduced system L_FF x_F = s_F - L_FD x_D for a fixed Dirichlet node set.
class DirichletSystem {
 public:
  DirichletSystem(const SparseMatrix& laplacian, std::span<const std::size_t> dirichlet_nodes)
      : laplacian_(laplacian), n_(static_cast<std::size_t>(laplacian.rows())) {
    if (dirichlet_nodes.empty()) throw SingularSystem("no Dirichlet nodes");
    fixed_.assign(n_, false);
    for (auto d : dirichlet_nodes) {
      if (d >= n_) throw ShapeMismatch("Dirichlet node index out of range");
      fixed_[d] = true;
    }
    check_anchored();
    free_index_.assign(n_, kNone);
    for (std::size_t i = 0; i < n_; ++i) {
      if (!fixed_[i]) {
        free_index_[i] = free_nodes_.size();
        free_nodes_.push_back(i);
      }
    }
    std::vector<Eigen::Triplet<double>> ff;
    for (Eigen::Index r = 0; r < laplacian.outerSize(); ++r) {
      const auto fr = free_index_[static_cast<std::size_t>(r)];
      if (fr == kNone) continue;
      for (SparseMatrix::InnerIterator it(laplacian, r); it; ++it) {
        const auto fc = free_index_[static_cast<std::size_t>(it.col())];
        if (fc != kNone) ff.emplace_back(static_cast<int>(fr), static_cast<int>(fc), it.value());
      }
    }
    const auto nf = static_cast<Eigen::Index>(free_nodes_.size());
    l_ff_.resize(nf, nf);
    l_ff_.setFromTriplets(ff.begin(), ff.end());
    if (nf > 0) {
      factor_.compute(l_ff_);
      if (factor_.info() != Eigen::Success) throw SingularSystem("free-node Laplacian is not positive definite");
    }
  }

  /// `values` is indexed by node (only Dirichlet entries are read).
  Eigen::VectorXd solve(const Eigen::VectorXd& values, const Eigen::VectorXd& source, double* residual) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      if (fixed_[i]) x(static_cast<Eigen::Index>(i)) = values(static_cast<Eigen::Index>(i));
    }
    const Eigen::VectorXd lx = laplacian_ * x;  // L_FD x_D on free rows
    const auto nf = static_cast<Eigen::Index>(free_nodes_.size());
    Eigen::VectorXd rhs(nf);
    for (Eigen::Index f = 0; f < nf; ++f) {
      const auto node = static_cast<Eigen::Index>(free_nodes_[static_cast<std::size_t>(f)]);
      rhs(f) = source(node) - lx(node);
    }
    if (nf > 0) {
      const Eigen::VectorXd xf = factor_.solve(rhs);
      for (Eigen::Index f = 0; f < nf; ++f) x(static_cast<Eigen::Index>(free_nodes_[static_cast<std::size_t>(f)])) = xf(f);
      if (residual != nullptr) {
        const double denom = rhs.norm();
        const double r = (l_ff_ * xf - rhs).norm();
        *residual = denom > 0 ? r / denom : r;
      }
    } else if (residual != nullptr) {
      *residual = 0.0;
    }
    return x;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  void check_anchored() const {
    std::vector<int> component(n_, -1);
    int count = 0;
    for (std::size_t s = 0; s < n_; ++s) {
      if (component[s] >= 0) continue;
      bool anchored = false;
      std::vector<std::size_t> stack{s};
      component[s] = count;
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        anchored = anchored || fixed_[u];
        for (SparseMatrix::InnerIterator it(laplacian_, static_cast<Eigen::Index>(u)); it; ++it) {
          const auto v = static_cast<std::size_t>(it.col());
          if (v != u && it.value() != 0.0 && component[v] < 0) {
            component[v] = count;
            stack.push_back(v);
          }
        }
      }
      if (!anchored) throw Disconnected("component containing node " + std::to_string(s) + " has no Dirichlet node");
      ++count;
    }
  }

  const SparseMatrix& laplacian_;
  std::size_t n_;
  std::vector<bool> fixed_;
  std::vector<std::size_t> free_index_;
  std::vector<std::size_t> free_nodes_;
  Eigen::SparseMatrix<double> l_ff_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor_;
};

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::span<const unsigned char> as_bytes(const std::string& s) {
  return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

nlohmann::json parse_json(const std::string& text, const std::string& name) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(name + ": " + e.what());
  }
}

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const std::string& file) {
  if (!j.contains(key)) throw FormatError(file + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

}  // namespace

// ---------------------------------------------------------------- domain

SyntheticDomain generate_domain(std::size_t n_target, std::uint64_t seed, const DomainParams& params) {
  if (n_target < 50) throw ConfigError("n_target must be at least 50");
  if (!(params.length > 0 && params.height > 0) || params.amplitude < 0 || 2 * params.amplitude >= params.height) {
    throw ConfigError("invalid domain parameters");
  }
  SyntheticDomain dom;
  dom.params = params;
  const double area = params.length * (params.height - params.amplitude);
  const double h = std::sqrt(area / static_cast<double>(n_target));

  std::vector<std::array<double, 2>> pts;
  const auto nx = static_cast<std::size_t>(std::max(2.0, std::round(params.length / h)));
  const auto ny = static_cast<std::size_t>(std::max(2.0, std::round(params.height / h)));

  // bottom wall (corners included), ordered by x
  for (std::size_t i = 0; i <= nx; ++i) {
    const double x = params.length * static_cast<double>(i) / static_cast<double>(nx);
    const std::size_t id = pts.size();
    pts.push_back({x, wall_offset(params, x)});
    dom.boundary.push_back(id);
    if (i == 0) dom.inlet.push_back(id);
    else if (i == nx) dom.outlet.push_back(id);
    else dom.flux_segment.push_back(id);
  }
  // top wall
  for (std::size_t i = 0; i <= nx; ++i) {
    const double x = params.length * static_cast<double>(i) / static_cast<double>(nx);
    const std::size_t id = pts.size();
    pts.push_back({x, params.height - wall_offset(params, x)});
    dom.boundary.push_back(id);
    if (i == 0) dom.inlet.push_back(id);
    else if (i == nx) dom.outlet.push_back(id);
  }
  // side walls without corners
  for (int side = 0; side < 2; ++side) {
    const double x = side == 0 ? 0.0 : params.length;
    const double lo = wall_offset(params, x), hi = params.height - wall_offset(params, x);
    for (std::size_t j = 1; j < ny; ++j) {
      const std::size_t id = pts.size();
      pts.push_back({x, lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(ny)});
      dom.boundary.push_back(id);
      (side == 0 ? dom.inlet : dom.outlet).push_back(id);
    }
  }

  // interior: scrambled Halton points, rejected near walls or near accepted points
  const std::size_t interior_target = n_target > pts.size() ? n_target - pts.size() : 0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double shift_x = unit(rng), shift_y = unit(rng);
  const std::uint64_t start = 1 + rng() % 100000;
  const double margin = 0.5 * h, min_gap = 0.45 * h;
  std::vector<std::array<double, 2>> interior;
  for (std::uint64_t idx = start; interior.size() < interior_target; ++idx) {
    if (idx - start > 200 * n_target) throw ConfigError("could not place interior nodes; domain too thin");
    const double x = params.length * std::fmod(radical_inverse(idx, 2) + shift_x, 1.0);
    const double y = params.height * std::fmod(radical_inverse(idx, 3) + shift_y, 1.0);
    if (x < margin || x > params.length - margin) continue;
    if (y < wall_offset(params, x) + margin || y > params.height - wall_offset(params, x) - margin) continue;
    bool crowded = false;
    for (const auto& p : interior) {
      if (std::hypot(p[0] - x, p[1] - y) < min_gap) {
        crowded = true;
        break;
      }
    }
    if (!crowded) interior.push_back({x, y});
  }
  pts.insert(pts.end(), interior.begin(), interior.end());

  dom.points.coords.resize(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    dom.points.coords(static_cast<Eigen::Index>(i), 0) = pts[i][0];
    dom.points.coords(static_cast<Eigen::Index>(i), 1) = pts[i][1];
  }
  return dom;
}

// ---------------------------------------------------------------- reference solves

Eigen::VectorXd solve_dirichlet(const SparseMatrix& laplacian, std::span<const std::size_t> dirichlet_nodes,
                                std::span<const double> dirichlet_values, const Eigen::VectorXd& source) {
  if (dirichlet_nodes.size() != dirichlet_values.size()) throw ShapeMismatch("Dirichlet nodes/values differ in length");
  if (source.size() != laplacian.rows()) throw ShapeMismatch("source length differs from matrix size");
  DirichletSystem system(laplacian, dirichlet_nodes);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(laplacian.rows());
  for (std::size_t i = 0; i < dirichlet_nodes.size(); ++i) {
    values(static_cast<Eigen::Index>(dirichlet_nodes[i])) = dirichlet_values[i];
  }
  return system.solve(values, source, nullptr);
}

std::vector<double> flux_on_segment(const SyntheticDomain& domain, std::span<const double> profile) {
  if (profile.empty()) throw ShapeMismatch("empty flux profile");
  std::vector<double> out;
  out.reserve(domain.flux_segment.size());
  const double len = domain.params.length;
  for (auto node : domain.flux_segment) {
    const double s = domain.points.coords(static_cast<Eigen::Index>(node), 0) / len;
    if (profile.size() == 1) {
      out.push_back(profile[0]);
      continue;
    }
    const double pos = std::clamp(s, 0.0, 1.0) * static_cast<double>(profile.size() - 1);
    const auto i0 = std::min(static_cast<std::size_t>(pos), profile.size() - 2);
    const double t = pos - static_cast<double>(i0);
    out.push_back((1.0 - t) * profile[i0] + t * profile[i0 + 1]);
  }
  return out;
}

struct ReferenceSolver::Impl {
  const SyntheticDomain& domain;
  SparseMatrix laplacian;
  std::vector<std::size_t> dirichlet;
  std::unique_ptr<DirichletSystem> system;
  SparseMatrix grad_x, grad_y;  // weighted least-squares gradient operators

  Impl(const SyntheticDomain& d, const Graph& graph) : domain(d), laplacian(combinatorial_laplacian(graph)) {
    if (graph.n != d.points.size()) throw ShapeMismatch("graph and domain disagree on node count");
    dirichlet = d.inlet;
    dirichlet.insert(dirichlet.end(), d.outlet.begin(), d.outlet.end());
    system = std::make_unique<DirichletSystem>(laplacian, dirichlet);

    const ad::CsrMatrix& a = *graph.adjacency;
    std::vector<Eigen::Triplet<double>> tx, ty;
    for (std::size_t u = 0; u < a.rows; ++u) {
      const auto ui = static_cast<Eigen::Index>(u);
      Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
      for (std::size_t e = a.row_ptr[u]; e < a.row_ptr[u + 1]; ++e) {
        const Eigen::Vector2d dvec = (d.points.coords.row(static_cast<Eigen::Index>(a.col[e])) - d.points.coords.row(ui)).transpose();
        g += a.value[e] * dvec * dvec.transpose();
      }
      const Eigen::Matrix2d ginv = g.completeOrthogonalDecomposition().pseudoInverse();
      double self_x = 0.0, self_y = 0.0;
      for (std::size_t e = a.row_ptr[u]; e < a.row_ptr[u + 1]; ++e) {
        const Eigen::Vector2d dvec = (d.points.coords.row(static_cast<Eigen::Index>(a.col[e])) - d.points.coords.row(ui)).transpose();
        const Eigen::Vector2d c = a.value[e] * (ginv * dvec);
        tx.emplace_back(static_cast<int>(u), static_cast<int>(a.col[e]), c(0));
        ty.emplace_back(static_cast<int>(u), static_cast<int>(a.col[e]), c(1));
        self_x -= c(0);
        self_y -= c(1);
      }
      tx.emplace_back(static_cast<int>(u), static_cast<int>(u), self_x);
      ty.emplace_back(static_cast<int>(u), static_cast<int>(u), self_y);
    }
    const auto n = static_cast<Eigen::Index>(a.rows);
    grad_x.resize(n, n);
    grad_y.resize(n, n);
    grad_x.setFromTriplets(tx.begin(), tx.end());
    grad_y.setFromTriplets(ty.begin(), ty.end());
  }
};

ReferenceSolver::ReferenceSolver(const SyntheticDomain& domain, const Graph& graph)
    : impl_(std::make_unique<Impl>(domain, graph)) {}
ReferenceSolver::~ReferenceSolver() = default;
ReferenceSolver::ReferenceSolver(ReferenceSolver&&) noexcept = default;
ReferenceSolver& ReferenceSolver::operator=(ReferenceSolver&&) noexcept = default;

RowMatrix ReferenceSolver::solve(std::span<const double> input) const {
  if (input.size() < 3) throw ShapeMismatch("reference input needs two scalars and a flux profile");
  const auto& dom = impl_->domain;
  const auto n = static_cast<Eigen::Index>(dom.points.size());
  const double inlet_value = input[0], drive = input[1];
  const auto flux = flux_on_segment(dom, input.subspan(2));

  Eigen::VectorXd values = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd source = Eigen::VectorXd::Zero(n);
  for (auto i : dom.inlet) values(static_cast<Eigen::Index>(i)) = inlet_value;
  for (std::size_t i = 0; i < dom.flux_segment.size(); ++i) source(static_cast<Eigen::Index>(dom.flux_segment[i])) = flux[i];
  double r_temp = 0.0, r_pot = 0.0;
  const Eigen::VectorXd temperature = impl_->system->solve(values, source, &r_temp);

  values.setZero();
  for (auto i : dom.inlet) values(static_cast<Eigen::Index>(i)) = drive;
  const Eigen::VectorXd potential = impl_->system->solve(values, Eigen::VectorXd::Zero(n), &r_pot);
  last_residual_ = std::max(r_temp, r_pot);

  RowMatrix out(n, static_cast<Eigen::Index>(kChannels));
  out.col(0) = temperature;
  out.col(1) = -(impl_->grad_x * potential);
  out.col(2) = -(impl_->grad_y * potential);
  out.col(3) = potential;
  return out;
}

RowMatrix solve_reference(const SyntheticDomain& domain, const Graph& graph, std::span<const double> input) {
  return ReferenceSolver(domain, graph).solve(input);
}

// ---------------------------------------------------------------- dataset

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::size_t begin = 0, count = meta.splits.train;
  if (split == Split::val) {
    begin = meta.splits.train;
    count = meta.splits.val;
  } else if (split == Split::test) {
    begin = meta.splits.train + meta.splits.val;
    count = meta.splits.test;
  }
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = begin + i;
  return out;
}

Eigen::VectorXd Dataset::normalized_input(std::size_t i) const {
  Eigen::VectorXd x = inputs.at(i);
  for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = meta.input_norm.apply(static_cast<std::size_t>(j), x(j));
  return x;
}

RowMatrix Dataset::normalized_output(std::size_t i) const {
  RowMatrix y = outputs.at(i);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    for (Eigen::Index c = 0; c < y.cols(); ++c) y(r, c) = meta.output_norm.apply(static_cast<std::size_t>(c), y(r, c));
  }
  return y;
}

SplitSizes split_sizes(std::size_t count, const std::array<double, 3>& fracs) {
  double total = 0.0;
  for (double f : fracs) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1 (got " + std::to_string(total) + ")");
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::llround(fracs[0] * static_cast<double>(count)));
  s.val = static_cast<std::size_t>(std::llround(fracs[1] * static_cast<double>(count)));
  if (s.train + s.val > count) throw ConfigError("split fractions exceed sample count");
  s.test = count - s.train - s.val;
  return s;
}

std::vector<double> random_flux_profile(std::size_t q_flux, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> base(0.5, 1.5), coef(-0.3, 0.3);
  const double c0 = base(rng);
  std::array<double, 3> a{}, b{};
  for (std::size_t j = 0; j < 3; ++j) {
    a[j] = coef(rng) / static_cast<double>(j + 1);
    b[j] = coef(rng) / static_cast<double>(j + 1);
  }
  std::vector<double> out(q_flux);
  for (std::size_t i = 0; i < q_flux; ++i) {
    const double s = q_flux > 1 ? static_cast<double>(i) / static_cast<double>(q_flux - 1) : 0.0;
    double v = c0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(j + 1) * s;
      v += a[j] * std::cos(w) + b[j] * std::sin(w);
    }
    out[i] = v;
  }
  return out;
}

Graph dataset_graph(const Dataset& dataset, std::size_t knn_k) { return build_knn_graph(dataset.domain.points, knn_k); }

Dataset generate_dataset(const GenerateOptions& opt) {
  if (opt.q_flux < 1) throw ConfigError("q_flux must be at least 1");
  Dataset ds;
  ds.meta.splits = split_sizes(opt.count, opt.split_fracs);
  if (ds.meta.splits.train < 1 || ds.meta.splits.val < 1 || ds.meta.splits.test < 1) {
    throw ConfigError("every split needs at least one sample");
  }
  ds.domain = generate_domain(opt.n_target, opt.seed, opt.domain);
  const Graph graph = build_knn_graph(ds.domain.points, opt.knn_k);
  const ReferenceSolver solver(ds.domain, graph);

  ds.meta.n = ds.domain.points.size();
  ds.meta.k = kChannels;
  ds.meta.q = 2 + opt.q_flux;
  ds.meta.q_flux = opt.q_flux;
  ds.meta.channel_names.assign(kChannelNames.begin(), kChannelNames.end());
  ds.meta.seed = opt.seed;
  ds.meta.domain = opt.domain;
  ds.meta.knn_k = opt.knn_k;
  ds.meta.scalar_a_range = opt.scalar_a_range;
  ds.meta.scalar_b_range = opt.scalar_b_range;

  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> da(opt.scalar_a_range[0], opt.scalar_a_range[1]);
  std::uniform_real_distribution<double> db(opt.scalar_b_range[0], opt.scalar_b_range[1]);
  for (std::size_t s = 0; s < opt.count; ++s) {
    Eigen::VectorXd input(static_cast<Eigen::Index>(ds.meta.q));
    input(0) = da(rng);
    input(1) = db(rng);
    const auto profile = random_flux_profile(opt.q_flux, rng());
    for (std::size_t i = 0; i < opt.q_flux; ++i) input(static_cast<Eigen::Index>(2 + i)) = profile[i];
    ds.outputs.push_back(solver.solve({input.data(), static_cast<std::size_t>(input.size())}));
    if (!(solver.last_relative_residual() <= 1e-10)) {
      throw SingularSystem("reference residual " + std::to_string(solver.last_relative_residual()) + " for sample " +
                           std::to_string(s));
    }
    ds.inputs.push_back(std::move(input));
  }

  // statistics from the train split only
  const auto train = ds.indices(Split::train);
  auto stats = [&](std::size_t dims, auto value_at, std::size_t per_sample) {
    Normalization norm;
    norm.mean.assign(dims, 0.0);
    norm.std.assign(dims, 0.0);
    const double count = static_cast<double>(train.size() * per_sample);
    for (std::size_t c = 0; c < dims; ++c) {
      double sum = 0.0;
      for (auto i : train) {
        for (std::size_t r = 0; r < per_sample; ++r) sum += value_at(i, r, c);
      }
      const double mean = sum / count;
      double var = 0.0;
      for (auto i : train) {
        for (std::size_t r = 0; r < per_sample; ++r) var += std::pow(value_at(i, r, c) - mean, 2);
      }
      norm.mean[c] = mean;
      norm.std[c] = var > 0 ? std::sqrt(var / count) : 1.0;
    }
    return norm;
  };
  ds.meta.output_norm = stats(
      kChannels,
      [&](std::size_t i, std::size_t r, std::size_t c) {
        return ds.outputs[i](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      },
      ds.meta.n);
  ds.meta.input_norm = stats(
      ds.meta.q, [&](std::size_t i, std::size_t, std::size_t c) { return ds.inputs[i](static_cast<Eigen::Index>(c)); }, 1);
  return ds;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_hex(std::span<const unsigned char> bytes) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json mesh;
  mesh["coords"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < ds.domain.points.coords.rows(); ++i) {
    mesh["coords"].push_back({ds.domain.points.coords(i, 0), ds.domain.points.coords(i, 1)});
  }
  mesh["boundary"] = ds.domain.boundary;
  mesh["flux_segment"] = ds.domain.flux_segment;
  mesh["inlet"] = ds.domain.inlet;
  mesh["outlet"] = ds.domain.outlet;
  mesh["knn_k"] = ds.meta.knn_k;
  const std::string mesh_text = mesh.dump(1) + "\n";

  std::string samples;
  samples.reserve(ds.size() * (ds.meta.q + ds.meta.n * ds.meta.k) * 8);
  auto put = [&](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) samples.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  };
  for (std::size_t s = 0; s < ds.size(); ++s) {
    for (Eigen::Index i = 0; i < ds.inputs[s].size(); ++i) put(ds.inputs[s](i));
    const RowMatrix& y = ds.outputs[s];
    for (Eigen::Index i = 0; i < y.size(); ++i) put(y.data()[i]);
  }

  const auto& m = ds.meta;
  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["n"] = m.n;
  meta["k"] = m.k;
  meta["q"] = m.q;
  meta["q_flux"] = m.q_flux;
  meta["channel_names"] = m.channel_names;
  meta["sample_count"] = ds.size();
  meta["splits"] = {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}};
  meta["seed"] = m.seed;
  meta["knn_k"] = m.knn_k;
  meta["domain"] = {{"length", m.domain.length},
                    {"height", m.domain.height},
                    {"amplitude", m.domain.amplitude},
                    {"wavenumber", m.domain.wavenumber}};
  meta["scalar_a_range"] = m.scalar_a_range;
  meta["scalar_b_range"] = m.scalar_b_range;
  meta["normalization"] = {{"output_mean", m.output_norm.mean},
                           {"output_std", m.output_norm.std},
                           {"input_mean", m.input_norm.mean},
                           {"input_std", m.input_norm.std}};
  meta["reconstruction_ratio"] = m.reconstruction_ratio();
  meta["strides"] = {{"input_values", m.q}, {"output_values", m.n * m.k}, {"sample_values", m.q + m.n * m.k}};
  meta["checksums"] = {{"mesh.json", fnv1a64_hex(as_bytes(mesh_text))},
                       {"samples.bin", fnv1a64_hex(as_bytes(samples))}};

  write_file(dir / "mesh.json", mesh_text);
  write_file(dir / "samples.bin", samples);
  write_file(dir / "meta.json", meta.dump(1) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const std::string meta_text = read_file(dir / "meta.json");
  const std::string mesh_text = read_file(dir / "mesh.json");
  const std::string samples = read_file(dir / "samples.bin");
  const auto meta = parse_json(meta_text, "meta.json");
  const auto mesh = parse_json(mesh_text, "mesh.json");

  Dataset ds;
  auto& m = ds.meta;
  if (field<int>(meta, "format_version", "meta.json") != 1) throw FormatError("meta.json: unsupported format_version");
  m.n = field<std::size_t>(meta, "n", "meta.json");
  m.k = field<std::size_t>(meta, "k", "meta.json");
  m.q = field<std::size_t>(meta, "q", "meta.json");
  m.q_flux = field<std::size_t>(meta, "q_flux", "meta.json");
  m.channel_names = field<std::vector<std::string>>(meta, "channel_names", "meta.json");
  m.seed = field<std::uint64_t>(meta, "seed", "meta.json");
  m.knn_k = field<std::size_t>(meta, "knn_k", "meta.json");
  const auto splits = field<nlohmann::json>(meta, "splits", "meta.json");
  m.splits.train = field<std::size_t>(splits, "train", "meta.json splits");
  m.splits.val = field<std::size_t>(splits, "val", "meta.json splits");
  m.splits.test = field<std::size_t>(splits, "test", "meta.json splits");
  const auto count = field<std::size_t>(meta, "sample_count", "meta.json");
  if (m.splits.total() != count) throw FormatError("meta.json: split sizes do not sum to sample_count");
  const auto domain = field<nlohmann::json>(meta, "domain", "meta.json");
  m.domain.length = field<double>(domain, "length", "meta.json domain");
  m.domain.height = field<double>(domain, "height", "meta.json domain");
  m.domain.amplitude = field<double>(domain, "amplitude", "meta.json domain");
  m.domain.wavenumber = field<double>(domain, "wavenumber", "meta.json domain");
  m.scalar_a_range = field<std::array<double, 2>>(meta, "scalar_a_range", "meta.json");
  m.scalar_b_range = field<std::array<double, 2>>(meta, "scalar_b_range", "meta.json");
  const auto norm = field<nlohmann::json>(meta, "normalization", "meta.json");
  m.output_norm.mean = field<std::vector<double>>(norm, "output_mean", "meta.json normalization");
  m.output_norm.std = field<std::vector<double>>(norm, "output_std", "meta.json normalization");
  m.input_norm.mean = field<std::vector<double>>(norm, "input_mean", "meta.json normalization");
  m.input_norm.std = field<std::vector<double>>(norm, "input_std", "meta.json normalization");
  if (m.output_norm.mean.size() != m.k || m.output_norm.std.size() != m.k || m.channel_names.size() != m.k) {
    throw FormatError("meta.json: per-channel arrays do not have k entries");
  }
  if (m.input_norm.mean.size() != m.q || m.input_norm.std.size() != m.q) {
    throw FormatError("meta.json: input normalization does not have q entries");
  }
  for (double s : m.output_norm.std) {
    if (!(s > 0)) throw FormatError("meta.json: output_std must be positive");
  }
  for (double s : m.input_norm.std) {
    if (!(s > 0)) throw FormatError("meta.json: input_std must be positive");
  }
  if (m.q != 2 + m.q_flux) throw FormatError("meta.json: q must equal 2 + q_flux");

  // mesh
  const auto coords = field<std::vector<std::array<double, 2>>>(mesh, "coords", "mesh.json");
  if (coords.size() != m.n) {
    throw FormatError("mesh.json has " + std::to_string(coords.size()) + " nodes but meta.json n=" + std::to_string(m.n));
  }
  ds.domain.params = m.domain;
  ds.domain.points.coords.resize(static_cast<Eigen::Index>(m.n), 2);
  for (std::size_t i = 0; i < m.n; ++i) {
    ds.domain.points.coords(static_cast<Eigen::Index>(i), 0) = coords[i][0];
    ds.domain.points.coords(static_cast<Eigen::Index>(i), 1) = coords[i][1];
  }
  ds.domain.boundary = field<std::vector<std::size_t>>(mesh, "boundary", "mesh.json");
  ds.domain.flux_segment = field<std::vector<std::size_t>>(mesh, "flux_segment", "mesh.json");
  ds.domain.inlet = field<std::vector<std::size_t>>(mesh, "inlet", "mesh.json");
  ds.domain.outlet = field<std::vector<std::size_t>>(mesh, "outlet", "mesh.json");
  for (const auto* list : {&ds.domain.boundary, &ds.domain.flux_segment, &ds.domain.inlet, &ds.domain.outlet}) {
    for (auto i : *list) {
      if (i >= m.n) throw FormatError("mesh.json: node index " + std::to_string(i) + " out of range");
    }
  }

  // samples: size first so truncation names the record, then checksums
  const std::size_t stride = m.q + m.n * m.k;
  const std::size_t record_bytes = stride * 8;
  if (samples.size() != count * record_bytes) {
    const std::size_t complete = samples.size() / record_bytes;
    throw FormatError("samples.bin: expected " + std::to_string(count) + " records of " + std::to_string(record_bytes) +
                      " bytes, file has " + std::to_string(samples.size()) + " bytes; record " +
                      std::to_string(complete) + " is incomplete or extra");
  }
  const auto sums = field<nlohmann::json>(meta, "checksums", "meta.json");
  if (field<std::string>(sums, "mesh.json", "meta.json checksums") != fnv1a64_hex(as_bytes(mesh_text))) {
    throw ChecksumMismatch("mesh.json does not match its recorded checksum");
  }
  if (field<std::string>(sums, "samples.bin", "meta.json checksums") != fnv1a64_hex(as_bytes(samples))) {
    throw ChecksumMismatch("samples.bin does not match its recorded checksum");
  }

  auto get = [&](std::size_t offset) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(samples[offset + b])) << (8 * b);
    return std::bit_cast<double>(bits);
  };
  std::size_t offset = 0;
  for (std::size_t s = 0; s < count; ++s) {
    Eigen::VectorXd input(static_cast<Eigen::Index>(m.q));
    for (std::size_t i = 0; i < m.q; ++i, offset += 8) input(static_cast<Eigen::Index>(i)) = get(offset);
    RowMatrix output(static_cast<Eigen::Index>(m.n), static_cast<Eigen::Index>(m.k));
    for (std::size_t i = 0; i < m.n * m.k; ++i, offset += 8) output.data()[i] = get(offset);
    if (!input.allFinite() || !output.allFinite()) throw FormatError("samples.bin: record " + std::to_string(s) + " is not finite");
    ds.inputs.push_back(std::move(input));
    ds.outputs.push_back(std::move(output));
  }
  return ds;
}

}  // namespace vsgno
