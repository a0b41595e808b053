#include "smil/priors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "smil/binary_io.hpp"
#include "smil/error.hpp"
#include "smil/rng.hpp"

namespace smil::priors {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("priors: expected an N x d matrix, got " + shape_str(t.shape()));
  return {t.values().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (points.rank() != 2) throw ShapeError("kmeans: expected an N x d matrix, got " + shape_str(points.shape()));
  const std::size_t n = points.dim(0), d = points.dim(1);
  if (k < 1 || n < k) {
    throw std::invalid_argument("kmeans: need N >= k >= 1, got N=" + std::to_string(n) + " k=" + std::to_string(k));
  }
  const double* x = points.values().data();
  Rng rng(seed);

  std::vector<double> c(k * d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(n);
  std::copy_n(x + first * d, d, c.begin());
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(x + i * d, c.data() + (m - 1) * d, d));
      total += nearest[i];
    }
    std::size_t pick = rng.index(n);
    if (total > 0.0) {
      // D^2 sampling; points already chosen carry zero weight.
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (nearest[i] == 0.0) continue;
        pick = i;
        r -= nearest[i];
        if (r < 0.0) break;
      }
    }
    std::copy_n(x + pick * d, d, c.begin() + m * d);
  }

  KMeansResult res;
  res.assignments.assign(n, k);  // k = unassigned
  std::vector<double> dist(n);

  auto assign = [&] {
    bool changed = false;
#pragma omp parallel for schedule(static) reduction(|| : changed)
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < k; ++m) {
        const double dd = sq_dist(x + i * d, c.data() + m * d, d);
        if (dd < bd) bd = dd, best = m;
      }
      dist[i] = bd;
      if (res.assignments[i] != best) changed = true;
      res.assignments[i] = best;
    }
    return changed;
  };
  auto inertia = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sq_dist(x + i * d, c.data() + res.assignments[i] * d, d);
    return s;
  };

  assign();
  for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
    std::vector<double> sum(k * d, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto m = res.assignments[i];
      ++cnt[m];
      for (std::size_t j = 0; j < d; ++j) sum[m * d + j] += x[i * d + j];
    }
    for (std::size_t m = 0; m < k; ++m) {
      if (cnt[m] == 0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        std::copy_n(x + far * d, d, c.begin() + m * d);
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) c[m * d + j] = sum[m * d + j] / static_cast<double>(cnt[m]);
    }
    res.inertia_history.push_back(inertia());
    if (!assign()) {
      ++res.iterations;
      break;
    }
  }
  res.inertia = inertia();
  res.centroids = Tensor({k, d}, std::move(c));
  return res;
}

PcaBasis pca(const Tensor& points, std::size_t k) {
  const auto X = as_matrix(points);
  const auto n = X.rows(), d = X.cols();
  if (n < 2) throw std::invalid_argument("pca: covariance needs at least 2 points, got " + std::to_string(n));
  if (k < 1 || k > static_cast<std::size_t>(std::min(n, d))) {
    throw std::invalid_argument("pca: k must lie in [1, min(N, d)], got " + std::to_string(k));
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const RowMatrix centered = X.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");

  PcaBasis basis;
  basis.mean.assign(mean.data(), mean.data() + d);
  std::vector<double> dirs(k * static_cast<std::size_t>(d));
  for (std::size_t m = 0; m < k; ++m) {
    const auto col = d - 1 - static_cast<Eigen::Index>(m);  // eigenvalues ascend
    basis.variances.push_back(std::max(0.0, solver.eigenvalues()(col)));
    for (Eigen::Index j = 0; j < d; ++j) dirs[m * d + j] = solver.eigenvectors()(j, col);
  }
  basis.directions = Tensor({k, static_cast<std::size_t>(d)}, std::move(dirs));
  return basis;
}

ModalityPriors pca_priors(const Tensor& points, std::size_t k) {
  const auto basis = pca(points, k);
  const std::size_t d = basis.mean.size();
  std::vector<double> v(k * d);
  for (std::size_t m = 0; m < k; ++m) {
    const double sd = std::sqrt(basis.variances[m]);
    for (std::size_t j = 0; j < d; ++j) v[m * d + j] = basis.mean[j] + sd * basis.directions.at(m * d + j);
  }
  ModalityPriors p;
  p.vectors = Tensor({k, d}, std::move(v));
  p.source_count = points.dim(0);
  return p;
}

ModalityPriors build_priors(const data::MaskedDataset& data, const BuildOptions& opt, const FeatureEncoder& encoder) {
  if (opt.space == Space::embedding && !encoder) throw std::invalid_argument("priors: embedding space needs an encoder");
  const auto idx = data.complete_indices();
  if (idx.size() < std::max<std::size_t>(opt.k, opt.method == Method::pca ? 2 : 1)) {
    throw Error("insufficient-complete-samples", std::to_string(idx.size()) + " modality-complete samples for k=" +
                                                     std::to_string(opt.k));
  }
  const std::size_t d_in = numel(data.data.modality2_shape);
  std::vector<double> flat;
  flat.reserve(idx.size() * d_in);
  for (auto i : idx) {
    const auto& m2 = *data.data.samples[i].modality2;
    flat.insert(flat.end(), m2.begin(), m2.end());
  }
  Tensor points({idx.size(), d_in}, std::move(flat));
  if (opt.space == Space::embedding) points = encoder(points).detach();

  ModalityPriors p;
  if (opt.method == Method::kmeans) {
    p.vectors = kmeans(points, opt.k, opt.max_iters, opt.seed).centroids;
  } else {
    p = pca_priors(points, opt.k);
  }
  p.space = opt.space;
  p.source_count = idx.size();
  return p;
}

void write_priors(const std::filesystem::path& path, const ModalityPriors& priors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("priors: cannot write " + path.string());
  out.write("SMILP", 5);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(priors.count()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(priors.dim()));
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(priors.space));
  for (double v : priors.vectors.values()) io::write_le<double>(out, v);
}

ModalityPriors read_priors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("priors: cannot open " + path.string());
  io::expect_magic(in, "SMILP");
  const auto k = io::read_le<std::uint32_t>(in, "prior count");
  const auto d = io::read_le<std::uint32_t>(in, "prior dimension");
  const auto at = io::tell(in);
  const auto space = io::read_le<std::uint8_t>(in, "space tag");
  if (space > 1) throw io::FormatError("priors: unknown space tag", at);
  if (k == 0) throw io::FormatError("priors: zero priors", 5);
  std::vector<double> v(static_cast<std::size_t>(k) * d);
  for (auto& x : v) x = io::read_le<double>(in, "prior values");
  ModalityPriors p;
  p.vectors = Tensor({k, d}, std::move(v));
  p.space = static_cast<Space>(space);
  return p;
}

}  // namespace smil::priors
