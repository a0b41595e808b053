#include "smil/gaussian.hpp"

#include <cmath>

namespace smil {

NoiseSource NoiseSource::replay(std::vector<std::vector<double>> tape) {
  NoiseSource s(Mode::replay, 0);
  s.tape_ = std::move(tape);
  return s;
}

std::vector<double> NoiseSource::draw(std::size_t n) {
  switch (mode_) {
    case Mode::deterministic:
      return std::vector<double>(n, 0.0);
    case Mode::fresh:
      tape_.push_back(rng_.normals(n));
      return tape_.back();
    case Mode::replay:
      if (cursor_ >= tape_.size()) throw std::logic_error("noise: replay tape exhausted");
      if (tape_[cursor_].size() != n) {
        throw std::logic_error("noise: replay draw of " + std::to_string(n) + " values, tape holds " +
                               std::to_string(tape_[cursor_].size()));
      }
      return tape_[cursor_++];
  }
  return {};
}

LatentDraw sample_reparam(const GaussianSpec& spec, NoiseSource& noise) {
  if (spec.mean.shape() != spec.stddev.shape()) {
    throw ShapeError("sample_reparam: mean " + shape_str(spec.mean.shape()) + " vs stddev " +
                     shape_str(spec.stddev.shape()));
  }
  if (noise.is_deterministic()) return {spec.mean, {}};
  auto eps = noise.draw(spec.mean.size());
  Tensor e(spec.mean.shape(), eps);
  return {add(spec.mean, mul(spec.stddev, e)), std::move(eps)};
}

double kl_diag_gauss(std::span<const double> qm, std::span<const double> qs, std::span<const double> pm,
                     std::span<const double> ps) {
  if (qm.size() != qs.size() || qm.size() != pm.size() || qm.size() != ps.size()) {
    throw ShapeError("kl_diag_gauss: dimension mismatch (" + std::to_string(qm.size()) + " vs " +
                     std::to_string(pm.size()) + ")");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < qm.size(); ++i) {
    const double d = qm[i] - pm[i];
    kl += std::log(ps[i] / qs[i]) + (qs[i] * qs[i] + d * d) / (2.0 * ps[i] * ps[i]) - 0.5;
  }
  return kl;
}

Tensor kl_to_isotropic(const GaussianSpec& q, double prior_mean, double prior_std) {
  if (q.mean.shape() != q.stddev.shape() || q.mean.rank() != 2) {
    throw ShapeError("kl: mean " + shape_str(q.mean.shape()) + " vs stddev " + shape_str(q.stddev.shape()));
  }
  const double inv_two_var = 1.0 / (2.0 * prior_std * prior_std);
  // ln(ps / qs) + (qs^2 + (qm - pm)^2) / (2 ps^2) - 1/2, summed then row-averaged
  Tensor cells = add(scale(log(q.stddev), -1.0),
                     scale(add(square(q.stddev), square(add_scalar(q.mean, -prior_mean))), inv_two_var));
  const double rows = static_cast<double>(q.rows());
  const double constant = static_cast<double>(q.dim()) * (std::log(prior_std) - 0.5);
  return add_scalar(scale(sum(cells), 1.0 / rows), constant);
}

}  // namespace smil
