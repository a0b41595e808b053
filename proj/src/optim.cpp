#include "smil/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace smil::optim {

Grads collect_grads(const nn::ParamRefs& params) {
  Grads g;
  g.reserve(params.size());
  for (const auto& [name, t] : params) {
    if (t->has_grad()) g.emplace_back(t->grad().begin(), t->grad().end());
    else g.emplace_back(t->size(), 0.0);
  }
  return g;
}

void zero_grads(const nn::ParamRefs& params) {
  for (const auto& [name, t] : params) t->zero_grad();
}

double global_norm(const Grads& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

double clip_global_norm(Grads& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double c = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g) v *= c;
  }
  return norm;
}

void sgd_step(const nn::ParamRefs& params, const Grads& grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto v = params[i].second->mutable_values();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= lr * grads[i][j];
  }
}

void Adam::step(const nn::ParamRefs& params, const Grads& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto& g : grads) {
      m_.emplace_back(g.size(), 0.0);
      v_.emplace_back(g.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].second->mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

}  // namespace smil::optim
