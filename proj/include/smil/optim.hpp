#pragma once

#include <cstddef>
#include <vector>

#include "smil/networks.hpp"

namespace smil::optim {

using Grads = std::vector<std::vector<double>>;

/// Copies each parameter's gradient (zeros where none was accumulated).
Grads collect_grads(const nn::ParamRefs& params);
void zero_grads(const nn::ParamRefs& params);

double global_norm(const Grads& grads);
/// Rescales all gradients jointly so their global norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(Grads& grads, double max_norm);

void sgd_step(const nn::ParamRefs& params, const Grads& grads, double lr);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const nn::ParamRefs& params, const Grads& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Grads m_, v_;
};

enum class Kind { adam, sgd };

/// Adam or plain SGD behind one interface.
class Optimizer {
 public:
  Optimizer(Kind kind, double lr) : kind_(kind), lr_(lr), adam_(lr) {}
  void step(const nn::ParamRefs& params, const Grads& grads) {
    if (kind_ == Kind::adam) adam_.step(params, grads);
    else sgd_step(params, grads, lr_);
  }

 private:
  Kind kind_;
  double lr_;
  Adam adam_;
};

}  // namespace smil::optim
