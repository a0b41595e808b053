#include "smil/variational.hpp"

#include <cmath>
#include <stdexcept>

namespace smil {

SmilLoss smil_loss(const nn::Model& model, const nn::Batch& batch, const priors::ModalityPriors* priors,
                   NoiseSource& noise, const LossConfig& cfg, const nn::ForwardOptions& options) {
  if (cfg.mc_samples < 1) throw std::invalid_argument("smil_loss: need at least one draw");
  SmilLoss out;
  Tensor kl_omega = Tensor::scalar(0.0), kl_r = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < cfg.mc_samples; ++l) {
    auto fwd = nn::forward_classify(model, batch, priors, noise, options);
    Tensor ce = nn::classification_loss(fwd.logits, batch, model.config.multi_label, cfg.pos_weight);
    out.nll = l == 0 ? ce : add(out.nll, ce);
    // The posteriors depend on the inputs only, so the first draw's suffice.
    if (l == 0 && cfg.include_kl) {
      if (fwd.omega) kl_omega = kl_to_isotropic(*fwd.omega, kOmegaPriorMean);
      if (fwd.r) kl_r = kl_to_isotropic(*fwd.r, kRegPriorMean);
    }
  }
  if (cfg.mc_samples > 1) out.nll = scale(out.nll, 1.0 / static_cast<double>(cfg.mc_samples));
  out.kl_omega = kl_omega;
  out.kl_r = kl_r;
  out.total = cfg.kl_weight == 0.0 || !cfg.include_kl ? out.nll
                                                       : add(out.nll, scale(add(kl_omega, kl_r), cfg.kl_weight));

  auto& b = out.breakdown;
  b.nll = out.nll.item();
  b.kl_omega = kl_omega.item();
  b.kl_r = kl_r.item();
  b.total = out.total.item();
  b.mc_samples = cfg.mc_samples;
  return out;
}

}  // namespace smil
