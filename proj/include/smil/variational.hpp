#pragma once

// The Monte-Carlo training objective: mean cross-entropy over L latent draws
// plus the weighted KL of the omega and r posteriors to their fixed priors.

#include "smil/gaussian.hpp"
#include "smil/networks.hpp"

namespace smil {

inline constexpr double kOmegaPriorMean = 1.0;
inline constexpr double kRegPriorMean = 0.0;

struct LossConfig {
  std::size_t mc_samples = 1;
  double kl_weight = 1.0;
  bool include_kl = true;  // false drops both KL terms entirely
  double pos_weight = 1.0;
};

struct ObjectiveBreakdown {
  double nll = 0.0;
  double kl_omega = 0.0;
  double kl_r = 0.0;
  double total = 0.0;
  std::size_t mc_samples = 1;
};

struct SmilLoss {
  Tensor total;  // differentiable scalar
  Tensor nll;
  Tensor kl_omega;
  Tensor kl_r;
  ObjectiveBreakdown breakdown;
};

/// total = nll + kl_weight * (kl_omega + kl_r); KL terms are per-sample sums
/// averaged over the batch, against N(1, I) for omega and N(0, I) for r.
SmilLoss smil_loss(const nn::Model& model, const nn::Batch& batch, const priors::ModalityPriors* priors,
                   NoiseSource& noise, const LossConfig& config, const nn::ForwardOptions& options = {});

}  // namespace smil
