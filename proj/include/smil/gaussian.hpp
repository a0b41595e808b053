#pragma once

// Diagonal Gaussians: reparameterized draws with recordable noise, and the
// closed-form KL divergence between two of them.

#include <cstdint>
#include <vector>

#include "smil/rng.hpp"
#include "smil/tensor.hpp"

namespace smil {

/// Row-wise diagonal Gaussians: mean and stddev are both N x d.
struct GaussianSpec {
  Tensor mean;
  Tensor stddev;

  std::size_t rows() const { return mean.dim(0); }
  std::size_t dim() const { return mean.dim(1); }
};

/// Source of unit-normal epsilons.
///   deterministic: no noise; draws collapse to the mean.
///   fresh:         seeded draws, each appended to the tape.
///   replay:        returns the tape entries in order, then throws.
class NoiseSource {
 public:
  enum class Mode { deterministic, fresh, replay };

  static NoiseSource deterministic() { return NoiseSource(Mode::deterministic, 0); }
  static NoiseSource fresh(std::uint64_t seed) { return NoiseSource(Mode::fresh, seed); }
  static NoiseSource replay(std::vector<std::vector<double>> tape);

  Mode mode() const { return mode_; }
  bool is_deterministic() const { return mode_ == Mode::deterministic; }

  std::vector<double> draw(std::size_t n);

  const std::vector<std::vector<double>>& tape() const { return tape_; }
  /// Replay source over everything drawn so far.
  NoiseSource frozen() const { return replay(tape_); }
  void rewind() { cursor_ = 0; }

 private:
  NoiseSource(Mode mode, std::uint64_t seed) : mode_(mode), rng_(seed) {}

  Mode mode_;
  Rng rng_;
  std::vector<std::vector<double>> tape_;
  std::size_t cursor_ = 0;
};

struct LatentDraw {
  Tensor value;                  // N x d
  std::vector<double> epsilon;   // empty in deterministic mode
};

/// value = mean + stddev * eps; exactly the mean in deterministic mode.
LatentDraw sample_reparam(const GaussianSpec& spec, NoiseSource& noise);

/// Sum over coordinates of KL[q || p] for one pair of diagonal Gaussians.
double kl_diag_gauss(std::span<const double> q_mean, std::span<const double> q_std,
                     std::span<const double> p_mean, std::span<const double> p_std);

/// Per-row KL[q || p] summed over coordinates, averaged over rows. The prior
/// is a fixed isotropic Gaussian N(prior_mean, prior_std^2 I).
Tensor kl_to_isotropic(const GaussianSpec& q, double prior_mean, double prior_std = 1.0);

}  // namespace smil
