#pragma once

// Bilevel meta-training (inner adaptation on D^m, outer update on D^f) and
// the Lower-Bound, Upper-Bound, and AE baselines.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "smil/dataset.hpp"
#include "smil/networks.hpp"
#include "smil/optim.hpp"
#include "smil/priors.hpp"
#include "smil/variational.hpp"

namespace smil::train {

enum class Method { smil, lower, upper, ae };
/// Where the outer update starts: from theta (the meta-gradient step) or from
/// the adapted theta* (the inner steps are kept).
enum class OuterAnchor { theta, adapted };

struct TrainConfig {
  Method method = Method::smil;
  double eta = 1.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 15000;
  double inner_lr = 1e-3;
  double outer_lr = 1e-3;
  std::size_t inner_steps = 1;
  std::size_t batch_m = 64;
  std::size_t batch_f = 64;
  std::size_t mc_samples = 1;
  double kl_weight = 1.0;
  bool deterministic = false;  // means instead of draws, no KL
  double clip_norm = 10.0;
  optim::Kind outer_optimizer = optim::Kind::adam;
  OuterAnchor outer_anchor = OuterAnchor::theta;
  double pos_weight = 1.0;

  std::size_t num_priors = 16;
  priors::Method prior_method = priors::Method::kmeans;
  priors::Space prior_space = priors::Space::input;
  std::size_t prior_refresh = 500;  // embedding space only
  std::size_t kmeans_iters = 100;

  nn::RegOp reg_op = nn::RegOp::mul;
  nn::OmegaMean omega_mean = nn::OmegaMean::fixed;
  nn::ReconMode recon = nn::ReconMode::priors;
  nn::RegMode reg = nn::RegMode::learned;

  bool ignore_mask = false;  // upper: train on the withheld modality too
  std::size_t ae_iterations = 2000;
  double ae_lr = 1e-3;
};

struct IterationRecord {
  std::size_t iter = 0;
  ObjectiveBreakdown outer;
};

struct TrainState {
  nn::Model model;
  std::optional<priors::ModalityPriors> priors;
  std::size_t iteration = 0;
  std::vector<IterationRecord> history;
  double ae_imputation_mse = -1.0;  // AE baseline only
};

/// Seen by the observer once per iteration, before the outer update.
struct IterationView {
  std::size_t iter = 0;
  std::span<const std::size_t> batch_m;  // sample indices in D^m
  std::span<const std::size_t> batch_f;  // sample indices in D^f
  const nn::MainNet* theta = nullptr;
  const nn::MainNet* theta_star = nullptr;
};
using Observer = std::function<void(const IterationView&)>;

nn::ModelConfig model_config(const data::Dataset& data, const TrainConfig& config);

/// Everything the meta-loop needs between iterations.
class MetaLearner {
 public:
  MetaLearner(const data::MaskedDataset& train, const TrainConfig& config);

  /// K plain-gradient steps on a copy of theta over a D^m batch, phi frozen.
  /// With `phi_c_grads`, also returns the first step's loss gradient with
  /// respect to phi_c.
  nn::MainNet inner(const nn::Batch& batch_m, NoiseSource& noise, optim::Grads* phi_c_grads = nullptr);

  /// Loss at theta* on a complete batch; updates theta and phi_r, and phi_c
  /// from the replayed inner gradient.
  ObjectiveBreakdown outer(const nn::MainNet& theta_star, const nn::Batch& batch_f, NoiseSource& noise,
                           const optim::Grads* phi_c_grads);

  /// One full iteration: sample batches, inner, outer.
  void step(const Observer& observer = {});

  TrainState& state() { return state_; }
  const TrainConfig& config() const { return config_; }
  void rebuild_priors();

 private:
  const data::MaskedDataset& train_;
  TrainConfig config_;
  TrainState state_;
  std::vector<std::size_t> d_f_, d_m_;
  Rng batch_rng_;
  NoiseSource noise_;
  optim::Optimizer opt_theta_, opt_phi_c_, opt_phi_r_;
};

TrainState train_smil(const data::MaskedDataset& train, const TrainConfig& config, const Observer& observer = {});

TrainState train_baseline(const data::MaskedDataset& train, const TrainConfig& config);

/// Image -> modality-2 regressor of the AE baseline.
struct AeNet {
  nn::Encoder encoder;
  nn::Dense hidden;  // 64 -> 128
  nn::Dense out;     // 128 -> d2
};

AeNet init_ae(const data::Dataset& data, std::uint64_t seed);
Tensor ae_forward(const AeNet& net, const Tensor& x1);
/// Trains on D^f with mean squared error; returns the final training MSE
/// over all of D^f.
double train_ae(AeNet& net, const data::MaskedDataset& train, const TrainConfig& config);

std::string method_name(Method m);
Method parse_method(const std::string& s);

}  // namespace smil::train
