#pragma once

// The fused classifier (theta), the reconstruction network (phi_c), the
// regularization network (phi_r), and the forward pass that ties them
// together with the modality priors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smil/dataset.hpp"
#include "smil/gaussian.hpp"
#include "smil/priors.hpp"
#include "smil/tensor.hpp"

namespace smil::nn {

inline constexpr std::size_t kFeatureDim = 64;
inline constexpr double kStdFloor = 1e-6;

enum class RegOp { mul, add };
enum class OmegaMean { fixed, learned };
/// How a missing modality 2 is filled in: prior-weighted reconstruction,
/// direct regression of the modality by phi_c, or not at all.
enum class ReconMode { priors, direct, none };
enum class RegMode { learned, fixed_gaussian, off };

struct ModelConfig {
  Shape modality1_shape;  // {28, 28} image, {20, 20} audio map, or {d}
  Shape modality2_shape;
  std::size_t num_classes = 10;
  bool multi_label = false;
  std::size_t num_priors = 16;
  priors::Space prior_space = priors::Space::input;
  RegOp reg_op = RegOp::mul;
  OmegaMean omega_mean = OmegaMean::fixed;
  ReconMode recon = ReconMode::priors;
  RegMode reg = RegMode::learned;
  bool modality2_input = true;  // false: modality 2 is never read

  /// Width of x-hat^2: the modality-2 input size, or the feature width for
  /// embedding-space priors.
  std::size_t recon_dim() const;
};

// ---- parameters ------------------------------------------------------------

struct Dense {
  Tensor w;  // in x out
  Tensor b;  // out
};

struct Conv {
  Tensor w;  // out x in x k x k
  Tensor b;  // out
};

enum class EncoderKind { image, audio, vector };

struct Encoder {
  EncoderKind kind = EncoderKind::vector;
  Shape input_shape;
  std::optional<Conv> conv1, conv2;
  std::vector<Dense> dense;
};

struct MainNet {
  Encoder image;  // modality 1
  Encoder audio;  // modality 2
  Dense fuse;     // 128 -> 64, the regularized layer
  Dense out;      // 64 -> classes
};

struct ReconNet {
  Dense hidden;  // 64 -> 64
  Dense out;     // 64 -> K (2K for a learned mean, d for direct mode)
};

struct RegNet {
  Dense hidden;  // 128 -> 64
  Dense out;     // 64 -> 128: (mu, raw sigma)
};

struct Model {
  ModelConfig config;
  MainNet theta;
  ReconNet phi_c;
  RegNet phi_r;
};

using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

ParamRefs params(MainNet& net);
ParamRefs params(ReconNet& net);
ParamRefs params(RegNet& net);
/// theta, then phi_c, then phi_r.
ParamRefs params(Model& model);

/// Deep copy with independent storage.
MainNet clone(const MainNet& net);
Model clone(const Model& model);

/// Xavier-uniform weights, zero biases; phi_r's mu bias starts at ln(e - 1).
Model init_model(const ModelConfig& config, std::uint64_t seed);
Encoder init_encoder(const Shape& input_shape, Rng& rng);
Dense init_dense(std::size_t in, std::size_t out, Rng& rng);

std::size_t parameter_count(const MainNet& net);

// ---- batches ---------------------------------------------------------------

struct Batch {
  Tensor x1;                  // N x numel(modality1_shape)
  std::optional<Tensor> x2;   // N x numel(modality2_shape)
  std::vector<int> labels;
  std::vector<double> targets;  // N x classes 0/1 cells for multi-label tasks
  std::vector<std::size_t> indices;

  std::size_t size() const { return labels.size(); }
};

/// Gathers samples into flat row-major tensors. With `with_modality2`, every
/// sample must carry modality 2 (Error "missing-modality" otherwise).
Batch make_batch(const data::MaskedDataset& data, std::span<const std::size_t> indices, bool with_modality2);

// ---- forward pieces ----------------------------------------------------------

/// 64-wide feature. Image inputs are zero-padded from 28x28 to 32x32.
Tensor encode(const Encoder& encoder, const Tensor& x);

/// q(omega | x1): ones mean (fixed) and Softplus(raw) + 1e-6 stddev.
GaussianSpec predict_omega_spec(const ReconNet& net, const Tensor& feature1, const ModelConfig& config);

/// Weighted sum of priors: omega[N x K] * priors[K x d].
Tensor reconstruct(const Tensor& omega, const priors::ModalityPriors& priors);

/// q(r | h^{l-1}): (mu, Softplus(raw) + 1e-6).
GaussianSpec predict_reg_spec(const RegNet& net, const Tensor& fused);

/// h * Softplus(r) or h + Softplus(r).
Tensor regularize(const Tensor& h, const Tensor& r, RegOp op);

/// What to do when a batch has no modality 2.
enum class MissingPolicy {
  reconstruct,   // phi_c (+ priors) fill it in
  zero_feature,  // the modality-2 feature is all zeros
};

struct ForwardOptions {
  MissingPolicy missing = MissingPolicy::reconstruct;
  bool ignore_modality2 = false;  // treat modality 2 as absent even if given
};

struct ForwardResult {
  Tensor logits;                       // N x classes
  Tensor feature1;                     // modality-1 feature
  std::optional<GaussianSpec> omega;   // when reconstruction sampled omega
  std::optional<GaussianSpec> r;       // when the regularizer is learned
  Tensor reconstruction;               // x-hat^2 when reconstructed
};

ForwardResult forward_classify(const Model& model, const Batch& batch, const priors::ModalityPriors* priors,
                               NoiseSource& noise, const ForwardOptions& options = {});

/// Cross-entropy (softmax, or sigmoid for multi-label) of logits vs batch.
Tensor classification_loss(const Tensor& logits, const Batch& batch, bool multi_label, double pos_weight = 1.0);

// ---- checkpoints -------------------------------------------------------------

struct NamedBlock {
  std::string name;
  Tensor value;
};

std::uint64_t architecture_hash(std::span<const NamedBlock> blocks);
std::vector<NamedBlock> model_blocks(const Model& model);
/// Copies matching blocks into `model`; every model parameter must be present
/// with the same shape.
void load_model_blocks(Model& model, std::span<const NamedBlock> blocks);

/// "SMILW", u64 architecture hash, u32 block count, then per block:
/// u32 name length, name, u32 rank, u32 dims, float64 values.
void write_checkpoint(const std::filesystem::path& path, std::span<const NamedBlock> blocks);
std::vector<NamedBlock> read_checkpoint(const std::filesystem::path& path);

}  // namespace smil::nn
