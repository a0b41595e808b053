#pragma once

// Classification metrics and the two test-time patterns: both modalities, or
// modality 1 only with modality 2 reconstructed (SMIL) or zero-filled
// (models without a reconstruction path).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smil/dataset.hpp"
#include "smil/networks.hpp"
#include "smil/priors.hpp"

namespace smil::eval {

using BitMatrix = std::vector<std::vector<std::uint8_t>>;

double accuracy(std::span<const int> predicted, std::span<const int> truth);
/// 2TP / (2TP + FP + FN) over all cells; 0 when the denominator is 0.
double f1_micro(const BitMatrix& predicted, const BitMatrix& truth);
/// Per-row F1 (0 for an empty row denominator), averaged over rows.
double f1_samples(const BitMatrix& predicted, const BitMatrix& truth);

struct MetricSet {
  double accuracy = 0.0;  // exact-match accuracy for multi-label tasks
  std::optional<double> f1_micro;
  std::optional<double> f1_samples;
};

enum class Pattern { full, image_only };
std::string pattern_name(Pattern p);
Pattern parse_pattern(const std::string& s);

struct EvalOptions {
  Pattern pattern = Pattern::full;
  std::size_t stochastic_samples = 0;  // 0: distribution means; L > 0: average of L draws
  std::uint64_t seed = 0;
  std::size_t chunk = 150;
};

struct Predictions {
  std::vector<int> labels;
  BitMatrix bits;  // multi-label tasks
};

/// Never touches the model's parameters or gradients.
Predictions predict(const nn::Model& model, const priors::ModalityPriors* priors, const data::MaskedDataset& data,
                    const EvalOptions& options = {});

MetricSet evaluate(const nn::Model& model, const priors::ModalityPriors* priors, const data::MaskedDataset& data,
                   const EvalOptions& options = {});

}  // namespace smil::eval
