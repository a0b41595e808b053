#pragma once

// Bimodal datasets: IDX ingestion, class-wise pairing, the seeded train /
// validation split, modality masking at ratio eta, and synthetic tasks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smil/signal.hpp"
#include "smil/tensor.hpp"

namespace smil::data {

struct ImageSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<double>> images;  // each rows*cols, values in [0, 1]
  std::vector<int> labels;
};

/// IDX image (magic 0x00000803) and label (0x00000801) files.
ImageSet load_idx_images(const std::filesystem::path& images, const std::filesystem::path& labels);
std::vector<int> load_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const ImageSet& set);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);

struct BimodalSample {
  std::vector<double> modality1;
  std::optional<std::vector<double>> modality2;
  int label = 0;
  std::vector<std::uint8_t> label_bits;  // multi-label tasks only

  bool has_modality2() const { return modality2.has_value(); }
};

struct Dataset {
  Shape modality1_shape;  // per sample, e.g. {28, 28} or {d}
  Shape modality2_shape;  // per sample, e.g. {20, 20} or {d}
  std::size_t num_classes = 0;
  bool multi_label = false;
  std::vector<BimodalSample> samples;

  std::size_t size() const { return samples.size(); }
};

enum class Split { train, validation };

/// A dataset whose modality-2 entries may be withheld. Withheld entries are
/// kept aside so the unmasked view can be restored.
struct MaskedDataset {
  Dataset data;
  double eta = 1.0;
  std::uint64_t seed = 0;
  Split split = Split::train;
  std::vector<std::optional<std::vector<double>>> withheld;  // parallel to samples

  std::size_t size() const { return data.samples.size(); }
  /// Indices of modality-complete samples (D^f).
  std::vector<std::size_t> complete_indices() const;
  /// Indices of modality-incomplete samples (D^m).
  std::vector<std::size_t> incomplete_indices() const;
  MaskedDataset unmasked() const;
};

/// Pairs each image with the audio map of the same class and the same
/// within-class index. Output follows image order.
Dataset pair_modalities(const ImageSet& images, std::span<const signal::MfccMap> audio,
                        std::span<const int> audio_labels);

/// Seeded shuffle, then the first round(fraction * N) samples train.
std::pair<MaskedDataset, MaskedDataset> split_dataset(const Dataset& paired, double train_fraction,
                                                      std::uint64_t seed);

std::pair<MaskedDataset, MaskedDataset> pair_and_split(const ImageSet& images,
                                                       std::span<const signal::MfccMap> audio,
                                                       std::span<const int> audio_labels, double train_fraction,
                                                       std::uint64_t seed);

/// Number of modality-complete samples kept: round-half-up of eta * n.
std::size_t complete_count(double eta, std::size_t n);

/// Keeps modality 2 on exactly complete_count(eta, N) samples chosen by a
/// seeded shuffle; withholds it elsewhere. Train split only.
MaskedDataset mask_modality(const MaskedDataset& train, double eta, std::uint64_t seed);

// ---- manifest ----------------------------------------------------------------

struct ManifestRecord {
  std::size_t index = 0;
  std::string label;  // class id, or a 0/1 string for multi-label tasks
  bool has_audio = false;
};

/// `index<TAB>label<TAB>has_audio` per sample.
void save_manifest(const std::filesystem::path& path, const MaskedDataset& data);
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
/// Re-applies a saved mask to the unmasked form of `data`.
MaskedDataset apply_manifest(const MaskedDataset& data, std::span<const ManifestRecord> records);

// ---- synthetic tasks -----------------------------------------------------------

struct SynthConfig {
  std::size_t num_samples = 1000;
  std::size_t num_classes = 2;
  std::size_t dim1 = 10;
  std::size_t dim2 = 10;
  double noise = 1.0;
  bool multi_label = false;
  std::uint64_t seed = 0;
  std::size_t latent_dim = 8;
  double separation = 0.4;     // scale of the class latent centroids
  double label_density = 0.3;  // per-class activation probability (multi-label)
};

/// Two views, each a distinct fixed random linear map of a shared
/// class-dependent latent, plus isotropic Gaussian noise.
Dataset synth_bimodal(const SynthConfig& config);

/// Whole dataset as an unmasked MaskedDataset (train split tag).
MaskedDataset as_masked(Dataset data, Split split = Split::train);

}  // namespace smil::data
