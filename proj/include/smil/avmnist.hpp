#pragma once

// avMNIST-style corpus handling: a procedural stand-in for the image and
// spoken-digit sources, audio directory ingestion, and the prepared dataset
// directory that `train`, `eval` and `ablate` read.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smil/dataset.hpp"
#include "smil/signal.hpp"

namespace smil::data {

struct AvmnistSynthConfig {
  std::size_t per_class = 150;
  std::uint64_t seed = 0;
  // images
  double image_noise = 0.15;       // stddev of additive pixel noise
  double occlusion_prob = 0.3;     // chance of one blanked rectangle
  // audio
  std::size_t speakers = 6;
  double snr_db_low = -10.0;
  double snr_db_high = 0.0;
  double formant_jitter = 0.08;    // relative, per clip
};

/// 28x28 images rendered from 8x8 digit glyphs: scaled, shifted, contrast
/// varied, noised and partly occluded. `per_class` glyphs of each class are
/// drawn without replacement.
ImageSet synth_digit_images(const ImageSet& glyphs, const AvmnistSynthConfig& config);

struct SpokenDigit {
  signal::WaveClip clip;
  int label = 0;
  std::size_t speaker = 0;
  std::size_t take = 0;

  /// "<digit>_<speaker>_<take>.wav"
  std::string file_name() const;
};

/// 8 kHz clips from a source-filter model: each digit is a fixed sequence of
/// voiced segments (formant triples) and noise bursts, varied per speaker
/// (pitch, vocal tract scale) and per take (timing, formants, noise).
std::vector<SpokenDigit> synth_spoken_digits(const AvmnistSynthConfig& config);

struct AudioCorpus {
  std::vector<signal::MfccMap> maps;  // unstandardized
  std::vector<int> labels;
  std::vector<std::string> names;
};

/// Every "<digit>_*.wav" in `dir`, in file name order.
AudioCorpus load_audio_dir(const std::filesystem::path& dir);
/// Precomputed maps plus an IDX label file.
AudioCorpus load_audio_features(const std::filesystem::path& features, const std::filesystem::path& labels);

struct Prepared {
  MaskedDataset train;
  MaskedDataset validation;
  signal::MfccStandardizer standardizer;  // fitted on the train split
};

/// Pairs, splits 70/30 (seeded), then standardizes the audio maps with
/// statistics of the train split only.
Prepared prepare_avmnist(const ImageSet& images, const AudioCorpus& audio, double train_fraction, std::uint64_t seed);

// ---- prepared directory ------------------------------------------------------

/// "SMILD", u32 rank1, dims1, u32 rank2, dims2, u32 classes, u8 multi_label,
/// u32 count, then per sample: u8 has_modality2, f64 modality1, [f64
/// modality2], i32 label, [u8 bits].
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// train.smild, validation.smild and manifest.tsv (the train split).
void save_prepared(const std::filesystem::path& dir, const MaskedDataset& train, const MaskedDataset& validation);
std::pair<MaskedDataset, MaskedDataset> load_prepared(const std::filesystem::path& dir);

}  // namespace smil::data
