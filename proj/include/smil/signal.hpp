#pragma once

// MFCC feature maps for the audio modality, plus the WAV and precomputed
// feature file formats.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace smil::signal {

inline constexpr int kSampleRate = 8000;

struct WaveClip {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
};

/// 20 frames x 20 cepstral coefficients, row-major by frame.
struct MfccMap {
  static constexpr std::size_t kFrames = 20;
  static constexpr std::size_t kCoeffs = 20;
  std::vector<double> coefficients = std::vector<double>(kFrames * kCoeffs, 0.0);

  double& at(std::size_t frame, std::size_t coeff) { return coefficients[frame * kCoeffs + coeff]; }
  double at(std::size_t frame, std::size_t coeff) const { return coefficients[frame * kCoeffs + coeff]; }
};

struct MfccConfig {
  std::size_t frame_length = 400;  // 50 ms at 8 kHz
  std::size_t min_hop = 80;        // shorter clips are zero-padded up to this hop
  std::size_t fft_size = 512;
  std::size_t num_filters = 26;
  double low_hz = 0.0;
  double high_hz = 4000.0;
  double pre_emphasis = 0.97;
  double log_floor = 1e-10;
};

/// Triangular filters over the one-sided spectrum of an `fft_size` DFT.
struct FilterBank {
  std::size_t num_filters = 0;
  std::size_t num_bins = 0;         // fft_size / 2 + 1
  std::vector<double> weights;      // num_filters x num_bins
  std::vector<double> centers_hz;   // num_filters

  double weight(std::size_t filter, std::size_t bin) const { return weights[filter * num_bins + bin]; }
  std::vector<double> apply(std::span<const double> power) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

FilterBank mel_filterbank(std::size_t num_filters, std::size_t fft_size, int sample_rate, double low_hz,
                          double high_hz);

/// Hop that yields exactly 20 frames for a clip of `length` samples.
std::size_t frame_hop(std::size_t length, const MfccConfig& config);

/// Reusable extractor; owns the FFT plan, filterbank, and DCT basis.
class MfccExtractor {
 public:
  explicit MfccExtractor(MfccConfig config = {});
  ~MfccExtractor();
  MfccExtractor(const MfccExtractor&) = delete;
  MfccExtractor& operator=(const MfccExtractor&) = delete;

  /// Unstandardized MFCC map. Throws std::invalid_argument for an empty
  /// clip or a sample rate other than 8 kHz.
  MfccMap compute(const WaveClip& clip) const;

  /// Log mel energies per frame (20 x num_filters), before the DCT.
  std::vector<double> log_mel_energies(const WaveClip& clip) const;

  const MfccConfig& config() const { return config_; }
  const FilterBank& filterbank() const { return bank_; }

 private:
  struct Plan;
  MfccConfig config_;
  FilterBank bank_;
  std::vector<double> dct_;  // kCoeffs x num_filters, orthonormal DCT-II rows
  std::unique_ptr<Plan> plan_;
};

MfccMap mfcc(const WaveClip& clip, const MfccConfig& config = {});

/// Per-coefficient standardization fitted on a training corpus.
struct MfccStandardizer {
  std::vector<double> mean = std::vector<double>(MfccMap::kCoeffs, 0.0);
  std::vector<double> stddev = std::vector<double>(MfccMap::kCoeffs, 1.0);

  static MfccStandardizer fit(std::span<const MfccMap> corpus);
  void apply(MfccMap& map) const;
  MfccMap applied(MfccMap map) const {
    apply(map);
    return map;
  }
};

// ---- files ----------------------------------------------------------------

/// RIFF/WAVE, PCM 16-bit signed little-endian, mono.
WaveClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WaveClip& clip);

/// "SMILF", u32 count, u32 rows, u32 cols, then count row-major float64 maps.
std::vector<MfccMap> read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, std::span<const MfccMap> maps);

}  // namespace smil::signal
