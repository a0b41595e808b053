#include "smil/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "smil/binary_io.hpp"

namespace smil::signal {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> FilterBank::apply(std::span<const double> power) const {
  if (power.size() != num_bins) throw std::invalid_argument("filterbank: power spectrum has wrong length");
  std::vector<double> out(num_filters, 0.0);
  for (std::size_t m = 0; m < num_filters; ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < num_bins; ++k) acc += weights[m * num_bins + k] * power[k];
    out[m] = acc;
  }
  return out;
}

FilterBank mel_filterbank(std::size_t num_filters, std::size_t fft_size, int sample_rate, double low_hz,
                          double high_hz) {
  if (num_filters < 2) throw std::invalid_argument("mel_filterbank: need at least 2 filters");
  if (fft_size < 2) throw std::invalid_argument("mel_filterbank: fft size must be at least 2");
  if (sample_rate <= 0) throw std::invalid_argument("mel_filterbank: sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz <= nyquist)) {
    throw std::invalid_argument("mel_filterbank: invalid frequency range [" + std::to_string(low_hz) + ", " +
                                std::to_string(high_hz) + "] for sample rate " + std::to_string(sample_rate));
  }

  FilterBank bank;
  bank.num_filters = num_filters;
  bank.num_bins = fft_size / 2 + 1;
  bank.weights.assign(num_filters * bank.num_bins, 0.0);
  bank.centers_hz.resize(num_filters);

  const double mel_lo = hz_to_mel(low_hz), mel_hi = hz_to_mel(high_hz);
  std::vector<double> edges(num_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(num_filters + 1));
  }
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  for (std::size_t m = 0; m < num_filters; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bank.centers_hz[m] = center;
    double total = 0.0;
    for (std::size_t k = 0; k < bank.num_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      const double w = std::max(0.0, std::min(rise, fall));
      bank.weights[m * bank.num_bins + k] = w;
      total += w;
    }
    if (!(total > 0.0)) {
      throw std::invalid_argument("mel_filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; use fewer filters or a larger FFT");
    }
  }
  return bank;
}

std::size_t frame_hop(std::size_t length, const MfccConfig& config) {
  const std::size_t steps = MfccMap::kFrames - 1;
  std::size_t hop = length > config.frame_length ? (length - config.frame_length) / steps : 0;
  return std::clamp(hop, config.min_hop, config.frame_length);
}

struct MfccExtractor::Plan {
  fftw_plan plan = nullptr;
  ~Plan() {
    if (plan) fftw_destroy_plan(plan);
  }
};

MfccExtractor::MfccExtractor(MfccConfig config)
    : config_(config),
      bank_(mel_filterbank(config.num_filters, config.fft_size, kSampleRate, config.low_hz, config.high_hz)),
      plan_(std::make_unique<Plan>()) {
  if (config_.frame_length > config_.fft_size) throw std::invalid_argument("mfcc: frame longer than FFT size");
  if (config_.num_filters < MfccMap::kCoeffs) throw std::invalid_argument("mfcc: fewer filters than coefficients");
  if (config_.min_hop == 0) throw std::invalid_argument("mfcc: hop must be positive");

  const std::size_t n = config_.num_filters;
  dct_.resize(MfccMap::kCoeffs * n);
  for (std::size_t k = 0; k < MfccMap::kCoeffs; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      dct_[k * n + i] = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                                     (2.0 * static_cast<double>(n)));
    }
  }

  std::vector<double> in(config_.fft_size);
  std::vector<std::complex<double>> out(config_.fft_size / 2 + 1);
  plan_->plan = fftw_plan_dft_r2c_1d(static_cast<int>(config_.fft_size), in.data(),
                                     reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plan_->plan) throw std::runtime_error("mfcc: could not create FFT plan");
}

MfccExtractor::~MfccExtractor() = default;

std::vector<double> MfccExtractor::log_mel_energies(const WaveClip& clip) const {
  if (clip.samples.empty()) throw std::invalid_argument("mfcc: empty clip");
  if (clip.sample_rate != kSampleRate) {
    throw std::invalid_argument("mfcc: sample rate " + std::to_string(clip.sample_rate) +
                                " Hz unsupported (expected 8000 Hz; resample first)");
  }
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("mfcc: non-finite sample");
  }

  const auto& x = clip.samples;
  std::vector<double> emph(x.size());
  emph[0] = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) emph[i] = x[i] - config_.pre_emphasis * x[i - 1];

  const std::size_t hop = frame_hop(emph.size(), config_);
  const std::size_t target = config_.frame_length + (MfccMap::kFrames - 1) * hop;
  std::vector<double> norm(target, 0.0);
  if (emph.size() <= target) {
    const std::size_t left = (target - emph.size()) / 2;
    std::copy(emph.begin(), emph.end(), norm.begin() + static_cast<std::ptrdiff_t>(left));
  } else {
    const std::size_t skip = (emph.size() - target) / 2;
    std::copy_n(emph.begin() + static_cast<std::ptrdiff_t>(skip), target, norm.begin());
  }

  const std::size_t len = config_.frame_length;
  std::vector<double> window(len);
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len - 1));
  }

  const std::size_t bins = config_.fft_size / 2 + 1;
  std::vector<double> frame(config_.fft_size);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> power(bins);
  std::vector<double> out(MfccMap::kFrames * config_.num_filters);
  for (std::size_t f = 0; f < MfccMap::kFrames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t i = 0; i < len; ++i) frame[i] = norm[f * hop + i] * window[i];
    fftw_execute_dft_r2c(plan_->plan, frame.data(), reinterpret_cast<fftw_complex*>(spec.data()));
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(spec[k]) / static_cast<double>(config_.fft_size);
    auto energies = bank_.apply(power);
    for (std::size_t m = 0; m < config_.num_filters; ++m) {
      out[f * config_.num_filters + m] = std::log(std::max(energies[m], config_.log_floor));
    }
  }
  return out;
}

MfccMap MfccExtractor::compute(const WaveClip& clip) const {
  const auto logmel = log_mel_energies(clip);
  const std::size_t n = config_.num_filters;
  MfccMap map;
  for (std::size_t f = 0; f < MfccMap::kFrames; ++f) {
    for (std::size_t k = 0; k < MfccMap::kCoeffs; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += dct_[k * n + i] * logmel[f * n + i];
      map.at(f, k) = acc;
    }
  }
  return map;
}

MfccMap mfcc(const WaveClip& clip, const MfccConfig& config) { return MfccExtractor(config).compute(clip); }

MfccStandardizer MfccStandardizer::fit(std::span<const MfccMap> corpus) {
  if (corpus.empty()) throw std::invalid_argument("standardizer: empty corpus");
  MfccStandardizer s;
  const double count = static_cast<double>(corpus.size() * MfccMap::kFrames);
  for (std::size_t k = 0; k < MfccMap::kCoeffs; ++k) {
    double mu = 0.0;
    for (const auto& m : corpus)
      for (std::size_t f = 0; f < MfccMap::kFrames; ++f) mu += m.at(f, k);
    mu /= count;
    double var = 0.0;
    for (const auto& m : corpus)
      for (std::size_t f = 0; f < MfccMap::kFrames; ++f) var += (m.at(f, k) - mu) * (m.at(f, k) - mu);
    var /= count;
    s.mean[k] = mu;
    // A constant coefficient is only centred.
    s.stddev[k] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

void MfccStandardizer::apply(MfccMap& map) const {
  for (std::size_t f = 0; f < MfccMap::kFrames; ++f)
    for (std::size_t k = 0; k < MfccMap::kCoeffs; ++k) map.at(f, k) = (map.at(f, k) - mean[k]) / stddev[k];
}

// ---- WAV ------------------------------------------------------------------

WaveClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path.string());
  io::expect_magic(in, "RIFF");
  (void)io::read_le<std::uint32_t>(in, "RIFF size");
  io::expect_magic(in, "WAVE");

  bool have_fmt = false;
  WaveClip clip;
  while (true) {
    std::string id(4, '\0');
    io::read_bytes(in, id.data(), 4, "chunk id");
    const auto size = io::read_le<std::uint32_t>(in, "chunk size");
    const auto chunk_at = io::tell(in);
    if (id == "fmt ") {
      const auto format = io::read_le<std::uint16_t>(in, "audio format");
      const auto channels = io::read_le<std::uint16_t>(in, "channel count");
      const auto rate = io::read_le<std::uint32_t>(in, "sample rate");
      (void)io::read_le<std::uint32_t>(in, "byte rate");
      (void)io::read_le<std::uint16_t>(in, "block align");
      const auto bits = io::read_le<std::uint16_t>(in, "bits per sample");
      if (format != 1) throw io::FormatError("wav: only PCM (format 1) supported", chunk_at);
      if (channels != 1) throw io::FormatError("wav: only mono supported", chunk_at + 2);
      if (bits != 16) throw io::FormatError("wav: only 16-bit samples supported", chunk_at + 14);
      clip.sample_rate = static_cast<int>(rate);
      have_fmt = true;
      in.seekg(static_cast<std::streamoff>(chunk_at + size + (size & 1)));
    } else if (id == "data") {
      if (!have_fmt) throw io::FormatError("wav: data chunk before fmt chunk", chunk_at);
      const std::size_t n = size / 2;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] = static_cast<double>(io::read_le<std::int16_t>(in, "sample")) / 32768.0;
      }
      if (n == 0) throw io::FormatError("wav: empty data chunk", chunk_at);
      return clip;
    } else {
      in.seekg(static_cast<std::streamoff>(chunk_at + size + (size & 1)));
      if (!in) throw io::FormatError("wav: truncated chunk \"" + id + "\"", chunk_at);
    }
  }
}

void write_wav(const std::filesystem::path& path, const WaveClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  io::write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  io::write_le<std::uint32_t>(out, 16);
  io::write_le<std::uint16_t>(out, 1);
  io::write_le<std::uint16_t>(out, 1);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  io::write_le<std::uint16_t>(out, 2);
  io::write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  io::write_le<std::uint32_t>(out, data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    io::write_le<std::int16_t>(out, static_cast<std::int16_t>(scaled));
  }
}

// ---- SMILF ----------------------------------------------------------------

std::vector<MfccMap> read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("features: cannot open " + path.string());
  io::expect_magic(in, "SMILF");
  const auto count = io::read_le<std::uint32_t>(in, "count");
  const auto rows_at = io::tell(in);
  const auto rows = io::read_le<std::uint32_t>(in, "rows");
  const auto cols = io::read_le<std::uint32_t>(in, "cols");
  if (rows != MfccMap::kFrames || cols != MfccMap::kCoeffs) {
    throw io::FormatError("features: expected 20x20 maps, got " + std::to_string(rows) + "x" + std::to_string(cols),
                          rows_at);
  }
  std::vector<MfccMap> maps(count);
  for (auto& m : maps) {
    for (auto& v : m.coefficients) v = io::read_le<double>(in, "coefficient");
  }
  return maps;
}

void write_features(const std::filesystem::path& path, std::span<const MfccMap> maps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("features: cannot write " + path.string());
  out.write("SMILF", 5);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(maps.size()));
  io::write_le<std::uint32_t>(out, MfccMap::kFrames);
  io::write_le<std::uint32_t>(out, MfccMap::kCoeffs);
  for (const auto& m : maps) {
    for (double v : m.coefficients) io::write_le<double>(out, v);
  }
}

}  // namespace smil::signal
