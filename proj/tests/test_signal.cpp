#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "smil/binary_io.hpp"
#include "smil/rng.hpp"
#include "smil/signal.hpp"

using namespace smil;
using namespace smil::signal;
namespace fs = std::filesystem;

namespace {

WaveClip sine(double hz, double phase, std::size_t n, double amp = 0.5) {
  WaveClip c;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate + phase);
  }
  return c;
}

// Direct O(n^2) DFT power spectrum of a zero-padded frame.
std::vector<double> direct_power(const std::vector<double>& frame, std::size_t fft_size) {
  std::vector<double> p(fft_size / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < frame.size(); ++t) {
      acc += frame[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(t) / double(fft_size));
    }
    p[k] = std::norm(acc) / static_cast<double>(fft_size);
  }
  return p;
}

double distance(const MfccMap& a, const MfccMap& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.coefficients.size(); ++i) {
    s += (a.coefficients[i] - b.coefficients[i]) * (a.coefficients[i] - b.coefficients[i]);
  }
  return std::sqrt(s);
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("smil_test_signal_" + name); }

}  // namespace

TEST_CASE("two-filter bank overlaps in a single bin between the centres") {
  auto bank = mel_filterbank(2, 8, 8000, 0.0, 4000.0);
  REQUIRE(bank.num_bins == 5);
  std::vector<std::size_t> shared;
  for (std::size_t k = 0; k < bank.num_bins; ++k) {
    if (bank.weight(0, k) > 0.0 && bank.weight(1, k) > 0.0) shared.push_back(k);
  }
  REQUIRE(shared.size() == 1);
  const double f = shared[0] * 1000.0;
  CHECK(f > bank.centers_hz[0]);
  CHECK(f < bank.centers_hz[1]);
}

TEST_CASE("filterbank shape properties") {
  auto bank = mel_filterbank(26, 512, 8000, 0.0, 4000.0);
  for (std::size_t m = 0; m + 1 < bank.num_filters; ++m) CHECK(bank.centers_hz[m] < bank.centers_hz[m + 1]);
  for (std::size_t m = 0; m < bank.num_filters; ++m) {
    double total = 0.0;
    for (std::size_t k = 0; k < bank.num_bins; ++k) {
      CHECK(bank.weight(m, k) >= 0.0);
      total += bank.weight(m, k);
    }
    CHECK(total > 0.0);
  }
}

TEST_CASE("filterbank rejects invalid frequency ranges") {
  CHECK_THROWS_AS(mel_filterbank(26, 512, 8000, 100.0, 100.0), std::invalid_argument);
  CHECK_THROWS_AS(mel_filterbank(26, 512, 8000, -1.0, 4000.0), std::invalid_argument);
  CHECK_THROWS_AS(mel_filterbank(26, 512, 8000, 0.0, 4001.0), std::invalid_argument);
  CHECK_THROWS_AS(mel_filterbank(1, 512, 8000, 0.0, 4000.0), std::invalid_argument);
}

TEST_CASE("the filter covering 440 Hz responds most to a 440 Hz sine") {
  auto bank = mel_filterbank(26, 512, 8000, 0.0, 4000.0);
  auto clip = sine(440.0, 0.0, 400);
  auto power = direct_power(clip.samples, 512);
  auto resp = bank.apply(power);
  const auto loudest = std::max_element(resp.begin(), resp.end()) - resp.begin();
  const auto bin = static_cast<std::size_t>(std::lround(440.0 * 512 / 8000.0));
  std::size_t peak_filter = 0;
  for (std::size_t m = 1; m < bank.num_filters; ++m) {
    if (bank.weight(m, bin) > bank.weight(peak_filter, bin)) peak_filter = m;
  }
  CHECK(static_cast<std::size_t>(loudest) == peak_filter);
}

TEST_CASE("all-zero clip puts every coefficient but the first at zero") {
  MfccExtractor ex;
  WaveClip silent;
  silent.samples.assign(4000, 0.0);
  auto logmel = ex.log_mel_energies(silent);
  for (double v : logmel) CHECK(v == doctest::Approx(std::log(1e-10)));
  auto map = ex.compute(silent);
  for (std::size_t f = 0; f < MfccMap::kFrames; ++f) {
    CHECK(map.at(f, 0) == doctest::Approx(std::sqrt(26.0) * std::log(1e-10)));
    for (std::size_t k = 1; k < MfccMap::kCoeffs; ++k) CHECK(std::abs(map.at(f, k)) < 1e-9);
  }
}

TEST_CASE("output is 20x20 for clips of any length") {
  MfccExtractor ex;
  for (std::size_t n : {1, 100, 400, 1920, 4000, 12000}) {
    auto map = ex.compute(sine(300.0, 0.1, n));
    CHECK(map.coefficients.size() == 400);
    for (double v : map.coefficients) CHECK(std::isfinite(v));
  }
}

TEST_CASE("frame hop yields exactly 20 frames") {
  MfccConfig cfg;
  CHECK(frame_hop(100, cfg) == cfg.min_hop);
  CHECK(frame_hop(400 + 19 * 200, cfg) == 200);
  CHECK(frame_hop(100000, cfg) == cfg.frame_length);
}

TEST_CASE("log mel energies agree with a direct DFT of the first frame") {
  MfccExtractor ex;
  Rng rng(3);
  const std::size_t n = 400 + 19 * 80;  // no padding or truncation
  WaveClip clip;
  clip.samples.resize(n);
  for (auto& s : clip.samples) s = 0.3 * rng.uniform(-1, 1);
  auto logmel = ex.log_mel_energies(clip);

  std::vector<double> frame(400);
  for (std::size_t i = 0; i < 400; ++i) {
    const double emph = i == 0 ? clip.samples[0] : clip.samples[i] - 0.97 * clip.samples[i - 1];
    frame[i] = emph * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / 399.0));
  }
  auto energies = ex.filterbank().apply(direct_power(frame, 512));
  for (std::size_t m = 0; m < 26; ++m) CHECK(logmel[m] == doctest::Approx(std::log(energies[m])).epsilon(1e-9));
}

TEST_CASE("different pitches are further apart than different phases") {
  MfccExtractor ex;
  auto a = ex.compute(sine(440.0, 0.0, 4000));
  auto b = ex.compute(sine(440.0, 1.3, 4000));
  auto c = ex.compute(sine(1200.0, 0.0, 4000));
  CHECK(distance(a, c) > distance(a, b));
}

TEST_CASE("extraction is deterministic") {
  MfccExtractor ex;
  Rng rng(4);
  WaveClip clip;
  clip.samples.resize(5000);
  for (auto& s : clip.samples) s = rng.uniform(-0.5, 0.5);
  auto a = ex.compute(clip), b = ex.compute(clip);
  CHECK(a.coefficients == b.coefficients);
}

TEST_CASE("amplitude scaling only moves coefficient 0") {
  MfccExtractor ex;
  Rng rng(5);
  WaveClip clip;
  clip.samples.resize(6000);
  for (auto& s : clip.samples) s = 0.2 * rng.uniform(-1, 1);
  WaveClip loud = clip;
  for (auto& s : loud.samples) s *= 2.0;
  auto a = ex.compute(clip), b = ex.compute(loud);
  for (std::size_t f = 0; f < MfccMap::kFrames; ++f) {
    CHECK(b.at(f, 0) - a.at(f, 0) == doctest::Approx(std::sqrt(26.0) * std::log(4.0)).epsilon(1e-9));
    for (std::size_t k = 1; k < MfccMap::kCoeffs; ++k) CHECK(std::abs(b.at(f, k) - a.at(f, k)) < 1e-9);
  }
}

TEST_CASE("standardized corpus has zero mean and unit deviation per coefficient") {
  MfccExtractor ex;
  Rng rng(6);
  std::vector<MfccMap> corpus;
  for (int i = 0; i < 12; ++i) corpus.push_back(ex.compute(sine(rng.uniform(100, 3000), rng.uniform(0, 3), 3000 + i * 200)));
  auto st = MfccStandardizer::fit(corpus);
  for (auto& m : corpus) st.apply(m);
  for (std::size_t k = 0; k < MfccMap::kCoeffs; ++k) {
    double mu = 0.0, var = 0.0;
    const double count = corpus.size() * MfccMap::kFrames;
    for (const auto& m : corpus)
      for (std::size_t f = 0; f < MfccMap::kFrames; ++f) mu += m.at(f, k);
    mu /= count;
    for (const auto& m : corpus)
      for (std::size_t f = 0; f < MfccMap::kFrames; ++f) var += (m.at(f, k) - mu) * (m.at(f, k) - mu);
    CHECK(std::abs(mu) < 1e-9);
    CHECK(std::abs(std::sqrt(var / count) - 1.0) < 1e-9);
  }
}

TEST_CASE("mfcc rejects unsupported input") {
  MfccExtractor ex;
  WaveClip empty;
  CHECK_THROWS_AS(ex.compute(empty), std::invalid_argument);
  WaveClip fast = sine(440, 0, 1000);
  fast.sample_rate = 16000;
  CHECK_THROWS_AS(ex.compute(fast), std::invalid_argument);
}

TEST_CASE("wav files round-trip through 16-bit PCM") {
  auto path = temp_path("roundtrip.wav");
  WaveClip clip = sine(500, 0.2, 777, 0.8);
  write_wav(path, clip);
  auto back = read_wav(path);
  CHECK(back.sample_rate == 8000);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 0.5 / 32768.0);
  fs::remove(path);
}

TEST_CASE("wav reader rejects stereo and truncated files") {
  auto path = temp_path("bad.wav");
  write_wav(path, sine(500, 0, 100));
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(22);
    io::write_le<std::uint16_t>(f, 2);
  }
  CHECK_THROWS_AS(read_wav(path), io::FormatError);
  write_wav(path, sine(500, 0, 100));
  fs::resize_file(path, 60);
  CHECK_THROWS_AS(read_wav(path), io::FormatError);
  fs::remove(path);
}

TEST_CASE("feature files round-trip and validate their header") {
  auto path = temp_path("maps.smilf");
  Rng rng(7);
  std::vector<MfccMap> maps(3);
  for (auto& m : maps)
    for (auto& v : m.coefficients) v = rng.normal();
  write_features(path, maps);
  auto back = read_features(path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i].coefficients == maps[i].coefficients);
  {
    std::ofstream f(path, std::ios::binary);
    f << "SMILX";
  }
  CHECK_THROWS_AS(read_features(path), io::FormatError);
  fs::remove(path);
}
