#include "smil/avmnist.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

#include "smil/binary_io.hpp"
#include "smil/rng.hpp"

namespace smil::data {

// ---- images ----------------------------------------------------------------------

namespace {

double bilinear(const std::vector<double>& g, std::size_t side, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(side - 1));
  x = std::clamp(x, 0.0, static_cast<double>(side - 1));
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, side - 1), x1 = std::min(x0 + 1, side - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * g[y0 * side + x0] + fx * g[y0 * side + x1]) +
         fy * ((1 - fx) * g[y1 * side + x0] + fx * g[y1 * side + x1]);
}

std::vector<double> render(const std::vector<double>& glyph, std::size_t side, Rng& rng,
                           const AvmnistSynthConfig& cfg) {
  constexpr std::size_t kOut = 28;
  const auto size = 17 + rng.index(7);  // 17..23 px
  const auto top = rng.index(kOut - size + 1), left = rng.index(kOut - size + 1);
  const double contrast = rng.uniform(0.5, 1.0);
  const double step = static_cast<double>(side) / static_cast<double>(size);
  std::vector<double> img(kOut * kOut, 0.0);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      img[(top + r) * kOut + left + c] =
          contrast * bilinear(glyph, side, (static_cast<double>(r) + 0.5) * step - 0.5,
                              (static_cast<double>(c) + 0.5) * step - 0.5);
  if (rng.uniform() < cfg.occlusion_prob) {
    const auto h = 6 + rng.index(9), w = 6 + rng.index(9);
    const auto y = rng.index(kOut - h + 1), x = rng.index(kOut - w + 1);
    for (std::size_t r = y; r < y + h; ++r)
      for (std::size_t c = x; c < x + w; ++c) img[r * kOut + c] = 0.0;
  }
  for (auto& v : img) v = std::clamp(v + cfg.image_noise * rng.normal(), 0.0, 1.0);
  return img;
}

}  // namespace

ImageSet synth_digit_images(const ImageSet& glyphs, const AvmnistSynthConfig& cfg) {
  if (glyphs.rows != glyphs.cols || glyphs.rows < 2) throw std::invalid_argument("synth images: glyphs must be square");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < glyphs.labels.size(); ++i) by_class[glyphs.labels[i]].push_back(i);
  Rng rng(cfg.seed);
  ImageSet out;
  out.rows = out.cols = 28;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < cfg.per_class) {
      throw std::invalid_argument("synth images: class " + std::to_string(label) + " has only " +
                                  std::to_string(idx.size()) + " glyphs");
    }
    for (auto pick : rng.sample(idx.size(), cfg.per_class)) {
      out.images.push_back(render(glyphs.images[idx[pick]], glyphs.rows, rng, cfg));
      out.labels.push_back(label);
    }
  }
  return out;
}

// ---- audio -----------------------------------------------------------------------

namespace {

enum class Seg { voiced, nasal, fricative, burst };

struct Segment {
  Seg kind;
  double duration;  // seconds
  double f1a, f2a, f3a;
  double f1b, f2b, f3b;  // formant targets at the segment end
};

Segment vowel(double d, double f1, double f2, double f3) { return {Seg::voiced, d, f1, f2, f3, f1, f2, f3}; }
Segment glide(double d, double f1, double f2, double f3, double g1, double g2, double g3) {
  return {Seg::voiced, d, f1, f2, f3, g1, g2, g3};
}
Segment nasal(double d, double f2) { return {Seg::nasal, d, 250, f2, 2500, 250, f2, 2500}; }
Segment fric(double d, double center, double spread) {
  return {Seg::fricative, d, center, spread, 0, center, spread, 0};
}
Segment burst(double center) { return {Seg::burst, 0.04, center, 1200, 0, center, 1200, 0}; }

const std::vector<std::vector<Segment>>& digit_templates() {
  static const std::vector<std::vector<Segment>> t = {
      {fric(0.08, 3300, 900), vowel(0.08, 400, 2000, 2550), glide(0.08, 490, 1350, 1690, 500, 900, 2400),
       vowel(0.14, 500, 900, 2400)},                                                          // zero
      {glide(0.08, 300, 700, 2200, 640, 1190, 2390), vowel(0.16, 640, 1190, 2390), nasal(0.1, 1500)},  // one
      {burst(2800), vowel(0.22, 300, 870, 2240)},                                             // two
      {fric(0.09, 2500, 2000), glide(0.06, 490, 1350, 1690, 270, 2290, 3010), vowel(0.2, 270, 2290, 3010)},  // three
      {fric(0.09, 1800, 2500), vowel(0.16, 570, 840, 2410), glide(0.1, 570, 840, 2410, 490, 1350, 1690)},  // four
      {fric(0.09, 1800, 2500), glide(0.24, 730, 1090, 2440, 400, 2000, 2600), fric(0.06, 1500, 2000)},  // five
      {fric(0.1, 3500, 700), vowel(0.1, 390, 1990, 2550), burst(2000), fric(0.1, 3500, 700)},  // six
      {fric(0.1, 3500, 700), vowel(0.12, 530, 1840, 2480), fric(0.04, 1500, 2000), vowel(0.07, 500, 1500, 2500),
       nasal(0.08, 1500)},                                                                    // seven
      {glide(0.22, 530, 1840, 2480, 400, 2200, 2700), burst(3000)},                           // eight
      {nasal(0.08, 1500), glide(0.24, 730, 1090, 2440, 400, 2000, 2600), nasal(0.1, 1500)},   // nine
  };
  return t;
}

// Two-pole resonator with unity gain at DC.
struct Resonator {
  double y1 = 0, y2 = 0;
  double step(double x, double freq, double bw) {
    const double c = -std::exp(-2 * std::numbers::pi * bw / signal::kSampleRate);
    const double b = 2 * std::exp(-std::numbers::pi * bw / signal::kSampleRate) *
                     std::cos(2 * std::numbers::pi * freq / signal::kSampleRate);
    const double a = 1 - b - c;
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct Speaker {
  double f0;
  double scale;
};

std::vector<double> speak(int digit, const Speaker& sp, Rng& rng, const AvmnistSynthConfig& cfg) {
  constexpr double fs = signal::kSampleRate;
  const double f0 = sp.f0 * rng.uniform(0.9, 1.1);
  const double tempo = rng.uniform(0.8, 1.25);
  std::vector<double> out(static_cast<std::size_t>(rng.uniform(0.04, 0.15) * fs), 0.0);
  double phase = 0.0;
  Resonator r1, r2, r3;
  for (const auto& seg : digit_templates()[static_cast<std::size_t>(digit)]) {
    const auto n = static_cast<std::size_t>(seg.duration * tempo * rng.uniform(0.85, 1.15) * fs);
    double j[3];
    for (auto& v : j) v = sp.scale * (1.0 + cfg.formant_jitter * rng.normal());
    const double gain = rng.uniform(0.7, 1.3);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
      const double ramp = std::min({1.0, i / (0.01 * fs), (n - i) / (0.01 * fs)});
      double s = 0.0;
      if (seg.kind == Seg::voiced || seg.kind == Seg::nasal) {
        const double f = f0 * (1.0 - 0.15 * t);
        phase += f / fs;
        const double excite = phase >= 1.0 ? 1.0 : 0.0;
        if (phase >= 1.0) phase -= 1.0;
        const double f1 = (seg.f1a + t * (seg.f1b - seg.f1a)) * j[0];
        const double f2 = (seg.f2a + t * (seg.f2b - seg.f2a)) * j[1];
        const double f3 = (seg.f3a + t * (seg.f3b - seg.f3a)) * j[2];
        s = r1.step(excite, std::min(f1, 3900.0), 80) + 0.6 * r2.step(excite, std::min(f2, 3900.0), 120) +
            0.3 * r3.step(excite, std::min(f3, 3900.0), 180);
        s *= seg.kind == Seg::nasal ? 4.0 : 10.0;
      } else {
        const double center = std::min(seg.f1a * j[0], 3800.0);
        s = 0.5 * r1.step(rng.normal(), center, seg.f2a);
        if (seg.kind == Seg::burst && t > 0.4) s *= 0.1;
      }
      out.push_back(gain * ramp * s);
    }
  }
  out.resize(out.size() + static_cast<std::size_t>(rng.uniform(0.04, 0.15) * fs), 0.0);

  double energy = 0.0, peak = 0.0;
  for (double v : out) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(out.size()));
  const double snr_db = rng.uniform(cfg.snr_db_low, cfg.snr_db_high);
  const double noise = rms / std::pow(10.0, snr_db / 20.0);
  for (auto& v : out) {
    v += noise * rng.normal();
    peak = std::max(peak, std::abs(v));
  }
  const double level = rng.uniform(0.3, 0.9) / std::max(peak, 1e-12);
  for (auto& v : out) v *= level;
  return out;
}

}  // namespace

std::string SpokenDigit::file_name() const {
  return std::to_string(label) + "_s" + std::to_string(speaker) + "_" + std::to_string(take) + ".wav";
}

std::vector<SpokenDigit> synth_spoken_digits(const AvmnistSynthConfig& cfg) {
  if (cfg.speakers == 0) throw std::invalid_argument("synth audio: need at least one speaker");
  Rng rng(cfg.seed ^ 0xa0d10ULL);
  std::vector<Speaker> speakers(cfg.speakers);
  for (auto& s : speakers) s = {rng.uniform(95.0, 230.0), rng.uniform(0.88, 1.12)};
  std::vector<SpokenDigit> out;
  for (int digit = 0; digit < 10; ++digit) {
    for (std::size_t k = 0; k < cfg.per_class; ++k) {
      SpokenDigit d;
      d.label = digit;
      d.speaker = k % cfg.speakers;
      d.take = k / cfg.speakers;
      d.clip.samples = speak(digit, speakers[d.speaker], rng, cfg);
      out.push_back(std::move(d));
    }
  }
  return out;
}

// ---- audio ingestion ---------------------------------------------------------------

AudioCorpus load_audio_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("audio: not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  signal::MfccExtractor extractor;
  AudioCorpus out;
  for (const auto& f : files) {
    const auto name = f.filename().string();
    const auto us = name.find('_');
    int label = -1;
    try {
      label = std::stoi(name.substr(0, us));
    } catch (const std::exception&) {
      throw std::runtime_error("audio: cannot read a digit label from " + name);
    }
    out.maps.push_back(extractor.compute(signal::read_wav(f)));
    out.labels.push_back(label);
    out.names.push_back(name);
  }
  if (out.maps.empty()) throw std::runtime_error("audio: no .wav files in " + dir.string());
  return out;
}

AudioCorpus load_audio_features(const std::filesystem::path& features, const std::filesystem::path& labels) {
  AudioCorpus out;
  out.maps = signal::read_features(features);
  out.labels = load_idx_labels(labels);
  if (out.maps.size() != out.labels.size()) throw std::runtime_error("audio: feature and label counts differ");
  out.names.assign(out.maps.size(), "");
  return out;
}

Prepared prepare_avmnist(const ImageSet& images, const AudioCorpus& audio, double train_fraction,
                         std::uint64_t seed) {
  auto [train, val] = pair_and_split(images, audio.maps, audio.labels, train_fraction, seed);
  Prepared p;
  std::vector<signal::MfccMap> corpus;
  for (const auto& s : train.data.samples) {
    signal::MfccMap m;
    m.coefficients = *s.modality2;
    corpus.push_back(std::move(m));
  }
  if (!corpus.empty()) p.standardizer = signal::MfccStandardizer::fit(corpus);
  for (auto* split : {&train, &val}) {
    for (auto& s : split->data.samples) {
      signal::MfccMap m;
      m.coefficients = std::move(*s.modality2);
      p.standardizer.apply(m);
      s.modality2 = std::move(m.coefficients);
    }
  }
  p.train = std::move(train);
  p.validation = std::move(val);
  return p;
}

// ---- prepared directory ------------------------------------------------------------

namespace {

void write_shape(std::ostream& out, const Shape& s) {
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  for (auto d : s) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
}

Shape read_shape(std::istream& in) {
  const auto rank = io::read_le<std::uint32_t>(in, "rank");
  if (rank == 0 || rank > 4) throw io::FormatError("dataset: bad rank " + std::to_string(rank), io::tell(in));
  Shape s(rank);
  for (auto& d : s) d = io::read_le<std::uint32_t>(in, "dimension");
  return s;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot write " + path.string());
  out.write("SMILD", 5);
  write_shape(out, data.modality1_shape);
  write_shape(out, data.modality2_shape);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.num_classes));
  io::write_le<std::uint8_t>(out, data.multi_label ? 1 : 0);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.samples.size()));
  const auto d1 = numel(data.modality1_shape), d2 = numel(data.modality2_shape);
  for (const auto& s : data.samples) {
    if (s.modality1.size() != d1 || (s.modality2 && s.modality2->size() != d2)) {
      throw std::invalid_argument("dataset: sample size does not match the declared shapes");
    }
    io::write_le<std::uint8_t>(out, s.has_modality2() ? 1 : 0);
    for (double v : s.modality1) io::write_le<double>(out, v);
    if (s.modality2)
      for (double v : *s.modality2) io::write_le<double>(out, v);
    io::write_le<std::int32_t>(out, s.label);
    if (data.multi_label)
      for (std::size_t c = 0; c < data.num_classes; ++c) io::write_le<std::uint8_t>(out, s.label_bits.at(c));
  }
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open " + path.string());
  io::expect_magic(in, "SMILD");
  Dataset d;
  d.modality1_shape = read_shape(in);
  d.modality2_shape = read_shape(in);
  d.num_classes = io::read_le<std::uint32_t>(in, "class count");
  d.multi_label = io::read_le<std::uint8_t>(in, "multi-label flag") != 0;
  const auto count = io::read_le<std::uint32_t>(in, "sample count");
  const auto d1 = numel(d.modality1_shape), d2 = numel(d.modality2_shape);
  d.samples.resize(count);
  for (auto& s : d.samples) {
    const bool has2 = io::read_le<std::uint8_t>(in, "modality flag") != 0;
    s.modality1.resize(d1);
    for (auto& v : s.modality1) v = io::read_le<double>(in, "modality 1");
    if (has2) {
      s.modality2 = std::vector<double>(d2);
      for (auto& v : *s.modality2) v = io::read_le<double>(in, "modality 2");
    }
    s.label = io::read_le<std::int32_t>(in, "label");
    if (d.multi_label) {
      s.label_bits.resize(d.num_classes);
      for (auto& b : s.label_bits) b = io::read_le<std::uint8_t>(in, "label bits");
    }
  }
  return d;
}

void save_prepared(const std::filesystem::path& dir, const MaskedDataset& train, const MaskedDataset& validation) {
  std::filesystem::create_directories(dir);
  write_dataset(dir / "train.smild", train.unmasked().data);
  write_dataset(dir / "validation.smild", validation.unmasked().data);
  save_manifest(dir / "manifest.tsv", train);
}

std::pair<MaskedDataset, MaskedDataset> load_prepared(const std::filesystem::path& dir) {
  for (const char* f : {"train.smild", "validation.smild"}) {
    if (!std::filesystem::exists(dir / f)) throw std::runtime_error("dataset: missing " + (dir / f).string());
  }
  auto train = as_masked(read_dataset(dir / "train.smild"), Split::train);
  auto val = as_masked(read_dataset(dir / "validation.smild"), Split::validation);
  if (std::filesystem::exists(dir / "manifest.tsv")) {
    const auto records = load_manifest(dir / "manifest.tsv");
    train = apply_manifest(train, records);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace smil::data
