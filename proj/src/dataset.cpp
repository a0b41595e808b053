#include "smil/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "smil/binary_io.hpp"
#include "smil/rng.hpp"

namespace smil::data {

// ---- IDX ----------------------------------------------------------------------

ImageSet load_idx_images(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images.string());
  std::ifstream lab(labels, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels.string());

  const auto img_magic = io::read_be<std::uint32_t>(img, "image magic");
  if (img_magic != 0x00000803) throw io::FormatError("idx: image magic mismatch", 0);
  const auto count = io::read_be<std::uint32_t>(img, "image count");
  const auto rows = io::read_be<std::uint32_t>(img, "row count");
  const auto cols = io::read_be<std::uint32_t>(img, "column count");

  const auto lab_magic = io::read_be<std::uint32_t>(lab, "label magic");
  if (lab_magic != 0x00000801) throw io::FormatError("idx: label magic mismatch", 0);
  const auto lab_count = io::read_be<std::uint32_t>(lab, "label count");
  if (lab_count != count) {
    throw io::FormatError("idx: " + std::to_string(count) + " images but " + std::to_string(lab_count) + " labels", 4);
  }

  ImageSet set;
  set.rows = rows;
  set.cols = cols;
  set.images.resize(count);
  set.labels.resize(count);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < count; ++i) {
    io::read_bytes(img, reinterpret_cast<char*>(buf.data()), buf.size(), "image pixels");
    auto& im = set.images[i];
    im.resize(buf.size());
    for (std::size_t p = 0; p < buf.size(); ++p) im[p] = static_cast<double>(buf[p]) / 255.0;
  }
  for (std::size_t i = 0; i < count; ++i) set.labels[i] = io::read_be<std::uint8_t>(lab, "label");
  return set;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path.string());
  if (io::read_be<std::uint32_t>(in, "label magic") != 0x00000801) throw io::FormatError("idx: label magic mismatch", 0);
  const auto count = io::read_be<std::uint32_t>(in, "label count");
  std::vector<int> out(count);
  for (auto& l : out) l = io::read_be<std::uint8_t>(in, "label");
  return out;
}

void write_idx_images(const std::filesystem::path& path, const ImageSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write " + path.string());
  io::write_be<std::uint32_t>(out, 0x00000803);
  io::write_be<std::uint32_t>(out, static_cast<std::uint32_t>(set.images.size()));
  io::write_be<std::uint32_t>(out, static_cast<std::uint32_t>(set.rows));
  io::write_be<std::uint32_t>(out, static_cast<std::uint32_t>(set.cols));
  for (const auto& im : set.images) {
    for (double v : im) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write " + path.string());
  io::write_be<std::uint32_t>(out, 0x00000801);
  io::write_be<std::uint32_t>(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.put(static_cast<char>(l));
}

// ---- masked dataset -----------------------------------------------------------

std::vector<std::size_t> MaskedDataset::complete_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (data.samples[i].has_modality2()) out.push_back(i);
  return out;
}

std::vector<std::size_t> MaskedDataset::incomplete_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (!data.samples[i].has_modality2()) out.push_back(i);
  return out;
}

MaskedDataset MaskedDataset::unmasked() const {
  MaskedDataset out = *this;
  for (std::size_t i = 0; i < out.data.samples.size(); ++i) {
    if (i < withheld.size() && withheld[i]) out.data.samples[i].modality2 = withheld[i];
  }
  out.withheld.assign(out.data.samples.size(), std::nullopt);
  out.eta = 1.0;
  return out;
}

MaskedDataset as_masked(Dataset data, Split split) {
  MaskedDataset m;
  m.withheld.assign(data.samples.size(), std::nullopt);
  m.data = std::move(data);
  m.split = split;
  return m;
}

// ---- pairing and splitting ------------------------------------------------------

Dataset pair_modalities(const ImageSet& images, std::span<const signal::MfccMap> audio,
                        std::span<const int> audio_labels) {
  if (images.images.size() != images.labels.size()) throw std::invalid_argument("pair: image/label count mismatch");
  if (audio.size() != audio_labels.size()) throw std::invalid_argument("pair: audio/label count mismatch");

  std::map<int, std::vector<std::size_t>> audio_by_class, image_by_class;
  for (std::size_t i = 0; i < audio_labels.size(); ++i) audio_by_class[audio_labels[i]].push_back(i);
  for (std::size_t i = 0; i < images.labels.size(); ++i) image_by_class[images.labels[i]].push_back(i);
  std::set<int> classes;
  for (auto& [c, _] : audio_by_class) classes.insert(c);
  for (auto& [c, _] : image_by_class) classes.insert(c);
  for (int c : classes) {
    const auto ni = image_by_class[c].size(), na = audio_by_class[c].size();
    if (ni != na) {
      throw std::invalid_argument("pair: class " + std::to_string(c) + " has " + std::to_string(ni) + " images but " +
                                  std::to_string(na) + " audio clips");
    }
  }

  Dataset out;
  out.modality1_shape = {images.rows, images.cols};
  out.modality2_shape = {signal::MfccMap::kFrames, signal::MfccMap::kCoeffs};
  int max_label = 0;
  std::map<int, std::size_t> seen;
  for (std::size_t i = 0; i < images.images.size(); ++i) {
    const int c = images.labels[i];
    if (c < 0) throw std::invalid_argument("pair: negative label");
    max_label = std::max(max_label, c);
    const std::size_t j = audio_by_class[c][seen[c]++];
    BimodalSample s;
    s.modality1 = images.images[i];
    s.modality2 = audio[j].coefficients;
    s.label = c;
    out.samples.push_back(std::move(s));
  }
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

std::pair<MaskedDataset, MaskedDataset> split_dataset(const Dataset& paired, double train_fraction,
                                                      std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw std::invalid_argument("split: fraction outside [0, 1]");
  Rng rng(seed);
  const auto perm = rng.permutation(paired.samples.size());
  const std::size_t n_train = complete_count(train_fraction, paired.samples.size());

  Dataset train = paired, val = paired;
  train.samples.clear();
  val.samples.clear();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    (i < n_train ? train : val).samples.push_back(paired.samples[perm[i]]);
  }
  auto tr = as_masked(std::move(train), Split::train);
  auto va = as_masked(std::move(val), Split::validation);
  tr.seed = va.seed = seed;
  return {std::move(tr), std::move(va)};
}

std::pair<MaskedDataset, MaskedDataset> pair_and_split(const ImageSet& images,
                                                       std::span<const signal::MfccMap> audio,
                                                       std::span<const int> audio_labels, double train_fraction,
                                                       std::uint64_t seed) {
  return split_dataset(pair_modalities(images, audio, audio_labels), train_fraction, seed);
}

std::size_t complete_count(double eta, std::size_t n) {
  // The small offset keeps exact halves (e.g. 0.05 * 1050 = 52.5) rounding up
  // despite representation error in eta.
  const double x = eta * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)));
}

MaskedDataset mask_modality(const MaskedDataset& train, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("mask: eta must lie in [0, 1]");
  if (train.split != Split::train) throw std::invalid_argument("mask: only the train split is masked");
  MaskedDataset out = train.unmasked();
  const std::size_t keep = complete_count(eta, out.size());
  Rng rng(seed);
  const auto perm = rng.permutation(out.size());
  for (std::size_t r = keep; r < perm.size(); ++r) {
    auto& s = out.data.samples[perm[r]];
    out.withheld[perm[r]] = std::move(s.modality2);
    s.modality2.reset();
  }
  out.eta = eta;
  out.seed = seed;
  return out;
}

// ---- manifest ---------------------------------------------------------------------

namespace {

std::string label_field(const Dataset& d, const BimodalSample& s) {
  if (!d.multi_label) return std::to_string(s.label);
  std::string bits;
  for (auto b : s.label_bits) bits.push_back(b ? '1' : '0');
  return bits;
}

}  // namespace

void save_manifest(const std::filesystem::path& path, const MaskedDataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.data.samples[i];
    out << i << '\t' << label_field(data.data, s) << '\t' << (s.has_modality2() ? 1 : 0) << '\n';
  }
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string idx, label, flag;
    if (!std::getline(ss, idx, '\t') || !std::getline(ss, label, '\t') || !std::getline(ss, flag, '\t') ||
        (flag != "0" && flag != "1")) {
      throw std::runtime_error("manifest: malformed line " + std::to_string(lineno));
    }
    ManifestRecord r;
    r.index = std::stoul(idx);
    r.label = label;
    r.has_audio = flag == "1";
    out.push_back(std::move(r));
  }
  return out;
}

MaskedDataset apply_manifest(const MaskedDataset& data, std::span<const ManifestRecord> records) {
  MaskedDataset out = data.unmasked();
  if (records.size() != out.size()) throw std::invalid_argument("manifest: record count does not match dataset");
  std::size_t kept = 0;
  for (const auto& r : records) {
    if (r.index >= out.size()) throw std::invalid_argument("manifest: index out of range");
    auto& s = out.data.samples[r.index];
    if (r.label != label_field(out.data, s)) {
      throw std::invalid_argument("manifest: label mismatch at index " + std::to_string(r.index));
    }
    if (!r.has_audio) {
      out.withheld[r.index] = std::move(s.modality2);
      s.modality2.reset();
    } else {
      ++kept;
    }
  }
  out.eta = out.size() ? static_cast<double>(kept) / static_cast<double>(out.size()) : 1.0;
  out.seed = data.seed;
  return out;
}

// ---- synthetic ------------------------------------------------------------------------

Dataset synth_bimodal(const SynthConfig& cfg) {
  if (cfg.num_classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
  if (cfg.dim1 < 2 || cfg.dim2 < 2) throw std::invalid_argument("synth: view dimensions must be at least 2");
  Rng rng(cfg.seed);
  const std::size_t L = cfg.latent_dim;

  std::vector<std::vector<double>> centroids(cfg.num_classes, std::vector<double>(L));
  for (auto& c : centroids)
    for (auto& v : c) v = cfg.separation * rng.normal();

  auto random_map = [&](std::size_t rows) {
    std::vector<double> a(rows * L);
    for (auto& v : a) v = rng.normal() / std::sqrt(static_cast<double>(L));
    return a;
  };
  const auto map1 = random_map(cfg.dim1);
  const auto map2 = random_map(cfg.dim2);

  auto project = [&](const std::vector<double>& a, std::size_t rows, const std::vector<double>& z) {
    std::vector<double> x(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < L; ++k) x[r] += a[r * L + k] * z[k];
    return x;
  };

  Dataset d;
  d.modality1_shape = {cfg.dim1};
  d.modality2_shape = {cfg.dim2};
  d.num_classes = cfg.num_classes;
  d.multi_label = cfg.multi_label;
  d.samples.reserve(cfg.num_samples);
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    BimodalSample s;
    std::vector<double> z(L, 0.0);
    if (cfg.multi_label) {
      s.label_bits.assign(cfg.num_classes, 0);
      for (std::size_t c = 0; c < cfg.num_classes; ++c) s.label_bits[c] = rng.uniform() < cfg.label_density;
      if (std::none_of(s.label_bits.begin(), s.label_bits.end(), [](auto b) { return b != 0; })) {
        s.label_bits[rng.index(cfg.num_classes)] = 1;
      }
      for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        if (s.label_bits[c])
          for (std::size_t k = 0; k < L; ++k) z[k] += centroids[c][k];
      }
      s.label = static_cast<int>(std::find(s.label_bits.begin(), s.label_bits.end(), 1) - s.label_bits.begin());
    } else {
      s.label = static_cast<int>(rng.index(cfg.num_classes));
      z = centroids[static_cast<std::size_t>(s.label)];
    }
    s.modality1 = project(map1, cfg.dim1, z);
    auto x2 = project(map2, cfg.dim2, z);
    for (auto& v : s.modality1) v += cfg.noise * rng.normal();
    for (auto& v : x2) v += cfg.noise * rng.normal();
    s.modality2 = std::move(x2);
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace smil::data
