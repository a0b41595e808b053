#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "smil/binary_io.hpp"
#include "smil/dataset.hpp"
#include "smil/rng.hpp"

using namespace smil;
using namespace smil::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("smil_test_dataset_" + name); }

// Toy paired corpus: images carry (class, within-class index) in pixels 0 and 1,
// audio maps carry the same pair in coefficients 0 and 1.
struct Toy {
  ImageSet images;
  std::vector<signal::MfccMap> audio;
  std::vector<int> audio_labels;
};

Toy toy_corpus(std::size_t per_class, std::size_t classes, std::uint64_t seed) {
  Toy t;
  t.images.rows = t.images.cols = 2;
  std::vector<std::pair<int, int>> order;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t j = 0; j < per_class; ++j) order.emplace_back(int(c), int(j));
  Rng rng(seed);
  auto perm_i = rng.permutation(order.size());
  auto perm_a = rng.permutation(order.size());
  // Images appear interleaved but keep within-class order; same for audio.
  std::vector<std::size_t> next_img(classes, 0), next_aud(classes, 0);
  for (std::size_t p : perm_i) {
    const int c = order[p].first;
    t.images.images.push_back({double(c), double(next_img[c]++), 0.0, 0.0});
    t.images.labels.push_back(c);
  }
  for (std::size_t p : perm_a) {
    const int c = order[p].first;
    signal::MfccMap m;
    m.coefficients[0] = c;
    m.coefficients[1] = double(next_aud[c]++);
    t.audio.push_back(m);
    t.audio_labels.push_back(c);
  }
  return t;
}

double nearest_centroid_accuracy(const Dataset& train, const Dataset& test, int view) {
  const std::size_t C = train.num_classes;
  auto feat = [&](const BimodalSample& s) {
    std::vector<double> f;
    if (view & 1) f.insert(f.end(), s.modality1.begin(), s.modality1.end());
    if (view & 2) f.insert(f.end(), s.modality2->begin(), s.modality2->end());
    return f;
  };
  const std::size_t d = feat(train.samples[0]).size();
  std::vector<std::vector<double>> mu(C, std::vector<double>(d, 0.0));
  std::vector<double> n(C, 0.0);
  for (const auto& s : train.samples) {
    auto f = feat(s);
    for (std::size_t k = 0; k < d; ++k) mu[s.label][k] += f[k];
    n[s.label] += 1;
  }
  for (std::size_t c = 0; c < C; ++c)
    for (auto& v : mu[c]) v /= n[c];
  std::size_t hit = 0;
  for (const auto& s : test.samples) {
    auto f = feat(s);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < C; ++c) {
      double dd = 0;
      for (std::size_t k = 0; k < d; ++k) dd += (f[k] - mu[c][k]) * (f[k] - mu[c][k]);
      if (dd < best_d) best_d = dd, best = c;
    }
    hit += int(best) == s.label;
  }
  return double(hit) / double(test.samples.size());
}

}  // namespace

TEST_CASE("pairing matches class and within-class index") {
  auto t = toy_corpus(15, 10, 1);
  auto d = pair_modalities(t.images, t.audio, t.audio_labels);
  REQUIRE(d.size() == 150);
  CHECK(d.num_classes == 10);
  for (const auto& s : d.samples) {
    CHECK(s.modality1[0] == (*s.modality2)[0]);
    CHECK(s.modality1[1] == (*s.modality2)[1]);
    CHECK(s.label == int(s.modality1[0]));
  }
}

TEST_CASE("pairing rejects a class-count mismatch") {
  auto t = toy_corpus(5, 3, 2);
  t.audio.pop_back();
  t.audio_labels.pop_back();
  CHECK_THROWS_WITH_AS(pair_modalities(t.images, t.audio, t.audio_labels), doctest::Contains("class"),
                       std::invalid_argument);
}

TEST_CASE("1500 paired samples split 1050 / 450 and keep 210 at eta 0.2") {
  auto t = toy_corpus(150, 10, 3);
  auto [train, val] = pair_and_split(t.images, t.audio, t.audio_labels, 0.7, 11);
  CHECK(train.size() == 1050);
  CHECK(val.size() == 450);
  CHECK(val.split == Split::validation);

  std::set<std::pair<double, double>> ids;
  for (const auto* part : {&train, &val})
    for (const auto& s : part->data.samples) ids.emplace(s.modality1[0], s.modality1[1]);
  CHECK(ids.size() == 1500);

  auto masked = mask_modality(train, 0.2, 5);
  CHECK(masked.complete_indices().size() == 210);
  CHECK(masked.incomplete_indices().size() == 840);
  for (const auto& s : val.data.samples) CHECK(s.has_modality2());
}

TEST_CASE("masking rounds half up") {
  CHECK(complete_count(0.05, 1050) == 53);
  CHECK(complete_count(0.2, 1050) == 210);
  CHECK(complete_count(0.1, 1050) == 105);
  CHECK(complete_count(1.0, 1050) == 1050);
  CHECK(complete_count(0.0, 1050) == 0);
  CHECK(complete_count(0.7, 1500) == 1050);
}

TEST_CASE("masking is seeded, restricted to train, and reversible") {
  auto d = synth_bimodal({.num_samples = 200, .seed = 4});
  auto train = as_masked(d);
  auto a = mask_modality(train, 0.3, 9), b = mask_modality(train, 0.3, 9), c = mask_modality(train, 0.3, 10);
  CHECK(a.complete_indices() == b.complete_indices());
  CHECK(a.complete_indices() != c.complete_indices());
  CHECK(a.complete_indices().size() == 60);

  auto restored = a.unmasked();
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(*restored.data.samples[i].modality2 == *d.samples[i].modality2);

  auto val = as_masked(d, Split::validation);
  CHECK_THROWS_AS(mask_modality(val, 0.3, 1), std::invalid_argument);
  CHECK_THROWS_AS(mask_modality(train, 1.2, 1), std::invalid_argument);
  CHECK_THROWS_AS(mask_modality(train, -0.1, 1), std::invalid_argument);
}

TEST_CASE("manifest round-trips the mask") {
  auto path = temp_path("manifest.tsv");
  for (bool multi : {false, true}) {
    auto d = synth_bimodal({.num_samples = 120, .num_classes = 4, .multi_label = multi, .seed = 8});
    auto masked = mask_modality(as_masked(d), 0.25, 3);
    save_manifest(path, masked);
    auto records = load_manifest(path);
    REQUIRE(records.size() == 120);
    auto again = apply_manifest(masked.unmasked(), records);
    CHECK(again.complete_indices() == masked.complete_indices());
    for (std::size_t i = 0; i < 120; ++i) {
      CHECK(again.data.samples[i].modality2 == masked.data.samples[i].modality2);
      CHECK(again.data.samples[i].modality1 == masked.data.samples[i].modality1);
    }
  }
  {
    std::ofstream f(path);
    f << "0\t3\tmaybe\n";
  }
  CHECK_THROWS(load_manifest(path));
  fs::remove(path);
}

TEST_CASE("idx files round-trip and report the failing offset") {
  auto ip = temp_path("img.idx"), lp = temp_path("lab.idx");
  ImageSet set;
  set.rows = 3;
  set.cols = 2;
  set.images = {{0, 1, 0.5, 0.25, 1, 0}, {1, 1, 1, 0, 0, 0}};
  set.labels = {7, 2};
  write_idx_images(ip, set);
  write_idx_labels(lp, set.labels);
  auto back = load_idx_images(ip, lp);
  CHECK(back.rows == 3);
  CHECK(back.cols == 2);
  CHECK(back.labels == set.labels);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t p = 0; p < 6; ++p) CHECK(std::abs(back.images[i][p] - set.images[i][p]) <= 0.5 / 255.0);

  fs::resize_file(ip, 16 + 6 + 3);
  try {
    load_idx_images(ip, lp);
    FAIL("truncated file accepted");
  } catch (const io::FormatError& e) {
    CHECK(e.offset() == 25);  // end of the truncated second image
  }
  CHECK_THROWS_AS(load_idx_images(lp, lp), io::FormatError);
  fs::remove(ip);
  fs::remove(lp);
}

TEST_CASE("bundled digit images load") {
  auto dir = fs::path(SMIL_SOURCE_DIR) / "data";
  auto set = load_idx_images(dir / "digits8x8-images-idx3-ubyte", dir / "digits8x8-labels-idx1-ubyte");
  CHECK(set.images.size() == 1797);
  CHECK(set.rows == 8);
  for (int c = 0; c < 10; ++c) CHECK(std::count(set.labels.begin(), set.labels.end(), c) >= 150);
}

TEST_CASE("noise-free synthetic views are separable by nearest centroid") {
  auto d = synth_bimodal({.num_samples = 400, .num_classes = 5, .noise = 0.0, .seed = 1});
  CHECK(nearest_centroid_accuracy(d, d, 1) == 1.0);
  CHECK(nearest_centroid_accuracy(d, d, 2) == 1.0);
}

TEST_CASE("both synthetic views beat either single view") {
  auto train = synth_bimodal({.num_samples = 20000, .num_classes = 2, .noise = 1.0, .seed = 2});
  Dataset test = train;
  test.samples.assign(train.samples.begin() + 10000, train.samples.end());
  train.samples.resize(10000);
  const double a1 = nearest_centroid_accuracy(train, test, 1);
  const double a2 = nearest_centroid_accuracy(train, test, 2);
  const double both = nearest_centroid_accuracy(train, test, 3);
  MESSAGE("view1 " << a1 << " view2 " << a2 << " both " << both);
  CHECK(both >= std::max(a1, a2) + 0.02);
}

TEST_CASE("multi-label synthetic samples carry at least one label") {
  auto d = synth_bimodal({.num_samples = 500, .num_classes = 6, .multi_label = true, .seed = 3});
  CHECK(d.multi_label);
  for (const auto& s : d.samples) {
    REQUIRE(s.label_bits.size() == 6);
    CHECK(std::accumulate(s.label_bits.begin(), s.label_bits.end(), 0) >= 1);
  }
}

TEST_CASE("synthetic generation is seeded") {
  auto a = synth_bimodal({.num_samples = 50, .seed = 5}), b = synth_bimodal({.num_samples = 50, .seed = 5});
  for (std::size_t i = 0; i < 50; ++i) CHECK(a.samples[i].modality1 == b.samples[i].modality1);
}
