#pragma once

// Modality priors: K representative modality-2 vectors clustered from the
// modality-complete training samples.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "smil/dataset.hpp"
#include "smil/tensor.hpp"

namespace smil::priors {

enum class Space : std::uint8_t { input = 0, embedding = 1 };
enum class Method { kmeans, pca };

struct ModalityPriors {
  Tensor vectors;  // K x d
  Space space = Space::input;
  std::size_t source_count = 0;

  std::size_t count() const { return vectors.dim(0); }
  std::size_t dim() const { return vectors.dim(1); }
};

struct KMeansResult {
  Tensor centroids;  // k x d
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each Lloyd update
  std::size_t iterations = 0;
};

/// Lloyd iterations from k-means++ seeds. An emptied cluster is re-seeded at
/// the point farthest from its assigned centroid.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::size_t max_iters, std::uint64_t seed);

struct PcaBasis {
  std::vector<double> mean;         // d
  Tensor directions;                // k x d, unit rows, descending variance
  std::vector<double> variances;    // k eigenvalues of the sample covariance
};

PcaBasis pca(const Tensor& points, std::size_t k);
/// Mean plus each of the top-k directions scaled by one standard deviation.
ModalityPriors pca_priors(const Tensor& points, std::size_t k);

/// Maps a batch of flattened modality-2 samples (N x d_in) to features.
using FeatureEncoder = std::function<Tensor(const Tensor&)>;

struct BuildOptions {
  std::size_t k = 16;
  Method method = Method::kmeans;
  Space space = Space::input;
  std::size_t max_iters = 100;
  std::uint64_t seed = 0;
};

/// Clusters modality 2 of the complete samples of `data` only.
ModalityPriors build_priors(const data::MaskedDataset& data, const BuildOptions& options,
                            const FeatureEncoder& encoder = {});

/// "SMILP", u32 k, u32 d, space byte, k*d float64.
void write_priors(const std::filesystem::path& path, const ModalityPriors& priors);
ModalityPriors read_priors(const std::filesystem::path& path);

}  // namespace smil::priors
