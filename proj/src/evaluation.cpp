#include "smil/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "smil/error.hpp"
#include "smil/gaussian.hpp"

namespace smil::eval {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (truth.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
  double f1() const {
    const auto den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
  }
};

Counts count_row(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& t) {
  if (p.size() != t.size()) throw std::invalid_argument("f1: row width mismatch");
  Counts c;
  for (std::size_t j = 0; j < p.size(); ++j) {
    c.tp += p[j] && t[j];
    c.fp += p[j] && !t[j];
    c.fn += !p[j] && t[j];
  }
  return c;
}

void check_rows(const BitMatrix& p, const BitMatrix& t) {
  if (p.size() != t.size()) throw std::invalid_argument("f1: row count mismatch");
  if (t.empty()) throw std::invalid_argument("f1: empty input");
}

}  // namespace

double f1_micro(const BitMatrix& predicted, const BitMatrix& truth) {
  check_rows(predicted, truth);
  Counts total;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto c = count_row(predicted[i], truth[i]);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total.f1();
}

double f1_samples(const BitMatrix& predicted, const BitMatrix& truth) {
  check_rows(predicted, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += count_row(predicted[i], truth[i]).f1();
  return s / static_cast<double>(truth.size());
}

std::string pattern_name(Pattern p) { return p == Pattern::full ? "full" : "image-only"; }

Pattern parse_pattern(const std::string& s) {
  if (s == "full") return Pattern::full;
  if (s == "image-only") return Pattern::image_only;
  throw Error("unknown-pattern", s);
}

namespace {

// Same parameters, no autodiff bookkeeping.
nn::Model frozen(const nn::Model& model) {
  nn::Model m = model;
  for (auto& [name, t] : nn::params(m)) *t = t->detach();
  return m;
}

}  // namespace

Predictions predict(const nn::Model& model, const priors::ModalityPriors* priors, const data::MaskedDataset& data,
                    const EvalOptions& opt) {
  if (data.size() == 0) throw Error("empty-batch", "nothing to evaluate");
  const auto& cfg = model.config;
  if (opt.pattern == Pattern::image_only && cfg.recon == nn::ReconMode::priors && !priors) {
    throw Error("missing-priors", "image-only evaluation of a reconstructing model needs its priors");
  }
  const nn::Model m = frozen(model);
  std::optional<priors::ModalityPriors> pri;
  if (priors) pri = priors::ModalityPriors{priors->vectors.detach(), priors->space, priors->source_count};

  const bool full = opt.pattern == Pattern::full;
  const std::size_t draws = std::max<std::size_t>(1, opt.stochastic_samples);
  NoiseSource noise = opt.stochastic_samples == 0 ? NoiseSource::deterministic() : NoiseSource::fresh(opt.seed);
  const std::size_t classes = cfg.num_classes;

  Predictions out;
  for (std::size_t start = 0; start < data.size(); start += opt.chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + opt.chunk); ++i) idx.push_back(i);
    const auto batch = nn::make_batch(data, idx, full);
    std::vector<double> prob(idx.size() * classes, 0.0);
    for (std::size_t l = 0; l < draws; ++l) {
      const auto fwd = nn::forward_classify(m, batch, pri ? &*pri : nullptr, noise);
      const auto z = fwd.logits.values();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto row = z.subspan(r * classes, classes);
        if (cfg.multi_label) {
          for (std::size_t c = 0; c < classes; ++c) prob[r * classes + c] += 1.0 / (1.0 + std::exp(-row[c]));
        } else {
          const double mx = *std::max_element(row.begin(), row.end());
          double s = 0.0;
          for (double v : row) s += std::exp(v - mx);
          for (std::size_t c = 0; c < classes; ++c) prob[r * classes + c] += std::exp(row[c] - mx) / s;
        }
      }
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = std::span<const double>(prob).subspan(r * classes, classes);
      if (cfg.multi_label) {
        std::vector<std::uint8_t> bits(classes);
        for (std::size_t c = 0; c < classes; ++c) bits[c] = row[c] / static_cast<double>(draws) >= 0.5;
        out.bits.push_back(std::move(bits));
      }
      out.labels.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

MetricSet evaluate(const nn::Model& model, const priors::ModalityPriors* priors, const data::MaskedDataset& data,
                   const EvalOptions& opt) {
  const auto pred = predict(model, priors, data, opt);
  MetricSet ms;
  if (model.config.multi_label) {
    BitMatrix truth;
    for (const auto& s : data.data.samples) truth.push_back(s.label_bits);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) exact += pred.bits[i] == truth[i];
    ms.accuracy = static_cast<double>(exact) / static_cast<double>(truth.size());
    ms.f1_micro = f1_micro(pred.bits, truth);
    ms.f1_samples = f1_samples(pred.bits, truth);
  } else {
    std::vector<int> truth;
    for (const auto& s : data.data.samples) truth.push_back(s.label);
    ms.accuracy = accuracy(pred.labels, truth);
  }
  return ms;
}

}  // namespace smil::eval
