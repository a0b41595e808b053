#include "smil/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "smil/error.hpp"
#include "smil/signal.hpp"

namespace smil::exp {

namespace {

template <typename E>
struct Names {
  std::vector<std::pair<E, std::string>> table;

  const std::string& name(E e) const {
    for (const auto& [v, s] : table)
      if (v == e) return s;
    throw std::logic_error("unnamed enum value");
  }
  E parse(const std::string& key, const std::string& s) const {
    for (const auto& [v, n] : table)
      if (n == s) return v;
    throw Error("bad-config", key + " cannot be '" + s + "'");
  }
};

const Names<train::Method> kMethod{{{train::Method::smil, "smil"},
                                    {train::Method::lower, "lower"},
                                    {train::Method::upper, "upper"},
                                    {train::Method::ae, "ae"}}};
const Names<optim::Kind> kOptimizer{{{optim::Kind::adam, "adam"}, {optim::Kind::sgd, "sgd"}}};
const Names<train::OuterAnchor> kAnchor{{{train::OuterAnchor::theta, "theta"}, {train::OuterAnchor::adapted, "adapted"}}};
const Names<priors::Method> kPriorMethod{{{priors::Method::kmeans, "kmeans"}, {priors::Method::pca, "pca"}}};
const Names<priors::Space> kPriorSpace{{{priors::Space::input, "input"}, {priors::Space::embedding, "embedding"}}};
const Names<nn::RegOp> kRegOp{{{nn::RegOp::mul, "mul"}, {nn::RegOp::add, "add"}}};
const Names<nn::OmegaMean> kOmegaMean{{{nn::OmegaMean::fixed, "fixed"}, {nn::OmegaMean::learned, "learned"}}};
const Names<nn::ReconMode> kRecon{
    {{nn::ReconMode::priors, "priors"}, {nn::ReconMode::direct, "direct"}, {nn::ReconMode::none, "none"}}};
const Names<nn::RegMode> kReg{
    {{nn::RegMode::learned, "learned"}, {nn::RegMode::fixed_gaussian, "fixed-gaussian"}, {nn::RegMode::off, "off"}}};

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Error("bad-config", key + " expects a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error("bad-config", key + " expects a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("bad-config", key + " expects true or false, got '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot-read", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// ---- config ----------------------------------------------------------------------

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto& t = c.train;
  if (key == "method") t.method = kMethod.parse(key, value);
  else if (key == "eta") {
    t.eta = to_double(key, value);
    if (t.eta < 0.0 || t.eta > 1.0) throw Error("bad-config", "eta must lie in [0, 1]");
  } else if (key == "seed") t.seed = to_u64(key, value);
  else if (key == "iterations") t.iterations = to_u64(key, value);
  else if (key == "inner_lr") t.inner_lr = to_double(key, value);
  else if (key == "outer_lr") t.outer_lr = to_double(key, value);
  else if (key == "inner_steps") t.inner_steps = to_u64(key, value);
  else if (key == "batch_m") t.batch_m = to_u64(key, value);
  else if (key == "batch_f") t.batch_f = to_u64(key, value);
  else if (key == "mc_samples") t.mc_samples = to_u64(key, value);
  else if (key == "kl_weight") t.kl_weight = to_double(key, value);
  else if (key == "deterministic") t.deterministic = to_bool(key, value);
  else if (key == "clip_norm") t.clip_norm = to_double(key, value);
  else if (key == "outer_optimizer") t.outer_optimizer = kOptimizer.parse(key, value);
  else if (key == "outer_anchor") t.outer_anchor = kAnchor.parse(key, value);
  else if (key == "pos_weight") t.pos_weight = to_double(key, value);
  else if (key == "num_priors") t.num_priors = to_u64(key, value);
  else if (key == "prior_method") t.prior_method = kPriorMethod.parse(key, value);
  else if (key == "prior_space") t.prior_space = kPriorSpace.parse(key, value);
  else if (key == "prior_refresh") t.prior_refresh = to_u64(key, value);
  else if (key == "kmeans_iters") t.kmeans_iters = to_u64(key, value);
  else if (key == "reg_op") t.reg_op = kRegOp.parse(key, value);
  else if (key == "omega_mean") t.omega_mean = kOmegaMean.parse(key, value);
  else if (key == "recon") t.recon = kRecon.parse(key, value);
  else if (key == "reg") t.reg = kReg.parse(key, value);
  else if (key == "ignore_mask") t.ignore_mask = to_bool(key, value);
  else if (key == "ae_iterations") t.ae_iterations = to_u64(key, value);
  else if (key == "ae_lr") t.ae_lr = to_double(key, value);
  else if (key == "variant") c.variant = value;
  else if (key == "eval_samples") c.eval_samples = to_u64(key, value);
  else if (key == "data") c.data = value;
  else throw Error("bad-config", "unknown key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig c) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("bad-config", "line " + std::to_string(lineno) + " has no '='");
    apply_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  return parse_config(read_file(path), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  const auto& t = c.train;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"method", kMethod.name(t.method)},
      {"eta", format_double(t.eta)},
      {"seed", std::to_string(t.seed)},
      {"iterations", std::to_string(t.iterations)},
      {"inner_lr", format_double(t.inner_lr)},
      {"outer_lr", format_double(t.outer_lr)},
      {"inner_steps", std::to_string(t.inner_steps)},
      {"batch_m", std::to_string(t.batch_m)},
      {"batch_f", std::to_string(t.batch_f)},
      {"mc_samples", std::to_string(t.mc_samples)},
      {"kl_weight", format_double(t.kl_weight)},
      {"deterministic", b(t.deterministic)},
      {"clip_norm", format_double(t.clip_norm)},
      {"outer_optimizer", kOptimizer.name(t.outer_optimizer)},
      {"outer_anchor", kAnchor.name(t.outer_anchor)},
      {"pos_weight", format_double(t.pos_weight)},
      {"num_priors", std::to_string(t.num_priors)},
      {"prior_method", kPriorMethod.name(t.prior_method)},
      {"prior_space", kPriorSpace.name(t.prior_space)},
      {"prior_refresh", std::to_string(t.prior_refresh)},
      {"kmeans_iters", std::to_string(t.kmeans_iters)},
      {"reg_op", kRegOp.name(t.reg_op)},
      {"omega_mean", kOmegaMean.name(t.omega_mean)},
      {"recon", kRecon.name(t.recon)},
      {"reg", kReg.name(t.reg)},
      {"ignore_mask", b(t.ignore_mask)},
      {"ae_iterations", std::to_string(t.ae_iterations)},
      {"ae_lr", format_double(t.ae_lr)},
      {"variant", c.variant},
      {"eval_samples", std::to_string(c.eval_samples)},
      {"data", c.data},
  };
}

// ---- report ----------------------------------------------------------------------

void RunReport::set(const std::string& key, const std::string& value) {
  if (key.find(':') != std::string::npos || key.find('\n') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw std::invalid_argument("report: key or value breaks the line format: " + key);
  }
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

std::optional<std::string> RunReport::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

double RunReport::number(const std::string& key) const {
  auto v = get(key);
  if (!v) throw Error("bad-report", "missing key " + key);
  return to_double(key, *v);
}

std::string RunReport::text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + ": " + v + "\n";
  return out;
}

RunReport RunReport::parse(const std::string& text) {
  RunReport r;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) {
      if (!line.empty() && line.back() == ':') {
        r.set(line.substr(0, line.size() - 1), "");
        continue;
      }
      throw Error("bad-report", "line " + std::to_string(lineno) + " is not 'key: value'");
    }
    r.set(line.substr(0, colon), line.substr(colon + 2));
  }
  return r;
}

void RunReport::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot-write", path.string());
    out << text();
  }
  std::filesystem::rename(tmp, path);
}

RunReport RunReport::load(const std::filesystem::path& path) { return parse(read_file(path)); }

bool RunReport::same_results(const RunReport& other) const {
  auto strip = [](const RunReport& r) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : r.entries_) {
      if (k == "wall_clock_seconds" || k == "config.data" || k == "history.file") continue;
      out.emplace_back(k, v);
    }
    return out;
  };
  return strip(*this) == strip(other);
}

ExperimentConfig RunReport::config() const {
  ExperimentConfig c;
  bool any = false;
  for (const auto& [k, v] : entries_) {
    if (k.rfind("config.", 0) == 0) {
      apply_setting(c, k.substr(7), v);
      any = true;
    }
  }
  if (!any) throw Error("bad-report", "no config.* entries to replay");
  return c;
}

// ---- runs ------------------------------------------------------------------------

namespace {

void put_metrics(RunReport& r, const std::string& pattern, const eval::MetricSet& m) {
  r.set("metrics." + pattern + ".accuracy", m.accuracy);
  if (m.f1_micro) r.set("metrics." + pattern + ".f1_micro", *m.f1_micro);
  if (m.f1_samples) r.set("metrics." + pattern + ".f1_samples", *m.f1_samples);
}

}  // namespace

RunResult run_experiment(const data::MaskedDataset& train, const data::MaskedDataset& validation,
                         const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& tc = config.train;
  const auto masked = data::mask_modality(train, tc.eta, tc.seed);

  RunResult res;
  res.state = tc.method == train::Method::smil ? train::train_smil(masked, tc) : train::train_baseline(masked, tc);
  const priors::ModalityPriors* pri = res.state.priors ? &*res.state.priors : nullptr;
  eval::EvalOptions eo;
  eo.stochastic_samples = config.eval_samples;
  eo.seed = tc.seed;
  eo.pattern = eval::Pattern::full;
  res.full = eval::evaluate(res.state.model, pri, validation, eo);
  eo.pattern = eval::Pattern::image_only;
  res.image_only = eval::evaluate(res.state.model, pri, validation, eo);

  auto& r = res.report;
  r.set("method", kMethod.name(tc.method));
  r.set("variant", config.variant);
  r.set("seed", std::to_string(tc.seed));
  r.set("eta", tc.eta);
  for (const auto& [k, v] : config_entries(config)) r.set("config." + k, v);
  const signal::MfccConfig mf;
  r.set("mfcc.frame_length", std::to_string(mf.frame_length));
  r.set("mfcc.min_hop", std::to_string(mf.min_hop));
  r.set("mfcc.fft_size", std::to_string(mf.fft_size));
  r.set("mfcc.num_filters", std::to_string(mf.num_filters));
  r.set("mfcc.low_hz", mf.low_hz);
  r.set("mfcc.high_hz", mf.high_hz);
  r.set("mfcc.pre_emphasis", mf.pre_emphasis);
  r.set("mfcc.log_floor", mf.log_floor);
  r.set("mfcc.window", "hann");
  r.set("data.train_size", std::to_string(masked.size()));
  r.set("data.complete", std::to_string(masked.complete_indices().size()));
  r.set("data.incomplete", std::to_string(masked.incomplete_indices().size()));
  r.set("data.validation_size", std::to_string(validation.size()));
  r.set("model.parameters", std::to_string(nn::parameter_count(res.state.model.theta)));
  if (pri) {
    r.set("priors.count", std::to_string(pri->count()));
    r.set("priors.dim", std::to_string(pri->dim()));
    r.set("priors.space", kPriorSpace.name(pri->space));
    r.set("priors.method", kPriorMethod.name(tc.prior_method));
    r.set("priors.source_count", std::to_string(pri->source_count));
  } else {
    r.set("priors.count", "0");
  }
  r.set("history.file", "history.csv");
  r.set("history.iterations", std::to_string(res.state.history.size()));
  if (!res.state.history.empty()) {
    const auto& last = res.state.history.back().outer;
    r.set("final.nll", last.nll);
    r.set("final.kl_omega", last.kl_omega);
    r.set("final.kl_r", last.kl_r);
    r.set("final.total", last.total);
  }
  if (res.state.ae_imputation_mse >= 0.0) r.set("ae.imputation_mse", res.state.ae_imputation_mse);
  put_metrics(r, "full", res.full);
  put_metrics(r, "image-only", res.image_only);
  r.set("metrics.drop.accuracy", res.full.accuracy - res.image_only.accuracy);
  r.set("wall_clock_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return res;
}

ExperimentConfig ablation_config(ExperimentConfig c, const std::string& variant) {
  c.train.method = train::Method::smil;
  if (variant == "no-kmeans") c.train.recon = nn::ReconMode::direct;
  else if (variant == "no-reg") c.train.reg = nn::RegMode::off;
  else if (variant == "fixed-gaussian") c.train.reg = nn::RegMode::fixed_gaussian;
  else if (variant == "deterministic") c.train.deterministic = true;
  else throw Error("unknown-ablation-variant", variant);
  c.variant = variant;
  return c;
}

RunResult run_ablation(const data::MaskedDataset& train, const data::MaskedDataset& validation,
                       const ExperimentConfig& base, const std::string& variant) {
  return run_experiment(train, validation, ablation_config(base, variant));
}

void write_history(const std::filesystem::path& path, const std::vector<train::IterationRecord>& history) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot-write", path.string());
    out << "iter,nll,kl_omega,kl_r,total\n";
    for (const auto& h : history) {
      out << h.iter << ',' << format_double(h.outer.nll) << ',' << format_double(h.outer.kl_omega) << ','
          << format_double(h.outer.kl_r) << ',' << format_double(h.outer.total) << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

void save_run(const std::filesystem::path& dir, const RunResult& run, const data::MaskedDataset& masked_train) {
  std::filesystem::create_directories(dir);
  nn::write_checkpoint(dir / "model.smilw", nn::model_blocks(run.state.model));
  if (run.state.priors) priors::write_priors(dir / "priors.smilp", *run.state.priors);
  write_history(dir / "history.csv", run.state.history);
  data::save_manifest(dir / "manifest.tsv", masked_train);
  run.report.save(dir / "report.txt");
}

// ---- aggregation -------------------------------------------------------------------

std::string aggregate_reports(std::vector<RunReport> reports) {
  auto key = [](const RunReport& r) {
    return std::make_tuple(r.get("method").value_or(""), r.number("eta"), std::stoull(r.get("seed").value_or("0")),
                           r.get("variant").value_or("none"));
  };
  std::sort(reports.begin(), reports.end(), [&](const RunReport& a, const RunReport& b) { return key(a) < key(b); });

  const std::vector<std::string> cols = {"metrics.full.accuracy",     "metrics.image-only.accuracy",
                                         "metrics.drop.accuracy",     "metrics.full.f1_micro",
                                         "metrics.full.f1_samples",   "metrics.image-only.f1_micro",
                                         "metrics.image-only.f1_samples"};
  std::ostringstream out;
  out << "method,variant,eta,seed";
  for (const auto& c : cols) out << ',' << c.substr(8);
  out << '\n';
  using Group = std::tuple<std::string, std::string, double>;
  struct Acc {
    std::size_t runs = 0;
    std::vector<double> sum;
    std::vector<std::size_t> n;
  };
  std::map<Group, Acc> groups;
  for (const auto& r : reports) {
    const auto [method, eta, seed, variant] = key(r);
    out << method << ',' << variant << ',' << format_double(eta) << ',' << seed;
    auto& g = groups[{method, variant, eta}];
    if (g.sum.empty()) {
      g.sum.assign(cols.size(), 0.0);
      g.n.assign(cols.size(), 0);
    }
    ++g.runs;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const auto v = r.get(cols[i]);
      out << ',' << (v ? *v : "");
      if (v) {
        g.sum[i] += to_double(cols[i], *v);
        ++g.n[i];
      }
    }
    out << '\n';
  }
  out << "\nmethod,variant,eta,runs";
  for (const auto& c : cols) out << ",mean." << c.substr(8);
  out << '\n';
  for (const auto& [g, acc] : groups) {
    out << std::get<0>(g) << ',' << std::get<1>(g) << ',' << format_double(std::get<2>(g)) << ',' << acc.runs;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      out << ',';
      if (acc.n[i]) out << format_double(acc.sum[i] / static_cast<double>(acc.n[i]));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace smil::exp
