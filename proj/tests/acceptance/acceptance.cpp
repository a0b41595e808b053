// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   smil_acceptance [--only 1,5,9] [--work DIR] [--profile desk|fast] [--reuse]
//
// Criteria 5-9 drive the `smil` command line on a generated avMNIST-style
// corpus and a synthetic multi-label task; their runs land under --work.

#include <CLI11.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "smil/avmnist.hpp"
#include "smil/experiment.hpp"
#include "smil/trainer.hpp"
#include "smil/variational.hpp"
#include "support/op_cases.hpp"

using namespace smil;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string pct(double v) { return fmt(100.0 * v, 4) + "%"; }

// ---- 1: gradients --------------------------------------------------------------

Verdict gradients() {
  const auto t0 = Clock::now();
  double worst_op = 0.0;
  std::string worst_name;
  for (const auto& c : testing::op_cases()) {
    const double e = testing::worst_grad_error(c);
    if (e > worst_op) {
      worst_op = e;
      worst_name = c.name;
    }
  }

  // Full loss with frozen noise on 2-sample batches, both with and without
  // modality 2, for 10 seeded models. A seeded subset of coordinates per
  // parameter tensor is perturbed through a differentiable scatter.
  nn::ModelConfig cfg;
  cfg.modality1_shape = {4};
  cfg.modality2_shape = {3};
  cfg.num_classes = 3;
  cfg.num_priors = 2;
  double worst_loss = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto m = nn::init_model(cfg, 100 + seed);
    Rng rng(200 + seed);
    priors::ModalityPriors pri;
    pri.vectors = testing::random_tensor({2, 3}, rng);
    for (bool with2 : {false, true}) {
      nn::Batch b;
      b.x1 = testing::random_tensor({2, 4}, rng);
      if (with2) b.x2 = testing::random_tensor({2, 3}, rng);
      b.labels = {static_cast<int>(seed % 3), static_cast<int>((seed + 1) % 3)};
      auto fresh = NoiseSource::fresh(400 + seed);
      smil_loss(m, b, &pri, fresh, {.kl_weight = 1.0});
      auto refs = nn::params(m);
      for (std::size_t pi = 0; pi < refs.size(); ++pi) {
        if (with2 && refs[pi].first.starts_with("phi_c")) continue;
        const Tensor original = *refs[pi].second;
        const std::size_t n = original.size(), take = std::min<std::size_t>(12, n);
        Rng pick(500 + seed + pi);
        auto coords = pick.sample(n, take);
        std::vector<std::size_t> chosen(coords.begin(), coords.begin() + take);
        std::vector<double> start, rest(original.values().begin(), original.values().end()), basis(take * n, 0.0);
        for (std::size_t i = 0; i < take; ++i) {
          start.push_back(original.at(chosen[i]));
          rest[chosen[i]] = 0.0;
          basis[i * n + chosen[i]] = 1.0;
        }
        const Tensor onehot({take, n}, basis), remainder({n}, rest);
        auto f = [&](const Tensor& sub) {
          auto copy = m;
          Tensor flat = add(reshape(matmul(reshape(sub, {1, take}), onehot), {n}), remainder);
          *nn::params(copy)[pi].second = reshape(flat, original.shape());
          auto replay = fresh.frozen();
          return smil_loss(copy, b, &pri, replay, {.kl_weight = 1.0}).total;
        };
        worst_loss = std::max(worst_loss, grad_check(f, Tensor({take}, start), 1e-5));
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst_op < 1e-4 && worst_loss < 1e-3 && t < 60.0,
          "ops max rel err " + fmt(worst_op, 3) + " (" + worst_name + "), full loss " + fmt(worst_loss, 3) + ", " +
              fmt(t, 3) + " s"};
}

// ---- 2: variational math ------------------------------------------------------

double kl_quadrature(double qm, double qs, double pm, double ps) {
  const int n = 200000;
  const double lo = qm - 12 * qs, hi = qm + 12 * qs, h = (hi - lo) / n;
  auto f = [&](double x) {
    const double lq = -0.5 * std::pow((x - qm) / qs, 2) - std::log(qs * std::sqrt(2 * std::numbers::pi));
    const double lp = -0.5 * std::pow((x - pm) / ps, 2) - std::log(ps * std::sqrt(2 * std::numbers::pi));
    return std::exp(lq) * (lq - lp);
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

Verdict variational() {
  const auto t0 = Clock::now();
  Rng rng(5);
  double worst_kl = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double qm = rng.uniform(-2, 2), qs = rng.uniform(0.2, 3), pm = rng.uniform(-2, 2), ps = rng.uniform(0.2, 3);
    const double closed = kl_diag_gauss(std::vector{qm}, std::vector{qs}, std::vector{pm}, std::vector{ps});
    worst_kl = std::max(worst_kl, std::abs(closed - kl_quadrature(qm, qs, pm, ps)));
  }

  // n = 1e5 reparameterized draws per coordinate; mean within 3 sigma / sqrt(n).
  const std::size_t n = 100000;
  const std::vector<double> mu = {0.0, 1.5, -2.0}, sd = {1.0, 0.3, 2.5};
  std::vector<double> m(n * 3), s(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      m[i * 3 + j] = mu[j];
      s[i * 3 + j] = sd[j];
    }
  auto noise = NoiseSource::fresh(17);
  const auto draw = sample_reparam({Tensor({n, 3}, m), Tensor({n, 3}, s)}, noise);
  double worst_z = 0.0;
  bool sd_ok = true;
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += draw.value.at(i * 3 + j);
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) sq += std::pow(draw.value.at(i * 3 + j) - mean, 2);
    const double emp_sd = std::sqrt(sq / (n - 1));
    worst_z = std::max(worst_z, std::abs(mean - mu[j]) / (sd[j] / std::sqrt(double(n))));
    sd_ok = sd_ok && std::abs(emp_sd / sd[j] - 1.0) < 0.02;
  }
  const double t = seconds_since(t0);
  return {worst_kl < 1e-6 && worst_z < 3.0 && sd_ok && t < 60.0,
          "KL vs quadrature max err " + fmt(worst_kl, 3) + ", sample mean max z " + fmt(worst_z, 3) + ", " + fmt(t, 3) +
              " s"};
}

// ---- 3: reconstruction ---------------------------------------------------------

Verdict reconstruction() {
  const std::size_t K = 5, d = 7;
  Rng rng(8);
  priors::ModalityPriors pri;
  pri.vectors = testing::random_tensor({K, d}, rng);
  GaussianSpec floor_spec{Tensor::full({1, K}, 1.0), Tensor::full({1, K}, nn::kStdFloor)};
  auto det = NoiseSource::deterministic();
  const auto x = nn::reconstruct(sample_reparam(floor_spec, det).value, pri);
  bool exact = true;
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += pri.vectors.at(k * d + j);
    exact = exact && x.at(j) == s;
  }

  const std::size_t n = 10000;
  GaussianSpec spec{Tensor::full({n, K}, 1.0), Tensor::full({n, K}, 0.5)};
  auto noise = NoiseSource::fresh(11);
  const auto xs = nn::reconstruct(sample_reparam(spec, noise).value, pri);
  double worst_z = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0, sum = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xs.at(i * d + j) / n;
    for (std::size_t k = 0; k < K; ++k) {
      sum += pri.vectors.at(k * d + j);
      ss += std::pow(pri.vectors.at(k * d + j), 2);
    }
    worst_z = std::max(worst_z, std::abs(mean - sum) / (0.5 * std::sqrt(ss) / std::sqrt(double(n))));
  }
  return {exact && worst_z < 3.0,
          std::string(exact ? "mean draw gives the prior sum exactly" : "mean draw differs from the prior sum") +
              ", MC mean max " + fmt(worst_z, 3) + " standard errors"};
}

// ---- 4: reduction identity ---------------------------------------------------------

Verdict reduction() {
  data::SynthConfig sc{.num_samples = 300, .num_classes = 3, .dim1 = 6, .dim2 = 5, .noise = 0.3, .seed = 3,
                       .separation = 1.5};
  const auto train = data::mask_modality(data::as_masked(data::synth_bimodal(sc)), 0.5, 4);
  train::TrainConfig cfg;
  cfg.iterations = 50;
  cfg.batch_m = cfg.batch_f = 16;
  cfg.recon = nn::ReconMode::none;
  cfg.reg = nn::RegMode::off;
  cfg.kl_weight = 0.0;
  cfg.outer_optimizer = optim::Kind::sgd;
  cfg.outer_lr = 0.05;
  cfg.seed = 11;
  double worst = 0.0;
  for (std::size_t steps : {0u, 1u}) {
    cfg.inner_steps = steps;
    cfg.inner_lr = steps == 0 ? 0.1 : 0.0;
    train::MetaLearner learner(train, cfg);
    nn::Model ref = nn::clone(learner.state().model);
    auto det = NoiseSource::deterministic();
    auto refs = nn::params(ref.theta);
    for (int it = 0; it < 50; ++it) {
      std::vector<std::size_t> bf;
      learner.step([&](const train::IterationView& v) { bf.assign(v.batch_f.begin(), v.batch_f.end()); });
      auto batch = nn::make_batch(train, bf, true);
      optim::zero_grads(refs);
      auto fwd = nn::forward_classify(ref, batch, nullptr, det);
      backward(nn::classification_loss(fwd.logits, batch, false));
      auto g = optim::collect_grads(refs);
      optim::clip_global_norm(g, cfg.clip_norm);
      optim::sgd_step(refs, g, cfg.outer_lr);
      nn::MainNet a = ref.theta, b = learner.state().model.theta;
      auto pa = nn::params(a), pb = nn::params(b);
      for (std::size_t p = 0; p < pa.size(); ++p)
        for (std::size_t i = 0; i < pa[p].second->size(); ++i)
          worst = std::max(worst, std::abs(pa[p].second->at(i) - pb[p].second->at(i)));
    }
  }
  return {worst <= 1e-12, "max |theta - plain SGD| over 50 iterations (K=0 and K=1 with alpha=0): " + fmt(worst, 3)};
}

// ---- command-line runs -------------------------------------------------------------

struct Runner {
  fs::path cli;
  fs::path work;
  bool reuse = false;
  double cli_seconds = 0.0;

  int call(const std::string& args, const fs::path& log) {
    const std::string cmd = cli.string() + " " + args + " >" + log.string() + " 2>&1";
    const auto t0 = Clock::now();
    const int status = std::system(cmd.c_str());
    cli_seconds += seconds_since(t0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  // `train` or `ablate`, unless --reuse finds a finished report.
  exp::RunReport run(const std::string& name, const std::string& args) {
    const fs::path out = work / "runs" / name;
    if (!(reuse && fs::exists(out / "report.txt"))) {
      fs::create_directories(out.parent_path());
      std::cerr << "  running " << name << std::endl;
      const int rc = call(args + " --out " + out.string(), work / "runs" / (name + ".log"));
      if (rc != 0) throw std::runtime_error(name + " exited with " + std::to_string(rc));
    }
    return exp::RunReport::load(out / "report.txt");
  }
};

struct Profile {
  std::size_t iterations;
  std::size_t ae_iterations;
  std::vector<std::string> smil;  // --set overrides on top of the defaults
};

Profile profile_for(const std::string& name) {
  const std::vector<std::string> smil = {"outer_anchor=adapted", "inner_lr=0.03", "inner_steps=3", "outer_lr=0.0005",
                                         "kl_weight=0.01"};
  if (name == "fast") return {300, 300, smil};
  return {1000, 1000, smil};
}

std::string sets(const std::vector<std::string>& kv) {
  std::string s;
  for (const auto& e : kv) s += " --set " + e;
  return s;
}

struct AvRuns {
  std::map<std::string, std::vector<exp::RunReport>> by_key;  // "<method>@<eta>"
  double seconds = 0.0;
};

double mean_of(const std::vector<exp::RunReport>& rs, const std::string& key) {
  double s = 0.0;
  for (const auto& r : rs) s += r.number(key);
  return s / static_cast<double>(rs.size());
}

fs::path make_avmnist(const fs::path& work) {
  const fs::path prepared = work / "avmnist";
  if (fs::exists(prepared / "train.smild")) return prepared;
  data::AvmnistSynthConfig cfg;
  const auto glyphs = data::load_idx_images(SMIL_SOURCE_DIR "/data/digits8x8-images-idx3-ubyte",
                                            SMIL_SOURCE_DIR "/data/digits8x8-labels-idx1-ubyte");
  const auto images = data::synth_digit_images(glyphs, cfg);
  const fs::path audio_dir = work / "avmnist-audio";
  fs::create_directories(audio_dir);
  for (const auto& d : data::synth_spoken_digits(cfg)) signal::write_wav(audio_dir / d.file_name(), d.clip);
  const auto audio = data::load_audio_dir(audio_dir);
  const auto p = data::prepare_avmnist(images, audio, 0.7, 0);
  data::save_prepared(prepared, p.train, p.validation);
  return prepared;
}

const std::vector<int> kSeeds = {0, 1, 2};

AvRuns avmnist_runs(Runner& r, const fs::path& data, const Profile& prof, bool need_main, bool need_severe) {
  AvRuns out;
  const auto t0 = Clock::now();
  const std::string base = " --data " + data.string() + " --set iterations=" + std::to_string(prof.iterations);
  auto go = [&](const std::string& method, const std::string& eta, int seed, const std::string& extra) {
    const std::string name = method + "_eta" + eta + "_s" + std::to_string(seed);
    out.by_key[method + "@" + eta].push_back(
        r.run(name, "train --method " + method + " --eta " + eta + " --seed " + std::to_string(seed) + base + extra));
  };
  for (int seed : kSeeds) {
    if (need_main) {
      go("smil", "0.2", seed, sets(prof.smil));
      go("lower", "0.2", seed, "");
      go("upper", "1", seed, "");
      go("ae", "0.2", seed, " --set ae_iterations=" + std::to_string(prof.ae_iterations));
    }
    if (need_severe) {
      go("smil", "0.05", seed, sets(prof.smil));
      go("lower", "0.05", seed, "");
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

Verdict ordering(const AvRuns& a) {
  const std::string k = "metrics.full.accuracy";
  const double smil = mean_of(a.by_key.at("smil@0.2"), k), lower = mean_of(a.by_key.at("lower@0.2"), k),
               upper = mean_of(a.by_key.at("upper@1"), k), ae = mean_of(a.by_key.at("ae@0.2"), k);
  const bool ok = smil >= lower + 0.02 && smil <= upper + 0.01 && smil >= ae;
  return {ok, "full accuracy means: SMIL " + pct(smil) + ", lower " + pct(lower) + ", upper " + pct(upper) + ", AE " +
                  pct(ae) + " (need SMIL >= lower + 2, <= upper + 1, >= AE); runs took " + fmt(a.seconds / 60, 3) +
                  " min"};
}

Verdict robustness(const AvRuns& a) {
  const std::string k = "metrics.drop.accuracy";
  const double smil = mean_of(a.by_key.at("smil@0.2"), k), ae = mean_of(a.by_key.at("ae@0.2"), k);
  return {smil < ae, "mean full minus image-only drop: SMIL " + pct(smil) + ", AE " + pct(ae)};
}

Verdict severe(const AvRuns& a) {
  const std::string k = "metrics.image-only.accuracy";
  const double smil = mean_of(a.by_key.at("smil@0.05"), k), lower = mean_of(a.by_key.at("lower@0.05"), k);
  return {smil >= lower - 0.005,
          "eta 0.05 image-only means: SMIL " + pct(smil) + ", lower " + pct(lower) + " (difference " +
              fmt(100.0 * (smil - lower), 3) + " points)"};
}

// ---- 8: ablations on the multi-label task ------------------------------------------

Verdict ablations(Runner& r, const Profile& prof) {
  const fs::path data = r.work / "multilabel";
  if (!fs::exists(data / "train.smild")) {
    if (r.call("synth-multilabel --out " + data.string(), r.work / "synth-multilabel.log") != 0)
      throw std::runtime_error("synth-multilabel failed");
  }
  const std::string k = "metrics.full.f1_samples";
  const std::string base = " --eta 0.1 --data " + data.string() + " --set iterations=" + std::to_string(prof.iterations) +
                           sets(prof.smil);
  std::map<std::string, double> mean;
  for (const std::string v : {"none", "no-kmeans", "no-reg", "fixed-gaussian", "deterministic"}) {
    std::vector<exp::RunReport> rs;
    for (int seed : kSeeds) {
      const std::string name = "ml_" + v + "_s" + std::to_string(seed);
      const std::string cmd = v == "none" ? "train --method smil" : "ablate --variant " + v;
      rs.push_back(r.run(name, cmd + " --seed " + std::to_string(seed) + base));
    }
    mean[v] = mean_of(rs, k);
  }
  bool ok = true;
  std::string detail = "F1-samples means: full " + fmt(mean["none"]);
  for (const auto& [v, m] : mean) {
    if (v == "none") continue;
    ok = ok && mean["none"] >= m;
    detail += ", " + v + " " + fmt(m);
  }
  ok = ok && mean["none"] - mean["no-reg"] >= 0.005 && mean["none"] - mean["deterministic"] >= 0.005;
  return {ok, detail};
}

// ---- 9: replay -----------------------------------------------------------------------

Verdict replay(Runner& r, const fs::path& avdata) {
  std::vector<std::string> checked, broken;
  auto compare = [&](const fs::path& run_dir, const std::string& name) {
    const fs::path again = r.work / "replays" / name;
    fs::create_directories(again.parent_path());
    const int rc = r.call("train --replay " + (run_dir / "report.txt").string() + " --out " + again.string(),
                          r.work / "replays" / (name + ".log"));
    const bool same = rc == 0 && exp::RunReport::load(again / "report.txt")
                                     .same_results(exp::RunReport::load(run_dir / "report.txt"));
    (same ? checked : broken).push_back(name);
  };
  // Short invocations of every method and variant.
  const std::string base = " --eta 0.2 --seed 4 --data " + avdata.string() + " --set iterations=25 --set ae_iterations=25";
  for (const std::string m : {"smil", "lower", "ae"}) {
    const auto name = "short_" + m;
    r.run(name, "train --method " + m + base);
    compare(r.work / "runs" / name, name);
  }
  r.run("short_upper", "train --method upper --eta 1 --seed 4 --data " + avdata.string() + " --set iterations=25");
  compare(r.work / "runs" / "short_upper", "short_upper");
  for (const auto& v : exp::kAblations) {
    const auto name = "short_" + v;
    r.run(name, "ablate --variant " + v + base);
    compare(r.work / "runs" / name, name);
  }
  // And the full-length runs from criteria 5 and 8 when present.
  for (const std::string name : {"smil_eta0.2_s0", "ml_none_s0"}) {
    if (fs::exists(r.work / "runs" / name / "report.txt")) compare(r.work / "runs" / name, name);
  }
  std::string detail = std::to_string(checked.size()) + " replays bit-identical";
  if (!broken.empty()) {
    detail += "; differ:";
    for (const auto& b : broken) detail += " " + b;
  }
  return {broken.empty() && !checked.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SMIL acceptance run"};
  std::string only, work = "acceptance-work", profile_name = "desk";
  bool reuse = false;
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--work", work, "Directory for generated data and runs");
  app.add_option("--profile", profile_name, "desk or fast")->check(CLI::IsMember({"desk", "fast"}));
  app.add_flag("--reuse", reuse, "Keep finished runs found under --work");
  CLI11_PARSE(app, argc, argv);

  std::set<int> wanted;
  if (only.empty()) {
    for (int i = 1; i <= 9; ++i) wanted.insert(i);
  } else {
    std::istringstream in(only);
    std::string tok;
    while (std::getline(in, tok, ',')) wanted.insert(std::stoi(tok));
  }

  const Profile profile = profile_for(profile_name);
  Runner runner{SMIL_CLI, fs::absolute(work), reuse};
  fs::create_directories(runner.work);

  std::map<int, Verdict> verdicts;
  auto record = [&](int id, const std::function<Verdict()>& f) {
    if (!wanted.count(id)) return;
    try {
      verdicts[id] = f();
    } catch (const std::exception& e) {
      verdicts[id] = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (verdicts[id].pass ? "PASS" : "FAIL") << "  " << verdicts[id].detail
              << std::endl;
  };

  record(1, gradients);
  record(2, variational);
  record(3, reconstruction);
  record(4, reduction);

  const bool main_runs = wanted.count(5) || wanted.count(6);
  const bool severe_runs = wanted.count(7);
  fs::path avdata;
  if (main_runs || severe_runs || wanted.count(9)) avdata = make_avmnist(runner.work);
  if (main_runs || severe_runs) {
    AvRuns av;
    try {
      av = avmnist_runs(runner, avdata, profile, main_runs, severe_runs);
    } catch (const std::exception& e) {
      for (int id : {5, 6, 7})
        if (wanted.count(id)) record(id, [&] { return Verdict{false, std::string("error: ") + e.what()}; });
      av.by_key.clear();
    }
    if (!av.by_key.empty()) {
      record(5, [&] { return ordering(av); });
      record(6, [&] { return robustness(av); });
      record(7, [&] { return severe(av); });
    }
  }
  record(8, [&] { return ablations(runner, profile); });
  record(9, [&] { return replay(runner, avdata); });

  std::vector<exp::RunReport> all;
  if (fs::exists(runner.work / "runs")) {
    for (const auto& e : fs::directory_iterator(runner.work / "runs"))
      if (fs::exists(e.path() / "report.txt")) all.push_back(exp::RunReport::load(e.path() / "report.txt"));
    std::ofstream(runner.work / "summary.csv") << exp::aggregate_reports(all);
  }

  const auto passed = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.second.pass; });
  std::cout << passed << "/" << verdicts.size() << " criteria passed" << std::endl;
  return passed == static_cast<long>(verdicts.size()) ? 0 : 1;
}
