#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "smil/avmnist.hpp"
#include "smil/error.hpp"
#include "smil/experiment.hpp"

using namespace smil;
namespace fs = std::filesystem;

namespace {

constexpr int kUsageExit = 2;

fs::path resolve_data(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("SMIL_DATA_DIR"); env && *env) return env;
  throw Error("missing-data-dir", "pass --data, set data in the config, or set SMIL_DATA_DIR");
}

exp::ExperimentConfig build_config(const std::string& config_path, const std::vector<std::string>& sets) {
  exp::ExperimentConfig c;
  if (!config_path.empty()) c = exp::load_config(config_path, c);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("bad-config", "--set expects key=value, got '" + kv + "'");
    exp::apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

void print_metrics(std::ostream& out, const std::string& pattern, const eval::MetricSet& m) {
  out << "metrics." << pattern << ".accuracy: " << exp::format_double(m.accuracy) << '\n';
  if (m.f1_micro) out << "metrics." << pattern << ".f1_micro: " << exp::format_double(*m.f1_micro) << '\n';
  if (m.f1_samples) out << "metrics." << pattern << ".f1_samples: " << exp::format_double(*m.f1_samples) << '\n';
}

void finish_run(const fs::path& out, const exp::RunResult& run, const data::MaskedDataset& train,
                const exp::ExperimentConfig& cfg) {
  const auto masked = data::mask_modality(train, cfg.train.eta, cfg.train.seed);
  exp::save_run(out, run, masked);
  std::cout << "run: " << out.string() << '\n';
  print_metrics(std::cout, "full", run.full);
  print_metrics(std::cout, "image-only", run.image_only);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SMIL: multimodal learning with severely missing modality"};
  app.require_subcommand(1);

  // synth-avmnist
  auto* synth = app.add_subcommand("synth-avmnist", "Render an avMNIST-style image set and spoken-digit clips");
  std::string glyph_images = SMIL_DEFAULT_GLYPHS "/digits8x8-images-idx3-ubyte";
  std::string glyph_labels = SMIL_DEFAULT_GLYPHS "/digits8x8-labels-idx1-ubyte";
  std::string synth_out;
  data::AvmnistSynthConfig synth_cfg;
  synth->add_option("--glyph-images", glyph_images, "IDX glyph images");
  synth->add_option("--glyph-labels", glyph_labels, "IDX glyph labels");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--per-class", synth_cfg.per_class);
  synth->add_option("--image-noise", synth_cfg.image_noise);
  synth->add_option("--occlusion", synth_cfg.occlusion_prob);
  synth->add_option("--snr-low", synth_cfg.snr_db_low);
  synth->add_option("--snr-high", synth_cfg.snr_db_high);

  // synth-multilabel
  auto* synth_ml = app.add_subcommand("synth-multilabel", "Write a prepared synthetic multi-label bimodal task");
  data::SynthConfig ml_cfg;
  ml_cfg.multi_label = true;
  ml_cfg.num_samples = 1500;
  ml_cfg.num_classes = 6;
  ml_cfg.dim1 = 16;
  ml_cfg.dim2 = 16;
  std::string ml_out;
  std::uint64_t ml_split_seed = 0;
  synth_ml->add_option("--out", ml_out)->required();
  synth_ml->add_option("--samples", ml_cfg.num_samples);
  synth_ml->add_option("--classes", ml_cfg.num_classes);
  synth_ml->add_option("--dim1", ml_cfg.dim1);
  synth_ml->add_option("--dim2", ml_cfg.dim2);
  synth_ml->add_option("--noise", ml_cfg.noise);
  synth_ml->add_option("--separation", ml_cfg.separation);
  synth_ml->add_option("--seed", ml_cfg.seed);
  synth_ml->add_option("--split-seed", ml_split_seed);

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "Pair images with audio, split 70/30, standardize");
  std::string images, labels, audio_dir, features, feature_labels, prep_out;
  double train_fraction = 0.7;
  std::uint64_t split_seed = 0;
  prep->add_option("--images", images)->required();
  prep->add_option("--labels", labels)->required();
  prep->add_option("--audio-dir", audio_dir);
  prep->add_option("--features", features, "Precomputed 20x20 maps (SMILF)");
  prep->add_option("--feature-labels", feature_labels, "IDX labels for --features");
  prep->add_option("--out", prep_out)->required();
  prep->add_option("--train-fraction", train_fraction);
  prep->add_option("--split-seed", split_seed);

  // train
  auto* tr = app.add_subcommand("train", "Train one method and evaluate both test patterns");
  std::string method, config_path, out_dir, data_flag, replay;
  std::optional<double> eta;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  tr->add_option("--method", method);
  tr->add_option("--eta", eta);
  tr->add_option("--seed", seed);
  tr->add_option("--config", config_path);
  tr->add_option("--set", sets, "key=value overrides");
  tr->add_option("--replay", replay, "Re-run the configuration echoed in a report");
  tr->add_option("--data", data_flag);
  tr->add_option("--out", out_dir);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a saved run");
  std::string checkpoint, pattern = "full", metrics_out;
  std::size_t stochastic = 0;
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data_flag);
  ev->add_option("--pattern", pattern);
  ev->add_option("--stochastic", stochastic, "Average L draws instead of using means");
  ev->add_option("--out", metrics_out, "Also write the metrics here");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate one SMIL ablation variant");
  std::string variant;
  ab->add_option("--variant", variant)->required();
  ab->add_option("--eta", eta);
  ab->add_option("--seed", seed);
  ab->add_option("--config", config_path);
  ab->add_option("--set", sets);
  ab->add_option("--data", data_flag);
  ab->add_option("--out", out_dir);

  // report
  auto* rep = app.add_subcommand("report", "Aggregate run reports into one table");
  std::vector<std::string> runs;
  std::string report_out;
  rep->add_option("--runs", runs)->required();
  rep->add_option("--out", report_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error usage: " << e.what() << '\n';
    return kUsageExit;
  }

  try {
    if (synth->parsed()) {
      const auto glyphs = data::load_idx_images(glyph_images, glyph_labels);
      const auto imgs = data::synth_digit_images(glyphs, synth_cfg);
      fs::create_directories(fs::path(synth_out) / "audio");
      data::write_idx_images(fs::path(synth_out) / "images-idx3-ubyte", imgs);
      data::write_idx_labels(fs::path(synth_out) / "labels-idx1-ubyte", imgs.labels);
      for (const auto& d : data::synth_spoken_digits(synth_cfg)) {
        signal::write_wav(fs::path(synth_out) / "audio" / d.file_name(), d.clip);
      }
      std::cout << "images: " << imgs.images.size() << "\nout: " << synth_out << '\n';
    } else if (synth_ml->parsed()) {
      auto [train, val] = data::split_dataset(data::synth_bimodal(ml_cfg), 0.7, ml_split_seed);
      data::save_prepared(ml_out, train, val);
      std::cout << "train: " << train.size() << "\nvalidation: " << val.size() << '\n';
    } else if (prep->parsed()) {
      if (audio_dir.empty() == features.empty()) {
        throw Error("bad-arguments", "pass exactly one of --audio-dir and --features");
      }
      if (!features.empty() && feature_labels.empty()) throw Error("bad-arguments", "--features needs --feature-labels");
      const auto imgs = data::load_idx_images(images, labels);
      const auto audio = features.empty() ? data::load_audio_dir(audio_dir)
                                          : data::load_audio_features(features, feature_labels);
      const auto p = data::prepare_avmnist(imgs, audio, train_fraction, split_seed);
      data::save_prepared(prep_out, p.train, p.validation);
      std::ofstream info(fs::path(prep_out) / "standardizer.txt");
      for (std::size_t c = 0; c < p.standardizer.mean.size(); ++c) {
        info << "coeff." << c << ": " << exp::format_double(p.standardizer.mean[c]) << ' '
             << exp::format_double(p.standardizer.stddev[c]) << '\n';
      }
      std::cout << "train: " << p.train.size() << "\nvalidation: " << p.validation.size() << '\n';
    } else if (tr->parsed() || ab->parsed()) {
      exp::ExperimentConfig cfg;
      if (!replay.empty()) {
        cfg = exp::RunReport::load(replay).config();
        for (const auto& kv : sets) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw Error("bad-config", "--set expects key=value, got '" + kv + "'");
          exp::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
      } else {
        cfg = build_config(config_path, sets);
      }
      if (!method.empty()) exp::apply_setting(cfg, "method", method);
      if (eta) exp::apply_setting(cfg, "eta", exp::format_double(*eta));
      if (seed) cfg.train.seed = *seed;
      if (ab->parsed()) cfg = exp::ablation_config(cfg, variant);
      if (out_dir.empty()) throw Error("bad-arguments", "--out is required");
      const auto dir = resolve_data(data_flag, cfg.data);
      cfg.data = dir.string();
      const auto [train, val] = data::load_prepared(dir);
      const auto run = exp::run_experiment(train.unmasked(), val, cfg);
      finish_run(out_dir, run, train.unmasked(), cfg);
    } else if (ev->parsed()) {
      const fs::path ckpt(checkpoint);
      const auto report_path = ckpt.parent_path() / "report.txt";
      if (!fs::exists(report_path)) throw Error("missing-run-report", report_path.string());
      const auto cfg = exp::RunReport::load(report_path).config();
      const auto dir = resolve_data(data_flag, cfg.data);
      const auto [train, val] = data::load_prepared(dir);
      auto model = nn::init_model(train::model_config(val.data, cfg.train), 0);
      nn::load_model_blocks(model, nn::read_checkpoint(ckpt));
      std::optional<priors::ModalityPriors> pri;
      if (fs::exists(ckpt.parent_path() / "priors.smilp")) pri = priors::read_priors(ckpt.parent_path() / "priors.smilp");
      eval::EvalOptions eo;
      eo.pattern = eval::parse_pattern(pattern);
      eo.stochastic_samples = stochastic;
      eo.seed = cfg.train.seed;
      const auto m = eval::evaluate(model, pri ? &*pri : nullptr, val, eo);
      print_metrics(std::cout, pattern, m);
      if (!metrics_out.empty()) {
        std::ofstream f(metrics_out);
        if (!f) throw Error("cannot-write", metrics_out);
        print_metrics(f, pattern, m);
      }
    } else if (rep->parsed()) {
      std::vector<exp::RunReport> reports;
      for (const auto& r : runs) {
        const fs::path p = fs::is_directory(r) ? fs::path(r) / "report.txt" : fs::path(r);
        reports.push_back(exp::RunReport::load(p));
      }
      std::ofstream f(report_out);
      if (!f) throw Error("cannot-write", report_out);
      f << exp::aggregate_reports(std::move(reports));
      std::cout << "runs: " << runs.size() << "\nout: " << report_out << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error " << e.what() << '\n';
    return e.code() == "unknown-ablation-variant" || e.code() == "bad-arguments" ? kUsageExit : 1;
  } catch (const std::exception& e) {
    std::cerr << "error failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
