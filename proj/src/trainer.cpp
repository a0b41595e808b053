#include "smil/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "smil/error.hpp"

namespace smil::train {

namespace {

struct Seeds {
  std::uint64_t init, batches, noise, priors;
};

Seeds derive_seeds(std::uint64_t seed) {
  Rng master(seed);
  Seeds s;
  s.init = master.next_u64();
  s.batches = master.next_u64();
  s.noise = master.next_u64();
  s.priors = master.next_u64();
  return s;
}

std::vector<std::size_t> pick(Rng& rng, const std::vector<std::size_t>& pool, std::size_t want) {
  const auto local = rng.sample(pool.size(), std::min(want, pool.size()));
  std::vector<std::size_t> out;
  out.reserve(local.size());
  for (auto i : local) out.push_back(pool[i]);
  return out;
}

nn::Model with_theta(const nn::Model& base, const nn::MainNet& theta) {
  nn::Model m = base;
  m.theta = theta;
  return m;
}

void copy_values(nn::MainNet& dst, const nn::MainNet& src) {
  auto d = nn::params(dst);
  auto s = nn::params(const_cast<nn::MainNet&>(src));
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto from = s[i].second->values();
    std::copy(from.begin(), from.end(), d[i].second->mutable_values().begin());
  }
}

void check_finite(nn::Model& m, std::size_t iter) {
  for (auto& [name, t] : nn::params(m)) {
    for (double v : t->values()) {
      if (!std::isfinite(v)) throw Error("non-finite-parameters", name + " after iteration " + std::to_string(iter));
    }
  }
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::smil: return "smil";
    case Method::lower: return "lower";
    case Method::upper: return "upper";
    case Method::ae: return "ae";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "smil") return Method::smil;
  if (s == "lower") return Method::lower;
  if (s == "upper") return Method::upper;
  if (s == "ae") return Method::ae;
  throw Error("unknown-method", s);
}

nn::ModelConfig model_config(const data::Dataset& data, const TrainConfig& cfg) {
  nn::ModelConfig m;
  m.modality1_shape = data.modality1_shape;
  m.modality2_shape = data.modality2_shape;
  m.num_classes = data.num_classes;
  m.multi_label = data.multi_label;
  m.num_priors = cfg.num_priors;
  m.prior_space = cfg.prior_space;
  m.reg_op = cfg.reg_op;
  m.omega_mean = cfg.omega_mean;
  if (cfg.method == Method::smil) {
    m.recon = cfg.recon;
    m.reg = cfg.reg;
  } else {
    m.recon = nn::ReconMode::none;
    m.reg = nn::RegMode::off;
    m.modality2_input = cfg.method != Method::lower;
  }
  return m;
}

// ---- meta-learner ------------------------------------------------------------

MetaLearner::MetaLearner(const data::MaskedDataset& train, const TrainConfig& cfg)
    : train_(train),
      config_(cfg),
      batch_rng_(derive_seeds(cfg.seed).batches),
      noise_(cfg.deterministic ? NoiseSource::deterministic() : NoiseSource::fresh(derive_seeds(cfg.seed).noise)),
      opt_theta_(cfg.outer_optimizer, cfg.outer_lr),
      opt_phi_c_(cfg.outer_optimizer, cfg.outer_lr),
      opt_phi_r_(cfg.outer_optimizer, cfg.outer_lr) {
  if (cfg.inner_lr < 0.0 || cfg.outer_lr < 0.0) throw std::invalid_argument("train: learning rates must be >= 0");
  if (cfg.iterations < 1) throw std::invalid_argument("train: need at least one iteration");
  if (cfg.mc_samples < 1) throw std::invalid_argument("train: need at least one Monte-Carlo sample");
  d_f_ = train.complete_indices();
  d_m_ = train.incomplete_indices();
  if (d_f_.empty()) throw Error("empty-complete-set", "no modality-complete training samples at eta=" + std::to_string(cfg.eta));
  state_.model = nn::init_model(model_config(train.data, cfg), derive_seeds(cfg.seed).init);
  if (state_.model.config.recon == nn::ReconMode::priors) rebuild_priors();
}

void MetaLearner::rebuild_priors() {
  priors::BuildOptions opt;
  opt.k = config_.num_priors;
  opt.method = config_.prior_method;
  opt.space = config_.prior_space;
  opt.max_iters = config_.kmeans_iters;
  opt.seed = derive_seeds(config_.seed).priors;
  priors::FeatureEncoder enc;
  if (opt.space == priors::Space::embedding) {
    const nn::Encoder* audio = &state_.model.theta.audio;
    enc = [audio](const Tensor& x) { return nn::encode(*audio, x.detach()).detach(); };
  }
  state_.priors = priors::build_priors(train_, opt, enc);
}

nn::MainNet MetaLearner::inner(const nn::Batch& batch_m, NoiseSource& noise, optim::Grads* phi_c_grads) {
  if (batch_m.size() == 0) throw Error("empty-batch", "inner loop needs at least one sample");
  if (batch_m.x2) throw std::logic_error("inner: D^m batch carries modality 2");
  auto& model = state_.model;
  const priors::ModalityPriors* pri = state_.priors ? &*state_.priors : nullptr;
  auto phi_c = nn::params(model.phi_c);
  auto phi_r = nn::params(model.phi_r);
  nn::MainNet theta_k = nn::clone(model.theta);
  const LossConfig loss_cfg{.mc_samples = 1, .kl_weight = config_.kl_weight, .include_kl = !config_.deterministic,
                            .pos_weight = config_.pos_weight};

  for (std::size_t k = 0; k < config_.inner_steps; ++k) {
    auto refs = nn::params(theta_k);
    optim::zero_grads(refs);
    optim::zero_grads(phi_c);
    optim::zero_grads(phi_r);
    nn::Model m = with_theta(model, theta_k);
    auto fwd = nn::forward_classify(m, batch_m, pri, noise);
    Tensor ce = nn::classification_loss(fwd.logits, batch_m, model.config.multi_label, loss_cfg.pos_weight);
    backward(ce);
    auto g = optim::collect_grads(refs);
    optim::clip_global_norm(g, config_.clip_norm);

    if (k == 0 && phi_c_grads) {
      // phi_c's share of the first inner loss, plus its KL to the omega prior
      // evaluated on the same (detached) image features.
      if (fwd.omega && loss_cfg.include_kl && loss_cfg.kl_weight != 0.0) {
        auto spec = nn::predict_omega_spec(model.phi_c, fwd.feature1.detach(), model.config);
        backward(scale(kl_to_isotropic(spec, kOmegaPriorMean), loss_cfg.kl_weight));
      }
      *phi_c_grads = optim::collect_grads(phi_c);
      optim::clip_global_norm(*phi_c_grads, config_.clip_norm);
    }
    optim::sgd_step(refs, g, config_.inner_lr);
  }
  optim::zero_grads(phi_c);
  optim::zero_grads(phi_r);
  for (auto& [name, t] : nn::params(theta_k)) t->zero_grad();
  return theta_k;
}

ObjectiveBreakdown MetaLearner::outer(const nn::MainNet& theta_star, const nn::Batch& batch_f, NoiseSource& noise,
                                      const optim::Grads* phi_c_grads) {
  if (!batch_f.x2) throw Error("missing-modality", "outer batch lacks modality 2");
  auto& model = state_.model;
  nn::MainNet ts = theta_star;
  auto theta_refs = nn::params(ts);
  auto phi_r = nn::params(model.phi_r);
  optim::zero_grads(theta_refs);
  optim::zero_grads(phi_r);

  nn::Model m = with_theta(model, ts);
  const LossConfig loss_cfg{.mc_samples = config_.mc_samples, .kl_weight = config_.kl_weight,
                            .include_kl = !config_.deterministic, .pos_weight = config_.pos_weight};
  const priors::ModalityPriors* pri = state_.priors ? &*state_.priors : nullptr;
  auto loss = smil_loss(m, batch_f, pri, noise, loss_cfg);
  backward(loss.total);

  auto g = optim::collect_grads(theta_refs);
  const bool update_r = model.config.reg == nn::RegMode::learned;
  if (update_r) {
    auto gr = optim::collect_grads(phi_r);
    g.insert(g.end(), gr.begin(), gr.end());
  }
  optim::clip_global_norm(g, config_.clip_norm);
  optim::zero_grads(theta_refs);
  optim::zero_grads(phi_r);

  // First-order: the gradient taken at theta* is applied to theta.
  if (config_.outer_anchor == OuterAnchor::adapted && !ts.fuse.w.same_storage(model.theta.fuse.w)) {
    copy_values(model.theta, ts);
  }
  auto model_theta = nn::params(model.theta);
  optim::Grads g_theta(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(model_theta.size()));
  opt_theta_.step(model_theta, g_theta);
  if (update_r) {
    optim::Grads g_r(g.begin() + static_cast<std::ptrdiff_t>(model_theta.size()), g.end());
    opt_phi_r_.step(phi_r, g_r);
  }
  if (phi_c_grads) opt_phi_c_.step(nn::params(model.phi_c), *phi_c_grads);
  return loss.breakdown;
}

void MetaLearner::step(const Observer& observer) {
  const std::size_t iter = state_.iteration;
  if (config_.prior_space == priors::Space::embedding && state_.priors && iter > 0 && config_.prior_refresh > 0 &&
      iter % config_.prior_refresh == 0) {
    rebuild_priors();
  }
  const auto idx_m = pick(batch_rng_, d_m_, config_.batch_m);
  const auto idx_f = pick(batch_rng_, d_f_, config_.batch_f);
  for (auto i : idx_m) {
    if (train_.data.samples[i].has_modality2()) throw std::logic_error("phase: inner batch drew a complete sample");
  }
  for (auto i : idx_f) {
    if (!train_.data.samples[i].has_modality2()) throw std::logic_error("phase: outer batch drew an incomplete sample");
  }

  const bool run_inner = !idx_m.empty() && config_.inner_steps > 0;
  optim::Grads phi_c_grads;
  const bool replay = run_inner && state_.model.config.recon != nn::ReconMode::none;
  nn::MainNet theta_star = state_.model.theta;
  if (run_inner) {
    auto bm = nn::make_batch(train_, idx_m, false);
    theta_star = inner(bm, noise_, replay ? &phi_c_grads : nullptr);
  }
  if (observer) observer({iter, idx_m, idx_f, &state_.model.theta, &theta_star});

  auto bf = nn::make_batch(train_, idx_f, true);
  auto breakdown = outer(theta_star, bf, noise_, replay ? &phi_c_grads : nullptr);
  state_.history.push_back({iter, breakdown});
  ++state_.iteration;
  check_finite(state_.model, iter);
}

TrainState train_smil(const data::MaskedDataset& train, const TrainConfig& config, const Observer& observer) {
  MetaLearner learner(train, config);
  for (std::size_t i = 0; i < config.iterations; ++i) learner.step(observer);
  return std::move(learner.state());
}

// ---- baselines -----------------------------------------------------------------

namespace {

void fit_fused(TrainState& state, const data::MaskedDataset& data, bool with_modality2, const TrainConfig& cfg) {
  std::vector<std::size_t> pool(data.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  const auto seeds = derive_seeds(cfg.seed);
  Rng rng(seeds.batches);
  optim::Optimizer opt(cfg.outer_optimizer, cfg.outer_lr);
  auto refs = nn::params(state.model.theta);
  auto det = NoiseSource::deterministic();
  const nn::ForwardOptions fwd_opt{.missing = nn::MissingPolicy::zero_feature};
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto idx = pick(rng, pool, cfg.batch_m);
    auto batch = nn::make_batch(data, idx, with_modality2);
    optim::zero_grads(refs);
    auto fwd = nn::forward_classify(state.model, batch, nullptr, det, fwd_opt);
    Tensor loss = nn::classification_loss(fwd.logits, batch, state.model.config.multi_label, cfg.pos_weight);
    backward(loss);
    auto g = optim::collect_grads(refs);
    optim::clip_global_norm(g, cfg.clip_norm);
    opt.step(refs, g);
    ObjectiveBreakdown b;
    b.nll = b.total = loss.item();
    state.history.push_back({it, b});
    state.iteration = it + 1;
    check_finite(state.model, it);
  }
  optim::zero_grads(refs);
}

}  // namespace

AeNet init_ae(const data::Dataset& data, std::uint64_t seed) {
  Rng rng(seed);
  AeNet net;
  net.encoder = nn::init_encoder(data.modality1_shape, rng);
  net.hidden = nn::init_dense(nn::kFeatureDim, 128, rng);
  net.out = nn::init_dense(128, numel(data.modality2_shape), rng);
  return net;
}

Tensor ae_forward(const AeNet& net, const Tensor& x1) {
  Tensor h = relu(add_bias(matmul(nn::encode(net.encoder, x1), net.hidden.w), net.hidden.b));
  return add_bias(matmul(h, net.out.w), net.out.b);
}

namespace {

nn::ParamRefs ae_params(AeNet& net) {
  nn::ParamRefs out;
  if (net.encoder.conv1) {
    out.emplace_back("ae.conv1.w", &net.encoder.conv1->w);
    out.emplace_back("ae.conv1.b", &net.encoder.conv1->b);
  }
  if (net.encoder.conv2) {
    out.emplace_back("ae.conv2.w", &net.encoder.conv2->w);
    out.emplace_back("ae.conv2.b", &net.encoder.conv2->b);
  }
  for (std::size_t i = 0; i < net.encoder.dense.size(); ++i) {
    out.emplace_back("ae.dense" + std::to_string(i) + ".w", &net.encoder.dense[i].w);
    out.emplace_back("ae.dense" + std::to_string(i) + ".b", &net.encoder.dense[i].b);
  }
  out.emplace_back("ae.hidden.w", &net.hidden.w);
  out.emplace_back("ae.hidden.b", &net.hidden.b);
  out.emplace_back("ae.out.w", &net.out.w);
  out.emplace_back("ae.out.b", &net.out.b);
  return out;
}

Tensor mse(const Tensor& pred, const Tensor& target) { return mean(square(sub(pred, target))); }

}  // namespace

double train_ae(AeNet& net, const data::MaskedDataset& train, const TrainConfig& cfg) {
  const auto d_f = train.complete_indices();
  if (d_f.empty()) throw Error("empty-complete-set", "the AE regressor needs modality-complete samples");
  Rng rng(derive_seeds(cfg.seed).batches ^ 0x5eedae);
  optim::Adam opt(cfg.ae_lr);
  auto refs = ae_params(net);
  for (std::size_t it = 0; it < cfg.ae_iterations; ++it) {
    auto batch = nn::make_batch(train, pick(rng, d_f, cfg.batch_m), true);
    optim::zero_grads(refs);
    Tensor loss = mse(ae_forward(net, batch.x1), *batch.x2);
    backward(loss);
    auto g = optim::collect_grads(refs);
    optim::clip_global_norm(g, cfg.clip_norm);
    opt.step(refs, g);
  }
  optim::zero_grads(refs);
  auto all = nn::make_batch(train, d_f, true);
  return mse(ae_forward(net, all.x1), *all.x2).item();
}

TrainState train_baseline(const data::MaskedDataset& train, const TrainConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("train: need at least one iteration");
  TrainState state;
  state.model = nn::init_model(model_config(train.data, cfg), derive_seeds(cfg.seed).init);
  switch (cfg.method) {
    case Method::lower:
      fit_fused(state, train, false, cfg);
      break;
    case Method::upper: {
      if (!train.incomplete_indices().empty() && !cfg.ignore_mask) {
        throw Error("upper-requires-complete-data",
                    "eta=" + std::to_string(cfg.eta) + " leaves samples without modality 2; set ignore_mask");
      }
      fit_fused(state, train.unmasked(), true, cfg);
      break;
    }
    case Method::ae: {
      AeNet ae = init_ae(train.data, derive_seeds(cfg.seed).priors);
      state.ae_imputation_mse = train_ae(ae, train, cfg);
      data::MaskedDataset completed = train;
      const auto d_m = train.incomplete_indices();
      for (std::size_t start = 0; start < d_m.size(); start += 256) {
        std::vector<std::size_t> chunk(d_m.begin() + start, d_m.begin() + std::min(d_m.size(), start + 256));
        auto batch = nn::make_batch(train, chunk, false);
        Tensor pred = ae_forward(ae, batch.x1);
        const std::size_t d2 = pred.dim(1);
        for (std::size_t r = 0; r < chunk.size(); ++r) {
          auto row = pred.values().subspan(r * d2, d2);
          completed.data.samples[chunk[r]].modality2 = std::vector<double>(row.begin(), row.end());
        }
      }
      fit_fused(state, completed, true, cfg);
      break;
    }
    case Method::smil:
      throw std::invalid_argument("train_baseline: smil is not a baseline");
  }
  return state;
}

}  // namespace smil::train
