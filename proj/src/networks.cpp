#include "smil/networks.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "smil/binary_io.hpp"
#include "smil/error.hpp"

namespace smil::nn {

std::size_t ModelConfig::recon_dim() const {
  return prior_space == priors::Space::embedding ? kFeatureDim : numel(modality2_shape);
}

// ---- parameters ------------------------------------------------------------

namespace {

void add_dense(ParamRefs& out, const std::string& name, Dense& d) {
  out.emplace_back(name + ".w", &d.w);
  out.emplace_back(name + ".b", &d.b);
}

void add_encoder(ParamRefs& out, const std::string& name, Encoder& e) {
  if (e.conv1) {
    out.emplace_back(name + ".conv1.w", &e.conv1->w);
    out.emplace_back(name + ".conv1.b", &e.conv1->b);
  }
  if (e.conv2) {
    out.emplace_back(name + ".conv2.w", &e.conv2->w);
    out.emplace_back(name + ".conv2.b", &e.conv2->b);
  }
  for (std::size_t i = 0; i < e.dense.size(); ++i) add_dense(out, name + ".dense" + std::to_string(i), e.dense[i]);
}

Tensor xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(v), true);
}

Conv init_conv(std::size_t in, std::size_t out, std::size_t k, Rng& rng) {
  return {xavier({out, in, k, k}, in * k * k, out * k * k, rng), Tensor::zeros({out}, true)};
}

Tensor dense(const Dense& d, const Tensor& x) { return add_bias(matmul(x, d.w), d.b); }

template <typename T>
T deep_copy(const T& net) {
  T copy = net;
  for (auto& [name, t] : params(copy)) *t = t->clone();
  return copy;
}

}  // namespace

ParamRefs params(MainNet& net) {
  ParamRefs out;
  add_encoder(out, "theta.image", net.image);
  add_encoder(out, "theta.audio", net.audio);
  add_dense(out, "theta.fuse", net.fuse);
  add_dense(out, "theta.out", net.out);
  return out;
}

ParamRefs params(ReconNet& net) {
  ParamRefs out;
  add_dense(out, "phi_c.hidden", net.hidden);
  add_dense(out, "phi_c.out", net.out);
  return out;
}

ParamRefs params(RegNet& net) {
  ParamRefs out;
  add_dense(out, "phi_r.hidden", net.hidden);
  add_dense(out, "phi_r.out", net.out);
  return out;
}

ParamRefs params(Model& model) {
  auto out = params(model.theta);
  for (auto& p : params(model.phi_c)) out.push_back(p);
  for (auto& p : params(model.phi_r)) out.push_back(p);
  return out;
}

MainNet clone(const MainNet& net) { return deep_copy(net); }

Model clone(const Model& model) {
  Model copy = model;
  copy.theta = deep_copy(model.theta);
  copy.phi_c = deep_copy(model.phi_c);
  copy.phi_r = deep_copy(model.phi_r);
  return copy;
}

Dense init_dense(std::size_t in, std::size_t out, Rng& rng) {
  return {xavier({in, out}, in, out, rng), Tensor::zeros({out}, true)};
}

Encoder init_encoder(const Shape& shape, Rng& rng) {
  Encoder e;
  e.input_shape = shape;
  if (shape == Shape{28, 28}) {
    // 32x32 -> 28x28x6 -> 14x14x6 -> 10x10x16 -> 5x5x16
    e.kind = EncoderKind::image;
    e.conv1 = init_conv(1, 6, 5, rng);
    e.conv2 = init_conv(6, 16, 5, rng);
    e.dense.push_back(init_dense(400, 120, rng));
    e.dense.push_back(init_dense(120, kFeatureDim, rng));
  } else if (shape == Shape{20, 20}) {
    // 20x20 -> 16x16x6 -> 8x8x6 -> 4x4x16
    e.kind = EncoderKind::audio;
    e.conv1 = init_conv(1, 6, 5, rng);
    e.conv2 = init_conv(6, 16, 5, rng);
    e.dense.push_back(init_dense(256, kFeatureDim, rng));
  } else if (shape.size() == 1 && shape[0] >= 1) {
    e.kind = EncoderKind::vector;
    e.dense.push_back(init_dense(shape[0], kFeatureDim, rng));
  } else {
    throw ShapeError("encoder: unsupported input shape " + shape_str(shape));
  }
  return e;
}

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes < 2) throw std::invalid_argument("model: need at least 2 classes");
  if (cfg.num_priors < 1) throw std::invalid_argument("model: need at least 1 prior");
  Rng rng(seed);
  Model m;
  m.config = cfg;
  m.theta.image = init_encoder(cfg.modality1_shape, rng);
  m.theta.audio = init_encoder(cfg.modality2_shape, rng);
  m.theta.fuse = init_dense(2 * kFeatureDim, kFeatureDim, rng);
  m.theta.out = init_dense(kFeatureDim, cfg.num_classes, rng);

  std::size_t recon_out = cfg.num_priors;
  if (cfg.recon == ReconMode::direct) recon_out = cfg.recon_dim();
  else if (cfg.omega_mean == OmegaMean::learned) recon_out = 2 * cfg.num_priors;
  m.phi_c.hidden = init_dense(kFeatureDim, kFeatureDim, rng);
  m.phi_c.out = init_dense(kFeatureDim, recon_out, rng);

  m.phi_r.hidden = init_dense(2 * kFeatureDim, kFeatureDim, rng);
  m.phi_r.out = init_dense(kFeatureDim, 2 * kFeatureDim, rng);
  auto bias = m.phi_r.out.b.mutable_values();
  const double identity = std::log(std::exp(1.0) - 1.0);
  for (std::size_t i = 0; i < kFeatureDim; ++i) bias[i] = identity;
  return m;
}

std::size_t parameter_count(const MainNet& net) {
  MainNet copy = net;
  std::size_t n = 0;
  for (auto& [name, t] : params(copy)) n += t->size();
  return n;
}

// ---- batches ---------------------------------------------------------------

Batch make_batch(const data::MaskedDataset& data, std::span<const std::size_t> indices, bool with_modality2) {
  if (indices.empty()) throw Error("empty-batch", "no samples selected");
  const auto& d = data.data;
  const std::size_t n = indices.size(), d1 = numel(d.modality1_shape), d2 = numel(d.modality2_shape);
  std::vector<double> x1, x2;
  x1.reserve(n * d1);
  if (with_modality2) x2.reserve(n * d2);
  Batch b;
  for (auto i : indices) {
    if (i >= d.samples.size()) throw std::out_of_range("batch: sample index " + std::to_string(i));
    const auto& s = d.samples[i];
    if (s.modality1.size() != d1) throw ShapeError("batch: modality 1 of sample " + std::to_string(i) + " has wrong size");
    x1.insert(x1.end(), s.modality1.begin(), s.modality1.end());
    if (with_modality2) {
      if (!s.modality2) throw Error("missing-modality", "sample " + std::to_string(i) + " has no modality 2");
      x2.insert(x2.end(), s.modality2->begin(), s.modality2->end());
    }
    b.labels.push_back(s.label);
    if (d.multi_label) {
      if (s.label_bits.size() != d.num_classes) throw ShapeError("batch: label bits do not match class count");
      for (auto bit : s.label_bits) b.targets.push_back(bit ? 1.0 : 0.0);
    }
    b.indices.push_back(i);
  }
  b.x1 = Tensor({n, d1}, std::move(x1));
  if (with_modality2) b.x2 = Tensor({n, d2}, std::move(x2));
  return b;
}

// ---- forward pieces ----------------------------------------------------------

namespace {

Tensor pad_to_32(const Tensor& x) {
  if (x.requires_grad()) throw std::logic_error("encode: image padding is not differentiable");
  const std::size_t n = x.dim(0);
  std::vector<double> out(n * 32 * 32, 0.0);
  const auto v = x.values();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < 28; ++r)
      for (std::size_t c = 0; c < 28; ++c) out[s * 1024 + (r + 2) * 32 + (c + 2)] = v[s * 784 + r * 28 + c];
  return Tensor({n, 1, 32, 32}, std::move(out));
}

Tensor conv_block(const Conv& conv, const Tensor& x, bool pool) {
  Tensor y = relu(conv2d(x, conv.w, conv.b));
  return pool ? max_pool2x2(y) : y;
}

}  // namespace

Tensor encode(const Encoder& e, const Tensor& x) {
  const std::size_t want = numel(e.input_shape);
  if (x.rank() != 2 || x.dim(1) != want) {
    throw ShapeError("encode: expected N x " + std::to_string(want) + " input, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  Tensor h;
  switch (e.kind) {
    case EncoderKind::image:
      h = conv_block(*e.conv1, pad_to_32(x), true);
      h = conv_block(*e.conv2, h, true);
      h = reshape(h, {n, 400});
      break;
    case EncoderKind::audio:
      h = conv_block(*e.conv1, reshape(x, {n, 1, 20, 20}), true);
      h = conv_block(*e.conv2, h, false);
      h = reshape(h, {n, 256});
      break;
    case EncoderKind::vector:
      h = x;
      break;
  }
  for (const auto& d : e.dense) h = relu(dense(d, h));
  return h;
}

GaussianSpec predict_omega_spec(const ReconNet& net, const Tensor& feature1, const ModelConfig& cfg) {
  const std::size_t k = cfg.num_priors;
  Tensor raw = dense(net.out, relu(dense(net.hidden, feature1)));
  const std::size_t n = feature1.dim(0);
  if (cfg.omega_mean == OmegaMean::learned) {
    return {add_scalar(slice_cols(raw, 0, k), 1.0), add_scalar(softplus(slice_cols(raw, k, 2 * k)), kStdFloor)};
  }
  if (raw.dim(1) != k) throw ShapeError("phi_c: output width " + std::to_string(raw.dim(1)) + " vs K=" + std::to_string(k));
  return {Tensor::full({n, k}, 1.0), add_scalar(softplus(raw), kStdFloor)};
}

Tensor reconstruct(const Tensor& omega, const priors::ModalityPriors& priors) {
  if (omega.rank() != 2 || omega.dim(1) != priors.count()) {
    throw ShapeError("reconstruct: omega " + shape_str(omega.shape()) + " vs " + std::to_string(priors.count()) +
                     " priors");
  }
  return matmul(omega, priors.vectors);
}

GaussianSpec predict_reg_spec(const RegNet& net, const Tensor& fused) {
  Tensor raw = dense(net.out, relu(dense(net.hidden, fused)));
  return {slice_cols(raw, 0, kFeatureDim), add_scalar(softplus(slice_cols(raw, kFeatureDim, 2 * kFeatureDim)), kStdFloor)};
}

Tensor regularize(const Tensor& h, const Tensor& r, RegOp op) {
  return op == RegOp::mul ? mul(h, softplus(r)) : add(h, softplus(r));
}

ForwardResult forward_classify(const Model& model, const Batch& batch, const priors::ModalityPriors* priors,
                               NoiseSource& noise, const ForwardOptions& opt) {
  const auto& cfg = model.config;
  const std::size_t n = batch.x1.dim(0);
  ForwardResult res;
  Tensor f1 = encode(model.theta.image, batch.x1);
  Tensor f2;
  const bool has2 = batch.x2.has_value() && !opt.ignore_modality2 && cfg.modality2_input;
  if (has2) {
    f2 = encode(model.theta.audio, *batch.x2);
  } else if (opt.missing == MissingPolicy::zero_feature || cfg.recon == ReconMode::none) {
    f2 = Tensor::zeros({n, kFeatureDim});
  } else {
    Tensor xhat;
    if (cfg.recon == ReconMode::priors) {
      if (!priors) throw Error("missing-priors", "modality 2 is absent and no priors were supplied");
      if (priors->count() != cfg.num_priors || priors->dim() != cfg.recon_dim()) {
        throw ShapeError("forward: priors are " + shape_str(priors->vectors.shape()) + ", model expects " +
                         std::to_string(cfg.num_priors) + " x " + std::to_string(cfg.recon_dim()));
      }
      auto spec = predict_omega_spec(model.phi_c, f1, cfg);
      auto omega = sample_reparam(spec, noise);
      xhat = reconstruct(omega.value, *priors);
      res.omega = std::move(spec);
    } else {
      xhat = dense(model.phi_c.out, relu(dense(model.phi_c.hidden, f1)));
    }
    res.reconstruction = xhat;
    f2 = cfg.prior_space == priors::Space::embedding ? xhat : encode(model.theta.audio, xhat);
  }

  Tensor fused = concat(f1, f2);
  Tensor h = relu(dense(model.theta.fuse, fused));
  switch (cfg.reg) {
    case RegMode::learned: {
      auto spec = predict_reg_spec(model.phi_r, fused);
      h = regularize(h, sample_reparam(spec, noise).value, cfg.reg_op);
      res.r = std::move(spec);
      break;
    }
    case RegMode::fixed_gaussian: {
      GaussianSpec spec{Tensor::zeros({n, kFeatureDim}), Tensor::full({n, kFeatureDim}, 1.0)};
      h = regularize(h, sample_reparam(spec, noise).value, cfg.reg_op);
      break;
    }
    case RegMode::off:
      break;
  }
  res.logits = dense(model.theta.out, h);
  res.feature1 = f1;
  return res;
}

Tensor classification_loss(const Tensor& logits, const Batch& batch, bool multi_label, double pos_weight) {
  if (multi_label) return sigmoid_cross_entropy(logits, batch.targets, pos_weight);
  return softmax_cross_entropy(logits, batch.labels);
}

// ---- checkpoints -------------------------------------------------------------

std::uint64_t architecture_hash(std::span<const NamedBlock> blocks) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (const auto& b : blocks) {
    for (unsigned char c : b.name) mix(c);
    mix(0);
    for (auto d : b.value.shape())
      for (int i = 0; i < 8; ++i) mix((d >> (8 * i)) & 0xFF);
    mix(0xFF);
  }
  return h;
}

std::vector<NamedBlock> model_blocks(const Model& model) {
  Model copy = model;
  std::vector<NamedBlock> out;
  for (auto& [name, t] : params(copy)) out.push_back({name, t->detach()});
  return out;
}

void load_model_blocks(Model& model, std::span<const NamedBlock> blocks) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b.value;
  for (auto& [name, t] : params(model)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint-mismatch", "missing parameter block " + name);
    if (it->second->shape() != t->shape()) {
      throw Error("checkpoint-mismatch", name + " has shape " + shape_str(it->second->shape()) + ", model expects " +
                                             shape_str(t->shape()));
    }
    auto dst = t->mutable_values();
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedBlock> blocks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write("SMILW", 5);
  io::write_le<std::uint64_t>(out, architecture_hash(blocks));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.value.rank()));
    for (auto d : b.value.shape()) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : b.value.values()) io::write_le<double>(out, v);
  }
}

std::vector<NamedBlock> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  io::expect_magic(in, "SMILW");
  const auto hash = io::read_le<std::uint64_t>(in, "architecture hash");
  const auto count = io::read_le<std::uint32_t>(in, "block count");
  std::vector<NamedBlock> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = io::read_le<std::uint32_t>(in, "name length");
    if (len > 4096) throw io::FormatError("checkpoint: implausible name length", io::tell(in) - 4);
    std::string name(len, '\0');
    io::read_bytes(in, name.data(), len, "block name");
    const auto rank = io::read_le<std::uint32_t>(in, "block rank");
    if (rank > 8) throw io::FormatError("checkpoint: implausible rank", io::tell(in) - 4);
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint32_t>(in, "block dimension");
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = io::read_le<double>(in, "block values");
    blocks.push_back({std::move(name), Tensor(std::move(shape), std::move(v))});
  }
  if (architecture_hash(blocks) != hash) throw io::FormatError("checkpoint: architecture hash mismatch", 5);
  return blocks;
}

}  // namespace smil::nn
