// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/model/model.hpp"

#include <algorithm>

#include "vgjepa/autodiff/checkpoint.hpp"

namespace vgjepa::model {

using ad::Binder;
using ad::ParamSet;
using ad::Shape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

std::string to_string(HeadKind k) { return k == HeadKind::kIQE ? "iqe" : "euclidean"; }

HeadKind parse_head_kind(const std::string& s) {
  if (s == "euclidean") return HeadKind::kEuclidean;
  if (s == "iqe") return HeadKind::kIQE;
  throw ConfigError("unknown head kind '" + s + "' (expected euclidean or iqe)");
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"input", c.input},
           {"in_channels", c.in_channels}, {"resolution", c.resolution},
           {"widths", c.widths},           {"residual_blocks", c.residual_blocks},
           {"pool", c.pool},               {"hidden", c.hidden},
           {"latent_dim", c.latent_dim},   {"proprio_dim", c.proprio_dim},
           {"proprio_hidden", c.proprio_hidden}};
}
void from_json(const json& j, EncoderConfig& c) {
  EncoderConfig d;
  d.input = j.value("input", d.input);
  d.in_channels = j.value("in_channels", d.in_channels);
  d.resolution = j.value("resolution", d.resolution);
  d.widths = j.value("widths", d.widths);
  d.residual_blocks = j.value("residual_blocks", d.residual_blocks);
  d.pool = j.value("pool", d.pool);
  d.hidden = j.value("hidden", d.hidden);
  d.latent_dim = j.value("latent_dim", d.latent_dim);
  d.proprio_dim = j.value("proprio_dim", d.proprio_dim);
  d.proprio_hidden = j.value("proprio_hidden", d.proprio_hidden);
  c = d;
}
void to_json(json& j, const PredictorConfig& c) {
  j = json{{"action_dim", c.action_dim}, {"hidden", c.hidden}, {"residual", c.residual}};
}
void from_json(const json& j, PredictorConfig& c) {
  PredictorConfig d;
  d.action_dim = j.value("action_dim", d.action_dim);
  d.hidden = j.value("hidden", d.hidden);
  d.residual = j.value("residual", d.residual);
  c = d;
}
void to_json(json& j, const HeadConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"components", c.components},
           {"component_dim", c.component_dim},
           {"alpha_init", c.alpha_init}};
}
void from_json(const json& j, HeadConfig& c) {
  HeadConfig d;
  d.kind = parse_head_kind(j.value("kind", to_string(d.kind)));
  d.components = j.value("components", d.components);
  d.component_dim = j.value("component_dim", d.component_dim);
  d.alpha_init = j.value("alpha_init", d.alpha_init);
  c = d;
}
void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder", c.encoder},
           {"predictor", c.predictor},
           {"head", c.head},
           {"with_predictor", c.with_predictor}};
}
void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  if (j.contains("encoder")) d.encoder = j.at("encoder").get<EncoderConfig>();
  if (j.contains("predictor")) d.predictor = j.at("predictor").get<PredictorConfig>();
  if (j.contains("head")) d.head = j.at("head").get<HeadConfig>();
  d.with_predictor = j.value("with_predictor", d.with_predictor);
  d.validate();
  c = d;
}

namespace {

std::size_t final_spatial(const EncoderConfig& e) {
  std::size_t s = e.resolution;
  for (std::size_t i = 0; i < e.widths.size(); ++i) s = (s + 2 - 3) / 2 + 1;
  return s;
}

std::size_t pooled_features(const EncoderConfig& e) {
  if (e.input == "latent") return e.in_channels;
  const std::size_t c = e.widths.back();
  if (e.pool == "mean") return c;
  const std::size_t s = final_spatial(e);
  return c * s * s;
}

std::string stage(std::size_t i) { return "enc.s" + std::to_string(i); }

}  // namespace

void ModelConfig::validate() const {
  const auto& e = encoder;
  if (e.input != "image" && e.input != "latent")
    throw ConfigError("encoder input must be 'image' or 'latent'");
  if (e.input == "latent") {
    if (e.in_channels == 0) throw ConfigError("latent encoder needs a positive input size");
    if (!e.widths.empty() || e.proprio_dim > 0)
      throw ConfigError("latent encoder takes no conv stages or proprio");
  } else if (e.in_channels == 0 || e.resolution < 4) {
    throw ConfigError("encoder input too small");
  } else if (e.widths.empty()) {
    throw ConfigError("encoder needs at least one stage");
  }
  if (e.residual_blocks.size() != e.widths.size())
    throw ConfigError("encoder residual_blocks must match widths");
  if (e.pool != "mean" && e.pool != "flatten")
    throw ConfigError("encoder pool must be 'mean' or 'flatten'");
  if (e.latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (head.kind == HeadKind::kIQE && head.components * head.component_dim != e.latent_dim)
    throw ConfigError("IQE components * component_dim must equal latent_dim (" +
                      std::to_string(e.latent_dim) + ")");
  if (with_predictor && predictor.hidden.empty())
    throw ConfigError("predictor needs at least one hidden layer");
}

ModelConfig ModelConfig::reference_wall() { return ModelConfig{}; }

ModelConfig ModelConfig::reference_maze() {
  ModelConfig c;
  c.encoder.in_channels = 3;
  c.encoder.proprio_dim = 2;
  return c;
}

ModelConfig ModelConfig::desk_wall() {
  ModelConfig c;
  c.encoder.resolution = 32;
  c.encoder.widths = {16, 32, 64};
  c.encoder.residual_blocks = {0, 1, 1};
  c.encoder.pool = "flatten";
  c.encoder.hidden = 192;
  c.encoder.latent_dim = 64;
  c.predictor.hidden = {256, 256};
  c.head.components = 8;
  c.head.component_dim = 8;
  return c;
}

template <class T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamSet<T> p;
  Rng rng = make_rng(seed);
  const auto& e = cfg.encoder;
  auto add_conv = [&](const std::string& name, std::size_t in, std::size_t out,
                      double gain) {
    Tensor<T> w = ad::he_uniform<T>(Shape{out, in, 3, 3}, in * 9, rng);
    for (auto& x : w.data()) x = static_cast<T>(x * gain);
    p.add(name + ".w", std::move(w));
    p.add(name + ".b", Tensor<T>(Shape{out}));
  };
  auto add_linear = [&](const std::string& name, std::size_t in, std::size_t out,
                        bool relu_follows) {
    p.add(name + ".w", relu_follows ? ad::he_uniform<T>(Shape{out, in}, in, rng)
                                    : ad::fan_in_uniform<T>(Shape{out, in}, in, rng));
    p.add(name + ".b", Tensor<T>(Shape{out}));
  };

  std::size_t in = e.in_channels;
  for (std::size_t i = 0; i < e.widths.size(); ++i) {
    add_conv(stage(i) + ".conv", in, e.widths[i], 1.0);
    for (std::size_t r = 0; r < e.residual_blocks[i]; ++r) {
      const std::string rb = stage(i) + ".r" + std::to_string(r);
      add_conv(rb + ".c1", e.widths[i], e.widths[i], 1.0);
      // Small second conv: each block starts close to the identity.
      add_conv(rb + ".c2", e.widths[i], e.widths[i], 0.1);
    }
    in = e.widths[i];
  }
  std::size_t feat = pooled_features(e);
  if (e.proprio_dim > 0) {
    add_linear("enc.proprio", e.proprio_dim, e.proprio_hidden, true);
    feat += e.proprio_hidden;
  }
  if (e.hidden > 0) {
    add_linear("enc.hidden", feat, e.hidden, true);
    feat = e.hidden;
  }
  add_linear("enc.out", feat, e.latent_dim, false);

  if (cfg.with_predictor) {
    std::size_t pin = e.latent_dim + cfg.predictor.action_dim;
    for (std::size_t i = 0; i < cfg.predictor.hidden.size(); ++i) {
      add_linear("pred.l" + std::to_string(i), pin, cfg.predictor.hidden[i], true);
      pin = cfg.predictor.hidden[i];
    }
    add_linear("pred.out", pin, e.latent_dim, false);
    if (cfg.predictor.residual) {
      // Start the residual branch near zero.
      auto& w = p[p.index_of("pred.out.w")].value;
      for (auto& x : w.data()) x = static_cast<T>(x * 0.1);
    }
  }
  if (cfg.head.kind == HeadKind::kIQE) {
    p.add("head.alpha", Tensor<T>::scalar(static_cast<T>(cfg.head.alpha_init)));
  }
  return p;
}

template <class T>
Var<T> encode(const ModelConfig& cfg, Binder<T>& b, Var<T> images,
              std::optional<Var<T>> proprio) {
  const auto& e = cfg.encoder;
  if (e.input == "latent") {
    if (images.shape().size() != 2 || images.dim(1) != e.in_channels)
      throw DataError("latent encoder expects [N, " + std::to_string(e.in_channels) +
                      "], got " + ad::shape_str(images.shape()));
    Var<T> feat = images;
    if (e.hidden > 0) feat = ad::relu(ad::linear(feat, b("enc.hidden.w"), b("enc.hidden.b")));
    return ad::linear(feat, b("enc.out.w"), b("enc.out.b"));
  }
  if (images.shape().size() != 4 || images.dim(1) != e.in_channels ||
      images.dim(2) != e.resolution || images.dim(3) != e.resolution) {
    throw DataError("encoder expects images [N, " + std::to_string(e.in_channels) + ", " +
                    std::to_string(e.resolution) + ", " + std::to_string(e.resolution) +
                    "], got " + ad::shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0);
  Var<T> x = images;
  for (std::size_t i = 0; i < e.widths.size(); ++i) {
    const std::string s = stage(i);
    x = ad::relu(ad::conv2d(x, b(s + ".conv.w"), b(s + ".conv.b"), 2, 1));
    for (std::size_t r = 0; r < e.residual_blocks[i]; ++r) {
      const std::string rb = s + ".r" + std::to_string(r);
      Var<T> h = ad::relu(ad::conv2d(x, b(rb + ".c1.w"), b(rb + ".c1.b"), 1, 1));
      h = ad::conv2d(h, b(rb + ".c2.w"), b(rb + ".c2.b"), 1, 1);
      x = ad::relu(ad::add(x, h));
    }
  }
  Var<T> feat;
  if (e.pool == "mean") {
    const std::size_t c = x.dim(1), hw = x.dim(2) * x.dim(3);
    feat = ad::reshape(ad::row_mean(ad::reshape(x, Shape{n * c, hw})), Shape{n, c});
  } else {
    feat = ad::flatten(x);
  }
  if (e.proprio_dim > 0) {
    if (!proprio || proprio->shape() != Shape{n, e.proprio_dim})
      throw DataError("encoder expects proprio [N, " + std::to_string(e.proprio_dim) + "]");
    Var<T> pf = ad::relu(ad::linear(*proprio, b("enc.proprio.w"), b("enc.proprio.b")));
    feat = ad::concat_cols(feat, pf);
  }
  if (e.hidden > 0) feat = ad::relu(ad::linear(feat, b("enc.hidden.w"), b("enc.hidden.b")));
  return ad::linear(feat, b("enc.out.w"), b("enc.out.b"));
}

template <class T>
Var<T> predict(const ModelConfig& cfg, Binder<T>& b, Var<T> z, Var<T> a) {
  if (!cfg.with_predictor) throw ConfigError("model has no predictor");
  const std::size_t d = cfg.latent_dim();
  if (z.shape().size() != 2 || z.dim(1) != d)
    throw DataError("predictor expects latents [N, " + std::to_string(d) + "], got " +
                    ad::shape_str(z.shape()));
  if (a.shape() != Shape{z.dim(0), cfg.predictor.action_dim})
    throw DataError("predictor expects actions [N, " +
                    std::to_string(cfg.predictor.action_dim) + "], got " +
                    ad::shape_str(a.shape()));
  Var<T> h = ad::concat_cols(z, a);  // identity action encoder
  for (std::size_t i = 0; i < cfg.predictor.hidden.size(); ++i) {
    const std::string l = "pred.l" + std::to_string(i);
    h = ad::relu(ad::linear(h, b(l + ".w"), b(l + ".b")));
  }
  Var<T> out = ad::linear(h, b("pred.out.w"), b("pred.out.b"));
  return cfg.predictor.residual ? ad::add(z, out) : out;
}

template <class T>
Var<T> iqe_distance(Var<T> u, Var<T> v, Var<T> alpha, std::size_t components,
                    std::size_t component_dim) {
  const std::size_t n = u.dim(0);
  if (u.shape() != v.shape() || u.dim(1) != components * component_dim)
    throw DataError("iqe_distance: latent shape mismatch");
  Var<T> per = ad::interval_union(ad::reshape(u, Shape{n, components, component_dim}),
                                  ad::reshape(v, Shape{n, components, component_dim}));
  Var<T> w = ad::sigmoid(alpha);
  Var<T> one_minus_w = ad::add_scalar(ad::scale(w, T{-1}), T{1});
  return ad::add(ad::scale_by(ad::row_max(per), w), ad::scale_by(ad::row_mean(per), one_minus_w));
}

template <class T>
Var<T> distance(const ModelConfig& cfg, Binder<T>& b, Var<T> zs, Var<T> zg) {
  if (zs.shape() != zg.shape() || zs.shape().size() != 2 || zs.dim(1) != cfg.latent_dim())
    throw DataError("value head expects matching latents [N, " +
                    std::to_string(cfg.latent_dim()) + "]");
  if (cfg.head.kind == HeadKind::kEuclidean) return ad::row_norm(ad::sub(zs, zg));
  return iqe_distance(zs, zg, b("head.alpha"), cfg.head.components, cfg.head.component_dim);
}

#define VGJEPA_MODEL_INSTANTIATE(T)                                                  \
  template ParamSet<T> init_params<T>(const ModelConfig&, std::uint64_t);            \
  template Var<T> encode<T>(const ModelConfig&, Binder<T>&, Var<T>,                  \
                            std::optional<Var<T>>);                                  \
  template Var<T> predict<T>(const ModelConfig&, Binder<T>&, Var<T>, Var<T>);        \
  template Var<T> iqe_distance<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t); \
  template Var<T> distance<T>(const ModelConfig&, Binder<T>&, Var<T>, Var<T>);

VGJEPA_MODEL_INSTANTIATE(float)
VGJEPA_MODEL_INSTANTIATE(double)
#undef VGJEPA_MODEL_INSTANTIATE

TargetParams make_target(const ParamSet<float>& source,
                         const std::vector<std::string>& prefixes) {
  TargetParams t;
  t.indices = source.select(prefixes);
  for (std::size_t i : t.indices) t.values.push_back(source[i].value);
  return t;
}

void ema_update(TargetParams& target, const ParamSet<float>& source, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("EMA decay must lie in (0, 1)");
  if (target.indices.size() != target.values.size())
    throw DataError("target parameter table is inconsistent");
  for (std::size_t k = 0; k < target.indices.size(); ++k) {
    const auto& src = source[target.indices[k]].value;
    auto& dst = target.values[k];
    if (src.shape() != dst.shape()) throw DataError("EMA shape mismatch for " + source[target.indices[k]].name);
    const float r = static_cast<float>(rho), c = static_cast<float>(1.0 - rho);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = r * dst[i] + c * src[i];
  }
}

ParamSet<float> apply_target(const ParamSet<float>& source, const TargetParams& target) {
  ParamSet<float> out;
  for (const auto& e : source.entries()) out.add(e.name, e.value);
  for (std::size_t k = 0; k < target.indices.size(); ++k)
    out[target.indices[k]].value = target.values[k];
  return out;
}

WorldModel::WorldModel(ModelConfig cfg, ParamSet<float> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const ParamSet<float> expect = init_params<float>(cfg_, 0);
  if (expect.size() != params_.size())
    throw DataError("parameter set does not match model config");
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (expect[i].name != params_[i].name || expect[i].value.shape() != params_[i].value.shape())
      throw DataError("parameter '" + params_[i].name + "' does not match model config");
  }
}

WorldModel WorldModel::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  return WorldModel(cfg, init_params<float>(cfg, seed));
}

Tensor<float> WorldModel::encode(const Tensor<float>& images,
                                 const Tensor<float>& proprio) const {
  ad::Tape<float> tape;
  Binder<float> b(tape, params_, false);
  std::optional<Var<float>> pv;
  if (cfg_.encoder.proprio_dim > 0) pv = tape.constant(proprio);
  return model::encode(cfg_, b, tape.constant(images), pv).value();
}

Tensor<float> WorldModel::predict(const Tensor<float>& z, const Tensor<float>& a) const {
  ad::Tape<float> tape;
  Binder<float> b(tape, params_, false);
  return model::predict(cfg_, b, tape.constant(z), tape.constant(a)).value();
}

Tensor<float> WorldModel::distance(const Tensor<float>& zs, const Tensor<float>& zg) const {
  ad::Tape<float> tape;
  Binder<float> b(tape, params_, false);
  return model::distance(cfg_, b, tape.constant(zs), tape.constant(zg)).value();
}

void WorldModel::save(const std::filesystem::path& path, json extra) const {
  json meta;
  meta["model"] = cfg_;
  meta["extra"] = std::move(extra);
  ad::save_checkpoint(path, params_, meta);
}

WorldModel WorldModel::load(const std::filesystem::path& path, json* extra) {
  ad::Checkpoint ck = ad::load_checkpoint(path);
  if (!ck.meta.contains("model")) throw DataError("checkpoint has no model config");
  ModelConfig cfg;
  try {
    cfg = ck.meta.at("model").get<ModelConfig>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model config in checkpoint: ") + e.what());
  }
  if (extra) *extra = ck.meta.value("extra", json::object());
  return WorldModel(cfg, std::move(ck.params));
}

Tensor<float> encode_batched(const WorldModel& m, const Tensor<float>& images,
                             const Tensor<float>& proprio, std::size_t chunk) {
  const std::size_t n = images.dim(0);
  const std::size_t per = images.size() / std::max<std::size_t>(n, 1);
  const std::size_t pp = m.config().encoder.proprio_dim;
  const std::size_t d = m.config().latent_dim();
  Tensor<float> out(Shape{n, d});
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    const std::size_t nb = std::min(chunk, n - lo);
    Shape s = images.shape();
    s[0] = nb;
    Tensor<float> part(s);
    std::copy(images.ptr() + lo * per, images.ptr() + (lo + nb) * per, part.ptr());
    Tensor<float> pro;
    if (pp > 0) {
      pro = Tensor<float>(Shape{nb, pp});
      std::copy(proprio.ptr() + lo * pp, proprio.ptr() + (lo + nb) * pp, pro.ptr());
    }
    Tensor<float> z = m.encode(part, pro);
    std::copy(z.ptr(), z.ptr() + nb * d, out.ptr() + lo * d);
  }
  return out;
}

}  // namespace vgjepa::model
