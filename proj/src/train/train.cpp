// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/train/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "vgjepa/autodiff/checkpoint.hpp"
#include "vgjepa/autodiff/optim.hpp"
#include "vgjepa/common/binary_io.hpp"
#include "vgjepa/dataset/batch.hpp"

namespace vgjepa::train {

using ad::Binder;
using ad::ParamSet;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using model::HeadKind;
using nlohmann::json;

std::vector<std::string> TrainMode::encoder_losses() const {
  std::vector<std::string> out;
  if (contrastive) out.push_back("contrastive");
  if (regressive) out.push_back("regressive");
  if (vf) out.push_back("vf");
  if (vcreg) out.push_back("vcreg");
  if (ema) out.push_back("ema");
  return out;
}

const std::vector<TrainMode>& mode_registry() {
  static const std::vector<TrainMode> modes = [] {
    const HeadKind E = HeadKind::kEuclidean, Q = HeadKind::kIQE;
    std::vector<TrainMode> m;
    //               name             sep    head  vf     vcreg  contr  regr   ema    dual
    m.push_back({"Contrastive", true, E, false, false, true, false, false, false});
    m.push_back({"Regressive", true, E, false, true, false, true, false, false});
    m.push_back({"pred_VCReg", false, E, false, true, false, false, false, false});
    m.push_back({"pred_EMA", false, E, false, false, false, false, true, false});
    m.push_back({"VF", true, E, true, false, false, false, false, false});
    m.push_back({"VF_pred", false, E, true, false, false, false, false, false});
    m.push_back({"VF_quasi", true, Q, true, false, false, false, false, false});
    m.push_back({"VF_quasi_pred", false, Q, true, false, false, false, false, false});
    m.push_back({"VF_VCReg", true, E, true, true, false, false, false, false});
    m.push_back({"VF_VCReg_pred", false, E, true, true, false, false, false, false});
    m.push_back({"Dual", false, E, true, true, false, false, false, true});
    return m;
  }();
  return modes;
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

const TrainMode& find_mode(const std::string& name) {
  for (const auto& m : mode_registry())
    if (lower(m.name) == lower(name)) return m;
  std::string known;
  for (const auto& m : mode_registry()) known += (known.empty() ? "" : ", ") + m.name;
  throw ConfigError("unknown training mode '" + name + "' (known: " + known + ")");
}

json TrainConfig::to_json() const {
  return json{{"mode", mode},
              {"seed", seed},
              {"steps", steps},
              {"batch_segments", batch_segments},
              {"predictor_batch_segments", predictor_batch_segments},
              {"segment_length", segment_length},
              {"base_lr", base_lr},
              {"warmup_fraction", warmup_fraction},
              {"ema_rho", ema_rho},
              {"contrastive_negatives", contrastive_negatives},
              {"dual_hidden", dual_hidden},
              {"losses", losses},
              {"model", model}};
}

TrainConfig TrainConfig::from_json(const json& j, data::Regime regime) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  static const std::set<std::string> keys = {
      "mode", "seed", "steps", "batch_segments", "predictor_batch_segments",
      "segment_length", "base_lr", "warmup_fraction", "ema_rho",
      "contrastive_negatives", "dual_hidden", "losses", "model"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("unknown training config key '" + k + "'");

  TrainConfig d;
  const TrainMode& mode = find_mode(j.value("mode", d.mode));
  d.mode = mode.name;
  d.model = regime == data::Regime::kMaze ? model::ModelConfig::reference_maze()
                                          : model::ModelConfig::reference_wall();
  d.model.head.kind = mode.head;
  d.losses = losses::LossConfig::for_head(mode.head);
  d.losses.vcreg_axes = regime == data::Regime::kMaze ? losses::VcregAxes::kBatchTime
                                                      : losses::VcregAxes::kBatch;
  json eff = d.to_json();
  eff.merge_patch(j);
  eff["mode"] = mode.name;

  TrainConfig c;
  try {
    c.mode = eff.at("mode").get<std::string>();
    c.seed = eff.at("seed").get<std::uint64_t>();
    c.steps = eff.at("steps").get<std::size_t>();
    c.batch_segments = eff.at("batch_segments").get<std::size_t>();
    c.predictor_batch_segments = eff.at("predictor_batch_segments").get<std::size_t>();
    c.segment_length = eff.at("segment_length").get<std::size_t>();
    c.base_lr = eff.at("base_lr").get<double>();
    c.warmup_fraction = eff.at("warmup_fraction").get<double>();
    c.ema_rho = eff.at("ema_rho").get<double>();
    c.contrastive_negatives = eff.at("contrastive_negatives").get<std::size_t>();
    c.dual_hidden = eff.at("dual_hidden").get<std::size_t>();
    c.losses = d.losses;
    losses::from_json(eff.at("losses"), c.losses);
    c.model = eff.at("model").get<model::ModelConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  const TrainMode& m = find_mode(mode);
  if (steps == 0) throw ConfigError("steps must be positive");
  if (batch_segments < 2 || predictor_batch_segments < 2)
    throw ConfigError("batches need at least 2 segments");
  if (segment_length < 2) throw ConfigError("segment_length must be at least 2");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ConfigError("warmup_fraction must lie in [0, 1)");
  if (!(ema_rho > 0.0 && ema_rho < 1.0)) throw ConfigError("ema_rho must lie in (0, 1)");
  if (model.head.kind != m.head)
    throw ConfigError("mode " + m.name + " requires the " + model::to_string(m.head) +
                      " head, config has " + model::to_string(model.head.kind));
  if (!model.with_predictor) throw ConfigError("training needs a model with a predictor");
  model.validate();
  losses.validate();
}

std::string config_hash(const json& j) {
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string dataset_id(const data::TrajectoryDataset& ds) {
  return config_hash(ds.manifest());
}

json RunRecord::to_json() const {
  json hist = json::array();
  for (const auto& e : history) {
    hist.push_back({{"phase", e.phase}, {"step", e.step}, {"lr", e.lr},
                    {"total", e.total}, {"parts", e.parts}});
  }
  return json{{"mode", mode},
              {"dataset_id", dataset_id},
              {"seed", seed},
              {"data_seed", data_seed},
              {"config_hash", config_hash},
              {"config", config},
              {"dataset_config", dataset_config},
              {"history", hist},
              {"checkpoints", checkpoints}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  try {
    r.mode = j.at("mode").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.data_seed = j.at("data_seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.config = j.at("config");
    r.dataset_config = j.value("dataset_config", json());
    for (const auto& e : j.at("history")) {
      r.history.push_back({e.at("phase").get<int>(), e.at("step").get<std::size_t>(),
                           e.at("lr").get<double>(), e.at("total").get<double>(),
                           e.at("parts").get<std::map<std::string, double>>()});
    }
    r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad run record: ") + e.what());
  }
  return r;
}

std::string RunRecord::loss_csv() const {
  std::set<std::string> names;
  for (const auto& e : history)
    for (const auto& [k, v] : e.parts) names.insert(k);
  std::ostringstream os;
  os.precision(9);
  os << "phase,step,lr,total";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& e : history) {
    os << e.phase << ',' << e.step << ',' << e.lr << ',' << e.total;
    for (const auto& n : names) {
      os << ',';
      auto it = e.parts.find(n);
      if (it != e.parts.end()) os << it->second;
    }
    os << '\n';
  }
  return os.str();
}

std::string encoder_bytes(const ParamSet<float>& params) {
  ParamSet<float> enc;
  for (std::size_t i : params.select(model::kEncoderPrefix))
    enc.add(params[i].name, params[i].value);
  return ad::checkpoint_bytes(enc, json::object());
}

Tensor<float> encode_dataset(const model::WorldModel& m, const data::TrajectoryDataset& ds) {
  const std::size_t n = ds.size(), len = ds.length(), d = m.config().latent_dim();
  Tensor<float> out(Shape{n * len, d});
  constexpr std::size_t kChunk = 256;
  std::vector<data::StateRef> states;
  std::size_t row = 0;
  auto flush = [&] {
    if (states.empty()) return;
    Tensor<float> z = m.encode(data::gather_images(ds, states), data::gather_proprio(ds, states));
    std::copy(z.ptr(), z.ptr() + z.size(), out.ptr() + row * d);
    row += states.size();
    states.clear();
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < len; ++t) {
      states.push_back({i, t});
      if (states.size() == kChunk) flush();
    }
  flush();
  return out;
}

namespace {

// Rows of a cached latent table, copied before they enter the tape.
Tensor<float> take_rows(const Tensor<float>& table, const std::vector<std::size_t>& rows) {
  const std::size_t d = table.dim(1);
  Tensor<float> out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(table.ptr() + rows[i] * d, d, out.ptr() + i * d);
  return out;
}

}  // namespace

namespace {

struct StepLoss {
  Var<float> total;
  std::map<std::string, Var<float>> parts;
  void add(const std::string& name, Var<float> v, double weight) {
    parts.emplace(name, v);
    Var<float> w = weight == 1.0 ? v : ad::scale(v, static_cast<float>(weight));
    total = total.tape ? ad::add(total, w) : w;
  }
};

bool finite(const ad::GradSet<float>& grads) {
  for (const auto& g : grads)
    for (float x : g.data())
      if (!std::isfinite(x)) return false;
  return true;
}

// Shared state of one training run.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const TrainMode& mode, const data::TrajectoryDataset& ds,
          const TrainOptions& opts)
      : cfg_(cfg), mode_(mode), ds_(ds), opts_(opts) {}

  void record(LossEntry e, const ParamSet<float>& params) {
    if (opts_.on_step) opts_.on_step(e, params);
    history.push_back(std::move(e));
  }

  // Optimizes `params` over `subset` with build() producing the step loss.
  template <class Build, class After>
  void run_phase(int phase, ParamSet<float>& params, const std::vector<std::size_t>& subset,
                 Build&& build, After&& after) {
    params.reset_optimizer_state();
    const auto sched = ad::LrSchedule{
        cfg_.base_lr, cfg_.steps,
        static_cast<std::uint64_t>(std::floor(cfg_.warmup_fraction * static_cast<double>(cfg_.steps)))};
    Rng rng = make_rng(derive_seed(cfg_.seed, 10 + static_cast<std::uint64_t>(phase)));
    for (std::size_t step = 0; step < cfg_.steps; ++step) {
      LossEntry entry;
      entry.phase = phase;
      entry.step = step;
      entry.lr = ad::cosine_rate(sched, step);
      auto abort = [&](const std::string& cause) {
        snapshot(params, entry);
        std::ostringstream os;
        os << "non-finite loss in " << mode_.name << " phase " << phase << " at step " << step
           << " (" << cause;
        for (const auto& [k, v] : entry.parts) os << ", " << k << ' ' << v;
        os << ")";
        if (!opts_.out_dir.empty()) os << "; snapshot in " << opts_.out_dir.string();
        throw NumericError(os.str());
      };
      ad::ForwardBackward<float> fb;
      try {
        fb = ad::forward_backward(params, [&](Tape<float>& t, Binder<float>& b) {
          StepLoss sl = build(t, b, rng);
          for (const auto& [k, v] : sl.parts) entry.parts[k] = v.value()[0];
          return sl.total;
        });
      } catch (const NumericError& e) {
        abort(e.what());
      }
      entry.total = fb.loss;
      if (!std::isfinite(fb.loss) || !finite(fb.grads)) abort("total " + std::to_string(fb.loss));
      ad::adam_step(params, fb.grads, entry.lr, {}, subset);
      after(params);
      record(std::move(entry), params);
    }
  }

  void snapshot(const ParamSet<float>& params, const LossEntry& e) const {
    if (opts_.out_dir.empty()) return;
    std::filesystem::create_directories(opts_.out_dir);
    json meta{{"phase", e.phase}, {"step", e.step}, {"parts", e.parts}, {"config", cfg_.to_json()}};
    ad::save_checkpoint(opts_.out_dir / "nan_snapshot.ckpt", params, meta);
    io::write_file(opts_.out_dir / "nan_snapshot.json", meta.dump(2) + "\n");
  }

  // Images and proprio of the segment states followed by the goal states.
  struct Inputs {
    data::Batch batch;
    Tensor<float> images, proprio, actions;
    std::size_t rows = 0;  // segment rows; goal rows follow
  };
  Inputs gather(std::size_t segments, Rng& rng, bool with_goals) const {
    Inputs in;
    in.batch = data::sample_batch(ds_, segments, rng, cfg_.segment_length);
    auto states = data::segment_states(in.batch);
    in.rows = states.size();
    if (with_goals)
      states.insert(states.end(), in.batch.goal_candidates.begin(), in.batch.goal_candidates.end());
    in.images = data::gather_images(ds_, states);
    in.proprio = data::gather_proprio(ds_, states);
    in.actions = data::segment_actions(ds_, in.batch);
    return in;
  }

  Var<float> encode(const model::ModelConfig& mc, Binder<float>& b, Tape<float>& t,
                    const Inputs& in) const {
    std::optional<Var<float>> pv;
    if (mc.encoder.proprio_dim > 0) pv = t.constant(in.proprio);
    return model::encode(mc, b, t.constant(in.images), pv);
  }

  std::vector<LossEntry> history;

 private:
  const TrainConfig& cfg_;
  const TrainMode& mode_;
  const data::TrajectoryDataset& ds_;
  const TrainOptions& opts_;
};

std::vector<std::size_t> iota_rows(std::size_t lo, std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = lo + i;
  return r;
}

// Adds the encoder-side losses of `mode` for latents z (segment rows) and zg.
void add_encoder_losses(StepLoss& sl, const TrainMode& mode, const TrainConfig& cfg,
                        const model::ModelConfig& mc, Binder<float>& b, Var<float> z,
                        std::optional<Var<float>> zg, const data::Batch& batch, Rng& rng) {
  const auto& lc = cfg.losses;
  const std::size_t B = batch.segments.size(), L = batch.length;
  if (mode.vf) {
    sl.add("vf", losses::vf_loss(mc, b, z, *zg, losses::make_vf_pairs(batch), lc), lc.vf_weight);
  }
  if (mode.vcreg) sl.add("vcreg", losses::vcreg_segments(z, B, L, lc), lc.vcreg_weight);
  if (mode.contrastive) {
    const auto pos = losses::successive_pairs(B, L);
    const std::size_t nneg = cfg.contrastive_negatives ? cfg.contrastive_negatives : pos.size();
    sl.add("contrastive", losses::contrastive_loss(z, pos, losses::random_pairs(B * L, nneg, rng), lc),
           1.0);
  }
  if (mode.regressive) {
    sl.add("regressive", losses::regressive_loss(z, losses::successive_pairs(B, L)), 1.0);
  }
}

void check_dataset(const model::ModelConfig& mc, const data::TrajectoryDataset& ds,
                   std::size_t segment_length) {
  const auto& fs = ds.frame_shape();
  const auto& e = mc.encoder;
  if (fs.channels != e.in_channels || fs.resolution != e.resolution || fs.proprio != e.proprio_dim) {
    throw ConfigError("model expects observations of " + std::to_string(e.in_channels) + "x" +
                      std::to_string(e.resolution) + "x" + std::to_string(e.resolution) +
                      " with proprio " + std::to_string(e.proprio_dim) + ", dataset has " +
                      std::to_string(fs.channels) + "x" + std::to_string(fs.resolution) + "x" +
                      std::to_string(fs.resolution) + " with proprio " +
                      std::to_string(fs.proprio));
  }
  if (ds.length() < segment_length)
    throw DataError("trajectories shorter than the segment length");
}

RunRecord make_record(const TrainConfig& cfg, const data::TrajectoryDataset& ds) {
  RunRecord r;
  r.mode = cfg.mode;
  r.dataset_id = dataset_id(ds);
  r.seed = cfg.seed;
  r.data_seed = ds.manifest().value("seed", std::uint64_t{0});
  r.dataset_config = ds.manifest().value("config", json());
  r.config = cfg.to_json();
  r.config_hash = config_hash(r.config);
  return r;
}

// Phase 2 of Sep modes: predictor on frozen, cached latents.
void train_predictor(Trainer& tr, const TrainConfig& cfg, const data::TrajectoryDataset& ds,
                     model::WorldModel& wm) {
  const Tensor<float> cache = encode_dataset(wm, ds);
  const std::size_t len = ds.length();
  const auto& mc = wm.config();
  const auto subset = wm.params().select(model::kPredictorPrefix);
  tr.run_phase(
      2, wm.params(), subset,
      [&](Tape<float>& t, Binder<float>& b, Rng& rng) {
        const data::Batch batch =
            data::sample_batch(ds, cfg.predictor_batch_segments, rng, cfg.segment_length);
        std::vector<std::size_t> rows;
        for (const auto& s : data::segment_states(batch)) rows.push_back(s.traj * len + s.t);
        Var<float> z = t.constant(take_rows(cache, rows));
        Var<float> acts = t.constant(data::segment_actions(ds, batch));
        StepLoss sl;
        sl.add("pred",
               losses::pred_loss(mc, b, z, acts, z, batch.segments.size(), batch.length), 1.0);
        return sl;
      },
      [](ParamSet<float>&) {});
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const data::TrajectoryDataset& ds,
                  const TrainOptions& opts) {
  cfg.validate();
  const TrainMode& mode = find_mode(cfg.mode);
  if (mode.dual) return train_dual(cfg, ds, opts);
  const auto& mc = cfg.model;
  check_dataset(mc, ds, cfg.segment_length);

  model::WorldModel wm = model::WorldModel::initialize(mc, derive_seed(cfg.seed, 1));
  RunRecord record = make_record(cfg, ds);
  Trainer tr(cfg, mode, ds, opts);
  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);
  const bool need_goals = mode.vf;

  if (mode.sep) {
    const auto subset = wm.params().select({model::kEncoderPrefix[0], model::kHeadPrefix[0]});
    tr.run_phase(
        1, wm.params(), subset,
        [&](Tape<float>& t, Binder<float>& b, Rng& rng) {
          auto in = tr.gather(cfg.batch_segments, rng, need_goals);
          Var<float> all = tr.encode(mc, b, t, in);
          Var<float> z = ad::gather_rows(all, iota_rows(0, in.rows));
          std::optional<Var<float>> zg;
          if (need_goals) zg = ad::gather_rows(all, iota_rows(in.rows, all.dim(0) - in.rows));
          StepLoss sl;
          add_encoder_losses(sl, mode, cfg, mc, b, z, zg, in.batch, rng);
          return sl;
        },
        [](ParamSet<float>&) {});
    const std::string phase1 = encoder_bytes(wm.params());
    if (!opts.out_dir.empty()) {
      io::write_file(opts.out_dir / "encoder_phase1.ckpt", phase1);
      record.checkpoints.push_back("encoder_phase1.ckpt");
    }
    train_predictor(tr, cfg, ds, wm);
    if (encoder_bytes(wm.params()) != phase1)
      throw NumericError("encoder changed during predictor phase");
  } else {
    std::optional<model::TargetParams> target;
    if (mode.ema) target = model::make_target(wm.params(), model::kEncoderPrefix);
    tr.run_phase(
        0, wm.params(), {},
        [&](Tape<float>& t, Binder<float>& b, Rng& rng) {
          auto in = tr.gather(cfg.batch_segments, rng, need_goals);
          Var<float> all = tr.encode(mc, b, t, in);
          const std::size_t B = in.batch.segments.size(), L = in.batch.length;
          Var<float> z = ad::gather_rows(all, iota_rows(0, in.rows));
          std::optional<Var<float>> zg;
          if (need_goals) zg = ad::gather_rows(all, iota_rows(in.rows, all.dim(0) - in.rows));
          StepLoss sl;
          Var<float> targets = z;
          if (target) {
            // Targets from the EMA copy of the encoder, outside the graph.
            const ParamSet<float> tp = model::apply_target(wm.params(), *target);
            Binder<float> tb(t, tp, false);
            targets = t.constant(tr.encode(mc, tb, t, in).value());
          }
          sl.add("pred", losses::pred_loss(mc, b, z, t.constant(in.actions), targets, B, L),
                 cfg.losses.pred_weight);
          add_encoder_losses(sl, mode, cfg, mc, b, z, zg, in.batch, rng);
          return sl;
        },
        [&](ParamSet<float>& p) {
          if (target) model::ema_update(*target, p, cfg.ema_rho);
        });
  }

  record.history = std::move(tr.history);
  if (!opts.out_dir.empty()) record.checkpoints.push_back("model.ckpt");
  TrainResult result{std::move(wm), std::move(record), std::nullopt};
  if (!opts.out_dir.empty()) write_run(result, opts.out_dir);
  return result;
}

TrainResult train_dual(const TrainConfig& cfg, const data::TrajectoryDataset& ds,
                       const TrainOptions& opts) {
  cfg.validate();
  check_dataset(cfg.model, ds, cfg.segment_length);
  TrainOptions inner = opts;
  inner.out_dir.clear();

  TrainConfig level1_cfg = cfg;
  level1_cfg.mode = "pred_VCReg";
  TrainResult level1 = train(level1_cfg, ds, inner);

  model::ModelConfig l2;
  l2.encoder.input = "latent";
  l2.encoder.in_channels = cfg.model.latent_dim();
  l2.encoder.widths = {};
  l2.encoder.residual_blocks = {};
  l2.encoder.hidden = cfg.dual_hidden;
  l2.encoder.latent_dim = cfg.model.latent_dim();
  l2.head.kind = HeadKind::kEuclidean;
  l2.with_predictor = false;
  model::WorldModel wm2 = model::WorldModel::initialize(l2, derive_seed(cfg.seed, 2));

  const Tensor<float> cache = encode_dataset(level1.model, ds);
  const std::size_t len = ds.length();
  const TrainMode& vf_mode = find_mode("VF");
  Trainer tr(cfg, vf_mode, ds, opts);
  tr.history = level1.record.history;
  tr.run_phase(
      3, wm2.params(), {},
      [&](Tape<float>& t, Binder<float>& b, Rng& rng) {
        const data::Batch batch = data::sample_batch(ds, cfg.batch_segments, rng, cfg.segment_length);
        std::vector<std::size_t> rows;
        for (const auto& s : data::segment_states(batch)) rows.push_back(s.traj * len + s.t);
        const std::size_t nseg = rows.size();
        for (const auto& g : batch.goal_candidates) rows.push_back(g.traj * len + g.t);
        Var<float> all = model::encode(l2, b, t.constant(take_rows(cache, rows)));
        Var<float> z = ad::gather_rows(all, iota_rows(0, nseg));
        Var<float> zg = ad::gather_rows(all, iota_rows(nseg, rows.size() - nseg));
        StepLoss sl;
        sl.add("vf", losses::vf_loss(l2, b, z, zg, losses::make_vf_pairs(batch), cfg.losses), 1.0);
        return sl;
      },
      [](ParamSet<float>&) {});

  RunRecord record = make_record(cfg, ds);
  record.history = std::move(tr.history);
  if (!opts.out_dir.empty()) record.checkpoints = {"model.ckpt", "level2.ckpt"};
  TrainResult result{std::move(level1.model), std::move(record), std::move(wm2)};
  if (!opts.out_dir.empty()) write_run(result, opts.out_dir);
  return result;
}

void write_run(const TrainResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json extra{{"mode", r.record.mode}, {"config_hash", r.record.config_hash},
             {"dataset_id", r.record.dataset_id}, {"dataset_config", r.record.dataset_config}};
  if (r.level2) {
    extra["dual_level2"] = "level2.ckpt";
    r.level2->save(dir / "level2.ckpt", json{{"mode", r.record.mode}, {"level", 2}});
  }
  r.model.save(dir / "model.ckpt", extra);
  io::write_file(dir / "run_record.json", r.record.to_json().dump(2) + "\n");
  io::write_file(dir / "losses.csv", r.record.loss_csv());
}

}  // namespace vgjepa::train
