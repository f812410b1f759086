#include "fineparser/trainer.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fineparser/error.h"
#include "fineparser/log.h"

namespace fineparser {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

double TrainConfig::learning_rate(ParamGroup group) const {
  switch (group) {
    case ParamGroup::sap: return lr_sap;
    case ParamGroup::tap: return lr_tap;
    case ParamGroup::sve: return lr_sve;
    case ParamGroup::finereg: return lr_finereg;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  for (double lr : {lr_sap, lr_tap, lr_sve, lr_finereg}) {
    if (!(lr > 0.0)) throw ConfigError("train: learning rates must be positive");
  }
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  focal.validate();
}

json TrainConfig::to_json() const {
  return {{"lr", {{"sap", lr_sap}, {"tap", lr_tap}, {"sve", lr_sve}, {"finereg", lr_finereg}}},
          {"weight_decay", weight_decay},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"focal", {{"alpha", focal.alpha}, {"gamma", focal.gamma}}},
          {"teacher_forcing", teacher_forcing}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    if (j.contains("lr")) {
      const auto& lr = j.at("lr");
      c.lr_sap = lr.value("sap", c.lr_sap);
      c.lr_tap = lr.value("tap", c.lr_tap);
      c.lr_sve = lr.value("sve", c.lr_sve);
      c.lr_finereg = lr.value("finereg", c.lr_finereg);
    }
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("focal")) {
      c.focal.alpha = j.at("focal").value("alpha", c.focal.alpha);
      c.focal.gamma = j.at("focal").value("gamma", c.focal.gamma);
    }
    c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
    c.dump_dir = j.value("dump_dir", c.dump_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(const TrainConfig& config, ParameterStore& store, OptimizerState& state)
    : config_(config), store_(store), state_(state) {
  const auto& params = store_.all();
  if (state_.m.empty()) {
    for (const auto& p : params) {
      state_.m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
      state_.v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    }
  }
  if (state_.m.size() != params.size() || state_.v.size() != params.size()) {
    throw CheckpointError("optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<std::size_t>(params[i].tensor.numel());
    if (state_.m[i].size() != n || state_.v[i].size() != n) {
      throw CheckpointError("optimizer state size mismatch for " + params[i].name);
    }
  }
}

void Adam::step() {
  ++state_.step;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  auto& params = store_.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const double lr = config_.learning_rate(p.group);
    auto w = p.tensor.values_mut();
    const auto g = p.tensor.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] + config_.weight_decay * w[k];
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training

LossBreakdown pair_loss(const FineParserModel& model, const VideoSample& query, const VideoSample& exemplar,
                        const TrainConfig& config) {
  const int T = model.config().num_frames;
  const TransitionSet gt_q(query.transitions, T), gt_z(exemplar.transitions, T);
  RepresentOptions qo, zo;
  qo.with_masks = true;
  zo.with_masks = false;
  if (config.teacher_forcing) {
    qo.segment_with = &gt_q;
    zo.segment_with = &gt_z;
  }
  const VideoRepresentation q = model.represent(query, qo);
  const VideoRepresentation z = model.represent(exemplar, zo);
  LossBreakdown l;
  const auto masks = q.pyramid.supervised();
  l.l_sap = focal_mask_loss(masks, query.masks, config.focal);
  l.l_tap = transition_bce_loss(q.transition_probs, query.transitions);
  l.l_reg = regression_loss(model.score_pair(q, z, exemplar.score).score, query.score);
  l.total = total_loss(l.l_sap, l.l_tap, l.l_reg);
  return l;
}

Trainer::Trainer(FineParserModel& model, TrainConfig config, TrainingProgress progress)
    : model_(model), config_(std::move(config)), progress_(std::move(progress)) {
  config_.validate();
  Adam check(config_, model_.parameters(), progress_.optimizer);
}

namespace {

std::vector<std::size_t> same_type_indices(const Dataset& ds, std::size_t i) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    if (j != i && ds[j].action_type == ds[i].action_type) out.push_back(j);
  }
  return out;
}

void dump_nonfinite(const TrainConfig& config, int epoch, std::size_t batch, const VideoSample& q,
                    const VideoSample& z, const LossBreakdown& l) {
  json rec = {{"epoch", epoch},
              {"batch", batch},
              {"query", q.id},
              {"exemplar", z.id},
              {"query_score", q.score},
              {"exemplar_score", z.score},
              {"L_SAP", l.l_sap.item()},
              {"L_TAP", l.l_tap.item()},
              {"L_Reg", l.l_reg.item()}};
  log::error("non-finite loss: " + rec.dump());
  if (!config.dump_dir.empty()) {
    fs::create_directories(config.dump_dir);
    std::ofstream(fs::path(config.dump_dir) / "nonfinite_batch.json") << rec.dump(2) << '\n';
  }
}

}  // namespace

EpochLog Trainer::train_epoch(const Dataset& train_set) {
  if (train_set.empty()) throw DataError("train: empty training set");
  std::vector<std::vector<std::size_t>> partners(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    partners[i] = same_type_indices(train_set, i);
    if (partners[i].empty()) {
      throw DataError("train: action type '" + train_set[i].action_type + "' needs at least 2 training samples");
    }
  }
  const int epoch = progress_.epoch + 1;
  Rng rng(derive_seed(config_.seed, "epoch", static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> exemplar(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& cand = partners[order[k]];
    exemplar[k] = cand[rng.below(cand.size())];
  }

  Adam adam(config_, model_.parameters(), progress_.optimizer);
  EpochLog entry;
  entry.epoch = epoch;
  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    model_.parameters().zero_grad();
    const double weight = 1.0 / static_cast<double>(end - start);
    for (std::size_t k = start; k < end; ++k) {
      const VideoSample& q = train_set[order[k]];
      const VideoSample& z = train_set[exemplar[k]];
      const LossBreakdown l = pair_loss(model_, q, z, config_);
      if (!std::isfinite(l.total.item())) {
        dump_nonfinite(config_, epoch, start / bs, q, z, l);
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " (query '" + q.id +
                            "', exemplar '" + z.id + "')");
      }
      scale(l.total, weight).backward();
      entry.l_sap += l.l_sap.item();
      entry.l_tap += l.l_tap.item();
      entry.l_reg += l.l_reg.item();
      entry.total += l.total.item();
    }
    adam.step();
  }
  const double n = static_cast<double>(order.size());
  entry.l_sap /= n;
  entry.l_tap /= n;
  entry.l_reg /= n;
  entry.total /= n;
  progress_.epoch = epoch;
  progress_.log.push_back(entry);
  return entry;
}

void Trainer::train(const Dataset& train_set, int until_epoch, const std::function<void(const EpochLog&)>& on_epoch) {
  while (progress_.epoch < until_epoch) {
    const EpochLog e = train_epoch(train_set);
    if (on_epoch) on_epoch(e);
  }
}

void write_training_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write training log " + path.string());
  os << "epoch,L_SAP,L_TAP,L_Reg,L\n" << std::setprecision(17);
  for (const auto& e : log) os << e.epoch << ',' << e.l_sap << ',' << e.l_tap << ',' << e.l_reg << ',' << e.total << '\n';
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_bytes(std::ostream& os, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_bytes(const unsigned char* b, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t payload_hash(std::span<const double> values, std::uint64_t h) {
  for (double d : values) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const fs::path& path, const FineParserModel& model, const TrainingProgress& progress,
                     const TrainConfig& train_config) {
  const auto& params = model.parameters().all();
  std::vector<std::span<const double>> blocks;
  json index = json::array();
  std::uint64_t offset = 0;
  auto add_block = [&](const std::string& name, const std::string& kind, const Shape& shape, std::span<const double> v) {
    index.push_back({{"name", name}, {"kind", kind}, {"shape", shape}, {"offset", offset}, {"count", v.size()}});
    offset += v.size();
    blocks.push_back(v);
  };
  const bool with_opt = !progress.optimizer.m.empty();
  for (std::size_t i = 0; i < params.size(); ++i) {
    add_block(params[i].name, "param", params[i].tensor.shape(), params[i].tensor.values());
    if (with_opt) {
      add_block(params[i].name, "adam_m", params[i].tensor.shape(), progress.optimizer.m[i]);
      add_block(params[i].name, "adam_v", params[i].tensor.shape(), progress.optimizer.v[i]);
    }
  }
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (auto b : blocks) h = payload_hash(b, h);
  json log = json::array();
  for (const auto& e : progress.log) log.push_back({e.epoch, e.l_sap, e.l_tap, e.l_reg, e.total});
  const json header = {{"format", "fineparser-checkpoint"},
                       {"model_config", model.config().to_json()},
                       {"config_hash", hex64(model.config().hash())},
                       {"train_config", train_config.to_json()},
                       {"epoch", progress.epoch},
                       {"optimizer_step", progress.optimizer.step},
                       {"log", log},
                       {"tensors", index},
                       {"payload_hash", hex64(h)}};
  const std::string text = header.dump();
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
    os.write("FPCK", 4);
    put_bytes(os, kCheckpointVersion, 4);
    put_bytes(os, text.size(), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (auto b : blocks) {
      for (double d : b) put_bytes(os, std::bit_cast<std::uint64_t>(d), 8);
    }
    if (!os) throw CheckpointError("write failed for checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path, const ModelConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  unsigned char pre[16];
  is.read(reinterpret_cast<char*>(pre), 16);
  if (!is || std::memcmp(pre, "FPCK", 4) != 0) throw CheckpointError(path.string() + ": not a checkpoint file");
  const auto version = get_bytes(pre + 4, 4);
  if (version != kCheckpointVersion) throw CheckpointError(path.string() + ": unsupported version " + std::to_string(version));
  const auto header_len = get_bytes(pre + 8, 8);
  if (header_len > (1ULL << 30)) throw CheckpointError(path.string() + ": corrupt header length");
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw CheckpointError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt header: " + e.what());
  }

  LoadedCheckpoint out;
  try {
    const ModelConfig stored = ModelConfig::from_json(header.at("model_config"));
    if (hex64(stored.hash()) != header.at("config_hash").get<std::string>()) {
      throw CheckpointError(path.string() + ": stored config does not match its hash (corrupt file)");
    }
    if (expected && expected->hash() != stored.hash()) {
      throw CheckpointError(path.string() + ": checkpoint was written for config " +
                            header.at("config_hash").get<std::string>() + " but the requested config hashes to " +
                            hex64(expected->hash()));
    }
    out.model = std::make_unique<FineParserModel>(stored);
    out.train_config = TrainConfig::from_json(header.at("train_config"));
    out.progress.epoch = header.at("epoch").get<int>();
    out.progress.optimizer.step = header.at("optimizer_step").get<std::int64_t>();
    for (const auto& e : header.at("log")) {
      out.progress.log.push_back({e[0].get<int>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>(),
                                  e[4].get<double>()});
    }

    std::uint64_t total = 0;
    for (const auto& t : header.at("tensors")) total += t.at("count").get<std::uint64_t>();
    std::vector<unsigned char> raw(total * 8);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw CheckpointError(path.string() + ": truncated payload");
    std::vector<double> payload(total);
    for (std::uint64_t i = 0; i < total; ++i) payload[i] = std::bit_cast<double>(get_bytes(raw.data() + 8 * i, 8));
    if (hex64(payload_hash(payload, 0xCBF29CE484222325ULL)) != header.at("payload_hash").get<std::string>()) {
      throw CheckpointError(path.string() + ": payload checksum mismatch (corrupt file)");
    }

    auto& params = out.model->parameters().all();
    std::map<std::pair<std::string, std::string>, json> by_key;
    for (const auto& t : header.at("tensors")) {
      by_key[{t.at("name").get<std::string>(), t.at("kind").get<std::string>()}] = t;
    }
    const bool with_opt = by_key.count({params.empty() ? "" : params[0].name, "adam_m"}) > 0;
    auto fetch = [&](const Parameter& p, const std::string& kind) {
      auto it = by_key.find({p.name, kind});
      if (it == by_key.end()) throw CheckpointError(path.string() + ": missing tensor " + p.name + " (" + kind + ")");
      const auto count = it->second.at("count").get<std::uint64_t>();
      const auto off = it->second.at("offset").get<std::uint64_t>();
      if (count != static_cast<std::uint64_t>(p.tensor.numel()) || off + count > total) {
        throw CheckpointError(path.string() + ": tensor " + p.name + " has the wrong size");
      }
      return std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                 payload.begin() + static_cast<std::ptrdiff_t>(off + count));
    };
    for (auto& p : params) {
      const auto v = fetch(p, "param");
      std::copy(v.begin(), v.end(), p.tensor.values_mut().begin());
      if (with_opt) {
        out.progress.optimizer.m.push_back(fetch(p, "adam_m"));
        out.progress.optimizer.v.push_back(fetch(p, "adam_v"));
      }
    }
    if (by_key.size() != params.size() * (with_opt ? 3 : 1)) {
      throw CheckpointError(path.string() + ": tensor index does not match the model parameters");
    }
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

json SamplePrediction::to_json() const {
  json steps = json::array();
  for (const auto& per : step_relatives) {
    json s = json::array();
    for (const auto& [v, st] : per) s.push_back({{"r_v", v}, {"r_s", st}});
    steps.push_back(std::move(s));
  }
  return {{"sample_id", sample_id},      {"score", score},
          {"transitions", transitions.timestamps()}, {"exemplars", exemplar_ids},
          {"contributions", contributions}, {"step_relatives", steps}};
}

const VideoRepresentation& ModelPredictor::representation(const VideoSample& sample) {
  auto it = cache_.find(sample.id);
  if (it != cache_.end()) return it->second;
  NoGradGuard no_grad;
  RepresentOptions opts;
  return cache_.emplace(sample.id, model_.represent(sample, opts)).first->second;
}

SamplePrediction ModelPredictor::predict(const VideoSample& query, const std::vector<const VideoSample*>& exemplars) {
  NoGradGuard no_grad;
  const VideoRepresentation& q = representation(query);
  std::vector<ExemplarRef> refs;
  SamplePrediction p;
  p.sample_id = query.id;
  for (const auto* e : exemplars) {
    refs.push_back({&representation(*e), e->score});
    p.exemplar_ids.push_back(e->id);
  }
  const MultiPrediction m = model_.predict_multi_exemplar(q, refs);
  p.score = m.score;
  p.contributions = m.contributions;
  p.step_relatives = m.step_relatives;
  p.transitions = q.predicted;
  const auto fused = q.pyramid.fused.values();
  p.fused_mask.assign(fused.begin(), fused.end());
  return p;
}

SamplePrediction OraclePredictor::predict(const VideoSample& query, const std::vector<const VideoSample*>& exemplars) {
  SamplePrediction p;
  p.sample_id = query.id;
  p.score = query.score;
  p.transitions = TransitionSet(query.transitions, query.num_frames);
  p.fused_mask.assign(query.masks.begin(), query.masks.end());
  for (const auto* e : exemplars) {
    p.exemplar_ids.push_back(e->id);
    p.contributions.push_back(query.score);
  }
  return p;
}

json MetricReport::to_json() const {
  json aiou_j = json::object();
  for (const auto& [d, v] : aiou) {
    std::ostringstream key;
    key << d;
    aiou_j[key.str()] = v;
  }
  return {{"rho", rho ? json(*rho) : json(nullptr)},
          {"r_l2_x100", r_l2_x100},
          {"aiou", aiou_j},
          {"mae", mae},
          {"f_beta", f_beta},
          {"s_measure", s_measure},
          {"num_samples", num_samples}};
}

std::string MetricReport::bounds_violation() const {
  auto bad = [](double v, double lo, double hi) { return !(std::isfinite(v) && v >= lo && v <= hi); };
  if (!rho) return "rho undefined";
  if (bad(*rho, -1.0, 1.0)) return "rho out of [-1, 1]";
  if (!(std::isfinite(r_l2_x100) && r_l2_x100 >= 0.0)) return "r_l2_x100 negative or non-finite";
  if (aiou.empty()) return "aiou missing";
  for (const auto& [d, v] : aiou) {
    if (bad(v, 0.0, 1.0)) return "aiou out of [0, 1]";
  }
  if (bad(mae, 0.0, 1.0)) return "mae out of [0, 1]";
  if (bad(f_beta, 0.0, 1.0)) return "f_beta out of [0, 1]";
  if (bad(s_measure, 0.0, 1.0)) return "s_measure out of [0, 1]";
  return {};
}

Evaluation evaluate(Predictor& predictor, const Dataset& test_set, const Dataset& exemplar_pool, int num_exemplars,
                    std::uint64_t seed, const MetricConfig& metrics) {
  metrics.validate();
  Evaluation ev;
  std::vector<double> preds, gts;
  std::vector<TransitionSet> pred_ts, gt_ts;
  double mae_sum = 0.0, f_sum = 0.0, s_sum = 0.0;
  std::size_t frames = 0;
  for (const auto& q : test_set) {
    const auto sel = select_exemplars(q, exemplar_pool, num_exemplars, derive_seed(seed, "evaluate"));
    SamplePrediction p = predictor.predict(q, sel.exemplars);
    preds.push_back(p.score);
    gts.push_back(q.score);
    pred_ts.push_back(p.transitions);
    gt_ts.push_back(TransitionSet(q.transitions, q.num_frames));
    const std::size_t plane = q.frame_size();
    if (p.fused_mask.size() != q.masks.size()) throw ShapeError("evaluate: predicted mask size mismatch for " + q.id);
    mae_sum += mask_mae(p.fused_mask, q.masks);
    for (int t = 0; t < q.num_frames; ++t) {
      const std::span<const double> pm(p.fused_mask.data() + t * plane, plane);
      const std::span<const std::uint8_t> gm(q.masks.data() + t * plane, plane);
      f_sum += f_measure(binarize_mask(pm, metrics.mask_threshold), gm, metrics.beta2);
      s_sum += s_measure(pm, gm, q.height, q.width, metrics.alpha);
      ++frames;
    }
    ev.predictions.push_back(std::move(p));
  }
  MetricReport& r = ev.report;
  r.num_samples = test_set.size();
  if (test_set.empty()) return ev;
  double y_min = metrics.y_min.value_or(std::numeric_limits<double>::infinity());
  double y_max = metrics.y_max.value_or(-std::numeric_limits<double>::infinity());
  if (!metrics.y_min || !metrics.y_max) {
    for (const auto* set : {&exemplar_pool, &test_set}) {
      for (const auto& s : *set) {
        if (!metrics.y_min) y_min = std::min(y_min, s.score);
        if (!metrics.y_max) y_max = std::max(y_max, s.score);
      }
    }
  }
  if (!(y_max > y_min)) y_max = y_min + 1.0;
  r.rho = spearman_rho(preds, gts);
  r.r_l2_x100 = relative_l2(preds, gts, y_min, y_max);
  for (double d : metrics.aiou_thresholds) r.aiou.emplace_back(d, aiou_at(pred_ts, gt_ts, d));
  r.mae = mae_sum / static_cast<double>(test_set.size());
  r.f_beta = f_sum / static_cast<double>(frames);
  r.s_measure = s_sum / static_cast<double>(frames);
  return ev;
}

}  // namespace fineparser
