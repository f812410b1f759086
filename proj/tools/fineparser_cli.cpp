// fineparser: corpus generation, training, evaluation, prediction and mask export.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fineparser/error.h"
#include "fineparser/log.h"
#include "fineparser/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fineparser;

namespace {

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  SyntheticConfig synthetic;
  ModelConfig model;
  TrainConfig train;
  MetricConfig metrics;
  double train_fraction = 0.75;
  std::uint64_t split_seed = 7;
  int exemplars = 10;
  std::uint64_t eval_seed = 1;
  bool has_model_section = false;
};

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

SyntheticConfig synthetic_from_json(const json& j) {
  reject_unknown(j,
                 {"count", "num_frames", "height", "width", "num_transitions", "seed", "score_noise", "rotation_min",
                  "rotation_max", "deviation_min", "deviation_max", "action_types"},
                 "synthetic");
  SyntheticConfig c;
  read_if(j, "count", c.count);
  read_if(j, "num_frames", c.num_frames);
  read_if(j, "height", c.height);
  read_if(j, "width", c.width);
  read_if(j, "num_transitions", c.num_transitions);
  read_if(j, "seed", c.seed);
  read_if(j, "score_noise", c.score_noise);
  read_if(j, "rotation_min", c.rotation_min);
  read_if(j, "rotation_max", c.rotation_max);
  read_if(j, "deviation_min", c.deviation_min);
  read_if(j, "deviation_max", c.deviation_max);
  if (j.contains("action_types")) {
    c.action_types.clear();
    for (const auto& t : j.at("action_types")) {
      ActionTypeSpec a;
      a.name = t.at("name").get<std::string>();
      read_if(t, "difficulty", a.difficulty);
      read_if(t, "rotation_direction", a.rotation_direction);
      c.action_types.push_back(a);
    }
  }
  return c;
}

json synthetic_to_json(const SyntheticConfig& c) {
  json types = json::array();
  for (const auto& t : c.action_types) {
    types.push_back({{"name", t.name}, {"difficulty", t.difficulty}, {"rotation_direction", t.rotation_direction}});
  }
  return {{"count", c.count},
          {"num_frames", c.num_frames},
          {"height", c.height},
          {"width", c.width},
          {"num_transitions", c.num_transitions},
          {"seed", c.seed},
          {"score_noise", c.score_noise},
          {"rotation_min", c.rotation_min},
          {"rotation_max", c.rotation_max},
          {"deviation_min", c.deviation_min},
          {"deviation_max", c.deviation_max},
          {"action_types", types}};
}

MetricConfig metrics_from_json(const json& j) {
  reject_unknown(j, {"beta2", "alpha", "aiou_thresholds", "mask_threshold", "y_min", "y_max"}, "metrics");
  MetricConfig c;
  read_if(j, "beta2", c.beta2);
  read_if(j, "alpha", c.alpha);
  read_if(j, "aiou_thresholds", c.aiou_thresholds);
  read_if(j, "mask_threshold", c.mask_threshold);
  if (j.contains("y_min")) c.y_min = j.at("y_min").get<double>();
  if (j.contains("y_max")) c.y_max = j.at("y_max").get<double>();
  return c;
}

json metrics_to_json(const MetricConfig& c) {
  json j = {{"beta2", c.beta2},
            {"alpha", c.alpha},
            {"aiou_thresholds", c.aiou_thresholds},
            {"mask_threshold", c.mask_threshold}};
  if (c.y_min) j["y_min"] = *c.y_min;
  if (c.y_max) j["y_max"] = *c.y_max;
  return j;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  reject_unknown(j, {"synthetic", "model", "train", "metrics", "split", "evaluate"}, "config");
  try {
    if (j.contains("synthetic")) rc.synthetic = synthetic_from_json(j.at("synthetic"));
    if (j.contains("model")) {
      rc.model = ModelConfig::from_json(j.at("model"));
      rc.has_model_section = true;
    }
    if (j.contains("train")) rc.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("metrics")) rc.metrics = metrics_from_json(j.at("metrics"));
    if (j.contains("split")) {
      reject_unknown(j.at("split"), {"train_fraction", "seed"}, "split");
      read_if(j.at("split"), "train_fraction", rc.train_fraction);
      read_if(j.at("split"), "seed", rc.split_seed);
    }
    if (j.contains("evaluate")) {
      reject_unknown(j.at("evaluate"), {"exemplars", "seed"}, "evaluate");
      read_if(j.at("evaluate"), "exemplars", rc.exemplars);
      read_if(j.at("evaluate"), "seed", rc.eval_seed);
    }
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return rc;
}

json run_config_json(const RunConfig& rc) {
  return {{"synthetic", synthetic_to_json(rc.synthetic)},
          {"model", rc.model.to_json()},
          {"train", rc.train.to_json()},
          {"metrics", metrics_to_json(rc.metrics)},
          {"split", {{"train_fraction", rc.train_fraction}, {"seed", rc.split_seed}}},
          {"evaluate", {{"exemplars", rc.exemplars}, {"seed", rc.eval_seed}}}};
}

void validate_run_config(const RunConfig& rc) {
  rc.synthetic.validate();
  rc.model.validate();
  rc.train.validate();
  rc.metrics.validate();
  if (!(rc.train_fraction > 0.0 && rc.train_fraction < 1.0)) throw ConfigError("split.train_fraction must be in (0,1)");
  if (rc.exemplars < 1) throw ConfigError("evaluate.exemplars must be >= 1");
}

// ---------------------------------------------------------------------------
// Content hashing (git blob / tree style SHA-1)

std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(is), {}};
}

std::string blob_hash(std::string_view content) {
  std::string obj = "blob " + std::to_string(content.size());
  obj.push_back('\0');
  obj.append(content);
  return sha1_hex(obj);
}

struct HashedEntry {
  std::string name;
  std::string hash;
};

std::string tree_hash(std::vector<HashedEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  std::string listing;
  for (const auto& e : entries) listing += e.hash + "  " + e.name + "\n";
  return blob_hash(listing);
}

// Every regular file below root, relative names.
std::vector<HashedEntry> hash_tree(const fs::path& root, const std::set<std::string>& skip = {}) {
  std::vector<HashedEntry> out;
  if (!fs::exists(root)) return out;
  if (fs::is_regular_file(root)) return {{root.filename().string(), blob_hash(read_file(root))}};
  for (const auto& de : fs::recursive_directory_iterator(root)) {
    if (!de.is_regular_file()) continue;
    const std::string rel = fs::relative(de.path(), root).generic_string();
    if (skip.count(rel)) continue;
    out.push_back({rel, blob_hash(read_file(de.path()))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared plumbing

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::optional<int> exemplars;
  std::string device = "cpu";
  std::string log_level = "info";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run configuration")->envname("FINEPARSER_CONFIG");
  cmd->add_option("--seed", o.seed, "seed override")->envname("FINEPARSER_SEED");
  cmd->add_option("--out", o.out, "output directory")->envname("FINEPARSER_OUT");
  cmd->add_flag("--force", o.force, "write into a non-empty output directory")->envname("FINEPARSER_FORCE");
  cmd->add_option("--exemplars", o.exemplars, "exemplars per query (E)")->envname("FINEPARSER_EXEMPLARS");
  cmd->add_option("--device", o.device, "compute device (cpu)")->envname("FINEPARSER_DEVICE");
  cmd->add_option("--log-level", o.log_level, "debug, info, warn, error or off")->envname("FINEPARSER_LOG_LEVEL");
}

void apply_common(const CommonOptions& o) {
  if (o.device != "cpu") throw ConfigError("device '" + o.device + "' is not available; this build supports cpu only");
  static const std::map<std::string, log::Level> levels = {{"debug", log::Level::debug},
                                                           {"info", log::Level::info},
                                                           {"warn", log::Level::warn},
                                                           {"error", log::Level::error},
                                                           {"off", log::Level::off}};
  const auto it = levels.find(o.log_level);
  if (it == levels.end()) throw ConfigError("unknown log level '" + o.log_level + "'");
  log::set_level(it->second);
}

fs::path prepare_out(const CommonOptions& o, bool must_be_empty) {
  if (o.out.empty()) throw ConfigError("--out is required");
  const fs::path out(o.out);
  if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError("output path " + o.out + " is not a directory");
  if (must_be_empty && fs::exists(out) && !fs::is_empty(out) && !o.force) {
    throw ConfigError("output directory " + o.out + " is not empty (pass --force to write into it)");
  }
  fs::create_directories(out);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw DataError("cannot write " + path.string());
    os << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_path;
  json config;
  std::uint64_t seed = 0;
  fs::path out;
  std::vector<HashedEntry> inputs;

  void write(const std::vector<HashedEntry>& outputs) const {
    std::vector<HashedEntry> in = inputs;
    in.push_back({"<config>", blob_hash(config.dump())});
    json jin = json::array(), jout = json::array();
    for (const auto& e : in) jin.push_back({{"path", e.name}, {"hash", e.hash}});
    for (const auto& e : outputs) jout.push_back({{"path", e.name}, {"hash", e.hash}});
    write_json(out / "run_manifest.json", {{"command", command},
                                           {"argv", argv},
                                           {"config_path", config_path},
                                           {"config", config},
                                           {"seed", seed},
                                           {"output_dir", out.string()},
                                           {"inputs", jin},
                                           {"content_hash", tree_hash(in)},
                                           {"outputs", jout},
                                           {"outputs_hash", tree_hash(outputs)}});
  }
};

std::vector<HashedEntry> prefixed(std::vector<HashedEntry> entries, const std::string& prefix) {
  for (auto& e : entries) e.name = prefix + e.name;
  return entries;
}

struct Corpus {
  Dataset samples;
  std::vector<HashedEntry> hashes;
};

Corpus load_corpus(const std::string& dir, const std::string& manifest) {
  if (dir.empty()) throw ConfigError("--corpus is required");
  const fs::path root(dir);
  const fs::path mf = root / manifest;
  if (!fs::exists(mf)) throw DataError("corpus manifest " + mf.string() + " does not exist");
  LoadResult r = load_annotations(root, mf);
  for (const auto& rej : r.rejected) {
    log::warn("rejected manifest line " + std::to_string(rej.line) + " (" + rej.sample_id + "): " + rej.reason);
  }
  Corpus c;
  c.samples = std::move(r.samples);
  c.hashes = prefixed(hash_tree(root, {"run_manifest.json"}), "corpus/");
  return c;
}

void check_geometry(const Dataset& ds, const ModelConfig& mc) {
  for (const auto& s : ds) {
    if (s.num_frames != mc.num_frames || s.height != mc.height || s.width != mc.width) {
      throw DataError("sample " + s.id + " is " + std::to_string(s.num_frames) + "x" + std::to_string(s.height) + "x" +
                      std::to_string(s.width) + " but the model expects " + std::to_string(mc.num_frames) + "x" +
                      std::to_string(mc.height) + "x" + std::to_string(mc.width));
    }
    if (static_cast<int>(s.transitions.size()) != mc.tap.num_transitions) {
      throw DataError("sample " + s.id + " has " + std::to_string(s.transitions.size()) +
                      " transitions but the model expects " + std::to_string(mc.tap.num_transitions));
    }
  }
}

struct SplitSets {
  Dataset train;
  Dataset test;
};

SplitSets split_corpus(const Dataset& ds, const RunConfig& rc) {
  const Split sp = split_dataset(ds.size(), rc.train_fraction, rc.split_seed);
  SplitSets out;
  for (auto i : sp.train) out.train.push_back(ds[i]);
  for (auto i : sp.test) out.test.push_back(ds[i]);
  return out;
}

std::unique_ptr<FineParserModel> load_model(const std::string& checkpoint, const RunConfig& rc,
                                            std::vector<HashedEntry>& inputs) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(checkpoint)) throw CheckpointError("checkpoint " + checkpoint + " does not exist");
  LoadedCheckpoint ck = load_checkpoint(checkpoint, rc.has_model_section ? &rc.model : nullptr);
  inputs.push_back({"checkpoint/" + fs::path(checkpoint).filename().string(), blob_hash(read_file(checkpoint))});
  return std::move(ck.model);
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---------------------------------------------------------------------------
// Commands

struct Context {
  CommonOptions common;
  std::vector<std::string> argv;
  std::string corpus;
  std::string manifest = "manifest.jsonl";
  std::string checkpoint;
  std::string resume;
  std::optional<int> epochs;
  std::optional<int> count;
  bool oracle = false;
  std::string split = "test";
  std::vector<std::string> samples;
  bool probabilities = false;
};

Manifest start_manifest(const Context& cx, const std::string& command, const RunConfig& rc, std::uint64_t seed,
                        const fs::path& out) {
  Manifest m;
  m.command = command;
  m.argv = cx.argv;
  m.config_path = cx.common.config;
  m.config = run_config_json(rc);
  m.seed = seed;
  m.out = out;
  if (!cx.common.config.empty()) m.inputs.push_back({"config/" + fs::path(cx.common.config).filename().string(),
                                                     blob_hash(read_file(cx.common.config))});
  return m;
}

int cmd_generate(const Context& cx) {
  RunConfig rc = load_run_config(cx.common.config);
  if (cx.common.seed) rc.synthetic.seed = *cx.common.seed;
  if (cx.count) rc.synthetic.count = *cx.count;
  validate_run_config(rc);
  const fs::path out = prepare_out(cx.common, true);
  Manifest m = start_manifest(cx, "generate", rc, rc.synthetic.seed, out);

  const Dataset ds = generate_synthetic(rc.synthetic);
  export_corpus(ds, out, cx.manifest);
  std::vector<HashedEntry> outputs = hash_tree(out, {"run_manifest.json"});
  m.write(outputs);
  print_json({{"command", "generate"}, {"samples", ds.size()}, {"manifest", (out / cx.manifest).string()},
              {"outputs_hash", tree_hash(outputs)}});
  return 0;
}

int cmd_train(const Context& cx) {
  RunConfig rc = load_run_config(cx.common.config);
  if (cx.common.seed) rc.train.seed = *cx.common.seed;
  if (cx.epochs) rc.train.epochs = *cx.epochs;
  validate_run_config(rc);
  const fs::path out = prepare_out(cx.common, cx.resume.empty());
  Manifest m = start_manifest(cx, "train", rc, rc.train.seed, out);

  std::unique_ptr<FineParserModel> model;
  TrainingProgress progress;
  if (!cx.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(cx.resume, &rc.model);
    model = std::move(ck.model);
    progress = std::move(ck.progress);
    m.inputs.push_back({"resume/" + fs::path(cx.resume).filename().string(), blob_hash(read_file(cx.resume))});
  } else {
    model = std::make_unique<FineParserModel>(rc.model);
  }

  Corpus corpus = load_corpus(cx.corpus, cx.manifest);
  check_geometry(corpus.samples, rc.model);
  m.inputs.insert(m.inputs.end(), corpus.hashes.begin(), corpus.hashes.end());
  const SplitSets sets = split_corpus(corpus.samples, rc);

  json split = {{"train", json::array()}, {"test", json::array()}};
  for (const auto& s : sets.train) split["train"].push_back(s.id);
  for (const auto& s : sets.test) split["test"].push_back(s.id);
  write_json(out / "split.json", split);

  Trainer trainer(*model, rc.train, progress);
  const fs::path ckpt = out / "checkpoint.fpck";
  trainer.train(sets.train, rc.train.epochs, [&](const EpochLog& e) {
    log::info("epoch " + std::to_string(e.epoch) + " L_SAP " + std::to_string(e.l_sap) + " L_TAP " +
              std::to_string(e.l_tap) + " L_Reg " + std::to_string(e.l_reg) + " L " + std::to_string(e.total));
    save_checkpoint(ckpt, *model, trainer.progress(), rc.train);
    write_training_log(out / "training_log.csv", trainer.progress().log);
  });
  save_checkpoint(ckpt, *model, trainer.progress(), rc.train);
  write_training_log(out / "training_log.csv", trainer.progress().log);

  const std::vector<HashedEntry> outputs = hash_tree(out, {"run_manifest.json"});
  m.write(outputs);
  json summary = {{"command", "train"}, {"epochs", trainer.progress().epoch}, {"checkpoint", ckpt.string()}};
  if (!trainer.progress().log.empty()) {
    const auto& last = trainer.progress().log.back();
    summary["final_loss"] = {{"L_SAP", last.l_sap}, {"L_TAP", last.l_tap}, {"L_Reg", last.l_reg}, {"L", last.total}};
  }
  print_json(summary);
  return 0;
}

int cmd_evaluate(const Context& cx) {
  RunConfig rc = load_run_config(cx.common.config);
  if (cx.common.seed) rc.eval_seed = *cx.common.seed;
  if (cx.common.exemplars) rc.exemplars = *cx.common.exemplars;
  validate_run_config(rc);
  if (cx.split != "test" && cx.split != "all") throw ConfigError("--split must be 'test' or 'all'");
  if (cx.oracle && !cx.checkpoint.empty()) throw ConfigError("--oracle and --checkpoint are mutually exclusive");
  const fs::path out = prepare_out(cx.common, false);
  Manifest m = start_manifest(cx, "evaluate", rc, rc.eval_seed, out);

  std::unique_ptr<FineParserModel> model;
  if (!cx.oracle) model = load_model(cx.checkpoint, rc, m.inputs);
  Corpus corpus = load_corpus(cx.corpus, cx.manifest);
  if (model) check_geometry(corpus.samples, model->config());
  m.inputs.insert(m.inputs.end(), corpus.hashes.begin(), corpus.hashes.end());
  const SplitSets sets = split_corpus(corpus.samples, rc);
  const Dataset& test = cx.split == "all" ? corpus.samples : sets.test;

  std::unique_ptr<Predictor> predictor;
  if (model) {
    predictor = std::make_unique<ModelPredictor>(*model);
  } else {
    predictor = std::make_unique<OraclePredictor>();
  }
  const Evaluation ev = evaluate(*predictor, test, sets.train, rc.exemplars, rc.eval_seed, rc.metrics);
  const std::string violation = ev.report.bounds_violation();
  if (!violation.empty()) log::warn("metric report out of bounds: " + violation);

  json report = ev.report.to_json();
  report["predictor"] = cx.oracle ? "oracle" : "model";
  report["exemplars"] = rc.exemplars;
  write_json(out / "metrics.json", report);
  {
    std::ofstream os(out / "predictions.jsonl");
    for (const auto& p : ev.predictions) os << p.to_json().dump() << '\n';
  }
  m.write(hash_tree(out, {"run_manifest.json"}));
  print_json(report);
  return 0;
}

const VideoSample& find_sample(const Dataset& ds, const std::string& id) {
  for (const auto& s : ds) {
    if (s.id == id) return s;
  }
  throw DataError("sample '" + id + "' is not in the corpus");
}

int cmd_predict(const Context& cx) {
  RunConfig rc = load_run_config(cx.common.config);
  if (cx.common.seed) rc.eval_seed = *cx.common.seed;
  if (cx.common.exemplars) rc.exemplars = *cx.common.exemplars;
  validate_run_config(rc);
  if (cx.samples.size() != 1) throw ConfigError("predict needs exactly one --sample");
  const fs::path out = prepare_out(cx.common, false);
  Manifest m = start_manifest(cx, "predict", rc, rc.eval_seed, out);

  auto model = load_model(cx.checkpoint, rc, m.inputs);
  Corpus corpus = load_corpus(cx.corpus, cx.manifest);
  check_geometry(corpus.samples, model->config());
  m.inputs.insert(m.inputs.end(), corpus.hashes.begin(), corpus.hashes.end());
  const VideoSample& query = find_sample(corpus.samples, cx.samples.front());
  const SplitSets sets = split_corpus(corpus.samples, rc);

  const ExemplarSelection sel =
      select_exemplars(query, sets.train, rc.exemplars, derive_seed(rc.eval_seed, "predict"));
  ModelPredictor predictor(*model);
  const SamplePrediction p = predictor.predict(query, sel.exemplars);
  json rec = p.to_json();
  rec["ground_truth"] = {{"score", query.score}, {"transitions", query.transitions}};
  rec["exemplar_sampling_with_replacement"] = sel.with_replacement;
  write_json(out / "prediction.json", rec);
  m.write(hash_tree(out, {"run_manifest.json"}));
  print_json(rec);
  return 0;
}

int cmd_export_masks(const Context& cx) {
  RunConfig rc = load_run_config(cx.common.config);
  validate_run_config(rc);
  const fs::path out = prepare_out(cx.common, true);
  Manifest m = start_manifest(cx, "export-masks", rc, 0, out);

  auto model = load_model(cx.checkpoint, rc, m.inputs);
  Corpus corpus = load_corpus(cx.corpus, cx.manifest);
  check_geometry(corpus.samples, model->config());
  m.inputs.insert(m.inputs.end(), corpus.hashes.begin(), corpus.hashes.end());

  std::vector<const VideoSample*> chosen;
  if (cx.samples.empty()) {
    for (const auto& s : corpus.samples) chosen.push_back(&s);
  } else {
    for (const auto& id : cx.samples) chosen.push_back(&find_sample(corpus.samples, id));
  }

  const int H = model->config().height, W = model->config().width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (const VideoSample* s : chosen) {
    ModelPredictor predictor(*model);
    const auto probs = predictor.representation(*s).pyramid.fused.values();
    const fs::path dir = out / "masks" / s->id;
    fs::create_directories(dir);
    for (int t = 0; t < s->num_frames; ++t) {
      const auto frame = probs.subspan(static_cast<std::size_t>(t) * plane, plane);
      std::vector<std::uint8_t> pixels(plane);
      if (cx.probabilities) {
        for (std::size_t i = 0; i < plane; ++i) {
          pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(frame[i], 0.0, 1.0) * 255.0));
        }
      } else {
        const auto bin = binarize_mask(frame, rc.metrics.mask_threshold);
        for (std::size_t i = 0; i < plane; ++i) pixels[i] = bin[i] ? 255 : 0;
      }
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.pgm", t + 1);
      write_pgm(dir / name, pixels, H, W);
    }
  }
  m.write(hash_tree(out, {"run_manifest.json"}));
  print_json({{"command", "export-masks"}, {"samples", chosen.size()}, {"directory", (out / "masks").string()}});
  return 0;
}

int exit_code_for(const Error& e) {
  const std::string kind = e.kind();
  if (kind == "config") return 2;
  if (kind == "data" || kind == "parse" || kind == "shape") return 3;
  if (kind == "checkpoint") return 4;
  if (kind == "training") return 5;
  return 1;
}

void emit_error(const std::string& command, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"command", command}, {"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fineparser: fine-grained action parsing and scoring"};
  app.require_subcommand(1);
  Context cx;
  for (int i = 0; i < argc; ++i) cx.argv.emplace_back(argv[i]);

  auto* gen = app.add_subcommand("generate", "write a seeded synthetic corpus");
  add_common(gen, cx.common);
  gen->add_option("--count", cx.count, "number of samples (overrides synthetic.count)");
  gen->add_option("--manifest", cx.manifest, "manifest file name");

  auto* train = app.add_subcommand("train", "train a model on a corpus");
  add_common(train, cx.common);
  train->add_option("--corpus", cx.corpus, "corpus directory")->envname("FINEPARSER_CORPUS");
  train->add_option("--manifest", cx.manifest, "manifest file name");
  train->add_option("--epochs", cx.epochs, "epoch count (overrides train.epochs)");
  train->add_option("--resume", cx.resume, "continue from a checkpoint");

  auto* eval = app.add_subcommand("evaluate", "score a corpus split and write a metric report");
  add_common(eval, cx.common);
  eval->add_option("--checkpoint", cx.checkpoint, "trained checkpoint")->envname("FINEPARSER_CHECKPOINT");
  eval->add_option("--corpus", cx.corpus, "corpus directory")->envname("FINEPARSER_CORPUS");
  eval->add_option("--manifest", cx.manifest, "manifest file name");
  eval->add_flag("--oracle", cx.oracle, "report the ground truth as predictions");
  eval->add_option("--split", cx.split, "test or all");

  auto* pred = app.add_subcommand("predict", "predict one sample against training exemplars");
  add_common(pred, cx.common);
  pred->add_option("--checkpoint", cx.checkpoint, "trained checkpoint")->envname("FINEPARSER_CHECKPOINT");
  pred->add_option("--corpus", cx.corpus, "corpus directory")->envname("FINEPARSER_CORPUS");
  pred->add_option("--manifest", cx.manifest, "manifest file name");
  pred->add_option("--sample", cx.samples, "sample id")->required();

  auto* masks = app.add_subcommand("export-masks", "write predicted per-frame masks as PGM images");
  add_common(masks, cx.common);
  masks->add_option("--checkpoint", cx.checkpoint, "trained checkpoint")->envname("FINEPARSER_CHECKPOINT");
  masks->add_option("--corpus", cx.corpus, "corpus directory")->envname("FINEPARSER_CORPUS");
  masks->add_option("--manifest", cx.manifest, "manifest file name");
  masks->add_option("--sample", cx.samples, "sample id (repeatable; default all)");
  masks->add_flag("--probabilities", cx.probabilities, "write probabilities instead of binary masks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("", "usage", e.what());
    return 2;
  }

  std::string command;
  for (auto* sub : app.get_subcommands()) command = sub->get_name();
  try {
    apply_common(cx.common);
    if (command == "generate") return cmd_generate(cx);
    if (command == "train") return cmd_train(cx);
    if (command == "evaluate") return cmd_evaluate(cx);
    if (command == "predict") return cmd_predict(cx);
    if (command == "export-masks") return cmd_export_masks(cx);
    emit_error(command, "usage", "unknown command");
    return 2;
  } catch (const Error& e) {
    emit_error(command, e.kind(), e.what());
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    emit_error(command, "io", e.what());
    return 3;
  } catch (const std::exception& e) {
    emit_error(command, "internal", e.what());
    return 1;
  }
}
