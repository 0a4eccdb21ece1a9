#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "attacks.hpp"
#include "data.hpp"
#include "delta.hpp"
#include "hash.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "plot.hpp"
#include "protection.hpp"

namespace splitshield {

enum class Stage {
  train_split,
  train_adversary,
  gen_delta,
  train_protection,
  eval_inference,
  eval_reconstruction,
  report,
};

inline const std::vector<std::pair<Stage, std::string>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string>> names = {
      {Stage::train_split, "train_split"},
      {Stage::train_adversary, "train_adversary"},
      {Stage::gen_delta, "gen_delta"},
      {Stage::train_protection, "train_protection"},
      {Stage::eval_inference, "eval_inference"},
      {Stage::eval_reconstruction, "eval_reconstruction"},
      {Stage::report, "report"},
  };
  return names;
}

inline std::string stage_name(Stage s) {
  for (const auto& [st, n] : stage_names())
    if (st == s) return n;
  return "?";
}

inline Stage parse_stage(const std::string& name) {
  for (const auto& [st, n] : stage_names())
    if (n == name) return st;
  throw std::invalid_argument("unknown stage: " + name);
}

// Everything an experiment depends on, grouped so each stage hashes only the
// subtree it actually reads.
struct ExperimentConfig {
  // model + primary task
  std::string family = "micro";
  int num_classes = 2;
  uint64_t seed = 0;
  SyntheticSpec synth;
  int corpus_size = 400;
  std::string primary_attribute = "Synth_Primary";
  int n_train = 160, n_test = 80;
  int split_epochs = 12, split_batch = 16;
  float split_lr = 1e-3f;

  std::string split_position = "c2";

  // adversary
  std::string sensitive_attribute = "Synth_Sensitive";
  std::string adversary_arch = "split";  // architecture of the deployed head
  int adversary_epochs = 12, adversary_batch = 16;
  float adversary_lr = 1e-3f;

  // delta generation
  int delta_n = 80;
  DeltaConfig delta;

  // protection
  std::string protection = "adp";  // adp | pca
  AeVariant ae_variant = AeVariant::decreasing;
  AeTrainConfig ae_train;
  int pca_k_max = 64;
  int pca_k_apply = 16;

  // evaluation
  JudgeThresholds judge_thresholds;
  ReconstructionConfig recon;
  int recon_images = 3;

  ExperimentConfig() {
    delta.split_position = split_position;
    ae_train.epochs = 60;
    recon.iterations = 1500;
  }

  void validate() const {
    if (family != "micro" && family != "vgg_like" && family != "resnet_like")
      throw std::invalid_argument("config: unknown family '" + family + "'");
    if (protection != "adp" && protection != "pca")
      throw std::invalid_argument("config: unknown protection '" + protection +
                                  "'");
    if (adversary_arch != "split" && adversary_arch != "full")
      throw std::invalid_argument("config: unknown adversary arch '" +
                                  adversary_arch + "'");
    if (corpus_size < n_train + n_test)
      throw std::invalid_argument("config: corpus smaller than train + test");
    if (recon_images < 1)
      throw std::invalid_argument("config: recon_images must be >= 1");
    synth.validate();
    delta.validate();
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"model",
         {{"family", family},
          {"num_classes", num_classes},
          {"seed", seed},
          {"corpus_size", corpus_size},
          {"synth_hash", synth.hash()},
          {"image_size", synth.image_size},
          {"primary_attribute", primary_attribute},
          {"n_train", n_train},
          {"n_test", n_test},
          {"split_epochs", split_epochs},
          {"split_batch", split_batch},
          {"split_lr", split_lr}}},
        {"split", {{"position", split_position}}},
        {"adversary",
         {{"sensitive_attribute", sensitive_attribute},
          {"arch", adversary_arch},
          {"epochs", adversary_epochs},
          {"batch", adversary_batch},
          {"lr", adversary_lr}}},
        {"delta",
         {{"n", delta_n},
          {"strategy", strategy_name(delta.strategy)},
          {"method", method_name(delta.method)},
          {"iterations", delta.iterations},
          {"temperature", delta.temperature},
          {"blur_intensity", delta.blur_intensity}}},
        {"protection",
         {{"kind", protection},
          {"ae_variant", ae_variant_name(ae_variant)},
          {"ae_epochs", ae_train.epochs},
          {"ae_batch", ae_train.batch_size},
          {"ae_lr", ae_train.lr},
          {"pca_k_max", pca_k_max}}},
        {"eval",
         {{"pca_k_apply", pca_k_apply},
          {"eps_server", judge_thresholds.eps_server},
          {"eps_adv", judge_thresholds.eps_adv},
          {"eps_gap", judge_thresholds.eps_gap}}},
        {"recon",
         {{"iterations", recon.iterations},
          {"step_size", recon.step_size},
          {"tv_weight", recon.tv_weight},
          {"init", recon.init == ReconInit::gray ? "gray" : "noise"},
          {"seed", recon.seed},
          {"images", recon_images}}},
    };
  }

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  // Subtree each stage reads; hashed into that stage's cache key.
  nlohmann::json stage_scope(Stage s) const {
    nlohmann::json all = to_json();
    switch (s) {
      case Stage::train_split: return {{"model", all["model"]}};
      case Stage::train_adversary:
        return {{"split", all["split"]}, {"adversary", all["adversary"]}};
      case Stage::gen_delta:
        // the sensitive attribute shapes the delta pool even without an
        // adversary in the loop (test images of both tasks are held out)
        return {{"split", all["split"]},
                {"delta", all["delta"]},
                {"sensitive_attribute",
                 all["adversary"]["sensitive_attribute"]}};
      case Stage::train_protection:
        return {{"protection", all["protection"]}};
      case Stage::eval_inference: return {{"eval", all["eval"]}};
      case Stage::eval_reconstruction: return {{"recon", all["recon"]}};
      case Stage::report: return nlohmann::json::object();
    }
    return nlohmann::json::object();
  }
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  for (const auto& [key, _] : j.items())
    if (key != "model" && key != "split" && key != "adversary" &&
        key != "delta" && key != "protection" && key != "eval" &&
        key != "recon" && key != "data")
      throw std::invalid_argument("config: unknown section '" + key + "'");
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.family = m.value("family", c.family);
    c.num_classes = m.value("num_classes", c.num_classes);
    c.seed = m.value("seed", c.seed);
    c.corpus_size = m.value("corpus_size", c.corpus_size);
    c.synth.image_size = m.value("image_size", c.synth.image_size);
    c.synth.seed = m.value("synth_seed", c.seed);
    c.primary_attribute = m.value("primary_attribute", c.primary_attribute);
    c.n_train = m.value("n_train", c.n_train);
    c.n_test = m.value("n_test", c.n_test);
    c.split_epochs = m.value("split_epochs", c.split_epochs);
    c.split_batch = m.value("split_batch", c.split_batch);
    c.split_lr = m.value("split_lr", c.split_lr);
  } else {
    c.synth.seed = c.seed;
  }
  if (j.contains("split"))
    c.split_position = j["split"].value("position", c.split_position);
  if (j.contains("adversary")) {
    const auto& a = j["adversary"];
    c.sensitive_attribute = a.value("sensitive_attribute", c.sensitive_attribute);
    c.adversary_arch = a.value("arch", c.adversary_arch);
    c.adversary_epochs = a.value("epochs", c.adversary_epochs);
    c.adversary_batch = a.value("batch", c.adversary_batch);
    c.adversary_lr = a.value("lr", c.adversary_lr);
  }
  if (j.contains("delta")) {
    const auto& d = j["delta"];
    c.delta_n = d.value("n", c.delta_n);
    std::string strat = d.value("strategy", strategy_name(c.delta.strategy));
    if (strat == "delta_min")
      c.delta.strategy = DeltaStrategy::delta_min;
    else if (strat == "delta_max")
      c.delta.strategy = DeltaStrategy::delta_max;
    else
      throw std::invalid_argument("config: unknown delta strategy '" + strat +
                                  "'");
    std::string method = d.value("method", method_name(c.delta.method));
    if (method == "black_out")
      c.delta.method = DeltaMethod::black_out;
    else if (method == "blur_out")
      c.delta.method = DeltaMethod::blur_out;
    else
      throw std::invalid_argument("config: unknown delta method '" + method +
                                  "'");
    c.delta.iterations = d.value("iterations", c.delta.iterations);
    c.delta.temperature = d.value("temperature", c.delta.temperature);
    c.delta.blur_intensity = d.value("blur_intensity", c.delta.blur_intensity);
  }
  if (j.contains("protection")) {
    const auto& p = j["protection"];
    c.protection = p.value("kind", c.protection);
    std::string v = p.value("ae_variant", ae_variant_name(c.ae_variant));
    if (v == "decreasing")
      c.ae_variant = AeVariant::decreasing;
    else if (v == "decreasing_deep")
      c.ae_variant = AeVariant::decreasing_deep;
    else if (v == "decreasing_extra_deep")
      c.ae_variant = AeVariant::decreasing_extra_deep;
    else
      throw std::invalid_argument("config: unknown ae variant '" + v + "'");
    c.ae_train.epochs = p.value("ae_epochs", c.ae_train.epochs);
    c.ae_train.batch_size = p.value("ae_batch", c.ae_train.batch_size);
    c.ae_train.lr = p.value("ae_lr", c.ae_train.lr);
    c.pca_k_max = p.value("pca_k_max", c.pca_k_max);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    c.pca_k_apply = e.value("pca_k_apply", c.pca_k_apply);
    c.judge_thresholds.eps_server =
        e.value("eps_server", c.judge_thresholds.eps_server);
    c.judge_thresholds.eps_adv = e.value("eps_adv", c.judge_thresholds.eps_adv);
    c.judge_thresholds.eps_gap = e.value("eps_gap", c.judge_thresholds.eps_gap);
  }
  if (j.contains("recon")) {
    const auto& r = j["recon"];
    c.recon.iterations = r.value("iterations", c.recon.iterations);
    c.recon.step_size = r.value("step_size", c.recon.step_size);
    c.recon.tv_weight = r.value("tv_weight", c.recon.tv_weight);
    std::string init = r.value("init", "gray");
    if (init == "gray")
      c.recon.init = ReconInit::gray;
    else if (init == "noise")
      c.recon.init = ReconInit::noise;
    else
      throw std::invalid_argument("config: unknown recon init '" + init + "'");
    c.recon.seed = r.value("seed", c.recon.seed);
    c.recon_images = r.value("images", c.recon_images);
  }
  c.delta.split_position = c.split_position;
  c.validate();
  return c;
}

inline ExperimentConfig ExperimentConfig::from_file(
    const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f)
    throw std::invalid_argument("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path.string() +
                                ": " + e.what());
  }
  return from_json(j);
}

struct StageArtifact {
  Stage stage = Stage::train_split;
  std::string input_hash;
  std::filesystem::path dir;
  bool cache_hit = false;
};

// In-memory result bundle for the evaluation stages.
struct InferenceMetrics {
  double s_alpha = 0, s_beta = 0, a_alpha = 0, a_beta = 0;
  double split_model_acc = 0;
  CriterionReport report;
};

struct ReconstructionMetrics {
  std::vector<double> msssim_unprotected, msssim_protected;
  int succeeded_unprotected = 0, succeeded_protected = 0;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Generic weight container for adversary heads (topology is rebuilt from the
// config, so only the flat weights and a sanity header are stored).
inline void save_net_weights(const std::filesystem::path& path,
                             nn::Sequential& net, const std::string& tag) {
  nlohmann::json header = {{"magic", "splitshield-net-v1"},
                           {"tag", tag},
                           {"layers", net.layer_names()}};
  std::string hs = header.dump();
  std::vector<float> w = net.weights_flat();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  uint64_t hlen = hs.size(), wlen = w.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), hlen);
  f.write(reinterpret_cast<const char*>(&wlen), sizeof(wlen));
  f.write(reinterpret_cast<const char*>(w.data()), wlen * sizeof(float));
}

inline void load_net_weights(const std::filesystem::path& path,
                             nn::Sequential& net, const std::string& tag) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("magic", "") != "splitshield-net-v1" ||
      header.value("tag", "") != tag)
    throw std::runtime_error("bad net container: " + path.string());
  if (header["layers"].get<std::vector<std::string>>() != net.layer_names())
    throw std::runtime_error("net topology mismatch: " + path.string());
  uint64_t wlen = 0;
  f.read(reinterpret_cast<char*>(&wlen), sizeof(wlen));
  std::vector<float> w(wlen);
  f.read(reinterpret_cast<char*>(w.data()), wlen * sizeof(float));
  if (!f) throw std::runtime_error("truncated net container: " + path.string());
  net.set_weights_flat(w);
}

}  // namespace detail

// Stage-oriented experiment runner over a content-addressed, write-once
// artifact store. Feature maps are always recomputed from images; only model
// weights, protected image pairs, plugins, and metrics land on disk.
class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::filesystem::path cache_dir)
      : cfg_(std::move(cfg)), cache_(std::move(cache_dir)) {
    cfg_.validate();
    std::filesystem::create_directories(cache_);
  }

  const ExperimentConfig& config() const { return cfg_; }

  std::vector<Stage> upstream(Stage s) const {
    switch (s) {
      case Stage::train_split: return {};
      case Stage::train_adversary: return {Stage::train_split};
      case Stage::gen_delta:
        return cfg_.delta.strategy == DeltaStrategy::delta_min
                   ? std::vector<Stage>{Stage::train_split,
                                        Stage::train_adversary}
                   : std::vector<Stage>{Stage::train_split};
      case Stage::train_protection:
        return {Stage::train_split, Stage::gen_delta};
      case Stage::eval_inference:
        return {Stage::train_split, Stage::train_adversary,
                Stage::train_protection};
      case Stage::eval_reconstruction:
        return {Stage::train_split, Stage::train_protection};
      case Stage::report:
        return {Stage::eval_inference, Stage::eval_reconstruction};
    }
    return {};
  }

  std::string input_hash(Stage s) {
    auto it = hash_memo_.find(s);
    if (it != hash_memo_.end()) return it->second;
    std::string key = stage_name(s) + "\n" + cfg_.stage_scope(s).dump();
    for (Stage up : upstream(s)) key += "\n" + input_hash(up);
    std::string h = sha256_hex(key);
    hash_memo_[s] = h;
    return h;
  }

  bool is_cached(Stage s) {
    return std::filesystem::exists(stage_dir(s) / "manifest.json");
  }

  // Builds the missing prefix of the DAG below `s`, then `s` itself.
  StageArtifact run(Stage s, bool force = false) {
    for (Stage up : upstream(s)) run(up, false);
    StageArtifact art;
    art.stage = s;
    art.input_hash = input_hash(s);
    art.dir = stage_dir(s);
    if (!force && is_cached(s)) {
      art.cache_hit = true;
      return art;
    }
    // write-once: build into a scratch dir, then swap into place
    auto tmp = cache_ / ("tmp-" + stage_name(s) + "-" + art.input_hash);
    std::filesystem::remove_all(tmp);
    std::filesystem::create_directories(tmp);
    build_stage(s, tmp);
    nlohmann::json manifest = {{"stage", stage_name(s)},
                               {"input_hash", art.input_hash},
                               {"scope", cfg_.stage_scope(s)}};
    detail::write_text(tmp / "manifest.json", manifest.dump(2) + "\n");
    std::filesystem::remove_all(art.dir);
    std::filesystem::create_directories(art.dir.parent_path());
    std::filesystem::rename(tmp, art.dir);
    return art;
  }

  // --- loaded-artifact accessors (build on demand) ---------------------------

  const Corpus& corpus() {
    if (!corpus_) {
      SyntheticSpec spec = cfg_.synth;
      Corpus c = synth_generate(spec, cfg_.corpus_size);
      corpus_ = std::make_unique<Corpus>(std::move(c));
    }
    return *corpus_;
  }

  std::shared_ptr<LayeredClassifier> model() {
    run(Stage::train_split);
    if (!model_) {
      auto m = load_checkpoint(stage_dir(Stage::train_split) / "model.bin");
      model_ = std::make_shared<LayeredClassifier>(std::move(m));
    }
    return model_;
  }

  SplitModel split_model() { return split(model(), cfg_.split_position); }

  nn::Sequential offline_adversary() {
    run(Stage::train_adversary);
    auto sm = split_model();
    nn::Sequential net = build_adversary_net(offline_role(), sm,
                                             cfg_.num_classes, adv_seed(0));
    detail::load_net_weights(stage_dir(Stage::train_adversary) / "offline.bin",
                             net, "offline");
    return net;
  }

  nn::Sequential inference_adversary() {
    run(Stage::train_adversary);
    auto sm = split_model();
    nn::Sequential net = build_adversary_net(inference_role(), sm,
                                             cfg_.num_classes, adv_seed(1));
    detail::load_net_weights(
        stage_dir(Stage::train_adversary) / "inference.bin", net, "inference");
    return net;
  }

  // Protected pairs with live feature maps (recomputed, never loaded).
  std::vector<ProtectedPair> delta_pairs() {
    run(Stage::gen_delta);
    auto dir = stage_dir(Stage::gen_delta);
    nlohmann::json index =
        nlohmann::json::parse(detail::read_text(dir / "pairs.json"));
    auto sm = split_model();
    std::vector<ProtectedPair> pairs;
    for (const auto& entry : index["pairs"]) {
      ProtectedPair p;
      p.original = read_png(dir / entry["original"].get<std::string>());
      p.protected_image =
          read_png(dir / entry["protected"].get<std::string>());
      p.f_o = sm.client_feature(p.original);
      p.f_p = sm.client_feature(p.protected_image);
      pairs.push_back(std::move(p));
    }
    return pairs;
  }

  std::shared_ptr<ProtectionPlugin> plugin() {
    run(Stage::train_protection);
    auto p = load_plugin(stage_dir(Stage::train_protection) / "plugin.bin");
    if (p->kind() == PluginKind::pca)
      static_cast<PcaPlugin&>(*p).k_apply =
          std::min(cfg_.pca_k_apply, static_cast<PcaPlugin&>(*p).k_max);
    return p;
  }

  InferenceMetrics inference_metrics() {
    run(Stage::eval_inference);
    nlohmann::json j = nlohmann::json::parse(detail::read_text(
        stage_dir(Stage::eval_inference) / "metrics.json"));
    InferenceMetrics m;
    m.s_alpha = j["s_alpha"];
    m.s_beta = j["s_beta"];
    m.a_alpha = j["a_alpha"];
    m.a_beta = j["a_beta"];
    m.split_model_acc = j["split_model_acc"];
    m.report = judge(m.s_alpha, m.s_beta, m.a_alpha, m.a_beta,
                     cfg_.judge_thresholds);
    return m;
  }

  ReconstructionMetrics reconstruction_metrics() {
    run(Stage::eval_reconstruction);
    nlohmann::json j = nlohmann::json::parse(detail::read_text(
        stage_dir(Stage::eval_reconstruction) / "metrics.json"));
    ReconstructionMetrics m;
    m.msssim_unprotected = j["msssim_unprotected"].get<std::vector<double>>();
    m.msssim_protected = j["msssim_protected"].get<std::vector<double>>();
    m.succeeded_unprotected = j["succeeded_unprotected"];
    m.succeeded_protected = j["succeeded_protected"];
    return m;
  }

  std::filesystem::path stage_dir(Stage s) {
    return cache_ / stage_name(s) / input_hash(s);
  }

  // Primary/sensitive datasets, derived deterministically from the corpus.
  std::pair<AttributeDataset, AttributeDataset> primary_split() {
    return sample_balanced(corpus(), cfg_.primary_attribute, cfg_.n_train,
                           cfg_.n_test, derive_seed(cfg_.seed, 0x7072696dULL),
                           DatasetRole::primary);
  }
  std::pair<AttributeDataset, AttributeDataset> sensitive_split() {
    return sample_balanced(corpus(), cfg_.sensitive_attribute, cfg_.n_train,
                           cfg_.n_test, derive_seed(cfg_.seed, 0x73656e73ULL),
                           DatasetRole::sensitive);
  }

 private:
  AdversaryRole offline_role() const {
    AdversaryRole r;
    r.phase = AdversaryPhase::offline;
    r.architecture = AdversaryArch::split;
    r.sensitive_attribute = cfg_.sensitive_attribute;
    return r;
  }
  AdversaryRole inference_role() const {
    AdversaryRole r;
    r.phase = AdversaryPhase::inference;
    r.architecture = cfg_.adversary_arch == "split" ? AdversaryArch::split
                                                    : AdversaryArch::full;
    r.sensitive_attribute = cfg_.sensitive_attribute;
    return r;
  }
  uint64_t adv_seed(uint64_t which) const {
    return derive_seed(cfg_.seed, 0x61647600ULL + which);
  }

  void build_stage(Stage s, const std::filesystem::path& out) {
    switch (s) {
      case Stage::train_split: return build_train_split(out);
      case Stage::train_adversary: return build_train_adversary(out);
      case Stage::gen_delta: return build_gen_delta(out);
      case Stage::train_protection: return build_train_protection(out);
      case Stage::eval_inference: return build_eval_inference(out);
      case Stage::eval_reconstruction: return build_eval_reconstruction(out);
      case Stage::report: return build_report(out);
    }
  }

  void build_train_split(const std::filesystem::path& out) {
    auto [train, test] = primary_split();
    Family fam = family_from_name(cfg_.family);
    LayeredClassifier m =
        build_model(fam, cfg_.num_classes, cfg_.seed,
                    {3, cfg_.synth.image_size, cfg_.synth.image_size});
    TrainConfig tc;
    tc.epochs = cfg_.split_epochs;
    tc.batch_size = cfg_.split_batch;
    tc.lr = cfg_.split_lr;
    tc.seed = derive_seed(cfg_.seed, 0x747261696eULL);
    TrainTrace trace = train_classifier(m.net, train.data, test.data, tc);
    save_checkpoint(out / "model.bin", m, input_hash(Stage::train_split));
    nlohmann::json j;
    j["best_test_acc"] = trace.best_test_acc;
    j["best_epoch"] = trace.best_epoch;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& e : trace.epochs)
      curve.push_back({{"loss", e.train_loss}, {"test_acc", e.test_acc}});
    j["epochs"] = curve;
    detail::write_text(out / "metrics.json", j.dump(2) + "\n");
  }

  void build_train_adversary(const std::filesystem::path& out) {
    auto sm = split_model();
    auto [train, test] = sensitive_split();
    LabeledImages ftrain = build_adversary_dataset(sm, train.data);
    LabeledImages ftest = build_adversary_dataset(sm, test.data);
    nlohmann::json j;
    const struct {
      const char* name;
      AdversaryRole role;
      uint64_t seed;
    } jobs[2] = {{"offline", offline_role(), adv_seed(0)},
                 {"inference", inference_role(), adv_seed(1)}};
    for (const auto& job : jobs) {
      nn::Sequential net =
          build_adversary_net(job.role, sm, cfg_.num_classes, job.seed);
      TrainConfig tc;
      tc.epochs = cfg_.adversary_epochs;
      tc.batch_size = cfg_.adversary_batch;
      tc.lr = cfg_.adversary_lr;
      tc.seed = derive_seed(job.seed, 0x666974ULL);
      TrainTrace trace = train_classifier(net, ftrain, ftest, tc);
      detail::save_net_weights(out / (std::string(job.name) + ".bin"), net,
                               job.name);
      j[std::string(job.name) + "_best_acc"] = trace.best_test_acc;
    }
    detail::write_text(out / "metrics.json", j.dump(2) + "\n");
  }

  void build_gen_delta(const std::filesystem::path& out) {
    auto sm = split_model();
    std::optional<nn::Sequential> adv;
    if (cfg_.delta.strategy == DeltaStrategy::delta_min)
      adv.emplace(offline_adversary());
    auto [ptrain, ptest] = primary_split();
    auto [strain, stest] = sensitive_split();
    std::set<std::string> exclude(ptest.ids.begin(), ptest.ids.end());
    exclude.insert(stest.ids.begin(), stest.ids.end());
    AttributeDataset ds = build_delta_dataset(
        corpus(), {cfg_.primary_attribute, cfg_.sensitive_attribute},
        cfg_.delta_n, derive_seed(cfg_.seed, 0x64656cULL), exclude);
    DeltaConfig dc = cfg_.delta;
    dc.split_position = cfg_.split_position;
    nlohmann::json index;
    index["pairs"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.size(); ++i) {
      ProtectedPair pair =
          run_delta(ds.data.images[i], sm, adv ? &*adv : nullptr, dc);
      char orig[32], prot[32];
      std::snprintf(orig, sizeof(orig), "orig_%04zu.png", i);
      std::snprintf(prot, sizeof(prot), "prot_%04zu.png", i);
      write_png(out / orig, pair.original);
      write_png(out / prot, pair.protected_image);
      size_t masked = 0;
      for (const auto& m : pair.mask_trace) masked += m.bits.count();
      index["pairs"].push_back({{"id", ds.ids[i]},
                                {"original", orig},
                                {"protected", prot},
                                {"masked_px", masked}});
    }
    detail::write_text(out / "pairs.json", index.dump(2) + "\n");
  }

  void build_train_protection(const std::filesystem::path& out) {
    auto sm = split_model();
    nn::Shape fs = sm.feature_shape();
    std::vector<ProtectedPair> pairs = delta_pairs();
    if (cfg_.protection == "adp") {
      AdpPlugin plugin({cfg_.ae_variant}, fs, cfg_.split_position,
                       derive_seed(cfg_.seed, 0x616570ULL));
      AeTrainConfig tc = cfg_.ae_train;
      tc.seed = derive_seed(cfg_.seed, 0x61657472ULL);
      for (auto& p : pairs) {
        p.f_o.origin_split = cfg_.split_position;
        p.f_p.origin_split = cfg_.split_position;
      }
      std::vector<double> trace = train_adp(plugin, pairs, tc);
      save_plugin(out / "plugin.bin", plugin,
                  input_hash(Stage::train_protection));
      nlohmann::json j;
      j["loss_trace"] = trace;
      detail::write_text(out / "metrics.json", j.dump(2) + "\n");
    } else {
      std::vector<FeatureMap> maps;
      for (auto& p : pairs) {
        p.f_o.origin_split = cfg_.split_position;
        maps.push_back(p.f_o);
      }
      auto plugin = fit_pca(maps, cfg_.pca_k_max);
      save_plugin(out / "plugin.bin", *plugin,
                  input_hash(Stage::train_protection));
      nlohmann::json j;
      j["k_max"] = plugin->k_max;
      j["variance_explained"] = plugin->variance_explained();
      detail::write_text(out / "metrics.json", j.dump(2) + "\n");
    }
  }

  void build_eval_inference(const std::filesystem::path& out) {
    auto sm = split_model();
    auto plug = plugin();
    nn::Sequential adv = inference_adversary();
    auto [ptrain, ptest] = primary_split();
    auto [strain, stest] = sensitive_split();
    InferenceMetrics m;
    m.split_model_acc = eval_accuracy(sm.model->net, ptest.data,
                                      static_cast<int>(ptest.size()));
    m.s_alpha = evaluate_server(sm, nullptr, ptest.data);
    m.s_beta = evaluate_server(sm, plug.get(), ptest.data);
    m.a_alpha = evaluate_adversary(adv, sm, nullptr, stest.data);
    m.a_beta = evaluate_adversary(adv, sm, plug.get(), stest.data);
    m.report = judge(m.s_alpha, m.s_beta, m.a_alpha, m.a_beta,
                     cfg_.judge_thresholds);
    nlohmann::json j;
    j["s_alpha"] = m.s_alpha;
    j["s_beta"] = m.s_beta;
    j["a_alpha"] = m.a_alpha;
    j["a_beta"] = m.a_beta;
    j["split_model_acc"] = m.split_model_acc;
    j["verdict"] = m.report.verdict();
    j["utility_held"] = m.report.utility_held;
    j["adversary_destabilized"] = m.report.adversary_destabilized;
    j["gap_dominates"] = m.report.gap_dominates;
    detail::write_text(out / "metrics.json", j.dump(2) + "\n");
  }

  void build_eval_reconstruction(const std::filesystem::path& out) {
    auto sm = split_model();
    auto plug = plugin();
    auto [ptrain, ptest] = primary_split();
    ReconstructionMetrics m;
    ReconstructionConfig rc = cfg_.recon;
    int n = std::min<int>(cfg_.recon_images, static_cast<int>(ptest.size()));
    for (int i = 0; i < n; ++i) {
      const Image& img = ptest.data.images[i];
      ReconstructionConfig ri = rc;
      ri.seed = derive_seed(rc.seed, 9000 + i);
      ReconstructionScore alpha =
          evaluate_reconstruction(sm, nullptr, img, ri);
      ReconstructionScore beta =
          evaluate_reconstruction(sm, plug.get(), img, ri);
      m.msssim_unprotected.push_back(alpha.msssim);
      m.msssim_protected.push_back(beta.msssim);
      m.succeeded_unprotected += alpha.attack_succeeded ? 1 : 0;
      m.succeeded_protected += beta.attack_succeeded ? 1 : 0;
      char name[48];
      std::snprintf(name, sizeof(name), "recon_%02d.png", i);
      render_strip(out / name, {img, alpha.reconstructed, beta.reconstructed});
    }
    nlohmann::json j;
    j["msssim_unprotected"] = m.msssim_unprotected;
    j["msssim_protected"] = m.msssim_protected;
    j["succeeded_unprotected"] = m.succeeded_unprotected;
    j["succeeded_protected"] = m.succeeded_protected;
    j["success_threshold"] = kReconstructionSuccessThreshold;
    detail::write_text(out / "metrics.json", j.dump(2) + "\n");
  }

  void build_report(const std::filesystem::path& out) {
    InferenceMetrics im = inference_metrics();
    ReconstructionMetrics rm = reconstruction_metrics();
    // metric CSV row with fixed formatting for byte-stable output
    std::string csv =
        "experiment_id,split,strategy,method,protection,arch,s_alpha,s_beta,"
        "a_alpha,a_beta,msssim_alpha,msssim_beta,verdict\n";
    double ms_a = 0, ms_b = 0;
    for (double v : rm.msssim_unprotected) ms_a += v;
    for (double v : rm.msssim_protected) ms_b += v;
    if (!rm.msssim_unprotected.empty()) {
      ms_a /= rm.msssim_unprotected.size();
      ms_b /= rm.msssim_protected.size();
    }
    csv += experiment_id() + "," + cfg_.split_position + "," +
           strategy_name(cfg_.delta.strategy) + "," +
           method_name(cfg_.delta.method) + "," + cfg_.protection + "," +
           cfg_.adversary_arch + "," + detail::fixed6(im.s_alpha) + "," +
           detail::fixed6(im.s_beta) + "," + detail::fixed6(im.a_alpha) + "," +
           detail::fixed6(im.a_beta) + "," + detail::fixed6(ms_a) + "," +
           detail::fixed6(ms_b) + "," +
           (im.report.verdict() ? "pass" : "fail") + "\n";
    detail::write_text(out / "metrics.csv", csv);
    // training curve
    nlohmann::json tj = nlohmann::json::parse(detail::read_text(
        stage_dir(Stage::train_split) / "metrics.json"));
    Series acc;
    acc.label = "test_acc";
    int e = 0;
    for (const auto& row : tj["epochs"]) {
      acc.x.push_back(++e);
      acc.y.push_back(row["test_acc"].get<double>());
    }
    if (!acc.x.empty()) render_line_chart(out / "train_curve.png", {acc});
    // before/after comparison bars
    render_bar_chart(out / "accuracy_bars.png",
                     {{"server", {im.s_alpha, im.s_beta}},
                      {"adversary", {im.a_alpha, im.a_beta}}});
  }

  std::string experiment_id() {
    return input_hash(Stage::eval_inference).substr(0, 12);
  }

  ExperimentConfig cfg_;
  std::filesystem::path cache_;
  std::map<Stage, std::string> hash_memo_;
  std::unique_ptr<Corpus> corpus_;
  std::shared_ptr<LayeredClassifier> model_;
};

// --- experiment matrix -------------------------------------------------------

struct MatrixAxes {
  std::vector<std::string> splits;
  std::vector<std::string> strategies;  // delta_min | delta_max
  std::vector<std::string> methods;     // black_out | blur_out
  std::vector<std::string> archs;       // split | full
};

struct MatrixRow {
  ExperimentConfig config;
  bool skipped = false;
  std::string skip_reason;
  InferenceMetrics metrics;
};

// Cross-product of the axes; cells sharing upstream scope reuse cached
// artifacts through the store. Infeasible cells become skipped rows.
inline std::vector<MatrixRow> run_matrix(const ExperimentConfig& base,
                                         const MatrixAxes& axes,
                                         const std::filesystem::path& cache) {
  auto one = [](std::vector<std::string> v, std::string fallback) {
    if (v.empty()) v.push_back(std::move(fallback));
    return v;
  };
  std::vector<MatrixRow> rows;
  for (const auto& sp : one(axes.splits, base.split_position))
    for (const auto& strat :
         one(axes.strategies, strategy_name(base.delta.strategy)))
      for (const auto& method :
           one(axes.methods, method_name(base.delta.method)))
        for (const auto& arch : one(axes.archs, base.adversary_arch)) {
          MatrixRow row;
          row.config = base;
          row.config.split_position = sp;
          row.config.delta.split_position = sp;
          row.config.delta.strategy = strat == "delta_min"
                                          ? DeltaStrategy::delta_min
                                          : DeltaStrategy::delta_max;
          row.config.delta.method = method == "black_out"
                                        ? DeltaMethod::black_out
                                        : DeltaMethod::blur_out;
          row.config.adversary_arch = arch;
          try {
            Pipeline p(row.config, cache);
            row.metrics = p.inference_metrics();
          } catch (const std::exception& e) {
            row.skipped = true;
            row.skip_reason = e.what();
          }
          rows.push_back(std::move(row));
        }
  return rows;
}

inline std::string matrix_csv(const std::vector<MatrixRow>& rows) {
  std::string csv =
      "split,strategy,method,protection,arch,s_alpha,s_beta,a_alpha,a_beta,"
      "verdict,status\n";
  for (const auto& r : rows) {
    csv += r.config.split_position + "," +
           strategy_name(r.config.delta.strategy) + "," +
           method_name(r.config.delta.method) + "," + r.config.protection +
           "," + r.config.adversary_arch + ",";
    if (r.skipped) {
      csv += ",,,,,skipped\n";
    } else {
      csv += detail::fixed6(r.metrics.s_alpha) + "," +
             detail::fixed6(r.metrics.s_beta) + "," +
             detail::fixed6(r.metrics.a_alpha) + "," +
             detail::fixed6(r.metrics.a_beta) + "," +
             (r.metrics.report.verdict() ? "pass" : "fail") + ",ok\n";
    }
  }
  return csv;
}

// --- component sweep report --------------------------------------------------

struct SweepReport {
  std::vector<ComponentSweepPoint> curve;
  bool any_k_passes = false;  // some k keeps utility and defeats the adversary
  bool divergence_flag = false;  // set by the caller's expectation policy
};

// A sweep point "wins" when it keeps server utility near the unprotected
// baseline while pushing the adversary to 60% or below.
inline bool sweep_point_wins(double s_alpha, const ComponentSweepPoint& pt,
                             const JudgeThresholds& th) {
  return s_alpha - pt.server_acc <= th.eps_server && pt.adversary_acc <= 0.60;
}

// Evaluates a fitted projection plugin across component counts. The
// expectation policy: at shallow splits no k is expected to pass; if one
// does, the report is flagged as divergent rather than failing.
inline SweepReport sweep_pca_report(Pipeline& p, const std::vector<int>& ks) {
  auto plug = p.plugin();
  if (plug->kind() != PluginKind::pca)
    throw std::invalid_argument("sweep_pca_report: protection is not pca");
  auto& pca = static_cast<PcaPlugin&>(*plug);
  auto sm = p.split_model();
  nn::Sequential adv = p.inference_adversary();
  auto [ptrain, ptest] = p.primary_split();
  auto [strain, stest] = p.sensitive_split();
  double s_alpha = evaluate_server(sm, nullptr, ptest.data);
  SweepReport rep;
  rep.curve = sweep_components(pca, ks, [&](PcaPlugin& pl) {
    double s = evaluate_server(sm, &pl, ptest.data);
    double a = evaluate_adversary(adv, sm, &pl, stest.data);
    return std::make_pair(s, a);
  });
  const auto& th = p.config().judge_thresholds;
  for (const auto& pt : rep.curve)
    if (sweep_point_wins(s_alpha, pt, th)) rep.any_k_passes = true;
  rep.divergence_flag = rep.any_k_passes;
  return rep;
}

inline std::string sweep_csv(const SweepReport& rep) {
  std::string csv = "k,server_acc,adversary_acc\n";
  for (const auto& pt : rep.curve)
    csv += std::to_string(pt.k) + "," + detail::fixed6(pt.server_acc) + "," +
           detail::fixed6(pt.adversary_acc) + "\n";
  return csv;
}

}  // namespace splitshield
