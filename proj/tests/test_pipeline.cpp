#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "splitshield/pipeline.hpp"

using namespace splitshield;
namespace fs = std::filesystem;

namespace {

// Miniature but complete experiment: every stage runs in well under a second
// of training so the cache semantics can be exercised repeatedly.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.synth.seed = 7;
  cfg.corpus_size = 60;
  cfg.n_train = 20;
  cfg.n_test = 10;
  cfg.split_epochs = 2;
  cfg.adversary_epochs = 2;
  cfg.delta_n = 8;
  cfg.delta.temperature = 0.5f;
  cfg.ae_train.epochs = 3;
  cfg.recon.iterations = 30;
  cfg.recon_images = 1;
  return cfg;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("splitshield_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::vector<Stage> kAllStages = {
    Stage::train_split,     Stage::train_adversary,
    Stage::gen_delta,       Stage::train_protection,
    Stage::eval_inference,  Stage::eval_reconstruction,
    Stage::report};

}  // namespace

TEST_CASE("config serialization round-trips and rejects bad input") {
  ExperimentConfig a = tiny_config();
  ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
  REQUIRE(a.to_json() == b.to_json());
  for (Stage s : kAllStages)
    REQUIRE(a.stage_scope(s) == b.stage_scope(s));

  REQUIRE_THROWS_AS(ExperimentConfig::from_json({{"bogus_section", 1}}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      ExperimentConfig::from_json({{"delta", {{"strategy", "delta_mid"}}}}),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      ExperimentConfig::from_json({{"protection", {{"ae_variant", "fat"}}}}),
      std::invalid_argument);
  REQUIRE_THROWS_AS(ExperimentConfig::from_file("/nonexistent/cfg.json"),
                    std::invalid_argument);
}

TEST_CASE("config file loading applies defaults for missing keys") {
  fs::path dir = fresh_dir("cfg");
  {
    std::ofstream f(dir / "partial.json");
    f << R"({"model": {"seed": 42}, "split": {"position": "c4"}})";
  }
  ExperimentConfig cfg = ExperimentConfig::from_file(dir / "partial.json");
  REQUIRE(cfg.seed == 42);
  REQUIRE(cfg.split_position == "c4");
  REQUIRE(cfg.delta.split_position == "c4");
  ExperimentConfig defaults;
  REQUIRE(cfg.family == defaults.family);
  REQUIRE(cfg.ae_train.epochs == defaults.ae_train.epochs);
}

TEST_CASE("stage hashing scopes invalidation to the right subgraph") {
  fs::path cache = fresh_dir("hash");
  ExperimentConfig base = tiny_config();
  Pipeline p0(base, cache);

  SECTION("autoencoder epochs only reach the protection stage and below") {
    ExperimentConfig mod = base;
    mod.ae_train.epochs += 5;
    Pipeline p1(mod, cache);
    REQUIRE(p1.input_hash(Stage::train_split) ==
            p0.input_hash(Stage::train_split));
    REQUIRE(p1.input_hash(Stage::train_adversary) ==
            p0.input_hash(Stage::train_adversary));
    REQUIRE(p1.input_hash(Stage::gen_delta) == p0.input_hash(Stage::gen_delta));
    REQUIRE(p1.input_hash(Stage::train_protection) !=
            p0.input_hash(Stage::train_protection));
    REQUIRE(p1.input_hash(Stage::eval_inference) !=
            p0.input_hash(Stage::eval_inference));
  }

  SECTION("sensitive attribute invalidates adversary and delta, not split") {
    ExperimentConfig mod = base;
    mod.sensitive_attribute = "Synth_Primary";
    Pipeline p1(mod, cache);
    REQUIRE(p1.input_hash(Stage::train_split) ==
            p0.input_hash(Stage::train_split));
    REQUIRE(p1.input_hash(Stage::train_adversary) !=
            p0.input_hash(Stage::train_adversary));
    REQUIRE(p1.input_hash(Stage::gen_delta) != p0.input_hash(Stage::gen_delta));
  }

  SECTION("model seed invalidates everything") {
    ExperimentConfig mod = base;
    mod.seed = 8;
    Pipeline p1(mod, cache);
    for (Stage s : kAllStages)
      REQUIRE(p1.input_hash(s) != p0.input_hash(s));
  }
}

TEST_CASE("stages build once then hit the cache") {
  fs::path cache = fresh_dir("cache");
  ExperimentConfig cfg = tiny_config();
  Pipeline p(cfg, cache);

  StageArtifact first = p.run(Stage::eval_inference);
  REQUIRE_FALSE(first.cache_hit);
  REQUIRE(fs::exists(first.dir / "manifest.json"));
  REQUIRE(fs::exists(first.dir / "metrics.json"));
  // every upstream stage was materialized by the same call
  for (Stage s : {Stage::train_split, Stage::train_adversary, Stage::gen_delta,
                  Stage::train_protection})
    REQUIRE(p.is_cached(s));

  StageArtifact second = p.run(Stage::eval_inference);
  REQUIRE(second.cache_hit);
  REQUIRE(second.dir == first.dir);
  REQUIRE(second.input_hash == first.input_hash);

  // a fresh Pipeline over the same cache also hits
  Pipeline q(cfg, cache);
  REQUIRE(q.run(Stage::eval_inference).cache_hit);
}

TEST_CASE("manifest records the stage scope that produced it") {
  fs::path cache = fresh_dir("manifest");
  ExperimentConfig cfg = tiny_config();
  Pipeline p(cfg, cache);
  StageArtifact art = p.run(Stage::train_split);
  nlohmann::json m = nlohmann::json::parse(slurp(art.dir / "manifest.json"));
  REQUIRE(m["stage"] == "train_split");
  REQUIRE(m["input_hash"] == art.input_hash);
  REQUIRE(m["scope"] == cfg.stage_scope(Stage::train_split));
}

TEST_CASE("two clean runs produce byte-identical metric CSVs") {
  ExperimentConfig cfg = tiny_config();
  fs::path cache_a = fresh_dir("det_a");
  fs::path cache_b = fresh_dir("det_b");
  Pipeline a(cfg, cache_a);
  Pipeline b(cfg, cache_b);
  StageArtifact ra = a.run(Stage::report);
  StageArtifact rb = b.run(Stage::report);
  REQUIRE(slurp(ra.dir / "metrics.csv") == slurp(rb.dir / "metrics.csv"));
  REQUIRE(slurp(ra.dir / "metrics.csv").rfind("experiment_id,", 0) == 0);
}

TEST_CASE("forced recomputation reproduces cached metrics") {
  fs::path cache = fresh_dir("force");
  ExperimentConfig cfg = tiny_config();
  Pipeline p(cfg, cache);
  p.run(Stage::eval_inference);
  InferenceMetrics before = p.inference_metrics();
  StageArtifact art = p.run(Stage::eval_inference, /*force=*/true);
  REQUIRE_FALSE(art.cache_hit);
  InferenceMetrics after = p.inference_metrics();
  REQUIRE(after.s_alpha == before.s_alpha);
  REQUIRE(after.s_beta == before.s_beta);
  REQUIRE(after.a_alpha == before.a_alpha);
  REQUIRE(after.a_beta == before.a_beta);
}

TEST_CASE("delta pairs reload with freshly computed features") {
  fs::path cache = fresh_dir("pairs");
  ExperimentConfig cfg = tiny_config();
  Pipeline p(cfg, cache);
  auto pairs = p.delta_pairs();
  REQUIRE(pairs.size() == static_cast<size_t>(cfg.delta_n));
  SplitModel sm = p.split_model();
  for (const auto& pr : pairs) {
    REQUIRE(pr.f_o.data.z == sm.feature_shape().c);
    // features must equal the client response to the stored images
    FeatureMap ref = sm.client_feature(pr.protected_image);
    REQUIRE(pr.f_p.data.data == ref.data.data);
  }
  // nothing resembling a raw feature dump may live in the store
  for (const auto& e :
       fs::recursive_directory_iterator(cache))
    if (e.is_regular_file()) {
      std::string ext = e.path().extension().string();
      REQUIRE((ext == ".png" || ext == ".json" || ext == ".bin" ||
               ext == ".csv"));
    }
}

TEST_CASE("report stage emits csv and charts") {
  fs::path cache = fresh_dir("report");
  ExperimentConfig cfg = tiny_config();
  Pipeline p(cfg, cache);
  StageArtifact art = p.run(Stage::report);
  REQUIRE(fs::exists(art.dir / "metrics.csv"));
  REQUIRE(fs::exists(art.dir / "train_curve.png"));
  REQUIRE(fs::exists(art.dir / "accuracy_bars.png"));
  std::string csv = slurp(art.dir / "metrics.csv");
  REQUIRE(csv.find("c2,delta_min,black_out,adp") != std::string::npos);

  auto recon_dir = p.stage_dir(Stage::eval_reconstruction);
  REQUIRE(fs::exists(recon_dir / "recon_00.png"));
  Image strip = read_png(recon_dir / "recon_00.png");
  REQUIRE(strip.x > 3 * 64);  // three panels side by side
}

TEST_CASE("run_matrix covers the cross product and skips infeasible cells") {
  fs::path cache = fresh_dir("matrix");
  ExperimentConfig cfg = tiny_config();
  MatrixAxes axes;
  axes.splits = {"c2", "no_such_layer"};
  axes.strategies = {"delta_max"};
  axes.methods = {"black_out", "blur_out"};
  auto rows = run_matrix(cfg, axes, cache);
  REQUIRE(rows.size() == 4);
  int ok = 0, skipped = 0;
  for (const auto& r : rows) {
    if (r.skipped) {
      ++skipped;
      REQUIRE(r.config.split_position == "no_such_layer");
      REQUIRE_FALSE(r.skip_reason.empty());
    } else {
      ++ok;
    }
  }
  REQUIRE(ok == 2);
  REQUIRE(skipped == 2);
  std::string csv = matrix_csv(rows);
  REQUIRE(csv.find(",skipped") != std::string::npos);
  REQUIRE(csv.find(",ok") != std::string::npos);
  // blank axes collapse to the single default experiment
  auto single = run_matrix(cfg, {}, cache);
  REQUIRE(single.size() == 1);
  REQUIRE_FALSE(single[0].skipped);
}

TEST_CASE("sweep winner predicate and divergence flag") {
  JudgeThresholds th;  // eps_server = 0.05
  REQUIRE(sweep_point_wins(0.90, {4, 0.88, 0.55}, th));
  REQUIRE_FALSE(sweep_point_wins(0.90, {4, 0.80, 0.55}, th));  // utility lost
  REQUIRE_FALSE(sweep_point_wins(0.90, {4, 0.88, 0.65}, th));  // adv too strong
  REQUIRE(sweep_point_wins(0.90, {4, 0.88, 0.60}, th));        // boundary

  fs::path cache = fresh_dir("sweep");
  ExperimentConfig cfg = tiny_config();
  cfg.protection = "pca";
  cfg.pca_k_max = 8;
  Pipeline p(cfg, cache);
  auto rep = sweep_pca_report(p, {1, 2, 4, 8});
  REQUIRE(rep.curve.size() == 4);
  // the flag must agree with the pointwise predicate over the curve
  SplitModel sm = p.split_model();
  double s_alpha = evaluate_server(sm, nullptr, p.primary_split().second.data);
  bool expect = false;
  for (const auto& pt : rep.curve)
    if (sweep_point_wins(s_alpha, pt, cfg.judge_thresholds)) expect = true;
  REQUIRE(rep.any_k_passes == expect);
  REQUIRE(rep.divergence_flag == rep.any_k_passes);
  REQUIRE_THROWS_AS(sweep_pca_report(p, {0}), std::invalid_argument);
  std::string csv = sweep_csv(rep);
  REQUIRE(csv.rfind("k,server_acc,adversary_acc\n", 0) == 0);
}
