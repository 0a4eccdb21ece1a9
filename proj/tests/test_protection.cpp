#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "splitshield/protection.hpp"

using namespace splitshield;

namespace {

FeatureMap random_feature(uint64_t seed, int c, int h, int w,
                          const std::string& origin = "c2") {
  FeatureMap f;
  f.origin_split = origin;
  f.data = Tensor3(c, h, w);
  Rng rng = make_rng(seed);
  for (auto& v : f.data.data) v = uniform(rng, -1.0f, 1.0f);
  return f;
}

}  // namespace

namespace {

// Non-negative maps with duplicated channel pairs: representable exactly by
// a depth-halving bottleneck, so the identity target is achievable.
FeatureMap representable_feature(uint64_t seed) {
  FeatureMap f;
  f.origin_split = "c2";
  f.data = Tensor3(4, 6, 6);
  Rng rng = make_rng(seed);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c)
      for (int ch = 0; ch < 2; ++ch) {
        float v = uniform(rng, 0.0f, 1.0f);
        f.data.at(ch, r, c) = v;
        f.data.at(ch + 2, r, c) = v;
      }
  return f;
}

}  // namespace

TEST_CASE("autoencoder learns the identity mapping from unprotected pairs") {
  nn::Shape contract{4, 6, 6};
  AdpPlugin plugin({AeVariant::decreasing}, contract, "c2", 11);
  std::vector<ProtectedPair> pairs;
  for (int i = 0; i < 48; ++i) {
    ProtectedPair p;
    p.f_o = representable_feature(100 + i);
    p.f_p = p.f_o;  // no protection applied: target equals input
    pairs.push_back(std::move(p));
  }
  AeTrainConfig cfg;
  cfg.epochs = 800;
  cfg.batch_size = 8;
  cfg.lr = 3e-3f;
  cfg.seed = 5;
  auto trace = train_adp(plugin, pairs, cfg);
  REQUIRE(trace.size() == 800);
  REQUIRE(trace.back() < trace.front());
  double rel_err_sum = 0;
  for (int i = 0; i < 8; ++i) {
    FeatureMap f = representable_feature(500 + i);
    FeatureMap out = plugin.apply(f);
    rel_err_sum += out.data.l2_dist(f.data) / f.data.l2_norm();
  }
  REQUIRE(rel_err_sum / 8 < 0.05);
}

TEST_CASE("plugin enforces fit and shape contracts") {
  AdpPlugin plugin({AeVariant::decreasing}, {4, 6, 6}, "c2", 1);
  FeatureMap f = random_feature(1, 4, 6, 6);
  REQUIRE_THROWS_AS(plugin.apply(f), std::runtime_error);  // unfitted
  plugin.fitted = true;
  REQUIRE_NOTHROW(plugin.apply(f));
  FeatureMap wrong = random_feature(2, 8, 6, 6);
  REQUIRE_THROWS_AS(plugin.apply(wrong), std::invalid_argument);
  FeatureMap out = plugin.apply(f);
  REQUIRE(out.data.same_shape(f.data));  // output depth equals input depth
  REQUIRE(out.origin_split == f.origin_split);
}

TEST_CASE("indivisible feature depth is rejected with a clear message") {
  try {
    AdpPlugin plugin({AeVariant::decreasing_deep}, {6, 4, 4}, "c3", 0);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("decreasing_deep") != std::string::npos);
    REQUIRE(msg.find("c3") != std::string::npos);
    REQUIRE(msg.find("6") != std::string::npos);
  }
}

TEST_CASE("bottleneck depth follows the variant factor") {
  AdpPlugin a({AeVariant::decreasing}, {8, 4, 4}, "c2", 0);
  REQUIRE(a.latent_shape().c == 4);
  REQUIRE(a.bottleneck_depth() == 4);
  AdpPlugin b({AeVariant::decreasing_deep}, {8, 4, 4}, "c2", 0);
  REQUIRE(b.latent_shape().c == 2);
  AdpPlugin c({AeVariant::decreasing_extra_deep}, {8, 4, 4}, "c2", 0);
  REQUIRE(c.latent_shape().c == 1);
  REQUIRE(c.latent_shape().h == 4);
}

TEST_CASE("training validates pair origin") {
  AdpPlugin plugin({AeVariant::decreasing}, {4, 6, 6}, "c2", 1);
  ProtectedPair p;
  p.f_o = random_feature(1, 4, 6, 6, "c4");
  p.f_p = p.f_o;
  AeTrainConfig cfg;
  cfg.epochs = 1;
  REQUIRE_THROWS_AS(train_adp(plugin, {p}, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(train_adp(plugin, {}, cfg), std::invalid_argument);
}

TEST_CASE("full-rank projection reconstructs the fitting data") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 40; ++i) maps.push_back(random_feature(200 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 18);  // d = 18, n = 40: full rank available
  REQUIRE(plugin->k_max == 18);
  for (int i = 0; i < 5; ++i) {
    FeatureMap out = plugin->apply(maps[i]);
    REQUIRE(out.data.max_abs_diff(maps[i].data) <= 1e-4f);
  }
}

TEST_CASE("projection is idempotent") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 30; ++i) maps.push_back(random_feature(300 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 18);
  plugin->k_apply = 5;
  FeatureMap probe = random_feature(999, 2, 3, 3);
  FeatureMap once = plugin->apply(probe);
  FeatureMap twice = plugin->apply(once);
  REQUIRE(twice.data.max_abs_diff(once.data) <= 1e-5f);
}

TEST_CASE("component rows are orthonormal") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 25; ++i) maps.push_back(random_feature(400 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 10);
  Eigen::MatrixXf gram = plugin->components * plugin->components.transpose();
  for (int i = 0; i < gram.rows(); ++i)
    for (int j = 0; j < gram.cols(); ++j)
      REQUIRE_THAT(gram(i, j),
                   Catch::Matchers::WithinAbs(i == j ? 1.0 : 0.0, 1e-4));
}

TEST_CASE("rank-one data concentrates all variance in one component") {
  FeatureMap base = random_feature(55, 2, 3, 3);
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 12; ++i) {
    FeatureMap f = base;
    float a = 0.1f * (i + 1);
    for (auto& v : f.data.data) v *= a;
    maps.push_back(std::move(f));
  }
  auto plugin = fit_pca(maps, 5);
  auto var = plugin->variance_explained();
  REQUIRE(var[0] > 0.999);
  for (size_t i = 1; i < var.size(); ++i) REQUIRE(var[i] <= var[i - 1] + 1e-9);
}

TEST_CASE("singular values arrive in descending order") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 30; ++i) maps.push_back(random_feature(600 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 12);
  for (int i = 1; i < plugin->singular_values.size(); ++i)
    REQUIRE(plugin->singular_values[i] <= plugin->singular_values[i - 1] + 1e-9);
}

TEST_CASE("requested rank is capped by the data") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 5; ++i) maps.push_back(random_feature(700 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 100);
  REQUIRE(plugin->k_max == 5);  // min(n, d)
  REQUIRE_THROWS_AS(fit_pca({maps[0]}, 3), std::invalid_argument);
}

TEST_CASE("out-of-range component counts are rejected") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 20; ++i) maps.push_back(random_feature(800 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 8);
  plugin->k_apply = 0;
  FeatureMap probe = random_feature(1, 2, 3, 3);
  REQUIRE_THROWS_AS(plugin->apply(probe), std::invalid_argument);
  plugin->k_apply = 9;
  REQUIRE_THROWS_AS(plugin->apply(probe), std::invalid_argument);
  plugin->k_apply = 8;
  REQUIRE_NOTHROW(plugin->apply(probe));
}

TEST_CASE("component sweep evaluates each k and restores the plugin") {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 20; ++i) maps.push_back(random_feature(900 + i, 2, 3, 3));
  auto plugin = fit_pca(maps, 8);
  plugin->k_apply = 3;
  std::vector<int> seen;
  auto curve = sweep_components(*plugin, {1, 2, 4, 8}, [&](PcaPlugin& p) {
    seen.push_back(p.k_apply);
    return std::make_pair(0.9, 0.1 * p.k_apply);
  });
  REQUIRE(seen == std::vector<int>{1, 2, 4, 8});
  REQUIRE(curve.size() == 4);
  REQUIRE(curve[2].k == 4);
  REQUIRE_THAT(curve[3].adversary_acc, Catch::Matchers::WithinAbs(0.8, 1e-12));
  REQUIRE(plugin->k_apply == 3);
  REQUIRE_THROWS_AS(
      sweep_components(*plugin, {9}, [](PcaPlugin&) {
        return std::make_pair(0.0, 0.0);
      }),
      std::invalid_argument);
}

TEST_CASE("serialization round trip preserves both plugin kinds") {
  auto tmp = std::filesystem::temp_directory_path();
  // autoencoder
  AdpPlugin adp({AeVariant::decreasing}, {4, 6, 6}, "c2", 3);
  adp.fitted = true;
  FeatureMap probe = random_feature(42, 4, 6, 6);
  FeatureMap before = adp.apply(probe);
  save_plugin(tmp / "adp.bin", adp, "h1");
  auto adp2 = load_plugin(tmp / "adp.bin");
  REQUIRE(adp2->kind() == PluginKind::adp_ae);
  REQUIRE(adp2->split_position == "c2");
  FeatureMap after = adp2->apply(probe);
  REQUIRE(after.data.max_abs_diff(before.data) == 0.0f);
  // projection
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 20; ++i) maps.push_back(random_feature(950 + i, 2, 3, 3));
  auto pca = fit_pca(maps, 6);
  pca->k_apply = 4;
  FeatureMap probe2 = random_feature(43, 2, 3, 3);
  FeatureMap pb = pca->apply(probe2);
  save_plugin(tmp / "pca.bin", *pca, "h2");
  auto pca2 = load_plugin(tmp / "pca.bin");
  REQUIRE(pca2->kind() == PluginKind::pca);
  auto* pp = static_cast<PcaPlugin*>(pca2.get());
  REQUIRE(pp->k_apply == 4);
  REQUIRE(pp->k_max == 6);
  FeatureMap pa = pca2->apply(probe2);
  REQUIRE(pa.data.max_abs_diff(pb.data) <= 1e-6f);
  std::filesystem::remove(tmp / "adp.bin");
  std::filesystem::remove(tmp / "pca.bin");
}
