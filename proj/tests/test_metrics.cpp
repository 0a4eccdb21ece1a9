#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "splitshield/metrics.hpp"
#include "splitshield/rng.hpp"

using namespace splitshield;

namespace {

Grid2 random_grid(uint64_t seed, int h, int w, float lo = 0.0f,
                  float hi = 1.0f) {
  Rng rng = make_rng(seed);
  Grid2 g(h, w);
  for (auto& v : g.v) v = uniform(rng, lo, hi);
  return g;
}

// Direct reference implementation: per-window explicit double-precision
// statistics, no separability, no incremental tricks.
double naive_ssim(const Grid2& a, const Grid2& b, const MsSsimParams& p) {
  const int win = p.window;
  std::vector<double> k1(win);
  double mid = (win - 1) / 2.0, ksum = 0;
  for (int i = 0; i < win; ++i) {
    k1[i] = std::exp(-(i - mid) * (i - mid) /
                     (2 * p.window_sigma * p.window_sigma));
    ksum += k1[i];
  }
  for (auto& v : k1) v /= ksum;
  double total = 0;
  int count = 0;
  for (int r = 0; r + win <= a.h; ++r)
    for (int c = 0; c + win <= a.w; ++c) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double w = k1[i] * k1[j];
          ma += w * a.at(r + i, c + j);
          mb += w * b.at(r + i, c + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double w = k1[i] * k1[j];
          double da = a.at(r + i, c + j) - ma;
          double db = b.at(r + i, c + j) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      // weighted variance computed around the weighted mean already includes
      // the mean-square correction used by the moment form
      double sa = std::sqrt(va), sb = std::sqrt(vb);
      double l = (2 * ma * mb + p.gamma1()) / (ma * ma + mb * mb + p.gamma1());
      double cc = (2 * sa * sb + p.gamma2()) / (va + vb + p.gamma2());
      double s = (cov + p.gamma3()) / (sa * sb + p.gamma3());
      total += l * cc * s;
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("ssim of an image with itself is 1") {
  MsSsimParams p;
  p.window = 5;
  Grid2 g = random_grid(1, 16, 16);
  REQUIRE_THAT(ssim(g, g, p), Catch::Matchers::WithinAbs(1.0, 1e-6));
  Grid2 flat(12, 12);
  std::fill(flat.v.begin(), flat.v.end(), 0.6f);
  // flat images exercise the stabilizers; float moment cancellation leaves
  // a tiny residual against gamma3
  REQUIRE_THAT(ssim(flat, flat, p), Catch::Matchers::WithinAbs(1.0, 1e-4));
}

TEST_CASE("ssim is symmetric") {
  MsSsimParams p;
  p.window = 5;
  for (uint64_t s = 0; s < 5; ++s) {
    Grid2 a = random_grid(10 + s, 16, 16);
    Grid2 b = random_grid(20 + s, 16, 16);
    REQUIRE_THAT(ssim(a, b, p),
                 Catch::Matchers::WithinAbs(ssim(b, a, p), 1e-6));
  }
}

TEST_CASE("ssim matches a direct windowed reference") {
  MsSsimParams p;
  p.window = 5;
  for (uint64_t s = 0; s < 4; ++s) {
    Grid2 a = random_grid(30 + s, 14, 18);
    Grid2 b = random_grid(40 + s, 14, 18);
    REQUIRE_THAT(ssim(a, b, p),
                 Catch::Matchers::WithinAbs(naive_ssim(a, b, p), 2e-5));
  }
  MsSsimParams p11;  // default 11x11 window
  Grid2 a = random_grid(50, 24, 24);
  Grid2 b = random_grid(51, 24, 24);
  REQUIRE_THAT(ssim(a, b, p11),
               Catch::Matchers::WithinAbs(naive_ssim(a, b, p11), 2e-5));
}

TEST_CASE("anti-correlated structure drives ssim negative") {
  MsSsimParams p;
  p.window = 5;
  Grid2 a = random_grid(60, 16, 16, 0.3f, 0.7f);
  Grid2 b(16, 16);
  for (size_t i = 0; i < a.v.size(); ++i) b.v[i] = 1.0f - a.v[i];
  REQUIRE(ssim(a, b, p) < 0.0);
}

TEST_CASE("single-scale multi-scale score equals classic ssim exactly") {
  MsSsimParams p;
  p.window = 5;
  p.scales = 1;
  Grid2 a = random_grid(70, 20, 20);
  Grid2 b = random_grid(71, 20, 20);
  MsSsimResult r = ms_ssim_full(a, b, p);
  REQUIRE(r.used_scales == 1);
  REQUIRE(!r.scale_reduced);
  REQUIRE_THAT(r.score, Catch::Matchers::WithinAbs(ssim(a, b, p), 1e-12));
}

TEST_CASE("small images reduce the scale count with a warning flag") {
  MsSsimParams p;  // 5 scales, window 11: 64>>4 = 4 < 11
  Grid2 a = random_grid(80, 64, 64);
  Grid2 b = random_grid(81, 64, 64);
  MsSsimResult r = ms_ssim_full(a, b, p);
  REQUIRE(r.scale_reduced);
  REQUIRE(r.used_scales == 3);  // 64>>2 = 16 >= 11
  REQUIRE(std::isfinite(r.score));
  // large enough input keeps all five scales
  Grid2 c = random_grid(82, 176, 176);
  MsSsimResult r5 = ms_ssim_full(c, c, p);
  REQUIRE(!r5.scale_reduced);
  REQUIRE(r5.used_scales == 5);
  REQUIRE_THAT(r5.score, Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("multi-scale score of identical images is 1 after reduction") {
  MsSsimParams p;
  Grid2 a = random_grid(90, 64, 64);
  REQUIRE_THAT(ms_ssim(a, a, p), Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("image overload converts to grayscale first") {
  Image a(3, 64, 64);
  Rng rng = make_rng(99);
  for (auto& v : a.data) v = uniform(rng, 0.0f, 1.0f);
  REQUIRE_THAT(ms_ssim(a, a), Catch::Matchers::WithinAbs(1.0, 1e-6));
  // channel-swapped copy with identical luma is not distinguished
  Grid2 ga = to_grayscale(a);
  REQUIRE_THAT(ms_ssim(a, a), Catch::Matchers::WithinAbs(ms_ssim(ga, ga), 1e-9));
}

TEST_CASE("metric rejects malformed inputs") {
  MsSsimParams p;
  Grid2 a = random_grid(1, 16, 16), b = random_grid(2, 16, 12);
  REQUIRE_THROWS_AS(ssim(a, b, p), std::invalid_argument);
  Grid2 tiny = random_grid(3, 8, 8);  // smaller than the 11x11 window
  REQUIRE_THROWS_AS(ssim(tiny, tiny, p), std::invalid_argument);
  MsSsimParams bad;
  bad.scales = 6;  // only five exponent weights exist
  REQUIRE_THROWS_AS(ms_ssim_full(a, a, bad), std::invalid_argument);
}

TEST_CASE("verdict passes when utility holds and the adversary collapses") {
  CriterionReport r = judge(0.84, 0.85, 0.73, 0.50);
  REQUIRE(r.utility_held);
  REQUIRE(r.adversary_destabilized);
  REQUIRE(r.gap_dominates);
  REQUIRE(r.verdict());
}

TEST_CASE("verdict fails when the server collapses too") {
  CriterionReport r = judge(0.88, 0.49, 0.90, 0.50);
  REQUIRE(!r.utility_held);
  REQUIRE(!r.verdict());
}

TEST_CASE("verdict fails when the adversary barely moves") {
  CriterionReport r = judge(0.85, 0.84, 0.72, 0.60);
  REQUIRE(r.utility_held);
  REQUIRE(!r.adversary_destabilized);
  REQUIRE(!r.verdict());
}

TEST_CASE("verdict respects custom thresholds") {
  JudgeThresholds th;
  th.eps_server = 0.10;
  th.eps_adv = 0.30;
  th.eps_gap = 0.0;
  CriterionReport r = judge(0.90, 0.82, 0.90, 0.55, th);
  REQUIRE(r.utility_held);
  REQUIRE(r.adversary_destabilized);
  REQUIRE(r.verdict());
}
