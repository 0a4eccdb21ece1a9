#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"
#include "tensor.hpp"

namespace splitshield {

// Multi-scale SSIM parameters. Exponent weights are the canonical published
// values for five scales; stabilizers derive from theta1/theta2 and the
// dynamic range (gamma3 = gamma2 / 2).
struct MsSsimParams {
  int scales = 5;
  std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double theta1 = 0.01;
  double theta2 = 0.03;
  double dynamic_range = 1.0;
  int window = 11;
  double window_sigma = 1.5;

  double gamma1() const { return (theta1 * dynamic_range) * (theta1 * dynamic_range); }
  double gamma2() const { return (theta2 * dynamic_range) * (theta2 * dynamic_range); }
  double gamma3() const { return gamma2() / 2.0; }
};

struct SsimComponentMaps {
  Grid2 l, c, s;  // valid-mode windowed maps
};

namespace detail {

inline std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(window);
  double sum = 0.0;
  double mid = (window - 1) / 2.0;
  for (int i = 0; i < window; ++i) {
    k[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable valid-mode windowed weighted mean.
inline Grid2 windowed_mean(const Grid2& img, const std::vector<double>& k) {
  const int win = static_cast<int>(k.size());
  const int oh = img.h - win + 1, ow = img.w - win + 1;
  Grid2 tmp(img.h, ow);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < win; ++i) s += k[i] * img.at(r, c + i);
      tmp.at(r, c) = static_cast<float>(s);
    }
  Grid2 out(oh, ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < win; ++i) s += k[i] * tmp.at(r + i, c);
      out.at(r, c) = static_cast<float>(s);
    }
  return out;
}

inline Grid2 hadamard(const Grid2& a, const Grid2& b) {
  Grid2 out(a.h, a.w);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

// 2x2 average-pool dyadic downsampling between scales.
inline Grid2 downsample2(const Grid2& g) {
  Grid2 out(g.h / 2, g.w / 2);
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c)
      out.at(r, c) = 0.25f * (g.at(2 * r, 2 * c) + g.at(2 * r, 2 * c + 1) +
                              g.at(2 * r + 1, 2 * c) + g.at(2 * r + 1, 2 * c + 1));
  return out;
}

inline double signed_pow(double v, double e) {
  return v < 0.0 ? -std::pow(-v, e) : std::pow(v, e);
}

}  // namespace detail

// Luminance / contrast / structure maps over local Gaussian windows.
inline SsimComponentMaps ssim_components(const Grid2& phi, const Grid2& theta,
                                         const MsSsimParams& p) {
  if (phi.h != theta.h || phi.w != theta.w)
    throw std::invalid_argument("ssim_components: shape mismatch");
  if (phi.h < p.window || phi.w < p.window)
    throw std::invalid_argument("ssim_components: image smaller than window");
  auto k = detail::gaussian_kernel(p.window, p.window_sigma);
  Grid2 mu_p = detail::windowed_mean(phi, k);
  Grid2 mu_t = detail::windowed_mean(theta, k);
  Grid2 pp = detail::windowed_mean(detail::hadamard(phi, phi), k);
  Grid2 tt = detail::windowed_mean(detail::hadamard(theta, theta), k);
  Grid2 pt = detail::windowed_mean(detail::hadamard(phi, theta), k);
  const double g1 = p.gamma1(), g2 = p.gamma2(), g3 = p.gamma3();
  SsimComponentMaps out{Grid2(mu_p.h, mu_p.w), Grid2(mu_p.h, mu_p.w),
                        Grid2(mu_p.h, mu_p.w)};
  for (size_t i = 0; i < mu_p.v.size(); ++i) {
    double mp = mu_p.v[i], mt = mu_t.v[i];
    double var_p = std::max(0.0, double(pp.v[i]) - mp * mp);
    double var_t = std::max(0.0, double(tt.v[i]) - mt * mt);
    double cov = double(pt.v[i]) - mp * mt;
    double sp = std::sqrt(var_p), st = std::sqrt(var_t);
    out.l.v[i] = static_cast<float>((2 * mp * mt + g1) / (mp * mp + mt * mt + g1));
    out.c.v[i] = static_cast<float>((2 * sp * st + g2) / (var_p + var_t + g2));
    out.s.v[i] = static_cast<float>((cov + g3) / (sp * st + g3));
  }
  return out;
}

// Classic single-scale SSIM: spatial mean of the pointwise l*c*s map.
inline double ssim(const Grid2& phi, const Grid2& theta,
                   const MsSsimParams& p) {
  SsimComponentMaps m = ssim_components(phi, theta, p);
  double sum = 0.0;
  for (size_t i = 0; i < m.l.v.size(); ++i)
    sum += double(m.l.v[i]) * m.c.v[i] * m.s.v[i];
  return sum / m.l.v.size();
}

struct MsSsimResult {
  double score = 0.0;
  int used_scales = 0;
  bool scale_reduced = false;  // image too small for the requested M
};

// Luminance enters at the coarsest scale only; contrast/structure at every
// scale. With M effectively 1 this reduces exactly to single-scale SSIM.
inline MsSsimResult ms_ssim_full(const Grid2& phi, const Grid2& theta,
                                 const MsSsimParams& p) {
  if (phi.h != theta.h || phi.w != theta.w)
    throw std::invalid_argument("ms_ssim: shape mismatch");
  int m = p.scales;
  if (m < 1 || m > static_cast<int>(p.scale_weights.size()))
    throw std::invalid_argument("ms_ssim: bad scale count");
  MsSsimResult res;
  int min_dim = std::min(phi.h, phi.w);
  while (m > 1 && (min_dim >> (m - 1)) < p.window) --m;
  res.scale_reduced = (m != p.scales);
  res.used_scales = m;
  // First m canonical weights, renormalized to sum 1.
  std::vector<double> w(p.scale_weights.begin(), p.scale_weights.begin() + m);
  double ws = 0.0;
  for (double v : w) ws += v;
  for (double& v : w) v /= ws;
  Grid2 a = phi, b = theta;
  double score = 1.0;
  for (int j = 0; j < m; ++j) {
    SsimComponentMaps cm = ssim_components(a, b, p);
    double mean = 0.0;
    if (j == m - 1) {
      for (size_t i = 0; i < cm.l.v.size(); ++i)
        mean += detail::signed_pow(double(cm.l.v[i]) * cm.c.v[i] * cm.s.v[i],
                                   w[j]);
    } else {
      for (size_t i = 0; i < cm.c.v.size(); ++i)
        mean += detail::signed_pow(double(cm.c.v[i]) * cm.s.v[i], w[j]);
    }
    mean /= cm.c.v.size();
    score *= mean;
    if (j + 1 < m) {
      a = detail::downsample2(a);
      b = detail::downsample2(b);
    }
  }
  res.score = score;
  return res;
}

inline double ms_ssim(const Grid2& phi, const Grid2& theta,
                      const MsSsimParams& p = {}) {
  return ms_ssim_full(phi, theta, p).score;
}

inline double ms_ssim(const Image& phi, const Image& theta,
                      const MsSsimParams& p = {}) {
  return ms_ssim_full(to_grayscale(phi), to_grayscale(theta), p).score;
}

// --- privacy-utility verdict -------------------------------------------------

struct JudgeThresholds {
  double eps_server = 0.05;  // S_alpha - S_beta <= eps  => utility held
  double eps_adv = 0.20;     // A_alpha - A_beta >= eps  => adversary destabilized
  double eps_gap = 0.10;     // adversary drop exceeds server drop by this much
};

struct CriterionReport {
  double s_alpha = 0, s_beta = 0, a_alpha = 0, a_beta = 0;
  JudgeThresholds thresholds;
  bool utility_held = false;
  bool adversary_destabilized = false;
  bool gap_dominates = false;

  bool verdict() const {
    return utility_held && adversary_destabilized && gap_dominates;
  }
};

inline CriterionReport judge(double s_alpha, double s_beta, double a_alpha,
                             double a_beta, JudgeThresholds th = {}) {
  CriterionReport r;
  r.s_alpha = s_alpha;
  r.s_beta = s_beta;
  r.a_alpha = a_alpha;
  r.a_beta = a_beta;
  r.thresholds = th;
  r.utility_held = (s_alpha - s_beta) <= th.eps_server;
  r.adversary_destabilized = (a_alpha - a_beta) >= th.eps_adv;
  r.gap_dominates =
      ((a_alpha - a_beta) - (s_alpha - s_beta)) >= th.eps_gap;
  return r;
}

}  // namespace splitshield
