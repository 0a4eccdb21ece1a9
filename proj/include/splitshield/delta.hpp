#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cam.hpp"
#include "image.hpp"
#include "model.hpp"

namespace splitshield {

enum class DeltaStrategy { delta_min, delta_max };
enum class DeltaMethod { black_out, blur_out };

inline std::string strategy_name(DeltaStrategy s) {
  return s == DeltaStrategy::delta_min ? "delta_min" : "delta_max";
}
inline std::string method_name(DeltaMethod m) {
  return m == DeltaMethod::black_out ? "black_out" : "blur_out";
}

struct DeltaConfig {
  DeltaStrategy strategy = DeltaStrategy::delta_min;
  DeltaMethod method = DeltaMethod::black_out;
  int iterations = 2;
  float temperature = 0.99f;   // mask threshold t in (0,1]
  int blur_intensity = 40;     // kernel width in pixels at 178-wide reference
  std::string split_position;

  void validate() const {
    if (iterations < 1)
      throw std::invalid_argument("delta: iterations must be >= 1");
    if (!(temperature > 0.0f && temperature <= 1.0f))
      throw std::invalid_argument("delta: temperature must be in (0, 1]");
    if (method == DeltaMethod::blur_out && blur_intensity < 1)
      throw std::invalid_argument("delta: blur intensity must be >= 1");
  }
};

struct ProtectedPair {
  Image original;
  Image protected_image;
  FeatureMap f_o, f_p;
  std::vector<ProtectionMask> mask_trace;
};

// Intersection of cold-server and hot-adversary CAM spaces. Pixels hot in the
// server CAM at the same threshold are explicitly removed: utility wins over
// privacy in the intersecting region. For t > 0.5 that removal is a no-op
// (1 - v >= t and v >= t cannot both hold).
inline ProtectionMask delta_min_mask(const Heatmap& server_negated,
                                     const Heatmap& adversary, float t) {
  if (server_negated.values.h != adversary.values.h ||
      server_negated.values.w != adversary.values.w)
    throw std::invalid_argument("delta_min_mask: resolution mismatch");
  ProtectionMask adv_hot = threshold(adversary, t);
  ProtectionMask srv_cold = threshold(server_negated, t);
  ProtectionMask m;
  m.threshold_used = t;
  m.bits = adv_hot.bits & srv_cold.bits;
  for (size_t i = 0; i < m.bits.v.size(); ++i)
    if (1.0f - server_negated.values.v[i] >= t) m.bits.v[i] = 0;
  return m;
}

// Everything the server's CAM is cold on.
inline ProtectionMask delta_max_mask(const Heatmap& server_negated, float t) {
  return threshold(server_negated, t);
}

inline int scaled_blur_kernel(int intensity, int image_width) {
  // intensity is calibrated to 178-wide images; scale proportionally.
  int k = static_cast<int>(std::lround(double(intensity) * image_width / 178.0));
  return std::max(1, k);
}

// Pixels outside the mask are bit-identical to the input; inside, black-out
// writes zeros and blur-out copies from a box-blurred whole-image copy.
inline Image apply_method(const Image& img, const ProtectionMask& mask,
                          DeltaMethod method, int blur_intensity = 40) {
  if (mask.bits.h != img.y || mask.bits.w != img.x)
    throw std::invalid_argument("apply_method: mask resolution mismatch");
  Image out = img;
  if (method == DeltaMethod::black_out) {
    for (int r = 0; r < img.y; ++r)
      for (int c = 0; c < img.x; ++c)
        if (mask.bits.at(r, c))
          for (int ch = 0; ch < img.z; ++ch) out.at(ch, r, c) = 0.0f;
    return out;
  }
  Image blurred = box_blur(img, scaled_blur_kernel(blur_intensity, img.x));
  for (int r = 0; r < img.y; ++r)
    for (int c = 0; c < img.x; ++c)
      if (mask.bits.at(r, c))
        for (int ch = 0; ch < img.z; ++ch)
          out.at(ch, r, c) = blurred.at(ch, r, c);
  return out;
}

// Algorithms: n mask-and-protect iterations, recomputing both CAMs on the
// progressively protected image; F_o always comes from the untouched
// original. delta_min requires an offline adversary head, delta_max forbids
// one.
inline ProtectedPair run_delta(const Image& image, SplitModel& sm,
                               nn::Sequential* offline_adversary,
                               const DeltaConfig& cfg) {
  cfg.validate();
  if (cfg.strategy == DeltaStrategy::delta_min && !offline_adversary)
    throw std::invalid_argument("run_delta: delta_min needs an offline adversary");
  if (cfg.strategy == DeltaStrategy::delta_max && offline_adversary)
    throw std::invalid_argument("run_delta: delta_max must not use an adversary");
  ProtectedPair pair;
  pair.original = image;
  pair.f_o = sm.client_feature(image);
  Composition server_comp(sm.model->net);  // C (+) S is the whole model
  Image cur = image;
  for (int it = 0; it < cfg.iterations; ++it) {
    Heatmap m_s = negate(cam(cur, server_comp, -1, "server"));
    ProtectionMask mask;
    if (cfg.strategy == DeltaStrategy::delta_min) {
      Composition adv_comp = Composition::of_split(sm, *offline_adversary);
      Heatmap m_a = cam(cur, adv_comp, -1, "offline_adversary");
      mask = delta_min_mask(m_s, m_a, cfg.temperature);
    } else {
      mask = delta_max_mask(m_s, cfg.temperature);
    }
    cur = apply_method(cur, mask, cfg.method, cfg.blur_intensity);
    pair.mask_trace.push_back(std::move(mask));
  }
  pair.protected_image = cur;
  pair.f_p = sm.client_feature(cur);
  return pair;
}

}  // namespace splitshield
