#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cam.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "protection.hpp"

namespace splitshield {

enum class AdversaryPhase { offline, inference };  // A^o vs A^i
enum class AdversaryArch { split, full };

struct AdversaryRole {
  AdversaryPhase phase = AdversaryPhase::inference;
  AdversaryArch architecture = AdversaryArch::split;
  std::string sensitive_attribute;
};

inline std::string adversary_arch_name(AdversaryArch a) {
  return a == AdversaryArch::split ? "split" : "full";
}

// Shadow-client dataset: feature maps are computed on the fly from images and
// paired with sensitive labels; they are never persisted.
inline LabeledImages build_adversary_dataset(SplitModel& client,
                                             const LabeledImages& images) {
  LabeledImages out;
  out.labels = images.labels;
  out.images.reserve(images.size());
  for (const auto& img : images.images)
    out.images.push_back(client.client_feature(img).data);
  return out;
}

// Fresh network that accepts a feature map of the split's depth. The
// downsampling chain is chosen so the spatial size never collapses below 1;
// if even a single pool is infeasible the pool layer itself reports it.
inline nn::Sequential build_full_adversary(nn::Shape in, int num_classes,
                                           uint64_t seed) {
  nn::Sequential s;
  s.add(std::make_unique<nn::Conv2d>("fa1.conv", in.c, 16, 3, 1, 1));
  s.add(std::make_unique<nn::ReLU>("fa1"));
  nn::Shape cur = s.infer_shape(in);
  int block = 1, pool = 0;
  while (std::min(cur.h, cur.w) >= 8 && pool < 3) {
    s.add(std::make_unique<nn::MaxPool2d>("fa.pool" + std::to_string(++pool)));
    ++block;
    s.add(std::make_unique<nn::Conv2d>("fa" + std::to_string(block) + ".conv",
                                       16, 16, 3, 1, 1));
    s.add(std::make_unique<nn::ReLU>("fa" + std::to_string(block)));
    cur = s.infer_shape(in);
  }
  if (pool == 0)
    s.add(std::make_unique<nn::MaxPool2d>("fa.pool1"));  // may report collapse
  s.add(std::make_unique<nn::Flatten>("flatten"));
  cur = s.infer_shape(in);  // throws naming the offending layer if collapsed
  s.add(std::make_unique<nn::Dense>("fc", cur.c, num_classes));
  Rng rng = make_rng(derive_seed(seed, 0x66756c6cULL));
  s.init(rng);
  return s;
}

// Split architecture clones the server suffix topology with fresh weights.
inline nn::Sequential build_adversary_net(const AdversaryRole& role,
                                          SplitModel& sm, int num_classes,
                                          uint64_t seed) {
  if (role.architecture == AdversaryArch::split) {
    nn::Sequential s;
    auto& net = sm.model->net;
    for (size_t i = sm.split_end; i < net.size(); ++i)
      s.add(net.layer(i).clone_topology());
    Rng rng = make_rng(derive_seed(seed, 0x73706c6974ULL));
    s.init(rng);
    return s;
  }
  return build_full_adversary(sm.feature_shape(), num_classes, seed);
}

inline TrainTrace train_adversary(nn::Sequential& adversary,
                                  const LabeledImages& train,
                                  const LabeledImages& test,
                                  const TrainConfig& cfg) {
  return train_classifier(adversary, train, test, cfg);
}

// Accuracy of a head (adversary or server suffix) on images passed through
// client -> optional plugin -> head.
inline double evaluate_head(nn::Sequential& head, SplitModel& client,
                            ProtectionPlugin* plugin,
                            const LabeledImages& test) {
  if (plugin && plugin->split_position != client.split_position)
    throw std::invalid_argument("evaluate_head: plugin fitted at '" +
                                plugin->split_position + "', client split at '" +
                                client.split_position + "'");
  size_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    FeatureMap f = client.client_feature(test.images[i]);
    if (plugin) f = plugin->apply(f);
    nn::Batch logits = head.forward(nn::Batch::from_tensor(f.data));
    if (nn::argmax_class(logits.sample(0), logits.c) == test.labels[i])
      ++correct;
  }
  return test.size() ? double(correct) / test.size() : 0.0;
}

inline double evaluate_adversary(nn::Sequential& adversary, SplitModel& client,
                                 ProtectionPlugin* plugin,
                                 const LabeledImages& test) {
  return evaluate_head(adversary, client, plugin, test);
}

// Server accuracy through the same path, for the S_alpha/S_beta symmetry.
inline double evaluate_server(SplitModel& sm, ProtectionPlugin* plugin,
                              const LabeledImages& test) {
  if (plugin && plugin->split_position != sm.split_position)
    throw std::invalid_argument("evaluate_server: split position mismatch");
  size_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    FeatureMap f = sm.client_feature(test.images[i]);
    if (plugin) f = plugin->apply(f);
    nn::Batch logits = sm.server_forward(nn::Batch::from_tensor(f.data));
    if (nn::argmax_class(logits.sample(0), logits.c) == test.labels[i])
      ++correct;
  }
  return test.size() ? double(correct) / test.size() : 0.0;
}

// --- white-box backward reconstruction ---------------------------------------

enum class ReconInit { noise, gray };

struct ReconstructionConfig {
  int iterations = 20000;
  float step_size = 0.05f;
  float tv_weight = 1e-3f;
  ReconInit init = ReconInit::gray;
  uint64_t seed = 0;
  int image_h = 64, image_w = 64;
};

struct ReconstructionResult {
  Image image;           // best-loss iterate
  double best_loss = 0.0;
  int best_iteration = -1;
  std::vector<double> best_loss_track;  // monotone non-increasing
};

namespace detail {

// Smoothness prior: squared forward differences, both axes.
inline double tv_loss_grad(const Image& x, Tensor3& grad, float weight) {
  double tv = 0.0;
  for (int ch = 0; ch < x.z; ++ch)
    for (int r = 0; r < x.y; ++r)
      for (int c = 0; c < x.x; ++c) {
        if (c + 1 < x.x) {
          float d = x.at(ch, r, c + 1) - x.at(ch, r, c);
          tv += double(d) * d;
          grad.at(ch, r, c + 1) += weight * 2 * d;
          grad.at(ch, r, c) -= weight * 2 * d;
        }
        if (r + 1 < x.y) {
          float d = x.at(ch, r + 1, c) - x.at(ch, r, c);
          tv += double(d) * d;
          grad.at(ch, r + 1, c) += weight * 2 * d;
          grad.at(ch, r, c) -= weight * 2 * d;
        }
      }
  return weight * tv;
}

}  // namespace detail

// Iteratively fits a free image so the client maps it onto the target
// feature map, with a total-variation prior; pixels are clamped to [0,1]
// after every step and the best-loss iterate is returned.
inline ReconstructionResult reconstruct(Composition& client,
                                        const Tensor3& f_target,
                                        const ReconstructionConfig& cfg) {
  if (cfg.iterations < 1)
    throw std::invalid_argument("reconstruct: iterations must be >= 1");
  Image x(3, cfg.image_h, cfg.image_w, 0.5f);
  if (cfg.init == ReconInit::noise) {
    Rng rng = make_rng(derive_seed(cfg.seed, 0x7265636fULL));
    for (auto& v : x.data) v = uniform(rng, 0.0f, 1.0f);
  }
  nn::Adam opt;
  opt.lr = cfg.step_size;
  std::vector<float> xvec = x.data, gvec(x.data.size(), 0.0f);
  std::vector<nn::Param> params{{&xvec, &gvec}};
  ReconstructionResult res;
  res.best_loss = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.iterations; ++it) {
    x.data = xvec;
    nn::Batch f = client.forward(nn::Batch::from_tensor(x));
    if (f.d.size() != f_target.size())
      throw std::invalid_argument("reconstruct: target shape mismatch");
    double loss = 0.0;
    nn::Batch df(f.n, f.c, f.h, f.w);
    for (size_t i = 0; i < f.d.size(); ++i) {
      double d = double(f.d[i]) - double(f_target.data[i]);
      loss += d * d;
      df.d[i] = static_cast<float>(2 * d);
    }
    client.zero_grad();
    Tensor3 dx = client.backward(df).to_tensor(0);
    if (cfg.tv_weight > 0) loss += detail::tv_loss_grad(x, dx, cfg.tv_weight);
    if (!std::isfinite(loss))
      throw std::runtime_error("reconstruct: diverged (non-finite loss) at iteration " +
                               std::to_string(it));
    if (loss < res.best_loss) {
      res.best_loss = loss;
      res.best_iteration = it;
      res.image = x;
    }
    res.best_loss_track.push_back(res.best_loss);
    gvec = dx.data;
    opt.step(params);
    for (auto& v : xvec) v = clamp01(v);
  }
  return res;
}

struct ReconstructionScore {
  double msssim = 0.0;
  bool attack_succeeded = false;  // MS-SSIM above the success threshold
  Image reconstructed;
};

inline constexpr double kReconstructionSuccessThreshold = 0.35;

// Reconstructs from plugin(client(image)) when a plugin is present and scores
// the result against the original.
inline ReconstructionScore evaluate_reconstruction(
    SplitModel& sm, ProtectionPlugin* plugin, const Image& image,
    const ReconstructionConfig& cfg, const MsSsimParams& msp = {}) {
  FeatureMap f = sm.client_feature(image);
  if (plugin) f = plugin->apply(f);
  Composition client = Composition::of_split_client(sm);
  ReconstructionConfig c = cfg;
  c.image_h = image.y;
  c.image_w = image.x;
  ReconstructionResult r = reconstruct(client, f.data, c);
  ReconstructionScore score;
  score.reconstructed = r.image;
  score.msssim = ms_ssim(image, r.image, msp);
  score.attack_succeeded = score.msssim > kReconstructionSuccessThreshold;
  return score;
}

}  // namespace splitshield
