#pragma once

#include <string>
#include <vector>

#include "image.hpp"
#include "model.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace splitshield {

// Per-pixel class-activation intensity over image coordinates, normalized to
// [0,1] with max-normalization (max is exactly 1 unless the map is all-zero).
struct Heatmap {
  Grid2 values;
  std::string source_model_id;
  int target_class = -1;
  bool zero_warning = false;
};

struct ProtectionMask {
  BoolGrid bits;
  float threshold_used = 0.0f;
};

// A chain of layer ranges drawn from one or more Sequentials, e.g. the client
// prefix of a split model concatenated with an adversary head (C (+) A).
class Composition {
 public:
  struct Segment {
    nn::Sequential* net;
    size_t from, to;
  };

  Composition() = default;
  explicit Composition(nn::Sequential& whole) { append(whole); }

  void append(nn::Sequential& net, size_t from = 0, size_t to = SIZE_MAX) {
    if (to == SIZE_MAX) to = net.size();
    segs_.push_back({&net, from, to});
  }

  static Composition of_split_client(SplitModel& sm) {
    Composition c;
    c.append(sm.model->net, 0, sm.split_end);
    return c;
  }

  static Composition of_split(SplitModel& sm, nn::Sequential& head) {
    Composition c;
    c.append(sm.model->net, 0, sm.split_end);
    c.append(head);
    return c;
  }

  nn::Batch forward(const nn::Batch& x) {
    nn::Batch cur = x;
    for (auto& s : segs_) cur = s.net->forward(cur, s.from, s.to);
    return cur;
  }

  nn::Batch backward(const nn::Batch& dy) {
    nn::Batch cur = dy;
    for (size_t i = segs_.size(); i-- > 0;)
      cur = segs_[i].net->backward(cur, segs_[i].from, segs_[i].to);
    return cur;
  }

  void zero_grad() {
    for (auto& s : segs_) s.net->zero_grad();
  }

  // Gradient of a one-hot logit objective with respect to the input.
  Tensor3 gradient_wrt_input(const Image& img, int target_class) {
    nn::Batch logits = forward(nn::Batch::from_tensor(img));
    nn::Batch d(logits.n, logits.c, logits.h, logits.w);
    d.sample(0)[target_class] = 1.0f;
    zero_grad();
    return backward(d).to_tensor(0);
  }

  // Position (segment, layer) of the last convolution-like layer.
  bool last_conv(size_t* seg, size_t* layer) const {
    for (size_t i = segs_.size(); i-- > 0;)
      for (size_t j = segs_[i].to; j-- > segs_[i].from;) {
        const std::string k = segs_[i].net->layer(j).kind();
        if (k == "conv" || k == "bottleneck") {
          *seg = i;
          *layer = j;
          return true;
        }
      }
    return false;
  }

  // Forward capturing the activation emitted by layer (seg, layer).
  nn::Batch forward_capture(const nn::Batch& x, size_t seg, size_t layer,
                            nn::Batch* activation) {
    nn::Batch cur = x;
    for (size_t i = 0; i < segs_.size(); ++i) {
      if (i == seg) {
        cur = segs_[i].net->forward(cur, segs_[i].from, layer + 1);
        *activation = cur;
        cur = segs_[i].net->forward(cur, layer + 1, segs_[i].to);
      } else {
        cur = segs_[i].net->forward(cur, segs_[i].from, segs_[i].to);
      }
    }
    return cur;
  }

  // Backward stopping at the output of layer (seg, layer); returns the
  // gradient with respect to that activation.
  nn::Batch backward_to(const nn::Batch& dy, size_t seg, size_t layer) {
    nn::Batch cur = dy;
    for (size_t i = segs_.size(); i-- > 0;) {
      if (i == seg)
        return segs_[i].net->backward(cur, layer + 1, segs_[i].to);
      cur = segs_[i].net->backward(cur, segs_[i].from, segs_[i].to);
    }
    return cur;
  }

  const std::vector<Segment>& segments() const { return segs_; }

 private:
  std::vector<Segment> segs_;
};

// Gradient-weighted class activation map on the last convolutional layer of
// the composition, upsampled to image resolution and max-normalized. With
// target_class < 0 the composition's own predicted class is used.
inline Heatmap cam(const Image& img, Composition& comp, int target_class = -1,
                   const std::string& model_id = "") {
  size_t seg = 0, layer = 0;
  if (!comp.last_conv(&seg, &layer))
    throw std::runtime_error("cam: composition has no convolutional layer");
  nn::Batch activation;
  nn::Batch logits =
      comp.forward_capture(nn::Batch::from_tensor(img), seg, layer, &activation);
  if (target_class < 0)
    target_class = nn::argmax_class(logits.sample(0), logits.c);
  nn::Batch dlogits(logits.n, logits.c, logits.h, logits.w);
  dlogits.sample(0)[target_class] = 1.0f;
  comp.zero_grad();
  nn::Batch dact = comp.backward_to(dlogits, seg, layer);

  Heatmap h;
  h.source_model_id = model_id;
  h.target_class = target_class;
  // channel weights: spatial mean of the gradient
  Grid2 raw(activation.h, activation.w);
  const float inv = 1.0f / (activation.h * activation.w);
  for (int c = 0; c < activation.c; ++c) {
    double wsum = 0.0;
    for (int r = 0; r < activation.h; ++r)
      for (int col = 0; col < activation.w; ++col)
        wsum += dact.at(0, c, r, col);
    const float wk = static_cast<float>(wsum) * inv;
    for (int r = 0; r < activation.h; ++r)
      for (int col = 0; col < activation.w; ++col)
        raw.at(r, col) += wk * activation.at(0, c, r, col);
  }
  for (auto& v : raw.v) v = v > 0.0f ? v : 0.0f;  // hot = evidence for class
  Grid2 up = bilinear_resize(raw, img.y, img.x);
  float mx = 0.0f;
  for (float v : up.v) mx = std::max(mx, v);
  if (mx <= 0.0f) {
    h.values = Grid2(img.y, img.x, 0.0f);
    h.zero_warning = true;
    return h;
  }
  for (auto& v : up.v) v /= mx;
  h.values = up;
  return h;
}

inline Heatmap negate(const Heatmap& h) {
  Heatmap out = h;
  for (auto& v : out.values.v) v = 1.0f - v;
  return out;
}

inline ProtectionMask threshold(const Heatmap& h, float t) {
  if (!(t > 0.0f && t <= 1.0f))
    throw std::invalid_argument("threshold: t must be in (0, 1]");
  ProtectionMask m;
  m.threshold_used = t;
  m.bits = BoolGrid(h.values.h, h.values.w);
  for (size_t i = 0; i < h.values.v.size(); ++i)
    m.bits.v[i] = h.values.v[i] >= t ? 1 : 0;
  return m;
}

// Debug dumps: grayscale heatmap and red-tinted overlay.
inline void dump_heatmap_png(const Heatmap& h, const Image& img,
                             const std::filesystem::path& gray_path,
                             const std::filesystem::path& overlay_path) {
  Image gray(1, h.values.h, h.values.w);
  for (size_t i = 0; i < h.values.v.size(); ++i) gray.data[i] = h.values.v[i];
  write_png(gray_path, gray);
  Image overlay = img;
  for (int r = 0; r < img.y; ++r)
    for (int c = 0; c < img.x; ++c) {
      float a = 0.5f * h.values.at(r, c);
      overlay.at(0, r, c) = clamp01((1 - a) * overlay.at(0, r, c) + a);
      overlay.at(1, r, c) *= (1 - a);
      overlay.at(2, r, c) *= (1 - a);
    }
  write_png(overlay_path, overlay);
}

}  // namespace splitshield
