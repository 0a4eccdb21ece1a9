#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace splitshield {
namespace nn {

using MatrixRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using CMapRM = Eigen::Map<const MatrixRM>;

// Minibatch activation tensor, N x C x H x W.
struct Batch {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> d;

  Batch() = default;
  Batch(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_),
        d(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
  float* sample(int i) { return d.data() + i * sample_size(); }
  const float* sample(int i) const { return d.data() + i * sample_size(); }
  float& at(int i, int ch, int r, int col) {
    return d[((static_cast<size_t>(i) * c + ch) * h + r) * w + col];
  }
  float at(int i, int ch, int r, int col) const {
    return d[((static_cast<size_t>(i) * c + ch) * h + r) * w + col];
  }

  static Batch from_tensor(const Tensor3& t) {
    Batch b(1, t.z, t.y, t.x);
    b.d = t.data;
    return b;
  }
  Tensor3 to_tensor(int i = 0) const {
    Tensor3 t(c, h, w);
    std::copy(sample(i), sample(i) + sample_size(), t.data.begin());
    return t;
  }
};

struct Param {
  std::vector<float>* value;
  std::vector<float>* grad;
};

struct Shape {
  int c = 0, h = 0, w = 0;
  bool operator==(const Shape&) const = default;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  virtual Shape out_shape(Shape in) const = 0;
  virtual bool differentiable() const { return true; }

  // forward caches whatever backward needs; backward returns d(loss)/d(input)
  // and accumulates parameter gradients.
  virtual Batch forward(const Batch& x) = 0;
  virtual Batch backward(const Batch& dy) = 0;

  virtual void collect_params(std::vector<Param>& out) {}
  virtual void init(Rng& rng) {}
  // Fresh layer of identical topology; weights uninitialized until init().
  virtual std::unique_ptr<Layer> clone_topology() const = 0;

 protected:
  std::string name_;
};

inline void he_init(std::vector<float>& w, int fan_in, Rng& rng) {
  const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (auto& v : w) v = gaussian(rng, 0.0f, stddev);
}

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int k, int stride, int pad)
      : Layer(std::move(name)), in_ch_(in_ch), out_ch_(out_ch), k_(k),
        stride_(stride), pad_(pad),
        w_(static_cast<size_t>(out_ch) * in_ch * k * k),
        b_(out_ch), dw_(w_.size()), db_(b_.size()) {}

  std::string kind() const override { return "conv"; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

  Shape out_shape(Shape in) const override {
    Shape o;
    o.c = out_ch_;
    o.h = (in.h + 2 * pad_ - k_) / stride_ + 1;
    o.w = (in.w + 2 * pad_ - k_) / stride_ + 1;
    if (o.h < 1 || o.w < 1)
      throw std::runtime_error("conv " + name_ + ": spatial collapse (" +
                               std::to_string(o.h) + "x" + std::to_string(o.w) +
                               ")");
    return o;
  }

  void init(Rng& rng) override {
    he_init(w_, in_ch_ * k_ * k_, rng);
    std::fill(b_.begin(), b_.end(), 0.0f);
  }

  Batch forward(const Batch& x) override {
    if (x.c != in_ch_)
      throw std::runtime_error("conv " + name_ + ": channel mismatch");
    x_ = x;
    Shape os = out_shape({x.c, x.h, x.w});
    oh_ = os.h;
    ow_ = os.w;
    Batch y(x.n, out_ch_, oh_, ow_);
    const int patch = in_ch_ * k_ * k_;
    col_.assign(static_cast<size_t>(x.n) * patch * oh_ * ow_, 0.0f);
    CMapRM W(w_.data(), out_ch_, patch);
    for (int i = 0; i < x.n; ++i) {
      float* col = col_.data() + static_cast<size_t>(i) * patch * oh_ * ow_;
      im2col(x.sample(i), x.h, x.w, col);
      MapRM C(col, patch, oh_ * ow_);
      MapRM Y(y.sample(i), out_ch_, oh_ * ow_);
      Y.noalias() = W * C;
      for (int oc = 0; oc < out_ch_; ++oc) Y.row(oc).array() += b_[oc];
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    const int patch = in_ch_ * k_ * k_;
    Batch dx(x_.n, in_ch_, x_.h, x_.w);
    CMapRM W(w_.data(), out_ch_, patch);
    MapRM dW(dw_.data(), out_ch_, patch);
    std::vector<float> dcol(static_cast<size_t>(patch) * oh_ * ow_);
    for (int i = 0; i < dy.n; ++i) {
      CMapRM dY(dy.sample(i), out_ch_, oh_ * ow_);
      CMapRM C(col_.data() + static_cast<size_t>(i) * patch * oh_ * ow_, patch,
               oh_ * ow_);
      dW.noalias() += dY * C.transpose();
      for (int oc = 0; oc < out_ch_; ++oc) db_[oc] += dY.row(oc).sum();
      MapRM dC(dcol.data(), patch, oh_ * ow_);
      dC.noalias() = W.transpose() * dY;
      col2im(dcol.data(), x_.h, x_.w, dx.sample(i));
    }
    return dx;
  }

  void collect_params(std::vector<Param>& out) override {
    out.push_back({&w_, &dw_});
    out.push_back({&b_, &db_});
  }

  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<Conv2d>(name_, in_ch_, out_ch_, k_, stride_, pad_);
  }

 private:
  void im2col(const float* x, int h, int w, float* col) const {
    const int ps = oh_ * ow_;
    for (int c = 0; c < in_ch_; ++c)
      for (int kr = 0; kr < k_; ++kr)
        for (int kc = 0; kc < k_; ++kc) {
          float* dst = col + ((static_cast<size_t>(c) * k_ + kr) * k_ + kc) * ps;
          for (int orow = 0; orow < oh_; ++orow) {
            int ir = orow * stride_ + kr - pad_;
            for (int ocol = 0; ocol < ow_; ++ocol) {
              int ic = ocol * stride_ + kc - pad_;
              dst[orow * ow_ + ocol] =
                  (ir >= 0 && ir < h && ic >= 0 && ic < w)
                      ? x[(static_cast<size_t>(c) * h + ir) * w + ic]
                      : 0.0f;
            }
          }
        }
  }

  void col2im(const float* col, int h, int w, float* x) const {
    const int ps = oh_ * ow_;
    for (int c = 0; c < in_ch_; ++c)
      for (int kr = 0; kr < k_; ++kr)
        for (int kc = 0; kc < k_; ++kc) {
          const float* src =
              col + ((static_cast<size_t>(c) * k_ + kr) * k_ + kc) * ps;
          for (int orow = 0; orow < oh_; ++orow) {
            int ir = orow * stride_ + kr - pad_;
            if (ir < 0 || ir >= h) continue;
            for (int ocol = 0; ocol < ow_; ++ocol) {
              int ic = ocol * stride_ + kc - pad_;
              if (ic < 0 || ic >= w) continue;
              x[(static_cast<size_t>(c) * h + ir) * w + ic] +=
                  src[orow * ow_ + ocol];
            }
          }
        }
  }

  int in_ch_, out_ch_, k_, stride_, pad_;
  std::vector<float> w_, b_, dw_, db_;
  Batch x_;
  std::vector<float> col_;
  int oh_ = 0, ow_ = 0;
};

class ReLU : public Layer {
 public:
  explicit ReLU(std::string name) : Layer(std::move(name)) {}
  std::string kind() const override { return "relu"; }
  Shape out_shape(Shape in) const override { return in; }

  Batch forward(const Batch& x) override {
    y_ = x;
    for (auto& v : y_.d) v = v > 0.0f ? v : 0.0f;
    return y_;
  }
  Batch backward(const Batch& dy) override {
    Batch dx = dy;
    for (size_t i = 0; i < dx.d.size(); ++i)
      if (y_.d[i] <= 0.0f) dx.d[i] = 0.0f;
    return dx;
  }
  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<ReLU>(name_);
  }

 private:
  Batch y_;
};

class MaxPool2d : public Layer {
 public:
  explicit MaxPool2d(std::string name, int k = 2)
      : Layer(std::move(name)), k_(k) {}
  std::string kind() const override { return "maxpool"; }
  Shape out_shape(Shape in) const override {
    Shape o{in.c, in.h / k_, in.w / k_};
    if (o.h < 1 || o.w < 1)
      throw std::runtime_error("maxpool " + name_ + ": spatial collapse");
    return o;
  }
  int kernel() const { return k_; }

  Batch forward(const Batch& x) override {
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = x.h / k_, ow = x.w / k_;
    Batch y(x.n, x.c, oh, ow);
    arg_.assign(y.d.size(), 0);
    size_t o = 0;
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int r = 0; r < oh; ++r)
          for (int col = 0; col < ow; ++col, ++o) {
            float best = -std::numeric_limits<float>::infinity();
            size_t besti = 0;
            for (int dr = 0; dr < k_; ++dr)
              for (int dc = 0; dc < k_; ++dc) {
                size_t idx = ((static_cast<size_t>(i) * x.c + c) * x.h +
                              r * k_ + dr) *
                                 x.w +
                             col * k_ + dc;
                if (x.d[idx] > best) {
                  best = x.d[idx];
                  besti = idx;
                }
              }
            y.d[o] = best;
            arg_[o] = besti;
          }
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch dx(dy.n, dy.c, in_h_, in_w_);
    for (size_t o = 0; o < dy.d.size(); ++o) dx.d[arg_[o]] += dy.d[o];
    return dx;
  }

  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<MaxPool2d>(name_, k_);
  }

 private:
  int k_;
  int in_h_ = 0, in_w_ = 0;
  std::vector<size_t> arg_;
};

// Global average pool, (C,H,W) -> (C,1,1).
class GlobalAvgPool : public Layer {
 public:
  explicit GlobalAvgPool(std::string name) : Layer(std::move(name)) {}
  std::string kind() const override { return "gavgpool"; }
  Shape out_shape(Shape in) const override { return {in.c, 1, 1}; }

  Batch forward(const Batch& x) override {
    in_h_ = x.h;
    in_w_ = x.w;
    Batch y(x.n, x.c, 1, 1);
    const float inv = 1.0f / (x.h * x.w);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        double s = 0.0;
        const float* p = x.sample(i) + static_cast<size_t>(c) * x.h * x.w;
        for (int j = 0; j < x.h * x.w; ++j) s += p[j];
        y.at(i, c, 0, 0) = static_cast<float>(s) * inv;
      }
    return y;
  }
  Batch backward(const Batch& dy) override {
    Batch dx(dy.n, dy.c, in_h_, in_w_);
    const float inv = 1.0f / (in_h_ * in_w_);
    for (int i = 0; i < dy.n; ++i)
      for (int c = 0; c < dy.c; ++c) {
        float g = dy.at(i, c, 0, 0) * inv;
        float* p = dx.sample(i) + static_cast<size_t>(c) * in_h_ * in_w_;
        for (int j = 0; j < in_h_ * in_w_; ++j) p[j] = g;
      }
    return dx;
  }
  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<GlobalAvgPool>(name_);
  }

 private:
  int in_h_ = 0, in_w_ = 0;
};

class Flatten : public Layer {
 public:
  explicit Flatten(std::string name) : Layer(std::move(name)) {}
  std::string kind() const override { return "flatten"; }
  Shape out_shape(Shape in) const override { return {in.c * in.h * in.w, 1, 1}; }

  Batch forward(const Batch& x) override {
    c_ = x.c;
    h_ = x.h;
    w_ = x.w;
    Batch y(x.n, x.c * x.h * x.w, 1, 1);
    y.d = x.d;
    return y;
  }
  Batch backward(const Batch& dy) override {
    Batch dx(dy.n, c_, h_, w_);
    dx.d = dy.d;
    return dx;
  }
  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<Flatten>(name_);
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
};

class Dense : public Layer {
 public:
  Dense(std::string name, int in, int out)
      : Layer(std::move(name)), in_(in), out_(out),
        w_(static_cast<size_t>(out) * in), b_(out), dw_(w_.size()),
        db_(b_.size()) {}

  std::string kind() const override { return "dense"; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Shape out_shape(Shape in) const override {
    if (in.c * in.h * in.w != in_)
      throw std::runtime_error("dense " + name_ + ": expected " +
                               std::to_string(in_) + " inputs, got " +
                               std::to_string(in.c * in.h * in.w));
    return {out_, 1, 1};
  }

  void init(Rng& rng) override {
    he_init(w_, in_, rng);
    std::fill(b_.begin(), b_.end(), 0.0f);
  }

  Batch forward(const Batch& x) override {
    x_ = x;
    Batch y(x.n, out_, 1, 1);
    CMapRM W(w_.data(), out_, in_);
    CMapRM X(x.d.data(), x.n, in_);
    MapRM Y(y.d.data(), x.n, out_);
    Y.noalias() = X * W.transpose();
    for (int i = 0; i < x.n; ++i)
      for (int o = 0; o < out_; ++o) Y(i, o) += b_[o];
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch dx(x_.n, x_.c, x_.h, x_.w);
    CMapRM W(w_.data(), out_, in_);
    CMapRM X(x_.d.data(), x_.n, in_);
    CMapRM dY(dy.d.data(), dy.n, out_);
    MapRM dW(dw_.data(), out_, in_);
    MapRM dX(dx.d.data(), dx.n, in_);
    dW.noalias() += dY.transpose() * X;
    for (int i = 0; i < dy.n; ++i)
      for (int o = 0; o < out_; ++o) db_[o] += dY(i, o);
    dX.noalias() = dY * W;
    return dx;
  }

  void collect_params(std::vector<Param>& out) override {
    out.push_back({&w_, &dw_});
    out.push_back({&b_, &db_});
  }
  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<Dense>(name_, in_, out_);
  }

 private:
  int in_, out_;
  std::vector<float> w_, b_, dw_, db_;
  Batch x_;
};

// Residual bottleneck block (1x1 reduce, 3x3, 1x1 expand, skip add, ReLU).
class Bottleneck : public Layer {
 public:
  Bottleneck(std::string name, int in_ch, int mid_ch, int out_ch, int stride)
      : Layer(std::move(name)), in_ch_(in_ch), mid_ch_(mid_ch),
        out_ch_(out_ch), stride_(stride) {
    c1_ = std::make_unique<Conv2d>(name_ + ".c1", in_ch, mid_ch, 1, 1, 0);
    r1_ = std::make_unique<ReLU>(name_ + ".r1");
    c2_ = std::make_unique<Conv2d>(name_ + ".c2", mid_ch, mid_ch, 3, stride, 1);
    r2_ = std::make_unique<ReLU>(name_ + ".r2");
    c3_ = std::make_unique<Conv2d>(name_ + ".c3", mid_ch, out_ch, 1, 1, 0);
    if (in_ch != out_ch || stride != 1)
      proj_ = std::make_unique<Conv2d>(name_ + ".proj", in_ch, out_ch, 1,
                                       stride, 0);
  }

  std::string kind() const override { return "bottleneck"; }
  Shape out_shape(Shape in) const override {
    Shape s = c1_->out_shape(in);
    s = c2_->out_shape(s);
    return c3_->out_shape(s);
  }

  void init(Rng& rng) override {
    c1_->init(rng);
    c2_->init(rng);
    c3_->init(rng);
    if (proj_) proj_->init(rng);
  }

  Batch forward(const Batch& x) override {
    Batch skip = proj_ ? proj_->forward(x) : x;
    Batch y = c3_->forward(r2_->forward(c2_->forward(r1_->forward(c1_->forward(x)))));
    for (size_t i = 0; i < y.d.size(); ++i) y.d[i] += skip.d[i];
    relu_mask_.assign(y.d.size(), 0);
    for (size_t i = 0; i < y.d.size(); ++i) {
      if (y.d[i] > 0.0f)
        relu_mask_[i] = 1;
      else
        y.d[i] = 0.0f;
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch g = dy;
    for (size_t i = 0; i < g.d.size(); ++i)
      if (!relu_mask_[i]) g.d[i] = 0.0f;
    Batch dmain =
        c1_->backward(r1_->backward(c2_->backward(r2_->backward(c3_->backward(g)))));
    Batch dskip = proj_ ? proj_->backward(g) : g;
    for (size_t i = 0; i < dmain.d.size(); ++i) dmain.d[i] += dskip.d[i];
    return dmain;
  }

  void collect_params(std::vector<Param>& out) override {
    c1_->collect_params(out);
    c2_->collect_params(out);
    c3_->collect_params(out);
    if (proj_) proj_->collect_params(out);
  }

  std::unique_ptr<Layer> clone_topology() const override {
    return std::make_unique<Bottleneck>(name_, in_ch_, mid_ch_, out_ch_,
                                        stride_);
  }

 private:
  int in_ch_, mid_ch_, out_ch_, stride_;
  std::unique_ptr<Conv2d> c1_, c2_, c3_, proj_;
  std::unique_ptr<ReLU> r1_, r2_;
  std::vector<uint8_t> relu_mask_;
};

// Ordered, uniquely named layer stack. Backbone of classifiers, adversaries
// and autoencoders alike.
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  void add(std::unique_ptr<Layer> l) {
    for (const auto& e : layers_)
      if (e->name() == l->name())
        throw std::invalid_argument("duplicate layer name: " + l->name());
    layers_.push_back(std::move(l));
  }

  size_t size() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }
  const Layer& layer(size_t i) const { return *layers_[i]; }

  int index_of(const std::string& name) const {
    for (size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i]->name() == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<std::string> layer_names() const {
    std::vector<std::string> v;
    v.reserve(layers_.size());
    for (const auto& l : layers_) v.push_back(l->name());
    return v;
  }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  // Forward through layers [from, to). Layer output caches are retained so a
  // following backward() can run.
  Batch forward(const Batch& x, size_t from = 0, size_t to = SIZE_MAX) {
    if (to == SIZE_MAX) to = layers_.size();
    Batch cur = x;
    for (size_t i = from; i < to; ++i) cur = layers_[i]->forward(cur);
    return cur;
  }

  // Backward through layers [from, to) in reverse; returns gradient at the
  // input of layer `from`.
  Batch backward(const Batch& dy, size_t from = 0, size_t to = SIZE_MAX) {
    if (to == SIZE_MAX) to = layers_.size();
    Batch cur = dy;
    for (size_t i = to; i-- > from;) cur = layers_[i]->backward(cur);
    return cur;
  }

  std::vector<Param> params() {
    std::vector<Param> v;
    for (auto& l : layers_) l->collect_params(v);
    return v;
  }

  void zero_grad() {
    for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
  }

  std::vector<float> weights_flat() {
    std::vector<float> v;
    for (auto& p : params()) v.insert(v.end(), p.value->begin(), p.value->end());
    return v;
  }

  void set_weights_flat(const std::vector<float>& v) {
    size_t off = 0;
    for (auto& p : params()) {
      if (off + p.value->size() > v.size())
        throw std::invalid_argument("weight blob too small");
      std::copy(v.begin() + off, v.begin() + off + p.value->size(),
                p.value->begin());
      off += p.value->size();
    }
    if (off != v.size())
      throw std::invalid_argument("weight blob size mismatch");
  }

  Sequential clone_topology() const {
    Sequential s;
    for (const auto& l : layers_) s.add(l->clone_topology());
    return s;
  }

  Sequential deep_copy() const {
    Sequential s = clone_topology();
    auto* self = const_cast<Sequential*>(this);
    s.set_weights_flat(self->weights_flat());
    return s;
  }

  Shape infer_shape(Shape in, size_t from = 0, size_t to = SIZE_MAX) const {
    if (to == SIZE_MAX) to = layers_.size();
    for (size_t i = from; i < to; ++i) in = layers_[i]->out_shape(in);
    return in;
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct Adam {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  long t = 0;
  std::vector<std::vector<float>> m, v;

  void step(std::vector<Param>& params) {
    if (m.empty()) {
      for (auto& p : params) {
        m.emplace_back(p.value->size(), 0.0f);
        v.emplace_back(p.value->size(), 0.0f);
      }
    }
    ++t;
    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& val = *params[pi].value;
      auto& g = *params[pi].grad;
      for (size_t i = 0; i < val.size(); ++i) {
        m[pi][i] = beta1 * m[pi][i] + (1 - beta1) * g[i];
        v[pi][i] = beta2 * v[pi][i] + (1 - beta2) * g[i] * g[i];
        val[i] -= lr * (m[pi][i] / bc1) /
                  (std::sqrt(v[pi][i] / bc2) + eps);
      }
    }
  }
};

// Softmax cross-entropy; returns mean loss and writes d(loss)/d(logits).
inline double softmax_ce(const Batch& logits, const std::vector<int>& labels,
                         Batch* dlogits) {
  const int n = logits.n, k = logits.c;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("label count mismatch");
  if (dlogits) *dlogits = Batch(n, k, 1, 1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.sample(i);
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(double(row[j]) - mx);
    loss -= (double(row[labels[i]]) - mx) - std::log(denom);
    if (dlogits) {
      for (int j = 0; j < k; ++j) {
        double p = std::exp(double(row[j]) - mx) / denom;
        dlogits->sample(i)[j] =
            static_cast<float>((p - (j == labels[i] ? 1.0 : 0.0)) / n);
      }
    }
  }
  return loss / n;
}

// Ties in logits break toward class 0.
inline int argmax_class(const float* logits, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (logits[j] > logits[best]) best = j;
  return best;
}

}  // namespace nn
}  // namespace splitshield
