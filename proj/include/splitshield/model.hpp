#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "hash.hpp"
#include "image.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace splitshield {

enum class Family { micro, vgg_like, resnet_like };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::micro: return "micro";
    case Family::vgg_like: return "vgg_like";
    case Family::resnet_like: return "resnet_like";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "micro") return Family::micro;
  if (s == "vgg_like") return Family::vgg_like;
  if (s == "resnet_like") return Family::resnet_like;
  throw std::invalid_argument("unknown model family: " + s);
}

// An ordered layered classifier. Split positions name a layer; the client
// half is everything up to and including that layer.
struct LayeredClassifier {
  Family family = Family::micro;
  int num_classes = 2;
  nn::Shape input_shape{3, 64, 64};
  uint64_t seed = 0;
  nn::Sequential net;
  std::vector<std::string> canonical_splits;

  nn::Batch forward(const nn::Batch& x) { return net.forward(x); }

  std::string weights_checksum() { return sha256_hex(net.weights_flat()); }
};

namespace detail {

inline void add_conv_block(nn::Sequential& s, const std::string& name,
                           int in_ch, int out_ch, int k = 3, int stride = 1,
                           int pad = 1) {
  s.add(std::make_unique<nn::Conv2d>(name + ".conv", in_ch, out_ch, k, stride,
                                     pad));
  // The block's public name sits on its activation, so splitting at the name
  // is post-activation.
  s.add(std::make_unique<nn::ReLU>(name));
}

inline LayeredClassifier build_micro(int num_classes, nn::Shape input) {
  LayeredClassifier m;
  m.family = Family::micro;
  m.num_classes = num_classes;
  m.input_shape = input;
  auto& s = m.net;
  add_conv_block(s, "c1", 3, 8);
  s.add(std::make_unique<nn::MaxPool2d>("pool1"));
  add_conv_block(s, "c2", 8, 8);
  add_conv_block(s, "c3", 8, 16);
  s.add(std::make_unique<nn::MaxPool2d>("pool2"));
  add_conv_block(s, "c4", 16, 16);
  add_conv_block(s, "c5", 16, 16);
  s.add(std::make_unique<nn::MaxPool2d>("pool3"));
  add_conv_block(s, "c6", 16, 32);
  // global-average head keeps the class evidence spatially localized
  s.add(std::make_unique<nn::GlobalAvgPool>("gap"));
  s.add(std::make_unique<nn::Flatten>("flatten"));
  s.add(std::make_unique<nn::Dense>("fc", 32, num_classes));
  m.canonical_splits = {"c2", "c4", "c6"};
  return m;
}

inline LayeredClassifier build_vgg_like(int num_classes, nn::Shape input) {
  LayeredClassifier m;
  m.family = Family::vgg_like;
  m.num_classes = num_classes;
  m.input_shape = input;
  auto& s = m.net;
  const int ch[13] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512,
                      512, 512};
  int in = 3, pool = 0;
  for (int i = 0; i < 13; ++i) {
    char name[8];
    std::snprintf(name, sizeof(name), "Conv%02d", i + 1);
    add_conv_block(s, name, in, ch[i]);
    in = ch[i];
    if (i == 1 || i == 3 || i == 6 || i == 9 || i == 12)
      s.add(std::make_unique<nn::MaxPool2d>("pool" + std::to_string(++pool)));
  }
  s.add(std::make_unique<nn::Flatten>("flatten"));
  nn::Shape fs = s.infer_shape(input);
  s.add(std::make_unique<nn::Dense>("fc1", fs.c, 256));
  s.add(std::make_unique<nn::ReLU>("fc1.relu"));
  s.add(std::make_unique<nn::Dense>("fc2", 256, num_classes));
  m.canonical_splits = {"Conv04", "Conv08", "Conv12"};
  return m;
}

inline LayeredClassifier build_resnet_like(int num_classes, nn::Shape input) {
  LayeredClassifier m;
  m.family = Family::resnet_like;
  m.num_classes = num_classes;
  m.input_shape = input;
  auto& s = m.net;
  s.add(std::make_unique<nn::Conv2d>("stem.conv", 3, 64, 7, 2, 3));
  s.add(std::make_unique<nn::ReLU>("stem"));
  s.add(std::make_unique<nn::MaxPool2d>("stem.pool"));
  // ResNet50 stage layout: 3+4+6+3 bottleneck blocks, numbered through.
  const int blocks[4] = {3, 4, 6, 3};
  const int mid[4] = {64, 128, 256, 512};
  int in = 64, bonk = 0;
  for (int stage = 0; stage < 4; ++stage) {
    int out = mid[stage] * 4;
    for (int b = 0; b < blocks[stage]; ++b) {
      char name[8];
      std::snprintf(name, sizeof(name), "Bonk%02d", ++bonk);
      int stride = (b == 0 && stage > 0) ? 2 : 1;
      s.add(std::make_unique<nn::Bottleneck>(name, in, mid[stage], out,
                                             stride));
      in = out;
    }
  }
  s.add(std::make_unique<nn::GlobalAvgPool>("gap"));
  s.add(std::make_unique<nn::Flatten>("flatten"));
  s.add(std::make_unique<nn::Dense>("fc", in, num_classes));
  m.canonical_splits = {"Bonk04", "Bonk08", "Bonk12"};
  return m;
}

}  // namespace detail

inline LayeredClassifier build_model(Family family, int num_classes,
                                     uint64_t seed,
                                     nn::Shape input = {3, 64, 64}) {
  if (num_classes < 2)
    throw std::invalid_argument("build_model: num_classes must be >= 2");
  LayeredClassifier m;
  switch (family) {
    case Family::micro: m = detail::build_micro(num_classes, input); break;
    case Family::vgg_like:
      m = detail::build_vgg_like(num_classes, input);
      break;
    case Family::resnet_like:
      m = detail::build_resnet_like(num_classes, input);
      break;
    default: throw std::invalid_argument("build_model: unknown family");
  }
  m.seed = seed;
  Rng rng = make_rng(derive_seed(seed, 0x6d6f64656cULL));
  m.net.init(rng);
  return m;
}

// Client prefix / server suffix view over a shared classifier. Weights are
// shared, so server(client(x)) is bit-identical to the un-split forward.
struct SplitModel {
  std::shared_ptr<LayeredClassifier> model;
  std::string split_position;
  int split_end = 0;  // client = layers [0, split_end), server = [split_end, N)

  nn::Batch client_forward(const nn::Batch& x) {
    return model->net.forward(x, 0, split_end);
  }
  nn::Batch server_forward(const nn::Batch& f) {
    return model->net.forward(f, split_end, SIZE_MAX);
  }

  FeatureMap client_feature(const Image& img) {
    nn::Batch y = client_forward(nn::Batch::from_tensor(img));
    return FeatureMap{y.to_tensor(0), split_position};
  }

  nn::Shape feature_shape() const {
    return model->net.infer_shape(model->input_shape, 0, split_end);
  }
};

inline SplitModel split(std::shared_ptr<LayeredClassifier> model,
                        const std::string& position) {
  SplitModel sm;
  sm.model = std::move(model);
  sm.split_position = position;
  if (position == "input") {
    sm.split_end = 0;
    return sm;
  }
  int idx = sm.model->net.index_of(position);
  if (idx < 0) {
    std::string msg = "invalid split position '" + position +
                      "'; valid boundaries: input";
    for (const auto& n : sm.model->net.layer_names()) msg += ", " + n;
    throw std::invalid_argument(msg);
  }
  sm.split_end = idx + 1;
  return sm;
}

struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;

  size_t size() const { return images.size(); }
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  float lr = 1e-3f;
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch;
  double train_acc;
  double test_acc;
  double train_loss;
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_test_acc = 0.0;
};

inline double eval_accuracy(nn::Sequential& net, const LabeledImages& ds,
                            int batch_size = 32) {
  if (ds.size() == 0) return 0.0;
  size_t correct = 0;
  for (size_t i = 0; i < ds.size(); i += batch_size) {
    size_t n = std::min<size_t>(batch_size, ds.size() - i);
    nn::Batch x(static_cast<int>(n), ds.images[i].z, ds.images[i].y,
                ds.images[i].x);
    for (size_t j = 0; j < n; ++j)
      std::copy(ds.images[i + j].data.begin(), ds.images[i + j].data.end(),
                x.sample(static_cast<int>(j)));
    nn::Batch logits = net.forward(x);
    for (size_t j = 0; j < n; ++j)
      if (nn::argmax_class(logits.sample(static_cast<int>(j)), logits.c) ==
          ds.labels[i + j])
        ++correct;
  }
  return double(correct) / double(ds.size());
}

// Trains in place; restores the best-epoch weights (by held-out accuracy)
// before returning. epochs=0 leaves the model untouched.
inline TrainTrace train_classifier(nn::Sequential& net,
                                   const LabeledImages& train,
                                   const LabeledImages& test,
                                   const TrainConfig& cfg) {
  TrainTrace trace;
  if (cfg.epochs == 0) return trace;
  nn::Adam opt;
  opt.lr = cfg.lr;
  Rng rng = make_rng(derive_seed(cfg.seed, 0x747261696eULL));
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<float> best_weights;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t i = 0; i < train.size(); i += cfg.batch_size) {
      size_t n = std::min<size_t>(cfg.batch_size, train.size() - i);
      nn::Batch x(static_cast<int>(n), train.images[0].z, train.images[0].y,
                  train.images[0].x);
      std::vector<int> labels(n);
      for (size_t j = 0; j < n; ++j) {
        const auto& img = train.images[order[i + j]];
        std::copy(img.data.begin(), img.data.end(),
                  x.sample(static_cast<int>(j)));
        labels[j] = train.labels[order[i + j]];
      }
      net.zero_grad();
      nn::Batch logits = net.forward(x);
      nn::Batch dlogits;
      double loss = nn::softmax_ce(logits, labels, &dlogits);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_classifier: non-finite loss at epoch " +
                                 std::to_string(e) + ", batch " +
                                 std::to_string(batches));
      net.backward(dlogits);
      auto params = net.params();
      opt.step(params);
      loss_sum += loss;
      ++batches;
    }
    EpochStats st;
    st.epoch = e;
    st.train_loss = loss_sum / std::max(batches, 1);
    st.train_acc = eval_accuracy(net, train);
    st.test_acc = eval_accuracy(net, test);
    trace.epochs.push_back(st);
    if (trace.best_epoch < 0 || st.test_acc > trace.best_test_acc) {
      trace.best_epoch = e;
      trace.best_test_acc = st.test_acc;
      best_weights = net.weights_flat();
    }
  }
  if (!best_weights.empty()) net.set_weights_flat(best_weights);
  return trace;
}

// d(objective)/d(input) where the objective is a differentiable function of
// the logits. The closure receives logits and fills d(objective)/d(logits).
inline Tensor3 gradient_wrt_input(
    nn::Sequential& net, const Image& img,
    const std::function<void(const nn::Batch&, nn::Batch&)>& objective_grad) {
  nn::Batch x = nn::Batch::from_tensor(img);
  nn::Batch logits = net.forward(x);
  nn::Batch dlogits(logits.n, logits.c, logits.h, logits.w);
  objective_grad(logits, dlogits);
  net.zero_grad();
  nn::Batch dx = net.backward(dlogits);
  return dx.to_tensor(0);
}

// Convenience: gradient of a single class logit.
inline Tensor3 gradient_of_logit(nn::Sequential& net, const Image& img,
                                 int target_class) {
  return gradient_wrt_input(net, img,
                            [target_class](const nn::Batch& logits,
                                           nn::Batch& d) {
                              std::fill(d.d.begin(), d.d.end(), 0.0f);
                              d.sample(0)[target_class] = 1.0f;
                            });
}

// --- checkpoint container ----------------------------------------------------

inline void save_checkpoint(const std::filesystem::path& path,
                            LayeredClassifier& m,
                            const std::string& train_config_hash = "") {
  nlohmann::json header;
  header["magic"] = "splitshield-checkpoint-v1";
  header["family"] = family_name(m.family);
  header["num_classes"] = m.num_classes;
  header["input"] = {m.input_shape.c, m.input_shape.h, m.input_shape.w};
  header["layers"] = m.net.layer_names();
  header["seed"] = m.seed;
  header["train_config_hash"] = train_config_hash;
  std::string hs = header.dump();
  std::vector<float> w = m.net.weights_flat();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " +
                                   path.string());
  uint64_t hlen = hs.size(), wlen = w.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), hlen);
  f.write(reinterpret_cast<const char*>(&wlen), sizeof(wlen));
  f.write(reinterpret_cast<const char*>(w.data()), wlen * sizeof(float));
}

inline LayeredClassifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " +
                                   path.string());
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("magic", "") != "splitshield-checkpoint-v1")
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  auto input = header["input"];
  LayeredClassifier m = build_model(
      family_from_name(header["family"].get<std::string>()),
      header["num_classes"].get<int>(), header["seed"].get<uint64_t>(),
      {input[0].get<int>(), input[1].get<int>(), input[2].get<int>()});
  if (m.net.layer_names() != header["layers"].get<std::vector<std::string>>())
    throw std::runtime_error("load_checkpoint: layer names do not match");
  uint64_t wlen = 0;
  f.read(reinterpret_cast<char*>(&wlen), sizeof(wlen));
  std::vector<float> w(wlen);
  f.read(reinterpret_cast<char*>(w.data()), wlen * sizeof(float));
  if (!f) throw std::runtime_error("load_checkpoint: truncated file");
  m.net.set_weights_flat(w);
  return m;
}

}  // namespace splitshield
