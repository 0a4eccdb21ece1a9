#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "delta.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace splitshield {

enum class PluginKind { adp_ae, pca };

inline std::string plugin_kind_name(PluginKind k) {
  return k == PluginKind::adp_ae ? "adp_ae" : "pca";
}

// Fitted offline; maps a feature map to a protected feature map of identical
// shape. Never touches client or server weights.
class ProtectionPlugin {
 public:
  virtual ~ProtectionPlugin() = default;
  virtual PluginKind kind() const = 0;

  std::string split_position;
  nn::Shape contract{0, 0, 0};
  bool fitted = false;

  FeatureMap apply(const FeatureMap& f) {
    if (!fitted) throw std::runtime_error("protection plugin is not fitted");
    if (f.data.z != contract.c || f.data.y != contract.h ||
        f.data.x != contract.w)
      throw std::invalid_argument("protection plugin: shape contract mismatch");
    FeatureMap out;
    out.origin_split = f.origin_split;
    out.data = apply_impl(f.data);
    return out;
  }

 protected:
  virtual Tensor3 apply_impl(const Tensor3& f) = 0;
};

// --- ADP autoencoder ---------------------------------------------------------

enum class AeVariant { decreasing, decreasing_deep, decreasing_extra_deep };

inline std::string ae_variant_name(AeVariant v) {
  switch (v) {
    case AeVariant::decreasing: return "decreasing";
    case AeVariant::decreasing_deep: return "decreasing_deep";
    case AeVariant::decreasing_extra_deep: return "decreasing_extra_deep";
  }
  return "?";
}

struct AeArchitecture {
  AeVariant variant = AeVariant::decreasing;

  int factor() const {
    switch (variant) {
      case AeVariant::decreasing: return 2;
      case AeVariant::decreasing_deep: return 4;
      case AeVariant::decreasing_extra_deep: return 8;
    }
    return 2;
  }
  int halving_steps() const {
    return variant == AeVariant::decreasing ? 1
           : variant == AeVariant::decreasing_deep ? 2
                                                   : 3;
  }
};

class AdpPlugin : public ProtectionPlugin {
 public:
  AdpPlugin(AeArchitecture arch, nn::Shape contract_, std::string split_pos,
            uint64_t seed)
      : arch_(arch) {
    contract = contract_;
    split_position = std::move(split_pos);
    const int f = arch.factor();
    if (contract_.c % f != 0)
      throw std::invalid_argument(
          "adp: feature depth " + std::to_string(contract_.c) +
          " is not divisible by " + std::to_string(f) +
          "; the " + ae_variant_name(arch.variant) +
          " architecture is unsupported at split '" + split_position + "'");
    // Encoder: one depth-halving conv per step; decoder mirrors it back.
    int ch = contract_.c;
    for (int s = 0; s < arch.halving_steps(); ++s) {
      net_.add(std::make_unique<nn::Conv2d>("enc" + std::to_string(s), ch,
                                            ch / 2, 3, 1, 1));
      net_.add(std::make_unique<nn::ReLU>("enc" + std::to_string(s) + ".relu"));
      ch /= 2;
    }
    bottleneck_depth_ = ch;
    for (int s = arch.halving_steps(); s-- > 0;) {
      net_.add(std::make_unique<nn::Conv2d>("dec" + std::to_string(s), ch,
                                            ch * 2, 3, 1, 1));
      ch *= 2;
      if (s > 0)
        net_.add(std::make_unique<nn::ReLU>("dec" + std::to_string(s) + ".relu"));
    }
    Rng rng = make_rng(derive_seed(seed, 0x616470ULL));
    net_.init(rng);
  }

  PluginKind kind() const override { return PluginKind::adp_ae; }
  AeArchitecture architecture() const { return arch_; }
  int bottleneck_depth() const { return bottleneck_depth_; }
  nn::Sequential& net() { return net_; }

  // Depth of the encoder output for a given input depth (latent contract).
  nn::Shape latent_shape() const {
    return {contract.c / arch_.factor(), contract.h, contract.w};
  }

 protected:
  Tensor3 apply_impl(const Tensor3& f) override {
    return net_.forward(nn::Batch::from_tensor(f)).to_tensor(0);
  }

 private:
  AeArchitecture arch_;
  nn::Sequential net_;
  int bottleneck_depth_ = 0;
};

struct AeTrainConfig {
  int epochs = 60;
  int batch_size = 8;
  float lr = 1e-3f;
  uint64_t seed = 0;
};

// Trains the protection mapping: original feature map in, protected feature
// map out, mean squared error between them.
inline std::vector<double> train_adp(AdpPlugin& plugin,
                                     const std::vector<ProtectedPair>& pairs,
                                     const AeTrainConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("train_adp: no pairs");
  for (const auto& p : pairs) {
    if (p.f_o.origin_split != plugin.split_position)
      throw std::invalid_argument("train_adp: pair from split '" +
                                  p.f_o.origin_split + "', plugin for '" +
                                  plugin.split_position + "'");
    if (!p.f_o.data.same_shape(p.f_p.data))
      throw std::invalid_argument("train_adp: pair shape mismatch");
  }
  nn::Adam opt;
  opt.lr = cfg.lr;
  Rng rng = make_rng(derive_seed(cfg.seed, 0x6165ULL));
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> loss_trace;
  auto& net = plugin.net();
  const auto& shape0 = pairs[0].f_o.data;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t i = 0; i < pairs.size(); i += cfg.batch_size) {
      size_t n = std::min<size_t>(cfg.batch_size, pairs.size() - i);
      nn::Batch x(static_cast<int>(n), shape0.z, shape0.y, shape0.x);
      nn::Batch target(static_cast<int>(n), shape0.z, shape0.y, shape0.x);
      for (size_t j = 0; j < n; ++j) {
        const auto& p = pairs[order[i + j]];
        std::copy(p.f_o.data.data.begin(), p.f_o.data.data.end(),
                  x.sample(static_cast<int>(j)));
        std::copy(p.f_p.data.data.begin(), p.f_p.data.data.end(),
                  target.sample(static_cast<int>(j)));
      }
      net.zero_grad();
      nn::Batch y = net.forward(x);
      nn::Batch dy(y.n, y.c, y.h, y.w);
      double loss = 0.0;
      const double inv = 1.0 / y.d.size();
      for (size_t k = 0; k < y.d.size(); ++k) {
        double diff = double(y.d[k]) - double(target.d[k]);
        loss += diff * diff * inv;
        dy.d[k] = static_cast<float>(2.0 * diff * inv);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("train_adp: non-finite loss");
      net.backward(dy);
      auto params = net.params();
      opt.step(params);
      loss_sum += loss;
      ++batches;
    }
    loss_trace.push_back(loss_sum / std::max(batches, 1));
  }
  plugin.fitted = true;
  return loss_trace;
}

// --- PCA / reduced SVD baseline ----------------------------------------------

class PcaPlugin : public ProtectionPlugin {
 public:
  PluginKind kind() const override { return PluginKind::pca; }

  Eigen::VectorXf mean;
  Eigen::MatrixXf components;  // k_max x d, orthonormal rows
  int k_max = 0;
  int k_apply = 0;

  Eigen::VectorXd singular_values;

  std::vector<double> variance_explained() const {
    std::vector<double> v;
    double total = singular_values.array().square().sum();
    for (int i = 0; i < singular_values.size(); ++i)
      v.push_back(singular_values[i] * singular_values[i] / total);
    return v;
  }

 protected:
  Tensor3 apply_impl(const Tensor3& f) override {
    if (k_apply < 1 || k_apply > k_max)
      throw std::invalid_argument("pca: k_apply out of range");
    Eigen::Map<const Eigen::VectorXf> x(f.data.data(),
                                        static_cast<long>(f.data.size()));
    Eigen::VectorXf centered = x - mean;
    // components are selected from index 0 upward
    auto C = components.topRows(k_apply);
    Eigen::VectorXf recon = mean + C.transpose() * (C * centered);
    Tensor3 out(f.z, f.y, f.x);
    Eigen::Map<Eigen::VectorXf>(out.data.data(),
                                static_cast<long>(out.data.size())) = recon;
    return out;
  }
};

// Mean-centered reduced SVD over flattened feature maps; components ordered
// by singular value, descending.
inline std::shared_ptr<PcaPlugin> fit_pca(const std::vector<FeatureMap>& maps,
                                          int k_max) {
  if (maps.size() < 2)
    throw std::invalid_argument("fit_pca: need at least 2 samples");
  const long n = static_cast<long>(maps.size());
  const long d = static_cast<long>(maps[0].flat_size());
  for (const auto& m : maps)
    if (static_cast<long>(m.flat_size()) != d ||
        m.origin_split != maps[0].origin_split)
      throw std::invalid_argument("fit_pca: inconsistent feature maps");
  Eigen::MatrixXf X(n, d);
  for (long i = 0; i < n; ++i)
    X.row(i) = Eigen::Map<const Eigen::VectorXf>(maps[i].data.data.data(), d);
  Eigen::VectorXf mean = X.colwise().mean();
  X.rowwise() -= mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXf> svd(X, Eigen::ComputeThinV);
  int rank_cap = static_cast<int>(std::min(n, d));
  int k = std::min(k_max, rank_cap);
  auto plugin = std::make_shared<PcaPlugin>();
  plugin->split_position = maps[0].origin_split;
  plugin->contract = {maps[0].data.z, maps[0].data.y, maps[0].data.x};
  plugin->mean = mean;
  plugin->components = svd.matrixV().leftCols(k).transpose();
  plugin->singular_values = svd.singularValues().head(k).cast<double>();
  plugin->k_max = k;
  plugin->k_apply = k;
  plugin->fitted = true;
  return plugin;
}

struct ComponentSweepPoint {
  int k;
  double server_acc;
  double adversary_acc;
};

// Accuracy-vs-components curve; eval_fn sees the plugin with k_apply set.
inline std::vector<ComponentSweepPoint> sweep_components(
    PcaPlugin& plugin, const std::vector<int>& ks,
    const std::function<std::pair<double, double>(PcaPlugin&)>& eval_fn) {
  std::vector<ComponentSweepPoint> curve;
  const int k_saved = plugin.k_apply;
  for (int k : ks) {
    if (k < 1 || k > plugin.k_max)
      throw std::invalid_argument("sweep_components: k out of range: " +
                                  std::to_string(k));
    plugin.k_apply = k;
    auto [s, a] = eval_fn(plugin);
    curve.push_back({k, s, a});
  }
  plugin.k_apply = k_saved;
  return curve;
}

// --- plugin serialization ----------------------------------------------------

inline void save_plugin(const std::filesystem::path& path,
                        ProtectionPlugin& plugin,
                        const std::string& fit_config_hash = "") {
  nlohmann::json header;
  header["magic"] = "splitshield-plugin-v1";
  header["kind"] = plugin_kind_name(plugin.kind());
  header["split_position"] = plugin.split_position;
  header["contract"] = {plugin.contract.c, plugin.contract.h,
                        plugin.contract.w};
  header["fit_config_hash"] = fit_config_hash;
  std::vector<float> blob;
  if (plugin.kind() == PluginKind::adp_ae) {
    auto& adp = static_cast<AdpPlugin&>(plugin);
    header["ae_variant"] = ae_variant_name(adp.architecture().variant);
    blob = adp.net().weights_flat();
  } else {
    auto& pca = static_cast<PcaPlugin&>(plugin);
    header["k_max"] = pca.k_max;
    header["k_apply"] = pca.k_apply;
    blob.insert(blob.end(), pca.mean.data(), pca.mean.data() + pca.mean.size());
    blob.insert(blob.end(), pca.components.data(),
                pca.components.data() + pca.components.size());
    for (int i = 0; i < pca.singular_values.size(); ++i)
      blob.push_back(static_cast<float>(pca.singular_values[i]));
  }
  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_plugin: cannot open " + path.string());
  uint64_t hlen = hs.size(), wlen = blob.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), hlen);
  f.write(reinterpret_cast<const char*>(&wlen), sizeof(wlen));
  f.write(reinterpret_cast<const char*>(blob.data()), wlen * sizeof(float));
}

inline std::shared_ptr<ProtectionPlugin> load_plugin(
    const std::filesystem::path& path, uint64_t seed = 0) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_plugin: cannot open " + path.string());
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.value("magic", "") != "splitshield-plugin-v1")
    throw std::runtime_error("load_plugin: bad magic");
  auto c = header["contract"];
  nn::Shape contract{c[0].get<int>(), c[1].get<int>(), c[2].get<int>()};
  uint64_t wlen = 0;
  f.read(reinterpret_cast<char*>(&wlen), sizeof(wlen));
  std::vector<float> blob(wlen);
  f.read(reinterpret_cast<char*>(blob.data()), wlen * sizeof(float));
  if (!f) throw std::runtime_error("load_plugin: truncated file");
  const std::string kind = header["kind"].get<std::string>();
  if (kind == "adp_ae") {
    AeArchitecture arch;
    const std::string v = header["ae_variant"].get<std::string>();
    arch.variant = v == "decreasing"        ? AeVariant::decreasing
                   : v == "decreasing_deep" ? AeVariant::decreasing_deep
                                            : AeVariant::decreasing_extra_deep;
    auto p = std::make_shared<AdpPlugin>(
        arch, contract, header["split_position"].get<std::string>(), seed);
    p->net().set_weights_flat(blob);
    p->fitted = true;
    return p;
  }
  auto p = std::make_shared<PcaPlugin>();
  p->split_position = header["split_position"].get<std::string>();
  p->contract = contract;
  p->k_max = header["k_max"].get<int>();
  p->k_apply = header["k_apply"].get<int>();
  const long d = static_cast<long>(contract.c) * contract.h * contract.w;
  size_t off = 0;
  p->mean = Eigen::Map<Eigen::VectorXf>(blob.data(), d);
  off += d;
  p->components = Eigen::Map<Eigen::MatrixXf>(blob.data() + off, p->k_max, d);
  off += static_cast<size_t>(p->k_max) * d;
  p->singular_values.resize(p->k_max);
  for (int i = 0; i < p->k_max; ++i)
    p->singular_values[i] = blob[off + i];
  p->fitted = true;
  return p;
}

}  // namespace splitshield
