#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "splitshield/attacks.hpp"

using namespace splitshield;

namespace {

Image random_image(uint64_t seed, int size = 16) {
  Rng rng = make_rng(seed);
  Image img(3, size, size);
  for (auto& v : img.data) v = uniform(rng, 0.0f, 1.0f);
  return img;
}

}  // namespace

TEST_CASE("inverting an identity client recovers the image") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 1, {3, 16, 16}));
  auto sm = split(model, "input");
  Image img = random_image(3);
  Composition client = Composition::of_split_client(sm);
  ReconstructionConfig cfg;
  cfg.iterations = 600;
  cfg.step_size = 0.05f;
  cfg.tv_weight = 0.0f;
  cfg.image_h = 16;
  cfg.image_w = 16;
  ReconstructionResult r = reconstruct(client, img, cfg);
  REQUIRE(r.image.max_abs_diff(img) < 0.02f);
}

TEST_CASE("one-convolution inversion matches the least-squares solution") {
  // client = a single linear convolution; with no smoothing term the
  // minimizer is the ordinary least-squares preimage
  nn::Sequential net;
  net.add(std::make_unique<nn::Conv2d>("c", 3, 4, 3, 1, 1));
  Rng rng = make_rng(17);
  net.init(rng);
  const int size = 6, d = 3 * size * size;
  Image original = random_image(19, size);
  nn::Batch f = net.forward(nn::Batch::from_tensor(original));
  // dense operator column by column through the network itself
  Eigen::MatrixXf A(f.d.size(), d);
  Image basis(3, size, size, 0.0f);
  nn::Batch zero_out = net.forward(nn::Batch::from_tensor(basis));
  for (int j = 0; j < d; ++j) {
    basis.data[j] = 1.0f;
    nn::Batch col = net.forward(nn::Batch::from_tensor(basis));
    for (size_t i = 0; i < col.d.size(); ++i)
      A(i, j) = col.d[i] - zero_out.d[i];
    basis.data[j] = 0.0f;
  }
  Eigen::VectorXf b(f.d.size());
  for (size_t i = 0; i < f.d.size(); ++i) b(i) = f.d[i] - zero_out.d[i];
  Eigen::VectorXf ls = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);

  Composition client(net);
  ReconstructionConfig cfg;
  cfg.iterations = 4000;
  cfg.step_size = 0.02f;
  cfg.tv_weight = 0.0f;
  cfg.image_h = size;
  cfg.image_w = size;
  Tensor3 target = f.to_tensor(0);
  ReconstructionResult r = reconstruct(client, target, cfg);
  double num = 0, den = 0;
  for (int i = 0; i < d; ++i) {
    double diff = r.image.data[i] - ls(i);
    num += diff * diff;
    den += double(ls(i)) * ls(i);
  }
  REQUIRE(std::sqrt(num / den) < 0.01);
}

TEST_CASE("best loss never increases and marks the winning iterate") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 5, {3, 16, 16}));
  auto sm = split(model, "c2");
  Image img = random_image(7);
  FeatureMap f = sm.client_feature(img);
  Composition client = Composition::of_split_client(sm);
  ReconstructionConfig cfg;
  cfg.iterations = 200;
  cfg.image_h = 16;
  cfg.image_w = 16;
  ReconstructionResult r = reconstruct(client, f.data, cfg);
  REQUIRE(r.best_loss_track.size() == 200);
  for (size_t i = 1; i < r.best_loss_track.size(); ++i)
    REQUIRE(r.best_loss_track[i] <= r.best_loss_track[i - 1]);
  REQUIRE(r.best_loss == r.best_loss_track.back());
  REQUIRE(r.best_iteration >= 0);
  // pixels stay in range
  for (float v : r.image.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("reconstruction is deterministic for a fixed seed") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 5, {3, 16, 16}));
  auto sm = split(model, "c2");
  Image img = random_image(9);
  FeatureMap f = sm.client_feature(img);
  Composition client = Composition::of_split_client(sm);
  ReconstructionConfig cfg;
  cfg.iterations = 100;
  cfg.init = ReconInit::noise;
  cfg.seed = 4;
  cfg.image_h = 16;
  cfg.image_w = 16;
  ReconstructionResult a = reconstruct(client, f.data, cfg);
  ReconstructionResult b = reconstruct(client, f.data, cfg);
  REQUIRE(a.image.data == b.image.data);
  REQUIRE(a.best_loss == b.best_loss);
  cfg.seed = 5;
  ReconstructionResult c = reconstruct(client, f.data, cfg);
  REQUIRE(a.image.data != c.image.data);
}

TEST_CASE("reconstruction rejects malformed requests") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 5, {3, 16, 16}));
  auto sm = split(model, "c2");
  Composition client = Composition::of_split_client(sm);
  ReconstructionConfig cfg;
  cfg.image_h = 16;
  cfg.image_w = 16;
  Tensor3 wrong(1, 2, 2);
  REQUIRE_THROWS_AS(reconstruct(client, wrong, cfg), std::invalid_argument);
  cfg.iterations = 0;
  FeatureMap f = sm.client_feature(random_image(1));
  REQUIRE_THROWS_AS(reconstruct(client, f.data, cfg), std::invalid_argument);
}

TEST_CASE("split-architecture adversary mirrors the server topology") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 13, {3, 32, 32}));
  auto sm = split(model, "c4");
  AdversaryRole role;
  role.architecture = AdversaryArch::split;
  nn::Sequential adv = build_adversary_net(role, sm, 2, 99);
  auto& net = model->net;
  REQUIRE(adv.size() == net.size() - sm.split_end);
  for (size_t i = 0; i < adv.size(); ++i) {
    REQUIRE(adv.layer(i).name() == net.layer(sm.split_end + i).name());
    REQUIRE(adv.layer(i).kind() == net.layer(sm.split_end + i).kind());
  }
  // fresh weights, not the server's
  std::vector<float> server_suffix;
  std::vector<nn::Param> suffix_params;
  for (size_t i = sm.split_end; i < net.size(); ++i)
    net.layer(i).collect_params(suffix_params);
  for (auto& p : suffix_params)
    server_suffix.insert(server_suffix.end(), p.value->begin(),
                         p.value->end());
  REQUIRE(adv.weights_flat() != server_suffix);
  // same seed reproduces the same initialization
  nn::Sequential adv2 = build_adversary_net(role, sm, 2, 99);
  REQUIRE(adv.weights_flat() == adv2.weights_flat());
}

TEST_CASE("full-architecture adversary handles small feature maps") {
  nn::Sequential small = build_full_adversary({8, 4, 4}, 2, 1);
  nn::Batch x(1, 8, 4, 4);
  REQUIRE_NOTHROW(small.forward(x));
  nn::Sequential big = build_full_adversary({16, 32, 32}, 2, 1);
  nn::Batch y(1, 16, 32, 32);
  nn::Batch out = big.forward(y);
  REQUIRE(out.c == 2);
}

TEST_CASE("full adversary reports spatial collapse with the layer name") {
  try {
    build_full_adversary({8, 1, 1}, 2, 1);
    FAIL("expected a collapse error");
  } catch (const std::exception& e) {
    REQUIRE(std::string(e.what()).find("fa.pool1") != std::string::npos);
  }
}

TEST_CASE("adversary dataset pairs live feature maps with labels") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 15, {3, 16, 16}));
  auto sm = split(model, "c2");
  LabeledImages images;
  for (int i = 0; i < 4; ++i) {
    images.images.push_back(random_image(20 + i));
    images.labels.push_back(i % 2);
  }
  LabeledImages ds = build_adversary_dataset(sm, images);
  REQUIRE(ds.size() == 4);
  REQUIRE(ds.labels == images.labels);
  nn::Shape fs = sm.feature_shape();
  for (const auto& f : ds.images) {
    REQUIRE(f.z == fs.c);
    REQUIRE(f.y == fs.h);
    REQUIRE(f.x == fs.w);
  }
  FeatureMap direct = sm.client_feature(images.images[0]);
  REQUIRE(ds.images[0].max_abs_diff(direct.data) == 0.0f);
}

TEST_CASE("an adversary head learns a separable feature-space task") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 33, {3, 16, 16}));
  auto sm = split(model, "c2");
  LabeledImages images;
  for (int i = 0; i < 48; ++i) {
    Rng rng = make_rng(300 + i);
    Image img(3, 16, 16);
    int label = i % 2;
    for (auto& v : img.data)
      v = clamp01((label ? 0.8f : 0.2f) + uniform(rng, -0.1f, 0.1f));
    images.images.push_back(img);
    images.labels.push_back(label);
  }
  LabeledImages feats = build_adversary_dataset(sm, images);
  AdversaryRole role;
  role.architecture = AdversaryArch::full;
  nn::Sequential adv = build_adversary_net(role, sm, 2, 3);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 8;
  TrainTrace trace = train_adversary(adv, feats, feats, cfg);
  REQUIRE(trace.best_test_acc >= 0.9);
  double acc = evaluate_adversary(adv, sm, nullptr, images);
  REQUIRE(acc >= 0.9);
}

TEST_CASE("evaluation rejects a plugin from another split") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 15, {3, 16, 16}));
  auto sm = split(model, "c2");
  AdpPlugin plugin({AeVariant::decreasing}, {8, 8, 8}, "c4", 0);
  plugin.fitted = true;
  LabeledImages test;
  test.images.push_back(random_image(1));
  test.labels.push_back(0);
  nn::Sequential head = build_full_adversary(sm.feature_shape(), 2, 0);
  REQUIRE_THROWS_AS(evaluate_head(head, sm, &plugin, test),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(evaluate_server(sm, &plugin, test), std::invalid_argument);
}

TEST_CASE("scored reconstruction reports the similarity verdict") {
  auto model = std::make_shared<LayeredClassifier>(
      build_model(Family::micro, 2, 27, {3, 32, 32}));
  auto sm = split(model, "input");  // identity client: trivially invertible
  Rng rng = make_rng(71);
  Image img(3, 32, 32);
  // smooth image so the similarity metric rewards recovery
  Grid2 coarse(4, 4);
  for (auto& v : coarse.v) v = uniform(rng, 0.2f, 0.8f);
  Grid2 fine = bilinear_resize(coarse, 32, 32);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c) img.at(ch, r, c) = fine.at(r, c);
  ReconstructionConfig cfg;
  cfg.iterations = 400;
  cfg.tv_weight = 0.0f;
  ReconstructionScore score = evaluate_reconstruction(sm, nullptr, img, cfg);
  REQUIRE(score.msssim > kReconstructionSuccessThreshold);
  REQUIRE(score.attack_succeeded);
}
