#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hash.hpp"
#include "image.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace splitshield {

// Attribute-annotated image corpus (CelebA-style): images plus a {0,1} table,
// one row per image, one column per attribute.
struct Corpus {
  std::vector<std::string> ids;
  std::vector<Image> images;
  std::vector<std::string> attribute_names;
  std::vector<std::vector<int>> labels;  // labels[i][a] in {0,1}

  int attr_index(const std::string& name) const {
    for (size_t a = 0; a < attribute_names.size(); ++a)
      if (attribute_names[a] == name) return static_cast<int>(a);
    throw std::invalid_argument("unknown attribute: " + name);
  }
};

enum class DatasetRole { primary, sensitive, delta };
enum class Partition { train, test };

struct AttributeDataset {
  std::vector<std::string> ids;
  LabeledImages data;
  std::string attribute_name;
  DatasetRole role = DatasetRole::primary;
  Partition partition = Partition::train;

  size_t size() const { return ids.size(); }
};

// --- attribute CSV ingestion -------------------------------------------------

// CelebA list_attr format: optional leading count line, header row of
// attribute names, then "<image_id> v v v ..." rows with v in {-1, 1}.
// Values are normalized to {0, 1}.
inline Corpus load_corpus(const std::filesystem::path& image_dir,
                          const std::filesystem::path& attr_csv) {
  std::ifstream f(attr_csv);
  if (!f) throw std::runtime_error("cannot open " + attr_csv.string());
  Corpus corpus;
  std::string line;
  // header (skip a bare sample-count line if present)
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) {
      if (!t.empty() && t.back() == ',') t.pop_back();
      if (!t.empty()) toks.push_back(t);
    }
    if (toks.empty()) continue;
    if (toks.size() == 1 &&
        toks[0].find_first_not_of("0123456789") == std::string::npos)
      continue;  // count line
    corpus.attribute_names = toks;
    break;
  }
  if (corpus.attribute_names.empty())
    throw std::runtime_error("attribute CSV has no header row");
  while (std::getline(f, line)) {
    for (auto& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ss(line);
    std::string id;
    if (!(ss >> id)) continue;
    std::vector<int> row;
    int v;
    while (ss >> v) row.push_back(v == 1 ? 1 : 0);
    if (row.size() != corpus.attribute_names.size())
      throw std::runtime_error("attribute row for " + id +
                               " has wrong column count");
    corpus.ids.push_back(id);
    corpus.labels.push_back(std::move(row));
    corpus.images.push_back(read_png(image_dir / (id.ends_with(".png")
                                                      ? id
                                                      : id + ".png")));
  }
  return corpus;
}

// --- balanced sampling -------------------------------------------------------

namespace detail {

inline std::vector<size_t> class_indices(const Corpus& corpus, int attr,
                                         int label) {
  std::vector<size_t> v;
  for (size_t i = 0; i < corpus.ids.size(); ++i)
    if (corpus.labels[i][attr] == label) v.push_back(i);
  return v;
}

}  // namespace detail

// Evenly selects n_train + n_test binary samples without replacement;
// train/test identifier sets are disjoint by construction.
inline std::pair<AttributeDataset, AttributeDataset> sample_balanced(
    const Corpus& corpus, const std::string& attribute, int n_train,
    int n_test, uint64_t seed, DatasetRole role = DatasetRole::primary) {
  if (n_train % 2 || n_test % 2)
    throw std::invalid_argument("sample_balanced: n_train and n_test must be even");
  int attr = corpus.attr_index(attribute);
  auto pos = detail::class_indices(corpus, attr, 1);
  auto neg = detail::class_indices(corpus, attr, 0);
  const size_t need = static_cast<size_t>(n_train + n_test) / 2;
  if (pos.size() < need || neg.size() < need)
    throw std::runtime_error("sample_balanced: insufficient samples for '" +
                             attribute + "' (need " + std::to_string(need) +
                             " per class, have " + std::to_string(pos.size()) +
                             "/" + std::to_string(neg.size()) + ")");
  Rng rng = make_rng(derive_seed(seed, std::hash<std::string>{}(attribute)));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  auto take = [&](size_t from_pos, size_t from_neg, size_t half,
                  Partition part) {
    AttributeDataset ds;
    ds.attribute_name = attribute;
    ds.role = role;
    ds.partition = part;
    for (size_t j = 0; j < half; ++j) {
      for (size_t idx : {pos[from_pos + j], neg[from_neg + j]}) {
        ds.ids.push_back(corpus.ids[idx]);
        ds.data.images.push_back(corpus.images[idx]);
        ds.data.labels.push_back(corpus.labels[idx][attr]);
      }
    }
    return ds;
  };
  const size_t ht = n_train / 2;
  return {take(0, 0, ht, Partition::train),
          take(ht, ht, n_test / 2, Partition::test)};
}

// Aggregates n evenly selected binary samples over one or more attributes.
// Identifiers in `exclude` (typically the test partitions) are never chosen.
inline AttributeDataset build_delta_dataset(
    const Corpus& corpus, const std::vector<std::string>& attributes, int n,
    uint64_t seed, const std::set<std::string>& exclude = {}) {
  if (attributes.empty())
    throw std::invalid_argument("build_delta_dataset: no attributes");
  if (n % static_cast<int>(2 * attributes.size()) != 0)
    throw std::invalid_argument(
        "build_delta_dataset: n must divide evenly across attributes and labels");
  AttributeDataset ds;
  ds.attribute_name = attributes[0];
  ds.role = DatasetRole::delta;
  ds.partition = Partition::train;
  const int per_class = n / static_cast<int>(2 * attributes.size());
  Rng rng = make_rng(derive_seed(seed, 0x64656c7461ULL));
  for (const auto& attribute : attributes) {
    int attr = corpus.attr_index(attribute);
    for (int label : {1, 0}) {
      auto idxs = detail::class_indices(corpus, attr, label);
      std::erase_if(idxs, [&](size_t i) {
        return exclude.count(corpus.ids[i]) != 0;
      });
      if (idxs.size() < static_cast<size_t>(per_class))
        throw std::runtime_error(
            "build_delta_dataset: insufficient samples for '" + attribute +
            "' class " + std::to_string(label));
      std::shuffle(idxs.begin(), idxs.end(), rng);
      for (int j = 0; j < per_class; ++j) {
        size_t i = idxs[j];
        ds.ids.push_back(corpus.ids[i]);
        ds.data.images.push_back(corpus.images[i]);
        ds.data.labels.push_back(label);
      }
    }
  }
  return ds;
}

// --- synthetic corpus --------------------------------------------------------

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)

  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
  int area() const { return (x1 - x0) * (y1 - y0); }
};

inline int rect_gap(const PixelRect& a, const PixelRect& b) {
  int dx = std::max({a.x0 - b.x1, b.x0 - a.x1, 0});
  int dy = std::max({a.y0 - b.y1, b.y0 - a.y1, 0});
  // gap along at least one axis; 0 means overlap or touching
  return std::max(dx, dy);
}

// Desk-scale stand-in corpus: the primary attribute is determined solely by
// pixels in primary_region, the sensitive attribute solely by
// sensitive_region, with smooth background noise elsewhere. Regions must be
// disjoint with a margin so hot CAM regions are separable by construction.
struct SyntheticSpec {
  int image_size = 64;
  PixelRect primary_region{6, 18, 28, 46};
  PixelRect sensitive_region{36, 18, 58, 46};
  float background_amplitude = 0.12f;
  uint64_t seed = 0;

  void validate() const {
    if (image_size < 16) throw std::invalid_argument("image_size too small");
    if (rect_gap(primary_region, sensitive_region) < 4)
      throw std::invalid_argument(
          "primary and sensitive regions must be disjoint with >= 4 px margin");
  }

  std::string hash() const {
    nlohmann::json j = {{"image_size", image_size},
                        {"primary",
                         {primary_region.x0, primary_region.y0,
                          primary_region.x1, primary_region.y1}},
                        {"sensitive",
                         {sensitive_region.x0, sensitive_region.y0,
                          sensitive_region.x1, sensitive_region.y1}},
                        {"bg", background_amplitude},
                        {"seed", seed}};
    return sha256_hex(j.dump());
  }
};

namespace detail {

// Smooth background: a coarse random grid upsampled bilinearly, per channel.
inline void paint_background(Image& img, float amplitude, Rng& rng) {
  for (int ch = 0; ch < 3; ++ch) {
    Grid2 coarse(4, 4);
    for (auto& v : coarse.v) v = uniform(rng, -amplitude, amplitude);
    Grid2 fine = bilinear_resize(coarse, img.y, img.x);
    for (int r = 0; r < img.y; ++r)
      for (int c = 0; c < img.x; ++c)
        img.at(ch, r, c) = clamp01(0.5f + fine.at(r, c));
  }
}

// A filled ellipse glyph in the region, colored by the label. The label is
// recoverable only from pixels inside the region.
inline void paint_glyph(Image& img, const PixelRect& rect, int label,
                        const float color1[3], const float color0[3],
                        Rng& rng) {
  const float* col = label == 1 ? color1 : color0;
  const float cx = 0.5f * (rect.x0 + rect.x1 - 1);
  const float cy = 0.5f * (rect.y0 + rect.y1 - 1);
  const float rx = 0.5f * (rect.x1 - rect.x0) * uniform(rng, 0.75f, 0.95f);
  const float ry = 0.5f * (rect.y1 - rect.y0) * uniform(rng, 0.75f, 0.95f);
  for (int r = rect.y0; r < rect.y1; ++r)
    for (int c = rect.x0; c < rect.x1; ++c) {
      float nx = (c - cx) / rx, ny = (r - cy) / ry;
      if (nx * nx + ny * ny <= 1.0f) {
        float jitter = uniform(rng, -0.05f, 0.05f);
        for (int ch = 0; ch < 3; ++ch)
          img.at(ch, r, c) = clamp01(col[ch] + jitter);
      }
    }
}

}  // namespace detail

inline Corpus synth_generate(const SyntheticSpec& spec, int n) {
  spec.validate();
  if (n < 2 || n % 2) throw std::invalid_argument("synth_generate: n must be even");
  Corpus corpus;
  corpus.attribute_names = {"Synth_Primary", "Synth_Sensitive"};
  // Exactly half-half per attribute, assigned by independent shuffles so the
  // two label sequences are statistically independent.
  std::vector<int> primary_labels(n), sensitive_labels(n);
  for (int i = 0; i < n; ++i) {
    primary_labels[i] = i % 2;
    sensitive_labels[i] = i % 2;
  }
  Rng label_rng = make_rng(derive_seed(spec.seed, 0x6c6162656cULL));
  std::shuffle(primary_labels.begin(), primary_labels.end(), label_rng);
  std::shuffle(sensitive_labels.begin(), sensitive_labels.end(), label_rng);
  const float primary1[3] = {0.85f, 0.20f, 0.20f};  // red
  const float primary0[3] = {0.20f, 0.80f, 0.25f};  // green
  const float sens1[3] = {0.20f, 0.30f, 0.90f};     // blue
  const float sens0[3] = {0.90f, 0.85f, 0.20f};     // yellow
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(derive_seed(spec.seed, 1000 + i));
    Image img(3, spec.image_size, spec.image_size);
    detail::paint_background(img, spec.background_amplitude, rng);
    detail::paint_glyph(img, spec.primary_region, primary_labels[i], primary1,
                        primary0, rng);
    detail::paint_glyph(img, spec.sensitive_region, sensitive_labels[i], sens1,
                        sens0, rng);
    char id[16];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    corpus.ids.push_back(id);
    corpus.images.push_back(std::move(img));
    corpus.labels.push_back({primary_labels[i], sensitive_labels[i]});
  }
  return corpus;
}

// Persists a corpus as PNGs plus an attribute CSV and a spec-hash manifest.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                        const std::string& spec_hash = "") {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < corpus.ids.size(); ++i)
    write_png(dir / (corpus.ids[i] + ".png"), corpus.images[i]);
  std::ofstream csv(dir / "attributes.csv");
  for (size_t a = 0; a < corpus.attribute_names.size(); ++a)
    csv << (a ? " " : "") << corpus.attribute_names[a];
  csv << "\n";
  for (size_t i = 0; i < corpus.ids.size(); ++i) {
    csv << corpus.ids[i];
    for (int v : corpus.labels[i]) csv << " " << (v ? 1 : -1);
    csv << "\n";
  }
  nlohmann::json manifest = {{"spec_hash", spec_hash},
                             {"count", corpus.ids.size()}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

}  // namespace splitshield
