#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace splitshield {

// Rank-3 tensor with (depth Z, height Y, width X) layout, row-major in X.
// Images are the Z=3 special case with values in [0,1].
struct Tensor3 {
  int z = 0, y = 0, x = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(int z_, int y_, int x_, float fill = 0.0f)
      : z(z_), y(y_), x(x_), data(static_cast<size_t>(z_) * y_ * x_, fill) {
    if (z_ < 1 || y_ < 1 || x_ < 1)
      throw std::invalid_argument("Tensor3: dims must be >= 1");
  }

  size_t size() const { return data.size(); }
  float& at(int c, int r, int col) {
    return data[(static_cast<size_t>(c) * y + r) * x + col];
  }
  float at(int c, int r, int col) const {
    return data[(static_cast<size_t>(c) * y + r) * x + col];
  }

  bool same_shape(const Tensor3& o) const {
    return z == o.z && y == o.y && x == o.x;
  }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  float max_abs_diff(const Tensor3& o) const {
    if (!same_shape(o)) throw std::invalid_argument("shape mismatch");
    float m = 0.0f;
    for (size_t i = 0; i < data.size(); ++i)
      m = std::max(m, std::fabs(data[i] - o.data[i]));
    return m;
  }

  double l2_dist(const Tensor3& o) const {
    if (!same_shape(o)) throw std::invalid_argument("shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < data.size(); ++i) {
      double d = double(data[i]) - double(o.data[i]);
      s += d * d;
    }
    return std::sqrt(s);
  }

  double l2_norm() const {
    double s = 0.0;
    for (float v : data) s += double(v) * double(v);
    return std::sqrt(s);
  }
};

// Feature map emitted by the client half at a split position.
struct FeatureMap {
  Tensor3 data;
  std::string origin_split;

  size_t flat_size() const { return data.size(); }
};

// 2D real grid, used for heatmaps and masks.
struct Grid2 {
  int h = 0, w = 0;
  std::vector<float> v;

  Grid2() = default;
  Grid2(int h_, int w_, float fill = 0.0f)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

  float& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
};

struct BoolGrid {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  BoolGrid() = default;
  BoolGrid(int h_, int w_, bool fill = false)
      : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill ? 1 : 0) {}

  bool at(int r, int c) const { return v[static_cast<size_t>(r) * w + c] != 0; }
  void set(int r, int c, bool b) { v[static_cast<size_t>(r) * w + c] = b ? 1 : 0; }

  size_t count() const {
    return static_cast<size_t>(std::count(v.begin(), v.end(), uint8_t(1)));
  }

  bool subset_of(const BoolGrid& o) const {
    if (h != o.h || w != o.w) throw std::invalid_argument("shape mismatch");
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i] && !o.v[i]) return false;
    return true;
  }

  BoolGrid operator&(const BoolGrid& o) const {
    if (h != o.h || w != o.w) throw std::invalid_argument("shape mismatch");
    BoolGrid r(h, w);
    for (size_t i = 0; i < v.size(); ++i) r.v[i] = v[i] & o.v[i];
    return r;
  }

  BoolGrid operator|(const BoolGrid& o) const {
    if (h != o.h || w != o.w) throw std::invalid_argument("shape mismatch");
    BoolGrid r(h, w);
    for (size_t i = 0; i < v.size(); ++i) r.v[i] = v[i] | o.v[i];
    return r;
  }
};

}  // namespace splitshield
