#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace splitshield {

// Images are Tensor3 with z=3 (RGB) and values in [0,1].
using Image = Tensor3;

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.z != 1 && img.z != 3)
    throw std::invalid_argument("write_png: need 1 or 3 channels");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("write_png: libpng failure on " + path.string());
  }
  png_init_io(png, fp);
  const int color =
      img.z == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, img.x, img.y, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(img.x) * img.z);
  for (int r = 0; r < img.y; ++r) {
    for (int c = 0; c < img.x; ++c)
      for (int ch = 0; ch < img.z; ++ch)
        row[static_cast<size_t>(c) * img.z + ch] =
            static_cast<png_byte>(clamp01(img.at(ch, r, c)) * 255.0f + 0.5f);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw std::runtime_error("read_png: cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("read_png: libpng failure on " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = png_get_image_width(png, info);
  const int h = png_get_image_height(png, info);
  std::vector<png_byte> row(static_cast<size_t>(w) * 3);
  Image img(3, h, w);
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img.at(ch, r, c) = row[static_cast<size_t>(c) * 3 + ch] / 255.0f;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// Box blur with an odd-sized square kernel of width k, edge-clamped. The blur
// of the whole image is computed first; callers copy masked regions from it.
inline Image box_blur(const Image& img, int k) {
  if (k < 1) throw std::invalid_argument("box_blur: kernel width must be >= 1");
  if (k % 2 == 0) ++k;
  const int r = k / 2;
  Image tmp(img.z, img.y, img.x);
  // horizontal pass
  for (int ch = 0; ch < img.z; ++ch)
    for (int row = 0; row < img.y; ++row)
      for (int col = 0; col < img.x; ++col) {
        double s = 0.0;
        for (int d = -r; d <= r; ++d) {
          int c = std::min(std::max(col + d, 0), img.x - 1);
          s += img.at(ch, row, c);
        }
        tmp.at(ch, row, col) = static_cast<float>(s / k);
      }
  Image out(img.z, img.y, img.x);
  // vertical pass
  for (int ch = 0; ch < img.z; ++ch)
    for (int row = 0; row < img.y; ++row)
      for (int col = 0; col < img.x; ++col) {
        double s = 0.0;
        for (int d = -r; d <= r; ++d) {
          int rr = std::min(std::max(row + d, 0), img.y - 1);
          s += tmp.at(ch, rr, col);
        }
        out.at(ch, row, col) = static_cast<float>(s / k);
      }
  return out;
}

// Rec. 601 luminance.
inline Grid2 to_grayscale(const Image& img) {
  Grid2 g(img.y, img.x);
  if (img.z == 1) {
    for (int r = 0; r < img.y; ++r)
      for (int c = 0; c < img.x; ++c) g.at(r, c) = img.at(0, r, c);
    return g;
  }
  for (int r = 0; r < img.y; ++r)
    for (int c = 0; c < img.x; ++c)
      g.at(r, c) = 0.299f * img.at(0, r, c) + 0.587f * img.at(1, r, c) +
                   0.114f * img.at(2, r, c);
  return g;
}

inline Grid2 bilinear_resize(const Grid2& in, int h, int w) {
  Grid2 out(h, w);
  if (in.h == 1 && in.w == 1) {
    for (auto& v : out.v) v = in.v[0];
    return out;
  }
  for (int r = 0; r < h; ++r) {
    float fy = (h == 1) ? 0.0f : float(r) * float(in.h - 1) / float(h - 1);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, in.h - 1);
    float wy = fy - y0;
    for (int c = 0; c < w; ++c) {
      float fx = (w == 1) ? 0.0f : float(c) * float(in.w - 1) / float(w - 1);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, in.w - 1);
      float wx = fx - x0;
      out.at(r, c) = (1 - wy) * ((1 - wx) * in.at(y0, x0) + wx * in.at(y0, x1)) +
                     wy * ((1 - wx) * in.at(y1, x0) + wx * in.at(y1, x1));
    }
  }
  return out;
}

}  // namespace splitshield
