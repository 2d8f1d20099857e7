#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "paser/rng.hpp"
#include "paser/tensor.hpp"

namespace paser {

/// One labeled image: grayscale-ish float image in [0,1] plus a per-pixel
/// class map, with tags recording which generator and noise produced it.
struct SegSample {
  Tensor<float> image;               // (C,H,W)
  std::vector<std::uint8_t> labels;  // H*W, row-major, values < classes
  int height = 0, width = 0, classes = 0;
  std::string gen_tag, noise_tag;
};

using Dataset = std::vector<SegSample>;

// ---- patchification ----

template <typename S>
struct PatchGrid {
  std::vector<Tensor<S>> patches;  // row-major patch order
  int channels = 0, height = 0, width = 0;  // source dims
  int grid = 0;                             // sqrt(P)
};

inline int patch_grid_side(int patches) {
  int g = static_cast<int>(std::llround(std::sqrt(static_cast<double>(patches))));
  if (g * g != patches || patches < 1)
    throw std::invalid_argument("patchify: P must be a positive perfect square");
  return g;
}

/// Splits a CxHxW tensor into P equal non-overlapping tiles, row-major order.
template <typename S>
PatchGrid<S> patchify(const Tensor<S>& image, int patches) {
  if (image.rank() != 3) throw std::invalid_argument("patchify: want CxHxW");
  int g = patch_grid_side(patches);
  int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h % g != 0 || w % g != 0)
    throw std::invalid_argument("patchify: dims " + shape_str(image.shape) +
                                " not divisible by sqrt(P)=" + std::to_string(g));
  PatchGrid<S> out;
  out.channels = c;
  out.height = h;
  out.width = w;
  out.grid = g;
  int ph = h / g, pw = w / g;
  out.patches.reserve(static_cast<std::size_t>(patches));
  for (int py = 0; py < g; ++py) {
    for (int px = 0; px < g; ++px) {
      Tensor<S> t({c, ph, pw});
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ph; ++y)
          for (int x = 0; x < pw; ++x) t.at(ch, y, x) = image.at(ch, py * ph + y, px * pw + x);
      out.patches.push_back(std::move(t));
    }
  }
  return out;
}

/// Exact inverse of patchify.
template <typename S>
Tensor<S> departchify(const PatchGrid<S>& grid) {
  Tensor<S> image({grid.channels, grid.height, grid.width});
  int g = grid.grid, ph = grid.height / g, pw = grid.width / g;
  if (static_cast<int>(grid.patches.size()) != g * g)
    throw std::invalid_argument("departchify: patch count mismatch");
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px) {
      const Tensor<S>& t = grid.patches[static_cast<std::size_t>(py * g + px)];
      for (int ch = 0; ch < grid.channels; ++ch)
        for (int y = 0; y < ph; ++y)
          for (int x = 0; x < pw; ++x) image.at(ch, py * ph + y, px * pw + x) = t.at(ch, y, x);
    }
  return image;
}

/// Label-map variant of patchify: P row-major tiles of the HxW class map.
inline std::vector<std::vector<std::uint8_t>> patchify_labels(
    const std::vector<std::uint8_t>& labels, int h, int w, int patches) {
  int g = patch_grid_side(patches);
  if (h % g != 0 || w % g != 0) throw std::invalid_argument("patchify_labels: indivisible dims");
  if (static_cast<std::int64_t>(labels.size()) != static_cast<std::int64_t>(h) * w)
    throw std::invalid_argument("patchify_labels: label size mismatch");
  int ph = h / g, pw = w / g;
  std::vector<std::vector<std::uint8_t>> out(static_cast<std::size_t>(patches));
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px) {
      auto& t = out[static_cast<std::size_t>(py * g + px)];
      t.resize(static_cast<std::size_t>(ph) * pw);
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          t[static_cast<std::size_t>(y) * pw + x] =
              labels[static_cast<std::size_t>(py * ph + y) * w + px * pw + x];
    }
  return out;
}

// ---- blur kernels ----

/// Discrete Gaussian truncated at 3 sigma, normalized.
inline std::vector<double> gaussian_kernel(double sigma) {
  int half = static_cast<int>(std::llround(3.0 * sigma));
  if (half < 1) half = 1;
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0;
  for (int i = -half; i <= half; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

inline std::vector<double> box_kernel3() { return {1.0 / 3, 1.0 / 3, 1.0 / 3}; }

/// Separable convolution of an HxW float field with clamp-to-edge handling.
inline void convolve_separable(std::vector<float>& field, int h, int w,
                               const std::vector<double>& kernel) {
  int half = static_cast<int>(kernel.size() / 2);
  std::vector<float> tmp(field.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -half; i <= half; ++i) {
        int xi = std::clamp(x + i, 0, w - 1);
        acc += kernel[static_cast<std::size_t>(i + half)] *
               field[static_cast<std::size_t>(y) * w + xi];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      double acc = 0;
      for (int i = -half; i <= half; ++i) {
        int yi = std::clamp(y + i, 0, h - 1);
        acc += kernel[static_cast<std::size_t>(i + half)] *
               tmp[static_cast<std::size_t>(yi) * w + x];
      }
      field[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
}

/// Separable convolution with zero padding (used for the glyph blurs, where
/// the background is genuinely empty).
inline void convolve_separable_zero(std::vector<float>& field, int h, int w,
                                    const std::vector<double>& kernel) {
  int half = static_cast<int>(kernel.size() / 2);
  std::vector<float> tmp(field.size(), 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -half; i <= half; ++i) {
        int xi = x + i;
        if (xi < 0 || xi >= w) continue;
        acc += kernel[static_cast<std::size_t>(i + half)] *
               field[static_cast<std::size_t>(y) * w + xi];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      double acc = 0;
      for (int i = -half; i <= half; ++i) {
        int yi = y + i;
        if (yi < 0 || yi >= h) continue;
        acc += kernel[static_cast<std::size_t>(i + half)] *
               tmp[static_cast<std::size_t>(yi) * w + x];
      }
      field[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
}

// ---- synthetic three-phase textures ----

/// Three-class phase textures: labels come from quantile-thresholded smoothed
/// random fields (a coarse field plus a fine detail field), the image renders
/// the classes to nearby gray levels and degrades them with correlated noise,
/// speckle and a slight blur. The class gray levels are deliberately close so
/// that resolving boundaries needs spatial context, which is what separates
/// small from large task models here.
Dataset gen_phase_texture(int n, std::uint64_t seed, std::span<const double> balance, int height,
                          int width);

enum class GlyphNoise { kGaussR1, kGaussR2, kBox };

inline GlyphNoise parse_glyph_noise(const std::string& s) {
  if (s == "gauss_r1") return GlyphNoise::kGaussR1;
  if (s == "gauss_r2") return GlyphNoise::kGaussR2;
  if (s == "box") return GlyphNoise::kBox;
  throw std::invalid_argument("unknown noise type: " + s);
}

inline const char* glyph_noise_name(GlyphNoise n) {
  switch (n) {
    case GlyphNoise::kGaussR1: return "gauss_r1";
    case GlyphNoise::kGaussR2: return "gauss_r2";
    case GlyphNoise::kBox: return "box";
  }
  return "?";
}

/// Binary foreground/background glyphs: random multi-stroke marks rasterized
/// on a square canvas, blurred by the named kernel (Gaussian radius 1 or 2
/// with sigma = radius/1.5, or a normalized 3x3 box). Ground truth is the
/// pre-blur mask.
Dataset gen_blurred_glyphs(int n, GlyphNoise noise, std::uint64_t seed, int canvas = 32);

/// Salt-and-pepper corruption: exactly round(rate*H*W) pixel positions drawn
/// uniformly without replacement, each forced to 0 or 1 with equal
/// probability (across all channels of that pixel).
Tensor<float> inject_salt_pepper(const Tensor<float>& image, double rate, Rng& rng);

/// Seeded shuffle followed by a largest-remainder contiguous partition; the
/// resulting parts are disjoint and their union is the input multiset.
std::vector<Dataset> split_dataset(const Dataset& samples, std::span<const double> ratios,
                                   std::uint64_t seed);

/// Largest-remainder apportionment of n into parts (ties to earliest part).
std::vector<int> split_sizes(int n, std::span<const double> ratios);

}  // namespace paser
