#include "paser/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace paser {

namespace {

std::vector<float> white_noise(int h, int w, Rng& rng) {
  std::vector<float> f(static_cast<std::size_t>(h) * w);
  for (auto& v : f) v = static_cast<float>(rng.normal());
  return f;
}

// rank-normalize a field to [0,1] by value order (robust to scale)
void normalize01(std::vector<float>& f) {
  auto [mn, mx] = std::minmax_element(f.begin(), f.end());
  float lo = *mn, hi = *mx;
  float span = hi - lo > 1e-12f ? hi - lo : 1.f;
  for (auto& v : f) v = (v - lo) / span;
}

float quantile_of(std::vector<float> sorted_copy, double q) {
  auto n = static_cast<std::int64_t>(sorted_copy.size());
  auto idx = static_cast<std::int64_t>(q * static_cast<double>(n));
  idx = std::clamp<std::int64_t>(idx, 0, n - 1);
  std::nth_element(sorted_copy.begin(), sorted_copy.begin() + idx, sorted_copy.end());
  return sorted_copy[static_cast<std::size_t>(idx)];
}

}  // namespace

Dataset gen_phase_texture(int n, std::uint64_t seed, std::span<const double> balance, int height,
                          int width) {
  if (n <= 0) throw std::invalid_argument("gen_phase_texture: n must be positive");
  if (balance.size() != 3) throw std::invalid_argument("gen_phase_texture: need 3 class fractions");
  double sum = 0;
  for (double b : balance) {
    if (b <= 0.0 || b >= 1.0) throw std::invalid_argument("gen_phase_texture: invalid balance");
    sum += b;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("gen_phase_texture: balance must sum to 1");

  const float gray[3] = {0.32f, 0.50f, 0.68f};
  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  Rng base = Rng(seed).split("phase");
  for (int i = 0; i < n; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));

    // coarse morphology plus fine detail
    Rng r1 = rng.split("coarse"), r2 = rng.split("fine");
    auto coarse = white_noise(height, width, r1);
    convolve_separable(coarse, height, width, gaussian_kernel(4.0));
    normalize01(coarse);
    auto fine = white_noise(height, width, r2);
    convolve_separable(fine, height, width, gaussian_kernel(1.2));
    normalize01(fine);

    std::vector<float> field(coarse.size());
    for (std::size_t px = 0; px < field.size(); ++px)
      field[px] = 0.72f * coarse[px] + 0.28f * fine[px];

    float q1 = quantile_of(field, balance[0]);
    float q2 = quantile_of(field, balance[0] + balance[1]);

    SegSample s;
    s.height = height;
    s.width = width;
    s.classes = 3;
    s.gen_tag = "phase";
    s.noise_tag = "clean";
    s.labels.resize(field.size());
    s.image = Tensor<float>({1, height, width});
    for (std::size_t px = 0; px < field.size(); ++px) {
      std::uint8_t cls = field[px] <= q1 ? 0 : (field[px] <= q2 ? 1 : 2);
      s.labels[px] = cls;
      s.image.data[static_cast<std::int64_t>(px)] = gray[cls];
    }

    // degrade: correlated noise + speckle, then a slight blur
    Rng rn = rng.split("noise");
    auto corr = white_noise(height, width, rn);
    convolve_separable(corr, height, width, gaussian_kernel(1.0));
    std::vector<float> img(field.size());
    for (std::size_t px = 0; px < field.size(); ++px)
      img[px] = s.image.data[static_cast<std::int64_t>(px)] + 0.16f * corr[px] +
                0.05f * static_cast<float>(rn.normal());
    convolve_separable(img, height, width, gaussian_kernel(0.6));
    for (std::size_t px = 0; px < field.size(); ++px)
      s.image.data[static_cast<std::int64_t>(px)] = std::clamp(img[px], 0.f, 1.f);

    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void rasterize_stroke(std::vector<std::uint8_t>& mask, int canvas, Rng& rng) {
  double x = rng.uniform() * canvas;
  double y = rng.uniform() * canvas;
  double dir = rng.uniform() * 2.0 * M_PI;
  int steps = 10 + rng.uniform_int(16);
  int thick = 1 + rng.uniform_int(2);
  for (int t = 0; t < steps; ++t) {
    dir += (rng.uniform() - 0.5) * 0.9;
    x += std::cos(dir);
    y += std::sin(dir);
    x = std::clamp(x, 0.0, canvas - 1.0);
    y = std::clamp(y, 0.0, canvas - 1.0);
    int xi = static_cast<int>(x), yi = static_cast<int>(y);
    for (int dy = 0; dy < thick; ++dy)
      for (int dx = 0; dx < thick; ++dx) {
        int px = std::min(xi + dx, canvas - 1);
        int py = std::min(yi + dy, canvas - 1);
        mask[static_cast<std::size_t>(py) * canvas + px] = 1;
      }
  }
}

}  // namespace

Dataset gen_blurred_glyphs(int n, GlyphNoise noise, std::uint64_t seed, int canvas) {
  if (n <= 0) throw std::invalid_argument("gen_blurred_glyphs: n must be positive");
  std::vector<double> kernel;
  switch (noise) {
    case GlyphNoise::kGaussR1: kernel = gaussian_kernel(1.0 / 1.5); break;
    case GlyphNoise::kGaussR2: kernel = gaussian_kernel(2.0 / 1.5); break;
    case GlyphNoise::kBox: kernel = box_kernel3(); break;
  }

  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  Rng base = Rng(seed).split("glyphs");
  auto total = static_cast<std::size_t>(canvas) * static_cast<std::size_t>(canvas);
  for (int i = 0; i < n; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    std::vector<std::uint8_t> mask;
    for (int attempt = 0; attempt < 100; ++attempt) {
      mask.assign(total, 0);
      Rng sr = rng.split(static_cast<std::uint64_t>(attempt));
      int strokes = 2 + sr.uniform_int(3);
      for (int s = 0; s < strokes; ++s) rasterize_stroke(mask, canvas, sr);
      auto on = static_cast<double>(std::accumulate(mask.begin(), mask.end(), 0));
      double frac = on / static_cast<double>(total);
      if (frac > 0.05 && frac < 0.5) break;
      mask.clear();
    }
    if (mask.empty()) throw std::runtime_error("gen_blurred_glyphs: could not satisfy coverage");

    std::vector<float> img(total);
    for (std::size_t px = 0; px < total; ++px) img[px] = mask[px] ? 1.f : 0.f;
    convolve_separable_zero(img, canvas, canvas, kernel);

    SegSample s;
    s.height = canvas;
    s.width = canvas;
    s.classes = 2;
    s.gen_tag = "glyphs";
    s.noise_tag = glyph_noise_name(noise);
    s.labels = std::move(mask);
    s.image = Tensor<float>({1, canvas, canvas});
    for (std::size_t px = 0; px < total; ++px)
      s.image.data[static_cast<std::int64_t>(px)] = std::clamp(img[px], 0.f, 1.f);
    out.push_back(std::move(s));
  }
  return out;
}

Tensor<float> inject_salt_pepper(const Tensor<float>& image, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("inject_salt_pepper: rate must be in [0,1]");
  if (image.rank() != 3) throw std::invalid_argument("inject_salt_pepper: want CxHxW");
  int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  auto pixels = static_cast<std::int64_t>(h) * w;
  auto k = static_cast<std::int64_t>(std::llround(rate * static_cast<double>(pixels)));

  Tensor<float> out = image;
  // partial Fisher-Yates: first k entries are a uniform sample w/o replacement
  std::vector<std::int64_t> idx(static_cast<std::size_t>(pixels));
  std::iota(idx.begin(), idx.end(), 0);
  for (std::int64_t i = 0; i < k; ++i) {
    auto j = i + static_cast<std::int64_t>(rng.uniform() * static_cast<double>(pixels - i));
    if (j >= pixels) j = pixels - 1;
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    float v = rng.uniform() < 0.5 ? 0.f : 1.f;
    for (int ch = 0; ch < c; ++ch)
      out.data[static_cast<std::int64_t>(ch) * pixels + idx[static_cast<std::size_t>(i)]] = v;
  }
  return out;
}

std::vector<int> split_sizes(int n, std::span<const double> ratios) {
  double sum = 0;
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split: negative ratio");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");

  std::vector<int> sizes(ratios.size());
  std::vector<double> frac(ratios.size());
  int assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    double exact = ratios[i] * n;
    sizes[i] = static_cast<int>(std::floor(exact));
    frac[i] = exact - sizes[i];
    assigned += sizes[i];
  }
  // hand out the remainder by largest fractional part, earliest first on ties
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (int r = 0; r < n - assigned; ++r) sizes[order[static_cast<std::size_t>(r)]] += 1;
  return sizes;
}

std::vector<Dataset> split_dataset(const Dataset& samples, std::span<const double> ratios,
                                   std::uint64_t seed) {
  auto sizes = split_sizes(static_cast<int>(samples.size()), ratios);
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng(seed).split("split");
  for (std::size_t i = samples.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(idx[i - 1], idx[j]);
  }
  std::vector<Dataset> out(ratios.size());
  std::size_t pos = 0;
  for (std::size_t part = 0; part < out.size(); ++part) {
    out[part].reserve(static_cast<std::size_t>(sizes[part]));
    for (int i = 0; i < sizes[part]; ++i) out[part].push_back(samples[idx[pos++]]);
  }
  return out;
}

}  // namespace paser
