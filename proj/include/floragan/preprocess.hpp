#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string_view>

#include "floragan/tensor.hpp"

namespace floragan {

enum class Augmentation { none, horizontal_flip };

std::string_view to_string(Augmentation a);
Augmentation parse_augmentation(std::string_view s);

struct PreprocessConfig {
  int working_size = 256;
  Augmentation augmentation = Augmentation::none;

  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

void validate(const PreprocessConfig& cfg);

/// Bilinear resampling with half-pixel centers and edge clamping.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& src, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be at least 1x1");
  const int in_h = src.height(), in_w = src.width();
  if (in_h == out_h && in_w == out_w) return src;
  struct Tap {
    int i0, i1;
    Scalar w1;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double pos = (o + 0.5) * scale - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(pos));
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, static_cast<Scalar>(pos - i0)};
    }
    return t;
  };
  const auto ty = taps(in_h, out_h);
  const auto tx = taps(in_w, out_w);
  Tensor<Scalar> out(src.channels(), out_h, out_w);
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const Scalar top = src(c, a.i0, b.i0) * (1 - b.w1) + src(c, a.i0, b.i1) * b.w1;
        const Scalar bottom = src(c, a.i1, b.i0) * (1 - b.w1) + src(c, a.i1, b.i1) * b.w1;
        out(c, y, x) = top * (1 - a.w1) + bottom * a.w1;
      }
    }
  return out;
}

template <typename Scalar>
Tensor<Scalar> flip_horizontal(const Tensor<Scalar>& src) {
  Tensor<Scalar> out(src.shape());
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < src.height(); ++y)
      for (int x = 0; x < src.width(); ++x) out(c, y, x) = src(c, y, src.width() - 1 - x);
  return out;
}

/// [0,1] -> [-1,1] via v -> 2v - 1.
template <typename Scalar>
Image<Scalar> normalize(const Image<Scalar>& raw) {
  if (raw.range != ValueRange::raw01) throw DomainError("normalize expects a raw [0,1] image");
  return {Tensor<Scalar>(raw.shape(), (raw.pixels.matrix().array() * Scalar(2) - Scalar(1)).matrix()),
          ValueRange::normalized};
}

/// [-1,1] -> [0,1] via v -> (v + 1) / 2.
template <typename Scalar>
Image<Scalar> denormalize(const Image<Scalar>& img) {
  if (img.range != ValueRange::normalized) throw DomainError("denormalize expects a normalized image");
  return {Tensor<Scalar>(img.shape(), ((img.pixels.matrix().array() + Scalar(1)) * Scalar(0.5)).matrix()),
          ValueRange::raw01};
}

/// Resize to working_size x working_size (bilinear), then map to [-1,1]. With
/// horizontal_flip augmentation and an `rng`, flips with probability 0.5.
template <typename Scalar, typename Rng = std::mt19937_64>
Image<Scalar> preprocess(const Image<Scalar>& raw, const PreprocessConfig& cfg, Rng* rng = nullptr) {
  validate(cfg);
  if (raw.range != ValueRange::raw01) throw DomainError("preprocess expects a raw [0,1] image");
  Image<Scalar> sized{resize_bilinear(raw.pixels, cfg.working_size, cfg.working_size), ValueRange::raw01};
  if (cfg.augmentation == Augmentation::horizontal_flip && rng) {
    std::bernoulli_distribution coin(0.5);
    if (coin(*rng)) sized.pixels = flip_horizontal(sized.pixels);
  }
  return normalize(sized);
}

}  // namespace floragan
