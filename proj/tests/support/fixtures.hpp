#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

// Deterministic image pairs shared with tests/oracles/ms_ssim_reference.py.
namespace fixtures {

inline constexpr std::array<std::pair<int, int>, 3> kMsSsimShapes{{{256, 256}, {256, 256}, {200, 230}}};

// Frozen output of tests/oracles/ms_ssim_reference.py (TensorFlow per-scale SSIM).
inline constexpr std::array<double, 3> kMsSsimReference{0.979173384240667, 0.96770982503547, 0.950141828929207};
inline constexpr std::array<double, 3> kSsimReference{0.954264223575592, 0.854417502880096, 0.738537490367889};

inline double hash_noise(std::uint64_t y, std::uint64_t x, std::uint64_t salt) {
  const std::uint64_t v = ((y * 7919u + x * 104729u + salt * 31337u) * 2654435761u) & 0xFFFFFFFFu;
  return static_cast<double>(v) / 4294967296.0 - 0.5;
}

inline std::pair<Eigen::ArrayXXd, Eigen::ArrayXXd> ms_ssim_pair(int k) {
  const auto [h, w] = kMsSsimShapes[static_cast<std::size_t>(k)];
  Eigen::ArrayXXd a(h, w), b(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      a(y, x) = 0.5 + 0.3 * std::sin(0.05 * (k + 1) * x + 0.031 * y) * std::cos(0.043 * y) +
                0.15 * hash_noise(std::uint64_t(y), std::uint64_t(x), std::uint64_t(1 + k));
      b(y, x) = a(y, x) + (0.05 + 0.05 * k) * hash_noise(std::uint64_t(y), std::uint64_t(x), std::uint64_t(11 + k)) +
                0.02 * std::sin(0.2 * x);
    }
  }
  return {a, b};
}

}  // namespace fixtures
