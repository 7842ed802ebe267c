#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "mesh.hpp"

namespace ntopo {

/// Random Fourier features gamma(x) = [sin(2 pi B x), cos(2 pi B x)].
struct FourierFeatures {
  Eigen::MatrixXd freq_matrix; // m x 2
  int m = 0;
  double scale = 0.0;
  Eigen::MatrixXd features; // N x 2m, sines first
};

/// Draws the m x 2 frequency matrix, entries ~ N(0, scale^2).
inline Eigen::MatrixXd sample_frequencies(int m, double scale,
                                          std::uint64_t seed) {
  if (m < 1)
    throw InvalidArgument("fourier_encode: m must be >= 1");
  if (!(scale >= 0.0) || !std::isfinite(scale))
    throw InvalidArgument("fourier_encode: scale must be finite and >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd B(m, 2);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < 2; ++c)
      B(r, c) = scale * normal(rng);
  return B;
}

inline FourierFeatures fourier_encode_with(const std::vector<Eigen::Vector2d> &points,
                                           const Eigen::MatrixXd &B) {
  if (B.cols() != 2 || B.rows() < 1)
    throw InvalidArgument("fourier_encode: frequency matrix must be m x 2");
  const auto m = B.rows();
  FourierFeatures out;
  out.freq_matrix = B;
  out.m = static_cast<int>(m);
  out.features.resize(static_cast<Eigen::Index>(points.size()), 2 * m);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t v = 0; v < points.size(); ++v) {
    const Eigen::Vector2d &x = points[v];
    if (!x.allFinite())
      throw InvalidArgument("fourier_encode: non-finite centroid at element " +
                            std::to_string(v));
    for (Eigen::Index r = 0; r < m; ++r) {
      const double arg = two_pi * (B(r, 0) * x[0] + B(r, 1) * x[1]);
      out.features(static_cast<Eigen::Index>(v), r) = std::sin(arg);
      out.features(static_cast<Eigen::Index>(v), m + r) = std::cos(arg);
    }
  }
  return out;
}

/// Encodes already-normalized coordinates.
inline FourierFeatures fourier_encode(const std::vector<Eigen::Vector2d> &points,
                                      int m, double scale, std::uint64_t seed) {
  FourierFeatures f = fourier_encode_with(points, sample_frequencies(m, scale, seed));
  f.scale = scale;
  return f;
}

/// Element centroids divided by the larger domain extent.
inline std::vector<Eigen::Vector2d> normalized_centroids(const StructuredMesh &mesh) {
  const double extent = std::max(mesh.width(), mesh.height());
  std::vector<Eigen::Vector2d> out;
  out.reserve(mesh.elem_centroids.size());
  for (const auto &c : mesh.elem_centroids)
    out.push_back(c / extent);
  return out;
}

} // namespace ntopo
