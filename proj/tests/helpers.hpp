#pragma once

#include <initializer_list>
#include <random>

#include "relusparse/arrangement.hpp"
#include "relusparse/core.hpp"

namespace helpers {

using relusparse::Dataset;
using relusparse::Index;
using relusparse::Matrix;
using relusparse::Vector;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

inline Vector gaussian_vector(Index p, std::mt19937_64& gen) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(p);
  for (Index k = 0; k < p; ++k) v(k) = g(gen);
  return v;
}

inline Dataset gaussian(std::size_t n, std::size_t d, std::mt19937_64& gen) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(static_cast<Index>(n), static_cast<Index>(d));
  Vector y(static_cast<Index>(n));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index k = 0; k < x.cols(); ++k) x(i, k) = g(gen);
    y(i) = g(gen);
  }
  return Dataset(x, y);
}

inline Vector point_in_cell(const relusparse::CellDecomposition& decomp, std::size_t cell, std::mt19937_64& gen) {
  const auto& w = decomp.cells[cell].witness;
  for (double scale = 0.5;; scale *= 0.9) {
    const Vector v = w + scale * w.norm() * gaussian_vector(w.size(), gen);
    bool inside = true;
    for (std::size_t i = 0; i < decomp.n; ++i)
      inside = inside && decomp.cells[cell].signs[i] * decomp.lifted.row(Index(i)).dot(v) > 0.0;
    if (inside) return v;
  }
}

}  // namespace helpers
