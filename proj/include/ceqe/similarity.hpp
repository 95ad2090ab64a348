#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ceqe/error.hpp"

namespace ceqe {

using Vector = std::vector<double>;

template <typename A, typename B>
double dot(std::span<const A> x, std::span<const B> y) {
  if (x.size() != y.size()) throw Error("dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return s;
}

template <typename A>
double l2_norm(std::span<const A> x) {
  return std::sqrt(dot<A, A>(x, x));
}

/// Cosine similarity; 0 when either vector has zero norm.
template <typename A, typename B>
double cosine(std::span<const A> x, std::span<const B> y) {
  const double d = dot<A, B>(x, y);
  const double n = l2_norm<A>(x) * l2_norm<B>(y);
  return n > 0.0 ? d / n : 0.0;
}

/// (1 + cos) / 2, a similarity in [0, 1] with the same ordering as cosine.
template <typename A, typename B>
double shifted_cosine(std::span<const A> x, std::span<const B> y) {
  double s = 0.5 * (1.0 + cosine<A, B>(x, y));
  return s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
}

inline double shifted_cosine(const Vector& x, const Vector& y) {
  return shifted_cosine<double, double>(std::span<const double>(x), std::span<const double>(y));
}

inline Vector normalized(Vector v) {
  const double n = l2_norm<double>(v);
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
  return v;
}

}  // namespace ceqe
