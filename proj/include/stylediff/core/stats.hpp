#pragma once

#include "stylediff/core/errors.hpp"
#include "stylediff/core/types.hpp"

#include <cmath>
#include <vector>

namespace stylediff::stats {

inline double pearson(const Vector& a, const Vector& b) {
  detail::require<ParameterError>(a.size() == b.size() && a.size() >= 2, "pearson: need equal lengths >= 2");
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom == 0.0) return 0.0;
  return da.dot(db) / denom;
}

/// Cosine similarity; zero vectors are rejected.
inline double cosine_similarity(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine similarity of a zero-norm vector");
  return a.dot(b) / (na * nb);
}

}  // namespace stylediff::stats
