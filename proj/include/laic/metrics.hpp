#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laic/error.hpp"
#include "laic/scoring.hpp"

namespace laic {

namespace detail {

inline void check_partitions(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                             const char* who) {
  if (pred.size() != truth.size()) {
    throw Error(std::string(who) + ": length mismatch " + std::to_string(pred.size()) + " vs " +
                std::to_string(truth.size()));
  }
  if (pred.empty()) throw Error(std::string(who) + ": empty input");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0) throw Error(std::string(who) + ": negative label at " + std::to_string(i));
  }
}

/// Dense contingency table, rows = pred, cols = truth.
struct Contingency {
  std::size_t rows = 0, cols = 0;
  std::vector<std::int64_t> count;
  std::vector<std::int64_t> row_sum, col_sum;
  std::int64_t n = 0;

  std::int64_t at(std::size_t r, std::size_t c) const { return count[r * cols + c]; }
};

inline Contingency contingency(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
  Contingency t;
  t.rows = static_cast<std::size_t>(*std::max_element(pred.begin(), pred.end())) + 1;
  t.cols = static_cast<std::size_t>(*std::max_element(truth.begin(), truth.end())) + 1;
  t.count.assign(t.rows * t.cols, 0);
  t.row_sum.assign(t.rows, 0);
  t.col_sum.assign(t.cols, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = static_cast<std::size_t>(pred[i]);
    const auto c = static_cast<std::size_t>(truth[i]);
    ++t.count[r * t.cols + c];
    ++t.row_sum[r];
    ++t.col_sum[c];
  }
  t.n = static_cast<std::int64_t>(pred.size());
  return t;
}

inline double entropy(const std::vector<std::int64_t>& sums, std::int64_t n) {
  double h = 0.0;
  for (auto s : sums) {
    if (s == 0) continue;
    const double p = static_cast<double>(s) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

inline bool same_partition(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  // Identical up to relabeling iff the contingency table is a permutation.
  const auto t = contingency(a, b);
  for (std::size_t r = 0; r < t.rows; ++r) {
    std::size_t nonzero = 0;
    for (std::size_t c = 0; c < t.cols; ++c) nonzero += t.at(r, c) != 0;
    if (nonzero > 1) return false;
  }
  for (std::size_t c = 0; c < t.cols; ++c) {
    std::size_t nonzero = 0;
    for (std::size_t r = 0; r < t.rows; ++r) nonzero += t.at(r, c) != 0;
    if (nonzero > 1) return false;
  }
  return true;
}

}  // namespace detail

/// Minimum-cost perfect matching on an n x n cost matrix (row-major).
/// Returns match[row] = column. O(n^3) shortest augmenting path with potentials.
inline std::vector<std::size_t> hungarian_min(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw Error("hungarian: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; index 0 is the virtual root.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  return match;
}

/// Best one-to-one cluster -> class mapping accuracy.
inline double clustering_accuracy(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
  detail::check_partitions(pred, truth, "clustering_accuracy");
  const auto t = detail::contingency(pred, truth);
  const std::size_t n = std::max(t.rows, t.cols);
  std::int64_t top = 0;
  for (auto c : t.count) top = std::max(top, c);
  std::vector<double> cost(n * n, static_cast<double>(top));
  for (std::size_t r = 0; r < t.rows; ++r)
    for (std::size_t c = 0; c < t.cols; ++c) cost[r * n + c] = static_cast<double>(top - t.at(r, c));
  const auto match = hungarian_min(cost, n);
  std::int64_t hit = 0;
  for (std::size_t r = 0; r < t.rows; ++r)
    if (match[r] < t.cols) hit += t.at(r, match[r]);
  return static_cast<double>(hit) / static_cast<double>(t.n);
}

/// 2 I(U;V) / (H(U) + H(V)), natural log.
inline double nmi(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
  detail::check_partitions(pred, truth, "nmi");
  const auto t = detail::contingency(pred, truth);
  const double hu = detail::entropy(t.row_sum, t.n);
  const double hv = detail::entropy(t.col_sum, t.n);
  if (hu == 0.0 && hv == 0.0) return detail::same_partition(pred, truth) ? 1.0 : 0.0;
  if (hu == 0.0 || hv == 0.0) return 0.0;
  const double n = static_cast<double>(t.n);
  double mi = 0.0;
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols; ++c) {
      const auto nij = t.at(r, c);
      if (nij == 0) continue;
      const double pij = static_cast<double>(nij) / n;
      mi += pij * std::log(static_cast<double>(nij) * n /
                           (static_cast<double>(t.row_sum[r]) * static_cast<double>(t.col_sum[c])));
    }
  }
  return std::clamp(2.0 * mi / (hu + hv), 0.0, 1.0);
}

/// Adjusted Rand index (pair counting).
inline double ari(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth) {
  detail::check_partitions(pred, truth, "ari");
  const auto t = detail::contingency(pred, truth);
  auto pairs = [](std::int64_t x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double index = 0.0;
  for (auto c : t.count) index += pairs(c);
  double a = 0.0, b = 0.0;
  for (auto s : t.row_sum) a += pairs(s);
  for (auto s : t.col_sum) b += pairs(s);
  const double total = pairs(t.n);
  const double expected = total > 0.0 ? a * b / total : 0.0;
  const double max_index = 0.5 * (a + b);
  const double denom = max_index - expected;
  if (denom == 0.0) return detail::same_partition(pred, truth) ? 1.0 : 0.0;
  return (index - expected) / denom;
}

// ---------------------------------------------------------------------------
// Filter quality

struct ErrPos {
  std::size_t positives = 0;   ///< B_k
  std::optional<double> rate;  ///< null when B_k == 0
};

/// For each cluster k: share of truly positive nouns predicted k whose score
/// falls strictly beyond the cluster threshold.
inline std::vector<ErrPos> err_pos(const ScoreTable& table, const FilterResult& filter,
                                   const std::vector<bool>& positivity) {
  if (positivity.size() != table.size()) {
    throw Error("err_pos: positivity has " + std::to_string(positivity.size()) + " entries for " +
                std::to_string(table.size()) + " nouns");
  }
  if (filter.clusters.size() != table.num_clusters) throw Error("err_pos: filter/table cluster count mismatch");
  std::vector<ErrPos> out(table.num_clusters);
  std::vector<std::size_t> missed(table.num_clusters, 0);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!positivity[i]) continue;
    const auto k = table.records[i].predicted;
    ++out[k].positives;
    if (filter.beyond_threshold(k, table.records[i].get(filter.kind))) ++missed[k];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].positives > 0) {
      out[k].rate = static_cast<double>(missed[k]) / static_cast<double>(out[k].positives);
    }
  }
  return out;
}

/// Mean of the defined per-cluster rates; null when none is defined.
inline std::optional<double> mean_err_pos(const std::vector<ErrPos>& e) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : e) {
    if (!x.rate) continue;
    s += *x.rate;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

struct PrecisionRecall {
  std::optional<double> precision;
  std::optional<double> recall;
};

inline PrecisionRecall filter_prf(const FilterResult& filter, const std::vector<bool>& positivity) {
  std::size_t hit = 0;
  for (auto i : filter.selected) {
    if (i >= positivity.size()) throw Error("filter_prf: selected index out of range");
    hit += positivity[i];
  }
  const auto positives = static_cast<std::size_t>(std::count(positivity.begin(), positivity.end(), true));
  PrecisionRecall out;
  if (!filter.selected.empty()) out.precision = static_cast<double>(hit) / static_cast<double>(filter.selected.size());
  if (positives > 0) out.recall = static_cast<double>(hit) / static_cast<double>(positives);
  return out;
}

// ---------------------------------------------------------------------------

struct MetricsReport {
  std::optional<double> acc, nmi, ari;
  std::optional<double> baseline_acc;
  std::vector<ErrPos> err_pos;   ///< empty when positivity is unknown
  std::optional<double> mean_err_pos;
  std::optional<double> precision, recall;
};

}  // namespace laic
