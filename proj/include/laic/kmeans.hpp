#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "laic/error.hpp"
#include "laic/featurestore.hpp"
#include "laic/parallel.hpp"
#include "laic/rng.hpp"

namespace laic {

/// C x dim centroid table, row-major, 64-bit.
struct Centroids {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  Centroids() = default;
  Centroids(std::size_t c, std::size_t d) : count(c), dim(d), data(c * d, 0.0) {}

  std::span<const double> row(std::size_t k) const { return {data.data() + k * dim, dim}; }
  std::span<double> row(std::size_t k) { return {data.data() + k * dim, dim}; }
};

struct KMeansOptions {
  std::size_t clusters = 2;
  std::uint64_t seed = 0;
  std::size_t max_iters = 300;
  double tol = 1e-6;
};

struct KMeansResult {
  std::vector<std::int32_t> assignments;
  Centroids centroids;
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  /// Inertia measured after each assignment step; non-increasing.
  std::vector<double> inertia_history;
  std::size_t repaired_clusters = 0;
};

namespace detail {

inline constexpr std::size_t kmeans_chunk = 256;

template <class T>
double sq_dist(std::span<const T> x, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double diff = static_cast<double>(x[j]) - c[j];
    s += diff * diff;
  }
  return s;
}

/// Nearest centroid, ties to the lowest index.
inline std::pair<std::int32_t, double> nearest(std::span<const float> x, const Centroids& c) {
  std::int32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c.count; ++k) {
    const double dk = sq_dist(x, c.row(k));
    if (dk < best_d) {
      best_d = dk;
      best = static_cast<std::int32_t>(k);
    }
  }
  return {best, best_d};
}

inline Centroids kmeanspp_init(const FeatureMatrix& m, std::size_t clusters, std::uint64_t seed) {
  Centroids c(clusters, m.dim());
  auto gen = make_stream(seed, 0x6b6d2b2bULL);
  auto copy_row = [&](std::size_t k, std::size_t i) {
    auto src = m.row(i);
    auto dst = c.row(k);
    for (std::size_t j = 0; j < m.dim(); ++j) dst[j] = src[j];
  };
  std::uniform_int_distribution<std::size_t> first(0, m.rows() - 1);
  copy_row(0, first(gen));

  std::vector<double> d2(m.rows());
  parallel_for(m.rows(), [&](std::size_t i) { d2[i] = sq_dist(m.row(i), c.row(0)); }, kmeans_chunk);
  for (std::size_t k = 1; k < clusters; ++k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(gen);
      double acc = 0.0;
      pick = m.rows() - 1;
      for (std::size_t i = 0; i < m.rows(); ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // All points coincide with chosen centers; fall back to a uniform draw.
      pick = first(gen);
    }
    copy_row(k, pick);
    parallel_for(m.rows(), [&](std::size_t i) { d2[i] = std::min(d2[i], sq_dist(m.row(i), c.row(k))); },
                 kmeans_chunk);
  }
  return c;
}

}  // namespace detail

/// Assigns each row to its nearest centroid (squared Euclidean), ties to the
/// lowest centroid index.
inline std::vector<std::int32_t> kmeans_assign(const FeatureMatrix& m, const Centroids& centroids) {
  if (centroids.dim != m.dim()) {
    throw Error("kmeans_assign: centroid dim " + std::to_string(centroids.dim) + " != matrix dim " +
                std::to_string(m.dim()));
  }
  if (centroids.count == 0) throw Error("kmeans_assign: no centroids");
  std::vector<std::int32_t> out(m.rows());
  parallel_for(m.rows(), [&](std::size_t i) { out[i] = detail::nearest(m.row(i), centroids).first; },
               detail::kmeans_chunk);
  return out;
}

/// k-means++ seeding followed by Lloyd iterations.
inline KMeansResult kmeans_fit(const FeatureMatrix& m, const KMeansOptions& opt) {
  const std::size_t C = opt.clusters;
  if (C == 0) throw Error("kmeans_fit: cluster count must be >= 1");
  if (C > m.rows()) {
    throw Error("kmeans_fit: cluster count " + std::to_string(C) + " exceeds rows " + std::to_string(m.rows()));
  }
  const std::size_t n = m.rows();
  const std::size_t d = m.dim();

  KMeansResult res;
  res.centroids = detail::kmeanspp_init(m, C, opt.seed);
  res.assignments.assign(n, 0);
  std::vector<double> dist(n);

  auto assign_all = [&] {
    parallel_for(n, [&](std::size_t i) {
      const auto [k, dk] = detail::nearest(m.row(i), res.centroids);
      res.assignments[i] = k;
      dist[i] = dk;
    }, detail::kmeans_chunk);
    return ordered_reduce(n, detail::kmeans_chunk, 0.0,
                          [&](std::size_t b, std::size_t e) {
                            double s = 0.0;
                            for (std::size_t i = b; i < e; ++i) s += dist[i];
                            return s;
                          },
                          [](double& acc, double part) { acc += part; });
  };

  struct Sums {
    std::vector<double> sum;
    std::vector<std::size_t> count;
  };
  const Sums zero{std::vector<double>(C * d, 0.0), std::vector<std::size_t>(C, 0)};

  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    res.inertia = assign_all();
    res.inertia_history.push_back(res.inertia);
    res.iterations_run = it + 1;

    Sums sums = ordered_reduce(
        n, detail::kmeans_chunk, zero,
        [&](std::size_t b, std::size_t e) {
          Sums s = zero;
          for (std::size_t i = b; i < e; ++i) {
            const auto k = static_cast<std::size_t>(res.assignments[i]);
            ++s.count[k];
            auto x = m.row(i);
            for (std::size_t j = 0; j < d; ++j) s.sum[k * d + j] += x[j];
          }
          return s;
        },
        [&](Sums& acc, const Sums& part) {
          for (std::size_t k = 0; k < C; ++k) acc.count[k] += part.count[k];
          for (std::size_t q = 0; q < C * d; ++q) acc.sum[q] += part.sum[q];
        });

    // Empty clusters seize the point currently farthest from its centroid.
    std::vector<char> seized(n, 0);
    for (std::size_t k = 0; k < C; ++k) {
      if (sums.count[k] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (seized[i]) continue;
        if (sums.count[static_cast<std::size_t>(res.assignments[i])] <= 1) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) throw Error("kmeans_fit: cannot repair empty cluster");
      const auto from = static_cast<std::size_t>(res.assignments[far]);
      auto x = m.row(far);
      for (std::size_t j = 0; j < d; ++j) {
        sums.sum[from * d + j] -= x[j];
        sums.sum[k * d + j] = x[j];
      }
      --sums.count[from];
      sums.count[k] = 1;
      res.assignments[far] = static_cast<std::int32_t>(k);
      seized[far] = 1;
      dist[far] = 0.0;
      ++res.repaired_clusters;
    }

    double shift = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      auto c = res.centroids.row(k);
      double s2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double next = sums.sum[k * d + j] / static_cast<double>(sums.count[k]);
        s2 += (next - c[j]) * (next - c[j]);
        c[j] = next;
      }
      shift = std::max(shift, std::sqrt(s2));
    }
    if (shift < opt.tol) break;
  }

  res.inertia = assign_all();
  res.inertia_history.push_back(res.inertia);
  return res;
}

inline KMeansResult kmeans_fit(const FeatureMatrix& m, std::size_t clusters, std::uint64_t seed,
                               std::size_t max_iters = 300, double tol = 1e-6) {
  return kmeans_fit(m, KMeansOptions{clusters, seed, max_iters, tol});
}

}  // namespace laic
