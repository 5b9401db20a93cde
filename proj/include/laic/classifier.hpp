#pragma once

// Single-layer softmax classifier h(z; W) = softmax(tau * z^T W) over
// unit-norm features. All arithmetic is 64-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "laic/error.hpp"
#include "laic/featurestore.hpp"
#include "laic/parallel.hpp"
#include "laic/rng.hpp"

namespace laic {

/// rows x cols matrix stored column-major, so column k (w_k) is contiguous.
struct ColMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  ColMatrix() = default;
  ColMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> column(std::size_t k) const { return {data.data() + k * rows, rows}; }
  std::span<double> column(std::size_t k) { return {data.data() + k * rows, rows}; }

  double operator()(std::size_t r, std::size_t k) const { return data[k * rows + r]; }
  double& operator()(std::size_t r, std::size_t k) { return data[k * rows + r]; }

  double frobenius_sq() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return s;
  }

  friend bool operator==(const ColMatrix&, const ColMatrix&) = default;
};

/// d x C weight matrix W = (w_1, ..., w_C).
struct ClassifierWeights {
  ColMatrix w;
  bool unit_columns = false;

  ClassifierWeights() = default;
  ClassifierWeights(std::size_t dim, std::size_t classes) : w(dim, classes) {}
  explicit ClassifierWeights(ColMatrix m, bool unit = false) : w(std::move(m)), unit_columns(unit) {}

  std::size_t dim() const noexcept { return w.rows; }
  std::size_t classes() const noexcept { return w.cols; }
  std::span<const double> column(std::size_t k) const { return w.column(k); }

  /// Snapshot as a d x C FeatureMatrix (rounded to f32) for LAICFTR1 export.
  FeatureMatrix to_feature_matrix() const {
    FeatureMatrix out(dim(), classes());
    for (std::size_t r = 0; r < dim(); ++r)
      for (std::size_t k = 0; k < classes(); ++k) out(r, k) = static_cast<float>(w(r, k));
    return out;
  }

  static ClassifierWeights from_feature_matrix(const FeatureMatrix& m) {
    ClassifierWeights out(m.rows(), m.dim());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t k = 0; k < m.dim(); ++k) out.w(r, k) = m(r, k);
    return out;
  }

  friend bool operator==(const ClassifierWeights&, const ClassifierWeights&) = default;
};

enum class LossVariant { standard_ce, secu };

struct TrainConfig {
  double temperature = 12.5;  // 1 / 0.08
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 2048;
  std::uint64_t seed = 0;
  LossVariant loss = LossVariant::standard_ce;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("train: temperature must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  }
};

/// Shifted-exponential view of softmax(tau * z^T W). Keeps the pieces needed
/// to evaluate 1 - pi_y and -log pi_y without cancellation.
struct SoftmaxState {
  std::vector<double> logits;
  std::vector<double> shifted;  ///< exp(logit_k - max logit)
  double max_logit = 0.0;
  double partition = 0.0;       ///< sum of shifted, >= 1
  std::size_t argmax = 0;       ///< lowest index on ties

  std::size_t classes() const noexcept { return logits.size(); }

  double prob(std::size_t k) const { return shifted[k] / partition; }

  std::vector<double> probs() const {
    std::vector<double> p(shifted.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = shifted[k] / partition;
    return p;
  }

  /// 1 - pi_y summed over the other classes.
  double complement(std::size_t y) const {
    double s = 0.0;
    for (std::size_t k = 0; k < shifted.size(); ++k)
      if (k != y) s += shifted[k];
    return s / partition;
  }

  /// -log pi_y = (max - logit_y) + log1p(sum of shifted terms except the max).
  double neg_log_prob(std::size_t y) const {
    double tail = 0.0;
    for (std::size_t k = 0; k < shifted.size(); ++k)
      if (k != argmax) tail += shifted[k];
    return (max_logit - logits[y]) + std::log1p(tail);
  }
};

namespace detail {

inline void check_dims(std::size_t zdim, const ClassifierWeights& w, const char* who) {
  if (zdim != w.dim()) {
    throw Error(std::string(who) + ": feature dim " + std::to_string(zdim) + " != weight dim " +
                std::to_string(w.dim()));
  }
  if (w.classes() == 0) throw Error(std::string(who) + ": classifier has no classes");
}

inline void check_label(std::int64_t y, const ClassifierWeights& w, const char* who) {
  if (y < 0 || static_cast<std::size_t>(y) >= w.classes()) {
    throw Error(std::string(who) + ": label " + std::to_string(y) + " out of range [0, " +
                std::to_string(w.classes()) + ")");
  }
}

}  // namespace detail

template <class T>
SoftmaxState softmax_state(std::span<const T> z, const ClassifierWeights& w, double tau) {
  detail::check_dims(z.size(), w, "softmax");
  const std::size_t C = w.classes();
  SoftmaxState s;
  s.logits.resize(C);
  for (std::size_t k = 0; k < C; ++k) s.logits[k] = tau * dot(z, w.column(k));
  s.argmax = 0;
  for (std::size_t k = 1; k < C; ++k)
    if (s.logits[k] > s.logits[s.argmax]) s.argmax = k;
  s.max_logit = s.logits[s.argmax];
  s.shifted.resize(C);
  s.partition = 0.0;
  for (std::size_t k = 0; k < C; ++k) {
    s.shifted[k] = std::exp(s.logits[k] - s.max_logit);
    s.partition += s.shifted[k];
  }
  return s;
}

template <class T>
std::vector<double> softmax_probs(std::span<const T> z, const ClassifierWeights& w, double tau) {
  return softmax_state(z, w, tau).probs();
}

/// Cross-entropy -log pi_y.
template <class T>
double ce_loss(std::span<const T> z, std::int64_t y, const ClassifierWeights& w, double tau) {
  detail::check_label(y, w, "ce_loss");
  return softmax_state(z, w, tau).neg_log_prob(static_cast<std::size_t>(y));
}

/// Stop-gradient variant. Its value is the cross-entropy itself; only the
/// derivative differs (see grad_secu).
template <class T>
double secu_loss(std::span<const T> z, std::int64_t y, const ClassifierWeights& w, double tau) {
  return ce_loss(z, y, w, tau);
}

/// d x C gradient of ce_loss w.r.t. W: column k = tau * (pi_k - [k == y]) * z.
template <class T>
ColMatrix grad_ce(std::span<const T> z, std::int64_t y, const ClassifierWeights& w, double tau) {
  detail::check_label(y, w, "grad_ce");
  const auto s = softmax_state(z, w, tau);
  const auto yy = static_cast<std::size_t>(y);
  ColMatrix g(w.dim(), w.classes());
  for (std::size_t k = 0; k < w.classes(); ++k) {
    const double coef = k == yy ? -tau * s.complement(yy) : tau * s.prob(k);
    auto col = g.column(k);
    for (std::size_t j = 0; j < z.size(); ++j) col[j] = coef * static_cast<double>(z[j]);
  }
  return g;
}

/// Gradient of secu_loss: only column y is nonzero, tau * (pi_y - 1) * z.
template <class T>
ColMatrix grad_secu(std::span<const T> z, std::int64_t y, const ClassifierWeights& w, double tau) {
  detail::check_label(y, w, "grad_secu");
  const auto s = softmax_state(z, w, tau);
  const auto yy = static_cast<std::size_t>(y);
  ColMatrix g(w.dim(), w.classes());
  const double coef = -tau * s.complement(yy);
  auto col = g.column(yy);
  for (std::size_t j = 0; j < z.size(); ++j) col[j] = coef * static_cast<double>(z[j]);
  return g;
}

// ---------------------------------------------------------------------------
// Mini-batch Adam ERM

struct TrainResult {
  ClassifierWeights weights;
  std::vector<double> epoch_loss;  ///< mean loss over each epoch's batches
  bool single_class = false;       ///< all pseudo-labels identical
};

inline ClassifierWeights random_weights(std::size_t dim, std::size_t classes, std::uint64_t seed) {
  ClassifierWeights w(dim, classes);
  auto gen = make_stream(seed, 0x77696e6974ULL);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (auto& v : w.w.data) v = normal(gen);
  return w;
}

inline void check_labels(const FeatureMatrix& m, std::span<const std::int32_t> labels, std::size_t classes,
                         const char* who) {
  if (labels.size() != m.rows()) {
    throw Error(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                std::to_string(m.rows()) + " rows");
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error(std::string(who) + ": label " + std::to_string(y) + " out of range [0, " +
                  std::to_string(classes) + ")");
    }
  }
}

inline TrainResult train_adam(const FeatureMatrix& images, std::span<const std::int32_t> labels,
                              std::size_t classes, const TrainConfig& cfg) {
  cfg.validate();
  if (images.rows() == 0) throw Error("train_adam: empty dataset");
  if (classes == 0) throw Error("train_adam: need at least one class");
  check_labels(images, labels, classes, "train_adam");

  const std::size_t n = images.rows();
  const std::size_t d = images.dim();
  const double tau = cfg.temperature;

  TrainResult res;
  res.single_class = std::all_of(labels.begin(), labels.end(), [&](auto y) { return y == labels[0]; });
  res.weights = random_weights(d, classes, cfg.seed);
  ColMatrix m1(d, classes), m2(d, classes);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  struct Partial {
    ColMatrix grad;
    double loss = 0.0;
  };
  const Partial zero{ColMatrix(d, classes), 0.0};
  constexpr std::size_t chunk = 128;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto gen = make_stream(cfg.seed, 0x73687566ULL, epoch);
    std::shuffle(order.begin(), order.end(), gen);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      const ClassifierWeights& w = res.weights;
      Partial total = ordered_reduce(
          count, chunk, zero,
          [&](std::size_t b, std::size_t e) {
            Partial p = zero;
            for (std::size_t q = b; q < e; ++q) {
              const std::size_t i = order[start + q];
              const auto z = images.row(i);
              const auto y = static_cast<std::size_t>(labels[i]);
              const auto s = softmax_state(z, w, tau);
              p.loss += s.neg_log_prob(y);
              for (std::size_t k = 0; k < classes; ++k) {
                double coef;
                if (k == y) {
                  coef = -tau * s.complement(y);
                } else if (cfg.loss == LossVariant::standard_ce) {
                  coef = tau * s.prob(k);
                } else {
                  continue;
                }
                auto col = p.grad.column(k);
                for (std::size_t j = 0; j < d; ++j) col[j] += coef * static_cast<double>(z[j]);
              }
            }
            return p;
          },
          [](Partial& acc, const Partial& part) {
            for (std::size_t q = 0; q < acc.grad.data.size(); ++q) acc.grad.data[q] += part.grad.data[q];
            acc.loss += part.loss;
          });
      epoch_loss += total.loss;

      ++step;
      const double inv = 1.0 / static_cast<double>(count);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto& wd = res.weights.w.data;
      for (std::size_t q = 0; q < wd.size(); ++q) {
        const double g = total.grad.data[q] * inv;
        m1.data[q] = cfg.beta1 * m1.data[q] + (1.0 - cfg.beta1) * g;
        m2.data[q] = cfg.beta2 * m2.data[q] + (1.0 - cfg.beta2) * g * g;
        const double mhat = m1.data[q] / bc1;
        const double vhat = m2.data[q] / bc2;
        wd[q] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
    res.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Unit-column fixed point and its tau -> 0 limit

/// Column j = normalized mean of rows labelled j.
inline ClassifierWeights centroid_limit(const FeatureMatrix& images, std::span<const std::int32_t> labels,
                                        std::size_t classes) {
  check_labels(images, labels, classes, "centroid_limit");
  const std::size_t d = images.dim();
  ClassifierWeights w(d, classes);
  w.unit_columns = true;
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < images.rows(); ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    ++counts[k];
    auto col = w.w.column(k);
    auto x = images.row(i);
    for (std::size_t j = 0; j < d; ++j) col[j] += x[j];
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] == 0) throw Error("centroid_limit: class " + std::to_string(k) + " is empty");
    auto col = w.w.column(k);
    const double n = std::sqrt(squared_norm(std::span<const double>(col)));
    if (!(n > 0.0)) throw Error("centroid_limit: class " + std::to_string(k) + " has a zero mean");
    for (auto& v : col) v /= n;
  }
  return w;
}

struct FixedPointResult {
  ClassifierWeights weights;
  double residual = 0.0;  ///< max_j |w_j - Lambda(weighted mean_j)| at the returned iterate
  std::size_t iterations = 0;
  bool converged = false;
  bool damped = false;
  std::vector<std::size_t> frozen_columns;  ///< empty classes, left at initialization
};

namespace detail {

/// One application of the closed-form map. Returns the target columns and
/// leaves frozen columns untouched.
inline ColMatrix fixed_point_map(const FeatureMatrix& images, std::span<const std::int32_t> labels,
                                 const ClassifierWeights& w, double tau, const std::vector<char>& frozen) {
  const std::size_t d = images.dim();
  const std::size_t C = w.classes();
  struct Acc {
    std::vector<double> weighted;  // C x d
    std::vector<double> plain;     // C x d
    std::vector<double> mass;      // C
  };
  const Acc zero{std::vector<double>(C * d, 0.0), std::vector<double>(C * d, 0.0), std::vector<double>(C, 0.0)};
  Acc acc = ordered_reduce(
      images.rows(), 256, zero,
      [&](std::size_t b, std::size_t e) {
        Acc a = zero;
        for (std::size_t i = b; i < e; ++i) {
          const auto x = images.row(i);
          const auto j = static_cast<std::size_t>(labels[i]);
          // pi_ij for i in class j: own-class softmax probability at the
          // current weights (stop-gradient copies coincide with w here).
          const double weight = softmax_state(x, w, tau).complement(j);
          a.mass[j] += weight;
          for (std::size_t q = 0; q < d; ++q) {
            a.weighted[j * d + q] += weight * static_cast<double>(x[q]);
            a.plain[j * d + q] += static_cast<double>(x[q]);
          }
        }
        return a;
      },
      [&](Acc& total, const Acc& part) {
        for (std::size_t q = 0; q < C * d; ++q) {
          total.weighted[q] += part.weighted[q];
          total.plain[q] += part.plain[q];
        }
        for (std::size_t k = 0; k < C; ++k) total.mass[k] += part.mass[k];
      });

  ColMatrix target = w.w;
  for (std::size_t j = 0; j < C; ++j) {
    if (frozen[j]) continue;
    // If every weight vanished (C == 1, or saturated softmax) the weighted
    // mean degenerates to the plain mean.
    const bool use_plain = !(acc.mass[j] > 0.0);
    const double* src = use_plain ? &acc.plain[j * d] : &acc.weighted[j * d];
    double n2 = 0.0;
    for (std::size_t q = 0; q < d; ++q) n2 += src[q] * src[q];
    if (!(n2 > 0.0)) continue;
    const double n = std::sqrt(n2);
    auto col = target.column(j);
    for (std::size_t q = 0; q < d; ++q) col[q] = src[q] / n;
  }
  return target;
}

inline double max_column_distance(const ColMatrix& a, const ColMatrix& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.cols; ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) s += (a(r, k) - b(r, k)) * (a(r, k) - b(r, k));
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

}  // namespace detail

/// Solves w_j = Lambda(sum_{y_i=j} (1 - pi_ij) e_i / sum_{y_i=j} (1 - pi_ij))
/// by plain iteration from the centroid limit, switching to 0.5 damping if
/// the residual grows twice in a row.
inline FixedPointResult fixed_point_weights(const FeatureMatrix& images, std::span<const std::int32_t> labels,
                                            std::size_t classes, double tau, std::size_t max_iters = 500,
                                            double tol = 1e-8) {
  if (!(tau > 0.0)) throw ConfigError("fixed_point_weights: tau must be > 0");
  check_labels(images, labels, classes, "fixed_point_weights");
  const std::size_t d = images.dim();

  FixedPointResult res;
  std::vector<std::size_t> counts(classes, 0);
  for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
  std::vector<char> frozen(classes, 0);

  ClassifierWeights w(d, classes);
  w.unit_columns = true;
  {
    for (std::size_t k = 0; k < classes; ++k) {
      if (counts[k] == 0) {
        frozen[k] = 1;
        res.frozen_columns.push_back(k);
        w.w(k % d, k) = 1.0;
      }
    }
    // Nonempty classes start at their normalized centroids.
    ColMatrix sums(d, classes);
    for (std::size_t i = 0; i < images.rows(); ++i) {
      auto col = sums.column(static_cast<std::size_t>(labels[i]));
      auto x = images.row(i);
      for (std::size_t q = 0; q < d; ++q) col[q] += x[q];
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (frozen[k]) continue;
      auto src = sums.column(k);
      const double n = std::sqrt(squared_norm(std::span<const double>(src)));
      auto col = w.w.column(k);
      if (n > 0.0) {
        for (std::size_t q = 0; q < d; ++q) col[q] = src[q] / n;
      } else {
        col[k % d] = 1.0;
      }
    }
  }

  std::vector<double> history;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const ColMatrix target = detail::fixed_point_map(images, labels, w, tau, frozen);
    const double residual = detail::max_column_distance(w.w, target);
    history.push_back(residual);
    const std::size_t h = history.size();
    if (!res.damped && h >= 3 && history[h - 1] > history[h - 2] && history[h - 2] > history[h - 3]) {
      res.damped = true;
    }
    ColMatrix next = target;
    if (res.damped) {
      for (std::size_t k = 0; k < classes; ++k) {
        if (frozen[k]) continue;
        auto col = next.column(k);
        auto cur = w.w.column(k);
        double n2 = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
          col[q] = 0.5 * cur[q] + 0.5 * col[q];
          n2 += col[q] * col[q];
        }
        const double n = std::sqrt(n2);
        if (n > 0.0)
          for (auto& v : col) v /= n;
      }
    }
    const double displacement = detail::max_column_distance(w.w, next);
    w.w = std::move(next);
    res.iterations = it + 1;
    if (displacement < tol) {
      res.converged = true;
      break;
    }
  }
  res.residual = detail::max_column_distance(w.w, detail::fixed_point_map(images, labels, w, tau, frozen));
  res.weights = std::move(w);
  return res;
}

/// Residual of the closed-form stationarity condition for arbitrary unit weights.
inline double fixed_point_residual(const FeatureMatrix& images, std::span<const std::int32_t> labels,
                                   const ClassifierWeights& w, double tau) {
  check_labels(images, labels, w.classes(), "fixed_point_residual");
  std::vector<std::size_t> counts(w.classes(), 0);
  for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
  std::vector<char> frozen(w.classes(), 0);
  for (std::size_t k = 0; k < w.classes(); ++k) frozen[k] = counts[k] == 0;
  return detail::max_column_distance(w.w, detail::fixed_point_map(images, labels, w, tau, frozen));
}

}  // namespace laic
