#pragma once

// Two-stage language-assisted clustering:
//   stage 1  k-means pseudo-labels -> classifier ERM -> score wild nouns -> filter
//   stage 2  deep-set text counterparts -> k-means on [e_i ; v_i]

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laic/classifier.hpp"
#include "laic/error.hpp"
#include "laic/featurestore.hpp"
#include "laic/kmeans.hpp"
#include "laic/metrics.hpp"
#include "laic/parallel.hpp"
#include "laic/scoring.hpp"

namespace laic {

struct PipelineConfig {
  double tau = 12.5;
  double kappa = 0.006;
  std::size_t beta = 5;
  std::size_t k = 0;                 ///< target cluster count K
  std::optional<std::size_t> c;      ///< stage-1 cluster count; nullopt = auto
  TrainConfig train;                 ///< temperature is overwritten by tau
  std::uint64_t seed = 0;
  ScoreKind score_kind = ScoreKind::gradnorm;
  bool renormalize_counterparts = false;
  std::size_t kmeans_max_iters = 300;
  double kmeans_tol = 1e-6;

  std::uint64_t stage1_seed() const { return seed; }
  std::uint64_t train_seed() const { return seed + 1; }
  std::uint64_t stage2_seed() const { return seed + 2; }

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(kappa > 0.0)) throw ConfigError("kappa must be > 0 (κ > 0)");
    if (beta < 1) throw ConfigError("beta must be >= 1 (β ≥ 1)");
    if (k < 2) throw ConfigError("k must be >= 2 (K ≥ 2)");
    if (c && *c < 1) throw ConfigError("c must be >= 1");
    if (train.epochs < 1) throw ConfigError("epochs must be >= 1");
    TrainConfig t = train;
    t.temperature = tau;
    t.validate();
  }
};

/// floor(N / 600) when the average cluster holds more than 600 images,
/// otherwise 3K.
inline std::size_t choose_C(std::size_t n, std::size_t k) {
  if (n < 1 || k < 1) throw ConfigError("choose_C: N and K must be >= 1");
  if (n > 600 * k) return std::max<std::size_t>(1, n / 600);
  return 3 * k;
}

/// Softmax weights of image e over the selected noun features at temperature kappa.
template <class T>
std::vector<double> counterpart_weights(std::span<const T> e, const FeatureMatrix& texts,
                                        std::span<const std::size_t> selected, double kappa) {
  std::vector<double> a(selected.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < selected.size(); ++j) {
    a[j] = dot(e, texts.row(selected[j])) / kappa;
    top = std::max(top, a[j]);
  }
  double z = 0.0;
  for (auto& x : a) {
    x = std::exp(x - top);
    z += x;
  }
  for (auto& x : a) x /= z;
  return a;
}

/// v_i = sum_j softmax_j(e_i^T r_j / kappa) r_j over the selected nouns.
inline FeatureMatrix build_counterparts(const FeatureMatrix& images, const FeatureMatrix& texts,
                                        std::span<const std::size_t> selected, double kappa,
                                        bool renormalize = false) {
  if (selected.empty()) throw Error("build_counterparts: no positive semantics selected");
  if (!(kappa > 0.0)) throw ConfigError("build_counterparts: kappa must be > 0");
  if (images.dim() != texts.dim()) throw Error("build_counterparts: image/text dim mismatch");
  for (auto j : selected)
    if (j >= texts.rows()) throw Error("build_counterparts: selected index " + std::to_string(j) + " out of range");
  // A fixed summation order makes v_i independent of how the set is listed.
  std::vector<std::size_t> set(selected.begin(), selected.end());
  std::sort(set.begin(), set.end());
  const std::size_t d = images.dim();
  FeatureMatrix out(images.rows(), d, Role::text);
  parallel_for(images.rows(), [&](std::size_t i) {
    const auto w = counterpart_weights(images.row(i), texts, set, kappa);
    std::vector<double> v(d, 0.0);
    for (std::size_t j = 0; j < set.size(); ++j) {
      const auto r = texts.row(set[j]);
      for (std::size_t q = 0; q < d; ++q) v[q] += w[j] * static_cast<double>(r[q]);
    }
    double scale = 1.0;
    if (renormalize) {
      const double n = std::sqrt(squared_norm(std::span<const double>(v)));
      if (n > 0.0) scale = 1.0 / n;
    }
    auto dst = out.row(i);
    for (std::size_t q = 0; q < d; ++q) dst[q] = static_cast<float>(v[q] * scale);
  });
  return out;
}

/// Row i = [e_i ; v_i], no renormalization.
inline FeatureMatrix concat_features(const FeatureMatrix& images, const FeatureMatrix& counterparts) {
  if (images.rows() != counterparts.rows() || images.dim() != counterparts.dim()) {
    throw Error("concat_features: shape mismatch");
  }
  const std::size_t d = images.dim();
  FeatureMatrix out(images.rows(), 2 * d, Role::image);
  for (std::size_t i = 0; i < images.rows(); ++i) {
    auto dst = out.row(i);
    std::copy_n(images.row(i).begin(), d, dst.begin());
    std::copy_n(counterparts.row(i).begin(), d, dst.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return out;
}

/// Zero-shot baseline: argmax_k softmax(tau * e^T t_k), i.e. argmax cosine.
inline std::vector<std::int32_t> zero_shot_assign(const FeatureMatrix& images, const FeatureMatrix& class_texts,
                                                  double tau) {
  if (class_texts.rows() == 0) throw Error("zero_shot_assign: empty class set");
  if (!(tau > 0.0)) throw ConfigError("zero_shot_assign: tau must be > 0");
  if (images.dim() != class_texts.dim()) throw Error("zero_shot_assign: dim mismatch");
  std::vector<std::int32_t> out(images.rows());
  parallel_for(images.rows(), [&](std::size_t i) {
    std::size_t best = 0;
    double best_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < class_texts.rows(); ++k) {
      const double l = tau * dot(images.row(i), class_texts.row(k));
      if (l > best_logit) {
        best_logit = l;
        best = k;
      }
    }
    out[i] = static_cast<std::int32_t>(best);
  });
  return out;
}

/// Ground truth, when known, for evaluation only.
struct PipelineTruth {
  std::optional<LabelVector> image_labels;
  std::optional<std::vector<bool>> positivity;
};

struct Stage1Result {
  std::size_t clusters = 0;
  KMeansResult kmeans;
  TrainResult training;
  ScoreTable scores;
  FilterResult filter;
};

struct Stage2Result {
  FeatureMatrix counterparts;
  KMeansResult kmeans;
};

struct PipelineResult {
  Stage1Result stage1;
  Stage2Result stage2;
  std::optional<std::vector<std::int32_t>> baseline_assignments;
  MetricsReport metrics;

  const std::vector<std::int32_t>& assignments() const { return stage2.kmeans.assignments; }
};

namespace detail {

template <class F>
auto run_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

inline void require_unit(const FeatureMatrix& m, const char* what) {
  m.validate();
  const double dev = max_norm_deviation(m);
  if (dev > unit_norm_tol) {
    throw Error(std::string(what) + " are not unit norm (max deviation " + std::to_string(dev) + ")");
  }
}

}  // namespace detail

inline Stage1Result run_stage1(const FeatureMatrix& images, const FeatureMatrix& texts, const PipelineConfig& cfg) {
  cfg.validate();
  Stage1Result s;
  s.clusters = cfg.c ? *cfg.c : choose_C(images.rows(), cfg.k);
  if (s.clusters > images.rows()) s.clusters = images.rows();
  s.kmeans = detail::run_stage("stage-1 k-means", [&] {
    return kmeans_fit(images, KMeansOptions{s.clusters, cfg.stage1_seed(), cfg.kmeans_max_iters, cfg.kmeans_tol});
  });
  TrainConfig tc = cfg.train;
  tc.temperature = cfg.tau;
  tc.seed = cfg.train_seed();
  s.training = detail::run_stage("classifier training",
                                 [&] { return train_adam(images, s.kmeans.assignments, s.clusters, tc); });
  s.scores = detail::run_stage("scoring", [&] { return score_all(texts, s.training.weights, cfg.tau); });
  s.filter = detail::run_stage("filtering", [&] { return filter_positive(s.scores, cfg.beta, cfg.score_kind); });
  return s;
}

/// Stage 2 consumes only the images, the selected noun indices, kappa and seed.
inline Stage2Result run_stage2(const FeatureMatrix& images, const FeatureMatrix& texts,
                               std::span<const std::size_t> selected, const PipelineConfig& cfg) {
  Stage2Result s;
  s.counterparts = detail::run_stage("counterparts", [&] {
    return build_counterparts(images, texts, selected, cfg.kappa, cfg.renormalize_counterparts);
  });
  s.kmeans = detail::run_stage("stage-2 k-means", [&] {
    return kmeans_fit(concat_features(images, s.counterparts),
                      KMeansOptions{cfg.k, cfg.stage2_seed(), cfg.kmeans_max_iters, cfg.kmeans_tol});
  });
  return s;
}

inline MetricsReport evaluate(const PipelineResult& r, const PipelineTruth& truth) {
  MetricsReport m;
  if (truth.image_labels) {
    const auto& y = truth.image_labels->labels;
    if (y.size() != r.assignments().size()) throw Error("evaluate: truth label count mismatch");
    if (std::all_of(y.begin(), y.end(), [](auto v) { return v >= 0; })) {
      m.acc = clustering_accuracy(r.assignments(), y);
      m.nmi = nmi(r.assignments(), y);
      m.ari = ari(r.assignments(), y);
      if (r.baseline_assignments) m.baseline_acc = clustering_accuracy(*r.baseline_assignments, y);
    }
  }
  if (truth.positivity) {
    m.err_pos = err_pos(r.stage1.scores, r.stage1.filter, *truth.positivity);
    m.mean_err_pos = mean_err_pos(m.err_pos);
    const auto pr = filter_prf(r.stage1.filter, *truth.positivity);
    m.precision = pr.precision;
    m.recall = pr.recall;
  }
  return m;
}

inline PipelineResult run_pipeline(const FeatureMatrix& images, const FeatureMatrix& texts,
                                   const PipelineConfig& cfg, const PipelineTruth& truth = {}) {
  cfg.validate();
  detail::run_stage("input validation", [&] {
    detail::require_unit(images, "image features");
    detail::require_unit(texts, "text features");
    if (images.dim() != texts.dim()) throw Error("image dim " + std::to_string(images.dim()) + " != text dim " +
                                                 std::to_string(texts.dim()));
    if (cfg.k > images.rows()) throw Error("k exceeds the number of images");
    return 0;
  });

  PipelineResult r;
  r.stage1 = run_stage1(images, texts, cfg);
  r.stage2 = run_stage2(images, texts, r.stage1.filter.selected, cfg);
  if (truth.image_labels) {
    r.baseline_assignments = detail::run_stage("baseline k-means", [&] {
      return kmeans_fit(images, KMeansOptions{cfg.k, cfg.stage2_seed(), cfg.kmeans_max_iters, cfg.kmeans_tol})
          .assignments;
    });
  }
  r.metrics = evaluate(r, truth);
  return r;
}

}  // namespace laic
