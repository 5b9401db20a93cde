#pragma once

// Positiveness scores for wild text features and the per-cluster
// beta-budget filter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laic/classifier.hpp"
#include "laic/error.hpp"
#include "laic/featurestore.hpp"
#include "laic/parallel.hpp"

namespace laic {

enum class ScoreKind { gradnorm, msp, cosine };

inline const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::gradnorm: return "gradnorm";
    case ScoreKind::msp: return "msp";
    case ScoreKind::cosine: return "cosine";
  }
  return "?";
}

inline ScoreKind parse_score_kind(const std::string& s) {
  if (s == "gradnorm") return ScoreKind::gradnorm;
  if (s == "msp") return ScoreKind::msp;
  if (s == "cosine") return ScoreKind::cosine;
  throw ConfigError("unknown score kind '" + s + "' (expected gradnorm|msp|cosine)");
}

struct GradNormScore {
  double score = 0.0;
  std::size_t predicted = 0;
  std::vector<double> probs;
  bool non_unit = false;
};

inline constexpr double unit_norm_tol = 1e-4;

/// S = tau^2 |r|^2 (sum_k pi_k^2 + 1 - 2 max_j pi_j), evaluated as
/// tau^2 |r|^2 (sum_{k != y} pi_k^2 + (1 - pi_y)^2) with y the argmax.
template <class T>
GradNormScore gradnorm_score(std::span<const T> r, const ClassifierWeights& w, double tau) {
  const auto s = softmax_state(r, w, tau);
  const double n2 = squared_norm(r);
  GradNormScore out;
  out.predicted = s.argmax;
  out.probs = s.probs();
  out.non_unit = std::abs(std::sqrt(n2) - 1.0) > unit_norm_tol;
  double off = 0.0;
  for (std::size_t k = 0; k < out.probs.size(); ++k)
    if (k != s.argmax) off += out.probs[k] * out.probs[k];
  const double miss = s.complement(s.argmax);
  out.score = tau * tau * n2 * (off + miss * miss);
  return out;
}

/// Squared Frobenius norm of the explicit gradient matrix at the predicted
/// label. Verification path for gradnorm_score.
template <class T>
double score_direct(std::span<const T> r, const ClassifierWeights& w, double tau) {
  const auto y = softmax_state(r, w, tau).argmax;
  return grad_ce(r, static_cast<std::int64_t>(y), w, tau).frobenius_sq();
}

/// tau^2 |r|^2 (1 - max pi)^2: the SeCu gradient restricted to column y.
template <class T>
double msp_score(std::span<const T> r, const ClassifierWeights& w, double tau) {
  const auto s = softmax_state(r, w, tau);
  const double miss = s.complement(s.argmax);
  return tau * tau * squared_norm(r) * miss * miss;
}

struct CosineScore {
  double cosine = 0.0;
  std::size_t index = 0;
  bool raw_inner_product = false;  ///< inputs were not unit norm
};

template <class T>
CosineScore cosine_score(std::span<const T> r, const ClassifierWeights& w) {
  detail::check_dims(r.size(), w, "cosine_score");
  CosineScore out;
  out.cosine = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.classes(); ++k) {
    const double c = dot(r, w.column(k));
    if (c > out.cosine) {
      out.cosine = c;
      out.index = k;
    }
  }
  bool unit = std::abs(std::sqrt(squared_norm(r)) - 1.0) <= unit_norm_tol;
  if (!w.unit_columns) {
    for (std::size_t k = 0; k < w.classes() && unit; ++k)
      unit = std::abs(std::sqrt(squared_norm(w.column(k))) - 1.0) <= unit_norm_tol;
  }
  out.raw_inner_product = !unit;
  return out;
}

struct ScoreRecord {
  std::size_t predicted = 0;  ///< argmax_j pi_ij
  double gradnorm = 0.0;
  double msp = 0.0;
  double cosine = 0.0;
  std::vector<double> probs;  ///< kept only when requested

  double get(ScoreKind k) const {
    switch (k) {
      case ScoreKind::gradnorm: return gradnorm;
      case ScoreKind::msp: return msp;
      case ScoreKind::cosine: return cosine;
    }
    return gradnorm;
  }
};

struct ScoreTable {
  std::size_t num_clusters = 0;
  double temperature = 0.0;
  std::vector<ScoreRecord> records;
  std::size_t non_unit_rows = 0;

  std::size_t size() const noexcept { return records.size(); }
};

inline ScoreTable score_all(const FeatureMatrix& texts, const ClassifierWeights& w, double tau,
                            bool keep_probs = false) {
  ScoreTable table;
  table.num_clusters = w.classes();
  table.temperature = tau;
  table.records.resize(texts.rows());
  if (texts.rows() == 0) return table;
  detail::check_dims(texts.dim(), w, "score_all");
  std::vector<char> non_unit(texts.rows(), 0);
  parallel_for(texts.rows(), [&](std::size_t i) {
    const auto r = texts.row(i);
    auto g = gradnorm_score(r, w, tau);
    ScoreRecord& rec = table.records[i];
    rec.predicted = g.predicted;
    rec.gradnorm = g.score;
    rec.msp = msp_score(r, w, tau);
    rec.cosine = cosine_score(r, w).cosine;
    if (keep_probs) rec.probs = std::move(g.probs);
    non_unit[i] = g.non_unit;
  });
  table.non_unit_rows = static_cast<std::size_t>(std::count(non_unit.begin(), non_unit.end(), 1));
  return table;
}

// ---------------------------------------------------------------------------
// Filter

struct ClusterSelection {
  /// beta-th best score; +inf (-inf for cosine) when the cluster holds fewer
  /// than beta nouns.
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> indices;  ///< in selection order
  std::size_t candidates = 0;        ///< nouns predicted into this cluster
};

struct FilterResult {
  ScoreKind kind = ScoreKind::gradnorm;
  std::size_t beta = 0;
  std::vector<ClusterSelection> clusters;
  std::vector<std::size_t> selected;  ///< union, ascending noun index
  std::vector<std::size_t> empty_clusters;

  /// True when `score` would be rejected by cluster k's threshold.
  bool beyond_threshold(std::size_t k, double score) const {
    const double t = clusters[k].threshold;
    return kind == ScoreKind::cosine ? score < t : score > t;
  }
};

/// Per cluster, nouns are ranked by (score, index) (descending score for
/// cosine) and the first min(beta, count) are kept.
inline FilterResult filter_positive(const ScoreTable& table, std::size_t beta, ScoreKind kind) {
  if (beta < 1) throw ConfigError("filter_positive: beta must be >= 1");
  FilterResult out;
  out.kind = kind;
  out.beta = beta;
  out.clusters.resize(table.num_clusters);
  std::vector<std::vector<std::size_t>> members(table.num_clusters);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto k = table.records[i].predicted;
    if (k >= table.num_clusters) throw Error("filter_positive: predicted cluster out of range");
    members[k].push_back(i);
  }
  const bool descending = kind == ScoreKind::cosine;
  for (std::size_t k = 0; k < table.num_clusters; ++k) {
    auto& m = members[k];
    auto& sel = out.clusters[k];
    sel.candidates = m.size();
    sel.threshold = descending ? -std::numeric_limits<double>::infinity()
                               : std::numeric_limits<double>::infinity();
    if (m.empty()) {
      out.empty_clusters.push_back(k);
      continue;
    }
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
      const double sa = table.records[a].get(kind);
      const double sb = table.records[b].get(kind);
      if (sa != sb) return descending ? sa > sb : sa < sb;
      return a < b;
    });
    const std::size_t take = std::min(beta, m.size());
    sel.indices.assign(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(take));
    if (m.size() >= beta) sel.threshold = table.records[m[beta - 1]].get(kind);
    out.selected.insert(out.selected.end(), sel.indices.begin(), sel.indices.end());
  }
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

}  // namespace laic
