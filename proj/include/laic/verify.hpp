#pragma once

// Self-contained numerical checks behind `laic verify`. Generates its own
// random instances from a seed; needs no input files.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "laic/classifier.hpp"
#include "laic/featurestore.hpp"
#include "laic/rng.hpp"
#include "laic/scoring.hpp"

namespace laic {

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t trials = 1000;
  std::size_t fixed_point_instances = 20;
  double identity_tol = 1e-6;
  double fd_tol = 1e-6;
  double fd_step = 1e-5;
  double residual_tol = 1e-6;
  double limit_tol = 1e-4;
};

struct VerifyReport {
  double max_identity_rel = 0.0;   ///< closed form vs explicit gradient
  double max_fd_rel = 0.0;         ///< explicit gradient vs central differences
  std::size_t self_bound_violations = 0;
  double max_fixed_point_residual = 0.0;
  std::size_t fixed_point_failures = 0;
  double max_limit_gap = 0.0;      ///< small-tau solver vs class centroids
  bool identity_ok = false, fd_ok = false, self_bound_ok = false, fixed_point_ok = false;

  bool ok() const { return identity_ok && fd_ok && self_bound_ok && fixed_point_ok; }
};

struct RandomInstance {
  ClassifierWeights weights;
  std::vector<double> text;
  double tau = 1.0;
};

/// W ~ N(0, 1/d) entries, unit-norm text row, tau cycling through {1, 12.5, 50}.
inline RandomInstance random_instance(std::uint64_t seed, std::size_t trial) {
  static constexpr std::array<double, 3> taus{1.0, 12.5, 50.0};
  auto gen = make_stream(seed, 0x76657269ULL, trial);
  std::uniform_int_distribution<std::size_t> dim_pick(2, 32), class_pick(2, 10);
  const std::size_t d = dim_pick(gen);
  const std::size_t c = class_pick(gen);
  RandomInstance inst;
  inst.tau = taus[trial % taus.size()];
  inst.weights = ClassifierWeights(d, c);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  for (auto& v : inst.weights.w.data) v = normal(gen);
  inst.text.resize(d);
  detail::unit_gaussian(gen, inst.text);
  return inst;
}

/// Central-difference gradient of ce_loss w.r.t. every entry of W.
inline ColMatrix finite_difference_gradient(std::span<const double> z, std::int64_t y, const ClassifierWeights& w,
                                            double tau, double step) {
  ColMatrix g(w.dim(), w.classes());
  ClassifierWeights probe = w;
  for (std::size_t q = 0; q < probe.w.data.size(); ++q) {
    const double orig = probe.w.data[q];
    probe.w.data[q] = orig + step;
    const double up = ce_loss(z, y, probe, tau);
    probe.w.data[q] = orig - step;
    const double down = ce_loss(z, y, probe, tau);
    probe.w.data[q] = orig;
    g.data[q] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double relative_frobenius(const ColMatrix& approx, const ColMatrix& exact) {
  double num = 0.0;
  for (std::size_t q = 0; q < exact.data.size(); ++q) num += (approx.data[q] - exact.data[q]) * (approx.data[q] - exact.data[q]);
  return std::sqrt(num) / std::max(std::sqrt(exact.frobenius_sq()), 1e-12);
}

struct FixedPointInstance {
  FeatureMatrix images;
  std::vector<std::int32_t> labels;
  std::size_t classes = 0;
};

/// Clustered unit data with d <= 16, C <= 5, n <= 200 and every class nonempty.
inline FixedPointInstance random_fixed_point_instance(std::uint64_t seed, std::size_t index) {
  auto gen = make_stream(seed, 0x66697870ULL, index);
  std::uniform_int_distribution<std::size_t> dim_pick(2, 16), class_pick(2, 5), n_pick(20, 200);
  HuberSynthConfig cfg;
  cfg.dim = dim_pick(gen);
  cfg.num_classes = class_pick(gen);
  cfg.num_images = n_pick(gen);
  cfg.num_texts = 1;
  cfg.concentration_pos = 10.0;
  cfg.seed = gen();
  auto data = generate_huber_dataset(cfg);
  FixedPointInstance out;
  out.classes = cfg.num_classes;
  out.labels = data.image_labels.labels;
  // Guarantee nonempty classes by relabelling the first rows.
  for (std::size_t k = 0; k < cfg.num_classes; ++k) out.labels[k] = static_cast<std::int32_t>(k);
  out.images = std::move(data.images);
  return out;
}

inline VerifyReport run_verification(const VerifyOptions& opt) {
  VerifyReport rep;
  for (std::size_t t = 0; t < opt.trials; ++t) {
    const auto inst = random_instance(opt.seed, t);
    const std::span<const double> r(inst.text);
    const auto g = gradnorm_score(r, inst.weights, inst.tau);
    const double direct = score_direct(r, inst.weights, inst.tau);
    rep.max_identity_rel = std::max(rep.max_identity_rel, std::abs(g.score - direct) / std::max(direct, 1e-12));

    const auto y = static_cast<std::int64_t>(g.predicted);
    const auto exact = grad_ce(r, y, inst.weights, inst.tau);
    const auto fd = finite_difference_gradient(r, y, inst.weights, inst.tau, opt.fd_step);
    rep.max_fd_rel = std::max(rep.max_fd_rel, relative_frobenius(fd, exact));

    const double bound = 2.0 * inst.tau * inst.tau * ce_loss(r, y, inst.weights, inst.tau);
    if (g.score > bound) ++rep.self_bound_violations;
  }
  for (std::size_t t = 0; t < opt.fixed_point_instances; ++t) {
    const auto inst = random_fixed_point_instance(opt.seed, t);
    const auto fp = fixed_point_weights(inst.images, inst.labels, inst.classes, 1.0);
    rep.max_fixed_point_residual = std::max(rep.max_fixed_point_residual, fp.residual);
    if (!fp.converged || fp.residual > opt.residual_tol) ++rep.fixed_point_failures;

    const auto small = fixed_point_weights(inst.images, inst.labels, inst.classes, 1e-6);
    const auto centers = centroid_limit(inst.images, inst.labels, inst.classes);
    for (std::size_t k = 0; k < inst.classes; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < centers.dim(); ++q) {
        const double diff = small.weights.w(q, k) - centers.w(q, k);
        s += diff * diff;
      }
      rep.max_limit_gap = std::max(rep.max_limit_gap, std::sqrt(s));
    }
  }
  rep.identity_ok = rep.max_identity_rel <= opt.identity_tol;
  rep.fd_ok = rep.max_fd_rel <= opt.fd_tol;
  rep.self_bound_ok = rep.self_bound_violations == 0;
  rep.fixed_point_ok = rep.fixed_point_failures == 0 && rep.max_limit_gap <= opt.limit_tol;
  return rep;
}

}  // namespace laic
