#pragma once

// key=value configuration: file values first, then flag overrides.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>

#include "laic/error.hpp"
#include "laic/pipeline.hpp"

namespace laic {

using KeyValues = std::map<std::string, std::string>;

inline std::string normalize_key(std::string key) {
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// One key=value per line; '#' starts a comment.
inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    out[normalize_key(std::string(trim(line.substr(0, eq))))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

inline KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_key_values(text);
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("non-numeric value '" + v + "' for " + key);
  }
  return x;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("non-numeric value '" + v + "' for " + key + " (expected a nonnegative integer)");
  }
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

inline std::string shortest(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

/// Builds a validated PipelineConfig. Flags override file values; unknown
/// keys are rejected; k is required.
inline PipelineConfig parse_config(const KeyValues& file_values, const KeyValues& flag_values = {}) {
  KeyValues merged;
  for (const auto& [k, v] : file_values) merged[normalize_key(k)] = v;
  for (const auto& [k, v] : flag_values) merged[normalize_key(k)] = v;

  PipelineConfig cfg;
  bool have_k = false;
  for (const auto& [key, v] : merged) {
    if (key == "k") {
      cfg.k = detail::to_uint(key, v);
      have_k = true;
    } else if (key == "c") {
      if (v == "auto") cfg.c.reset();
      else cfg.c = detail::to_uint(key, v);
    } else if (key == "tau") {
      cfg.tau = detail::to_double(key, v);
    } else if (key == "kappa") {
      cfg.kappa = detail::to_double(key, v);
    } else if (key == "beta") {
      cfg.beta = detail::to_uint(key, v);
    } else if (key == "epochs") {
      cfg.train.epochs = detail::to_uint(key, v);
    } else if (key == "lr") {
      cfg.train.learning_rate = detail::to_double(key, v);
    } else if (key == "batch") {
      cfg.train.batch_size = detail::to_uint(key, v);
    } else if (key == "seed") {
      cfg.seed = detail::to_uint(key, v);
    } else if (key == "score_kind") {
      cfg.score_kind = parse_score_kind(v);
    } else if (key == "loss") {
      if (v == "ce") cfg.train.loss = LossVariant::standard_ce;
      else if (v == "secu") cfg.train.loss = LossVariant::secu;
      else throw ConfigError("unknown loss '" + v + "' (expected ce|secu)");
    } else if (key == "renormalize") {
      cfg.renormalize_counterparts = detail::to_bool(key, v);
    } else if (key == "kmeans_max_iters") {
      cfg.kmeans_max_iters = detail::to_uint(key, v);
    } else if (key == "kmeans_tol") {
      cfg.kmeans_tol = detail::to_double(key, v);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (!have_k) throw ConfigError("missing required --k");
  cfg.train.temperature = cfg.tau;
  cfg.validate();
  return cfg;
}

/// Inverse of parse_config: every key, in canonical form.
inline KeyValues to_key_values(const PipelineConfig& cfg) {
  KeyValues kv;
  kv["k"] = std::to_string(cfg.k);
  kv["c"] = cfg.c ? std::to_string(*cfg.c) : "auto";
  kv["tau"] = detail::shortest(cfg.tau);
  kv["kappa"] = detail::shortest(cfg.kappa);
  kv["beta"] = std::to_string(cfg.beta);
  kv["epochs"] = std::to_string(cfg.train.epochs);
  kv["lr"] = detail::shortest(cfg.train.learning_rate);
  kv["batch"] = std::to_string(cfg.train.batch_size);
  kv["seed"] = std::to_string(cfg.seed);
  kv["score_kind"] = to_string(cfg.score_kind);
  kv["loss"] = cfg.train.loss == LossVariant::secu ? "secu" : "ce";
  kv["renormalize"] = cfg.renormalize_counterparts ? "true" : "false";
  kv["kmeans_max_iters"] = std::to_string(cfg.kmeans_max_iters);
  kv["kmeans_tol"] = detail::shortest(cfg.kmeans_tol);
  return kv;
}

}  // namespace laic
