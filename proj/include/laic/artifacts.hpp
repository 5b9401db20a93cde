#pragma once

// On-disk artifacts of a pipeline run:
//   scores.csv  filter.json  counterparts.laic  weights.laic
//   assignments.csv  report.json  [concat.csv]

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "laic/config.hpp"
#include "laic/featurestore.hpp"
#include "laic/pipeline.hpp"

namespace laic {

using json = nlohmann::json;

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, p);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json threshold_json(double t) { return std::isfinite(t) ? json(t) : json(nullptr); }

}  // namespace detail

inline std::string scores_csv(const ScoreTable& table) {
  std::string out = "index,predicted_cluster,gradnorm,msp,cosine\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& r = table.records[i];
    out += std::to_string(i);
    out += ',';
    out += std::to_string(r.predicted);
    for (double v : {r.gradnorm, r.msp, r.cosine}) {
      out += ',';
      detail::append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

/// {"<cluster>": {"threshold": number|null, "indices": [...]}}. A null
/// threshold means the cluster held fewer than beta nouns.
inline json filter_json(const FilterResult& f) {
  json out = json::object();
  for (std::size_t k = 0; k < f.clusters.size(); ++k) {
    out[std::to_string(k)] = {{"threshold", detail::threshold_json(f.clusters[k].threshold)},
                              {"indices", f.clusters[k].indices}};
  }
  return out;
}

/// Union of the selected indices stored in a filter.json document, ascending.
inline std::vector<std::size_t> selected_from_filter_json(const json& doc) {
  std::vector<std::size_t> out;
  for (const auto& [key, value] : doc.items()) {
    for (const auto& i : value.at("indices")) out.push_back(i.get<std::size_t>());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string assignments_csv(const std::vector<std::int32_t>& a) {
  std::string out = "index,cluster\n";
  for (std::size_t i = 0; i < a.size(); ++i) out += std::to_string(i) + ',' + std::to_string(a[i]) + '\n';
  return out;
}

inline std::vector<std::int32_t> parse_assignments_csv(const std::string& text) {
  std::vector<std::int32_t> out;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) return out;
  ++pos;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("assignments.csv: malformed line '" + line + "'");
    std::int32_t v = 0;
    const auto [p, ec] = std::from_chars(line.data() + comma + 1, line.data() + line.size(), v);
    if (ec != std::errc{}) throw FormatError("assignments.csv: malformed line '" + line + "'");
    out.push_back(v);
  }
  return out;
}

inline std::string concat_csv(const FeatureMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out += ',';
      detail::append_number(out, static_cast<double>(r[j]));
    }
    out += '\n';
  }
  return out;
}

inline json config_json(const PipelineConfig& cfg) {
  json out = json::object();
  for (const auto& [k, v] : to_key_values(cfg)) out[k] = v;
  return out;
}

inline json report_json(const MetricsReport& m, const PipelineConfig& cfg, std::size_t stage1_clusters) {
  json err = json::object();
  for (std::size_t k = 0; k < m.err_pos.size(); ++k) err[std::to_string(k)] = detail::optional_json(m.err_pos[k].rate);
  json config = config_json(cfg);
  config["c_resolved"] = stage1_clusters;
  return {{"acc", detail::optional_json(m.acc)},
          {"nmi", detail::optional_json(m.nmi)},
          {"ari", detail::optional_json(m.ari)},
          {"baseline_acc", detail::optional_json(m.baseline_acc)},
          {"err_pos", err},
          {"mean_err_pos", detail::optional_json(m.mean_err_pos)},
          {"precision", detail::optional_json(m.precision)},
          {"recall", detail::optional_json(m.recall)},
          {"config", config},
          {"seeds", {{"stage1", cfg.stage1_seed()}, {"train", cfg.train_seed()}, {"stage2", cfg.stage2_seed()}}}};
}

struct ArtifactOptions {
  bool emit_concat = false;
};

/// Writes stage-1 artifacts (scores, filter, weights).
inline void write_stage1_artifacts(const Stage1Result& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "scores.csv", scores_csv(s.scores));
  detail::write_text(dir / "filter.json", filter_json(s.filter).dump(2) + "\n");
  write_laic(s.training.weights.to_feature_matrix(), nullptr, dir / "weights.laic");
}

inline void write_artifacts(const PipelineResult& r, const FeatureMatrix& images, const PipelineConfig& cfg,
                            const std::filesystem::path& dir, const ArtifactOptions& opt = {}) {
  write_stage1_artifacts(r.stage1, dir);
  write_laic(r.stage2.counterparts, nullptr, dir / "counterparts.laic");
  detail::write_text(dir / "assignments.csv", assignments_csv(r.assignments()));
  detail::write_text(dir / "report.json", report_json(r.metrics, cfg, r.stage1.clusters).dump(2) + "\n");
  if (opt.emit_concat) detail::write_text(dir / "concat.csv", concat_csv(concat_features(images, r.stage2.counterparts)));
}

}  // namespace laic
