// laic: command-line front end for the language-assisted clustering library.
//
//   laic synth   --out DIR [--dim --classes --num-images --num-texts --pi ...]
//   laic ingest  --csv FILE --dim D --out FILE.laic [--labels FILE] [--normalize]
//   laic run     --images A.laic --texts B.laic --k K --out DIR [config flags]
//   laic score   (stage 1 only, same flags as run)
//   laic ablate  --param kappa|tau|beta [--from --to --steps] (+ run flags)
//   laic verify  [--seed S --trials N]
//   laic report  --out DIR [--images A.laic]
//
// Exit codes: 0 ok, 1 validation error, 2 runtime failure, 3 verification failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "laic/laic.hpp"

namespace fs = std::filesystem;
using laic::json;

namespace {

constexpr int exit_validation = 1;
constexpr int exit_runtime = 2;
constexpr int exit_verify = 3;

void log(const std::string& msg) { std::cerr << "[laic] " << msg << '\n'; }

std::string fmt(std::optional<double> v) {
  if (!v) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

/// Config flags shared by run/score/ablate. Values stay strings until
/// parse_config so that flag > file precedence happens in one place.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"k", "target cluster count K (required)"},
        {"c", "stage-1 cluster count or 'auto'"},
        {"tau", "classifier temperature (default 12.5)"},
        {"kappa", "counterpart temperature (default 0.006)"},
        {"beta", "nouns kept per cluster (default 5)"},
        {"epochs", "training epochs (default 30)"},
        {"lr", "Adam learning rate (default 1e-3)"},
        {"batch", "mini-batch size (default 2048)"},
        {"seed", "base seed (default 0)"},
        {"score-kind", "gradnorm|msp|cosine"},
        {"loss", "ce|secu"},
        {"renormalize", "renormalize counterparts (true|false)"},
    };
    for (const auto& [key, help] : keys) {
      options[key] = app.add_option("--" + key, values[key], help);
    }
  }

  laic::KeyValues explicit_values() const {
    laic::KeyValues out;
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) out[laic::normalize_key(key)] = values.at(key);
    return out;
  }
};

struct RunArgs {
  std::string images, texts, out, config, manifest;
  bool emit_concat = false;
  ConfigFlags flags;

  void attach(CLI::App& app) {
    app.add_option("--images", images, "image features (LAICFTR1)");
    app.add_option("--texts", texts, "wild text features (LAICFTR1)");
    app.add_option("--out", out, "output directory");
    app.add_option("--config", config, "key=value config file");
    app.add_option("--manifest", manifest, "re-run from a manifest.json");
    flags.attach(app);
  }
};

struct ResolvedRun {
  laic::PipelineConfig cfg;
  laic::KeyValues config_values;
  std::string images, texts, out;
  bool emit_concat = false;
};

ResolvedRun resolve(const RunArgs& a) {
  ResolvedRun r;
  laic::KeyValues file_values;
  r.images = a.images;
  r.texts = a.texts;
  r.out = a.out;
  r.emit_concat = a.emit_concat;
  if (!a.manifest.empty()) {
    const json m = json::parse(laic::detail::read_text(a.manifest));
    for (const auto& [k, v] : m.at("config").items()) file_values[k] = v.get<std::string>();
    if (r.images.empty()) r.images = m.at("inputs").at("images").get<std::string>();
    if (r.texts.empty()) r.texts = m.at("inputs").at("texts").get<std::string>();
    if (r.out.empty()) r.out = m.at("out").get<std::string>();
    if (m.contains("emit_concat")) r.emit_concat = r.emit_concat || m.at("emit_concat").get<bool>();
  }
  if (!a.config.empty()) {
    for (const auto& [k, v] : laic::read_config_file(a.config)) file_values[k] = v;
  }
  r.cfg = laic::parse_config(file_values, a.flags.explicit_values());
  r.config_values = laic::to_key_values(r.cfg);
  if (r.images.empty() || r.texts.empty()) throw laic::ConfigError("--images and --texts are required");
  if (r.out.empty()) throw laic::ConfigError("--out is required");
  return r;
}

struct Inputs {
  laic::LaicFile images, texts;
  laic::PipelineTruth truth;
};

Inputs load_inputs(const ResolvedRun& r) {
  Inputs in{laic::read_laic(r.images), laic::read_laic(r.texts), {}};
  in.images.matrix.set_role(laic::Role::image);
  in.texts.matrix.set_role(laic::Role::text);
  if (in.images.labels) in.truth.image_labels = in.images.labels;
  if (in.texts.labels) in.truth.positivity = laic::positivity_from_labels(*in.texts.labels);
  log("images " + std::to_string(in.images.matrix.rows()) + "x" + std::to_string(in.images.matrix.dim()) +
      ", texts " + std::to_string(in.texts.matrix.rows()) + "x" + std::to_string(in.texts.matrix.dim()));
  return in;
}

void write_manifest(const std::string& command, const ResolvedRun& r, std::size_t threads, double seconds) {
  json m = {{"command", command},
            {"version", laic::version},
            {"config", json(r.config_values)},
            {"inputs", {{"images", r.images}, {"texts", r.texts}}},
            {"out", r.out},
            {"seeds", {{"stage1", r.cfg.stage1_seed()}, {"train", r.cfg.train_seed()}, {"stage2", r.cfg.stage2_seed()}}},
            {"threads", threads},
            {"emit_concat", r.emit_concat},
            {"duration_seconds", seconds}};
  laic::detail::write_text(fs::path(r.out) / "manifest.json", m.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_run(const RunArgs& a, std::size_t threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(a);
  const auto in = load_inputs(r);
  const auto result = laic::run_pipeline(in.images.matrix, in.texts.matrix, r.cfg, in.truth);
  laic::write_artifacts(result, in.images.matrix, r.cfg, r.out, {r.emit_concat});
  write_manifest("run", r, threads, seconds_since(t0));
  const auto& m = result.metrics;
  log("C=" + std::to_string(result.stage1.clusters) + " selected=" + std::to_string(result.stage1.filter.selected.size()));
  log("acc=" + fmt(m.acc) + " nmi=" + fmt(m.nmi) + " ari=" + fmt(m.ari) + " baseline_acc=" + fmt(m.baseline_acc));
  if (!m.err_pos.empty()) {
    log("precision=" + fmt(m.precision) + " recall=" + fmt(m.recall) + " mean_err_pos=" + fmt(m.mean_err_pos));
  }
  if (!result.stage1.filter.empty_clusters.empty()) {
    log("warning: " + std::to_string(result.stage1.filter.empty_clusters.size()) + " clusters received no nouns");
  }
  log("artifacts written to " + r.out);
  return 0;
}

int cmd_score(const RunArgs& a, std::size_t threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(a);
  const auto in = load_inputs(r);
  const auto s = laic::run_stage1(in.images.matrix, in.texts.matrix, r.cfg);
  laic::write_stage1_artifacts(s, r.out);
  write_manifest("score", r, threads, seconds_since(t0));
  if (s.training.single_class) log("warning: all pseudo-labels are identical");
  if (s.scores.non_unit_rows) log("warning: " + std::to_string(s.scores.non_unit_rows) + " text rows are not unit norm");
  log("C=" + std::to_string(s.clusters) + " selected=" + std::to_string(s.filter.selected.size()));
  if (in.truth.positivity) {
    const auto pr = laic::filter_prf(s.filter, *in.truth.positivity);
    const auto e = laic::mean_err_pos(laic::err_pos(s.scores, s.filter, *in.truth.positivity));
    log("precision=" + fmt(pr.precision) + " recall=" + fmt(pr.recall) + " mean_err_pos=" + fmt(e));
  }
  return 0;
}

int cmd_ablate(const RunArgs& a, const std::string& param, std::optional<double> from, std::optional<double> to,
               std::size_t steps, std::size_t threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(a);
  double lo = 0, hi = 0;
  if (param == "kappa") lo = 0.002, hi = 0.02;
  else if (param == "tau") lo = 5, hi = 100;
  else if (param == "beta") lo = 1, hi = 10;
  else throw laic::ConfigError("--param must be kappa, tau or beta");
  lo = from.value_or(lo);
  hi = to.value_or(hi);
  if (steps < 1) throw laic::ConfigError("--steps must be >= 1");

  const auto in = load_inputs(r);
  if (!in.truth.image_labels) throw laic::ConfigError("ablate needs images with a label block");
  const auto& truth = in.truth.image_labels->labels;

  std::optional<laic::Stage1Result> shared;
  if (param != "tau") shared = laic::run_stage1(in.images.matrix, in.texts.matrix, r.cfg);

  std::string csv = "param,acc,nmi,ari\n";
  for (std::size_t s = 0; s < steps; ++s) {
    const double v = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(steps - 1);
    laic::PipelineConfig cfg = r.cfg;
    std::vector<std::size_t> selected;
    if (param == "kappa") {
      cfg.kappa = v;
      selected = shared->filter.selected;
    } else if (param == "beta") {
      cfg.beta = static_cast<std::size_t>(std::llround(v));
      selected = laic::filter_positive(shared->scores, cfg.beta, cfg.score_kind).selected;
    } else {
      cfg.tau = v;
      selected = laic::run_stage1(in.images.matrix, in.texts.matrix, cfg).filter.selected;
    }
    cfg.validate();
    const auto s2 = laic::run_stage2(in.images.matrix, in.texts.matrix, selected, cfg);
    const auto& pred = s2.kmeans.assignments;
    const double acc = laic::clustering_accuracy(pred, truth);
    const double n = laic::nmi(pred, truth);
    const double ar = laic::ari(pred, truth);
    std::string row;
    laic::detail::append_number(row, param == "beta" ? static_cast<double>(cfg.beta) : v);
    for (double x : {acc, n, ar}) {
      row += ',';
      laic::detail::append_number(row, x);
    }
    csv += row + '\n';
    log(param + "=" + row);
  }
  fs::create_directories(r.out);
  const fs::path path = fs::path(r.out) / ("ablate_" + param + ".csv");
  laic::detail::write_text(path, csv);
  write_manifest("ablate", r, threads, seconds_since(t0));
  log("wrote " + path.string());
  return 0;
}

int cmd_verify(std::uint64_t seed, std::size_t trials) {
  laic::VerifyOptions opt;
  opt.seed = seed;
  opt.trials = trials;
  const auto rep = laic::run_verification(opt);
  auto line = [](const char* name, const std::string& value, bool ok) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << ": " << value << '\n';
  };
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", rep.max_identity_rel);
  line("closed-form vs gradient matrix, max rel err", buf, rep.identity_ok);
  std::snprintf(buf, sizeof buf, "%.3e", rep.max_fd_rel);
  line("gradient vs central differences, max rel err", buf, rep.fd_ok);
  line("self-bounding violations", std::to_string(rep.self_bound_violations), rep.self_bound_ok);
  std::snprintf(buf, sizeof buf, "%.3e (limit gap %.3e)", rep.max_fixed_point_residual, rep.max_limit_gap);
  line("fixed-point residual", buf, rep.fixed_point_ok);
  return rep.ok() ? 0 : exit_verify;
}

int cmd_report(const std::string& dir, const std::string& images) {
  const json rep = json::parse(laic::detail::read_text(fs::path(dir) / "report.json"));
  for (const char* key : {"acc", "nmi", "ari", "baseline_acc", "precision", "recall", "mean_err_pos"}) {
    const auto& v = rep.at(key);
    std::cout << key << ": " << (v.is_null() ? std::string("null") : fmt(v.get<double>())) << '\n';
  }
  if (!images.empty()) {
    const auto file = laic::read_laic(images);
    if (!file.labels) throw laic::ConfigError(images + " has no label block");
    const auto pred = laic::parse_assignments_csv(laic::detail::read_text(fs::path(dir) / "assignments.csv"));
    std::cout << "recomputed acc: " << fmt(laic::clustering_accuracy(pred, file.labels->labels)) << '\n'
              << "recomputed nmi: " << fmt(laic::nmi(pred, file.labels->labels)) << '\n'
              << "recomputed ari: " << fmt(laic::ari(pred, file.labels->labels)) << '\n';
  }
  return 0;
}

int cmd_synth(const laic::HuberSynthConfig& cfg, const std::string& out) {
  const auto data = laic::generate_huber_dataset(cfg);
  fs::create_directories(out);
  write_laic(data.images, data.image_labels, fs::path(out) / "images.laic");
  write_laic(data.texts, data.text_labels, fs::path(out) / "texts.laic");
  write_laic(data.prototypes, nullptr, fs::path(out) / "prototypes.laic");
  const auto positives = std::count(data.positivity.begin(), data.positivity.end(), true);
  json m = {{"command", "synth"},
            {"version", laic::version},
            {"config",
             {{"dim", cfg.dim},
              {"classes", cfg.num_classes},
              {"num_images", cfg.num_images},
              {"num_texts", cfg.num_texts},
              {"pi", cfg.mixing},
              {"conc_pos", cfg.concentration_pos},
              {"conc_neg", cfg.concentration_neg},
              {"decoys", cfg.num_decoys},
              {"seed", cfg.seed}}},
            {"out", out}};
  laic::detail::write_text(fs::path(out) / "manifest.json", m.dump(2) + "\n");
  log("wrote " + std::to_string(cfg.num_images) + " images and " + std::to_string(cfg.num_texts) + " texts (" +
      std::to_string(positives) + " positive) to " + out);
  return 0;
}

int cmd_ingest(const std::string& csv, std::size_t dim, const std::string& out, const std::string& labels_path,
               bool normalize) {
  auto m = laic::from_csv(csv, dim);
  std::optional<laic::LabelVector> labels;
  if (!labels_path.empty()) {
    const std::string text = laic::detail::read_text(labels_path);
    std::vector<std::int32_t> v;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      const auto line = laic::trim(std::string_view(text).substr(pos, nl - pos));
      pos = nl + 1;
      if (line.empty()) continue;
      std::int32_t x = 0;
      const auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), x);
      if (ec != std::errc{} || p != line.data() + line.size())
        throw laic::FormatError("labels: non-integer '" + std::string(line) + "'");
      v.push_back(x);
    }
    labels = laic::LabelVector::from(std::move(v));
  }
  if (normalize) m = laic::l2_normalize(m);
  else if (!laic::is_unit_norm(m)) log("warning: rows are not unit norm; pass --normalize before running the pipeline");
  write_laic(m, labels, out);
  log("wrote " + std::to_string(m.rows()) + "x" + std::to_string(m.dim()) + " to " + out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laic: language-assisted image clustering over precomputed embeddings"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = all cores); never changes results");

  auto* synth = app.add_subcommand("synth", "generate a Huber-contaminated synthetic dataset");
  laic::HuberSynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--dim", synth_cfg.dim);
  synth->add_option("--classes", synth_cfg.num_classes);
  synth->add_option("--num-images", synth_cfg.num_images);
  synth->add_option("--num-texts", synth_cfg.num_texts);
  synth->add_option("--pi", synth_cfg.mixing, "fraction of positive texts");
  synth->add_option("--conc-pos", synth_cfg.concentration_pos);
  synth->add_option("--conc-neg", synth_cfg.concentration_neg);
  synth->add_option("--decoys", synth_cfg.num_decoys, "decoy prototypes for negatives (0 = uniform)");
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--out", synth_out)->required();

  auto* ingest = app.add_subcommand("ingest", "convert CSV embeddings to LAICFTR1");
  std::string ingest_csv, ingest_out, ingest_labels;
  std::size_t ingest_dim = 0;
  bool ingest_normalize = false;
  ingest->add_option("--csv", ingest_csv)->required();
  ingest->add_option("--dim", ingest_dim)->required();
  ingest->add_option("--out", ingest_out)->required();
  ingest->add_option("--labels", ingest_labels, "one integer label per line (-1 = unknown)");
  ingest->add_flag("--normalize", ingest_normalize, "L2-normalize rows before writing");

  auto* run = app.add_subcommand("run", "full two-stage pipeline");
  RunArgs run_args;
  run_args.attach(*run);
  run->add_flag("--emit-concat", run_args.emit_concat, "also write concat.csv");

  auto* score = app.add_subcommand("score", "stage 1 only: pseudo-labels, classifier, scores, filter");
  RunArgs score_args;
  score_args.attach(*score);

  auto* ablate = app.add_subcommand("ablate", "sweep kappa, tau or beta and record clustering metrics");
  RunArgs ablate_args;
  ablate_args.attach(*ablate);
  std::string ablate_param;
  std::optional<double> ablate_from, ablate_to;
  std::size_t ablate_steps = 10;
  ablate->add_option("--param", ablate_param)->required();
  ablate->add_option("--from", ablate_from);
  ablate->add_option("--to", ablate_to);
  ablate->add_option("--steps", ablate_steps);

  auto* verify = app.add_subcommand("verify", "run the built-in numerical checks");
  std::uint64_t verify_seed = 1;
  std::size_t verify_trials = 1000;
  verify->add_option("--seed", verify_seed);
  verify->add_option("--trials", verify_trials);

  auto* report = app.add_subcommand("report", "print a run's report.json");
  std::string report_out, report_images;
  report->add_option("--out", report_out)->required();
  report->add_option("--images", report_images, "labelled images to recompute metrics from assignments.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_validation;
  }

  laic::set_threads(threads);
  try {
    if (*synth) return cmd_synth(synth_cfg, synth_out);
    if (*ingest) return cmd_ingest(ingest_csv, ingest_dim, ingest_out, ingest_labels, ingest_normalize);
    if (*run) return cmd_run(run_args, threads);
    if (*score) return cmd_score(score_args, threads);
    if (*ablate) return cmd_ablate(ablate_args, ablate_param, ablate_from, ablate_to, ablate_steps, threads);
    if (*verify) return cmd_verify(verify_seed, verify_trials);
    if (*report) return cmd_report(report_out, report_images);
  } catch (const laic::ConfigError& e) {
    log(std::string("error: ") + e.what());
    return exit_validation;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return exit_runtime;
  }
  return exit_validation;
}
