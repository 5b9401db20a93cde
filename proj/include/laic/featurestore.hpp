#pragma once

// Embedding matrices: storage, LAICFTR1 codec, CSV ingest, normalization and
// the Huber-contaminated synthetic generator.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "laic/error.hpp"
#include "laic/parallel.hpp"
#include "laic/rng.hpp"

namespace laic {

enum class Role : std::uint8_t { image, text };

/// Row-major N x d matrix of 32-bit floats.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  FeatureMatrix(std::size_t rows, std::size_t dim, Role role = Role::image)
      : rows_(rows), dim_(dim), data_(rows * dim, 0.0f), role_(role) {}

  FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> data,
                Role role = Role::image)
      : rows_(rows), dim_(dim), data_(std::move(data)), role_(role) {
    if (data_.size() != rows_ * dim_) {
      throw Error("feature matrix: payload length " + std::to_string(data_.size()) +
                  " does not match " + std::to_string(rows_) + "x" + std::to_string(dim_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  Role role() const noexcept { return role_; }
  void set_role(Role r) noexcept { role_ = r; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  float operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }

  const std::vector<float>& data() const noexcept { return data_; }

  /// Throws unless rows >= 1, dim >= 2 and every entry is finite.
  void validate() const {
    if (rows_ < 1) throw Error("feature matrix: needs at least one row");
    if (dim_ < 2) throw Error("feature matrix: dim must be >= 2, got " + std::to_string(dim_));
    for (std::size_t k = 0; k < data_.size(); ++k) {
      if (!std::isfinite(data_[k])) {
        throw FormatError("feature matrix: NaN/Inf at row " + std::to_string(k / dim_));
      }
    }
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  Role role_ = Role::image;
};

/// Integer label per row. -1 is the "unknown" sentinel.
struct LabelVector {
  std::vector<std::int32_t> labels;
  std::size_t num_classes = 0;

  static constexpr std::int32_t unknown = -1;

  std::size_t size() const noexcept { return labels.size(); }

  /// Builds a vector and infers K as max label + 1.
  static LabelVector from(std::vector<std::int32_t> values) {
    LabelVector out;
    std::int32_t top = -1;
    for (auto v : values) {
      if (v < unknown) throw Error("label vector: label " + std::to_string(v) + " < -1");
      top = std::max(top, v);
    }
    out.labels = std::move(values);
    out.num_classes = static_cast<std::size_t>(top + 1);
    return out;
  }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;
};

template <class T>
double squared_norm(std::span<const T> v) {
  double s = 0.0;
  for (auto x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

template <class A, class B>
double dot(std::span<const A> a, std::span<const B> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += static_cast<double>(a[j]) * static_cast<double>(b[j]);
  return s;
}

// ---------------------------------------------------------------------------
// LAICFTR1 codec

inline constexpr std::array<char, 8> laic_magic{'L', 'A', 'I', 'C', 'F', 'T', 'R', '1'};
inline constexpr std::array<char, 4> label_magic{'L', 'B', 'L', '1'};
inline constexpr std::size_t laic_header_size = 24;

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return v;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(std::string("write_laic: ") + what + " exceeds 32-bit range");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Serializes to the in-memory LAICFTR1 byte layout.
inline std::vector<char> encode_laic(const FeatureMatrix& m, const LabelVector* labels = nullptr) {
  const auto rows = detail::checked_u32(m.rows(), "row count");
  const auto dim = detail::checked_u32(m.dim(), "dim");
  if (labels && labels->size() != m.rows()) {
    throw Error("write_laic: label count " + std::to_string(labels->size()) +
                " does not match rows " + std::to_string(m.rows()));
  }
  std::vector<char> out;
  out.reserve(laic_header_size + m.data().size() * 4 + (labels ? 8 + labels->size() * 4 : 0));
  out.insert(out.end(), laic_magic.begin(), laic_magic.end());
  detail::put_u32(out, rows);
  detail::put_u32(out, dim);
  out.push_back(0);                 // dtype f32
  out.insert(out.end(), 7, '\0');  // pad
  for (float f : m.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  if (labels) {
    out.insert(out.end(), label_magic.begin(), label_magic.end());
    detail::put_u32(out, rows);
    for (auto l : labels->labels) detail::put_u32(out, std::bit_cast<std::uint32_t>(l));
  }
  return out;
}

inline void write_laic(const FeatureMatrix& m, const LabelVector* labels,
                       const std::filesystem::path& path) {
  const auto bytes = encode_laic(m, labels);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("write_laic: cannot open " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write_laic: write failed for " + path.string());
}

inline void write_laic(const FeatureMatrix& m, const std::optional<LabelVector>& labels,
                       const std::filesystem::path& path) {
  write_laic(m, labels ? &*labels : nullptr, path);
}

struct LaicFile {
  FeatureMatrix matrix;
  std::optional<LabelVector> labels;
};

inline LaicFile decode_laic(std::span<const char> bytes) {
  if (bytes.size() < laic_header_size) throw FormatError("read_laic: truncated header");
  if (!std::equal(laic_magic.begin(), laic_magic.end(), bytes.begin())) {
    throw FormatError("read_laic: bad magic");
  }
  const std::uint32_t rows = detail::get_u32(bytes.data() + 8);
  const std::uint32_t dim = detail::get_u32(bytes.data() + 12);
  const auto dtype = static_cast<unsigned char>(bytes[16]);
  if (dtype != 0) throw FormatError("read_laic: unsupported dtype code " + std::to_string(dtype));

  const std::uint64_t count = static_cast<std::uint64_t>(rows) * dim;
  const std::uint64_t payload_end = laic_header_size + count * 4;
  if (bytes.size() < payload_end) throw FormatError("read_laic: truncated payload");

  std::vector<float> data(count);
  const char* p = bytes.data() + laic_header_size;
  for (std::uint64_t k = 0; k < count; ++k, p += 4) {
    data[k] = std::bit_cast<float>(detail::get_u32(p));
  }
  LaicFile out{FeatureMatrix(rows, dim, std::move(data)), std::nullopt};
  out.matrix.validate();

  const std::size_t rest = bytes.size() - payload_end;
  if (rest == 0) return out;
  if (rest < 8 || !std::equal(label_magic.begin(), label_magic.end(), bytes.begin() + payload_end)) {
    throw FormatError("read_laic: trailing bytes are not a label block");
  }
  const std::uint32_t label_rows = detail::get_u32(bytes.data() + payload_end + 4);
  if (label_rows != rows) {
    throw FormatError("read_laic: label block has " + std::to_string(label_rows) + " rows, matrix has " +
                      std::to_string(rows));
  }
  if (rest < 8 + static_cast<std::uint64_t>(rows) * 4) throw FormatError("read_laic: truncated label block");
  if (rest > 8 + static_cast<std::uint64_t>(rows) * 4) throw FormatError("read_laic: trailing bytes after label block");
  std::vector<std::int32_t> labels(rows);
  p = bytes.data() + payload_end + 8;
  for (std::uint32_t i = 0; i < rows; ++i, p += 4) labels[i] = std::bit_cast<std::int32_t>(detail::get_u32(p));
  try {
    out.labels = LabelVector::from(std::move(labels));
  } catch (const Error& e) {
    throw FormatError(std::string("read_laic: ") + e.what());
  }
  return out;
}

inline LaicFile read_laic(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("read_laic: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_laic(bytes);
}

// ---------------------------------------------------------------------------
// CSV ingest

inline FeatureMatrix parse_csv(std::string_view text, std::size_t dim) {
  std::vector<float> data;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    std::size_t fields = 0;
    for (;;) {
      const auto comma = line.find(',');
      std::string_view field = line.substr(0, comma);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      if (!field.empty() && field.front() == '+') field.remove_prefix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
        throw FormatError("from_csv: non-numeric field '" + std::string(field) + "' on line " +
                          std::to_string(line_no));
      }
      data.push_back(static_cast<float>(v));
      ++fields;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (fields != dim) {
      throw FormatError("from_csv: ragged row on line " + std::to_string(line_no) + " (" +
                        std::to_string(fields) + " fields, expected " + std::to_string(dim) + ")");
    }
    ++rows;
  }
  FeatureMatrix m(rows, dim, std::move(data));
  m.validate();
  return m;
}

inline FeatureMatrix from_csv(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("from_csv: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_csv(text, dim);
}

// ---------------------------------------------------------------------------
// Normalization

inline FeatureMatrix l2_normalize(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = std::sqrt(squared_norm(m.row(i)));
    if (!(n > 0.0)) throw Error("l2_normalize: row " + std::to_string(i) + " has zero norm");
    auto dst = out.row(i);
    auto src = m.row(i);
    for (std::size_t j = 0; j < m.dim(); ++j) dst[j] = static_cast<float>(src[j] / n);
  }
  return out;
}

/// Largest |norm - 1| over rows.
inline double max_norm_deviation(const FeatureMatrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    worst = std::max(worst, std::abs(std::sqrt(squared_norm(m.row(i))) - 1.0));
  }
  return worst;
}

inline bool is_unit_norm(const FeatureMatrix& m, double tol = 1e-4) { return max_norm_deviation(m) <= tol; }

// ---------------------------------------------------------------------------
// Huber-contaminated synthetic data

struct HuberSynthConfig {
  std::size_t dim = 64;
  std::size_t num_classes = 10;
  std::size_t num_images = 5000;
  std::size_t num_texts = 2000;
  double mixing = 0.25;  ///< probability that a text is positive
  double concentration_pos = 10.0;
  /// Spread of negatives around decoy prototypes. Unused when num_decoys == 0.
  double concentration_neg = 10.0;
  /// 0: negatives are uniform on the sphere.
  std::size_t num_decoys = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 2) throw ConfigError("synth: dim must be >= 2");
    if (num_classes < 1 || num_images < 1 || num_texts < 1) throw ConfigError("synth: counts must be positive");
    if (!(mixing > 0.0 && mixing <= 1.0)) throw ConfigError("synth: mixing must lie in (0, 1]");
    if (!(concentration_pos >= 0.0) || !(concentration_neg >= 0.0)) {
      throw ConfigError("synth: concentrations must be nonnegative");
    }
  }
};

struct HuberDataset {
  FeatureMatrix images;
  LabelVector image_labels;
  FeatureMatrix texts;
  LabelVector text_labels;  ///< prototype class for positives, -1 for negatives
  std::vector<bool> positivity;
  FeatureMatrix prototypes;  ///< K x d class prototypes
};

namespace detail {

enum : std::uint64_t { stream_prototypes = 1, stream_images = 2, stream_texts = 3, stream_decoys = 4 };

inline void unit_gaussian(std::mt19937_64& gen, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& x : out) {
      x = normal(gen);
      n2 += x * x;
    }
  } while (n2 == 0.0);
  const double n = std::sqrt(n2);
  for (auto& x : out) x /= n;
}

/// prototype + N(0, 1/concentration) per coordinate, renormalized.
inline void perturb(std::mt19937_64& gen, std::span<const float> center, double concentration,
                    std::span<float> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = std::isinf(concentration) ? 0.0 : 1.0 / std::sqrt(concentration);
  std::vector<double> v(center.size());
  for (;;) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = static_cast<double>(center[j]) + scale * normal(gen);
      n2 += v[j] * v[j];
    }
    if (n2 > 0.0) {
      const double n = std::sqrt(n2);
      for (std::size_t j = 0; j < v.size(); ++j) out[j] = static_cast<float>(v[j] / n);
      return;
    }
  }
}

inline FeatureMatrix sphere_points(std::uint64_t seed, std::uint64_t stream, std::size_t count,
                                   std::size_t dim) {
  FeatureMatrix out(count, dim);
  std::vector<double> buf(dim);
  for (std::size_t i = 0; i < count; ++i) {
    auto gen = make_stream(seed, stream, i);
    unit_gaussian(gen, buf);
    auto row = out.row(i);
    for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(buf[j]);
  }
  return out;
}

}  // namespace detail

/// Samples images around K uniform prototypes and wild texts from
/// mixing * P_pos + (1 - mixing) * P_neg. Every row owns an RNG stream
/// derived from (seed, row), so output does not depend on thread count.
inline HuberDataset generate_huber_dataset(const HuberSynthConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  HuberDataset out;
  out.prototypes = detail::sphere_points(cfg.seed, detail::stream_prototypes, cfg.num_classes, d);
  const FeatureMatrix decoys = cfg.num_decoys > 0
                                   ? detail::sphere_points(cfg.seed, detail::stream_decoys, cfg.num_decoys, d)
                                   : FeatureMatrix();

  out.images = FeatureMatrix(cfg.num_images, d, Role::image);
  std::vector<std::int32_t> image_labels(cfg.num_images);
  parallel_for(cfg.num_images, [&](std::size_t i) {
    auto gen = make_stream(cfg.seed, detail::stream_images, i);
    std::uniform_int_distribution<std::size_t> pick(0, cfg.num_classes - 1);
    const std::size_t k = pick(gen);
    image_labels[i] = static_cast<std::int32_t>(k);
    detail::perturb(gen, out.prototypes.row(k), cfg.concentration_pos, out.images.row(i));
  });

  out.texts = FeatureMatrix(cfg.num_texts, d, Role::text);
  std::vector<std::int32_t> text_labels(cfg.num_texts);
  std::vector<char> positive(cfg.num_texts);
  parallel_for(cfg.num_texts, [&](std::size_t i) {
    auto gen = make_stream(cfg.seed, detail::stream_texts, i);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const bool pos = coin(gen) < cfg.mixing;
    positive[i] = pos;
    if (pos) {
      std::uniform_int_distribution<std::size_t> pick(0, cfg.num_classes - 1);
      const std::size_t k = pick(gen);
      text_labels[i] = static_cast<std::int32_t>(k);
      detail::perturb(gen, out.prototypes.row(k), cfg.concentration_pos, out.texts.row(i));
    } else if (cfg.num_decoys > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, cfg.num_decoys - 1);
      text_labels[i] = LabelVector::unknown;
      detail::perturb(gen, decoys.row(pick(gen)), cfg.concentration_neg, out.texts.row(i));
    } else {
      text_labels[i] = LabelVector::unknown;
      std::vector<double> buf(d);
      detail::unit_gaussian(gen, buf);
      auto row = out.texts.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(buf[j]);
    }
  });

  out.image_labels = LabelVector::from(std::move(image_labels));
  out.image_labels.num_classes = cfg.num_classes;
  out.text_labels = LabelVector::from(std::move(text_labels));
  out.text_labels.num_classes = cfg.num_classes;
  out.positivity.assign(positive.begin(), positive.end());
  return out;
}

/// Positivity implied by a text label block: label >= 0 means positive.
inline std::vector<bool> positivity_from_labels(const LabelVector& labels) {
  std::vector<bool> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels.labels[i] >= 0;
  return out;
}

}  // namespace laic
