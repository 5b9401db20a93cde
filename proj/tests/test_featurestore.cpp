#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "laic/featurestore.hpp"
#include "laic/parallel.hpp"

using namespace laic;

namespace {

FeatureMatrix small_matrix() {
  return FeatureMatrix(2, 3, {1.5f, -2.0f, 0.25f, 3.0f, 1e-7f, -0.0f});
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("laic_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Codec, HeaderPlusPayloadSize) {
  EXPECT_EQ(encode_laic(small_matrix()).size(), 48u);
}

TEST(Codec, LabelBlockAddsSixteenBytes) {
  const auto labels = LabelVector::from({0, 1});
  EXPECT_EQ(encode_laic(small_matrix(), &labels).size(), 48u + 16u);
}

TEST(Codec, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_laic(small_matrix());
  EXPECT_EQ(std::memcmp(bytes.data(), "LAICFTR1", 8), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3);
  EXPECT_EQ(bytes[16], 0);
  float first;
  std::memcpy(&first, bytes.data() + 24, 4);
  EXPECT_EQ(first, 1.5f);
}

TEST(Codec, FileRoundTripIsBitExact) {
  const auto path = temp_file("roundtrip.laic");
  const auto m = small_matrix();
  const auto labels = LabelVector::from({-1, 4});
  write_laic(m, &labels, path);
  const auto back = read_laic(path);
  ASSERT_EQ(back.matrix.rows(), 2u);
  ASSERT_EQ(back.matrix.dim(), 3u);
  EXPECT_EQ(std::memcmp(back.matrix.data().data(), m.data().data(), 6 * sizeof(float)), 0);
  ASSERT_TRUE(back.labels);
  EXPECT_EQ(back.labels->labels, labels.labels);
  std::filesystem::remove(path);
}

TEST(Codec, RandomRoundTrips) {
  std::mt19937_64 gen(3);
  std::normal_distribution<float> normal;
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = 1 + gen() % 20, d = 2 + gen() % 30;
    std::vector<float> v(r * d);
    for (auto& x : v) x = normal(gen);
    FeatureMatrix m(r, d, v);
    const auto bytes = encode_laic(m);
    const auto back = decode_laic(bytes);
    EXPECT_EQ(back.matrix, m);
    EXPECT_FALSE(back.labels);
  }
}

TEST(Codec, CorruptedMagic) {
  auto bytes = encode_laic(small_matrix());
  bytes[0] = 'X';
  EXPECT_NE(error_of([&] { decode_laic(bytes); }).find("bad magic"), std::string::npos);
}

TEST(Codec, TruncatedPayload) {
  auto bytes = encode_laic(small_matrix());
  bytes.resize(40);
  EXPECT_NE(error_of([&] { decode_laic(bytes); }).find("truncated"), std::string::npos);
}

TEST(Codec, RejectsUnknownDtype) {
  auto bytes = encode_laic(small_matrix());
  bytes[16] = 1;
  EXPECT_THROW(decode_laic(bytes), FormatError);
}

TEST(Codec, RejectsLabelCountMismatch) {
  const auto labels = LabelVector::from({0});
  EXPECT_THROW(encode_laic(small_matrix(), &labels), Error);
}

TEST(Csv, IdentityRows) {
  const auto m = parse_csv("1,0\n0,1\n", 2);
  ASSERT_EQ(m.rows(), 2u);
  EXPECT_EQ(m(0, 0), 1.0f);
  EXPECT_EQ(m(0, 1), 0.0f);
  EXPECT_EQ(m(1, 0), 0.0f);
  EXPECT_EQ(m(1, 1), 1.0f);
}

TEST(Csv, ScientificLiterals) {
  const auto m = parse_csv("1e-3,2e-3", 2);
  EXPECT_EQ(m(0, 0), 0.001f);
  EXPECT_EQ(m(0, 1), 0.002f);
}

TEST(Csv, RaggedLineNamesTheLine) {
  const auto msg = error_of([] { parse_csv("1,2\n3,4\n5\n", 2); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Csv, NonNumericField) {
  EXPECT_THROW(parse_csv("1,x\n", 2), FormatError);
}

TEST(Normalize, ThreeFourFive) {
  const auto m = l2_normalize(FeatureMatrix(1, 2, {3.0f, 4.0f}));
  EXPECT_FLOAT_EQ(m(0, 0), 0.6f);
  EXPECT_FLOAT_EQ(m(0, 1), 0.8f);
}

TEST(Normalize, UnitRowUnchanged) {
  const float s = static_cast<float>(1.0 / std::sqrt(2.0));
  const auto m = l2_normalize(FeatureMatrix(1, 2, {s, s}));
  EXPECT_NEAR(m(0, 0), s, 1e-7);
  EXPECT_NEAR(m(0, 1), s, 1e-7);
}

TEST(Normalize, ZeroRowIsAnError) {
  const auto msg = error_of([] { l2_normalize(FeatureMatrix(2, 2, {1.0f, 0.0f, 0.0f, 0.0f})); });
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
}

TEST(Validate, RejectsNonFinite) {
  FeatureMatrix m(1, 2, {1.0f, std::nanf("")});
  EXPECT_THROW(m.validate(), FormatError);
}

TEST(Huber, FullMixingMakesEveryTextPositive) {
  HuberSynthConfig cfg;
  cfg.dim = 8;
  cfg.num_images = 50;
  cfg.num_texts = 200;
  cfg.mixing = 1.0;
  const auto d = generate_huber_dataset(cfg);
  EXPECT_EQ(std::count(d.positivity.begin(), d.positivity.end(), true), 200);
}

TEST(Huber, InfiniteConcentrationCollapsesOntoPrototypes) {
  HuberSynthConfig cfg;
  cfg.dim = 16;
  cfg.num_classes = 4;
  cfg.num_images = 100;
  cfg.num_texts = 10;
  cfg.concentration_pos = std::numeric_limits<double>::infinity();
  const auto d = generate_huber_dataset(cfg);
  for (std::size_t i = 0; i < d.images.rows(); ++i) {
    const auto p = d.prototypes.row(static_cast<std::size_t>(d.image_labels.labels[i]));
    for (std::size_t j = 0; j < cfg.dim; ++j) EXPECT_NEAR(d.images(i, j), p[j], 1e-4);
  }
}

TEST(Huber, PositivityCountWithinBinomialBand) {
  HuberSynthConfig cfg;
  cfg.dim = 8;
  cfg.num_classes = 3;
  cfg.num_images = 300;
  cfg.num_texts = 120;
  cfg.mixing = 0.5;
  cfg.seed = 7;
  const auto d = generate_huber_dataset(cfg);
  const auto pos = std::count(d.positivity.begin(), d.positivity.end(), true);
  EXPECT_GE(pos, 44);
  EXPECT_LE(pos, 76);
}

TEST(Huber, OutputsAreUnitNorm) {
  HuberSynthConfig cfg;
  cfg.num_images = 500;
  cfg.num_texts = 500;
  cfg.num_decoys = 3;
  const auto d = generate_huber_dataset(cfg);
  EXPECT_LE(max_norm_deviation(d.images), 1e-6);
  EXPECT_LE(max_norm_deviation(d.texts), 1e-6);
  EXPECT_LE(max_norm_deviation(d.prototypes), 1e-6);
}

TEST(Huber, DeterministicAcrossThreadCounts) {
  HuberSynthConfig cfg;
  cfg.num_images = 1500;
  cfg.num_texts = 700;
  cfg.seed = 42;
  set_threads(1);
  const auto a = generate_huber_dataset(cfg);
  set_threads(4);
  const auto b = generate_huber_dataset(cfg);
  set_threads(0);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.texts, b.texts);
  EXPECT_EQ(a.image_labels, b.image_labels);
  EXPECT_EQ(a.positivity, b.positivity);
}

TEST(Huber, PositivesSitCloserToPrototypesThanNegatives) {
  for (double conc : {10.0, 30.0}) {
    HuberSynthConfig cfg;
    cfg.num_images = 10;
    cfg.num_texts = 2000;
    cfg.concentration_pos = conc;
    cfg.seed = 5;
    const auto d = generate_huber_dataset(cfg);
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    for (std::size_t i = 0; i < d.texts.rows(); ++i) {
      if (d.positivity[i]) {
        const auto k = static_cast<std::size_t>(d.text_labels.labels[i]);
        pos_sum += dot(d.texts.row(i), d.prototypes.row(k));
        ++pos_n;
      } else {
        double best = -1.0;
        for (std::size_t k = 0; k < cfg.num_classes; ++k) best = std::max(best, dot(d.texts.row(i), d.prototypes.row(k)));
        neg_sum += best;
        ++neg_n;
      }
    }
    ASSERT_GE(pos_n + neg_n, 1000u);
    EXPECT_GT(pos_sum / static_cast<double>(pos_n), neg_sum / static_cast<double>(neg_n)) << "concentration " << conc;
  }
}

TEST(Huber, RejectsBadMixing) {
  HuberSynthConfig cfg;
  cfg.mixing = 0.0;
  EXPECT_THROW(generate_huber_dataset(cfg), ConfigError);
}
