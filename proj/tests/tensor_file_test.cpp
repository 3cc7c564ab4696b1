#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>

#include "test_util.hpp"
#include "zbcae/checkpoint.hpp"
#include "zbcae/tensor_file.hpp"

using zbcae::NamedTensors;
using zbcae::Tensor;

namespace {

// Little-endian byte builder, independent of the library writer.
struct Bytes {
  std::string s;
  Bytes& raw(std::string_view v) {
    s.append(v);
    return *this;
  }
  Bytes& le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    return *this;
  }
  Bytes& f64(double v) { return le(std::bit_cast<std::uint64_t>(v), 8); }
};

Bytes header(std::uint32_t count, std::uint32_t version = 1) {
  Bytes b;
  b.raw("ZTEN").le(version, 4).le(count, 4);
  return b;
}

Bytes& record(Bytes& b, const std::string& name, const std::vector<std::uint64_t>& shape,
              const std::vector<double>& values) {
  b.le(name.size(), 2).raw(name).le(2, 1).le(shape.size(), 1);
  for (auto e : shape) b.le(e, 8);
  for (double v : values) b.f64(v);
  return b;
}

std::string format_error(std::string_view bytes) {
  try {
    zbcae::decode_tensors(bytes);
  } catch (const zbcae::FormatError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("zbcae_tf_" + name);
}

}  // namespace

TEST(TensorFileTest, LayoutMatchesHandBuiltBytes) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Bytes expect = header(1);
  record(expect, "w", {2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(zbcae::encode_tensors({{"w", t}}), expect.s);
}

TEST(TensorFileTest, RoundTripTwoByThree) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto back = zbcae::decode_tensors(zbcae::encode_tensors({{"w", t}}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].first, "w");
  EXPECT_EQ(back[0].second.shape(), (Tensor::Shape{2, 3}));
  EXPECT_TRUE(zbcae::bitwise_equal(back[0].second, t));
}

TEST(TensorFileTest, EmptyFileHoldsNoRecords) {
  EXPECT_TRUE(zbcae::decode_tensors(header(0).s).empty());
  EXPECT_EQ(zbcae::encode_tensors({}), header(0).s);
}

TEST(TensorFileTest, BadMagic) {
  std::string bytes = header(0).s;
  bytes.replace(0, 4, "XXXX");
  const std::string msg = format_error(bytes);
  EXPECT_NE(msg.find("magic"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset 0"), std::string::npos) << msg;
}

TEST(TensorFileTest, VersionMismatch) {
  const std::string msg = format_error(header(0, 2).s);
  EXPECT_NE(msg.find("version"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset 4"), std::string::npos) << msg;
}

TEST(TensorFileTest, TruncationAtEveryPrefix) {
  Bytes b = header(1);
  record(b, "abc", {2, 2}, {1, 2, 3, 4});
  for (std::size_t len = 0; len < b.s.size(); ++len) {
    const std::string msg = format_error(std::string_view(b.s).substr(0, len));
    EXPECT_FALSE(msg.empty()) << "prefix " << len;
    if (len >= 4) {
      EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
    }
  }
}

TEST(TensorFileTest, DeclaredPayloadBeyondFileSize) {
  Bytes b = header(1);
  b.le(1, 2).raw("x").le(2, 1).le(1, 1).le(std::uint64_t{1} << 60, 8);
  EXPECT_NE(format_error(b.s).find("truncated"), std::string::npos);
}

TEST(TensorFileTest, DuplicateNames) {
  Bytes b = header(2);
  record(b, "a", {1}, {1.0});
  record(b, "a", {1}, {2.0});
  const std::string msg = format_error(b.s);
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset " + std::to_string(12 + 2 + 1 + 1 + 1 + 8 + 8)), std::string::npos) << msg;
  EXPECT_THROW(zbcae::encode_tensors({{"a", Tensor({1})}, {"a", Tensor({1})}}), zbcae::FormatError);
}

TEST(TensorFileTest, UnsupportedDtypeAndRank) {
  Bytes dtype = header(1);
  dtype.le(1, 2).raw("a").le(1, 1).le(1, 1).le(1, 8).f64(0.0);
  EXPECT_NE(format_error(dtype.s).find("dtype"), std::string::npos);
  for (std::uint64_t rank : {0, 5}) {
    Bytes b = header(1);
    b.le(1, 2).raw("a").le(2, 1).le(rank, 1);
    EXPECT_NE(format_error(b.s).find("rank"), std::string::npos);
  }
}

TEST(TensorFileTest, ZeroExtent) {
  Bytes b = header(1);
  b.le(1, 2).raw("a").le(2, 1).le(2, 1).le(3, 8).le(0, 8);
  EXPECT_NE(format_error(b.s).find("zero extent"), std::string::npos);
}

TEST(TensorFileTest, TrailingBytes) {
  Bytes b = header(1);
  record(b, "a", {1}, {1.0});
  b.raw("!");
  const std::string msg = format_error(b.s);
  EXPECT_NE(msg.find("trailing"), std::string::npos) << msg;
}

TEST(TensorFileTest, SaveLoadSaveIsByteIdentical) {
  const auto path = temp_path("prop.zten");
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    zbcae::Rng rng(seed);
    NamedTensors records;
    const std::size_t count = 1 + rng.below(4);
    for (std::size_t r = 0; r < count; ++r) {
      Tensor::Shape shape(1 + rng.below(4));
      for (auto& e : shape) e = 1 + rng.below(4);
      Tensor t = testutil::random_tensor(shape, seed * 100 + r, -1e6, 1e6);
      if (r == 0) t[0] = -0.0;
      records.emplace_back("rec_" + std::to_string(r), std::move(t));
    }
    zbcae::save_tensors(path, records);
    const std::string first = zbcae::read_file_bytes(path);
    zbcae::save_tensors(path, zbcae::load_tensors(path));
    EXPECT_EQ(zbcae::read_file_bytes(path), first);
  }
  std::filesystem::remove(path);
}

TEST(TensorFileTest, MissingFileIsIoError) {
  EXPECT_THROW(zbcae::load_tensors(temp_path("does_not_exist.zten")), zbcae::IoError);
}

TEST(CheckpointTest, CaeModelRoundTrip) {
  auto model = zbcae::cae::init_model(3, 2, 3, 11);
  model.encoder_bias = testutil::random_tensor({3}, 1);
  model.decoder_bias = testutil::random_tensor({2}, 2);
  model.decoder_relu = false;
  model.bias_mode = zbcae::cae::BiasMode::always_zero;
  const auto path = temp_path("cae.zten");
  zbcae::save_cae_model(path, model);
  const auto back = zbcae::load_cae_model(path);
  EXPECT_TRUE(zbcae::bitwise_equal(back.encoder_weights, model.encoder_weights));
  EXPECT_TRUE(zbcae::bitwise_equal(back.encoder_bias, model.encoder_bias));
  EXPECT_TRUE(zbcae::bitwise_equal(back.decoder_bias, model.decoder_bias));
  EXPECT_EQ(back.spec.stride, model.spec.stride);
  EXPECT_EQ(back.spec.pad, model.spec.pad);
  EXPECT_FALSE(back.decoder_relu);
  EXPECT_EQ(back.bias_mode, zbcae::cae::BiasMode::always_zero);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, SvmModelRoundTrip) {
  zbcae::svm::SvmModel model{testutil::random_tensor({3, 4}, 1), testutil::random_tensor({3}, 2),
                             {"cat", "dog", "bird"}, 0.25};
  const auto path = temp_path("svm.zten");
  zbcae::save_svm_model(path, model);
  const auto back = zbcae::load_svm_model(path);
  EXPECT_TRUE(zbcae::bitwise_equal(back.weights, model.weights));
  EXPECT_TRUE(zbcae::bitwise_equal(back.biases, model.biases));
  EXPECT_EQ(back.class_names, model.class_names);
  EXPECT_EQ(back.lambda, 0.25);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, FeatureSetRoundTripAndValidation) {
  zbcae::FeatureSet set{testutil::random_tensor({4, 5}, 3), {0, 1, 1, 0}, {"a", "b"}};
  const auto path = temp_path("features.zten");
  zbcae::save_feature_set(path, set);
  const auto back = zbcae::load_feature_set(path);
  EXPECT_TRUE(zbcae::bitwise_equal(back.features, set.features));
  EXPECT_EQ(back.labels, set.labels);
  EXPECT_EQ(back.classes, set.classes);

  zbcae::save_tensors(path, {{"features", Tensor({2, 2})}});
  EXPECT_THROW(zbcae::load_feature_set(path), zbcae::FormatError);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, CaeModelMissingRecord) {
  const auto path = temp_path("cae_bad.zten");
  zbcae::save_tensors(path, {{"W_e", Tensor({1, 1, 3, 3})}});
  try {
    zbcae::load_cae_model(path);
    FAIL() << "expected FormatError";
  } catch (const zbcae::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
  std::filesystem::remove(path);
}
