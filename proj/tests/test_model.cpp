#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "advkit/dataset.hpp"
#include "advkit/errors.hpp"
#include "advkit/fileio.hpp"
#include "advkit/ops.hpp"
#include "advkit/train.hpp"
#include "advkit/weights.hpp"

using namespace advkit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "advkit_test_model";
  fs::create_directories(dir);
  return dir / name;
}

Model seeded(const std::string& arch, ImageShape in = {1, 28, 28}, std::uint64_t seed = 1) {
  Model m(make_architecture(arch, in));
  m.initialize(seed);
  return m;
}

}  // namespace

TEST(Model, ZeroDenseGivesUniformSoftmax) {
  Model m = seeded("small-a");
  for (auto& p : m.parameters()) {
    if (p.name.rfind("layer7", 0) == 0) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), 0);
  }
  std::mt19937_64 rng(1);
  const Tensor z = m.forward(Tensor::uniform(Shape{2, 1, 28, 28}, 0, 1, rng)).logits;
  for (Real v : z.data()) EXPECT_EQ(v, 0);
  const Tensor p = softmax(z, 1);
  for (Real v : p.data()) EXPECT_NEAR(v, 0.1, 1e-7);
}

TEST(Model, FeatureMapMatchesTapAndTruncation) {
  for (const auto& name : architecture_names()) {
    const Model m = seeded(name, {3, 32, 32});
    std::mt19937_64 rng(3);
    const Tensor x = Tensor::uniform(Shape{1, 3, 32, 32}, 0, 1, rng);
    const ForwardResult r = m.forward(x);
    const std::size_t tap = *m.feature_tap();
    EXPECT_EQ(r.feature_map.shape(), m.layer_output_shapes()[tap]) << name;
    const Tensor cut = m.forward_until(x, tap);
    ASSERT_EQ(cut.numel(), r.feature_map.numel());
    for (std::size_t i = 0; i < cut.numel(); ++i) EXPECT_EQ(cut.data()[i], r.feature_map.data()[i]);
    EXPECT_EQ(r.logits.shape(), (Shape{1, 10}));
  }
}

TEST(Model, ForwardIsPureAndChecksShape) {
  const Model m = seeded("small-a");
  std::mt19937_64 rng(4);
  const Tensor x = Tensor::uniform(Shape{1, 1, 28, 28}, 0, 1, rng);
  const Tensor a = m.forward(x).logits, b = m.forward(x).logits;
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  EXPECT_THROW(m.forward(Tensor::zeros(Shape{1, 3, 28, 28})), InvalidShape);
  EXPECT_THROW(make_architecture("small-z", {1, 28, 28}), InvalidArgument);
  EXPECT_THROW(make_architecture("small-b", {1, 4, 4}), InvalidShape);
}

TEST(Model, LinearArchitectureHasNoTap) {
  Model m(make_linear_architecture({1, 4, 4}, 3));
  EXPECT_FALSE(m.feature_tap());
  EXPECT_EQ(m.forward(Tensor::zeros(Shape{2, 1, 4, 4})).feature_map.numel(), 0u);
}

TEST(Train, ZeroEpochsLeavesParameters) {
  Model m = seeded("small-a");
  const Model before = m.clone();
  const Dataset d = synthesize_digits(20, 1);
  TrainOptions opt;
  opt.epochs = 0;
  train(m, d, opt);
  for (std::size_t p = 0; p < m.parameters().size(); ++p) {
    const auto a = m.parameters()[p].value.data(), b = before.parameters()[p].value.data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Train, SeededRunsAreIdenticalAndLossFalls) {
  const Dataset d = synthesize_digits(400, 5);
  TrainOptions opt;
  opt.epochs = 3;
  Model a = seeded("small-a"), b = seeded("small-a");
  const TrainLog la = train(a, d, opt);
  train(b, d, opt);
  for (std::size_t p = 0; p < a.parameters().size(); ++p) {
    const auto x = a.parameters()[p].value.data(), y = b.parameters()[p].value.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
  ASSERT_EQ(la.epochs.size(), 3u);
  for (std::size_t e = 1; e < la.epochs.size(); ++e) EXPECT_LE(la.epochs[e].mean_loss, la.epochs[e - 1].mean_loss);
}

TEST(Train, DivergenceNamesEpoch) {
  Model m = seeded("small-a");
  const Dataset d = synthesize_digits(64, 2);
  TrainOptions opt;
  opt.epochs = 2;
  opt.learning_rate = std::numeric_limits<Real>::infinity();
  try {
    train(m, d, opt);
    FAIL() << "expected TrainingFailure";
  } catch (const TrainingFailure& e) {
    EXPECT_GE(e.epoch(), 1);
  }
}

TEST(Weights, RoundTripIsBitExact) {
  const Model m = seeded("small-c", {1, 28, 28}, 9);
  const fs::path p = scratch("c.advw");
  save_weights(m, p);
  const Model back = load_weights(p);
  EXPECT_EQ(back.architecture().name, "small-c");
  std::mt19937_64 rng(1);
  const Tensor x = Tensor::uniform(Shape{2, 1, 28, 28}, 0, 1, rng);
  const Tensor a = m.forward(x).logits, b = back.forward(x).logits;
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Weights, TruncatedAndForeignFilesAreRejected) {
  const fs::path p = scratch("a.advw");
  save_weights(seeded("small-a"), p);
  const std::string bytes = read_file(p);
  const fs::path cut = scratch("cut.advw");
  write_file_atomic(cut, bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_weights(cut), CorruptFile);
  const fs::path junk = scratch("junk.advw");
  write_file_atomic(junk, "NOPE" + bytes.substr(4));
  EXPECT_THROW(load_weights(junk), CorruptFile);
  Model other = seeded("small-b");
  EXPECT_THROW(load_weights_into(other, p), InvalidShape);
  EXPECT_THROW(load_weights(scratch("missing.advw")), IoError);
}

TEST(Dataset, IdxRoundTrip) {
  const Dataset d = synthesize_digits(30, 3);
  const fs::path img = scratch("t10k-images-idx3-ubyte"), lab = idx_labels_path_for(img);
  EXPECT_EQ(lab.filename(), "t10k-labels-idx1-ubyte");
  save_idx(d, img, lab);
  const Dataset back = load_idx(img, lab);
  ASSERT_EQ(back.size(), 30u);
  EXPECT_EQ(back.labels, d.labels);
  for (std::size_t i = 0; i < d.images.numel(); ++i) EXPECT_NEAR(back.images.data()[i], d.images.data()[i], 0.5 / 255 + 1e-6);
  const std::string bytes = read_file(img);
  EXPECT_EQ(static_cast<unsigned char>(bytes[2]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 0x03);
  write_file_atomic(scratch("short-images"), bytes.substr(0, 100));
  EXPECT_THROW(load_idx(scratch("short-images"), lab), CorruptFile);
}

TEST(Dataset, CifarRoundTrip) {
  std::mt19937_64 rng(2);
  Dataset d;
  d.images = Tensor::uniform(Shape{4, 3, 32, 32}, 0, 1, rng);
  d.labels = {0, 9, 3, 3};
  const fs::path p = scratch("data_batch_1.bin");
  save_cifar10(d, p);
  EXPECT_EQ(fs::file_size(p), 4u * 3073u);
  const Dataset back = load_cifar10({p});
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.image_shape(), (ImageShape{3, 32, 32}));
  for (std::size_t i = 0; i < d.images.numel(); ++i) EXPECT_NEAR(back.images.data()[i], d.images.data()[i], 0.5 / 255 + 1e-6);
  write_file_atomic(scratch("odd.bin"), std::string(3000, '\0'));
  EXPECT_THROW(load_cifar10({scratch("odd.bin")}), CorruptFile);
}

TEST(Dataset, SynthesisIsDeterministicBalancedAndInRange) {
  const Dataset a = synthesize_digits(50, 8), b = synthesize_digits(50, 8);
  EXPECT_TRUE(std::equal(a.images.data().begin(), a.images.data().end(), b.images.data().begin()));
  a.validate();
  std::vector<int> counts(10);
  for (int l : a.labels) ++counts[l];
  for (int c : counts) EXPECT_EQ(c, 5);
}
