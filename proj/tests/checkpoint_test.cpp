#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "test_util.hpp"

using namespace pscn;

TEST(Checkpoint, ByteLayout) {
  const std::vector<NamedTensor> entries{{"w", Tensor({2}, {1.0, -2.5})}};
  std::ostringstream os;
  write_checkpoint(os, entries);
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 1 + 4 + 8 + 2 * 8);
  EXPECT_EQ(bytes.substr(0, 4), "PSCN");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));  // version
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));  // name length
  EXPECT_EQ(bytes[12], 'w');
  EXPECT_EQ(bytes.substr(13, 4), std::string("\x01\x00\x00\x00", 4));  // rank
  EXPECT_EQ(bytes.substr(17, 8), std::string("\x02\x00\x00\x00\x00\x00\x00\x00", 8));
  // 1.0 = 0x3FF0000000000000, little-endian
  EXPECT_EQ(bytes.substr(25, 8), std::string("\x00\x00\x00\x00\x00\x00\xF0\x3F", 8));
  double v = 0.0;
  std::memcpy(&v, bytes.data() + 33, 8);
  EXPECT_EQ(v, -2.5);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  std::mt19937_64 rng(91);
  NetworkConfig c = micro_profile();
  Model a = build(c);
  // Move BN running statistics away from their initial values.
  a.forward_classify(pscn::testing::random_cloud(16, rng), Mode::train);
  std::stringstream buf;
  write_checkpoint(buf, a.state());

  c.seed = 1234;
  Model b = build(c);
  auto targets = b.state();
  restore(targets, read_checkpoint(buf));
  const auto sa = a.state(), sb = b.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].name, sb[i].name);
    for (std::size_t k = 0; k < sa[i].tensor.numel(); ++k) EXPECT_EQ(sa[i].tensor[k], sb[i].tensor[k]);
  }
  const PointCloud cloud = pscn::testing::random_cloud(16, rng);
  const Tensor la = a.forward_classify(cloud), lb = b.forward_classify(cloud);
  for (std::size_t k = 0; k < la.numel(); ++k) EXPECT_EQ(la[k], lb[k]);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "pscn_checkpoint_test.bin").string();
  const std::vector<NamedTensor> entries{{"a", Tensor({1, 3}, {1, 2, 3})}, {"b", Tensor::scalar(4.0)}};
  save_checkpoint(path, entries);
  const auto back = load_checkpoint(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].tensor.shape(), (Shape{1, 3}));
  EXPECT_EQ(back[1].tensor.item(), 4.0);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), InputError);
}

TEST(Checkpoint, CorruptInputIsInputError) {
  std::istringstream magic("XXXX\x01\x00\x00\x00");
  EXPECT_THROW(read_checkpoint(magic), InputError);
  std::ostringstream os;
  write_checkpoint(os, std::vector<NamedTensor>{{"w", Tensor({4}, {1, 2, 3, 4})}});
  std::istringstream truncated(os.str().substr(0, os.str().size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), InputError);
}

TEST(Checkpoint, RestoreChecksNamesAndShapes) {
  std::vector<NamedTensor> targets{{"w", Tensor::zeros({2})}};
  const std::vector<NamedTensor> wrong_shape{{"w", Tensor::zeros({3})}};
  const std::vector<NamedTensor> wrong_name{{"v", Tensor::zeros({2})}};
  EXPECT_THROW(restore(targets, wrong_shape), InputError);
  EXPECT_THROW(restore(targets, wrong_name), InputError);
}
