#include "deqbl/checkpoint.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace deqbl;

TEST(Checkpoint, DenseRoundTripIsBitExact) {
  std::mt19937_64 rng(80);
  DenseParams p = init_dense(6, 4, 3, 0.37, false, 1.0);
  p.C.weight = testutil::random_matrix(rng, 4, 6);
  p.b = testutil::random_vector(rng, 4);
  const auto path = std::filesystem::temp_directory_path() / "deqbl_ck_dense.json";
  save_checkpoint(path, p, Activation::softshrink(0.5), 42);
  const Checkpoint ck = load_checkpoint(path);
  std::filesystem::remove(path);
  const auto& q = std::get<DenseParams>(ck.params);
  EXPECT_EQ(q.A.weight, p.A.weight);
  EXPECT_EQ(q.C.weight, p.C.weight);
  EXPECT_EQ(q.b, p.b);
  EXPECT_EQ(q.gamma, p.gamma);
  EXPECT_FALSE(q.tied);
  EXPECT_EQ(ck.sigma, Activation::softshrink(0.5));
  EXPECT_EQ(ck.seed, 42u);
}

TEST(Checkpoint, ConvRoundTripIsBitExact) {
  std::mt19937_64 rng(81);
  const ConvKernelBank bank = testutil::random_bank(rng, 3, 5, 3);
  const ConvParams p{ConvLayer(bank, 7, 9), ConvLayer(bank, 7, 9), Vector(), 1.0, 100.0, true};
  const Checkpoint ck = checkpoint_from_json(json::parse(checkpoint_to_json(p, Activation::tanh(), 1).dump()));
  const auto& q = std::get<ConvParams>(ck.params);
  EXPECT_EQ(q.A.bank.weights, bank.weights);
  EXPECT_EQ(q.A.bank.kh, 5);
  EXPECT_EQ(q.A.rows, 7);
  EXPECT_EQ(q.xi, 100.0);
  EXPECT_TRUE(q.tied);
}

TEST(Checkpoint, LayoutIsRowMajor) {
  Matrix w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  const DenseParams p{DenseLayer(w), DenseLayer(w), Vector::Zero(2), 1.0, 1.0, true};
  const json j = checkpoint_to_json(p, Activation::relu(), 0);
  EXPECT_EQ(j["A"]["shape"], json({2, 3}));
  EXPECT_EQ(j["A"]["data"], json({1, 2, 3, 4, 5, 6}));
}

TEST(Checkpoint, RejectsMalformed) {
  const DenseParams p = init_dense(4, 2, 0, 1.0, true);
  json j = checkpoint_to_json(p, Activation::relu(), 0);
  json bad = j;
  bad["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
  bad = j;
  bad["A"]["data"].erase(0);
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
  bad = j;
  bad["C"]["data"][0] = 5.0;  // tied but C != A
  EXPECT_THROW(checkpoint_from_json(bad), std::invalid_argument);
  bad = j;
  bad["layer"] = "lstm";
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.json"), std::runtime_error);
}
