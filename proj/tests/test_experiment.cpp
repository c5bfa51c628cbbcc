#include "deqbl/experiment.hpp"

#include <gtest/gtest.h>

using namespace deqbl;

TEST(ExperimentConfig, DefaultsRoundTrip) {
  const ExperimentConfig c;
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(ExperimentConfig, EveryPresetRoundTripsAndBuilds) {
  for (const auto& name : preset_names()) {
    const ExperimentConfig c = preset_config(name);
    EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c)) << name;
    EXPECT_NO_THROW(make_train_config(c)) << name;
  }
  EXPECT_THROW(preset_config("imagenet"), ConfigError);
}

TEST(ExperimentConfig, PresetValues) {
  const ExperimentConfig inp = preset_config("mnist-inpaint");
  EXPECT_EQ(inp.task.kind, TaskKind::inpaint);
  EXPECT_EQ(inp.train.gamma, 1.0);
  const TrainConfig t = make_train_config(inp);
  EXPECT_EQ(t.sigma, Activation::softshrink(0.5));
  const ExperimentConfig cel = preset_config("celeb-denoise");
  EXPECT_EQ(cel.train.xi, 100.0);
  EXPECT_EQ(cel.train.lambda, 18.156);
  EXPECT_EQ(cel.model.kernel_size, 11);
  EXPECT_EQ(cel.train.lr, 3.2e-3);
  EXPECT_DOUBLE_EQ(cel.train.lr_end * 100.0, cel.train.lr);
  EXPECT_EQ(preset_config("celeb-denoise-c30k3").model.channels, 30);
  EXPECT_LT(cel.train.tau, 2.0 / (cel.train.lambda + cel.train.gamma * cel.train.xi));
  EXPECT_EQ(preset_config("naive-inpaint").train.mode, TrainMode::naive);
}

TEST(ExperimentConfig, UnknownKeysAreErrors) {
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"train", {{"taus", 1}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"train", {{"mode", "adversarial"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"train", {{"tau", "big"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"model", {{"activation", "neg_part"}}}}), ConfigError);
}

TEST(ExperimentConfig, PresetThenOverrides) {
  const ExperimentConfig c =
      config_from_json(json{{"preset", "mnist-deblur"}, {"train", {{"epochs", 3}}}, {"dataset", {{"rows", 12}}}});
  EXPECT_EQ(c.task.kind, TaskKind::deblur);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.dataset.rows, 12);
  EXPECT_EQ(c.train.gamma, 0.5);
}

TEST(ExperimentConfig, ExplicitEpsOverridesTauCoupling) {
  ExperimentConfig c = preset_config("mnist-inpaint");
  c.model.eps = 0.2;
  EXPECT_EQ(make_train_config(c).sigma.eps, 0.2);
}

TEST(ExperimentConfig, KernelFromConfig) {
  ExperimentConfig c;
  c.task.kind = TaskKind::deblur;
  c.task.kernel = {{0, 0, 0}, {0.5, 0.5, 0}, {0, 0, 0}};
  EXPECT_EQ(make_train_config(c).task.kernel(1, 0), 0.5);
  c.task.kernel = {{1, 0}, {0}};
  EXPECT_THROW(make_train_config(c), ConfigError);
}

TEST(ExperimentConfig, ValidationErrors) {
  ExperimentConfig c;
  c.dataset.source = "mnist";
  EXPECT_THROW(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.model.layer = "rnn";
  EXPECT_THROW(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.train.schedule = "cosine";
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(ExperimentConfig, DatasetsAndInit) {
  ExperimentConfig c = preset_config("mnist-denoise");
  c.dataset.train = 3;
  c.dataset.test = 2;
  c.dataset.rows = c.dataset.cols = 6;
  const auto [tr, te] = load_datasets(c);
  EXPECT_EQ(tr.size(), 3u);
  EXPECT_EQ(te.size(), 2u);
  const TrainConfig t = make_train_config(c);
  const DenseParams p = make_dense_init(c, t, 6, 6);
  EXPECT_EQ(p.A.weight.rows(), 36);
  EXPECT_TRUE(p.tied);
  c.model.hidden = 10;
  c.train.mode = TrainMode::deq;
  const DenseParams q = make_dense_init(c, make_train_config(c), 6, 6);
  EXPECT_EQ(q.A.weight.rows(), 10);
  EXPECT_FALSE(q.tied);
  EXPECT_EQ(q.A.weight, q.C.weight);
}

TEST(ExperimentConfig, ConvInitIsSpectrallyNormalized) {
  ExperimentConfig c = preset_config("celeb-denoise-c30k3");
  const ConvParams p = make_conv_init(c, make_train_config(c), 16, 16);
  EXPECT_NEAR(p.A.spectral_norm().value, 1.0, 1e-2);
  EXPECT_EQ(p.A.bank.channels, 30);
}
