#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "semnn/harness.h"
#include "semnn/train.h"

using namespace semnn;
using harness::Config;

namespace {

Config tiny(std::size_t classes = 4) {
  Config c;
  c.set("data.train", "96");
  c.set("data.val", "48");
  c.set("data.classes", std::to_string(classes));
  c.set("task.epochs", "1");
  c.set("train.stage1_epochs", "1");
  c.set("train.stage2_epochs", "1");
  c.set("eval.reps", "2");
  return c;
}

const harness::Lab& lab4() {
  static const harness::Lab lab = harness::build_lab(tiny(4));
  return lab;
}

std::size_t fields(const std::string& line) { return std::size_t(std::count(line.begin(), line.end(), ',')) + 1; }

}  // namespace

TEST(TaskTraining, LeavesModelFrozen) {
  EXPECT_TRUE(lab4().task.frozen());
  EXPECT_EQ(lab4().train_features.size(), 96u);
  EXPECT_EQ(lab4().train_features.shape, lab4().task.split_shape());
}

TEST(Stage2, TaskModelUnchanged) {
  const auto& lab = lab4();
  const auto before = lab.task.param_hash();
  const auto cfg = tiny();
  auto codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), 1);
  train::stage2_semantic(codec, lab.task, lab.train_features, harness::train_config(cfg, 1));
  EXPECT_EQ(lab.task.param_hash(), before);
}

TEST(Stage2, LossIsWeightedSum) {
  const auto& lab = lab4();
  auto cfg = tiny();
  cfg.set("loss.alpha", "1.5");
  cfg.set("loss.beta", "0.7");
  cfg.set("loss.gamma", "0.3");
  auto codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), 2);
  auto r = train::stage2_semantic(codec, lab.task, lab.train_features, harness::train_config(cfg, 2));
  ASSERT_FALSE(r.steps.empty());
  for (const auto& s : r.steps) {
    EXPECT_NEAR(s.total, 1.5 * s.div + 0.7 * s.cls + 0.3 * s.xai, 1e-12);
    EXPECT_TRUE(std::isfinite(s.total));
  }
}

TEST(Stage2, Deterministic) {
  const auto& lab = lab4();
  const auto cfg = tiny();
  auto run = [&] {
    auto codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), 3);
    auto r = train::stage2_semantic(codec, lab.task, lab.train_features, harness::train_config(cfg, 3));
    std::vector<double> out;
    for (const auto& s : r.steps) out.push_back(s.total);
    for (const auto& [n, t] : codec.params()) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Stage1, ReusableAcrossTasks) {
  const auto& lab_a = lab4();
  auto cfg_b = tiny(6);
  cfg_b.set("data.seed", "11");
  auto lab_b = harness::build_lab(cfg_b);
  ASSERT_EQ(lab_a.task.split_shape(), lab_b.task.split_shape());
  const auto cfg = tiny();
  auto codec = codec::SemanticCodec(harness::codec_config(cfg, lab_a.task.split_shape()), 4);
  train::stage1_denoise(codec, lab_a.train_features, harness::train_config(cfg, 4));
  auto r = train::stage2_semantic(codec, lab_b.task, lab_b.train_features, harness::train_config(cfg_b, 4));
  for (const auto& s : r.steps) EXPECT_TRUE(std::isfinite(s.total));
  auto m = train::evaluate(codec, lab_b.task, lab_b.val_features, harness::eval_config(cfg_b, 4));
  for (const auto& row : m.rows) EXPECT_GE(row.accuracy, 0.0);
}

TEST(Evaluate, ZeroBerIndependentOfChannelSeed) {
  const auto& lab = lab4();
  const auto cfg = tiny();
  auto codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), 6);
  train::EvalConfig e;
  e.bers = {0.0};
  e.reps = 2;
  e.seeds = {1};
  auto a = train::evaluate(codec, lab.task, lab.val_features, e);
  e.seeds = {9};
  auto b = train::evaluate(codec, lab.task, lab.val_features, e);
  EXPECT_EQ(a.mean_at(0.0), b.mean_at(0.0));
  EXPECT_EQ(a.rows[0].accuracy, a.rows[1].accuracy);
}

TEST(Evaluate, RowsPerBerSeedAndRep) {
  EXPECT_EQ(train::EvalConfig{}.reps, 6u);
  const auto& lab = lab4();
  const auto cfg = tiny();
  auto codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), 7);
  train::EvalConfig e;
  e.bers = {0.05, 1e-4};
  e.reps = 3;
  e.seeds = {2, 1};
  auto m = train::evaluate(codec, lab.task, lab.val_features, e);
  EXPECT_EQ(m.rows.size(), 12u);
  ASSERT_EQ(m.summary.size(), 2u);
  EXPECT_EQ(m.summary[0].ber, 1e-4);
  EXPECT_EQ(m.summary[0].runs, 6u);
  EXPECT_THROW(m.mean_at(0.5), std::out_of_range);
  for (const auto& r : m.rows) EXPECT_EQ(r.wire_bits, 768u);
}

TEST(Csv, FixedColumns) {
  const auto h = train::csv_header();
  EXPECT_EQ(h.rfind("stage,epoch,ber,seed,accuracy", 0), 0u);
  train::EpochLog e;
  e.stage = "stage2";
  EXPECT_EQ(fields(train::csv_line(e, 1)), fields(h));
  EXPECT_EQ(fields(train::csv_line(train::EvalRow{}, 2.5)), fields(h));
}

TEST(LossWeights, RejectInvalid) {
  train::LossWeights w;
  w.alpha = -1.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}
