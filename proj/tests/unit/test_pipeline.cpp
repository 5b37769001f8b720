#include <gtest/gtest.h>

#include "prism/pipeline/walkthrough.hpp"
#include "support/temp_dir.hpp"

using namespace prism;
using namespace prism::pipeline;

namespace {

// Small enough to run in a couple of seconds.
PipelineConfig quick_config() {
  PipelineConfig c;
  c.corpus.users = 6;
  c.corpus.min_history = 8;
  c.corpus.max_history = 12;
  c.corpus.shared_tail = 4;
  c.train_selection = {2, std::nullopt, 30, 1};
  c.test_selection = {2, std::nullopt, 6, 2};
  c.model.hidden_dim = 16;
  c.model.num_encoder_layers = 1;
  c.model.num_decoder_layers = 1;
  c.model.num_heads = 2;
  c.model.feedforward_dim = 32;
  c.model.max_target_len = 40;
  c.training.epochs = 1;
  c.decode.max_len = 8;
  c.bench.enabled = false;
  return c;
}

corpus::RecommendationInstance inst(const std::string& user, std::size_t len, const std::string& item) {
  corpus::RecommendationInstance r;
  r.user_id = user;
  r.history.user_id = user;
  for (std::size_t i = 0; i < len; ++i) {
    r.history.items.push_back("h" + std::to_string(i));
    r.history.timestamps.push_back(static_cast<std::int64_t>(i));
  }
  r.recommended_item = item;
  return r;
}

}  // namespace

TEST(PipelineConfig, DefaultsValidateAndRoundTrip) {
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  nlohmann::json j = c;
  auto back = pipeline_config_from_json(j);
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(c.corpus.shared_tail, 12u);
  EXPECT_EQ(c.training.epochs, 15u);
}

TEST(PipelineConfig, PartialConfigKeepsDefaults) {
  auto c = pipeline_config_from_json({{"training", {{"epochs", 3}}}, {"test_selection", {{"shared_tail_from", 8}}}});
  EXPECT_EQ(c.training.epochs, 3u);
  EXPECT_DOUBLE_EQ(c.training.learning_rate, 2e-3);
  ASSERT_TRUE(c.test_selection.shared_tail_from);
  EXPECT_EQ(*c.test_selection.shared_tail_from, 8u);
  EXPECT_EQ(c.test_selection.max_count, 40u);
}

TEST(PipelineConfig, RejectsBadValues) {
  auto c = pipeline_config_from_json({{"training", {{"epochs", 0}}}});
  EXPECT_THROW(c.validate(), InputError);
  c = pipeline_config_from_json({{"holdout_fraction", 1.0}});
  EXPECT_THROW(c.validate(), InputError);
  c = pipeline_config_from_json({{"template_path", "/nonexistent/template.txt"}});
  EXPECT_THROW(c.validate(), InputError);
  EXPECT_THROW(pipeline_config_from_json({{"metrics", {"bleu"}}}), InputError);
  EXPECT_THROW(pipeline_config_from_json({{"holdout_fraction", "lots"}}), InputError);
}

TEST(Selection, FiltersByHistoryAndTailPosition) {
  std::vector<std::string> tail = {"t0", "t1", "t2", "t3"};
  std::vector<corpus::RecommendationInstance> pool = {inst("u1", 1, "t3"), inst("u1", 5, "t1"), inst("u2", 5, "t2"),
                                                      inst("u2", 6, "x"),  inst("u3", 9, "t3")};
  Selection sel{2, 2, 0, 0};
  auto out = select_instances(pool, sel, tail);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].recommended_item, "t2");
  EXPECT_EQ(out[1].user_id, "u3");
  sel = {1, std::nullopt, 0, 0};
  EXPECT_EQ(select_instances(pool, sel, tail).size(), 5u);
}

TEST(Selection, CapKeepsPoolOrderAndIsSeeded) {
  std::vector<corpus::RecommendationInstance> pool;
  for (int i = 0; i < 20; ++i) pool.push_back(inst("u" + std::to_string(i), 3, "x"));
  Selection sel{1, std::nullopt, 5, 9};
  auto a = select_instances(pool, sel, {});
  auto b = select_instances(pool, sel, {});
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a[i].user_id, b[i].user_id);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_LT(std::stoi(a[i - 1].user_id.substr(1)), std::stoi(a[i].user_id.substr(1)));
}

TEST(Walkthrough, WritesEveryArtifact) {
  testutil::TempDir dir;
  std::vector<std::string> log;
  auto r = run_walkthrough(quick_config(), dir / "run", [&](const std::string& s) { log.push_back(s); });
  for (const char* f : {"config.json", "catalog.jsonl", "train_instances.jsonl", "test_instances.jsonl", "distilled_train.jsonl",
                        "distilled_test.jsonl", "distill_report.json", "student_full.ckpt", "student_no_user.ckpt", "training.json",
                        "metrics_report.json", "summary.txt", "predictions/student-full.jsonl", "predictions/student-no-user.jsonl",
                        "predictions/student-zero-shot.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  EXPECT_FALSE(std::filesystem::exists(dir / "run" / "bench_report.json"));
  ASSERT_EQ(r.systems.size(), 3u);
  EXPECT_EQ(r.systems[0].name, kSystemFull);
  EXPECT_FALSE(log.empty());
  auto report = jsonl::read_json(dir / "run" / "metrics_report.json");
  EXPECT_EQ(report["systems"].size(), 3u);
  EXPECT_EQ(report["test_samples"], r.test_samples);
}

TEST(Walkthrough, StageErrorsNameTheStage) {
  auto c = quick_config();
  c.train_selection.min_history = 1000;
  testutil::TempDir dir;
  try {
    run_walkthrough(c, dir / "run");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("split"), std::string::npos) << e.what();
  }
}
