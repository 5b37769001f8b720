#include <array>
#include <cstdio>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "prism/jsonl.hpp"
#include "support/temp_dir.hpp"

using namespace prism;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
  std::string cmd = std::string(PRISM_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
  int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, VersionAndHelp) {
  auto r = cli("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("checkpoint format 1"), std::string::npos) << r.output;
  r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"prepare", "distill", "train", "explain", "evaluate", "annotate-serve", "annotate-report", "bench", "walkthrough"})
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST(Cli, UsageErrorsExitOne) {
  testutil::TempDir dir;
  dir.write("data.jsonl", "");
  auto r = cli("train --data " + q(dir / "data.jsonl"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--out"), std::string::npos) << r.output;
  r = cli("train --data /nonexistent.jsonl --out /tmp/x");
  EXPECT_EQ(r.code, 1);
  r = cli("frobnicate");
  EXPECT_EQ(r.code, 1);
  r = cli("prepare --out /tmp/x --movielens /a --synthetic-default");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("exactly one"), std::string::npos) << r.output;
}

TEST(Cli, EmptyPredictionsExitTwo) {
  testutil::TempDir dir;
  dir.write("pred.jsonl", "");
  dir.write("ref.jsonl", "\"a\"\n");
  auto r = cli("evaluate --metrics rouge1 --pred " + q(dir / "pred.jsonl") + " --ref " + q(dir / "ref.jsonl") + " --out " + q(dir / "r.json"));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("empty"), std::string::npos);
  r = cli("evaluate --pred " + q(dir / "ref.jsonl") + " --ref " + q(dir / "ref.jsonl") + " --out " + q(dir / "r.json"));
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("--checkpoint"), std::string::npos);
}

TEST(Cli, MalformedInputNamesFileAndLine) {
  testutil::TempDir dir;
  dir.write("pred.jsonl", "\"ok\"\n{broken\n");
  dir.write("ref.jsonl", "\"a\"\n\"b\"\n");
  auto r = cli("evaluate --metrics rouge1 --pred " + q(dir / "pred.jsonl") + " --ref " + q(dir / "ref.jsonl") + " --out " + q(dir / "r.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("pred.jsonl:2"), std::string::npos) << r.output;
}

TEST(Cli, EndToEndThroughEverySubcommand) {
  testutil::TempDir dir;
  dir.write("synthetic.json", R"({"users": 5, "min_history": 5, "max_history": 7})");
  dir.write("train.json", R"({"model": {"hidden_dim": 16, "num_encoder_layers": 1, "num_decoder_layers": 1, "num_heads": 2,
                                         "feedforward_dim": 32, "max_target_len": 40},
                              "training": {"epochs": 1, "learning_rate": 0.003}})");
  auto r = cli("prepare --synthetic " + q(dir / "synthetic.json") + " --holdout 0.2 --seed 3 --out " + q(dir / "data"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto stats = jsonl::read_json(dir / "data" / "stats.json");
  EXPECT_EQ(stats["num_users"], 5);

  r = cli("distill --instances " + q(dir / "data" / "train_instances.jsonl") + " --catalog " + q(dir / "data" / "catalog.jsonl") +
          " --report " + q(dir / "distill_report.json") + " --out " + q(dir / "distilled.jsonl"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(jsonl::read_json(dir / "distill_report.json")["failed"], 0);

  r = cli("train --data " + q(dir / "distilled.jsonl") + " --config " + q(dir / "train.json") + " --seed 1 --out " + q(dir / "model"));
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_TRUE(std::filesystem::exists(dir / "model" / "student.ckpt"));
  const auto ckpt = q(dir / "model" / "student.ckpt");

  const std::string inst = R"({"user_id":"nobody","history":["Alpha Beta","Gamma Delta"],"recommended_item":"Epsilon"})";
  r = cli("explain --checkpoint " + ckpt + " --max-len 6 --json --instance '" + inst + "'");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("\"known_user\":false"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("unknown-user vector"), std::string::npos);
  r = cli("explain --checkpoint " + ckpt + " --instance '{not json'");
  EXPECT_EQ(r.code, 1);

  r = cli("evaluate --pred " + q(dir / "distilled.jsonl") + " --ref " + q(dir / "distilled.jsonl") + " --checkpoint " + ckpt +
          " --out " + q(dir / "eval.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto eval = jsonl::read_json(dir / "eval.json");
  EXPECT_NEAR(eval["means"]["rouge1"].get<double>(), 1.0, 1e-12);
  EXPECT_LT(eval["means"]["gptscore"].get<double>(), 0.0);

  r = cli("bench --checkpoint " + ckpt + " --instances " + q(dir / "distilled.jsonl") + " --runs 2 --warmup 1 --max-len 4 --out " +
          q(dir / "bench.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto bench = jsonl::read_json(dir / "bench.json");
  EXPECT_EQ(bench["entries"].size(), 1u);
  EXPECT_TRUE(bench["memory_tracked"].get<bool>());

  dir.write("session.json", R"({"session_id": "cli", "annotator_count": 2, "ratings_log": "ratings.jsonl",
                                "systems": [{"id": "teacher", "outputs": "distilled.jsonl"}]})");
  dir.write("ratings.jsonl", R"({"annotator":"a1","item_index":0,"system":"teacher","persuasiveness":4,"personalization":3,"faithfulness":5})"
                             "\n");
  r = cli("annotate-report --session " + q(dir / "session.json") + " --out " + q(dir / "summary.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(jsonl::read_json(dir / "summary.json")["session_id"], "cli");
}
