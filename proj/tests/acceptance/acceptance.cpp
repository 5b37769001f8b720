// One test per acceptance criterion; each prints a PASS or FAIL line.
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>

#include "prism/bench/bench.hpp"
#include "prism/distill/mock_teacher.hpp"
#include "prism/distill/pipeline.hpp"
#include "prism/humaneval/kappa.hpp"
#include "prism/humaneval/ttest.hpp"
#include "prism/metrics/gptscore.hpp"
#include "prism/metrics/rouge.hpp"
#include "prism/pipeline/synthetic.hpp"
#include "prism/pipeline/walkthrough.hpp"
#include "prism/student/checkpoint.hpp"
#include "prism/student/explain.hpp"
#include "prism/student/trainer.hpp"
#include "support/temp_dir.hpp"

using namespace prism;

namespace {

// Tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradFloor = 1e-5;
constexpr std::size_t kGradSamples = 200;
constexpr double kAblationMinGap = 0.05;
constexpr double kRougeTol = 1e-9;
constexpr double kPitfallBand = 0.15;
constexpr double kKappaTol = 1e-4;
constexpr double kTTestTol = 1e-6;
constexpr double kBenchTol = 0.01;

struct Corpus {
  std::shared_ptr<corpus::Catalog> catalog;
  std::vector<distill::DistilledSample> samples;
  distill::PromptTemplate tmpl;
  student::Vocabulary vocab;
  std::vector<std::string> users;
};

Corpus small_corpus(std::size_t users) {
  Corpus c;
  pipeline::SyntheticConfig sc;
  sc.users = users;
  sc.min_history = 4;
  sc.max_history = 6;
  auto corp = pipeline::generate_corpus(sc);
  c.catalog = std::make_shared<corpus::Catalog>(corp.catalog);
  std::vector<corpus::RecommendationInstance> inst;
  for (const auto& h : corp.histories)
    for (auto& i : corpus::prefix_instances(h))
      if (i.history.size() >= 2) inst.push_back(std::move(i));
  distill::MockTeacher teacher(1, c.catalog, c.tmpl);
  c.samples = distill::run_distillation(inst, teacher, c.tmpl, *c.catalog).samples;
  c.vocab = student::build_vocabulary(student::vocabulary_texts(c.samples, c.tmpl), 1);
  c.users = student::distinct_users(c.samples);
  return c;
}

student::ModelConfig small_model(std::size_t vocab) {
  student::ModelConfig m;
  m.hidden_dim = 16;
  m.num_encoder_layers = 1;
  m.num_decoder_layers = 1;
  m.num_heads = 2;
  m.feedforward_dim = 32;
  m.max_source_len = 128;
  m.max_target_len = 48;
  m.vocab_size = vocab;
  return m;
}

pipeline::PipelineConfig walkthrough_config() {
  pipeline::PipelineConfig c;
  c.bench.enabled = false;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Certain : public metrics::EvaluatorModel {
 public:
  std::vector<double> token_log_probs(const metrics::EvalContext&, const std::vector<std::string>& t) const override {
    return std::vector<double>(t.size(), 0.0);
  }
  std::string name() const override { return "certain"; }
};

// Non-retryable rejection on calls 3, 6, 9, ...
class ScheduledFailures : public distill::Teacher {
 public:
  distill::TeacherResponse complete(const std::string& prompt) const override {
    distill::TeacherResponse r;
    if (++calls_ % 3 == 0) r.outcome = distill::TeacherError{distill::TeacherError::Kind::rejected, "scheduled", false};
    else r.outcome = "ok " + std::to_string(prompt.size());
    return r;
  }
  std::string name() const override { return "scheduled"; }
  mutable std::atomic<int> calls_{0};
};

// Top-down over suffixes, memoised; independent of the library's bottom-up
// prefix table.
std::size_t lcs_recursive(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t i, std::size_t j,
                          std::vector<int>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  int& slot = memo[i * (b.size() + 1) + j];
  if (slot >= 0) return static_cast<std::size_t>(slot);
  std::size_t v = a[i] == b[j] ? 1 + lcs_recursive(a, b, i + 1, j + 1, memo)
                               : std::max(lcs_recursive(a, b, i + 1, j, memo), lcs_recursive(a, b, i, j + 1, memo));
  slot = static_cast<int>(v);
  return v;
}

std::size_t lcs_recursive(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<int> memo((a.size() + 1) * (b.size() + 1), -1);
  return lcs_recursive(a, b, 0, 0, memo);
}

std::vector<std::vector<std::string>> all_sequences(std::size_t max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "c"};
  std::vector<std::vector<std::string>> out = {{}};
  std::size_t from = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t to = out.size();
    for (std::size_t k = from; k < to; ++k)
      for (const auto& s : alphabet) {
        auto next = out[k];
        next.push_back(s);
        out.push_back(std::move(next));
      }
    from = to;
  }
  return out;
}

}  // namespace

TEST(Acceptance, UserVectorExactness) {
  auto c = small_corpus(4);
  auto m = student::Model<float>(small_model(c.vocab.size()), c.users, 5).cast<double>();
  auto source = student::encode_source(c.vocab, c.tmpl, c.samples[0].history, c.samples[0].recommended_item, 128);
  const auto base = student::embed_input(m, source, student::Model<double>::kUnknownUser);
  const auto& wu = m.params().user_embedding.value;
  std::size_t mismatches = 0;
  for (std::size_t u = 1; u < wu.rows(); ++u) {
    const auto e = student::embed_input(m, source, u);
    for (std::size_t j = 0; j < source.size(); ++j)
      for (std::size_t d = 0; d < e.cols(); ++d) {
        // e_j + v_u was computed as (word + position) + user, so subtracting
        // the unknown-user row recovers v_u exactly.
        const double diff = e(j, d) - base(j, d), want = wu(u, d);
        mismatches += std::memcmp(&diff, &want, sizeof(double)) != 0;
      }
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Acceptance, ColdStartEquivalence) {
  auto c = small_corpus(4);
  student::Model<float> m(small_model(c.vocab.size()), c.users, 7);
  auto ex = student::make_examples(m, c.vocab, c.tmpl, c.samples);
  student::TrainingConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 1e-2;
  tc.batch_size = 4;
  student::train(m, std::span<const student::Example>(ex), tc);

  // Same weights with the chosen user's vector set to zero.
  const std::string user = c.users[1];
  auto zeroed = m;
  auto& wu = zeroed.params().user_embedding.value;
  for (std::size_t d = 0; d < wu.cols(); ++d) wu(zeroed.user_row(user), d) = 0.0f;

  student::DecodeConfig dc;
  dc.max_len = 24;
  for (auto mode : {student::DecodeConfig::Mode::greedy, student::DecodeConfig::Mode::beam}) {
    dc.mode = mode;
    dc.beam_width = 3;
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& s = c.samples[k];
      auto cold = student::explain_titles(m, c.vocab, c.tmpl, "never-seen-user", s.history, s.recommended_item, dc);
      auto zero = student::explain_titles(zeroed, c.vocab, c.tmpl, user, s.history, s.recommended_item, dc);
      EXPECT_FALSE(cold.known_user);
      EXPECT_EQ(cold.text, zero.text);
      EXPECT_EQ(cold.generation.tokens, zero.generation.tokens);
    }
  }
}

TEST(Acceptance, GradientOracle) {
  auto c = small_corpus(3);
  auto cfg = small_model(c.vocab.size());
  cfg.dropout = 0.0;
  auto m = student::Model<float>(cfg, c.users, 11).cast<double>();
  auto ex = student::make_examples(m, c.vocab, c.tmpl, std::span<const distill::DistilledSample>(c.samples.data(), 3));
  const std::span<const student::Example> batch(ex);

  m.zero_grad();
  student::compute_loss(m, batch, true);

  struct Slot {
    std::string name;
    student::Param<double>* param;
  };
  std::vector<Slot> slots;
  std::size_t total = 0;
  m.params().for_each([&](const std::string& name, student::Param<double>& p) {
    slots.push_back({name, &p});
    total += p.value.size();
  });

  Rng rng(2024);
  std::size_t worst_i = 0;
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t i = 0; i < kGradSamples; ++i) {
    std::size_t flat = rng.below(total);
    auto it = slots.begin();
    while (flat >= it->param->value.size()) flat -= (it++)->param->value.size();
    double& x = it->param->value.data()[flat];
    const double analytic = it->param->grad.data()[flat];
    const double saved = x;
    x = saved + kGradStep;
    const double up = student::evaluate_loss(m, batch).loss;
    x = saved - kGradStep;
    const double down = student::evaluate_loss(m, batch).loss;
    x = saved;
    const double numeric = (up - down) / (2 * kGradStep);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
    if (rel > worst) {
      worst = rel;
      worst_i = flat;
      worst_name = it->name;
    }
  }
  std::printf("gradient oracle: %zu samples, worst relative error %.3g (%s[%zu])\n", kGradSamples, worst, worst_name.c_str(), worst_i);
  EXPECT_LE(worst, kGradRelTol);
}

TEST(Acceptance, AblationSignal) {
  testutil::TempDir dir;
  auto cfg = walkthrough_config();
  auto r = pipeline::run_walkthrough(cfg, dir / "run");
  const double full = r.full_history.final_loss, ablated = r.ablated_history.final_loss;
  const double gap = (ablated - full) / ablated;
  std::printf("final loss: full %.4f, without user vectors %.4f, relative gap %.1f%%\n", full, ablated, 100 * gap);
  EXPECT_GE(gap, kAblationMinGap);

  // Two users with disjoint taste, identical input.
  auto corp = pipeline::generate_corpus(cfg.corpus);
  auto loaded = student::load_checkpoint<float>(dir / "run" / "student_full.ckpt");
  std::string ua, ub;
  for (const auto& [a, ga] : corp.user_genres) {
    if (loaded.model.user_row(a) == student::Model<float>::kUnknownUser) continue;
    for (const auto& [b, gb] : corp.user_genres) {
      if (loaded.model.user_row(b) == student::Model<float>::kUnknownUser || a == b) continue;
      bool disjoint = std::none_of(ga.begin(), ga.end(), [&](const auto& g) { return std::find(gb.begin(), gb.end(), g) != gb.end(); });
      if (disjoint && ua.empty()) ua = a, ub = b;
    }
  }
  ASSERT_FALSE(ua.empty());
  auto samples = distill::read_dataset(dir / "run" / "distilled_train.jsonl");
  const auto& s = samples.front();
  auto ea = student::explain_titles(loaded.model, loaded.vocabulary, distill::PromptTemplate(), ua, s.history, s.recommended_item, cfg.decode);
  auto eb = student::explain_titles(loaded.model, loaded.vocabulary, distill::PromptTemplate(), ub, s.history, s.recommended_item, cfg.decode);
  std::printf("%s: %s\n%s: %s\n", ua.c_str(), ea.text.c_str(), ub.c_str(), eb.text.c_str());
  EXPECT_NE(ea.text, eb.text);
}

TEST(Acceptance, RougeOracle) {
  // Every pair with both sides up to length 5, every length-8 sequence
  // against every sequence up to length 3, and random pairs up to length 8.
  auto seqs = all_sequences(8);
  std::size_t checked = 0, wrong = 0;
  auto check = [&](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const auto want = lcs_recursive(a, b);
    const auto got = metrics::lcs_length(a, b);
    ++checked;
    wrong += got != want;
    auto s = metrics::rouge_l_tokens(a, b);
    if (!a.empty() && !b.empty()) wrong += std::abs(s.precision - double(want) / double(a.size())) > kRougeTol;
  };
  const std::size_t upto5 = (243 * 3 - 1) / 2, upto3 = 40, first8 = (6561 * 3 - 1) / 2 - 6561;
  for (std::size_t i = 0; i < upto5; ++i)
    for (std::size_t j = 0; j < upto5; ++j) check(seqs[i], seqs[j]);
  for (std::size_t i = first8; i < seqs.size(); ++i)
    for (std::size_t j = 0; j < upto3; ++j) check(seqs[i], seqs[j]), check(seqs[j], seqs[i]);
  Rng rng(8);
  for (int k = 0; k < 100000; ++k) check(seqs[rng.below(seqs.size())], seqs[rng.below(seqs.size())]);
  std::printf("lcs oracle: %zu pairs checked\n", checked);
  EXPECT_EQ(wrong, 0u);

  struct Hand {
    const char* pred;
    const char* ref;
    double r1, r2;  // F1
  };
  const std::vector<Hand> hand = {
      {"the cat sat on the mat", "the cat is on the mat", 5.0 / 6, 3.0 / 5},
      {"a b c", "a b c", 1.0, 1.0},
      {"a b", "c d", 0.0, 0.0},
      {"the the the", "the cat", 0.4, 0.0},
      {"a a b b", "a b b b", 0.75, 2.0 / 3},
      {"x", "x y z", 0.5, 0.0},
      {"Hello, World!", "hello world", 1.0, 1.0},
      {"one two three four", "four three two one", 1.0, 0.0},
      {"red fish blue fish", "one fish two fish red fish blue fish", 2.0 / 3, 0.6},
      {"it's a sci-fi film", "its a scifi movie", 0.75, 2.0 / 3},
  };
  for (const auto& h : hand) {
    EXPECT_NEAR(metrics::rouge_n(h.pred, h.ref, 1).f1, h.r1, kRougeTol) << h.pred;
    EXPECT_NEAR(metrics::rouge_n(h.pred, h.ref, 2).f1, h.r2, kRougeTol) << h.pred;
  }
}

TEST(Acceptance, RougePitfallCase) {
  const char* a = "Back to the Future is based on \"The Wizard of Oz\" and influenced by \"The Phantom Menace\".";
  const char* b = "Back to the Future is a sci-fi movie influenced by \"The Phantom Menace\" and \"The Wizard of Oz\".";
  const char* c = "It's a classic 80s sci-fi adventure, similar to other films in your history.";
  const double ab = metrics::rouge_l(b, a).f1, ac = metrics::rouge_l(c, a).f1;
  std::printf("rougeL(A,B) = %.4f (expected 0.75 +- %.2f), rougeL(A,C) = %.4f (expected 0.15 +- %.2f)\n", ab, kPitfallBand, ac,
              kPitfallBand);
  EXPECT_GT(ab, ac);
  EXPECT_NEAR(ab, 0.75, kPitfallBand);
  EXPECT_NEAR(ac, 0.15, kPitfallBand);
}

TEST(Acceptance, FleissKappaOracle) {
  humaneval::AgreementMatrix canonical{{{0, 0, 0, 0, 14}, {0, 2, 6, 4, 2}, {0, 0, 3, 5, 6}, {0, 3, 9, 2, 0}, {2, 2, 8, 1, 1},
                                        {7, 7, 0, 0, 0},  {3, 2, 6, 3, 0}, {2, 5, 3, 2, 2}, {6, 5, 2, 1, 0}, {0, 2, 2, 3, 7}}};
  // Spreadsheet-style recomputation: column shares, row agreement, then kappa.
  const double N = 10, n = 14;
  double p_j[5] = {}, p_bar = 0;
  for (const auto& row : canonical.counts) {
    double sq = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      p_j[j] += row[j] / (N * n);
      sq += double(row[j]) * row[j];
    }
    p_bar += (sq - n) / (n * (n - 1)) / N;
  }
  double p_e = 0;
  for (double p : p_j) p_e += p * p;
  const double sheet = (p_bar - p_e) / (1 - p_e);
  EXPECT_NEAR(humaneval::fleiss_kappa(canonical), sheet, kKappaTol);
  EXPECT_NEAR(humaneval::fleiss_kappa(canonical), 0.2099, kKappaTol);

  EXPECT_EQ(humaneval::fleiss_kappa(humaneval::AgreementMatrix{{{0, 3, 0, 0, 0}, {0, 0, 0, 3, 0}, {3, 0, 0, 0, 0}}}), 1.0);

  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t subjects = 2 + rng.below(9), raters = 2 + rng.below(5);
    humaneval::AgreementMatrix m;
    for (std::size_t i = 0; i < subjects; ++i) {
      std::vector<std::size_t> row(5, 0);
      for (std::size_t r = 0; r < raters; ++r) ++row[rng.below(5)];
      m.counts.push_back(row);
    }
    std::vector<std::size_t> perm = {0, 1, 2, 3, 4};
    rng.shuffle(perm.begin(), perm.end());
    auto p = m;
    for (std::size_t i = 0; i < subjects; ++i)
      for (std::size_t j = 0; j < 5; ++j) p.counts[i][perm[j]] = m.counts[i][j];
    EXPECT_NEAR(humaneval::fleiss_kappa(p), humaneval::fleiss_kappa(m), 1e-12);
  }
}

TEST(Acceptance, PairedTTest) {
  struct Case {
    std::vector<double> a, b;
    double t, p;
  };
  // Reference t and two-sided p from an independent statistics package.
  const std::vector<Case> cases = {
      {{2, -1, 3, 0, 1}, {0, 0, 0, 0, 0}, 1.41421356237309, 0.230199641080499},
      {{4.1, 3.8, 4.5, 4.0, 3.9, 4.4}, {3.2, 3.9, 3.1, 3.5, 3.0, 3.6}, 3.58780440179393, 0.0157445127447718},
      {{1, 2, 3}, {1.5, 1, 2}, 1.0, 0.422649730810374},
      {{3.33, 4.67, 2.0, 4.0, 3.67, 5.0, 4.33}, {3.0, 3.67, 2.33, 3.33, 3.0, 4.0, 4.0}, 2.97960682287628, 0.024649166782157},
      {{10, 12, 9, 11, 13, 8, 10, 12}, {11, 11, 10, 10, 12, 9, 9, 11}, 0.683130051063973, 0.516489552301226},
  };
  for (const auto& c : cases) {
    auto r = humaneval::paired_t_test(c.a, c.b);
    EXPECT_NEAR(r.t, c.t, kTTestTol);
    EXPECT_NEAR(r.p, c.p, kTTestTol);
  }
  auto same = humaneval::paired_t_test(std::vector<double>{3, 4, 5}, std::vector<double>{3, 4, 5});
  EXPECT_TRUE(same.degenerate);
  EXPECT_EQ(same.t, 0.0);
  EXPECT_EQ(same.p, 1.0);
  auto shifted = humaneval::paired_t_test(std::vector<double>{3, 4, 5}, std::vector<double>{4, 5, 6});
  EXPECT_TRUE(shifted.degenerate);
  EXPECT_TRUE(std::isinf(shifted.t) && shifted.t < 0);
  EXPECT_EQ(shifted.p, 0.0);
  EXPECT_THROW(humaneval::paired_t_test(std::vector<double>{1}, std::vector<double>{1}), InputError);
}

TEST(Acceptance, GptScoreNormalization) {
  const std::size_t vocab = 1234;
  metrics::UniformEvaluator uniform(vocab);
  for (const char* e : {"fine", "a fine film", "a fine film for a quiet evening with a friend who likes westerns"})
    EXPECT_NEAR(metrics::gpt_score(e, "ctx", uniform), -std::log(double(vocab)), 1e-12) << e;
  EXPECT_EQ(metrics::gpt_score("a fine film", "ctx", Certain()), 0.0);
}

TEST(Acceptance, DistillationConservation) {
  pipeline::SyntheticConfig sc;
  sc.users = 8;
  auto corp = pipeline::generate_corpus(sc);
  auto catalog = std::make_shared<corpus::Catalog>(corp.catalog);
  std::vector<corpus::RecommendationInstance> inst;
  for (const auto& h : corp.histories)
    for (auto& i : corpus::prefix_instances(h)) inst.push_back(std::move(i));
  distill::PromptTemplate tmpl;

  for (std::size_t n : {1u, 2u, 3u, 10u, 31u})
    for (std::size_t par : {1u, 4u}) {
      ScheduledFailures teacher;
      distill::DistillOptions opt;
      opt.parallelism = par;
      opt.retry.max_retries = 0;
      auto r = distill::run_distillation(std::span(inst.data(), n), teacher, tmpl, *catalog, opt);
      EXPECT_EQ(r.samples.size() + r.report.failed, n);
      EXPECT_EQ(r.report.failed, n / 3);
      EXPECT_EQ(r.report.instances, n);
    }

  distill::MockTeacher mock(9, catalog, tmpl, 0.0);
  auto r = distill::run_distillation(inst, mock, tmpl, *catalog);
  ASSERT_EQ(r.samples.size(), inst.size());
  std::size_t grounded = 0;
  for (std::size_t i = 0; i < inst.size(); ++i)
    grounded += distill::is_grounded(r.samples[i].golden_explanation, distill::render_prompt(tmpl, inst[i], *catalog), *catalog);
  std::printf("grounded: %zu of %zu\n", grounded, inst.size());
  EXPECT_EQ(grounded, inst.size());
}

TEST(Acceptance, BenchRatios) {
  auto entry = [](const char* name, double ms, double gb) {
    bench::BenchEntry e;
    e.system = name;
    e.mean_latency_ms = ms;
    e.peak_memory_bytes = static_cast<std::size_t>(gb * 1e9);
    return e;
  };
  bench::BenchReport r{{entry("large", 4612.92, 20.60), entry("student", 190.30, 1.91)}, true};
  auto q = bench::compare(r);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_NEAR(q[0].speedup, 24.24, kBenchTol);
  ASSERT_TRUE(q[0].memory_ratio);
  EXPECT_NEAR(*q[0].memory_ratio, 10.78, kBenchTol);
}

TEST(Acceptance, EndToEndDeterminism) {
  testutil::TempDir dir;
  auto cfg = walkthrough_config();
  pipeline::run_walkthrough(cfg, dir / "a");
  pipeline::run_walkthrough(cfg, dir / "b");
  const auto a = slurp(dir / "a" / "metrics_report.json"), b = slurp(dir / "b" / "metrics_report.json");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_EQ(slurp(dir / "a" / "student_full.ckpt"), slurp(dir / "b" / "student_full.ckpt"));
}

namespace {

class PassFailPrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    std::printf("%s %s\n", info.result()->Passed() ? "PASS" : "FAIL", info.name());
    std::fflush(stdout);
  }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new PassFailPrinter);
  return RUN_ALL_TESTS();
}
