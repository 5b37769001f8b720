#include <cmath>
#include <thread>

#include <gtest/gtest.h>

#include "prism/metrics/bertscore.hpp"
#include "prism/metrics/gptscore.hpp"
#include "prism/metrics/report.hpp"
#include "prism/metrics/rouge.hpp"

using namespace prism;
using namespace prism::metrics;

namespace {

// Zero log-prob for every token: a perfectly confident evaluator.
class Certain : public EvaluatorModel {
 public:
  std::vector<double> token_log_probs(const EvalContext&, const std::vector<std::string>& t) const override {
    return std::vector<double>(t.size(), 0.0);
  }
  std::string name() const override { return "certain"; }
};

// Fails on any explanation mentioning "boom".
class Picky : public EvaluatorModel {
 public:
  std::vector<double> token_log_probs(const EvalContext&, const std::vector<std::string>& t) const override {
    for (const auto& s : t)
      if (s == "boom") throw ProviderError("too long");
    return std::vector<double>(t.size(), -1.0);
  }
  std::string name() const override { return "picky"; }
};

class Broken : public EvaluatorModel {
 public:
  explicit Broken(std::vector<double> v) : v_(std::move(v)) {}
  std::vector<double> token_log_probs(const EvalContext&, const std::vector<std::string>&) const override { return v_; }
  std::string name() const override { return "broken"; }
  std::vector<double> v_;
};

}  // namespace

TEST(Rouge, HandCountedScores) {
  auto r1 = rouge_n("the cat sat on the mat", "the cat is on the mat", 1);
  EXPECT_DOUBLE_EQ(r1.precision, 5.0 / 6);
  EXPECT_DOUBLE_EQ(r1.recall, 5.0 / 6);
  EXPECT_DOUBLE_EQ(r1.f1, 5.0 / 6);
  auto r2 = rouge_n("the cat sat on the mat", "the cat is on the mat", 2);
  EXPECT_DOUBLE_EQ(r2.f1, 3.0 / 5);
  auto rl = rouge_l("the cat sat on the mat", "the cat is on the mat");
  EXPECT_DOUBLE_EQ(rl.f1, 5.0 / 6);
  auto clip = rouge_n("the the the", "the cat", 1);
  EXPECT_DOUBLE_EQ(clip.precision, 1.0 / 3);
  EXPECT_DOUBLE_EQ(clip.recall, 0.5);
  EXPECT_DOUBLE_EQ(clip.f1, 0.4);
  // a b c d / a c e: LCS = "a c"
  auto l = rouge_l("a b c d", "a c e");
  EXPECT_DOUBLE_EQ(l.precision, 0.5);
  EXPECT_DOUBLE_EQ(l.recall, 2.0 / 3);
}

TEST(Rouge, EmptyAndDisjoint) {
  EXPECT_EQ(rouge_n("", "a b", 1).f1, 0.0);
  EXPECT_EQ(rouge_n("a", "a", 2).f1, 0.0);
  EXPECT_EQ(rouge_l("a b", "c d").f1, 0.0);
  EXPECT_EQ(rouge_l("...", "c d").f1, 0.0);
}

TEST(Rouge, SymmetricF1AndCaseInsensitive) {
  const char* a = "Since you liked Alien, this sci-fi thriller fits.";
  const char* b = "A tense SCI-FI thriller, much like Alien!";
  for (std::size_t n : {1u, 2u}) {
    auto ab = rouge_n(a, b, n), ba = rouge_n(b, a, n);
    EXPECT_DOUBLE_EQ(ab.f1, ba.f1);
    EXPECT_DOUBLE_EQ(ab.precision, ba.recall);
  }
  EXPECT_DOUBLE_EQ(rouge_l(a, b).f1, rouge_l(b, a).f1);
  EXPECT_DOUBLE_EQ(rouge_n("ALIEN Fits", "alien fits", 1).f1, 1.0);
}

TEST(BertScore, IdenticalIsOne) {
  HashedEmbeddingProvider p(3, 64);
  auto s = bertscore("a quiet western about a lonely town", "A quiet western about a lonely town.", p);
  EXPECT_NEAR(s.precision, 1.0, 1e-12);
  EXPECT_NEAR(s.recall, 1.0, 1e-12);
  EXPECT_NEAR(s.f1, 1.0, 1e-12);
  EXPECT_LT(bertscore_f1("cats", "spaceships", p), 0.5);
}

TEST(BertScore, GreedyMatchingOnFixedVectors) {
  TableEmbeddingProvider p({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}});
  auto s = bertscore_tokens({"a", "b"}, {"a"}, p);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.f1, 2.0 / 3);
  auto t = bertscore_tokens({"c"}, {"a", "b"}, p);
  EXPECT_NEAR(t.precision, std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(t.recall, std::sqrt(0.5), 1e-12);
  EXPECT_THROW(bertscore_tokens({"zz"}, {"a"}, p), ProviderError);
  EXPECT_EQ(bertscore_tokens({}, {"a"}, p).f1, 0.0);
}

TEST(GptScore, UniformAndPerfectEvaluators) {
  UniformEvaluator u(1000);
  EXPECT_NEAR(gpt_score("a fine film for you", "ctx", u), -std::log(1000.0), 1e-12);
  EXPECT_EQ(gpt_score("a fine film", "ctx", Certain()), 0.0);
  EXPECT_THROW(gpt_score("  ", "ctx", u), InputError);
  EXPECT_THROW(gpt_score("a b", "ctx", Broken({-1.0})), ProviderError);
  EXPECT_THROW(gpt_score("a", "ctx", Broken({0.5})), ProviderError);
  EXPECT_THROW(gpt_score("a", "ctx", Broken({std::nan("")})), ProviderError);
}

TEST(Corpus, IdenticalPairsScoreOne) {
  HashedEmbeddingProvider emb;
  Certain ev;
  std::vector<EvalPair> pairs = {{"a b c", "a b c", {"ctx", "u1"}}, {"Hello, world!", "hello world", {"ctx", "u2"}}};
  auto r = evaluate_corpus(pairs, {all_metrics(), &emb, &ev});
  for (const auto& m : {"rouge1", "rouge2", "rougeL", "bertscore_f1"}) EXPECT_NEAR(*r.means.at(m), 1.0, 1e-12) << m;
  EXPECT_EQ(*r.means.at("gptscore"), 0.0);
  EXPECT_EQ(r.excluded, 0u);
}

TEST(Corpus, MeansOverPairsAndExclusions) {
  Picky ev;
  std::vector<EvalPair> pairs = {
      {"a b", "a b", {}}, {"a b", "c d", {}}, {"a boom", "a b", {}}, {"a", "a b", {}}, {"x y z", "x y z", {}}};
  auto r = evaluate_corpus(pairs, {{"rouge1", "gptscore"}, nullptr, &ev});
  // rouge1 f1 per pair: 1, 0, 0.5, 2/3, 1
  EXPECT_NEAR(*r.means.at("rouge1"), (1 + 0 + 0.5 + 2.0 / 3 + 1) / 5, 1e-12);
  EXPECT_EQ(r.counts.at("rouge1"), 5u);
  EXPECT_EQ(r.counts.at("gptscore"), 4u);
  EXPECT_EQ(*r.means.at("gptscore"), -1.0);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_FALSE(r.per_pair[2].values.at("gptscore"));
  EXPECT_EQ(r.per_pair[2].errors.at("gptscore"), "too long");
}

TEST(Corpus, MissingProvidersAreRejected) {
  std::vector<EvalPair> pairs = {{"a", "a", {}}};
  EXPECT_THROW(evaluate_corpus(pairs, {{"bertscore_f1"}, nullptr, nullptr}), InputError);
  EXPECT_THROW(evaluate_corpus(pairs, {{"gptscore"}, nullptr, nullptr}), InputError);
}

TEST(Report, MetricListParsing) {
  EXPECT_EQ(parse_metric_list("gptscore, bertscore,rouge1"), (std::vector<std::string>{"rouge1", "bertscore_f1", "gptscore"}));
  EXPECT_THROW(parse_metric_list("bleu"), InputError);
  EXPECT_THROW(parse_metric_list(" , "), InputError);
}

TEST(Report, JsonRoundTrip) {
  Picky ev;
  HashedEmbeddingProvider emb;
  std::vector<EvalPair> pairs = {{"a b", "a c", {}}, {"boom", "a", {}}};
  auto r = evaluate_corpus(pairs, {all_metrics(), &emb, &ev});
  auto j = to_json(r);
  EXPECT_EQ(j["per_pair"][1]["gptscore"], nullptr);
  EXPECT_EQ(to_json(report_from_json(j)), j);
  EXPECT_THROW(report_from_json(nlohmann::json{{"config", 1}}), ParseError);
  auto text = render_means(r);
  EXPECT_NE(text.find("excluded"), std::string::npos);
}

TEST(HttpEmbedding, RoundTripAndErrors) {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    auto tokens = nlohmann::json::parse(req.body)["tokens"].get<std::vector<std::string>>();
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : tokens) vectors.push_back({static_cast<double>(t.size()), 1.0});
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  server.Post("/short", [](const httplib::Request&, httplib::Response& res) { res.set_content(R"({"vectors": []})", "application/json"); });
  server.Post("/down", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  HttpEmbeddingProvider ok(base + "/embed", 2000);
  auto v = ok.embed({"ab", "abc"});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[1], (Vector{3.0, 1.0}));
  EXPECT_NEAR(bertscore_f1("same words", "same words", ok), 1.0, 1e-12);
  EXPECT_THROW(HttpEmbeddingProvider(base + "/short", 2000).embed({"a"}), ProviderError);
  EXPECT_THROW(HttpEmbeddingProvider(base + "/down", 2000).embed({"a"}), ProviderError);
  server.stop();
  th.join();
  EXPECT_THROW(ok.embed({"a"}), ProviderError);
}
