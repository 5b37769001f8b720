#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include <gtest/gtest.h>

#include "prism/distill/mock_teacher.hpp"
#include "prism/distill/pipeline.hpp"
#include "prism/pipeline/synthetic.hpp"
#include "prism/student/checkpoint.hpp"
#include "prism/student/evaluator.hpp"
#include "prism/student/explain.hpp"
#include "prism/student/trainer.hpp"
#include "support/temp_dir.hpp"

using namespace prism;
using namespace prism::student;

namespace {

struct Setup {
  std::shared_ptr<corpus::Catalog> catalog;
  std::vector<distill::DistilledSample> samples;
  distill::PromptTemplate tmpl{"History: {history}. Item: {item_to_explain}."};
  Vocabulary vocab;
  std::vector<std::string> users;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup s;
    pipeline::SyntheticConfig sc;
    sc.users = 4;
    sc.min_history = 4;
    sc.max_history = 6;
    auto corpus = pipeline::generate_corpus(sc);
    s.catalog = std::make_shared<corpus::Catalog>(corpus.catalog);
    std::vector<corpus::RecommendationInstance> inst;
    for (const auto& h : corpus.histories)
      for (auto& i : corpus::prefix_instances(h))
        if (i.history.size() >= 2) inst.push_back(std::move(i));
    distill::MockTeacher teacher(1, s.catalog, s.tmpl);
    s.samples = distill::run_distillation(inst, teacher, s.tmpl, *s.catalog).samples;
    s.vocab = build_vocabulary(vocabulary_texts(s.samples, s.tmpl), 1);
    s.users = distinct_users(s.samples);
    return s;
  }();
  return s;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden_dim = 16;
  c.num_encoder_layers = 1;
  c.num_decoder_layers = 1;
  c.num_heads = 2;
  c.feedforward_dim = 32;
  c.max_source_len = 64;
  c.max_target_len = 40;
  c.vocab_size = setup().vocab.size();
  return c;
}

template <typename T>
std::vector<T> flatten(const Model<T>& m) {
  std::vector<T> out;
  m.params().for_each([&](const std::string&, const Param<T>& p) { out.insert(out.end(), p.value.storage().begin(), p.value.storage().end()); });
  return out;
}

}  // namespace

TEST(Vocabulary, ReservedIdsAndRanking) {
  std::vector<std::string> texts = {"b a b", "c b a"};
  auto v = build_vocabulary(texts, 1);
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kBegin), "<s>");
  EXPECT_EQ(v.token(Vocabulary::kEnd), "</s>");
  EXPECT_EQ(v.token(Vocabulary::kUnknown), "<unk>");
  // b:3, a:2, c:1
  EXPECT_EQ(v.id("b"), 4);
  EXPECT_EQ(v.id("a"), 5);
  EXPECT_EQ(v.id("c"), 6);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnknown);
  EXPECT_EQ(build_vocabulary(texts, 2).size(), 6u);
}

TEST(Vocabulary, EncodeDecode) {
  Vocabulary v(std::vector<std::string>{"a", "sci", "-", "fi", "film", "."});
  auto ids = v.encode("A sci-fi film.");
  EXPECT_EQ(v.decode(ids), "a sci-fi film.");
  ids.push_back(Vocabulary::kEnd);
  ids.push_back(v.id("film"));
  EXPECT_EQ(v.decode(ids), "a sci-fi film.");
  EXPECT_EQ(Vocabulary::from_full_list(v.tokens()), v);
  EXPECT_THROW(Vocabulary::from_full_list({"a", "b"}), InputError);
  EXPECT_THROW(Vocabulary(std::vector<std::string>{"a", "a"}), InputError);
}

TEST(Config, ValidationAndJsonRoundTrip) {
  auto c = tiny_config();
  c.num_users = 3;
  ModelConfig back = nlohmann::json(c).get<ModelConfig>();
  EXPECT_EQ(back, c);
  TrainingConfig t;
  t.learning_rate = 0.0;
  t.train_user_embedding = false;
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(nlohmann::json(t).get<TrainingConfig>(), t);
  t.epochs = 0;
  EXPECT_THROW(t.validate(), InputError);
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), InputError);
  c = tiny_config();
  c.vocab_size = 4;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(Model, UnknownUserRowIsZero) {
  Model<float> m(tiny_config(), setup().users, 3);
  const auto& wu = m.params().user_embedding.value;
  ASSERT_EQ(wu.rows(), setup().users.size() + 1);
  for (std::size_t j = 0; j < wu.cols(); ++j) EXPECT_EQ(wu(0, j), 0.0f);
  EXPECT_EQ(m.user_row("no-such-user"), Model<float>::kUnknownUser);
  EXPECT_EQ(m.user_row(setup().users[0]), 1u);
  EXPECT_THROW(Model<float>(tiny_config(), {"a", "a"}, 1), InputError);
}

TEST(Model, EmbeddingIsWordPlusPositionPlusUser) {
  auto m = Model<float>(tiny_config(), setup().users, 5).cast<double>();
  std::vector<int> ids = {7, 4, 9, 4};
  for (std::size_t user : {std::size_t{0}, std::size_t{2}}) {
    Tape<double> tape(false);
    ForwardPass<double, const Model<double>> fp(tape, m);
    const auto& e = tape.value(fp.embed(ids, false, user));
    const auto& p = m.params();
    for (std::size_t j = 0; j < ids.size(); ++j)
      for (std::size_t d = 0; d < e.cols(); ++d) {
        double want = (p.word_embedding.value(ids[j], d) + p.encoder_positions.value(j, d)) + p.user_embedding.value(user, d);
        EXPECT_EQ(e(j, d), want);
      }
  }
}

TEST(Model, UnknownUserMatchesExplicitZeroRow) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 5);
  DecodeConfig dc;
  dc.max_len = 12;
  auto a = explain_titles(m, s.vocab, s.tmpl, "stranger", s.samples[0].history, s.samples[0].recommended_item, dc);
  EXPECT_FALSE(a.known_user);
  auto source = encode_source(s.vocab, s.tmpl, s.samples[0].history, s.samples[0].recommended_item, 64);
  auto g = generate(m, source, Model<float>::kUnknownUser, dc);
  EXPECT_EQ(a.generation.tokens, g.tokens);
}

TEST(Model, InputValidation) {
  Model<float> m(tiny_config(), setup().users, 5);
  std::vector<int> too_long(65, 4);
  EXPECT_THROW(m.validate_example(too_long, 0), InputError);
  EXPECT_THROW(m.validate_example(std::vector<int>{}, 0), InputError);
  EXPECT_THROW(m.validate_example(std::vector<int>{999999}, 0), InputError);
  EXPECT_THROW(m.validate_example(std::vector<int>{4}, 99), InputError);
}

TEST(Loss, UntrainedModelNearUniform) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 5);
  auto ex = make_examples(m, s.vocab, s.tmpl, s.samples);
  auto r = evaluate_loss(m, std::span<const Example>(ex));
  EXPECT_NEAR(r.loss, std::log(static_cast<double>(s.vocab.size())), 0.2);
  EXPECT_EQ(r.tokens, count_target_tokens(ex));
}

TEST(Training, ReducesLossAndIsDeterministic) {
  const auto& s = setup();
  TrainingConfig tc;
  tc.epochs = 4;
  tc.learning_rate = 1e-2;
  tc.batch_size = 4;
  tc.seed = 9;
  Model<float> a(tiny_config(), s.users, 5), b(tiny_config(), s.users, 5);
  auto ex = make_examples(a, s.vocab, s.tmpl, s.samples);
  std::vector<std::size_t> epochs_seen;
  auto ha = train(a, std::span<const Example>(ex), tc, {[&](std::size_t e, double, const Model<float>&) { epochs_seen.push_back(e); }});
  auto hb = train(b, std::span<const Example>(ex), tc);
  EXPECT_LT(ha.final_loss, ha.initial_loss * 0.8);
  EXPECT_EQ(ha.epoch_losses, hb.epoch_losses);
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_EQ(epochs_seen, (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(ha.steps, 4 * ((ex.size() + 3) / 4));
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
  const auto& s = setup();
  TrainingConfig tc;
  tc.epochs = 1;
  tc.learning_rate = 0.0;
  Model<float> m(tiny_config(), s.users, 5);
  auto before = flatten(m);
  auto ex = make_examples(m, s.vocab, s.tmpl, s.samples);
  auto h = train(m, std::span<const Example>(ex), tc);
  EXPECT_EQ(flatten(m), before);
  EXPECT_EQ(h.initial_loss, h.final_loss);
}

TEST(Training, AblationKeepsUserTableAtZero) {
  const auto& s = setup();
  TrainingConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 3e-3;
  tc.train_user_embedding = false;
  Model<float> m(tiny_config(), s.users, 5);
  auto ex = make_examples(m, s.vocab, s.tmpl, s.samples);
  train(m, std::span<const Example>(ex), tc);
  for (float x : m.params().user_embedding.value.storage()) ASSERT_EQ(x, 0.0f);
}

TEST(Training, FullModelLearnsUsersButNotRowZero) {
  const auto& s = setup();
  TrainingConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 3e-3;
  Model<float> m(tiny_config(), s.users, 5);
  auto before = m.params().user_embedding.value;
  auto ex = make_examples(m, s.vocab, s.tmpl, s.samples);
  train(m, std::span<const Example>(ex), tc);
  const auto& wu = m.params().user_embedding.value;
  for (std::size_t j = 0; j < wu.cols(); ++j) ASSERT_EQ(wu(0, j), 0.0f);
  EXPECT_NE(wu.storage(), before.storage());
}

TEST(Features, SourceDropsOldestTitlesFirst) {
  Vocabulary v(std::vector<std::string>{"h", "i", ":", ".", "alpha", "beta", "gamma", "delta", ","});
  distill::PromptTemplate t("h: {history}. i: {item_to_explain}.");
  std::vector<std::string> hist = {"alpha", "beta", "gamma"};
  auto full = encode_source(v, t, hist, "delta", 100);
  EXPECT_EQ(v.decode(full), "h: alpha, beta, gamma. i: delta.");
  auto cut = encode_source(v, t, hist, "delta", full.size() - 1);
  EXPECT_EQ(v.decode(cut), "h: beta, gamma. i: delta.");
  auto hard = encode_source(v, t, hist, "delta", 3);
  EXPECT_EQ(hard.size(), 3u);
  auto tgt = encode_target(v, "alpha beta gamma delta", 3);
  EXPECT_EQ(tgt, (std::vector<int>{v.id("alpha"), v.id("beta"), Vocabulary::kEnd}));
}

TEST(Decode, BeamWidthOneEqualsGreedy) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 11);
  for (std::size_t i = 0; i < 4; ++i) {
    auto src = encode_source(s.vocab, s.tmpl, s.samples[i].history, s.samples[i].recommended_item, 64);
    DecodeConfig g, b;
    g.max_len = b.max_len = 10;
    b.mode = DecodeConfig::Mode::beam;
    b.beam_width = 1;
    EXPECT_EQ(generate(m, src, 1, g).tokens, generate(m, src, 1, b).tokens);
  }
}

TEST(Decode, GreedyTiesPickLowestIdAndBeamFindsBetterPath) {
  // Step 0: token 3 (p .5) vs 4 (p .4); after 3 every continuation is flat,
  // after 4 the end token is certain.
  StepFunction step = [](std::span<const int> prefix) {
    std::vector<double> lp(5, std::log(1e-9));
    if (prefix.empty()) {
      lp[3] = std::log(0.5);
      lp[4] = std::log(0.4);
    } else if (prefix[0] == 3) {
      for (int k = 0; k < 5; ++k) lp[k] = std::log(0.2);
    } else {
      lp[2] = 0.0;
    }
    return lp;
  };
  auto g = greedy_search(step, 3, 2);
  EXPECT_EQ(g.tokens, (std::vector<int>{3, 0, 0}));
  auto b = beam_search(step, 2, 3, 2);
  EXPECT_EQ(b.tokens, (std::vector<int>{4, 2}));
  EXPECT_NEAR(b.total_log_prob, std::log(0.4), 1e-12);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 5);
  TrainingConfig tc;
  tc.seed = 77;
  testutil::TempDir dir;
  save_checkpoint(m, s.vocab, dir / "m.ckpt", &tc);
  auto back = load_checkpoint<float>(dir / "m.ckpt");
  EXPECT_EQ(back.model.config(), m.config());
  EXPECT_EQ(back.model.users(), m.users());
  EXPECT_EQ(back.vocabulary, s.vocab);
  ASSERT_TRUE(back.training);
  EXPECT_EQ(back.training->seed, 77u);
  EXPECT_EQ(flatten(back.model), flatten(m));
  EXPECT_EQ(serialize_checkpoint(back.model, back.vocabulary, &*back.training), serialize_checkpoint(m, s.vocab, &tc));
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 5);
  auto bytes = serialize_checkpoint(m, s.vocab);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(parse_checkpoint<float>(flipped, "x"), CheckpointError);
  EXPECT_THROW(parse_checkpoint<float>(bytes.substr(0, bytes.size() - 100), "x"), CheckpointError);
  EXPECT_THROW(parse_checkpoint<float>("not a checkpoint at all, clearly", "x"), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>("/nonexistent/m.ckpt"), CheckpointError);
}

TEST(Checkpoint, DimensionMismatchNamesTheField) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 5);
  auto expected = m.config();
  expected.hidden_dim = 32;
  try {
    parse_checkpoint<float>(serialize_checkpoint(m, s.vocab), "m.ckpt", &expected);
    FAIL();
  } catch (const CheckpointError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("hidden_dim expected 32 found 16"), std::string::npos) << what;
  }
}

TEST(Evaluator, MemorisedTargetsScoreAboveShuffled) {
  const auto& s = setup();
  Model<float> m(tiny_config(), s.users, 5);
  auto ex = make_examples(m, s.vocab, s.tmpl, s.samples);
  TrainingConfig tc;
  tc.epochs = 12;
  tc.learning_rate = 3e-3;
  train(m, std::span<const Example>(ex), tc);
  StudentEvaluator<float> ev(m, s.vocab, s.tmpl, s.catalog.get());
  double real = 0, shuffled = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& smp = s.samples[i];
    metrics::EvalContext ctx{s.tmpl.render(smp.history, smp.recommended_item), smp.user_id};
    auto toks = text::tokenize(smp.golden_explanation);
    auto shuf = toks;
    Rng(i).shuffle(shuf.begin(), shuf.end());
    for (double x : ev.token_log_probs(ctx, toks)) real += x;
    for (double x : ev.token_log_probs(ctx, shuf)) shuffled += x;
  }
  EXPECT_GT(real, shuffled);
}
