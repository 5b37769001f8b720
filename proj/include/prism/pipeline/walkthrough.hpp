#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/bench/bench.hpp"
#include "prism/corpus/sequences.hpp"
#include "prism/distill/mock_teacher.hpp"
#include "prism/distill/pipeline.hpp"
#include "prism/jsonl.hpp"
#include "prism/metrics/report.hpp"
#include "prism/pipeline/synthetic.hpp"
#include "prism/student/checkpoint.hpp"
#include "prism/student/evaluator.hpp"
#include "prism/student/explain.hpp"
#include "prism/student/trainer.hpp"

namespace prism::pipeline {

inline constexpr int kWalkthroughReportVersion = 1;

// Which prefix instances feed a stage. `shared_tail_from` keeps only
// instances whose recommended item sits at or after that position of the
// corpus's shared tail, i.e. inputs that look the same for every user.
struct Selection {
  std::size_t min_history = 1;
  std::optional<std::size_t> shared_tail_from;
  std::size_t max_count = 0;  // 0 = keep all
  std::uint64_t seed = 0;
};

struct BenchSettings {
  bool enabled = true;
  std::size_t runs = 5;
  std::size_t warmup = 1;
  std::size_t instances = 5;
  std::uint64_t baseline_seed = 101;
  // Stand-in for a large teacher: same architecture, scaled up, untrained.
  student::ModelConfig baseline_model = [] {
    student::ModelConfig c;
    c.hidden_dim = 256;
    c.num_encoder_layers = 4;
    c.num_decoder_layers = 4;
    c.num_heads = 8;
    c.feedforward_dim = 1024;
    return c;
  }();
};

struct PipelineConfig {
  SyntheticConfig corpus = [] {
    SyntheticConfig c;
    c.shared_tail = 12;
    return c;
  }();
  double holdout_fraction = 0.2;
  std::uint64_t split_seed = 11;
  Selection train_selection = {20, 8, 240, 5};
  Selection test_selection = {20, std::nullopt, 40, 6};
  std::uint64_t teacher_seed = 3;
  double hallucination_rate = 0.05;
  std::optional<std::filesystem::path> template_path;
  student::ModelConfig model;
  std::uint64_t model_seed = 42;
  student::TrainingConfig training = [] {
    student::TrainingConfig t;
    t.learning_rate = 2e-3;
    t.epochs = 15;
    t.seed = 17;
    return t;
  }();
  student::DecodeConfig decode;
  std::vector<std::string> metrics = metrics::all_metrics();
  std::uint64_t embedding_seed = 13;
  std::size_t embedding_dim = 128;
  BenchSettings bench;

  void validate() const {
    corpus.validate();
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw InputError("holdout_fraction must lie strictly between 0 and 1");
    if (!(hallucination_rate >= 0.0 && hallucination_rate <= 1.0)) throw InputError("hallucination_rate must lie in [0, 1]");
    training.validate();
    decode.validate();
    if (embedding_dim < 1) throw InputError("embedding_dim must be >= 1");
    if (template_path && !std::filesystem::is_regular_file(*template_path))
      throw InputError("template file not found: " + template_path->string());
    if (bench.enabled && (bench.runs < 1 || bench.instances < 1)) throw InputError("bench needs runs >= 1 and instances >= 1");
  }
};

inline void to_json(nlohmann::json& j, const Selection& s) {
  j = {{"min_history", s.min_history},
       {"shared_tail_from", s.shared_tail_from ? nlohmann::json(*s.shared_tail_from) : nlohmann::json(nullptr)},
       {"max_count", s.max_count},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, Selection& s) {
  s.min_history = j.value("min_history", s.min_history);
  if (j.contains("shared_tail_from")) {
    const auto& v = j["shared_tail_from"];
    s.shared_tail_from = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
  }
  s.max_count = j.value("max_count", s.max_count);
  s.seed = j.value("seed", s.seed);
}

inline void to_json(nlohmann::json& j, const BenchSettings& b) {
  j = {{"enabled", b.enabled},         {"runs", b.runs}, {"warmup", b.warmup}, {"instances", b.instances},
       {"baseline_seed", b.baseline_seed}, {"baseline_model", b.baseline_model}};
}

inline void from_json(const nlohmann::json& j, BenchSettings& b) {
  b.enabled = j.value("enabled", b.enabled);
  b.runs = j.value("runs", b.runs);
  b.warmup = j.value("warmup", b.warmup);
  b.instances = j.value("instances", b.instances);
  b.baseline_seed = j.value("baseline_seed", b.baseline_seed);
  if (j.contains("baseline_model")) from_json(j["baseline_model"], b.baseline_model);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"corpus", c.corpus},
       {"holdout_fraction", c.holdout_fraction},
       {"split_seed", c.split_seed},
       {"train_selection", c.train_selection},
       {"test_selection", c.test_selection},
       {"teacher_seed", c.teacher_seed},
       {"hallucination_rate", c.hallucination_rate},
       {"template_path", c.template_path ? nlohmann::json(c.template_path->string()) : nlohmann::json(nullptr)},
       {"model", c.model},
       {"model_seed", c.model_seed},
       {"training", c.training},
       {"decode", c.decode},
       {"metrics", c.metrics},
       {"embedding_seed", c.embedding_seed},
       {"embedding_dim", c.embedding_dim},
       {"bench", c.bench}};
}

// Partial configs are fine: absent keys keep their defaults.
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("corpus")) from_json(j["corpus"], c.corpus);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.split_seed = j.value("split_seed", c.split_seed);
  if (j.contains("train_selection")) from_json(j["train_selection"], c.train_selection);
  if (j.contains("test_selection")) from_json(j["test_selection"], c.test_selection);
  c.teacher_seed = j.value("teacher_seed", c.teacher_seed);
  c.hallucination_rate = j.value("hallucination_rate", c.hallucination_rate);
  if (j.contains("template_path")) {
    const auto& v = j["template_path"];
    c.template_path = v.is_null() ? std::nullopt : std::optional<std::filesystem::path>(v.get<std::string>());
  }
  if (j.contains("model")) from_json(j["model"], c.model);
  c.model_seed = j.value("model_seed", c.model_seed);
  if (j.contains("training")) from_json(j["training"], c.training);
  if (j.contains("decode")) from_json(j["decode"], c.decode);
  if (j.contains("metrics")) {
    std::string csv;
    for (const auto& m : j["metrics"]) csv += m.get<std::string>() + ",";
    c.metrics = metrics::parse_metric_list(csv);
  }
  c.embedding_seed = j.value("embedding_seed", c.embedding_seed);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  if (j.contains("bench")) from_json(j["bench"], c.bench);
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    from_json(j, c);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad pipeline config: ") + e.what());
  }
  return c;
}

// Filters, then draws up to max_count with a seeded shuffle; survivors keep
// their original order.
inline std::vector<corpus::RecommendationInstance> select_instances(std::span<const corpus::RecommendationInstance> pool,
                                                                    const Selection& sel,
                                                                    std::span<const std::string> shared_tail) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& inst = pool[i];
    if (inst.history.items.size() < sel.min_history) continue;
    if (sel.shared_tail_from) {
      auto it = std::find(shared_tail.begin(), shared_tail.end(), inst.recommended_item);
      if (it == shared_tail.end() || static_cast<std::size_t>(it - shared_tail.begin()) < *sel.shared_tail_from) continue;
    }
    keep.push_back(i);
  }
  if (sel.max_count > 0 && keep.size() > sel.max_count) {
    Rng rng(sel.seed);
    rng.shuffle(keep.begin(), keep.end());
    keep.resize(sel.max_count);
    std::sort(keep.begin(), keep.end());
  }
  std::vector<corpus::RecommendationInstance> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(pool[i]);
  return out;
}

struct SystemRun {
  std::string name;
  std::vector<std::string> explanations;
  metrics::MetricReport report;
};

struct WalkthroughResult {
  std::filesystem::path out_dir;
  student::TrainingHistory full_history, ablated_history;
  std::vector<SystemRun> systems;
  std::optional<bench::BenchReport> bench;
  std::size_t train_samples = 0, test_samples = 0;
};

inline const char* kSystemFull = "student-full";
inline const char* kSystemAblated = "student-no-user";
inline const char* kSystemZeroShot = "student-zero-shot";

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const InputError& e) {
    throw InputError(std::string("stage '") + name + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(std::string("stage '") + name + "': " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& s) {
  auto out = jsonl::open_out(path);
  out << s;
}

}  // namespace detail

// Synthetic corpus -> mock distillation -> student training (with and
// without the user table) -> generation -> metrics -> bench. Everything
// except distill latencies and the bench report is a pure function of the
// config. Artifacts written before a failure are left in place.
inline WalkthroughResult run_walkthrough(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                                         const std::function<void(const std::string&)>& log = {}) {
  cfg.validate();
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  std::filesystem::create_directories(out_dir);
  WalkthroughResult result;
  result.out_dir = out_dir;
  {
    nlohmann::json j = cfg;
    jsonl::write_json(out_dir / "config.json", j);
  }

  const distill::PromptTemplate tmpl = cfg.template_path ? distill::PromptTemplate::from_file(*cfg.template_path) : distill::PromptTemplate();

  auto corp = detail::stage("corpus", [&] { return generate_corpus(cfg.corpus); });
  auto catalog = std::make_shared<corpus::Catalog>(corp.catalog);
  corpus::write_catalog(out_dir / "catalog.jsonl", *catalog);
  auto split = detail::stage("split", [&] { return corpus::split_sequences(corp.histories, cfg.holdout_fraction, cfg.split_seed); });
  auto train_inst = select_instances(split.train, cfg.train_selection, corp.shared_tail);
  auto test_inst = select_instances(split.test, cfg.test_selection, corp.shared_tail);
  if (train_inst.empty()) throw InputError("stage 'split': train selection is empty");
  if (test_inst.empty()) throw InputError("stage 'split': test selection is empty");
  corpus::write_instances(out_dir / "train_instances.jsonl", train_inst);
  corpus::write_instances(out_dir / "test_instances.jsonl", test_inst);
  note("corpus: " + std::to_string(corp.histories.size()) + " users, " + std::to_string(train_inst.size()) + " train / " +
       std::to_string(test_inst.size()) + " test instances");

  distill::MockTeacher teacher(cfg.teacher_seed, catalog, tmpl, cfg.hallucination_rate);
  auto dtrain = detail::stage("distill", [&] { return distill::run_distillation(train_inst, teacher, tmpl, *catalog); });
  auto dtest = detail::stage("distill", [&] { return distill::run_distillation(test_inst, teacher, tmpl, *catalog); });
  distill::write_dataset(out_dir / "distilled_train.jsonl", dtrain.samples);
  distill::write_dataset(out_dir / "distilled_test.jsonl", dtest.samples);
  jsonl::write_json(out_dir / "distill_report.json", nlohmann::json{{"train", to_json(dtrain.report)}, {"test", to_json(dtest.report)}});
  if (dtrain.samples.empty() || dtest.samples.empty()) throw Error("stage 'distill': no samples survived");
  result.train_samples = dtrain.samples.size();
  result.test_samples = dtest.samples.size();
  note("distill: " + std::to_string(dtrain.samples.size()) + " train / " + std::to_string(dtest.samples.size()) + " test samples");

  auto vocab = student::build_vocabulary(student::vocabulary_texts(dtrain.samples, tmpl), 1);
  auto users = student::distinct_users(dtrain.samples);
  student::ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  mcfg.num_users = users.size();

  // Zero-shot is the initialised, never-trained student; full and ablated
  // start from the same weights and see the same batches.
  student::Model<float> zero_shot(mcfg, users, cfg.model_seed);
  student::Model<float> full = zero_shot;
  student::Model<float> ablated = zero_shot;
  auto examples = student::make_examples(full, vocab, tmpl, dtrain.samples);

  auto train_one = [&](student::Model<float>& m, bool with_users, const char* label) {
    auto tc = cfg.training;
    tc.train_user_embedding = with_users;
    return detail::stage("train", [&] {
      return student::train(m, std::span<const student::Example>(examples), tc,
                            {[&](std::size_t epoch, double loss, const student::Model<float>&) {
                              char buf[96];
                              std::snprintf(buf, sizeof buf, "train %s: epoch %zu loss %.4f", label, epoch, loss);
                              note(buf);
                            }});
    });
  };
  result.full_history = train_one(full, true, kSystemFull);
  {
    auto tc = cfg.training;
    student::save_checkpoint(full, vocab, out_dir / "student_full.ckpt", &tc);
  }
  result.ablated_history = train_one(ablated, false, kSystemAblated);
  {
    auto tc = cfg.training;
    tc.train_user_embedding = false;
    student::save_checkpoint(ablated, vocab, out_dir / "student_no_user.ckpt", &tc);
  }
  jsonl::write_json(out_dir / "training.json", nlohmann::json{{kSystemFull, student::to_json_value(result.full_history)},
                                                {kSystemAblated, student::to_json_value(result.ablated_history)}});

  // Generation and scoring.
  metrics::HashedEmbeddingProvider embedder(cfg.embedding_seed, cfg.embedding_dim);
  student::StudentEvaluator<float> evaluator(full, vocab, tmpl, catalog.get());
  metrics::EvaluationSetup setup{cfg.metrics, &embedder, &evaluator};
  std::filesystem::create_directories(out_dir / "predictions");
  const std::vector<std::pair<const char*, const student::Model<float>*>> systems = {
      {kSystemFull, &full}, {kSystemAblated, &ablated}, {kSystemZeroShot, &zero_shot}};
  for (const auto& [name, model] : systems) {
    SystemRun run;
    run.name = name;
    std::vector<metrics::EvalPair> pairs;
    detail::stage("generate", [&] {
      auto out = jsonl::open_out(out_dir / "predictions" / (run.name + ".jsonl"));
      for (const auto& s : dtest.samples) {
        auto e = student::explain_titles(*model, vocab, tmpl, s.user_id, s.history, s.recommended_item, cfg.decode);
        run.explanations.push_back(e.text);
        jsonl::write(out, nlohmann::json{{"user_id", s.user_id}, {"history", s.history}, {"recommended_item", s.recommended_item}, {"explanation", e.text}});
        pairs.push_back({e.text, s.golden_explanation, metrics::EvalContext{tmpl.render(s.history, s.recommended_item), s.user_id}});
      }
      return 0;
    });
    run.report = detail::stage("evaluate", [&] { return metrics::evaluate_corpus(pairs, setup); });
    note(std::string("evaluate ") + name + ":\n" + metrics::render_means(run.report));
    result.systems.push_back(std::move(run));
  }
  {
    nlohmann::json systems_json = nlohmann::json::object();
    for (const auto& s : result.systems) systems_json[s.name] = metrics::to_json(s.report);
    nlohmann::json report = {{"report_version", kWalkthroughReportVersion},
                             {"config", cfg},
                             {"train_samples", result.train_samples},
                             {"test_samples", result.test_samples},
                             {"final_training_loss",
                              {{kSystemFull, result.full_history.final_loss}, {kSystemAblated, result.ablated_history.final_loss}}},
                             {"systems", systems_json}};
    jsonl::write_json(out_dir / "metrics_report.json", report);
  }

  if (cfg.bench.enabled) {
    result.bench = detail::stage("bench", [&] {
      auto bcfg = cfg.bench.baseline_model;
      bcfg.vocab_size = mcfg.vocab_size;
      bcfg.num_users = mcfg.num_users;
      bcfg.max_source_len = mcfg.max_source_len;
      bcfg.max_target_len = mcfg.max_target_len;
      student::Model<float> baseline(bcfg, users, cfg.bench.baseline_seed);
      const std::size_t n = std::min(cfg.bench.instances, dtest.samples.size());
      auto subject = [&](const student::Model<float>& m) {
        return [&](std::size_t i) {
          const auto& s = dtest.samples[i];
          return student::explain_titles(m, vocab, tmpl, s.user_id, s.history, s.recommended_item, cfg.decode).text;
        };
      };
      bench::BenchReport r;
      r.memory_tracked = bench::tracking_enabled();
      r.entries.push_back(bench::bench_generation("baseline-large", baseline.parameter_count(), subject(baseline), n, cfg.bench.runs, cfg.bench.warmup));
      r.entries.push_back(bench::bench_generation(kSystemFull, full.parameter_count(), subject(full), n, cfg.bench.runs, cfg.bench.warmup));
      return r;
    });
    jsonl::write_json(out_dir / "bench_report.json", bench::to_json(*result.bench));
    detail::write_text(out_dir / "bench.txt", bench::render_table(*result.bench));
    note("bench:\n" + bench::render_table(*result.bench));
  }

  std::string summary;
  char buf[160];
  std::snprintf(buf, sizeof buf, "final training loss: %s %.4f, %s %.4f\n", kSystemFull, result.full_history.final_loss, kSystemAblated,
                result.ablated_history.final_loss);
  summary += buf;
  for (const auto& s : result.systems) summary += "\n[" + s.name + "]\n" + metrics::render_means(s.report);
  if (result.bench) summary += "\n" + bench::render_table(*result.bench);
  detail::write_text(out_dir / "summary.txt", summary);
  return result;
}

}  // namespace prism::pipeline
