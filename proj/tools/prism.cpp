// prism: command-line front end for the explanation pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prism/bench/alloc_hooks.hpp"
#include "prism/bench/bench.hpp"
#include "prism/corpus/movielens.hpp"
#include "prism/corpus/sequences.hpp"
#include "prism/distill/http_teacher.hpp"
#include "prism/distill/mock_teacher.hpp"
#include "prism/distill/pipeline.hpp"
#include "prism/humaneval/server.hpp"
#include "prism/humaneval/summary.hpp"
#include "prism/metrics/report.hpp"
#include "prism/pipeline/synthetic.hpp"
#include "prism/pipeline/walkthrough.hpp"
#include "prism/student/checkpoint.hpp"
#include "prism/student/evaluator.hpp"
#include "prism/student/explain.hpp"
#include "prism/student/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prism;

namespace {

// Bad flag values detected after parsing; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

distill::PromptTemplate load_template(const std::string& path) {
  return path.empty() ? distill::PromptTemplate() : distill::PromptTemplate::from_file(path);
}

// One explanation request: user plus history and item as titles.
struct ExplainInput {
  std::string user_id;
  std::vector<std::string> history;
  std::string item;
};

// Accepts an instance with item ids (resolved through the catalog) or a
// distilled sample whose history and item are already titles.
ExplainInput explain_input_from_json(const json& j, const corpus::Catalog* catalog, const std::string& source, std::size_t line) {
  if (catalog && !j.contains("golden_explanation")) {
    auto inst = corpus::instance_from_json(j, source, line);
    corpus::validate_instance(inst, *catalog);
    return {inst.user_id, distill::history_titles(inst.history, *catalog), catalog->at(inst.recommended_item).title};
  }
  // Only the context is needed to explain, so the golden text is optional.
  auto s = distill::sample_from_json(json{{"user_id", j.value("user_id", "")},
                                          {"history", j.value("history", json::array())},
                                          {"recommended_item", j.value("recommended_item", "")},
                                          {"golden_explanation", j.value("golden_explanation", "-")}},
                                     source, line);
  return {s.user_id, s.history, s.recommended_item};
}

std::vector<ExplainInput> read_explain_inputs(const fs::path& path, const corpus::Catalog* catalog) {
  std::vector<ExplainInput> out;
  auto in = jsonl::open_in(path);
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
    out.push_back(explain_input_from_json(jsonl::parse_line(path.string(), n, line), catalog, path.string(), n));
  });
  return out;
}

// Texts from a JSONL file: a bare JSON string per line, or an object with
// the first present key among `keys`.
std::vector<std::string> read_texts(const fs::path& path, std::initializer_list<const char*> keys) {
  std::vector<std::string> out;
  auto in = jsonl::open_in(path);
  jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto j = jsonl::parse_line(path.string(), n, line);
    if (j.is_string()) {
      out.push_back(j.get<std::string>());
      return;
    }
    for (const char* k : keys)
      if (j.contains(k)) {
        out.push_back(jsonl::require_string(j, k, path.string(), n));
        return;
      }
    std::string names;
    for (const char* k : keys) names += std::string(names.empty() ? "" : ", ") + k;
    throw ParseError(path.string(), n, "expected a string or an object with one of: " + names);
  });
  return out;
}

student::DecodeConfig decode_from_flags(std::size_t beam, std::size_t max_len) {
  student::DecodeConfig d;
  if (beam > 0) {
    d.mode = student::DecodeConfig::Mode::beam;
    d.beam_width = beam;
  }
  d.max_len = max_len;
  return d;
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string interactions, catalog, movielens, synthetic, out;
  bool synthetic_default = false;
  double holdout = 0.1;
  std::uint64_t seed = 0;
  std::size_t max_history = corpus::kMaxHistoryLength;
};

int run_prepare(const PrepareArgs& a) {
  const int sources = !a.interactions.empty() + !a.movielens.empty() + (!a.synthetic.empty() || a.synthetic_default);
  if (sources != 1) throw UsageError("prepare needs exactly one of --interactions (with --catalog), --movielens, --synthetic");
  if (!a.interactions.empty() && a.catalog.empty()) throw UsageError("--interactions requires --catalog");
  fs::create_directories(a.out);
  corpus::Catalog catalog;
  std::vector<corpus::InteractionHistory> histories;
  std::size_t skipped = 0;
  if (!a.interactions.empty()) {
    catalog = corpus::read_catalog(fs::path(a.catalog));
    auto r = corpus::ingest_interactions(fs::path(a.interactions), catalog, a.max_history);
    histories = std::move(r.histories);
    skipped = r.skipped_unresolved;
  } else if (!a.movielens.empty()) {
    auto data = corpus::load_movielens_1m(a.movielens);
    catalog = std::move(data.catalog);
    auto r = corpus::build_histories(data.interactions, catalog, a.max_history);
    histories = std::move(r.histories);
    skipped = r.skipped_unresolved;
  } else {
    pipeline::SyntheticConfig sc;
    if (!a.synthetic.empty()) from_json(jsonl::read_json(a.synthetic), sc);
    auto corp = pipeline::generate_corpus(sc);
    catalog = std::move(corp.catalog);
    for (auto& h : corp.histories) histories.push_back(corpus::truncate_history(std::move(h), a.max_history));
    auto out = jsonl::open_out(fs::path(a.out) / "interactions.jsonl");
    for (const auto& h : histories)
      for (std::size_t i = 0; i < h.items.size(); ++i)
        jsonl::write(out, json{{"user_id", h.user_id}, {"item_id", h.items[i]}, {"timestamp", h.timestamps[i]}});
  }
  if (a.interactions.empty()) corpus::write_catalog(fs::path(a.out) / "catalog.jsonl", catalog);
  auto split = corpus::split_sequences(histories, a.holdout, a.seed);
  corpus::write_instances(fs::path(a.out) / "train_instances.jsonl", split.train);
  corpus::write_instances(fs::path(a.out) / "test_instances.jsonl", split.test);
  auto stats = corpus::to_json(corpus::compute_stats(split.train, split.test, catalog, histories));
  stats["skipped_unresolved"] = skipped;
  stats["repeated_recommendations"] = split.repeated_recommendations;
  jsonl::write_json(fs::path(a.out) / "stats.json", stats);
  std::cout << stats.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- distill

struct DistillArgs {
  std::string instances, catalog, templ, teacher = "mock", out, report, url, token_env;
  std::uint64_t seed = 0;
  double hallucination = 0.0;
  int timeout_ms = 30000, retries = 3;
  std::size_t parallelism = 4, max_tokens = 128;
};

int run_distill(const DistillArgs& a) {
  auto catalog = std::make_shared<corpus::Catalog>(corpus::read_catalog(fs::path(a.catalog)));
  auto instances = corpus::read_instances(a.instances);
  auto tmpl = load_template(a.templ);
  std::unique_ptr<distill::Teacher> teacher;
  if (a.teacher == "mock") {
    teacher = std::make_unique<distill::MockTeacher>(a.seed, catalog, tmpl, a.hallucination);
  } else {
    if (a.url.empty()) throw UsageError("--teacher http requires --url");
    distill::HttpTeacherConfig hc;
    hc.url = a.url;
    hc.auth_token_env = a.token_env;
    hc.timeout_ms = a.timeout_ms;
    hc.max_tokens = static_cast<int>(a.max_tokens);
    teacher = std::make_unique<distill::HttpTeacher>(hc);
  }
  distill::DistillOptions opt;
  opt.parallelism = a.parallelism;
  opt.max_output_tokens = a.max_tokens;
  opt.retry.max_retries = a.retries;
  auto result = distill::run_distillation(instances, *teacher, tmpl, *catalog, opt);
  distill::write_dataset(a.out, result.samples);
  auto report = distill::to_json(result.report);
  if (!a.report.empty()) jsonl::write_json(a.report, report);
  std::cout << report.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, config, templ, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  bool no_user = false;
};

int run_train(const TrainArgs& a) {
  student::ModelConfig mcfg;
  student::TrainingConfig tcfg;
  std::uint64_t model_seed = 0;
  if (!a.config.empty()) {
    auto j = jsonl::read_json(a.config);
    try {
      if (j.contains("model")) from_json(j["model"], mcfg);
      if (j.contains("training")) from_json(j["training"], tcfg);
      model_seed = j.value("model_seed", tcfg.seed);
    } catch (const json::exception& e) {
      throw InputError(std::string("bad train config: ") + e.what());
    }
  }
  if (a.seed) {
    tcfg.seed = *a.seed;
    model_seed = *a.seed;
  }
  if (a.epochs) tcfg.epochs = *a.epochs;
  if (a.lr) tcfg.learning_rate = *a.lr;
  if (a.no_user) tcfg.train_user_embedding = false;
  tcfg.validate();

  auto samples = distill::read_dataset(a.data);
  if (samples.empty()) throw InputError("training data '" + a.data + "' has no samples");
  auto tmpl = load_template(a.templ);
  auto vocab = student::build_vocabulary(student::vocabulary_texts(samples, tmpl), 1);
  mcfg.vocab_size = vocab.size();
  student::Model<float> model(mcfg, student::distinct_users(samples), model_seed);
  auto examples = student::make_examples(model, vocab, tmpl, samples);
  std::cerr << "training " << model.parameter_count() << " parameters on " << examples.size() << " samples\n";
  auto history = student::train(model, std::span<const student::Example>(examples), tcfg,
                                {[](std::size_t epoch, double loss, const student::Model<float>&) {
                                  std::fprintf(stderr, "epoch %zu loss %.4f\n", epoch, loss);
                                }});
  fs::create_directories(a.out);
  student::save_checkpoint(model, vocab, fs::path(a.out) / "student.ckpt", &tcfg);
  jsonl::write_json(fs::path(a.out) / "training.json",
                    json{{"history", student::to_json_value(history)}, {"model_seed", model_seed}, {"training", tcfg}, {"model", model.config()}});
  std::printf("final loss %.6f\n", history.final_loss);
  return 0;
}

// ---------------------------------------------------------------- explain

struct ExplainArgs {
  std::string checkpoint, instance, user, catalog, templ;
  std::size_t beam = 0, max_len = 0;
  bool as_json = false;
};

int run_explain(const ExplainArgs& a) {
  auto ck = student::load_checkpoint<float>(a.checkpoint);
  std::optional<corpus::Catalog> catalog;
  if (!a.catalog.empty()) catalog = corpus::read_catalog(fs::path(a.catalog));
  std::string raw = a.instance;
  if (!raw.empty() && raw.front() == '@') {
    auto in = jsonl::open_in(raw.substr(1));
    raw.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::exception& e) {
    throw UsageError(std::string("--instance is not valid JSON: ") + e.what());
  }
  auto input = explain_input_from_json(j, catalog ? &*catalog : nullptr, "--instance", 1);
  if (!a.user.empty()) input.user_id = a.user;
  auto e = student::explain_titles(ck.model, ck.vocabulary, load_template(a.templ), input.user_id, input.history, input.item,
                                   decode_from_flags(a.beam, a.max_len));
  if (a.as_json)
    std::cout << json{{"user_id", input.user_id}, {"known_user", e.known_user}, {"explanation", e.text},
                      {"total_log_prob", e.generation.total_log_prob}}
                     .dump()
              << "\n";
  else
    std::cout << e.text << "\n";
  if (!e.known_user) std::cerr << "note: user '" << input.user_id << "' not in checkpoint; used the unknown-user vector\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pred, ref, context, metrics = "rouge1,rouge2,rougeL,bertscore,gptscore", out, checkpoint, catalog, templ, embedding_url;
  std::uint64_t embedding_seed = 13;
  std::size_t embedding_dim = 128;
};

int run_evaluate(const EvaluateArgs& a) {
  std::vector<std::string> wanted;
  try {
    wanted = metrics::parse_metric_list(a.metrics);
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  const bool need_gpt = std::find(wanted.begin(), wanted.end(), "gptscore") != wanted.end();
  if (need_gpt && a.checkpoint.empty()) throw UsageError("gptscore needs --checkpoint (the student used as evaluator)");

  auto preds = read_texts(a.pred, {"explanation", "prediction", "text", "golden_explanation"});
  auto refs = read_texts(a.ref, {"golden_explanation", "reference", "explanation", "text"});
  if (preds.empty()) throw InputError("prediction file '" + a.pred + "' is empty");
  if (preds.size() != refs.size())
    throw InputError("prediction file has " + std::to_string(preds.size()) + " lines but reference file has " + std::to_string(refs.size()));

  auto tmpl = load_template(a.templ);
  std::optional<corpus::Catalog> catalog;
  if (!a.catalog.empty()) catalog = corpus::read_catalog(fs::path(a.catalog));
  // Contexts: explicit file, else the reference file when it carries
  // history/item fields; lines may give a "prompt" directly.
  std::vector<metrics::EvalContext> contexts(preds.size());
  const std::string ctx_path = !a.context.empty() ? a.context : a.ref;
  {
    auto in = jsonl::open_in(ctx_path);
    std::size_t i = 0;
    jsonl::for_each_line(in, [&](std::size_t n, const std::string& line) {
      auto j = jsonl::parse_line(ctx_path, n, line);
      if (i >= contexts.size()) throw InputError("context file has more lines than predictions");
      if (!j.is_object()) {
        if (!a.context.empty()) throw ParseError(ctx_path, n, "context lines must be JSON objects");
        ++i;
        return;
      }
      auto& c = contexts[i++];
      c.user_id = j.value("user_id", "");
      if (j.contains("prompt")) c.text = jsonl::require_string(j, "prompt", ctx_path, n);
      else if (j.contains("history") && j.contains("recommended_item")) {
        auto input = explain_input_from_json(j, catalog ? &*catalog : nullptr, ctx_path, n);
        c.text = tmpl.render(input.history, input.item);
      }
    });
    if (!a.context.empty() && i != contexts.size())
      throw InputError("context file has " + std::to_string(i) + " lines, expected " + std::to_string(contexts.size()));
  }

  std::unique_ptr<metrics::EmbeddingProvider> embedder;
  if (!a.embedding_url.empty()) embedder = std::make_unique<metrics::HttpEmbeddingProvider>(a.embedding_url);
  else embedder = std::make_unique<metrics::HashedEmbeddingProvider>(a.embedding_seed, a.embedding_dim);
  std::optional<student::LoadedCheckpoint<float>> ck;
  std::unique_ptr<student::StudentEvaluator<float>> evaluator;
  if (need_gpt) {
    ck = student::load_checkpoint<float>(a.checkpoint);
    evaluator = std::make_unique<student::StudentEvaluator<float>>(ck->model, ck->vocabulary, tmpl, catalog ? &*catalog : nullptr);
  }
  std::vector<metrics::EvalPair> pairs;
  for (std::size_t i = 0; i < preds.size(); ++i) pairs.push_back({preds[i], refs[i], contexts[i]});
  auto report = metrics::evaluate_corpus(pairs, {wanted, embedder.get(), evaluator.get()});
  jsonl::write_json(a.out, metrics::to_json(report));
  std::cout << metrics::render_means(report);
  return 0;
}

// ---------------------------------------------------------------- annotate

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

struct AnnotateArgs {
  std::string session, out, host = "127.0.0.1", static_dir;
  int port = 8080;
};

humaneval::SessionConfig read_session_config(const std::string& path) {
  return humaneval::session_config_from_json(jsonl::read_json(path), fs::path(path).parent_path());
}

int run_annotate_serve(const AnnotateArgs& a) {
  humaneval::AnnotationService service(fs::path(a.session).parent_path());
  auto id = service.add_session(read_session_config(a.session));
  httplib::Server srv;
  std::optional<fs::path> static_dir;
  if (!a.static_dir.empty()) static_dir = fs::path(a.static_dir);
  service.mount(srv, static_dir);
  g_server = &srv;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cout << "session " << id << " on http://" << a.host << ":" << a.port << "\n" << std::flush;
  if (!srv.listen(a.host, a.port)) throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

int run_annotate_report(const AnnotateArgs& a) {
  humaneval::Session session(read_session_config(a.session));
  session.replay_log();
  auto summary = humaneval::summarize(session);
  summary["assignments"] = session.assignment_record();
  jsonl::write_json(a.out, summary);
  std::cout << humaneval::render_summary(summary);
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string checkpoint, baseline, instances, catalog, templ, out;
  std::size_t runs = 100, warmup = 10, beam = 0, max_len = 0;
};

int run_bench(const BenchArgs& a) {
  std::optional<corpus::Catalog> catalog;
  if (!a.catalog.empty()) catalog = corpus::read_catalog(fs::path(a.catalog));
  auto inputs = read_explain_inputs(a.instances, catalog ? &*catalog : nullptr);
  if (inputs.empty()) throw InputError("instances file '" + a.instances + "' is empty");
  auto tmpl = load_template(a.templ);
  auto decode = decode_from_flags(a.beam, a.max_len);
  bench::BenchReport report;
  report.memory_tracked = bench::tracking_enabled();
  auto add = [&](const std::string& path) {
    auto ck = student::load_checkpoint<float>(path);
    auto subject = [&](std::size_t i) {
      const auto& in = inputs[i];
      return student::explain_titles(ck.model, ck.vocabulary, tmpl, in.user_id, in.history, in.item, decode).text;
    };
    report.entries.push_back(
        bench::bench_generation(fs::path(path).stem().string(), ck.model.parameter_count(), subject, inputs.size(), a.runs, a.warmup));
  };
  if (!a.baseline.empty()) add(a.baseline);
  add(a.checkpoint);
  jsonl::write_json(a.out, bench::to_json(report));
  std::cout << "timed region: " << bench::kTimedRegion << "\n" << bench::render_table(report);
  return 0;
}

// ---------------------------------------------------------------- walkthrough

struct WalkthroughArgs {
  std::string config, out;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool no_bench = false;
};

int run_walkthrough_cmd(const WalkthroughArgs& a) {
  pipeline::PipelineConfig cfg;
  if (!a.config.empty()) cfg = pipeline::pipeline_config_from_json(jsonl::read_json(a.config));
  if (a.epochs) cfg.training.epochs = *a.epochs;
  if (a.seed) {
    // One master seed fans out to every stage.
    cfg.corpus.seed = mix_seed(*a.seed, "corpus");
    cfg.split_seed = mix_seed(*a.seed, "split");
    cfg.train_selection.seed = mix_seed(*a.seed, "train-selection");
    cfg.test_selection.seed = mix_seed(*a.seed, "test-selection");
    cfg.teacher_seed = mix_seed(*a.seed, "teacher");
    cfg.model_seed = mix_seed(*a.seed, "model");
    cfg.training.seed = mix_seed(*a.seed, "training");
    cfg.embedding_seed = mix_seed(*a.seed, "embedding");
  }
  if (a.no_bench) cfg.bench.enabled = false;
  try {
    cfg.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  auto r = pipeline::run_walkthrough(cfg, a.out, [](const std::string& s) { std::cerr << s << "\n"; });
  std::cout << "artifacts in " << r.out_dir.string() << "\n";
  std::ifstream summary(r.out_dir / "summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

std::string version_text() {
  char buf[256];
  std::snprintf(buf, sizeof buf, "prism %s\ncheckpoint format %u\nmetric report format %d\nbench report format %d\nwalkthrough report format %d\n",
                PRISM_VERSION, student::kCheckpointVersion, metrics::kReportVersion, bench::kBenchReportVersion,
                pipeline::kWalkthroughReportVersion);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized recommendation explanations: distill, train, explain, evaluate, annotate, bench."};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_text());

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare", "Build per-user histories and split them into train/test instances");
  c_prep->add_option("--interactions", prep.interactions, "Interaction log (JSONL {user_id,item_id,timestamp} or TSV)");
  c_prep->add_option("--catalog", prep.catalog, "Catalog JSONL {item_id,title,attributes}");
  c_prep->add_option("--movielens", prep.movielens, "MovieLens-1M directory (movies.dat, ratings.dat)");
  c_prep->add_option("--synthetic", prep.synthetic, "Synthetic corpus config JSON");
  c_prep->add_flag("--synthetic-default", prep.synthetic_default, "Synthetic corpus with default settings");
  c_prep->add_option("--holdout", prep.holdout,
                     "Test fraction. Every prefix of every history is one instance; a seeded shuffle sends "
                     "round(fraction * total) of them to test")
      ->capture_default_str();
  c_prep->add_option("--seed", prep.seed, "Split seed")->capture_default_str();
  c_prep->add_option("--max-history", prep.max_history, "Keep this many most recent interactions")->capture_default_str();
  c_prep->add_option("--out", prep.out, "Output directory")->required();

  DistillArgs dist;
  auto* c_dist = app.add_subcommand("distill", "Query a teacher for golden explanations");
  c_dist->add_option("--instances", dist.instances, "Instances JSONL")->required()->check(CLI::ExistingFile);
  c_dist->add_option("--catalog", dist.catalog, "Catalog JSONL")->required()->check(CLI::ExistingFile);
  c_dist->add_option("--template", dist.templ, "Prompt template file with {history} and {item_to_explain}")->check(CLI::ExistingFile);
  c_dist->add_option("--teacher", dist.teacher, "Teacher backend")->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
  c_dist->add_option("--seed", dist.seed, "Mock teacher seed")->capture_default_str();
  c_dist->add_option("--hallucination-rate", dist.hallucination, "Mock teacher: share of outputs naming an off-prompt title")
      ->capture_default_str();
  c_dist->add_option("--url", dist.url, "HTTP teacher endpoint");
  c_dist->add_option("--token-env", dist.token_env, "Environment variable with the HTTP teacher bearer token");
  c_dist->add_option("--timeout-ms", dist.timeout_ms, "HTTP teacher timeout")->capture_default_str();
  c_dist->add_option("--retries", dist.retries, "Retries per prompt")->capture_default_str();
  c_dist->add_option("--parallelism", dist.parallelism, "Teacher requests in flight")->capture_default_str();
  c_dist->add_option("--max-tokens", dist.max_tokens, "Longer outputs count as errors")->capture_default_str();
  c_dist->add_option("--report", dist.report, "Run report JSON");
  c_dist->add_option("--out", dist.out, "Distilled dataset JSONL")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the student on a distilled dataset");
  c_train->add_option("--data", tr.data, "Distilled dataset JSONL")->required()->check(CLI::ExistingFile);
  c_train->add_option("--config", tr.config, "JSON {model, training, model_seed}")->check(CLI::ExistingFile);
  c_train->add_option("--template", tr.templ, "Prompt template file")->check(CLI::ExistingFile);
  c_train->add_option("--seed", tr.seed, "Seed for initialisation and batch order (overrides config)");
  c_train->add_option("--epochs", tr.epochs, "Overrides config");
  c_train->add_option("--lr", tr.lr, "Overrides config");
  c_train->add_flag("--no-user-embedding", tr.no_user, "Freeze the user table at zero");
  c_train->add_option("--out", tr.out, "Output directory")->required();

  ExplainArgs ex;
  auto* c_ex = app.add_subcommand("explain", "Generate one explanation from a checkpoint");
  c_ex->add_option("--checkpoint", ex.checkpoint, "Student checkpoint")->required()->check(CLI::ExistingFile);
  c_ex->add_option("--instance", ex.instance,
                   "Instance JSON (or @file): {user_id, history, recommended_item}; item ids with --catalog, titles otherwise")
      ->required();
  c_ex->add_option("--user", ex.user, "User id (overrides the instance's); unknown ids use the zero vector");
  c_ex->add_option("--catalog", ex.catalog, "Catalog for resolving item ids")->check(CLI::ExistingFile);
  c_ex->add_option("--template", ex.templ, "Prompt template file")->check(CLI::ExistingFile);
  c_ex->add_option("--beam", ex.beam, "Beam width; 0 = greedy")->capture_default_str();
  c_ex->add_option("--max-len", ex.max_len, "Token cap; 0 = model maximum")->capture_default_str();
  c_ex->add_flag("--json", ex.as_json, "Print a JSON object");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score predictions against references");
  c_ev->add_option("--pred", ev.pred, "Predictions JSONL (strings or {explanation})")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--ref", ev.ref, "References JSONL (strings, {golden_explanation} or {reference})")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--context", ev.context, "Contexts JSONL ({prompt} or {history, recommended_item}, plus user_id)")
      ->check(CLI::ExistingFile);
  c_ev->add_option("--metrics", ev.metrics, "Comma-separated metric list")->capture_default_str();
  c_ev->add_option("--checkpoint", ev.checkpoint, "Student checkpoint used as GPTScore evaluator")->check(CLI::ExistingFile);
  c_ev->add_option("--catalog", ev.catalog, "Catalog for contexts given as item ids")->check(CLI::ExistingFile);
  c_ev->add_option("--template", ev.templ, "Prompt template file")->check(CLI::ExistingFile);
  c_ev->add_option("--embedding-url", ev.embedding_url, "External embedding endpoint for BERTScore");
  c_ev->add_option("--embedding-seed", ev.embedding_seed, "Seed of the hashed embedding provider")->capture_default_str();
  c_ev->add_option("--embedding-dim", ev.embedding_dim, "Dimension of the hashed embedding provider")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Report JSON")->required();

  AnnotateArgs an;
  auto* c_serve = app.add_subcommand("annotate-serve", "Serve a blinded rating session over HTTP");
  c_serve->add_option("--session", an.session, "Session config JSON")->required()->check(CLI::ExistingFile);
  c_serve->add_option("--port", an.port, "Port")->capture_default_str();
  c_serve->add_option("--host", an.host, "Bind address")->capture_default_str();
  c_serve->add_option("--static", an.static_dir, "Directory of UI assets served at /")->check(CLI::ExistingDirectory);
  AnnotateArgs ar;
  auto* c_rep = app.add_subcommand("annotate-report", "Summarise a session's ratings log");
  c_rep->add_option("--session", ar.session, "Session config JSON")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--out", ar.out, "Summary JSON")->required();

  BenchArgs be;
  auto* c_bench = app.add_subcommand("bench", "Time explanation generation");
  c_bench->add_option("--checkpoint", be.checkpoint, "Student checkpoint")->required()->check(CLI::ExistingFile);
  c_bench->add_option("--baseline", be.baseline, "Checkpoint timed first; ratios are relative to it")->check(CLI::ExistingFile);
  c_bench->add_option("--instances", be.instances, "Instances JSONL (distilled samples, or ids with --catalog)")
      ->required()
      ->check(CLI::ExistingFile);
  c_bench->add_option("--catalog", be.catalog, "Catalog for resolving item ids")->check(CLI::ExistingFile);
  c_bench->add_option("--template", be.templ, "Prompt template file")->check(CLI::ExistingFile);
  c_bench->add_option("--runs", be.runs, "Timed runs")->capture_default_str();
  c_bench->add_option("--warmup", be.warmup, "Untimed warmup runs")->capture_default_str();
  c_bench->add_option("--beam", be.beam, "Beam width; 0 = greedy")->capture_default_str();
  c_bench->add_option("--max-len", be.max_len, "Token cap; 0 = model maximum")->capture_default_str();
  c_bench->add_option("--out", be.out, "Report JSON")->required();

  WalkthroughArgs wa;
  auto* c_walk = app.add_subcommand("walkthrough", "Synthetic end-to-end run: corpus, distill, train, evaluate, bench");
  c_walk->add_option("--config", wa.config, "Pipeline config JSON (partial configs keep defaults)")->check(CLI::ExistingFile);
  c_walk->add_option("--seed", wa.seed, "Master seed; derives every stage seed");
  c_walk->add_option("--epochs", wa.epochs, "Overrides config");
  c_walk->add_flag("--no-bench", wa.no_bench, "Skip the latency benchmark");
  c_walk->add_option("--out", wa.out, "Artifacts directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (c_prep->parsed()) return run_prepare(prep);
    if (c_dist->parsed()) return run_distill(dist);
    if (c_train->parsed()) return run_train(tr);
    if (c_ex->parsed()) return run_explain(ex);
    if (c_ev->parsed()) return run_evaluate(ev);
    if (c_serve->parsed()) return run_annotate_serve(an);
    if (c_rep->parsed()) return run_annotate_report(ar);
    if (c_bench->parsed()) return run_bench(be);
    if (c_walk->parsed()) return run_walkthrough_cmd(wa);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
