#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/student/model.hpp"

namespace prism::student {

struct DecodeConfig {
  enum class Mode { greedy, beam };
  Mode mode = Mode::greedy;
  std::size_t beam_width = 4;
  // 0 means the model's max_target_len.
  std::size_t max_len = 0;

  void validate() const {
    if (mode == Mode::beam && beam_width < 1) throw InputError("beam width must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = {{"mode", c.mode == DecodeConfig::Mode::greedy ? "greedy" : "beam"}, {"beam_width", c.beam_width}, {"max_len", c.max_len}};
}

inline void from_json(const nlohmann::json& j, DecodeConfig& c) {
  auto mode = j.value("mode", std::string("greedy"));
  if (mode == "greedy") c.mode = DecodeConfig::Mode::greedy;
  else if (mode == "beam") c.mode = DecodeConfig::Mode::beam;
  else throw InputError("decode mode must be 'greedy' or 'beam', got '" + mode + "'");
  c.beam_width = j.value("beam_width", c.beam_width);
  c.max_len = j.value("max_len", c.max_len);
}

// Generated ids (including the end token when one was produced) with the
// log-probability the model assigned to each.
struct Generation {
  std::vector<int> tokens;
  std::vector<double> log_probs;
  double total_log_prob = 0.0;
};

// Next-token log-probabilities given the tokens generated so far.
using StepFunction = std::function<std::vector<double>(std::span<const int>)>;

inline Generation greedy_search(const StepFunction& step, std::size_t max_len, int end_token) {
  Generation g;
  while (g.tokens.size() < max_len) {
    auto lp = step(g.tokens);
    // max_element returns the first maximum, i.e. the lowest id on ties
    auto best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    g.tokens.push_back(best);
    g.log_probs.push_back(lp[static_cast<std::size_t>(best)]);
    g.total_log_prob += lp[static_cast<std::size_t>(best)];
    if (best == end_token) break;
  }
  return g;
}

// Keeps the `width` highest total-log-prob hypotheses at each step (no
// length normalisation). Finished hypotheses stay in the pool and compete
// with extensions; search stops once every kept hypothesis has finished
// or max_len is reached. Equal scores are ordered by token sequence so
// width 1 reproduces greedy search.
inline Generation beam_search(const StepFunction& step, std::size_t width, std::size_t max_len, int end_token) {
  if (width < 1) throw InputError("beam width must be >= 1");
  struct Hyp {
    Generation g;
    bool done = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.g.total_log_prob != b.g.total_log_prob) return a.g.total_log_prob > b.g.total_log_prob;
    return a.g.tokens < b.g.tokens;
  };
  std::vector<Hyp> beam(1);
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<Hyp> pool;
    bool extended = false;
    for (auto& h : beam) {
      if (h.done) {
        pool.push_back(h);
        continue;
      }
      extended = true;
      auto lp = step(h.g.tokens);
      // Only the top `width` extensions of one hypothesis can survive.
      std::vector<int> order(lp.size());
      for (std::size_t i = 0; i < lp.size(); ++i) order[i] = static_cast<int>(i);
      const std::size_t keep = std::min(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), [&](int a, int b) {
        if (lp[a] != lp[b]) return lp[a] > lp[b];
        return a < b;
      });
      for (std::size_t i = 0; i < keep; ++i) {
        Hyp n = h;
        n.g.tokens.push_back(order[i]);
        n.g.log_probs.push_back(lp[order[i]]);
        n.g.total_log_prob += lp[order[i]];
        n.done = order[i] == end_token;
        pool.push_back(std::move(n));
      }
    }
    if (!extended) break;
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > width) pool.resize(width);
    beam = std::move(pool);
  }
  return std::min_element(beam.begin(), beam.end(), better)->g;
}

// Step function over a model: the encoder and the cross-attention keys
// and values are computed once, the decoder runs over the full prefix at
// every step.
template <typename T>
class ModelStepper {
 public:
  ModelStepper(const Model<T>& model, std::span<const int> source, std::size_t user) : model_(model), user_(user) {
    model.validate_example(source, user);
    Tape<T> tape(false);
    ForwardPass<T, const Model<T>> fp(tape, model);
    auto kv = fp.cross_keys(fp.encode(source, user));
    for (auto& [k, v] : kv) cross_.emplace_back(tape.value(k), tape.value(v));
  }

  std::vector<double> operator()(std::span<const int> generated) const {
    if (generated.size() + 1 > model_.config().max_target_len) throw InputError("decoder prefix exceeds max_target_len");
    std::vector<int> in;
    in.reserve(generated.size() + 1);
    in.push_back(Vocabulary::kBegin);
    in.insert(in.end(), generated.begin(), generated.end());
    Tape<T> tape(false);
    ForwardPass<T, const Model<T>> fp(tape, model_);
    std::vector<std::pair<typename Tape<T>::Var, typename Tape<T>::Var>> kv;
    for (const auto& [k, v] : cross_) kv.emplace_back(tape.parameter(k, nullptr), tape.parameter(v, nullptr));
    auto logits = fp.decode(in, kv, user_);
    const auto& lv = tape.value(logits);
    return log_softmax_row(lv, lv.rows() - 1);
  }

 private:
  const Model<T>& model_;
  std::size_t user_;
  std::vector<std::pair<Tensor<T>, Tensor<T>>> cross_;
};

template <typename T>
Generation generate(const Model<T>& model, std::span<const int> source, std::size_t user, const DecodeConfig& cfg = {}) {
  cfg.validate();
  std::size_t max_len = cfg.max_len == 0 ? model.config().max_target_len : std::min(cfg.max_len, model.config().max_target_len);
  ModelStepper<T> stepper(model, source, user);
  StepFunction step = [&](std::span<const int> prefix) { return stepper(prefix); };
  if (cfg.mode == DecodeConfig::Mode::greedy) return greedy_search(step, max_len, Vocabulary::kEnd);
  return beam_search(step, cfg.beam_width, max_len, Vocabulary::kEnd);
}

}  // namespace prism::student
