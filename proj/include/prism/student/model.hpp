#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "prism/student/autodiff.hpp"
#include "prism/student/config.hpp"
#include "prism/student/vocabulary.hpp"

namespace prism::student {

template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first training use

  void ensure_grad() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.rows(), value.cols());
  }
};

template <typename T>
struct AttentionParams {
  Param<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct LayerNormParams {
  Param<T> gain, bias;
};

template <typename T>
struct FeedForwardParams {
  Param<T> w1, b1, w2, b2;
};

template <typename T>
struct EncoderLayerParams {
  LayerNormParams<T> norm1;
  AttentionParams<T> self_attn;
  LayerNormParams<T> norm2;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct DecoderLayerParams {
  LayerNormParams<T> norm1;
  AttentionParams<T> self_attn;
  LayerNormParams<T> norm2;
  AttentionParams<T> cross_attn;
  LayerNormParams<T> norm3;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct ModelParams {
  Param<T> word_embedding;     // |V| x D
  Param<T> user_embedding;     // (|U| + 1) x D, row 0 = unknown user
  Param<T> encoder_positions;  // max_source_len x D
  Param<T> decoder_positions;  // max_target_len x D
  std::vector<EncoderLayerParams<T>> encoder;
  std::vector<DecoderLayerParams<T>> decoder;
  LayerNormParams<T> encoder_norm;
  LayerNormParams<T> decoder_norm;
  Param<T> output_weight;  // D x |V|
  Param<T> output_bias;    // 1 x |V|

  // Visits every parameter in the fixed checkpoint order.
  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    auto attn = [&](const std::string& p, auto& a) {
      f(p + ".wq", a.wq); f(p + ".bq", a.bq); f(p + ".wk", a.wk); f(p + ".bk", a.bk);
      f(p + ".wv", a.wv); f(p + ".bv", a.bv); f(p + ".wo", a.wo); f(p + ".bo", a.bo);
    };
    auto norm = [&](const std::string& p, auto& n) { f(p + ".gain", n.gain); f(p + ".bias", n.bias); };
    auto ffn = [&](const std::string& p, auto& m) { f(p + ".w1", m.w1); f(p + ".b1", m.b1); f(p + ".w2", m.w2); f(p + ".b2", m.b2); };
    f("word_embedding", s.word_embedding);
    f("user_embedding", s.user_embedding);
    f("encoder_positions", s.encoder_positions);
    f("decoder_positions", s.decoder_positions);
    for (std::size_t l = 0; l < s.encoder.size(); ++l) {
      auto p = "encoder." + std::to_string(l);
      norm(p + ".norm1", s.encoder[l].norm1);
      attn(p + ".self_attn", s.encoder[l].self_attn);
      norm(p + ".norm2", s.encoder[l].norm2);
      ffn(p + ".ffn", s.encoder[l].ffn);
    }
    for (std::size_t l = 0; l < s.decoder.size(); ++l) {
      auto p = "decoder." + std::to_string(l);
      norm(p + ".norm1", s.decoder[l].norm1);
      attn(p + ".self_attn", s.decoder[l].self_attn);
      norm(p + ".norm2", s.decoder[l].norm2);
      attn(p + ".cross_attn", s.decoder[l].cross_attn);
      norm(p + ".norm3", s.decoder[l].norm3);
      ffn(p + ".ffn", s.decoder[l].ffn);
    }
    norm("encoder_norm", s.encoder_norm);
    norm("decoder_norm", s.decoder_norm);
    f("output_weight", s.output_weight);
    f("output_bias", s.output_bias);
  }
};

// Shape of every parameter implied by a config, in visiting order.
template <typename T>
ModelParams<T> allocate_params(const ModelConfig& c) {
  ModelParams<T> p;
  const auto D = c.hidden_dim, F = c.feedforward_dim, V = c.vocab_size;
  auto mk = [](Param<T>& x, std::size_t r, std::size_t cols) { x.value = Tensor<T>(r, cols); };
  auto attn = [&](AttentionParams<T>& a) {
    for (auto* w : {&a.wq, &a.wk, &a.wv, &a.wo}) mk(*w, D, D);
    for (auto* b : {&a.bq, &a.bk, &a.bv, &a.bo}) mk(*b, 1, D);
  };
  auto norm = [&](LayerNormParams<T>& n) {
    n.gain.value = Tensor<T>(1, D, T(1));
    mk(n.bias, 1, D);
  };
  auto ffn = [&](FeedForwardParams<T>& m) {
    mk(m.w1, D, F);
    mk(m.b1, 1, F);
    mk(m.w2, F, D);
    mk(m.b2, 1, D);
  };
  mk(p.word_embedding, V, D);
  mk(p.user_embedding, c.num_users + 1, D);
  mk(p.encoder_positions, c.max_source_len, D);
  mk(p.decoder_positions, c.max_target_len, D);
  p.encoder.resize(c.num_encoder_layers);
  for (auto& l : p.encoder) {
    norm(l.norm1);
    attn(l.self_attn);
    norm(l.norm2);
    ffn(l.ffn);
  }
  p.decoder.resize(c.num_decoder_layers);
  for (auto& l : p.decoder) {
    norm(l.norm1);
    attn(l.self_attn);
    norm(l.norm2);
    attn(l.cross_attn);
    norm(l.norm3);
    ffn(l.ffn);
  }
  norm(p.encoder_norm);
  norm(p.decoder_norm);
  mk(p.output_weight, D, V);
  mk(p.output_bias, 1, V);
  return p;
}

// One training/inference example in id space. `target` holds the
// explanation tokens followed by the end token; the decoder input is the
// begin token followed by target minus its last element. Pad targets are
// excluded from the loss.
struct Example {
  std::vector<int> source;
  std::size_t user = 0;  // row of W_u; 0 is the unknown user
  std::vector<int> target;
};

// The user-aware encoder-decoder.
template <typename T>
class Model {
 public:
  static constexpr std::size_t kUnknownUser = 0;

  Model() = default;

  // Weights from N(0, 0.02) in visiting order; biases and norm shifts 0,
  // norm gains 1; the unknown-user row is zero.
  Model(ModelConfig config, std::vector<std::string> users, std::uint64_t seed)
      : config_(std::move(config)), users_(std::move(users)) {
    config_.num_users = users_.size();
    config_.validate();
    params_ = allocate_params<T>(config_);
    index_users();
    Rng rng(seed);
    params_.for_each([&](const std::string&, Param<T>& p) {
      if (p.value.rows() == 1) return;
      for (auto& x : p.value.storage()) x = static_cast<T>(rng.normal(0.0, 0.02));
    });
    auto& wu = params_.user_embedding.value;
    std::fill_n(wu.row(kUnknownUser), wu.cols(), T(0));
  }

  // Adopts existing parameters (checkpoint loading, precision conversion).
  Model(ModelConfig config, std::vector<std::string> users, ModelParams<T> params)
      : config_(std::move(config)), users_(std::move(users)), params_(std::move(params)) {
    config_.num_users = users_.size();
    config_.validate();
    index_users();
  }

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& users() const { return users_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }

  // W_u row for a user id; unknown ids map to the reserved zero row.
  std::size_t user_row(std::string_view user_id) const {
    auto it = user_index_.find(std::string(user_id));
    return it == user_index_.end() ? kUnknownUser : it->second;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    params_.for_each([&](const std::string&, const Param<T>& p) { n += p.value.size(); });
    return n;
  }

  void zero_grad() {
    params_.for_each([](const std::string&, Param<T>& p) {
      p.ensure_grad();
      p.grad.set_zero();
    });
  }

  bool all_finite() const {
    bool ok = true;
    params_.for_each([&](const std::string&, const Param<T>& p) { ok = ok && p.value.all_finite(); });
    return ok;
  }

  template <typename U>
  Model<U> cast() const {
    auto out = allocate_params<U>(config_);
    std::vector<const Tensor<T>*> src;
    params_.for_each([&](const std::string&, const Param<T>& p) { src.push_back(&p.value); });
    std::size_t i = 0;
    out.for_each([&](const std::string&, Param<U>& p) {
      const auto& s = *src[i++];
      for (std::size_t k = 0; k < s.size(); ++k) p.value.data()[k] = static_cast<U>(s.data()[k]);
    });
    return Model<U>(config_, users_, std::move(out));
  }

  void validate_example(std::span<const int> source, std::size_t user) const {
    if (source.size() > config_.max_source_len)
      throw InputError("source length " + std::to_string(source.size()) + " exceeds max_source_len " +
                       std::to_string(config_.max_source_len));
    if (source.empty()) throw InputError("source sequence is empty");
    check_ids(source);
    if (user > config_.num_users) throw InputError("user row out of range: " + std::to_string(user));
  }

  void check_ids(std::span<const int> ids) const {
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) throw InputError("token id out of range: " + std::to_string(id));
  }

 private:
  void index_users() {
    user_index_.clear();
    for (std::size_t i = 0; i < users_.size(); ++i)
      if (!user_index_.emplace(users_[i], i + 1).second) throw InputError("duplicate user id '" + users_[i] + "'");
  }

  ModelConfig config_;
  std::vector<std::string> users_;
  ModelParams<T> params_;
  std::unordered_map<std::string, std::size_t> user_index_;
};

// Builds the computation graph on a tape. M is Model<T> (gradients flow
// into its parameters) or const Model<T> (forward only).
template <typename T, typename M>
class ForwardPass {
  static constexpr bool kTrainable = !std::is_const_v<M>;
  using Var = typename Tape<T>::Var;

 public:
  ForwardPass(Tape<T>& tape, M& model, Rng* dropout_rng = nullptr)
      : tape_(tape), model_(model), cfg_(model.config()), rng_(dropout_rng) {}

  // Word + position embeddings plus the user vector broadcast to every
  // position: (W_e[x_j] + P[j]) + v_u.
  Var embed(std::span<const int> ids, bool decoder_side, std::size_t user) {
    auto& p = model_.params();
    std::vector<int> pos(ids.size());
    for (std::size_t j = 0; j < pos.size(); ++j) pos[j] = static_cast<int>(j);
    Var x = tape_.gather_rows(leaf(p.word_embedding), std::vector<int>(ids.begin(), ids.end()));
    x = tape_.add(x, tape_.gather_rows(leaf(decoder_side ? p.decoder_positions : p.encoder_positions), std::move(pos)));
    if (!decoder_side || cfg_.user_on_decoder) x = tape_.add_row(x, tape_.gather_rows(leaf(p.user_embedding), {static_cast<int>(user)}));
    return x;
  }

  Var encode(std::span<const int> source, std::size_t user) {
    auto& p = model_.params();
    Var x = drop(embed(source, false, user));
    for (auto& layer : p.encoder) {
      Var a = norm(x, layer.norm1);
      x = tape_.add(x, drop(attention(layer.self_attn, a, a, false)));
      a = norm(x, layer.norm2);
      x = tape_.add(x, drop(feed_forward(layer.ffn, a)));
    }
    return norm(x, p.encoder_norm);
  }

  // Per-layer cross-attention keys and values over the encoder output.
  std::vector<std::pair<Var, Var>> cross_keys(Var memory) {
    std::vector<std::pair<Var, Var>> kv;
    for (auto& layer : model_.params().decoder) {
      auto& a = layer.cross_attn;
      kv.emplace_back(tape_.linear(memory, leaf(a.wk), leaf(a.bk)), tape_.linear(memory, leaf(a.wv), leaf(a.bv)));
    }
    return kv;
  }

  // Logits for every decoder position.
  Var decode(std::span<const int> decoder_input, const std::vector<std::pair<Var, Var>>& cross, std::size_t user) {
    auto& p = model_.params();
    Var y = drop(embed(decoder_input, true, user));
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
      auto& layer = p.decoder[l];
      Var a = norm(y, layer.norm1);
      y = tape_.add(y, drop(attention(layer.self_attn, a, a, true)));
      a = norm(y, layer.norm2);
      Var q = tape_.linear(a, leaf(layer.cross_attn.wq), leaf(layer.cross_attn.bq));
      Var o = tape_.attention(q, cross[l].first, cross[l].second, cfg_.num_heads, false);
      y = tape_.add(y, drop(tape_.linear(o, leaf(layer.cross_attn.wo), leaf(layer.cross_attn.bo))));
      a = norm(y, layer.norm3);
      y = tape_.add(y, drop(feed_forward(layer.ffn, a)));
    }
    y = norm(y, p.decoder_norm);
    return tape_.linear(y, leaf(p.output_weight), leaf(p.output_bias));
  }

 private:
  template <typename P>
  Var leaf(P& param) {
    if constexpr (kTrainable && !std::is_const_v<P>) {
      if (tape_.grad_enabled()) {
        param.ensure_grad();
        return tape_.parameter(param.value, &param.grad);
      }
    }
    return tape_.parameter(param.value, nullptr);
  }

  template <typename N>
  Var norm(Var x, N& n) {
    return tape_.layer_norm(x, leaf(n.gain), leaf(n.bias));
  }

  template <typename A>
  Var attention(A& a, Var query_in, Var kv_in, bool causal) {
    Var q = tape_.linear(query_in, leaf(a.wq), leaf(a.bq));
    Var k = tape_.linear(kv_in, leaf(a.wk), leaf(a.bk));
    Var v = tape_.linear(kv_in, leaf(a.wv), leaf(a.bv));
    Var o = tape_.attention(q, k, v, cfg_.num_heads, causal);
    return tape_.linear(o, leaf(a.wo), leaf(a.bo));
  }

  template <typename F>
  Var feed_forward(F& f, Var x) {
    return tape_.linear(tape_.gelu(tape_.linear(x, leaf(f.w1), leaf(f.b1))), leaf(f.w2), leaf(f.b2));
  }

  Var drop(Var x) { return tape_.dropout(x, cfg_.dropout, rng_); }

  Tape<T>& tape_;
  M& model_;
  const ModelConfig& cfg_;
  Rng* rng_;
};

// Encoder input before the first layer, one D-vector per position.
template <typename T>
Tensor<T> embed_input(const Model<T>& model, std::span<const int> source, std::size_t user) {
  model.validate_example(source, user);
  Tape<T> tape(false);
  ForwardPass<T, const Model<T>> fp(tape, model);
  return tape.value(fp.embed(source, false, user));
}

// Contextualised encoder hidden states.
template <typename T>
Tensor<T> encode_input(const Model<T>& model, std::span<const int> source, std::size_t user) {
  model.validate_example(source, user);
  Tape<T> tape(false);
  ForwardPass<T, const Model<T>> fp(tape, model);
  return tape.value(fp.encode(source, user));
}

inline std::vector<int> decoder_input_for(std::span<const int> target) {
  std::vector<int> in;
  in.reserve(target.size());
  in.push_back(Vocabulary::kBegin);
  for (std::size_t t = 0; t + 1 < target.size(); ++t) in.push_back(target[t]);
  return in;
}

struct LossResult {
  double loss = 0.0;  // mean NLL per non-pad target token
  std::size_t tokens = 0;
};

template <typename T>
void validate_target(const Model<T>& model, const Example& ex) {
  if (ex.target.size() > model.config().max_target_len)
    throw InputError("target length " + std::to_string(ex.target.size()) + " exceeds max_target_len " +
                     std::to_string(model.config().max_target_len));
  model.check_ids(ex.target);
}

inline std::size_t count_target_tokens(std::span<const Example> batch) {
  std::size_t n = 0;
  for (const auto& ex : batch)
    for (int t : ex.target) n += t != Vocabulary::kPad;
  return n;
}

// Mean token NLL over the batch. With `model` non-const and gradients
// requested, d(loss)/d(theta) is accumulated into every parameter's grad
// (the caller zeroes them first).
template <typename T>
LossResult compute_loss(Model<T>& model, std::span<const Example> batch, bool with_grad = true,
                        Rng* dropout_rng = nullptr) {
  LossResult result;
  result.tokens = count_target_tokens(batch);
  if (result.tokens == 0) throw InputError("batch has no non-pad target tokens");
  const T inv = T(1) / T(result.tokens);
  double total = 0.0;
  for (const auto& ex : batch) {
    model.validate_example(ex.source, ex.user);
    validate_target(model, ex);
    Tape<T> tape(with_grad);
    ForwardPass<T, Model<T>> fp(tape, model, dropout_rng);
    auto memory = fp.encode(ex.source, ex.user);
    auto logits = fp.decode(decoder_input_for(ex.target), fp.cross_keys(memory), ex.user);
    auto nll = tape.cross_entropy_sum(logits, ex.target, Vocabulary::kPad);
    total += static_cast<double>(tape.value(nll)(0, 0));
    tape.backward(nll, inv);
  }
  result.loss = total / static_cast<double>(result.tokens);
  return result;
}

// Forward-only loss (dropout off).
template <typename T>
LossResult evaluate_loss(const Model<T>& model, std::span<const Example> examples) {
  LossResult result;
  result.tokens = count_target_tokens(examples);
  if (result.tokens == 0) throw InputError("no non-pad target tokens");
  double total = 0.0;
  for (const auto& ex : examples) {
    model.validate_example(ex.source, ex.user);
    validate_target(model, ex);
    Tape<T> tape(false);
    ForwardPass<T, const Model<T>> fp(tape, model);
    auto memory = fp.encode(ex.source, ex.user);
    auto logits = fp.decode(decoder_input_for(ex.target), fp.cross_keys(memory), ex.user);
    total += static_cast<double>(tape.value(tape.cross_entropy_sum(logits, ex.target, Vocabulary::kPad))(0, 0));
  }
  result.loss = total / static_cast<double>(result.tokens);
  return result;
}

template <typename T>
std::vector<double> log_softmax_row(const Tensor<T>& logits, std::size_t row) {
  const T* z = logits.row(row);
  const std::size_t c = logits.cols();
  double mx = static_cast<double>(*std::max_element(z, z + c));
  double sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j]) - mx);
  double lse = mx + std::log(sum);
  std::vector<double> out(c);
  for (std::size_t j = 0; j < c; ++j) out[j] = static_cast<double>(z[j]) - lse;
  return out;
}

// Teacher-forced log P(target[t] | target[<t], source, user) for each t.
template <typename T>
std::vector<double> token_log_probs(const Model<T>& model, std::span<const int> source, std::size_t user,
                                    std::span<const int> target) {
  model.validate_example(source, user);
  model.check_ids(target);
  if (target.size() > model.config().max_target_len) throw InputError("target longer than max_target_len");
  if (target.empty()) return {};
  Tape<T> tape(false);
  ForwardPass<T, const Model<T>> fp(tape, model);
  auto memory = fp.encode(source, user);
  auto logits = fp.decode(decoder_input_for(target), fp.cross_keys(memory), user);
  const auto& lv = tape.value(logits);
  std::vector<double> out(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) out[t] = log_softmax_row(lv, t)[static_cast<std::size_t>(target[t])];
  return out;
}

}  // namespace prism::student
