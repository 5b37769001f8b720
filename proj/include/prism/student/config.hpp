#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "prism/common.hpp"

namespace prism::student {

struct ModelConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_encoder_layers = 2;
  std::size_t num_decoder_layers = 2;
  std::size_t num_heads = 4;
  std::size_t feedforward_dim = 256;
  std::size_t max_source_len = 128;
  std::size_t max_target_len = 48;
  std::size_t vocab_size = 0;
  // Known users; the user table has one extra zero row for unknown users.
  std::size_t num_users = 0;
  double dropout = 0.0;
  // Also add the user vector to decoder input embeddings.
  bool user_on_decoder = false;

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) throw InputError(std::string("model config: ") + name + " must be >= 1");
    };
    positive(hidden_dim, "hidden_dim");
    positive(num_encoder_layers, "num_encoder_layers");
    positive(num_decoder_layers, "num_decoder_layers");
    positive(num_heads, "num_heads");
    positive(feedforward_dim, "feedforward_dim");
    positive(max_source_len, "max_source_len");
    positive(max_target_len, "max_target_len");
    if (vocab_size < 5) throw InputError("model config: vocab_size must cover the 4 reserved tokens plus at least one word");
    if (hidden_dim % num_heads != 0) throw InputError("model config: hidden_dim must be divisible by num_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("model config: dropout must lie in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

struct TrainingConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  // Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  // When false, W_u stays frozen at zero (the "w/o user" ablation).
  bool train_user_embedding = true;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw InputError("training config: learning_rate must be >= 0");
    if (epochs < 1) throw InputError("training config: epochs must be >= 1");
    if (batch_size < 1) throw InputError("training config: batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw InputError("training config: betas must lie in [0, 1)");
    if (grad_clip < 0) throw InputError("training config: grad_clip must be >= 0");
  }

  bool operator==(const TrainingConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden_dim", c.hidden_dim},         {"num_encoder_layers", c.num_encoder_layers},
       {"num_decoder_layers", c.num_decoder_layers}, {"num_heads", c.num_heads},
       {"feedforward_dim", c.feedforward_dim}, {"max_source_len", c.max_source_len},
       {"max_target_len", c.max_target_len}, {"vocab_size", c.vocab_size},
       {"num_users", c.num_users},           {"dropout", c.dropout},
       {"user_on_decoder", c.user_on_decoder}};
}

// Missing keys keep their defaults so config files can be partial.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.num_encoder_layers = j.value("num_encoder_layers", c.num_encoder_layers);
  c.num_decoder_layers = j.value("num_decoder_layers", c.num_decoder_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.feedforward_dim = j.value("feedforward_dim", c.feedforward_dim);
  c.max_source_len = j.value("max_source_len", c.max_source_len);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.num_users = j.value("num_users", c.num_users);
  c.dropout = j.value("dropout", c.dropout);
  c.user_on_decoder = j.value("user_on_decoder", c.user_on_decoder);
}

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},   {"beta1", c.beta1},
       {"beta2", c.beta2},                 {"adam_eps", c.adam_eps},           {"batch_size", c.batch_size},
       {"epochs", c.epochs},               {"grad_clip", c.grad_clip},         {"seed", c.seed},
       {"train_user_embedding", c.train_user_embedding}};
}

inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.train_user_embedding = j.value("train_user_embedding", c.train_user_embedding);
}

}  // namespace prism::student
