#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/student/model.hpp"
#include "prism/student/optimizer.hpp"

namespace prism::student {

struct TrainingHistory {
  double initial_loss = 0.0;         // full-data loss before the first step
  std::vector<double> epoch_losses;  // token-weighted mean over each epoch's batches
  double final_loss = 0.0;           // full-data loss after the last step
  std::size_t steps = 0;
};

inline nlohmann::json to_json_value(const TrainingHistory& h) {
  return {{"initial_loss", h.initial_loss}, {"epoch_losses", h.epoch_losses}, {"final_loss", h.final_loss}, {"steps", h.steps}};
}

template <typename T>
struct TrainCallbacks {
  // After every epoch (1-based), e.g. to write a checkpoint.
  std::function<void(std::size_t, double, const Model<T>&)> on_epoch;
};

// Mini-batch AdamW. Batch order comes from a generator seeded with
// cfg.seed, so a fixed seed reproduces the loss history exactly.
template <typename T>
TrainingHistory train(Model<T>& model, std::span<const Example> data, const TrainingConfig& cfg,
                      const TrainCallbacks<T>& callbacks = {}) {
  cfg.validate();
  if (data.empty()) throw InputError("training set is empty");
  // The ablated student has no user signal at all, not frozen noise.
  if (!cfg.train_user_embedding) model.params().user_embedding.value.set_zero();
  TrainingHistory history;
  history.initial_loss = evaluate_loss(model, data).loss;

  Rng rng(mix_seed(cfg.seed, "batch-order"));
  Rng dropout_rng(mix_seed(cfg.seed, "dropout"));
  AdamW<T> opt(cfg);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double weighted = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(data[order[i]]);
      model.zero_grad();
      auto r = compute_loss(model, std::span<const Example>(batch), true, model.config().dropout > 0 ? &dropout_rng : nullptr);
      if (!std::isfinite(r.loss))
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(opt.steps() + 1));
      opt.step(model);
      weighted += r.loss * static_cast<double>(r.tokens);
      tokens += r.tokens;
    }
    history.epoch_losses.push_back(weighted / static_cast<double>(tokens));
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, history.epoch_losses.back(), model);
  }
  history.steps = opt.steps();
  history.final_loss = evaluate_loss(model, data).loss;
  return history;
}

}  // namespace prism::student
