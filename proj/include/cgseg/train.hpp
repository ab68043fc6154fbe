#pragma once

// Alternating discriminator/generator minibatch training with per-epoch
// validation and best-checkpoint selection.

#include <cgseg/checkpoint.hpp>
#include <cgseg/errors.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace cgseg {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 1;
  double lambda_l1 = 100.0;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 50;
  double validation_fraction = 0.2;
  GeneratorLossForm generator_loss = GeneratorLossForm::non_saturating;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (checkpoint_every == 0) throw std::invalid_argument("checkpoint_every must be positive");
    if (!(lambda_l1 >= 0.0)) throw std::invalid_argument("lambda_l1 must be non-negative");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      throw std::invalid_argument("validation_fraction must lie in [0,1)");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double val_l1 = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;  // initial state, every checkpoint_every epochs, and the final epoch
  Checkpoint best;                      // lowest validation L1; earliest epoch wins ties
  std::vector<EpochMetrics> metrics;
  double initial_val_l1 = 0.0;
};

/// Deterministic split: a seeded shuffle, the first round(fraction * n) indices
/// become validation (at most n - 1 of them).
inline std::pair<std::vector<PairedSample>, std::vector<PairedSample>> split_validation(
    const std::vector<PairedSample>& data, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(data.size())));
  if (data.size() > 0) n_val = std::min(n_val, data.size() - 1);
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<long>(n_val), idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::pair<std::vector<PairedSample>, std::vector<PairedSample>> out;
  for (auto i : train_idx) out.first.push_back(data[i]);
  for (auto i : val_idx) out.second.push_back(data[i]);
  return out;
}

namespace detail {

inline void check_samples(const GanConfig& cfg, const std::vector<PairedSample>& samples) {
  for (const auto& s : samples) {
    if (s.input.width != cfg.input_size || s.input.height != cfg.input_size || !s.input.same_size(s.target)) {
      throw DataError("sample '" + s.id + "' is " + std::to_string(s.input.width) + "x" +
                      std::to_string(s.input.height) + ", model expects " + std::to_string(cfg.input_size) + "x" +
                      std::to_string(cfg.input_size));
    }
    if (s.input.channels != cfg.image_channels || s.target.channels != cfg.target_channels) {
      throw DataError("sample '" + s.id + "' has unexpected channel counts");
    }
  }
}

}  // namespace detail

/// Trains `model` in place on `train_set`, scoring `validation` (or the
/// training set when no validation samples are given) after every epoch.
template <class T>
TrainResult train(GanModel<T>& model, const std::vector<PairedSample>& train_set,
                  const std::vector<PairedSample>& validation, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  detail::check_samples(model.config, train_set);
  detail::check_samples(model.config, validation);
  const auto& scored = validation.empty() ? train_set : validation;

  std::vector<Tensor<T>> xs, ys;
  for (const auto& s : train_set) {
    xs.push_back(image_to_tensor<T>(s.input));
    ys.push_back(image_to_tensor<T>(s.target));
  }
  auto stack = [](const std::vector<Tensor<T>>& src, const std::vector<std::size_t>& pick) {
    const Shape& one = src[pick.front()].shape();
    Tensor<T> out(Shape{pick.size(), one[1], one[2], one[3]});
    const std::size_t per = src[pick.front()].size();
    for (std::size_t i = 0; i < pick.size(); ++i)
      std::copy(src[pick[i]].data().begin(), src[pick[i]].data().end(), out.data().begin() + static_cast<long>(i * per));
    return out;
  };

  TrainResult result;
  result.initial_val_l1 = generator_l1(model, scored);
  result.best = capture(model, result.initial_val_l1);
  result.checkpoints.push_back(result.best);

  std::mt19937_64 rng(cfg.seed);
  NoiseSource noise(cfg.seed + 1, model.config.noise);
  auto g_params = model.generator.parameters();
  auto d_params = model.discriminator.parameters();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double d_sum = 0.0, g_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> pick(order.begin() + static_cast<long>(start),
                                          order.begin() + static_cast<long>(std::min(order.size(), start + cfg.batch_size)));
      const Tensor<T> x = stack(xs, pick);
      const Tensor<T> y = stack(ys, pick);
      Tensor<T> fake = model.generator.forward(generator_input(model.config, x, noise), NormMode::train);

      zero_grad(d_params);
      Tensor<T> d_loss = discriminator_loss(model, x, y, fake.detach(), NormMode::train);
      backward(d_loss);
      optimizer_step(d_params, model.disc_opt);

      zero_grad(g_params);
      Tensor<T> g_loss = generator_loss(model, x, y, fake, cfg.lambda_l1, cfg.generator_loss, NormMode::train);
      backward(g_loss);
      optimizer_step(g_params, model.gen_opt);

      d_sum += static_cast<double>(d_loss.item());
      g_sum += static_cast<double>(g_loss.item());
      ++steps;
    }
    ++model.epoch;
    EpochMetrics row{e, d_sum / static_cast<double>(steps), g_sum / static_cast<double>(steps), 0.0};
    if (!std::isfinite(row.d_loss) || !std::isfinite(row.g_loss)) {
      throw DivergenceError(e, "d_loss=" + std::to_string(row.d_loss) + " g_loss=" + std::to_string(row.g_loss));
    }
    row.val_l1 = generator_l1(model, scored);
    if (!std::isfinite(row.val_l1)) throw DivergenceError(e, "validation L1 is not finite");
    result.metrics.push_back(row);
    if (row.val_l1 < result.best.val_l1) result.best = capture(model, row.val_l1);
    if (e % cfg.checkpoint_every == 0 || e == cfg.epochs) result.checkpoints.push_back(capture(model, row.val_l1));
  }
  return result;
}

/// Splits `dataset` by cfg.validation_fraction, then trains.
template <class T>
TrainResult train(GanModel<T>& model, const std::vector<PairedSample>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw DataError("dataset is empty");
  auto [train_set, validation] = split_validation(dataset, cfg.validation_fraction, cfg.seed);
  return train(model, train_set, validation, cfg);
}

inline void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& rows) {
  out << "epoch,d_loss,g_loss,val_l1\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", r.epoch, r.d_loss, r.g_loss, r.val_l1);
    out << buf;
  }
}

}  // namespace cgseg
