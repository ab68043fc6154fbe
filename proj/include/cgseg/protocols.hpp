#pragma once

// Staged incremental training (each stage resumes from the previous stage's
// best-validation checkpoint on a larger dataset) and the single-run
// comparison arm.

#include <cgseg/config.hpp>

#include <chrono>
#include <functional>

namespace cgseg {

struct StagePlan {
  std::vector<std::size_t> sizes;  // cumulative dataset counts, in manifest order
  std::size_t epochs_per_stage = 50;
  std::size_t scratch_epochs = 0;  // 0 skips the comparison arm
  std::uint64_t seed = 1;
  std::string manifest;
  std::string test_manifest;
  RunConfig run;

  void validate() const {
    if (sizes.empty()) throw ConfigError("stage plan: no stage sizes");
    if (sizes.front() == 0) throw ConfigError("stage plan: stage sizes must be positive");
    for (std::size_t i = 1; i < sizes.size(); ++i)
      if (sizes[i] <= sizes[i - 1]) throw ConfigError("stage plan: stage sizes must be strictly increasing");
  }

  std::size_t total_epochs() const { return epochs_per_stage * sizes.size(); }

  /// Plan keys plus every RunConfig key (RunConfig's epochs/seed are ignored in favour of the plan's).
  static StagePlan from_key_values(const KeyValues& kv) {
    StagePlan p;
    ConfigReader r(kv);
    r.get("sizes", p.sizes);
    r.get("stage_epochs", p.epochs_per_stage);
    r.get("scratch_epochs", p.scratch_epochs);
    r.get("seed", p.seed);
    r.get("manifest", p.manifest);
    r.get("test_manifest", p.test_manifest);
    p.run.read(r);
    r.finish();
    p.run.train.seed = p.seed;
    p.run.validate();
    p.validate();
    return p;
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    run.write(kv);
    kv.erase("epochs");
    kv["sizes"] = format_list(sizes);
    kv["stage_epochs"] = std::to_string(epochs_per_stage);
    kv["scratch_epochs"] = std::to_string(scratch_epochs);
    kv["seed"] = std::to_string(seed);
    kv["manifest"] = manifest;
    kv["test_manifest"] = test_manifest;
    return kv;
  }
};

struct StageReport {
  std::size_t stage = 0;  // 1-based; 0 marks the scratch arm
  std::size_t dataset_size = 0;
  std::size_t train_count = 0;
  double wall_seconds = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // within the stage, 0 = its starting weights
  double initial_val_l1 = 0.0;
  double best_val_l1 = 0.0;
  double test_xor_error = 0.0;  // mean over the test set, in percent
  std::string test_set_id;
};

struct StageOutcome {
  StageReport report;
  TrainResult training;
};

/// FNV-1a over test ids and pixels, so comparisons can tell test sets apart.
inline std::string test_set_id(const std::vector<PairedSample>& test) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (const auto& s : test) {
    for (char c : s.id) mix(static_cast<std::uint8_t>(c));
    mix(0);
    for (auto p : s.input.pixels) mix(p);
    for (auto p : s.target.pixels) mix(p);
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Manifest positions held out for validation: n = floor(fraction * size)
/// positions spread evenly, the last one at the end of the set.
inline std::vector<std::size_t> validation_positions(std::size_t size, double fraction) {
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(size)));
  std::vector<std::size_t> pos;
  for (std::size_t j = 0; j < n; ++j) pos.push_back((j + 1) * size / n - 1);
  return pos;
}

/// Mean XOR error (percent) of the model's masks over a test set.
template <class T>
double mean_test_xor(const GanModel<T>& m, const std::vector<PairedSample>& test, XorDenominator denom) {
  if (test.empty()) throw DataError("test set is empty");
  double total = 0.0;
  for (const auto& s : test) total += xor_error(predict_mask(m, s.input), binarize(to_gray(s.target), 127), denom);
  return total / static_cast<double>(test.size());
}

namespace detail {

inline void require_disjoint(const std::vector<PairedSample>& data, const std::vector<PairedSample>& test) {
  std::set<std::string> ids;
  for (const auto& s : data) ids.insert(s.id);
  for (const auto& s : test)
    if (ids.count(s.id)) throw DataError("test sample '" + s.id + "' also appears in the training data");
}

struct SplitSets {
  std::vector<PairedSample> validation;
  std::vector<std::vector<PairedSample>> stages;  // training samples per stage
};

inline SplitSets split_stages(const std::vector<std::size_t>& sizes, const std::vector<PairedSample>& data,
                              double fraction) {
  const std::size_t final_size = sizes.back();
  if (final_size > data.size()) {
    throw DataError("stage plan needs " + std::to_string(final_size) + " samples, dataset has " +
                    std::to_string(data.size()));
  }
  const auto held = validation_positions(final_size, fraction);
  SplitSets out;
  for (auto p : held) out.validation.push_back(data[p]);
  for (auto size : sizes) {
    std::vector<PairedSample> stage;
    for (std::size_t i = 0; i < size; ++i)
      if (!std::binary_search(held.begin(), held.end(), i)) stage.push_back(data[i]);
    if (stage.empty()) throw DataError("stage of size " + std::to_string(size) + " has no training samples");
    out.stages.push_back(std::move(stage));
  }
  return out;
}

template <class T>
StageOutcome run_stage(GanModel<T>& model, const std::vector<PairedSample>& train_set,
                       const std::vector<PairedSample>& validation, const std::vector<PairedSample>& test,
                       TrainConfig cfg, std::size_t stage, std::size_t dataset_size, XorDenominator denom) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t start_epoch = model.epoch;
  TrainResult tr = train(model, train_set, validation, cfg);
  const GanModel<T> best = restore<T>(tr.best);
  StageOutcome out;
  out.report.stage = stage;
  out.report.dataset_size = dataset_size;
  out.report.train_count = train_set.size();
  out.report.epochs_run = cfg.epochs;
  out.report.best_epoch = tr.best.epoch - start_epoch;
  out.report.initial_val_l1 = tr.initial_val_l1;
  out.report.best_val_l1 = tr.best.val_l1;
  out.report.test_xor_error = mean_test_xor(best, test, denom);
  out.report.test_set_id = test_set_id(test);
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.training = std::move(tr);
  return out;
}

}  // namespace detail

using StageCallback = std::function<void(const StageOutcome&)>;

/// Stage 1 starts from a fresh seeded model; stage k+1 restores stage k's
/// lowest-validation-L1 checkpoint. Validation is drawn from the final
/// stage's dataset and held fixed throughout; test XOR uses each stage's best weights.
template <class T = float>
std::vector<StageOutcome> run_incremental(const StagePlan& plan, const std::vector<PairedSample>& data,
                                          const std::vector<PairedSample>& test, const StageCallback& on_stage = {}) {
  plan.validate();
  detail::require_disjoint(data, test);
  const auto sets = detail::split_stages(plan.sizes, data, plan.run.train.validation_fraction);
  std::vector<StageOutcome> out;
  GanModel<T> model(plan.run.gan, plan.seed);
  for (std::size_t k = 0; k < plan.sizes.size(); ++k) {
    if (k > 0) model = restore<T>(out.back().training.best);
    TrainConfig cfg = plan.run.train;
    cfg.epochs = plan.epochs_per_stage;
    cfg.seed = plan.seed + k;
    out.push_back(detail::run_stage(model, sets.stages[k], sets.validation, test, cfg, k + 1, plan.sizes[k],
                                    plan.run.xor_denominator));
    if (on_stage) on_stage(out.back());
  }
  return out;
}

/// One uninterrupted run on the final stage's training samples, same validation and test sets.
template <class T = float>
StageOutcome run_scratch(const StagePlan& plan, std::size_t epochs, const std::vector<PairedSample>& data,
                         const std::vector<PairedSample>& test) {
  plan.validate();
  detail::require_disjoint(data, test);
  const auto sets = detail::split_stages(plan.sizes, data, plan.run.train.validation_fraction);
  GanModel<T> model(plan.run.gan, plan.seed);
  TrainConfig cfg = plan.run.train;
  cfg.epochs = epochs;
  cfg.seed = plan.seed;
  return detail::run_stage(model, sets.stages.back(), sets.validation, test, cfg, 0, plan.sizes.back(),
                           plan.run.xor_denominator);
}

struct Comparison {
  double incremental_epochs = 0, scratch_epochs = 0;
  double incremental_seconds = 0, scratch_seconds = 0;
  double incremental_xor = 0, scratch_xor = 0;

  static double ratio(double a, double b) { return a == b ? 1.0 : a / b; }
  double epoch_ratio() const { return ratio(incremental_epochs, scratch_epochs); }
  double time_ratio() const { return ratio(incremental_seconds, scratch_seconds); }
  double xor_ratio() const { return ratio(incremental_xor, scratch_xor); }
};

inline Comparison compare(const std::vector<StageReport>& incremental, const StageReport& scratch) {
  if (incremental.empty()) throw std::invalid_argument("compare: no incremental stages");
  for (const auto& r : incremental)
    if (r.test_set_id != scratch.test_set_id) throw std::invalid_argument("compare: arms were scored on different test sets");
  Comparison c;
  for (const auto& r : incremental) {
    c.incremental_epochs += static_cast<double>(r.epochs_run);
    c.incremental_seconds += r.wall_seconds;
  }
  c.incremental_xor = incremental.back().test_xor_error;
  c.scratch_epochs = static_cast<double>(scratch.epochs_run);
  c.scratch_seconds = scratch.wall_seconds;
  c.scratch_xor = scratch.test_xor_error;
  return c;
}

inline void write_comparison_csv(std::ostream& out, const Comparison& c) {
  char buf[200];
  out << "quantity,incremental,scratch,ratio\n";
  std::snprintf(buf, sizeof buf, "total_epochs,%.0f,%.0f,%.9g\n", c.incremental_epochs, c.scratch_epochs, c.epoch_ratio());
  out << buf;
  std::snprintf(buf, sizeof buf, "wall_seconds,%.3f,%.3f,%.9g\n", c.incremental_seconds, c.scratch_seconds, c.time_ratio());
  out << buf;
  std::snprintf(buf, sizeof buf, "test_xor_error,%.6f,%.6f,%.9g\n", c.incremental_xor, c.scratch_xor, c.xor_ratio());
  out << buf;
}

/// Per-stage table without wall time, so reruns compare byte for byte.
inline void write_stage_csv(std::ostream& out, const std::vector<StageReport>& rows) {
  out << "stage,dataset_size,train_count,epochs_run,best_epoch,initial_val_l1,best_val_l1,test_xor_error,test_set_id\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%zu,%.9g,%.9g,%.6f,%s\n", r.stage, r.dataset_size, r.train_count,
                  r.epochs_run, r.best_epoch, r.initial_val_l1, r.best_val_l1, r.test_xor_error, r.test_set_id.c_str());
    out << buf;
  }
}

inline void write_timing_csv(std::ostream& out, const std::vector<StageReport>& rows) {
  out << "stage,wall_seconds\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.3f\n", r.stage, r.wall_seconds);
    out << buf;
  }
}

}  // namespace cgseg
