#pragma once

// Plain-text key=value configuration. Blank lines and lines starting with '#'
// are ignored; unknown or repeated keys are errors.

#include <cgseg/augment.hpp>
#include <cgseg/baselines.hpp>
#include <cgseg/errors.hpp>
#include <cgseg/metrics.hpp>
#include <cgseg/thermal.hpp>
#include <cgseg/train.hpp>

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <type_traits>
#include <set>
#include <sstream>

namespace cgseg {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    std::string key = detail::trim(std::string_view(line).substr(0, eq));
    std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return kv;
}

inline std::string serialize_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

inline void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << serialize_key_values(kv);
}

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read as std::size_t");

/// Typed, consuming access to a KeyValues map; finish() rejects leftovers.
class ConfigReader {
public:
  explicit ConfigReader(KeyValues kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void get(const std::string& key, std::string& out) {
    if (auto it = kv_.find(key); it != kv_.end()) {
      out = it->second;
      used_.insert(key);
    }
  }

  void get(const std::string& key, std::size_t& out) {
    std::string s;
    if (!take(key, s)) return;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || s[0] == '-' || *end != '\0' || errno) throw bad(key, s, "a non-negative integer");
    out = static_cast<std::size_t>(v);
  }

  void get(const std::string& key, double& out) {
    std::string s;
    if (!take(key, s)) return;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || errno || !std::isfinite(v)) throw bad(key, s, "a finite number");
    out = v;
  }

  void get(const std::string& key, int& out) {
    std::string s;
    if (!take(key, s)) return;
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || errno) throw bad(key, s, "an integer");
    out = static_cast<int>(v);
  }

  void get(const std::string& key, bool& out) {
    std::string s;
    if (!take(key, s)) return;
    if (s == "true" || s == "1") out = true;
    else if (s == "false" || s == "0") out = false;
    else throw bad(key, s, "true or false");
  }

  /// Comma-separated non-negative integers.
  void get(const std::string& key, std::vector<std::size_t>& out) {
    std::string s;
    if (!take(key, s)) return;
    out.clear();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = detail::trim(item);
      char* end = nullptr;
      if (t.empty() || t[0] == '-') throw bad(key, s, "a comma-separated list of integers");
      out.push_back(static_cast<std::size_t>(std::strtoull(t.c_str(), &end, 10)));
      if (*end != '\0') throw bad(key, s, "a comma-separated list of integers");
    }
  }

  /// Enum-like value through a parser that throws std::invalid_argument.
  template <class E, class Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    if (!take(key, s)) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

private:
  bool take(const std::string& key, std::string& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return false;
    used_.insert(key);
    out = it->second;
    return true;
  }

  static ConfigError bad(const std::string& key, const std::string& value, const char* expected) {
    return ConfigError("config key '" + key + "' = '" + value + "' is not " + expected);
  }

  KeyValues kv_;
  std::set<std::string> used_;
};

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// ---------------------------------------------------------------------------

/// Everything train, infer and eval need.
struct RunConfig {
  GanConfig gan;
  TrainConfig train;
  XorDenominator xor_denominator = XorDenominator::gt_foreground;

  /// Consumes the keys it knows from `r`; the caller calls finish().
  void read(ConfigReader& r) {
    r.get("depth", gan.depth);
    r.get("base_channels", gan.base_channels);
    r.get("input_size", gan.input_size);
    r.get("image_channels", gan.image_channels);
    r.get("target_channels", gan.target_channels);
    r.get("skip_connections", gan.skip_connections);
    r.get("disc_depth", gan.disc_depth);
    r.get("disc_base_channels", gan.disc_base_channels);
    r.get_enum("conditioning", gan.conditioning, parse_conditioning);
    r.get_enum("noise", gan.noise, parse_noise_mode);
    r.get("adam_lr", gan.adam.learning_rate);
    r.get("adam_beta1", gan.adam.beta1);
    r.get("adam_beta2", gan.adam.beta2);
    r.get("adam_epsilon", gan.adam.epsilon);
    r.get("epochs", train.epochs);
    r.get("batch_size", train.batch_size);
    r.get("lambda_l1", train.lambda_l1);
    r.get("seed", train.seed);
    r.get("checkpoint_every", train.checkpoint_every);
    r.get("validation_fraction", train.validation_fraction);
    r.get_enum("generator_loss", train.generator_loss, parse_generator_loss);
    r.get_enum("xor_denominator", xor_denominator, parse_xor_denominator);
  }

  void write(KeyValues& kv) const {
    kv["depth"] = std::to_string(gan.depth);
    kv["base_channels"] = std::to_string(gan.base_channels);
    kv["input_size"] = std::to_string(gan.input_size);
    kv["image_channels"] = std::to_string(gan.image_channels);
    kv["target_channels"] = std::to_string(gan.target_channels);
    kv["skip_connections"] = gan.skip_connections ? "true" : "false";
    kv["disc_depth"] = std::to_string(gan.disc_depth);
    kv["disc_base_channels"] = std::to_string(gan.disc_base_channels);
    kv["conditioning"] = to_string(gan.conditioning);
    kv["noise"] = to_string(gan.noise);
    kv["adam_lr"] = format_number(gan.adam.learning_rate);
    kv["adam_beta1"] = format_number(gan.adam.beta1);
    kv["adam_beta2"] = format_number(gan.adam.beta2);
    kv["adam_epsilon"] = format_number(gan.adam.epsilon);
    kv["epochs"] = std::to_string(train.epochs);
    kv["batch_size"] = std::to_string(train.batch_size);
    kv["lambda_l1"] = format_number(train.lambda_l1);
    kv["seed"] = std::to_string(train.seed);
    kv["checkpoint_every"] = std::to_string(train.checkpoint_every);
    kv["validation_fraction"] = format_number(train.validation_fraction);
    kv["generator_loss"] = to_string(train.generator_loss);
    kv["xor_denominator"] = to_string(xor_denominator);
  }

  /// Semantic checks, reported as ConfigError.
  void validate() const {
    try {
      train.validate();
      gan.adam.validate();
      validate_generator_spec(gan.generator_spec());
      validate_discriminator_spec(gan.discriminator_spec());
      if (gan.image_channels != 1 && gan.image_channels != 3) throw std::invalid_argument("image_channels must be 1 or 3");
      if (gan.target_channels != 1 && gan.target_channels != 3) throw std::invalid_argument("target_channels must be 1 or 3");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  static RunConfig from_key_values(const KeyValues& kv) {
    RunConfig c;
    ConfigReader r(kv);
    c.read(r);
    r.finish();
    c.validate();
    return c;
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    write(kv);
    return kv;
  }

  bool operator==(const RunConfig& o) const {
    return gan == o.gan && train.epochs == o.train.epochs && train.batch_size == o.train.batch_size &&
           train.lambda_l1 == o.train.lambda_l1 && train.seed == o.train.seed &&
           train.checkpoint_every == o.train.checkpoint_every &&
           train.validation_fraction == o.train.validation_fraction &&
           train.generator_loss == o.train.generator_loss && xor_denominator == o.xor_denominator;
  }
};

// ---------------------------------------------------------------------------

enum class EvalMethod { cgan, isodata, manual, simplenet, files };

inline std::string to_string(EvalMethod m) {
  switch (m) {
    case EvalMethod::cgan: return "cgan";
    case EvalMethod::isodata: return "isodata";
    case EvalMethod::manual: return "manual";
    case EvalMethod::simplenet: return "simplenet";
    case EvalMethod::files: return "files";
  }
  return "?";
}

inline EvalMethod parse_eval_method(const std::string& s) {
  for (auto m : {EvalMethod::cgan, EvalMethod::isodata, EvalMethod::manual, EvalMethod::simplenet, EvalMethod::files})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown eval method '" + s + "' (cgan|isodata|manual|simplenet|files)");
}

struct EvalConfig {
  EvalMethod method = EvalMethod::cgan;
  XorDenominator xor_denominator = XorDenominator::gt_foreground;
  double threshold = 127.0;  // manual method
  std::size_t bbox_margin = 3;
  std::size_t simplenet_window = 5;
  std::size_t simplenet_epochs = 200;
  double simplenet_lr = 0.5;
  std::uint64_t seed = 1;

  static EvalConfig from_key_values(const KeyValues& kv) {
    EvalConfig c;
    ConfigReader r(kv);
    r.get_enum("method", c.method, parse_eval_method);
    r.get_enum("xor_denominator", c.xor_denominator, parse_xor_denominator);
    r.get("threshold", c.threshold);
    r.get("bbox_margin", c.bbox_margin);
    r.get("simplenet_window", c.simplenet_window);
    r.get("simplenet_epochs", c.simplenet_epochs);
    r.get("simplenet_lr", c.simplenet_lr);
    r.get("seed", c.seed);
    r.finish();
    if (c.simplenet_window % 2 == 0) throw ConfigError("simplenet_window must be odd");
    if (!(c.simplenet_lr > 0.0)) throw ConfigError("simplenet_lr must be positive");
    return c;
  }

  KeyValues to_key_values() const {
    return {{"method", to_string(method)},
            {"xor_denominator", to_string(xor_denominator)},
            {"threshold", format_number(threshold)},
            {"bbox_margin", std::to_string(bbox_margin)},
            {"simplenet_window", std::to_string(simplenet_window)},
            {"simplenet_epochs", std::to_string(simplenet_epochs)},
            {"simplenet_lr", format_number(simplenet_lr)},
            {"seed", std::to_string(seed)}};
  }
};

enum class AugmentMode { segmentation, superimpose, occlusion };

inline std::string to_string(AugmentMode m) {
  switch (m) {
    case AugmentMode::segmentation: return "segmentation";
    case AugmentMode::superimpose: return "superimpose";
    case AugmentMode::occlusion: return "occlusion";
  }
  return "?";
}

inline AugmentMode parse_augment_mode(const std::string& s) {
  for (auto m : {AugmentMode::segmentation, AugmentMode::superimpose, AugmentMode::occlusion})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown augment mode '" + s + "' (segmentation|superimpose|occlusion)");
}

inline std::string to_string(BackgroundKind k) { return k == BackgroundKind::noise ? "noise" : "gradient"; }

inline BackgroundKind parse_background_kind(const std::string& s) {
  if (s == "noise") return BackgroundKind::noise;
  if (s == "gradient") return BackgroundKind::gradient;
  throw std::invalid_argument("unknown background '" + s + "' (noise|gradient)");
}

inline std::string to_string(OccluderShape s) { return s == OccluderShape::ellipse ? "ellipse" : "polygon"; }

inline OccluderShape parse_occluder_shape(const std::string& s) {
  if (s == "ellipse") return OccluderShape::ellipse;
  if (s == "polygon") return OccluderShape::polygon;
  throw std::invalid_argument("unknown occluder shape '" + s + "' (ellipse|polygon)");
}

inline std::string to_string(OccluderFill f) { return f == OccluderFill::uniform ? "uniform" : "noise"; }

inline OccluderFill parse_occluder_fill(const std::string& s) {
  if (s == "uniform") return OccluderFill::uniform;
  if (s == "noise") return OccluderFill::noise;
  throw std::invalid_argument("unknown occluder fill '" + s + "' (uniform|noise)");
}

struct AugmentConfig {
  AugmentMode mode = AugmentMode::segmentation;
  SegmentationSetOptions segmentation;
  double max_rotation_deg = 30.0;  // superimpose: random transforms when no reference frames are given
  double min_scale = 0.8;
  double max_scale = 1.25;
  double max_shift_fraction = 0.25;
  OccluderSpec occluder;

  static AugmentConfig from_key_values(const KeyValues& kv) {
    AugmentConfig c;
    ConfigReader r(kv);
    r.get_enum("mode", c.mode, parse_augment_mode);
    r.get("count", c.segmentation.count);
    r.get("size", c.segmentation.size);
    r.get("seed", c.segmentation.seed);
    r.get_enum("background", c.segmentation.background, parse_background_kind);
    r.get("noise_sigma", c.segmentation.noise_sigma);
    r.get("max_rotation_deg", c.max_rotation_deg);
    r.get("min_scale", c.min_scale);
    r.get("max_scale", c.max_scale);
    r.get("max_shift_fraction", c.max_shift_fraction);
    r.get_enum("occluder_shape", c.occluder.shape, parse_occluder_shape);
    r.get("occluder_area", c.occluder.area_fraction);
    r.get_enum("occluder_fill", c.occluder.fill, parse_occluder_fill);
    std::size_t fill_value = c.occluder.fill_value;
    r.get("occluder_value", fill_value);
    r.get("occluder_vertices", c.occluder.vertices);
    r.finish();
    if (fill_value > 255) throw ConfigError("occluder_value must lie in [0,255]");
    c.occluder.fill_value = static_cast<std::uint8_t>(fill_value);
    if (!(c.min_scale > 0.0 && c.min_scale <= c.max_scale)) throw ConfigError("need 0 < min_scale <= max_scale");
    if (!(c.occluder.area_fraction >= 0.05 && c.occluder.area_fraction <= 0.60))
      throw ConfigError("occluder_area must lie in [0.05, 0.60]");
    return c;
  }

  KeyValues to_key_values() const {
    return {{"mode", to_string(mode)},
            {"count", std::to_string(segmentation.count)},
            {"size", std::to_string(segmentation.size)},
            {"seed", std::to_string(segmentation.seed)},
            {"background", to_string(segmentation.background)},
            {"noise_sigma", format_number(segmentation.noise_sigma)},
            {"max_rotation_deg", format_number(max_rotation_deg)},
            {"min_scale", format_number(min_scale)},
            {"max_scale", format_number(max_scale)},
            {"max_shift_fraction", format_number(max_shift_fraction)},
            {"occluder_shape", to_string(occluder.shape)},
            {"occluder_area", format_number(occluder.area_fraction)},
            {"occluder_fill", to_string(occluder.fill)},
            {"occluder_value", std::to_string(occluder.fill_value)},
            {"occluder_vertices", std::to_string(occluder.vertices)}};
  }
};

struct ThermalConfig {
  double interval = 20.0;  // seconds between frames
  int tau = kDefaultBandThreshold;
  BandRule band_rule = BandRule::threshold;
  AlarmConfig alarm;

  static ThermalConfig from_key_values(const KeyValues& kv) {
    ThermalConfig c;
    ConfigReader r(kv);
    r.get("interval", c.interval);
    r.get("tau", c.tau);
    r.get_enum("band_rule", c.band_rule, parse_band_rule);
    r.get("window", c.alarm.window);
    r.get("rate_threshold", c.alarm.rate_threshold);
    r.get("consecutive", c.alarm.consecutive);
    r.finish();
    if (!(c.interval > 0.0)) throw ConfigError("interval must be positive");
    if (c.tau <= 0 || c.tau > 255) throw ConfigError("tau must lie in (0,255]");
    try {
      c.alarm.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return c;
  }

  KeyValues to_key_values() const {
    return {{"interval", format_number(interval)},
            {"tau", std::to_string(tau)},
            {"band_rule", to_string(band_rule)},
            {"window", std::to_string(alarm.window)},
            {"rate_threshold", format_number(alarm.rate_threshold)},
            {"consecutive", std::to_string(alarm.consecutive)}};
  }
};

}  // namespace cgseg
