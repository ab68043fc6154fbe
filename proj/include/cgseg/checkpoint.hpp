#pragma once

// Snapshot of a GAN (weights, batch-norm statistics, optimizer moments) and
// its on-disk form: a text header followed by little-endian float32 arrays.

#include <cgseg/errors.hpp>
#include <cgseg/gan.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace cgseg {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  GanConfig config;
  std::uint64_t gen_steps = 0;
  std::uint64_t disc_steps = 0;
  std::size_t epoch = 0;
  double val_l1 = std::numeric_limits<double>::quiet_NaN();
  std::vector<NamedArray> arrays;
};

inline constexpr const char* kCheckpointMagic = "CGSEG-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <class T>
std::vector<float> to_float(std::span<const T> v) {
  return std::vector<float>(v.begin(), v.end());
}

template <class T>
void collect_network(const Network<T>& net, const std::string& prefix, std::vector<NamedArray>& out) {
  for (const auto& l : net.layers()) {
    const std::string base = prefix + "." + l.name + ".";
    out.push_back({base + "weight", l.weight.shape(), to_float(l.weight.data())});
    if (l.normalized) {
      out.push_back({base + "gamma", l.gamma.shape(), to_float(l.gamma.data())});
      out.push_back({base + "beta", l.beta.shape(), to_float(l.beta.data())});
      out.push_back({base + "running_mean", Shape{l.out_channels}, to_float(std::span<const T>(l.stats.running_mean))});
      out.push_back({base + "running_var", Shape{l.out_channels}, to_float(std::span<const T>(l.stats.running_var))});
    } else {
      out.push_back({base + "bias", l.bias.shape(), to_float(l.bias.data())});
    }
  }
}

template <class T>
void collect_optimizer(const Network<T>& net, const OptimizerState<T>& opt, const std::string& prefix,
                       std::vector<NamedArray>& out) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({prefix + ".m." + std::to_string(i), params[i].shape(),
                   to_float(std::span<const T>(opt.first_moment[i]))});
    out.push_back({prefix + ".v." + std::to_string(i), params[i].shape(),
                   to_float(std::span<const T>(opt.second_moment[i]))});
  }
}

class ArrayCursor {
public:
  explicit ArrayCursor(const std::vector<NamedArray>& arrays) : arrays_(arrays) {}

  const NamedArray& next(const std::string& name, const Shape& shape) {
    if (pos_ >= arrays_.size()) throw DataError("checkpoint: missing array " + name);
    const NamedArray& a = arrays_[pos_++];
    if (a.name != name) throw DataError("checkpoint: expected array " + name + ", found " + a.name);
    if (a.shape != shape) {
      throw DataError("checkpoint: array " + name + " has shape " + to_string(a.shape) + ", model needs " +
                      to_string(shape));
    }
    return a;
  }

  bool done() const { return pos_ == arrays_.size(); }

private:
  const std::vector<NamedArray>& arrays_;
  std::size_t pos_ = 0;
};

template <class T>
void copy_into(std::span<T> dst, const std::vector<float>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
}

template <class T>
void restore_network(Network<T>& net, const std::string& prefix, ArrayCursor& cur) {
  for (auto& l : net.layers()) {
    const std::string base = prefix + "." + l.name + ".";
    copy_into(l.weight.data(), cur.next(base + "weight", l.weight.shape()).values);
    if (l.normalized) {
      copy_into(l.gamma.data(), cur.next(base + "gamma", l.gamma.shape()).values);
      copy_into(l.beta.data(), cur.next(base + "beta", l.beta.shape()).values);
      copy_into(std::span<T>(l.stats.running_mean), cur.next(base + "running_mean", Shape{l.out_channels}).values);
      copy_into(std::span<T>(l.stats.running_var), cur.next(base + "running_var", Shape{l.out_channels}).values);
    } else {
      copy_into(l.bias.data(), cur.next(base + "bias", l.bias.shape()).values);
    }
  }
}

template <class T>
void restore_optimizer(const Network<T>& net, OptimizerState<T>& opt, const std::string& prefix, ArrayCursor& cur) {
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    copy_into(std::span<T>(opt.first_moment[i]), cur.next(prefix + ".m." + std::to_string(i), params[i].shape()).values);
    copy_into(std::span<T>(opt.second_moment[i]), cur.next(prefix + ".v." + std::to_string(i), params[i].shape()).values);
  }
}

}  // namespace detail

template <class T>
Checkpoint capture(const GanModel<T>& m, double val_l1) {
  Checkpoint c;
  c.config = m.config;
  c.gen_steps = m.gen_opt.step_count;
  c.disc_steps = m.disc_opt.step_count;
  c.epoch = m.epoch;
  c.val_l1 = val_l1;
  detail::collect_network(m.generator, "generator", c.arrays);
  detail::collect_network(m.discriminator, "discriminator", c.arrays);
  detail::collect_optimizer(m.generator, m.gen_opt, "generator_adam", c.arrays);
  detail::collect_optimizer(m.discriminator, m.disc_opt, "discriminator_adam", c.arrays);
  return c;
}

template <class T = float>
GanModel<T> restore(const Checkpoint& c) {
  GanModel<T> m(c.config, 0);
  detail::ArrayCursor cur(c.arrays);
  detail::restore_network(m.generator, "generator", cur);
  detail::restore_network(m.discriminator, "discriminator", cur);
  detail::restore_optimizer(m.generator, m.gen_opt, "generator_adam", cur);
  detail::restore_optimizer(m.discriminator, m.disc_opt, "discriminator_adam", cur);
  if (!cur.done()) throw DataError("checkpoint: unexpected trailing arrays");
  m.gen_opt.step_count = c.gen_steps;
  m.disc_opt.step_count = c.disc_steps;
  m.epoch = c.epoch;
  return m;
}

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline double parse_double_field(const std::string& s, const std::string& key) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("checkpoint: bad value for " + key + ": '" + s + "'");
  }
}

inline std::uint64_t parse_uint_field(const std::string& s, const std::string& key) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw DataError("checkpoint: bad value for " + key + ": '" + s + "'");
  return std::stoull(s);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  std::ostringstream h;
  const auto& g = c.config;
  h << kCheckpointMagic << '\n'
    << "version " << kCheckpointVersion << '\n'
    << "depth " << g.depth << '\n'
    << "base_channels " << g.base_channels << '\n'
    << "input_size " << g.input_size << '\n'
    << "image_channels " << g.image_channels << '\n'
    << "target_channels " << g.target_channels << '\n'
    << "skip_connections " << (g.skip_connections ? 1 : 0) << '\n'
    << "disc_depth " << g.disc_depth << '\n'
    << "disc_base_channels " << g.disc_base_channels << '\n'
    << "conditioning " << to_string(g.conditioning) << '\n'
    << "noise " << to_string(g.noise) << '\n'
    << "adam_lr " << detail::format_double(g.adam.learning_rate) << '\n'
    << "adam_beta1 " << detail::format_double(g.adam.beta1) << '\n'
    << "adam_beta2 " << detail::format_double(g.adam.beta2) << '\n'
    << "adam_epsilon " << detail::format_double(g.adam.epsilon) << '\n'
    << "gen_steps " << c.gen_steps << '\n'
    << "disc_steps " << c.disc_steps << '\n'
    << "epoch " << c.epoch << '\n'
    << "val_l1 " << (std::isnan(c.val_l1) ? std::string("nan") : detail::format_double(c.val_l1)) << '\n'
    << "arrays " << c.arrays.size() << '\n';
  for (const auto& a : c.arrays) {
    h << a.name << ' ' << a.shape.size();
    for (auto d : a.shape) h << ' ' << d;
    h << '\n';
  }
  h << "data\n";
  const std::string header = h.str();
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (const auto& a : c.arrays) {
    for (float f : a.values) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto line = [&]() {
    std::string s;
    while (pos < bytes.size() && bytes[pos] != '\n') s.push_back(static_cast<char>(bytes[pos++]));
    if (pos >= bytes.size()) throw DataError("checkpoint: truncated header");
    ++pos;
    return s;
  };
  auto field = [&](const std::string& key) {
    const std::string s = line();
    if (s.rfind(key + " ", 0) != 0) throw DataError("checkpoint: expected field '" + key + "', got '" + s + "'");
    return s.substr(key.size() + 1);
  };
  if (line() != kCheckpointMagic) throw DataError("checkpoint: bad magic");
  if (detail::parse_uint_field(field("version"), "version") != static_cast<std::uint64_t>(kCheckpointVersion))
    throw DataError("checkpoint: unsupported format version");
  Checkpoint c;
  auto& g = c.config;
  auto u = [&](const char* key) { return static_cast<std::size_t>(detail::parse_uint_field(field(key), key)); };
  auto d = [&](const char* key) { return detail::parse_double_field(field(key), key); };
  g.depth = u("depth");
  g.base_channels = u("base_channels");
  g.input_size = u("input_size");
  g.image_channels = u("image_channels");
  g.target_channels = u("target_channels");
  g.skip_connections = u("skip_connections") != 0;
  g.disc_depth = u("disc_depth");
  g.disc_base_channels = u("disc_base_channels");
  try {
    g.conditioning = parse_conditioning(field("conditioning"));
    g.noise = parse_noise_mode(field("noise"));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  g.adam.learning_rate = d("adam_lr");
  g.adam.beta1 = d("adam_beta1");
  g.adam.beta2 = d("adam_beta2");
  g.adam.epsilon = d("adam_epsilon");
  c.gen_steps = u("gen_steps");
  c.disc_steps = u("disc_steps");
  c.epoch = u("epoch");
  c.val_l1 = d("val_l1");
  const std::size_t n = u("arrays");
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream ls(line());
    NamedArray a;
    std::size_t rank = 0;
    if (!(ls >> a.name >> rank) || rank == 0 || rank > 8) throw DataError("checkpoint: bad array table entry");
    a.shape.resize(rank);
    for (auto& dim : a.shape)
      if (!(ls >> dim) || dim == 0) throw DataError("checkpoint: bad shape for " + a.name);
    a.values.resize(shape_size(a.shape));
    total += a.values.size();
    c.arrays.push_back(std::move(a));
  }
  if (line() != "data") throw DataError("checkpoint: missing data marker");
  if (bytes.size() - pos != total * 4) {
    throw DataError("checkpoint: payload is " + std::to_string(bytes.size() - pos) + " bytes, header declares " +
                    std::to_string(total * 4));
  }
  for (auto& a : c.arrays) {
    for (auto& f : a.values) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * b);
      f = std::bit_cast<float>(bits);
    }
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_bytes(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace cgseg
