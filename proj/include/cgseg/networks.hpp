#pragma once

// U-Net generator, patch discriminator and the layer stack they share.

#include <cgseg/ops.hpp>

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace cgseg {

/// Encoder layer `encoder` feeds its activation into the input of the decoder
/// layer that follows decoder layer `decoder` (both 1-based).
struct SkipPair {
  std::size_t encoder = 0;
  std::size_t decoder = 0;
  bool operator==(const SkipPair&) const = default;
};

struct NetSpec {
  std::size_t depth = 5;
  std::size_t base_channels = 16;
  std::size_t input_size = 32;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::vector<SkipPair> skip_pairs;

  std::size_t bottleneck_size() const { return depth < 64 ? input_size >> depth : 0; }
  bool operator==(const NetSpec&) const = default;
};

/// Pairs every encoder layer with the decoder layer of equal resolution.
inline std::vector<SkipPair> mirror_skips(std::size_t depth) {
  std::vector<SkipPair> pairs;
  for (std::size_t e = 1; e < depth; ++e) pairs.push_back({e, depth - e});
  return pairs;
}

/// 32x32 five-level generator used for CPU-scale experiments.
inline NetSpec desk_generator_spec() { return {5, 16, 32, 1, 1, mirror_skips(5)}; }

/// 512x512 nine-level generator; encoder layer 1 pairs with decoder layer 8.
inline NetSpec full_scale_generator_spec() { return {9, 64, 512, 1, 1, mirror_skips(9)}; }

/// Channel width of encoder layer i (1-based): base * min(2^(i-1), 8).
inline std::size_t encoder_channels(const NetSpec& spec, std::size_t i) {
  return spec.base_channels * std::min<std::size_t>(std::size_t{1} << std::min<std::size_t>(i - 1, 3), 8);
}

inline void validate_generator_spec(const NetSpec& s) {
  if (s.depth == 0 || s.depth > 16) throw std::invalid_argument("generator depth must be in [1,16]");
  if (s.base_channels == 0 || s.in_channels == 0) throw std::invalid_argument("channel counts must be positive");
  if (s.out_channels != 1 && s.out_channels != 3) throw std::invalid_argument("generator output must have 1 or 3 channels");
  const std::size_t factor = std::size_t{1} << s.depth;
  if (s.input_size < factor || s.input_size % factor != 0) {
    throw std::invalid_argument("input size " + std::to_string(s.input_size) + " is not a positive multiple of 2^" +
                                std::to_string(s.depth));
  }
  std::vector<bool> used(s.depth + 1, false);
  for (const auto& p : s.skip_pairs) {
    if (p.encoder == 0 || p.decoder == 0 || p.decoder >= s.depth || p.encoder >= s.depth) {
      throw std::invalid_argument("skip pair (" + std::to_string(p.encoder) + "," + std::to_string(p.decoder) +
                                  ") out of range for depth " + std::to_string(s.depth));
    }
    if (p.encoder + p.decoder != s.depth) {
      throw std::invalid_argument("skip pair (" + std::to_string(p.encoder) + "," + std::to_string(p.decoder) +
                                  ") joins layers of different resolution");
    }
    if (used[p.decoder]) throw std::invalid_argument("duplicate skip into decoder layer " + std::to_string(p.decoder));
    used[p.decoder] = true;
  }
}

inline void validate_discriminator_spec(const NetSpec& s) {
  if (s.depth > 16) throw std::invalid_argument("discriminator depth must be at most 16");
  if (s.base_channels == 0 || s.in_channels == 0) throw std::invalid_argument("channel counts must be positive");
  if (s.out_channels != 1) throw std::invalid_argument("discriminator emits a single real/fake map");
  if (!s.skip_pairs.empty()) throw std::invalid_argument("discriminator has no skip connections");
  const std::size_t factor = std::size_t{1} << (s.depth + 1);
  if (s.input_size < factor || s.input_size % factor != 0) {
    throw std::invalid_argument("discriminator input size " + std::to_string(s.input_size) +
                                " is not a positive multiple of 2^" + std::to_string(s.depth + 1));
  }
}

enum class LayerKind { conv, deconv };
enum class NetRole { generator, discriminator };

/// 4x4 stride-2 (de)convolution, then batch norm or bias, then activation.
template <class T>
struct Layer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t padding = 1;
  bool normalized = false;
  Activation act;
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> stats;

  Tensor<T> forward(const Tensor<T>& x, NormMode mode) {
    Tensor<T> h = kind == LayerKind::conv ? conv2d(x, weight, stride, padding) : deconv2d(x, weight, stride, padding);
    if (normalized) {
      h = mode == NormMode::train ? batch_norm(h, gamma, beta, stats, NormMode::train)
                                  : batch_norm(h, gamma, beta, std::as_const(stats));
    } else {
      h = add_channel_bias(h, bias);
    }
    return activation(h, act);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = kind == LayerKind::conv ? conv2d(x, weight, stride, padding) : deconv2d(x, weight, stride, padding);
    h = normalized ? batch_norm(h, gamma, beta, stats) : add_channel_bias(h, bias);
    return activation(h, act);
  }

  std::vector<Tensor<T>> parameters() const {
    if (normalized) return {weight, gamma, beta};
    return {weight, bias};
  }
};

struct ForwardOptions {
  /// Replace the innermost encoder activation by zeros before decoding, leaving
  /// only the skip pathways to carry information.
  bool zero_bottleneck = false;
};

template <class T>
class Network {
public:
  Network(NetRole role, NetSpec spec, std::uint64_t seed) : role_(role), spec_(std::move(spec)) {
    if (role_ == NetRole::generator) {
      validate_generator_spec(spec_);
      build_generator_layers();
    } else {
      validate_discriminator_spec(spec_);
      build_discriminator_layers();
    }
    initialize(seed);
  }

  NetRole role() const { return role_; }
  const NetSpec& spec() const { return spec_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  /// Learnable tensors in a fixed order (weight, then bias or gamma/beta, per layer).
  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& l : layers_)
      for (auto& p : l.parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.size();
    return n;
  }

  /// Differentiable forward pass. `trace`, if given, receives every layer output in order.
  Tensor<T> forward(const Tensor<T>& x, NormMode mode, ForwardOptions opts = {},
                    std::vector<Tensor<T>>* trace = nullptr) {
    return run(x, opts, trace, [&](std::size_t i, const Tensor<T>& h) { return layers_[i].forward(h, mode); });
  }

  /// Eval-mode forward with graph recording off. Safe to call concurrently.
  Tensor<T> predict(const Tensor<T>& x, ForwardOptions opts = {}, std::vector<Tensor<T>>* trace = nullptr) const {
    NoGradGuard guard;
    return run(x, opts, trace, [&](std::size_t i, const Tensor<T>& h) { return layers_[i].forward(h); });
  }

private:
  template <class Apply>
  Tensor<T> run(const Tensor<T>& x, ForwardOptions opts, std::vector<Tensor<T>>* trace, Apply&& apply) const {
    if (x.rank() != 4 || x.dim(1) != spec_.in_channels || x.dim(2) != spec_.input_size ||
        x.dim(3) != spec_.input_size) {
      throw ShapeError("network expects Nx" + std::to_string(spec_.in_channels) + "x" +
                       std::to_string(spec_.input_size) + "x" + std::to_string(spec_.input_size) + " input, got " +
                       to_string(x.shape()));
    }
    auto record = [&](const Tensor<T>& t) {
      if (trace) trace->push_back(t);
    };
    if (role_ == NetRole::discriminator) {
      Tensor<T> h = x;
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = apply(i, h);
        record(h);
      }
      return h;
    }
    const std::size_t depth = spec_.depth;
    std::vector<Tensor<T>> encoded;
    encoded.reserve(depth);
    Tensor<T> h = x;
    for (std::size_t i = 0; i < depth; ++i) {
      h = apply(i, h);
      encoded.push_back(h);
      record(h);
    }
    if (opts.zero_bottleneck) h = Tensor<T>(h.shape());
    for (std::size_t j = 1; j <= depth; ++j) {
      if (j > 1 && skip_source_[j - 1] != 0) h = concat_channels(h, encoded[skip_source_[j - 1] - 1]);
      h = apply(depth + j - 1, h);
      record(h);
    }
    return h;
  }

  Layer<T> make_layer(std::string name, LayerKind kind, std::size_t in, std::size_t out, bool normalized,
                      Activation act) {
    Layer<T> l;
    l.name = std::move(name);
    l.kind = kind;
    l.in_channels = in;
    l.out_channels = out;
    l.normalized = normalized;
    l.act = act;
    l.weight = kind == LayerKind::conv ? Tensor<T>(Shape{out, in, 4, 4}, T{0}, true)
                                       : Tensor<T>(Shape{in, out, 4, 4}, T{0}, true);
    if (normalized) {
      l.gamma = Tensor<T>(Shape{out}, T{1}, true);
      l.beta = Tensor<T>(Shape{out}, T{0}, true);
      l.stats = BatchNormState<T>(out);
    } else {
      l.bias = Tensor<T>(Shape{out}, T{0}, true);
    }
    return l;
  }

  void build_generator_layers() {
    const std::size_t depth = spec_.depth;
    skip_source_.assign(depth + 1, 0);
    for (const auto& p : spec_.skip_pairs) skip_source_[p.decoder] = p.encoder;

    std::size_t in = spec_.in_channels;
    for (std::size_t i = 1; i <= depth; ++i) {
      const std::size_t out = encoder_channels(spec_, i);
      // The outermost layer sees raw pixels and the innermost one collapses to
      // the bottleneck; neither is normalized.
      const bool norm = i > 1 && i < depth;
      layers_.push_back(make_layer("encoder_" + two_digits(i), LayerKind::conv, in, out, norm, Activation::leaky_relu(0.2)));
      in = out;
    }
    for (std::size_t j = 1; j <= depth; ++j) {
      if (j > 1 && skip_source_[j - 1] != 0) in += encoder_channels(spec_, skip_source_[j - 1]);
      const bool last = j == depth;
      const std::size_t out = last ? spec_.out_channels : encoder_channels(spec_, depth - j);
      layers_.push_back(make_layer("decoder_" + two_digits(j), LayerKind::deconv, in, out, !last,
                                   last ? Activation::tanh() : Activation::relu()));
      in = out;
    }
  }

  void build_discriminator_layers() {
    std::size_t in = spec_.in_channels;
    for (std::size_t i = 1; i <= spec_.depth; ++i) {
      const std::size_t out = encoder_channels(spec_, i);
      layers_.push_back(make_layer("conv_" + two_digits(i), LayerKind::conv, in, out, i > 1, Activation::leaky_relu(0.2)));
      in = out;
    }
    layers_.push_back(make_layer("output", LayerKind::conv, in, 1, false, Activation::sigmoid()));
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& l : layers_)
      for (auto& w : l.weight.data()) w = static_cast<T>(normal(rng));
  }

  static std::string two_digits(std::size_t i) { return (i < 10 ? "0" : "") + std::to_string(i); }

  NetRole role_;
  NetSpec spec_;
  std::vector<Layer<T>> layers_;
  std::vector<std::size_t> skip_source_;  // decoder index -> encoder index, 0 = none
};

template <class T = float>
Network<T> build_generator(const NetSpec& spec, std::uint64_t seed = 0) {
  return Network<T>(NetRole::generator, spec, seed);
}

template <class T = float>
Network<T> build_discriminator(const NetSpec& spec, std::uint64_t seed = 0) {
  return Network<T>(NetRole::discriminator, spec, seed);
}

}  // namespace cgseg
