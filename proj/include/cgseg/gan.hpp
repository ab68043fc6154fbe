#pragma once

// Conditional GAN: generator/discriminator pair, the adversarial objectives
// and single-image inference.

#include <cgseg/dataset.hpp>
#include <cgseg/networks.hpp>
#include <cgseg/optim.hpp>

#include <filesystem>
#include <random>

namespace cgseg {

/// Which networks see the conditioning image x.
enum class Conditioning {
  unconditional,   // G(z), D(y)
  generator_only,  // G(z, x), D(y)
  both,            // G(z, x), D(y, x)
};

enum class NoiseMode { none, channel };

enum class GeneratorLossForm {
  non_saturating,  // -log D(G(x))
  saturating,      // log(1 - D(G(x)))
};

inline std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::unconditional: return "unconditional";
    case Conditioning::generator_only: return "generator";
    case Conditioning::both: return "both";
  }
  return "?";
}

inline Conditioning parse_conditioning(const std::string& s) {
  if (s == "unconditional") return Conditioning::unconditional;
  if (s == "generator") return Conditioning::generator_only;
  if (s == "both") return Conditioning::both;
  throw std::invalid_argument("unknown conditioning '" + s + "' (unconditional|generator|both)");
}

inline std::string to_string(NoiseMode m) { return m == NoiseMode::none ? "none" : "channel"; }

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "none") return NoiseMode::none;
  if (s == "channel") return NoiseMode::channel;
  throw std::invalid_argument("unknown noise mode '" + s + "' (none|channel)");
}

inline std::string to_string(GeneratorLossForm f) {
  return f == GeneratorLossForm::non_saturating ? "non_saturating" : "saturating";
}

inline GeneratorLossForm parse_generator_loss(const std::string& s) {
  if (s == "non_saturating") return GeneratorLossForm::non_saturating;
  if (s == "saturating") return GeneratorLossForm::saturating;
  throw std::invalid_argument("unknown generator loss '" + s + "' (non_saturating|saturating)");
}

/// Draws the z input as a standard-normal image channel.
class NoiseSource {
public:
  NoiseSource(std::uint64_t seed, NoiseMode mode) : seed_(seed), mode_(mode), rng_(seed) {}

  std::uint64_t seed() const { return seed_; }
  NoiseMode mode() const { return mode_; }

  template <class T>
  Tensor<T> draw(std::size_t batch, std::size_t height, std::size_t width) {
    Tensor<T> z(Shape{batch, 1, height, width});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : z.data()) v = static_cast<T>(normal(rng_));
    return z;
  }

private:
  std::uint64_t seed_;
  NoiseMode mode_;
  std::mt19937_64 rng_;
};

/// Architecture and optimizer settings of a generator/discriminator pair.
struct GanConfig {
  std::size_t depth = 5;
  std::size_t base_channels = 16;
  std::size_t input_size = 32;
  std::size_t image_channels = 1;   // channels of x
  std::size_t target_channels = 1;  // channels of y
  bool skip_connections = true;
  std::size_t disc_depth = 3;
  std::size_t disc_base_channels = 16;
  Conditioning conditioning = Conditioning::both;
  NoiseMode noise = NoiseMode::none;
  AdamConfig adam;

  bool uses_noise() const { return noise == NoiseMode::channel || conditioning == Conditioning::unconditional; }

  NetSpec generator_spec() const {
    NetSpec s;
    s.depth = depth;
    s.base_channels = base_channels;
    s.input_size = input_size;
    s.in_channels = (conditioning == Conditioning::unconditional ? 0 : image_channels) + (uses_noise() ? 1 : 0);
    s.out_channels = target_channels;
    if (skip_connections) s.skip_pairs = mirror_skips(depth);
    return s;
  }

  NetSpec discriminator_spec() const {
    NetSpec s;
    s.depth = disc_depth;
    s.base_channels = disc_base_channels;
    s.input_size = input_size;
    s.in_channels = target_channels + (conditioning == Conditioning::both ? image_channels : 0);
    s.out_channels = 1;
    return s;
  }

  bool operator==(const GanConfig& o) const {
    return depth == o.depth && base_channels == o.base_channels && input_size == o.input_size &&
           image_channels == o.image_channels && target_channels == o.target_channels &&
           skip_connections == o.skip_connections && disc_depth == o.disc_depth &&
           disc_base_channels == o.disc_base_channels && conditioning == o.conditioning && noise == o.noise &&
           adam.learning_rate == o.adam.learning_rate && adam.beta1 == o.adam.beta1 && adam.beta2 == o.adam.beta2 &&
           adam.epsilon == o.adam.epsilon;
  }
};

template <class T = float>
struct GanModel {
  GanConfig config;
  Network<T> generator;
  Network<T> discriminator;
  OptimizerState<T> gen_opt;
  OptimizerState<T> disc_opt;
  std::size_t epoch = 0;  // epochs trained so far

  GanModel(const GanConfig& cfg, std::uint64_t seed)
      : config(cfg),
        generator(NetRole::generator, cfg.generator_spec(), seed),
        discriminator(NetRole::discriminator, cfg.discriminator_spec(), seed ^ 0x9e3779b97f4a7c15ULL),
        gen_opt(make_adam_state(generator.parameters(), cfg.adam)),
        disc_opt(make_adam_state(discriminator.parameters(), cfg.adam)) {
    if (cfg.image_channels != 1 && cfg.image_channels != 3) throw std::invalid_argument("image channels must be 1 or 3");
  }
};

template <class T>
Tensor<T> ones_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape(), T{1});
}

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape(), T{0});
}

/// Assembles G's input: x (unless unconditional) followed by a noise channel (if used).
template <class T>
Tensor<T> generator_input(const GanConfig& cfg, const Tensor<T>& x, NoiseSource& z) {
  if (cfg.conditioning == Conditioning::unconditional) return z.draw<T>(x.dim(0), x.dim(2), x.dim(3));
  if (cfg.uses_noise()) return concat_channels(x, z.draw<T>(x.dim(0), x.dim(2), x.dim(3)));
  return x;
}

/// Assembles D's input: (x, image) when D is conditioned, the image alone otherwise.
template <class T>
Tensor<T> discriminator_input(const GanConfig& cfg, const Tensor<T>& image, const Tensor<T>& x) {
  return cfg.conditioning == Conditioning::both ? concat_channels(x, image) : image;
}

/// -[mean log D(real) + mean log(1 - D(fake))]; `fake` should already be detached from G.
template <class T>
Tensor<T> discriminator_loss(GanModel<T>& m, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& fake,
                             NormMode mode) {
  Tensor<T> real_p = m.discriminator.forward(discriminator_input(m.config, y, x), mode);
  Tensor<T> fake_p = m.discriminator.forward(discriminator_input(m.config, fake, x), mode);
  return add(bce(real_p, ones_like(real_p)), bce(fake_p, zeros_like(fake_p)));
}

/// Adversarial term on `fake` plus lambda_l1 * L1(fake, y).
template <class T>
Tensor<T> generator_loss(GanModel<T>& m, const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& fake,
                         double lambda_l1, GeneratorLossForm form, NormMode mode) {
  Tensor<T> p = m.discriminator.forward(discriminator_input(m.config, fake, x), mode);
  Tensor<T> adv = form == GeneratorLossForm::non_saturating ? bce(p, ones_like(p)) : scale(bce(p, zeros_like(p)), T{-1});
  if (lambda_l1 == 0.0) return adv;
  return add(adv, scale(l1(fake, y), static_cast<T>(lambda_l1)));
}

template <class T>
struct ObjectiveTerms {
  Tensor<T> d_loss;
  Tensor<T> g_loss;
  double value = 0.0;      // mean log D(real) + mean log(1 - D(fake)), the quantity D maximizes
  double d_real = 0.0;     // mean D output on real pairs
  double d_fake = 0.0;     // mean D output on generated pairs
};

/// Evaluates both players' losses on one minibatch without updating anything.
template <class T>
ObjectiveTerms<T> objective_terms(GanModel<T>& m, const Tensor<T>& x, const Tensor<T>& y, NoiseSource& z,
                                  double lambda_l1, GeneratorLossForm form, NormMode mode) {
  Tensor<T> fake = m.generator.forward(generator_input(m.config, x, z), mode);
  ObjectiveTerms<T> terms;
  {
    NoGradGuard guard;
    const auto real_p = m.discriminator.predict(discriminator_input(m.config, y, x));
    const auto fake_p = m.discriminator.predict(discriminator_input(m.config, fake.detach(), x));
    for (auto v : real_p.data()) terms.d_real += static_cast<double>(v);
    for (auto v : fake_p.data()) terms.d_fake += static_cast<double>(v);
    terms.d_real /= static_cast<double>(real_p.size());
    terms.d_fake /= static_cast<double>(fake_p.size());
  }
  terms.d_loss = discriminator_loss(m, x, y, fake.detach(), mode);
  terms.g_loss = generator_loss(m, x, y, fake, lambda_l1, form, mode);
  terms.value = -static_cast<double>(terms.d_loss.item());
  return terms;
}

template <class T>
ObjectiveTerms<T> objective_terms(GanModel<T>& m, std::span<const PairedSample> batch, NoiseSource& z,
                                  double lambda_l1, GeneratorLossForm form, NormMode mode) {
  if (batch.empty()) throw std::invalid_argument("objective_terms: empty batch");
  std::vector<const Image*> xs, ys;
  for (const auto& s : batch) {
    xs.push_back(&s.input);
    ys.push_back(&s.target);
  }
  return objective_terms(m, batch_to_tensor<T>(xs), batch_to_tensor<T>(ys), z, lambda_l1, form, mode);
}

/// Runs G in eval mode on one image (resized to the model resolution) and maps the result to 8 bits.
template <class T>
Image infer(const GanModel<T>& m, const Image& input, ForwardOptions opts = {}) {
  const auto& cfg = m.config;
  if (input.channels != cfg.image_channels) {
    throw std::invalid_argument("infer: model expects " + std::to_string(cfg.image_channels) + "-channel input, got " +
                                std::to_string(input.channels));
  }
  const Image sized = resize(input, cfg.input_size, cfg.input_size);
  if (sized.width != cfg.input_size || sized.height != cfg.input_size) {
    throw std::invalid_argument("infer: resolution mismatch after resize");
  }
  NoiseSource z(0, cfg.noise);
  Tensor<T> gin = generator_input(cfg, image_to_tensor<T>(sized), z);
  return tensor_to_image(m.generator.predict(gin, opts));
}

/// Foreground where the generated mask exceeds half range.
template <class T>
Mask predict_mask(const GanModel<T>& m, const Image& input) {
  Image out = infer(m, input);
  return binarize(to_gray(out), 127.5);
}

/// Mean |G(x) - y| over all pixels and samples, in [-1, 1] units, eval mode.
template <class T>
double generator_l1(const GanModel<T>& m, const std::vector<PairedSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("generator_l1: empty sample set");
  double total = 0.0;
  std::size_t count = 0;
  NoiseSource z(0, m.config.noise);
  for (const auto& s : samples) {
    Tensor<T> x = image_to_tensor<T>(s.input);
    Tensor<T> y = image_to_tensor<T>(s.target);
    Tensor<T> out = m.generator.predict(generator_input(m.config, x, z));
    if (out.shape() != y.shape()) {
      throw ShapeError("generator_l1: output " + to_string(out.shape()) + " vs target " + to_string(y.shape()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) total += std::abs(static_cast<double>(out[i]) - static_cast<double>(y[i]));
    count += out.size();
  }
  return total / static_cast<double>(count);
}

/// Writes every generator layer's activation as a grayscale grid of its
/// channels (min-max normalized per layer). Returns the written paths.
template <class T>
std::vector<std::filesystem::path> dump_latent_activations(const GanModel<T>& m, const Image& input,
                                                           const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw DataError("cannot create directory " + out_dir.string());
  const Image sized = resize(input, m.config.input_size, m.config.input_size);
  NoiseSource z(0, m.config.noise);
  std::vector<Tensor<T>> trace;
  m.generator.predict(generator_input(m.config, image_to_tensor<T>(sized), z), {}, &trace);

  std::vector<std::filesystem::path> written;
  const auto& layers = m.generator.layers();
  for (std::size_t li = 0; li < trace.size(); ++li) {
    const Tensor<T>& a = trace[li];
    const std::size_t c = a.dim(1), h = a.dim(2), w = a.dim(3);
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c))));
    const std::size_t rows = (c + cols - 1) / cols;
    T lo = a[0], hi = a[0];
    for (std::size_t i = 0; i < c * h * w; ++i) {
      lo = std::min(lo, a[i]);
      hi = std::max(hi, a[i]);
    }
    Image grid(cols * w, rows * h, 1);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t ox = (ch % cols) * w, oy = (ch / cols) * h;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double v = hi > lo ? (static_cast<double>(a[(ch * h + y) * w + x]) - lo) / (static_cast<double>(hi) - lo) : 0.0;
          grid.at(ox + x, oy + y) = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    const auto path = out_dir / (layers[li].name + ".pgm");
    write_pnm(path, grid);
    written.push_back(path);
  }
  return written;
}

}  // namespace cgseg
