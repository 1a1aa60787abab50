#include "xumx/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "xumx/error.hpp"
#include "xumx/random.hpp"

namespace xumx {

void NetConfig::validate() const {
  if (sources < 2) throw ConfigError("model: at least 2 sources are required");
  if (hidden_size < 1) throw ConfigError("model: hidden_size must be >= 1");
  if (recurrent_layers < 1) throw ConfigError("model: recurrent_layers must be >= 1");
  if (input_bins < 1) throw ConfigError("model: input_bins must be >= 1");
}

NormStats NormStats::identity(std::size_t bins) {
  return NormStats{std::vector<double>(bins, 0.0), std::vector<double>(bins, 1.0)};
}

NormStats NormStats::from_spectrograms(std::span<const MagnitudeSpectrogram> specs) {
  if (specs.empty()) throw Error("normalisation: no spectrograms");
  const std::size_t bins = specs.front().bins();
  std::vector<double> sum(bins, 0.0), sq(bins, 0.0);
  std::size_t frames = 0;
  for (const auto& s : specs) {
    if (s.bins() != bins) throw ShapeError("normalisation: inconsistent bin counts");
    for (std::size_t t = 0; t < s.frames(); ++t)
      for (std::size_t f = 0; f < bins; ++f) {
        const double v = s.data.at(t, f);
        sum[f] += v;
        sq[f] += v * v;
      }
    frames += s.frames();
  }
  NormStats stats{std::vector<double>(bins), std::vector<double>(bins)};
  double avg_std = 0.0;
  for (std::size_t f = 0; f < bins; ++f) {
    const double m = sum[f] / static_cast<double>(frames);
    const double var = std::max(0.0, sq[f] / static_cast<double>(frames) - m * m);
    stats.mean[f] = m;
    stats.std[f] = std::sqrt(var);
    avg_std += stats.std[f];
  }
  avg_std /= static_cast<double>(bins);
  const double floor = std::max(1e-3 * avg_std, 1e-12);
  for (std::size_t f = 0; f < bins; ++f) {
    stats.mean[f] = static_cast<float>(stats.mean[f]);
    stats.std[f] = static_cast<float>(std::max(stats.std[f], floor));
  }
  return stats;
}

void ModelParams::add(std::string name, Tensor value) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  layers_.push_back(Layer{std::move(name), std::move(value)});
}

bool ModelParams::contains(std::string_view name) const {
  return std::any_of(layers_.begin(), layers_.end(),
                     [&](const Layer& l) { return l.name == name; });
}

const Tensor& ModelParams::get(std::string_view name) const {
  for (const auto& l : layers_)
    if (l.name == name) return l.value;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

Tensor& ModelParams::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

bool ModelParams::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.value.all_finite(); });
}

std::size_t param_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& l : params.layers()) n += l.value.size();
  return n;
}

std::string source_prefix(std::size_t j) { return "source" + std::to_string(j) + "."; }
std::string encoder_weight_name(std::size_t j) { return source_prefix(j) + "encoder.weight"; }
std::string encoder_bias_name(std::size_t j) { return source_prefix(j) + "encoder.bias"; }
std::string rnn_input_weight_name(std::size_t j, std::size_t layer) {
  return source_prefix(j) + "rnn" + std::to_string(layer) + ".weight_ih";
}
std::string rnn_hidden_weight_name(std::size_t j, std::size_t layer) {
  return source_prefix(j) + "rnn" + std::to_string(layer) + ".weight_hh";
}
std::string rnn_bias_name(std::size_t j, std::size_t layer) {
  return source_prefix(j) + "rnn" + std::to_string(layer) + ".bias";
}
std::string decoder_weight_name(std::size_t j) { return source_prefix(j) + "decoder.weight"; }
std::string decoder_bias_name(std::size_t j) { return source_prefix(j) + "decoder.bias"; }

ModelParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  auto uniform_tensor = [&rng](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uniform(rng, -bound, bound);
    return t;
  };
  const std::size_t F = cfg.input_bins, H = cfg.hidden_size;
  ModelParams params;
  for (std::size_t j = 0; j < cfg.sources; ++j) {
    params.add(encoder_weight_name(j), uniform_tensor({H, F}, F));
    params.add(encoder_bias_name(j), uniform_tensor({H}, F));
    for (std::size_t l = 0; l < cfg.recurrent_layers; ++l) {
      params.add(rnn_input_weight_name(j, l), uniform_tensor({H, H}, H));
      params.add(rnn_hidden_weight_name(j, l), uniform_tensor({H, H}, H));
      params.add(rnn_bias_name(j, l), uniform_tensor({H}, H));
    }
    params.add(decoder_weight_name(j), uniform_tensor({F, H}, H));
    Tensor decoder_bias = uniform_tensor({F}, H);
    for (double& v : decoder_bias.values()) v += decoder_bias_offset(cfg.sources);
    params.add(decoder_bias_name(j), std::move(decoder_bias));
  }
  round_to_storage(params);
  return params;
}

void round_to_storage(ModelParams& params) {
  for (auto& l : params.layers())
    for (double& v : l.value.values()) v = static_cast<float>(v);
}

ParamBinding::ParamBinding(Tape& tape, const ModelParams& params, bool trainable)
    : params_(&params) {
  vars_.reserve(params.layers().size());
  for (const auto& l : params.layers())
    vars_.push_back(trainable ? tape.parameter(l.value) : tape.constant(l.value));
}

ParamBinding::ParamBinding(const ModelParams& layout, std::vector<Var> vars)
    : params_(&layout), vars_(std::move(vars)) {
  if (vars_.size() != layout.layers().size())
    throw Error("ParamBinding: expected " + std::to_string(layout.layers().size()) + " vars, got " +
                std::to_string(vars_.size()));
  for (std::size_t i = 0; i < vars_.size(); ++i)
    require_same_shape(vars_[i].value(), layout.layers()[i].value, "ParamBinding");
}

const Var& ParamBinding::operator[](std::string_view name) const {
  const auto& layers = params_->layers();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return vars_[i];
  throw Error("unknown parameter '" + std::string(name) + "'");
}

Tensor normalize_input(const Tensor& magnitude, const NormStats& stats) {
  require_rank(magnitude, 2, "normalize_input");
  const std::size_t T = magnitude.dim(0), F = magnitude.dim(1);
  if (stats.bins() != F) {
    throw ShapeError("normalize_input: statistics cover " + std::to_string(stats.bins()) +
                     " bins, spectrogram has " + std::to_string(F));
  }
  Tensor out(Shape{T, F});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t f = 0; f < F; ++f)
      out.at(t, f) = (magnitude.at(t, f) - stats.mean[f]) / stats.std[f];
  return out;
}

std::vector<Var> forward(const ParamBinding& params, const NetConfig& cfg, const Var& input) {
  cfg.validate();
  require_rank(input.value(), 2, "forward");
  if (input.value().dim(1) != cfg.input_bins) {
    throw ShapeError("forward: input has " + std::to_string(input.value().dim(1)) +
                     " bins, network expects " + std::to_string(cfg.input_bins));
  }
  const std::size_t J = cfg.sources;

  std::vector<Var> hidden(J);
  for (std::size_t j = 0; j < J; ++j) {
    hidden[j] = tanh(linear(input, params[encoder_weight_name(j)], params[encoder_bias_name(j)]));
  }
  if (cfg.bridging) std::fill(hidden.begin(), hidden.end(), mean(hidden));

  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t l = 0; l < cfg.recurrent_layers; ++l) {
      hidden[j] = elman_rnn(hidden[j], params[rnn_input_weight_name(j, l)],
                            params[rnn_hidden_weight_name(j, l)], params[rnn_bias_name(j, l)]);
    }
  }
  if (cfg.bridging) std::fill(hidden.begin(), hidden.end(), mean(hidden));

  std::vector<Var> masks(J);
  for (std::size_t j = 0; j < J; ++j) {
    masks[j] =
        relu(linear(hidden[j], params[decoder_weight_name(j)], params[decoder_bias_name(j)]));
    if (!masks[j].value().all_finite()) {
      throw NumericError("forward: non-finite mask for source " + std::to_string(j));
    }
  }
  return masks;
}

std::vector<Mask> predict_masks(const ModelParams& params, const NetConfig& cfg,
                                const NormStats& stats, const MagnitudeSpectrogram& y_mag) {
  Tape tape;
  ParamBinding bound(tape, params, false);
  Var input = tape.constant(normalize_input(y_mag.data, stats));
  std::vector<Var> masks = forward(bound, cfg, input);
  std::vector<Mask> out;
  out.reserve(masks.size());
  for (const Var& m : masks) out.push_back(Mask{m.value()});
  return out;
}

}  // namespace xumx
