#pragma once

// J-source mask estimator. Each source has its own path
//
//   |Y| -> normalise -> affine+tanh (encoder) -> Elman RNN stack -> affine -> ReLU
//
// With bridging enabled, the J encoder outputs are replaced by their mean
// before the recurrent stacks, and the J recurrent outputs are replaced by
// their mean before the decoders. Averaging has no parameters, so both
// wirings share one parameter layout.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xumx/dsp.hpp"
#include "xumx/tensor.hpp"

namespace xumx {

struct NetConfig {
  std::size_t sources = 4;
  std::size_t hidden_size = 32;
  std::size_t recurrent_layers = 1;
  std::size_t input_bins = 257;
  bool bridging = false;

  /// Open-Unmix sized network (unidirectional recurrence) for 4096-point STFTs.
  static NetConfig umx_preset(bool bridging) { return {4, 512, 3, 2049, bridging}; }

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Per-bin input standardisation, (|Y| - mean) / std.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  static NormStats identity(std::size_t bins);
  /// Statistics of the given spectrograms, all frames pooled. Standard
  /// deviations are floored at 1e-3 of their average.
  static NormStats from_spectrograms(std::span<const MagnitudeSpectrogram> specs);
  std::size_t bins() const { return mean.size(); }
};

/// Named learnable tensors in declaration order.
class ModelParams {
 public:
  struct Layer {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  bool all_finite() const;

 private:
  std::vector<Layer> layers_;
};

std::size_t param_count(const ModelParams& params);

/// Layer names of source `j`'s path.
std::string encoder_weight_name(std::size_t j);
std::string encoder_bias_name(std::size_t j);
std::string rnn_input_weight_name(std::size_t j, std::size_t layer);
std::string rnn_hidden_weight_name(std::size_t j, std::size_t layer);
std::string rnn_bias_name(std::size_t j, std::size_t layer);
std::string decoder_weight_name(std::size_t j);
std::string decoder_bias_name(std::size_t j);
/// Prefix shared by every layer of source `j`.
std::string source_prefix(std::size_t j);

/// Initial centre of the decoder bias: masks start near an even split 1/J.
/// A ReLU output that is negative on every input gets no gradient again,
/// and with a zero-centred bias some band-edge bins ended up that way.
inline double decoder_bias_offset(std::size_t sources) { return 1.0 / static_cast<double>(sources); }

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias, the
/// decoder bias shifted by decoder_bias_offset, rounded to float32 storage
/// precision. Deterministic in `seed`.
ModelParams init_params(const NetConfig& cfg, std::uint64_t seed);

/// Rounds every parameter to the nearest float32 so checkpoints are lossless.
void round_to_storage(ModelParams& params);

/// Parameters registered as leaves on one tape. With `trainable` false they
/// are recorded as constants and no backward rules are kept.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ModelParams& params, bool trainable = true);
  /// Uses existing vars, one per layer of `layout` in order (e.g. the leaves
  /// handed out by grad_check).
  ParamBinding(const ModelParams& layout, std::vector<Var> vars);
  const Var& operator[](std::string_view name) const;
  const std::vector<Var>& vars() const { return vars_; }
  const ModelParams& params() const { return *params_; }

 private:
  const ModelParams* params_;
  std::vector<Var> vars_;
};

/// Standardised network input for one spectrogram.
Tensor normalize_input(const Tensor& magnitude, const NormStats& stats);

/// J masks of shape [T, F] from a normalised input [T, F].
std::vector<Var> forward(const ParamBinding& params, const NetConfig& cfg,
                         const Var& input);

/// Inference helper: normalises, runs forward on a private tape and returns
/// plain masks.
std::vector<Mask> predict_masks(const ModelParams& params, const NetConfig& cfg,
                                const NormStats& stats, const MagnitudeSpectrogram& y_mag);

}  // namespace xumx
