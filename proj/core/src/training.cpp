#include "xumx/training.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include "xumx/error.hpp"

namespace xumx {

// ---------------------------------------------------------------------------
// Configuration

namespace {

struct NamedVariant {
  const char* name;
  VariantConfig variant;
};

constexpr NamedVariant kVariants[] = {
    {"C1", {false, false, false}}, {"C2", {true, false, false}}, {"C3", {false, true, false}},
    {"C4", {false, false, true}},  {"C5", {true, true, false}},  {"C6", {true, false, true}},
    {"C7", {false, true, true}},   {"P", {true, true, true}},
};

}  // namespace

std::string VariantConfig::name() const {
  for (const auto& v : kVariants)
    if (v.variant == *this) return v.name;
  return "?";
}

VariantConfig VariantConfig::from_name(std::string_view name) {
  for (const auto& v : kVariants)
    if (name == v.name) return v.variant;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected C1..C7 or P)");
}

const std::vector<std::string>& VariantConfig::names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& v : kVariants) out.emplace_back(v.name);
    return out;
  }();
  return names;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train." + what); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
  if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr)) fail("lr must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) fail("beta1 must be in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) fail("beta2 must be in [0, 1)");
  if (!(optimizer.eps > 0.0)) fail("eps must be > 0");
  if (!(optimizer.weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (batches_per_epoch < 1) fail("batches_per_epoch must be >= 1");
  if (!(excerpt_seconds > 0.0)) fail("excerpt_seconds must be > 0");
  if (plateau_patience < 1) fail("plateau_patience must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) fail("lr_decay must be in (0, 1)");
  if (early_stop_patience < 1) fail("early_stop_patience must be >= 1");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm must be >= 0");
  if (hidden_size < 1) fail("hidden_size must be >= 1");
  if (recurrent_layers < 1) fail("recurrent_layers must be >= 1");
  stft.validate();
}

// ---------------------------------------------------------------------------
// History and schedules

std::size_t best_epoch(std::span<const double> valid_losses) {
  if (valid_losses.empty()) throw Error("best_epoch: empty history");
  return static_cast<std::size_t>(std::min_element(valid_losses.begin(), valid_losses.end()) -
                                  valid_losses.begin());
}

double reduce_on_plateau(std::span<const double> valid_losses, int patience, double factor,
                         double current_lr) {
  if (patience < 1) throw ConfigError("reduce_on_plateau: patience must be >= 1");
  double best = INFINITY;
  int bad = 0;
  bool drop = false;
  for (double loss : valid_losses) {
    drop = false;
    if (loss < best - kMinDelta) {
      best = loss;
      bad = 0;
    } else if (++bad >= patience) {
      drop = true;
      bad = 0;
    }
  }
  return drop ? current_lr * factor : current_lr;
}

bool early_stop(std::span<const double> valid_losses, int patience) {
  if (patience < 1) throw ConfigError("early_stop: patience must be >= 1");
  double best = INFINITY;
  int since = 0;
  for (double loss : valid_losses) {
    if (loss < best - kMinDelta) {
      best = loss;
      since = 0;
    } else {
      ++since;
    }
  }
  return since >= patience;
}

std::size_t TrainHistory::best_index() const { return best_epoch(valid_losses()); }

std::vector<double> TrainHistory::valid_losses() const {
  std::vector<double> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(e.valid_loss);
  return out;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,valid_loss,lr\n";
  for (const auto& e : epochs)
    out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.train_loss, e.valid_loss, e.lr);
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv();
}

// ---------------------------------------------------------------------------
// Loss and training loop

LossReport example_loss(const ParamBinding& params, const NetConfig& net,
                        const NormStats& stats, const TrainConfig& cfg,
                        const Waveform& mixture, std::span<const Waveform> stems) {
  Tape& tape = *params.vars().front().tape();
  const ComplexSpectrogram y = stft(mixture, cfg.stft);
  const Var y_spec = tape.constant(y.data);
  const Var input = tape.constant(normalize_input(magnitude(y).data, stats));
  const std::vector<Var> masks = forward(params, net, input);
  const LossOptions opts{cfg.alpha, cfg.variant.use_mdl, cfg.stft};
  return cfg.variant.use_cl ? combination_loss(masks, y_spec, stems, mixture, opts)
                            : plain_loss(masks, y_spec, stems, mixture, opts);
}

double validation_loss(const Checkpoint& ckpt, std::span<const Track> tracks) {
  if (tracks.empty()) throw DatasetError("validation: no tracks");
  double total = 0.0;
  for (const Track& t : tracks) {
    Tape tape;
    ParamBinding bound(tape, ckpt.params, false);
    total += example_loss(bound, ckpt.net, ckpt.stats, ckpt.train, t.mixture, t.stems).total.item();
  }
  return total / static_cast<double>(tracks.size());
}

namespace {

void check_tracks(std::span<const Track> tracks, std::size_t sources, int sample_rate,
                  const char* part) {
  for (const Track& t : tracks) {
    t.validate();
    if (t.stems.size() != sources)
      throw DatasetError(std::string(part) + " track '" + t.name + "' has a different stem count");
    if (t.mixture.sample_rate != sample_rate)
      throw DatasetError(std::string(part) + " track '" + t.name + "' has a different sample rate");
  }
}

class Adam {
 public:
  Adam(const ModelParams& params, const AdamConfig& cfg) : cfg_(cfg) {
    for (const auto& l : params.layers()) {
      m_.emplace_back(l.value.size(), 0.0);
      v_.emplace_back(l.value.size(), 0.0);
    }
  }

  void step(ModelParams& params, const std::vector<std::vector<double>>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& layers = params.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto w = layers[i].value.values();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double g = grads[i][k] + cfg_.weight_decay * w[k];
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
        w[k] -= lr * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

bool diverged(double loss) { return !std::isfinite(loss) || std::abs(loss) > kDivergenceLimit; }

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetSplit& split, const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.empty()) throw DatasetError("train: no training tracks");
  if (split.valid.empty()) throw DatasetError("train: no validation tracks");
  const Track& first = split.train.front();
  const std::size_t J = first.stems.size();
  const int sr = first.mixture.sample_rate;
  check_tracks(split.train, J, sr, "training");
  check_tracks(split.valid, J, sr, "validation");

  const auto excerpt_len = static_cast<std::size_t>(std::llround(cfg.excerpt_seconds * sr));
  if (excerpt_len < cfg.stft.fft_size)
    throw ConfigError("train.excerpt_seconds is shorter than one STFT frame");

  Checkpoint ckpt;
  ckpt.net = NetConfig{J, cfg.hidden_size, cfg.recurrent_layers, cfg.stft.bins(),
                       cfg.variant.use_bridging};
  ckpt.stft = cfg.stft;
  ckpt.sample_rate = sr;
  ckpt.source_names = first.source_names.empty() ? default_source_names(J) : first.source_names;
  ckpt.train = cfg;
  {
    std::vector<MagnitudeSpectrogram> mags;
    for (const Track& t : split.train) mags.push_back(magnitude(stft(t.mixture, cfg.stft)));
    ckpt.stats = NormStats::from_spectrograms(mags);
  }
  ckpt.params = init_params(ckpt.net, derive_seed(cfg.seed, 1));

  ExcerptSampler sampler(split.train, excerpt_len, derive_seed(cfg.seed, 2));
  Adam adam(ckpt.params, cfg.optimizer);
  TrainResult result;
  result.checkpoint = ckpt;
  double best_valid = INFINITY;
  double lr = cfg.optimizer.lr;

  const auto& layers = ckpt.params.layers();
  std::vector<std::vector<double>> grads(layers.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      for (std::size_t i = 0; i < layers.size(); ++i) grads[i].assign(layers[i].value.size(), 0.0);
      double batch_loss = 0.0;
      const double scale = 1.0 / static_cast<double>(cfg.batch_size);
      try {
        for (const Excerpt& ex : sampler.next_batch(cfg.batch_size)) {
          Tape tape;
          ParamBinding bound(tape, ckpt.params);
          const Var loss =
              example_loss(bound, ckpt.net, ckpt.stats, cfg, ex.mixture, ex.stems).total;
          batch_loss += scale * loss.item();
          if (diverged(batch_loss)) break;
          const Gradients g = backward(tape, loss);
          for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& gi = g[bound.vars()[i]].values();
            for (std::size_t k = 0; k < gi.size(); ++k) grads[i][k] += scale * gi[k];
          }
        }
      } catch (const NumericError& e) {
        throw TrainingAbort(fmt::format("training aborted at epoch {}, batch {}: {}", epoch, b + 1,
                                        e.what()),
                            epoch, static_cast<int>(b + 1));
      }
      if (diverged(batch_loss)) {
        throw TrainingAbort(fmt::format("training aborted at epoch {}, batch {}: loss {} diverged",
                                        epoch, b + 1, batch_loss),
                            epoch, static_cast<int>(b + 1));
      }
      if (cfg.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads)
          for (double v : g) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > cfg.max_grad_norm)
          for (auto& g : grads)
            for (double& v : g) v *= cfg.max_grad_norm / norm;
      }
      adam.step(ckpt.params, grads, lr);
      round_to_storage(ckpt.params);
      if (!ckpt.params.all_finite()) {
        throw TrainingAbort(
            fmt::format("training aborted at epoch {}, batch {}: non-finite parameters", epoch, b + 1),
            epoch, static_cast<int>(b + 1));
      }
      epoch_loss += batch_loss;
    }

    double valid = 0.0;
    try {
      valid = validation_loss(ckpt, split.valid);
    } catch (const NumericError& e) {
      throw TrainingAbort(
          fmt::format("training aborted at epoch {}, validation: {}", epoch, e.what()), epoch, 0);
    }
    if (diverged(valid)) {
      throw TrainingAbort(
          fmt::format("training aborted at epoch {}, validation loss {} diverged", epoch, valid),
          epoch, 0);
    }
    const EpochRecord rec{epoch, epoch_loss / static_cast<double>(cfg.batches_per_epoch), valid, lr};
    result.history.epochs.push_back(rec);
    if (valid < best_valid) {
      best_valid = valid;
      result.checkpoint.params = ckpt.params;
    }
    if (on_epoch) on_epoch(rec);

    const std::vector<double> losses = result.history.valid_losses();
    if (early_stop(losses, cfg.early_stop_patience)) break;
    lr = reduce_on_plateau(losses, cfg.plateau_patience, cfg.lr_decay, lr);
  }
  return result;
}

}  // namespace xumx
