#include "config.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "xumx/error.hpp"

namespace xumx::cli {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + text + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    field(c) = parse_number<T>(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset.source",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "synthetic" && v != "musdb")
           throw ConfigError("config key " + k + ": expected synthetic or musdb, got '" + v + "'");
         c.dataset.source = v;
       }},
      {"dataset.path",
       [](RunConfig& c, const std::string&, const std::string& v) { c.dataset.path = v; }},
      {"dataset.tracks", number<std::size_t>([](RunConfig& c) -> auto& { return c.dataset.tracks; })},
      {"dataset.duration", number<double>([](RunConfig& c) -> auto& { return c.dataset.duration_seconds; })},
      {"dataset.sample_rate", number<int>([](RunConfig& c) -> auto& { return c.dataset.sample_rate; })},
      {"dataset.sources", number<std::size_t>([](RunConfig& c) -> auto& { return c.dataset.sources; })},
      {"dataset.seed", number<std::uint64_t>([](RunConfig& c) -> auto& { return c.dataset.seed; })},
      {"dataset.valid_tracks", number<std::size_t>([](RunConfig& c) -> auto& { return c.dataset.valid_tracks; })},
      {"dataset.test_tracks", number<std::size_t>([](RunConfig& c) -> auto& { return c.dataset.test_tracks; })},
      {"stft.fft_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.train.stft.fft_size; })},
      {"stft.hop_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.train.stft.hop_size; })},
      {"model.hidden_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.train.hidden_size; })},
      {"model.recurrent_layers", number<std::size_t>([](RunConfig& c) -> auto& { return c.train.recurrent_layers; })},
      {"train.epochs", number<int>([](RunConfig& c) -> auto& { return c.train.epochs; })},
      {"train.batch_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_size; })},
      {"train.batches_per_epoch", number<std::size_t>([](RunConfig& c) -> auto& { return c.train.batches_per_epoch; })},
      {"train.excerpt_seconds", number<double>([](RunConfig& c) -> auto& { return c.train.excerpt_seconds; })},
      {"train.alpha", number<double>([](RunConfig& c) -> auto& { return c.train.alpha; })},
      {"train.lr", number<double>([](RunConfig& c) -> auto& { return c.train.optimizer.lr; })},
      {"train.beta1", number<double>([](RunConfig& c) -> auto& { return c.train.optimizer.beta1; })},
      {"train.beta2", number<double>([](RunConfig& c) -> auto& { return c.train.optimizer.beta2; })},
      {"train.eps", number<double>([](RunConfig& c) -> auto& { return c.train.optimizer.eps; })},
      {"train.weight_decay", number<double>([](RunConfig& c) -> auto& { return c.train.optimizer.weight_decay; })},
      {"train.plateau_patience", number<int>([](RunConfig& c) -> auto& { return c.train.plateau_patience; })},
      {"train.lr_decay", number<double>([](RunConfig& c) -> auto& { return c.train.lr_decay; })},
      {"train.early_stop_patience", number<int>([](RunConfig& c) -> auto& { return c.train.early_stop_patience; })},
      {"train.max_grad_norm", number<double>([](RunConfig& c) -> auto& { return c.train.max_grad_norm; })},
      {"train.seed", number<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.seed; })},
      {"variant.name",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.train.variant = VariantConfig::from_name(v);
       }},
      {"variant.mdl",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.variant.use_mdl = parse_bool(k, v); }},
      {"variant.cl",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.variant.use_cl = parse_bool(k, v); }},
      {"variant.bridging",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.train.variant.use_bridging = parse_bool(k, v);
       }},
  };
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) {
      throw ConfigError("config key '" + item.fullname() + "' must sit in one [section]");
    }
    const std::string key = item.parents.front() + "." + item.name;
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key " + key);
    if (item.inputs.size() != 1) throw ConfigError("config key " + key + " takes one value");
    it->second(cfg, key, item.inputs.front());
  }
  cfg.train.validate();
  if (cfg.dataset.source == "musdb" && cfg.dataset.path.empty())
    throw ConfigError("config key dataset.path is required when dataset.source = musdb");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

DatasetSplit load_dataset(const DatasetConfig& cfg) {
  std::vector<Track> tracks;
  if (cfg.source == "musdb") {
    if (cfg.path.empty()) throw ConfigError("config key dataset.path is required for musdb data");
    if (!std::filesystem::is_directory(cfg.path))
      throw DatasetError("dataset.path '" + cfg.path.string() + "' is not a directory");
    tracks = load_musdb_layout(cfg.path, default_source_names(cfg.sources));
  } else {
    tracks = synth_dataset(
        SynthSpec{cfg.tracks, cfg.duration_seconds, cfg.sample_rate, cfg.sources, cfg.seed});
  }
  return split_tracks(std::move(tracks), cfg.valid_tracks, cfg.test_tracks, cfg.seed);
}

}  // namespace xumx::cli
