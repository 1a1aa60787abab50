#include "xumx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "xumx/error.hpp"

namespace xumx {

namespace {

using nlohmann::json;

const std::string kMagic = "xumx-checkpoint";

json to_json(const NetConfig& c) {
  return {{"sources", c.sources},
          {"hidden_size", c.hidden_size},
          {"recurrent_layers", c.recurrent_layers},
          {"input_bins", c.input_bins},
          {"bridging", c.bridging}};
}

json to_json(const StftConfig& c) {
  return {{"fft_size", c.fft_size}, {"hop_size", c.hop_size}, {"center", c.center}};
}

json to_json(const TrainConfig& c) {
  return {{"variant",
           {{"mdl", c.variant.use_mdl}, {"cl", c.variant.use_cl}, {"bridging", c.variant.use_bridging}}},
          {"alpha", c.alpha},
          {"optimizer",
           {{"lr", c.optimizer.lr},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"batches_per_epoch", c.batches_per_epoch},
          {"excerpt_seconds", c.excerpt_seconds},
          {"plateau_patience", c.plateau_patience},
          {"lr_decay", c.lr_decay},
          {"early_stop_patience", c.early_stop_patience},
          {"max_grad_norm", c.max_grad_norm},
          {"hidden_size", c.hidden_size},
          {"recurrent_layers", c.recurrent_layers},
          {"stft", to_json(c.stft)},
          {"seed", c.seed}};
}

NetConfig net_from_json(const json& j) {
  NetConfig c;
  j.at("sources").get_to(c.sources);
  j.at("hidden_size").get_to(c.hidden_size);
  j.at("recurrent_layers").get_to(c.recurrent_layers);
  j.at("input_bins").get_to(c.input_bins);
  j.at("bridging").get_to(c.bridging);
  return c;
}

StftConfig stft_from_json(const json& j) {
  StftConfig c;
  j.at("fft_size").get_to(c.fft_size);
  j.at("hop_size").get_to(c.hop_size);
  j.at("center").get_to(c.center);
  return c;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  const json& v = j.at("variant");
  v.at("mdl").get_to(c.variant.use_mdl);
  v.at("cl").get_to(c.variant.use_cl);
  v.at("bridging").get_to(c.variant.use_bridging);
  j.at("alpha").get_to(c.alpha);
  const json& o = j.at("optimizer");
  o.at("lr").get_to(c.optimizer.lr);
  o.at("beta1").get_to(c.optimizer.beta1);
  o.at("beta2").get_to(c.optimizer.beta2);
  o.at("eps").get_to(c.optimizer.eps);
  o.at("weight_decay").get_to(c.optimizer.weight_decay);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("batches_per_epoch").get_to(c.batches_per_epoch);
  j.at("excerpt_seconds").get_to(c.excerpt_seconds);
  j.at("plateau_patience").get_to(c.plateau_patience);
  j.at("lr_decay").get_to(c.lr_decay);
  j.at("early_stop_patience").get_to(c.early_stop_patience);
  j.at("max_grad_norm").get_to(c.max_grad_norm);
  j.at("hidden_size").get_to(c.hidden_size);
  j.at("recurrent_layers").get_to(c.recurrent_layers);
  c.stft = stft_from_json(j.at("stft"));
  j.at("seed").get_to(c.seed);
  return c;
}

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f32(const std::string& in, std::size_t pos) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i)
    bits = (bits << 8) | static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)]);
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json layers = json::array();
  for (const auto& layer : ckpt.params.layers()) {
    layers.push_back({{"name", layer.name}, {"shape", layer.value.shape()}});
  }
  const json header = {{"net", to_json(ckpt.net)},
                       {"stft", to_json(ckpt.stft)},
                       {"sample_rate", ckpt.sample_rate},
                       {"sources", ckpt.source_names},
                       {"norm", {{"mean", ckpt.stats.mean}, {"std", ckpt.stats.std}}},
                       {"train", to_json(ckpt.train)},
                       {"layers", layers}};
  std::string out = kMagic + " " + std::to_string(kCheckpointVersion) + "\n" + header.dump() + "\n";
  for (const auto& layer : ckpt.params.layers())
    for (double v : layer.value.values()) put_f32(out, v);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (!ckpt.params.all_finite()) throw NumericError("save_checkpoint: non-finite parameters");
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const std::size_t line1 = bytes.find('\n');
  if (line1 == std::string::npos) throw CheckpointError("checkpoint: missing header line");
  std::istringstream magic(bytes.substr(0, line1));
  std::string word;
  int version = 0;
  if (!(magic >> word >> version) || word != kMagic)
    throw CheckpointError("checkpoint: bad magic line");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::size_t line2 = bytes.find('\n', line1 + 1);
  if (line2 == std::string::npos) throw CheckpointError("checkpoint: truncated header");

  Checkpoint ckpt;
  std::vector<std::pair<std::string, Shape>> layers;
  try {
    const json header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(line1 + 1),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(line2));
    ckpt.net = net_from_json(header.at("net"));
    ckpt.stft = stft_from_json(header.at("stft"));
    header.at("sample_rate").get_to(ckpt.sample_rate);
    header.at("sources").get_to(ckpt.source_names);
    header.at("norm").at("mean").get_to(ckpt.stats.mean);
    header.at("norm").at("std").get_to(ckpt.stats.std);
    ckpt.train = train_from_json(header.at("train"));
    for (const json& l : header.at("layers")) {
      layers.emplace_back(l.at("name").get<std::string>(), l.at("shape").get<Shape>());
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  try {
    ckpt.net.validate();
    ckpt.stft.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: invalid header: ") + e.what());
  }
  if (ckpt.source_names.size() != ckpt.net.sources)
    throw CheckpointError("checkpoint: source names do not match the network");
  if (ckpt.stats.mean.size() != ckpt.net.input_bins || ckpt.stats.std.size() != ckpt.net.input_bins)
    throw CheckpointError("checkpoint: normalisation statistics do not match the network");

  // The declared layers must be exactly the layout of the declared network.
  const ModelParams reference = init_params(ckpt.net, 0);
  if (reference.layers().size() != layers.size())
    throw CheckpointError("checkpoint: expected " + std::to_string(reference.layers().size()) +
                          " layers, header declares " + std::to_string(layers.size()));
  std::size_t pos = line2 + 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& [name, shape] = layers[i];
    const auto& expected = reference.layers()[i];
    if (name != expected.name || shape != expected.value.shape()) {
      throw CheckpointError("checkpoint: layer " + name + " " + to_string(shape) +
                            " does not match expected " + expected.name + " " +
                            to_string(expected.value.shape()));
    }
    const std::size_t n = element_count(shape);
    if (bytes.size() < pos + 4 * n)
      throw CheckpointError("checkpoint: data ends inside layer " + name);
    Tensor t(shape);
    for (std::size_t k = 0; k < n; ++k) t[k] = get_f32(bytes, pos + 4 * k);
    pos += 4 * n;
    ckpt.params.add(name, std::move(t));
  }
  if (pos != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after the last layer");
  if (!ckpt.params.all_finite()) throw CheckpointError("checkpoint: non-finite parameters");
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.net.bridging != expected.bridging) {
    throw CheckpointError(path.string() + ": checkpoint was trained with bridging " +
                          (ckpt.net.bridging ? "on" : "off") + " but the config asks for " +
                          (expected.bridging ? "on" : "off"));
  }
  if (!(ckpt.net == expected)) {
    throw CheckpointError(path.string() + ": network configuration differs from the checkpoint");
  }
  return ckpt;
}

}  // namespace xumx
