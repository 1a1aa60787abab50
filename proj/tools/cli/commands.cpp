#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "config.hpp"
#include "xumx/error.hpp"
#include "xumx/inference.hpp"
#include "xumx/metrics.hpp"
#include "xumx/training.hpp"

namespace xumx::cli {

namespace fs = std::filesystem;

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv("XUMX_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("XUMX_SEED is not an unsigned integer: '") + env + "'");
  }
  return config_seed;
}

std::vector<std::string> parse_variants(const std::string& list) {
  std::vector<bool> wanted(VariantConfig::names().size(), false);
  std::stringstream ss(list);
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    VariantConfig::from_name(item);
    const auto& names = VariantConfig::names();
    wanted[static_cast<std::size_t>(std::find(names.begin(), names.end(), item) - names.begin())] = true;
    any = true;
  }
  if (!any) throw ConfigError("--variants names no variant");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < wanted.size(); ++i)
    if (wanted[i]) out.push_back(VariantConfig::names()[i]);
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DatasetError*>(&e) ||
      dynamic_cast<const WavError*>(&e) || dynamic_cast<const CheckpointError*>(&e) ||
      dynamic_cast<const CLI::Error*>(&e)) {
    return kExitUsage;
  }
  return kExitRuntime;
}

namespace {

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const TrainingAbort& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code_for(e);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<double> scored(const FrameScores& frames) {
  std::vector<double> out;
  for (const auto& v : frames)
    if (v) out.push_back(*v);
  return out;
}

std::string num(double v) { return fmt::format("{:.6f}", v); }

TrainResult run_training(const RunConfig& cfg, std::ostream& log, const std::string& label) {
  const DatasetSplit split = load_dataset(cfg.dataset);
  return train(cfg.train, split, [&](const EpochRecord& r) {
    fmt::print(log, "{}epoch {:4d}  train {:.6g}  valid {:.6g}  lr {:.3g}\n", label, r.epoch,
               r.train_loss, r.valid_loss, r.lr);
  });
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(args.config);
    cfg.train.seed = resolve_seed(args.seed, cfg.train.seed);
    const TrainResult result = run_training(cfg, log, "");
    fs::create_directories(args.out);
    save_checkpoint(args.out / "checkpoint.xumx", result.checkpoint);
    result.history.write_csv(args.out / "history.csv");
    fmt::print(log, "best epoch {} (valid {:.6g}), checkpoint written to {}\n",
               result.history.best_index() + 1,
               result.history.epochs[result.history.best_index()].valid_loss,
               (args.out / "checkpoint.xumx").string());
  });
}

int cmd_separate(const SeparateArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ckpt = load_checkpoint(args.model);
    std::vector<std::pair<std::string, fs::path>> inputs;
    if (fs::is_directory(args.input)) {
      std::vector<fs::path> entries;
      for (const auto& e : fs::directory_iterator(args.input)) entries.push_back(e.path());
      std::sort(entries.begin(), entries.end());
      for (const auto& p : entries) {
        if (fs::is_directory(p) && fs::exists(p / "mixture.wav"))
          inputs.emplace_back(p.filename().string(), p / "mixture.wav");
        else if (fs::is_regular_file(p) && p.extension() == ".wav")
          inputs.emplace_back(p.stem().string(), p);
      }
      if (inputs.empty()) throw DatasetError("no .wav input in " + args.input.string());
    } else if (fs::is_regular_file(args.input)) {
      inputs.emplace_back(args.input.stem().string(), args.input);
    } else {
      throw DatasetError("input not found: " + args.input.string());
    }
    SeparateOptions opts;
    opts.chunk_seconds = args.chunk_seconds;
    for (const auto& [name, path] : inputs) {
      const Waveform mix = load_wav(path);
      const SeparationResult result = separate(ckpt, mix, opts);
      write_stems(result, args.outdir, name);
      fmt::print(log, "{}: {} stems, residual energy ratio {:.4g}\n", name, result.stems.size(),
                 result.residual_ratio);
    }
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    if (!(args.frame_seconds > 0.0)) throw ConfigError("--frame-seconds must be positive");
    if (!fs::is_directory(args.refs)) throw DatasetError("not a directory: " + args.refs.string());
    if (!fs::is_directory(args.ests)) throw DatasetError("not a directory: " + args.ests.string());
    std::vector<fs::path> tracks;
    for (const auto& e : fs::directory_iterator(args.refs))
      if (e.is_directory()) tracks.push_back(e.path());
    std::sort(tracks.begin(), tracks.end());
    if (tracks.empty()) throw DatasetError("no track folders in " + args.refs.string());

    std::string frames_csv = "track_id,source,metric,frame_index,value\n";
    // source -> metric -> per-track frame scores
    std::map<std::string, std::map<std::string, std::vector<FrameScores>>> all;
    std::vector<std::string> source_order;
    for (const auto& track_dir : tracks) {
      const std::string track = track_dir.filename().string();
      std::vector<fs::path> stems;
      for (const auto& e : fs::directory_iterator(track_dir))
        if (e.path().extension() == ".wav" && e.path().stem() != "mixture") stems.push_back(e.path());
      std::sort(stems.begin(), stems.end());
      if (stems.empty()) throw DatasetError("no reference stems in " + track_dir.string());
      std::vector<Waveform> refs, ests;
      std::vector<std::string> names;
      for (const auto& ref_path : stems) {
        const fs::path est_path = args.ests / track / ref_path.filename();
        if (!fs::exists(est_path)) throw DatasetError("missing estimate " + est_path.string());
        refs.push_back(load_wav(ref_path));
        ests.push_back(load_wav(est_path));
        if (refs.back().size() != ests.back().size())
          throw DatasetError(est_path.string() + " length differs from its reference");
        if (refs.back().sample_rate != ests.back().sample_rate)
          throw DatasetError(est_path.string() + " sample rate differs from its reference");
        names.push_back(ref_path.stem().string());
      }
      const auto frame_len = static_cast<std::size_t>(
          std::max<long long>(1, std::llround(args.frame_seconds * refs.front().sample_rate)));
      const auto evals = evaluate_track(refs, ests, frame_len);
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (std::find(source_order.begin(), source_order.end(), names[j]) == source_order.end())
          source_order.push_back(names[j]);
        for (const auto& [metric, frames] :
             {std::pair{"SDR", &evals[j].sdr}, std::pair{"SAR", &evals[j].sar}}) {
          for (std::size_t k = 0; k < frames->size(); ++k)
            if ((*frames)[k])
              frames_csv += fmt::format("{},{},{},{},{}\n", track, names[j], metric, k, num(*(*frames)[k]));
          all[names[j]][metric].push_back(*frames);
        }
      }
    }
    std::string summary = "source,metric,value,tracks\n";
    for (const auto& source : source_order) {
      for (const char* metric : {"SDR", "SAR"}) {
        const auto& per_track = all[source][metric];
        std::size_t used = 0;
        for (const auto& f : per_track) used += scored(f).empty() ? 0 : 1;
        const std::string value = used ? num(aggregate(per_track)) : "nan";
        summary += fmt::format("{},{},{},{}\n", source, metric, value, used);
        fmt::print(log, "{:>10} {}  {}\n", source, metric, value);
      }
    }
    write_text(args.out, frames_csv);
    fs::path summary_path = args.out;
    summary_path.replace_extension(".summary.csv");
    write_text(summary_path, summary);
  });
}

int cmd_ablate(const AblateArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const std::vector<std::string> variants = parse_variants(args.variants);
    RunConfig base = load_config(args.config);
    base.train.seed = resolve_seed(args.seed, base.train.seed);
    const DatasetSplit split = load_dataset(base.dataset);
    if (split.test.empty()) throw ConfigError("config key dataset.test_tracks must be >= 1 for ablation");

    std::string results = "variant,source,metric,value\n";
    std::string boxplot = "variant,source,metric,min,q1,median,q3,max,tracks\n";
    for (const std::string& name : variants) {
      TrainConfig cfg = base.train;
      cfg.variant = VariantConfig::from_name(name);
      const TrainResult trained = train(cfg, split, [&](const EpochRecord& r) {
        fmt::print(log, "[{}] epoch {:4d}  train {:.6g}  valid {:.6g}  lr {:.3g}\n", name, r.epoch,
                   r.train_loss, r.valid_loss, r.lr);
      });
      const fs::path dir = args.out / name;
      fs::create_directories(dir);
      save_checkpoint(dir / "checkpoint.xumx", trained.checkpoint);
      trained.history.write_csv(dir / "history.csv");

      const std::size_t J = trained.checkpoint.source_names.size();
      // per source: per-track frame scores for SDR and SAR
      std::vector<std::vector<FrameScores>> sdr(J), sar(J);
      for (const Track& t : split.test) {
        const SeparationResult sep = separate(trained.checkpoint, t.mixture);
        const auto evals = evaluate_track(t.stems, sep.stems,
                                          static_cast<std::size_t>(t.mixture.sample_rate));
        for (std::size_t j = 0; j < J; ++j) {
          sdr[j].push_back(evals[j].sdr);
          sar[j].push_back(evals[j].sar);
        }
      }
      for (std::size_t j = 0; j < J; ++j) {
        const std::string& source = trained.checkpoint.source_names[j];
        for (const auto& [metric, per_track] : {std::pair{"SDR", &sdr[j]}, std::pair{"SAR", &sar[j]}}) {
          std::vector<double> medians;
          for (const auto& f : *per_track) {
            auto s = scored(f);
            if (!s.empty()) medians.push_back(median(std::move(s)));
          }
          if (medians.empty()) {
            results += fmt::format("{},{},{},nan\n", name, source, metric);
            boxplot += fmt::format("{},{},{},nan,nan,nan,nan,nan,0\n", name, source, metric);
            continue;
          }
          results += fmt::format("{},{},{},{}\n", name, source, metric, num(median(medians)));
          boxplot += fmt::format("{},{},{},{},{},{},{},{},{}\n", name, source, metric,
                                 num(quantile(medians, 0.0)), num(quantile(medians, 0.25)),
                                 num(quantile(medians, 0.5)), num(quantile(medians, 0.75)),
                                 num(quantile(medians, 1.0)), medians.size());
        }
      }
    }
    write_text(args.out / "results.csv", results);
    write_text(args.out / "boxplot.csv", boxplot);
    fmt::print(log, "{}", results);
  });
}

int run(int argc, char** argv) {
  CLI::App app{"Music source separation toolkit: training, separation, evaluation, ablation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one model from a config file");
  train_cmd->add_option("--config", train_args.config, "Config file")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--seed", train_args.seed, "Training seed");

  SeparateArgs sep_args;
  auto* sep_cmd = app.add_subcommand("separate", "Separate WAV files into stems");
  sep_cmd->add_option("--model", sep_args.model, "Checkpoint file")->required();
  sep_cmd->add_option("--input", sep_args.input, "WAV file or directory")->required();
  sep_cmd->add_option("--outdir", sep_args.outdir, "Output directory")->required();
  sep_cmd->add_option("--chunk-seconds", sep_args.chunk_seconds, "Processing chunk length");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score estimated stems against references");
  eval_cmd->add_option("--refs", eval_args.refs, "Reference directory")->required();
  eval_cmd->add_option("--ests", eval_args.ests, "Estimate directory")->required();
  eval_cmd->add_option("--out", eval_args.out, "Frame-level CSV")->required();
  eval_cmd->add_option("--frame-seconds", eval_args.frame_seconds, "Evaluation frame length");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate a set of variants");
  ablate_cmd->add_option("--config", ablate_args.config, "Config file")->required();
  ablate_cmd->add_option("--variants", ablate_args.variants, "Comma-separated C1..C7,P")->required();
  ablate_cmd->add_option("--out", ablate_args.out, "Output directory")->required();
  ablate_cmd->add_option("--seed", ablate_args.seed, "Shared training seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (*train_cmd) return cmd_train(train_args, std::cout, std::cerr);
  if (*sep_cmd) return cmd_separate(sep_args, std::cout, std::cerr);
  if (*eval_cmd) return cmd_eval(eval_args, std::cout, std::cerr);
  return cmd_ablate(ablate_args, std::cout, std::cerr);
}

}  // namespace xumx::cli
