/*
 * Copyright 2026 The CARD Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "card/card.hpp"
#include "svg_plot.hpp"

namespace card::cli {

namespace fs = std::filesystem;

struct Corpus {
  std::vector<InteractionSequence> sequences;
  data::Vocabulary vocab;
  std::optional<std::vector<std::vector<data::PositionLabel>>> labels;
  fs::path dir;
};

inline fs::path ResolveDataDir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CARD_DATA_DIR"); env && *env) return env;
  throw DataError("no data directory: pass --data or set CARD_DATA_DIR");
}

inline Corpus ReadCorpusDir(const fs::path& dir) {
  Corpus c;
  c.dir = dir;
  c.sequences = data::ReadCorpus(dir / "corpus.tsv");
  c.vocab = data::ReadVocabulary(dir / "vocab.tsv");
  for (const auto& seq : c.sequences) {
    for (ItemIndex item : seq.items) {
      if (item >= static_cast<ItemIndex>(c.vocab.size())) {
        throw DataError("corpus item " + std::to_string(item) + " missing from vocabulary");
      }
    }
  }
  if (fs::exists(dir / "labels.tsv")) c.labels = data::ReadLabels(dir / "labels.tsv");
  return c;
}

inline std::vector<std::uint64_t> ParseSeeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& token : data::SplitString(text, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad seed list '" + text + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

// Registers one `--<key>` string option per config key on `cmd`.
class ConfigFlags {
 public:
  void Attach(CLI::App* cmd, bool include_seed = true) {
    ModelConfig defaults;
    ForEachField(defaults, [&](const char* key, auto&) {
      const std::string name = key;
      if (!include_seed && name == "seed") return;
      values_[name];
      options_[name] = cmd->add_option("--" + name, values_[name], "config override");
    });
  }

  std::map<std::string, std::string> Overrides() const {
    std::map<std::string, std::string> out;
    for (const auto& [key, opt] : options_) {
      if (opt->count() > 0) out[key] = values_.at(key);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
};

inline ModelConfig BuildConfig(const std::string& config_path,
                               const std::map<std::string, std::string>& overrides) {
  if (!config_path.empty()) return LoadConfig(config_path, overrides);
  return ParseConfig("{}", overrides);
}

inline void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::vector<Sample> SplitSamples(const Corpus& corpus, const std::string& which,
                                        int min_history) {
  auto split = data::SplitLeaveOneOut(corpus.sequences, static_cast<std::size_t>(min_history));
  if (which == "test") return split.test;
  if (which == "valid") return split.valid;
  if (which == "train") return split.train;
  throw ConfigError("split must be train, valid or test");
}

// ---- preprocess -----------------------------------------------------------

inline int Preprocess(const std::string& input, const std::string& out_dir, int min_count,
                      int min_length, std::ostream& out) {
  data::IngestOptions options{min_count, min_length};
  auto result = data::Ingest(input, options);
  const fs::path dir = out_dir;
  data::WriteCorpus(dir / "corpus.tsv", result.sequences);
  data::WriteVocabulary(dir / "vocab.tsv", result.vocab);
  nlohmann::ordered_json report;
  report["raw_interactions"] = result.raw_interactions;
  report["filter_passes"] = result.filter_passes;
  report["dropped_short"] = result.dropped_short;
  report["users"] = result.sequences.size();
  report["items"] = result.vocab.size();
  report["vocab_hash"] = data::VocabularyHash(result.vocab);
  WriteText(dir / "preprocess_report.json", report.dump(2) + "\n");
  out << report.dump() << "\n";
  return 0;
}

// ---- synth ----------------------------------------------------------------

inline int Synth(const data::SyntheticSpec& spec, std::uint64_t seed, const std::string& out_dir,
                 std::ostream& out) {
  Rng rng = SeededRng(seed, "synth");
  auto corpus = data::GenerateSynthetic(spec, rng);
  const fs::path dir = out_dir;
  data::WriteCorpus(dir / "corpus.tsv", corpus.sequences);
  data::WriteVocabulary(dir / "vocab.tsv", corpus.vocab);
  data::WriteLabels(dir / "labels.tsv", corpus.sequences, corpus.labels);
  std::size_t shifted = 0;
  for (const auto& b : corpus.bridge) shifted += b.has_value();
  nlohmann::ordered_json report;
  report["users"] = corpus.sequences.size();
  report["items"] = corpus.vocab.size();
  report["shifted_sequences"] = shifted;
  report["seed"] = seed;
  report["vocab_hash"] = data::VocabularyHash(corpus.vocab);
  WriteText(dir / "synth_report.json", report.dump(2) + "\n");
  out << report.dump() << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

inline int Train(const ModelConfig& config, const fs::path& data_dir, const std::string& out_flag,
                 std::ostream& out) {
  Corpus corpus = ReadCorpusDir(data_dir);
  const fs::path dir = out_flag.empty() ? data_dir / "model" : fs::path(out_flag);
  fs::create_directories(dir);
  auto split = data::SplitLeaveOneOut(corpus.sequences, static_cast<std::size_t>(config.dts.min_history));
  CardModel model(config, static_cast<int>(corpus.vocab.size()));
  Trainer trainer(model, config);
  std::ofstream epochs(dir / "epochs.jsonl");
  std::ofstream timing(dir / "timing.jsonl");
  WriteText(dir / "config.json", SerializeConfig(config) + "\n");
  FitResult fit = trainer.Fit(split.train, split.valid, [&](const EpochLog& log) {
    epochs << log.ToJsonLine() << "\n";
    epochs.flush();
    nlohmann::ordered_json t;
    t["epoch"] = log.epoch;
    t["seconds"] = log.seconds;
    timing << t.dump() << "\n";
  });
  CheckpointInfo info;
  info.config = config;
  info.n_items = model.n_items();
  info.vocab_hash = data::VocabularyHash(corpus.vocab);
  info.epoch = fit.best_epoch;
  if (fit.best_val_hr >= 0.0) {
    info.val_hr = fit.best_val_hr;
    for (const auto& e : fit.epochs) {
      if (e.epoch == fit.best_epoch && e.val_ndcg) info.val_ndcg = *e.val_ndcg;
    }
  }
  info.seed = config.seed;
  info.data_dir = fs::absolute(data_dir).string();
  SaveCheckpoint(dir / "model.ckpt", model, info);
  nlohmann::ordered_json summary;
  summary["checkpoint"] = (dir / "model.ckpt").string();
  summary["epochs_run"] = fit.epochs.size();
  summary["best_epoch"] = fit.best_epoch;
  summary["best_val_hr"] = info.val_hr ? nlohmann::ordered_json(*info.val_hr) : nlohmann::ordered_json(nullptr);
  summary["train_samples"] = split.train.size();
  out << summary.dump() << "\n";
  return 0;
}

// ---- evaluate -------------------------------------------------------------

inline int Evaluate(const std::string& ckpt, const std::string& data_flag,
                    const std::vector<std::uint64_t>& seeds, const std::string& which,
                    const std::map<std::string, std::string>& overrides, const std::string& out_path,
                    const std::string& csv_path, std::ostream& out) {
  CheckpointInfo info = ReadCheckpointInfo(ckpt);
  fs::path data_dir;
  if (!data_flag.empty() || std::getenv("CARD_DATA_DIR")) {
    data_dir = ResolveDataDir(data_flag);
  } else {
    data_dir = info.data_dir;
  }
  Corpus corpus = ReadCorpusDir(data_dir);
  auto loaded = LoadCheckpoint(ckpt, data::VocabularyHash(corpus.vocab), overrides);
  const auto& config = loaded.model->config();
  const auto samples = SplitSamples(corpus, which, config.dts.min_history);
  std::vector<EvaluationRun> runs;
  for (auto seed : seeds) runs.push_back(EvaluateSamples(samples, *loaded.model, seed));
  MetricsReport report = BuildReport(runs, seeds, config.K);
  nlohmann::ordered_json j = report.ToJson();
  j["split"] = which;
  j["users"] = samples.size();
  double total_seconds = 0.0;
  for (const auto& r : runs) total_seconds += r.seconds;
  j["seconds_per_user"] = samples.empty() ? 0.0 : total_seconds / (runs.size() * samples.size());
  if (!out_path.empty()) WriteText(out_path, j.dump(2) + "\n");
  if (!csv_path.empty()) {
    const bool fresh = !fs::exists(csv_path);
    std::ofstream csv(csv_path, std::ios::app);
    if (fresh) csv << "checkpoint,split,seed,hr,ndcg\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      csv << ckpt << ',' << which << ',' << seeds[i] << ',' << Round2(100 * runs[i].hr) << ','
          << Round2(100 * runs[i].ndcg) << '\n';
    }
  }
  out << j.dump() << "\n";
  out << "HR@" << config.K << " " << MetricsReport::Cell(report.hr) << "  NDCG@" << config.K << " "
      << MetricsReport::Cell(report.ndcg) << "\n";
  return 0;
}

// ---- ablate ---------------------------------------------------------------

inline int Ablate(const ModelConfig& config, const fs::path& data_dir,
                  const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds,
                  const std::string& out_flag, std::ostream& out) {
  Corpus corpus = ReadCorpusDir(data_dir);
  const fs::path dir = out_flag.empty() ? data_dir / "ablation" : fs::path(out_flag);
  fs::create_directories(dir);
  std::vector<AblationReport> reports;
  std::ofstream csv(dir / "ablation.csv");
  csv << "variant,seed,hr,ndcg,per_passes,dts_calls,mean_epoch_seconds\n";
  for (const auto& variant : variants) {
    std::ofstream log(dir / ("epochs_" + variant + ".jsonl"));
    auto report = RunAblation(variant, config, corpus.sequences, static_cast<int>(corpus.vocab.size()),
                              seeds, [&](std::uint64_t seed, const EpochLog& e) {
                                log << "{\"seed\":" << seed << ",\"log\":" << e.ToJsonLine() << "}\n";
                              });
    WriteText(dir / ("ablation_" + variant + ".json"), report.ToJson().dump(2) + "\n");
    for (const auto& r : report.runs) {
      csv << variant << ',' << r.seed << ',' << Round2(100 * r.test.hr) << ','
          << Round2(100 * r.test.ndcg) << ',' << r.counters.per_passes << ',' << r.counters.dts_calls
          << ',' << r.mean_epoch_seconds << '\n';
    }
    out << std::left << std::setw(14) << variant << " HR@" << config.K << " "
        << MetricsReport::Cell(report.metrics.hr) << "  NDCG@" << config.K << " "
        << MetricsReport::Cell(report.metrics.ndcg) << "\n";
    reports.push_back(std::move(report));
  }
  nlohmann::ordered_json summary;
  const AblationReport& reference = reports.front();
  summary["reference"] = reference.variant;
  nlohmann::ordered_json deltas = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json d;
    d["variant"] = r.variant;
    d["hr_mean"] = Round2(r.metrics.hr.mean);
    d["ndcg_mean"] = Round2(r.metrics.ndcg.mean);
    d["hr_delta_vs_reference"] = Round2(r.metrics.hr.mean - reference.metrics.hr.mean);
    d["ndcg_delta_vs_reference"] = Round2(r.metrics.ndcg.mean - reference.metrics.ndcg.mean);
    std::size_t per_passes = 0;
    double epoch_seconds = 0.0;
    for (const auto& run : r.runs) {
      per_passes += run.counters.per_passes;
      epoch_seconds += run.mean_epoch_seconds;
    }
    d["per_passes"] = per_passes;
    d["mean_epoch_seconds"] = r.runs.empty() ? 0.0 : epoch_seconds / r.runs.size();
    deltas.push_back(d);
  }
  summary["variants"] = deltas;
  WriteText(dir / "ablation_summary.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  return 0;
}

// ---- inspect --------------------------------------------------------------

inline int Inspect(const std::string& ckpt, const std::string& data_flag, const std::string& which,
                   std::size_t limit, std::uint64_t seed, const std::string& out_path,
                   const std::string& plot_dir, std::ostream& out) {
  CheckpointInfo info = ReadCheckpointInfo(ckpt);
  const fs::path data_dir = (!data_flag.empty() || std::getenv("CARD_DATA_DIR"))
                                ? ResolveDataDir(data_flag)
                                : fs::path(info.data_dir);
  Corpus corpus = ReadCorpusDir(data_dir);
  auto loaded = LoadCheckpoint(ckpt, data::VocabularyHash(corpus.vocab));
  const CardModel& model = *loaded.model;
  const auto samples = SplitSamples(corpus, which, model.config().dts.min_history);
  const std::size_t n = limit == 0 ? samples.size() : std::min(limit, samples.size());

  std::ofstream file;
  if (!out_path.empty()) {
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    file.open(out_path);
  }
  std::ostream& sink = out_path.empty() ? out : file;

  std::vector<double> all_weights;
  plot::Series bridge{"bridge", "crimson", {}, {}}, noise{"noise", "gray", {}, {}},
      regular{"regular", "steelblue", {}, {}};
  const Rng dts_base = SeededRng(seed, "inspect/dts");
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[i];
    const auto history = model.Clip(s.history);
    const std::size_t offset = s.history.size() - history.size();
    StabilityReport report = model.Assess(history);
    const bool counterfactual = model.UsesCounterfactual(report);
    WeightedSequence weighted = model.CounterfactualWeights(history);
    nlohmann::ordered_json j;
    j["user_id"] = corpus.sequences[s.user].user_id;
    j["con"] = report.con;
    j["s_k"] = report.s_k;
    j["verdict"] = VerdictName(report.verdict);
    j["path"] = counterfactual ? "counterfactual" : "dts";
    if (!counterfactual && static_cast<int>(history.size()) > model.config().dts.min_history) {
      Rng rng = dts_base.Derive(i);
      j["removal_mask"] = DtsSimplify(report.con, model.config().dts, rng).removed;
    } else {
      j["removal_mask"] = nullptr;
    }
    j["weights_applied"] = counterfactual;
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& r : weighted.records) {
      nlohmann::ordered_json rj;
      rj["position"] = r.position;
      rj["loss_without"] = r.loss_without;
      rj["loss_with"] = r.loss_with;
      rj["per"] = r.per;
      rj["weight"] = r.weight;
      all_weights.push_back(r.weight);
      if (corpus.labels) {
        const auto& labels = (*corpus.labels)[s.user];
        const auto label = labels.at(offset + static_cast<std::size_t>(r.position) - 1);
        rj["label"] = std::string(1, static_cast<char>(label));
        plot::Series& series = label == data::PositionLabel::kBridge  ? bridge
                               : label == data::PositionLabel::kNoise ? noise
                                                                      : regular;
        series.x.push_back(static_cast<double>(offset + r.position));
        series.y.push_back(r.per);
      }
      records.push_back(rj);
    }
    j["per_records"] = records;
    sink << j.dump() << "\n";
  }

  if (!plot_dir.empty()) {
    const fs::path pd = plot_dir;
    plot::Histogram(pd / "weights_histogram.svg", "Counterfactual weights", all_weights, 30, "weight");
    if (corpus.labels) {
      plot::ScatterPlot(pd / "per_vs_label.svg", "PER by ground-truth label", {regular, noise, bridge},
                        "position", "PER");
    }
    const fs::path epochs_path = fs::path(ckpt).parent_path() / "epochs.jsonl";
    if (fs::exists(epochs_path)) {
      plot::Series diffusion{"diffusion", "steelblue", {}, {}}, aux{"aux", "darkorange", {}, {}};
      std::ifstream in(epochs_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto e = nlohmann::json::parse(line);
        diffusion.x.push_back(e["epoch"].get<double>());
        diffusion.y.push_back(e["loss_diffusion"].get<double>());
        aux.x.push_back(e["epoch"].get<double>());
        aux.y.push_back(e["loss_aux"].get<double>());
      }
      plot::LinePlot(pd / "loss_curve.svg", "Training loss", {diffusion, aux}, "epoch", "loss");
    }
  }
  return 0;
}

// ---- entry point ----------------------------------------------------------

inline int Run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"CARD: counterfactual attention regulated diffusion recommender"};
  app.require_subcommand(1);

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "filter a raw interaction log into a corpus");
  std::string pre_input, pre_out;
  int pre_min_count = 5, pre_min_length = 3;
  preprocess->add_option("--input", pre_input, "TSV user_id, item_id, timestamp")->required();
  preprocess->add_option("--out", pre_out, "output corpus directory")->required();
  preprocess->add_option("--min-count", pre_min_count, "minimum interactions per user and item");
  preprocess->add_option("--min-length", pre_min_length, "minimum sequence length");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic interest-shift corpus");
  data::SyntheticSpec spec;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  synth->add_option("--users", spec.n_users);
  synth->add_option("--items", spec.n_items);
  synth->add_option("--clusters", spec.n_clusters);
  synth->add_option("--shift-prob", spec.shift_prob);
  synth->add_option("--noise-rate", spec.noise_rate);
  synth->add_option("--min-len", spec.min_length);
  synth->add_option("--max-len", spec.max_length);
  synth->add_option("--latent-dim", spec.latent_dim);
  synth->add_option("--separation", spec.cluster_separation);
  synth->add_option("--spread", spec.item_spread);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train a model on a corpus directory");
  std::string train_data, train_config, train_out;
  ConfigFlags train_flags;
  train->add_option("--data", train_data, "corpus directory (default $CARD_DATA_DIR)");
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--out", train_out, "output directory (default <data>/model)");
  train_flags.Attach(train);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "leave-one-out ranking evaluation");
  std::string eval_ckpt, eval_data, eval_seeds = "1", eval_split = "test", eval_out, eval_csv;
  ConfigFlags eval_flags;
  evaluate->add_option("--ckpt", eval_ckpt)->required();
  evaluate->add_option("--data", eval_data);
  evaluate->add_option("--seeds", eval_seeds, "comma-separated evaluation seeds");
  evaluate->add_option("--split", eval_split, "test | valid");
  evaluate->add_option("--out", eval_out, "report JSON path");
  evaluate->add_option("--csv", eval_csv, "append one CSV row per seed");
  eval_flags.Attach(evaluate, /*include_seed=*/false);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and compare ablation variants");
  std::string abl_data, abl_config, abl_variants = "full,no_routing,no_attention", abl_seeds = "1,2,3,4,5",
                                    abl_out;
  ConfigFlags abl_flags;
  ablate->add_option("--data", abl_data);
  ablate->add_option("--config", abl_config);
  ablate->add_option("--variants", abl_variants, "comma-separated subset of full,no_routing,no_attention");
  ablate->add_option("--seeds", abl_seeds);
  ablate->add_option("--out", abl_out, "output directory (default <data>/ablation)");
  abl_flags.Attach(ablate, /*include_seed=*/false);

  // inspect
  auto* inspect = app.add_subcommand("inspect", "per-sequence stability, DTS and PER diagnostics");
  std::string ins_ckpt, ins_data, ins_split = "test", ins_out, ins_plot;
  std::size_t ins_limit = 0;
  std::uint64_t ins_seed = 1;
  inspect->add_option("--ckpt", ins_ckpt)->required();
  inspect->add_option("--data", ins_data);
  inspect->add_option("--split", ins_split);
  inspect->add_option("--limit", ins_limit, "number of sequences (0 = all)");
  inspect->add_option("--seed", ins_seed, "seed for DTS removal draws");
  inspect->add_option("--out", ins_out, "JSON lines output (default stdout)");
  inspect->add_option("--plot", ins_plot, "directory for SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    if (message.empty()) message = e.get_name();
    err << "error: " << message << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*preprocess) return Preprocess(pre_input, pre_out, pre_min_count, pre_min_length, out);
    if (*synth) return Synth(spec, synth_seed, synth_out, out);
    if (*train) {
      return Train(BuildConfig(train_config, train_flags.Overrides()), ResolveDataDir(train_data),
                   train_out, out);
    }
    if (*evaluate) {
      return Evaluate(eval_ckpt, eval_data, ParseSeeds(eval_seeds), eval_split, eval_flags.Overrides(),
                      eval_out, eval_csv, out);
    }
    if (*ablate) {
      std::vector<std::string> variants = data::SplitString(abl_variants, ',');
      for (const auto& v : variants) {
        if (!IsVariant(v)) throw ConfigError("unknown variant '" + v + "'");
      }
      return Ablate(BuildConfig(abl_config, abl_flags.Overrides()), ResolveDataDir(abl_data), variants,
                    ParseSeeds(abl_seeds), abl_out, out);
    }
    if (*inspect) {
      return Inspect(ins_ckpt, ins_data, ins_split, ins_limit, ins_seed, ins_out, ins_plot, out);
    }
  } catch (const std::exception& e) {
    std::string message = e.what();
    if (auto pos = message.find('\n'); pos != std::string::npos) message = message.substr(0, pos);
    err << "error: " << message << "\n";
    return 1;
  }
  return 1;
}

}  // namespace card::cli
