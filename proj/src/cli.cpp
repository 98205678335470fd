/*
 * Copyright 2026 The attnagg Authors.
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


#include "attnagg/cli.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

#include "attnagg/ablation.hpp"
#include "attnagg/data.hpp"
#include "attnagg/error.hpp"
#include "attnagg/gradcheck.hpp"
#include "attnagg/localization.hpp"
#include "attnagg/metrics.hpp"
#include "attnagg/tensor_io.hpp"
#include "attnagg/trainer.hpp"

#ifndef ATTNAGG_VERSION
#define ATTNAGG_VERSION "unknown"
#endif

namespace attnagg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kTrainFraction = 0.8;
constexpr double kValFraction = 0.1;
constexpr double kTestFraction = 0.1;

std::size_t Threads() {
  const char* env = std::getenv("ATTNAGG_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError("ATTNAGG_THREADS must be a positive integer");
  return static_cast<std::size_t>(n);
}

json ReadJson(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw UsageError(std::string("cannot open ") + what + " " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string(what) + " " + path + " is not valid JSON: " + e.what());
  }
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out || !(out << text)) Fail(ErrorCode::kIo, "cannot write " + path.string());
}

void WriteManifest(const fs::path& path, const std::string& command, json inputs,
                   json config, std::optional<std::uint64_t> seed, const fs::path& output) {
  json m = {{"command", command},
            {"version", ATTNAGG_VERSION},
            {"inputs", std::move(inputs)},
            {"config", std::move(config)},
            {"seed", seed ? json(*seed) : json(nullptr)},
            {"output", output.string()},
            {"threads", Threads()}};
  WriteText(path, m.dump(2) + "\n");
}

// Manifest location for commands whose --out is a single file.
fs::path SidecarManifest(const fs::path& out) {
  return out.parent_path() / (out.filename().string() + ".manifest.json");
}

Dataset LoadData(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "spec.json")) throw UsageError("no dataset at " + dir);
  return LoadDataset(dir);
}

Splits DefaultSplits(const Dataset& data) {
  return Split(data, kTrainFraction, kValFraction, kTestFraction, data.spec.seed);
}

const Dataset& PickSplit(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  return s.test;
}

std::vector<std::uint64_t> ParseIds(const std::string& text) {
  std::vector<std::uint64_t> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      ids.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a sample id: " + item);
    }
  }
  if (ids.empty()) throw UsageError("no sample ids given");
  return ids;
}

// `sample_id,p_0,...` with a header line.
std::vector<double> ReadPredictions(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open predictions " + path);
  const std::size_t c = data.num_attributes();
  std::map<std::uint64_t, std::vector<double>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    std::getline(row, field, ',');
    const auto id = ParseIds(field).front();
    std::vector<double> p;
    while (std::getline(row, field, ',')) p.push_back(ParseDouble(field));
    if (p.size() != c) {
      throw UsageError("predictions have " + std::to_string(p.size()) +
                       " attributes, dataset has " + std::to_string(c));
    }
    rows[id] = std::move(p);
  }
  std::vector<double> probs;
  for (const auto& s : data.samples) {
    auto it = rows.find(s.id);
    if (it == rows.end()) throw UsageError("predictions lack sample " + std::to_string(s.id));
    probs.insert(probs.end(), it->second.begin(), it->second.end());
  }
  return probs;
}

int GenData(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  DatasetSpec spec;
  json spec_json = json::object();
  if (!spec_path.empty()) spec_json = ReadJson(spec_path, "spec");
  spec = SpecFromJson(spec_json);
  WriteManifest(fs::path(out_dir) / "manifest.json", "gen-data",
                {{"spec", spec_path.empty() ? json(nullptr) : json(spec_path)}}, SpecToJson(spec),
                spec.seed, out_dir);
  const auto data = Generate(spec);
  SaveDataset(data, out_dir);
  const auto ratios = ImbalanceRatios(data.LabelMatrix(), data.num_attributes());
  for (std::size_t a = 0; a < ratios.size(); ++a) out << "attr_" << a << " " << ratios[a] << "\n";
  return kExitOk;
}

int Train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
          bool resume, std::ostream& out) {
  TrainConfig config;
  if (!config_path.empty()) config = ConfigFromJson(ReadJson(config_path, "config"));
  const auto data = LoadData(data_dir);
  const auto splits = DefaultSplits(data);
  const fs::path dir(out_dir);
  const bool resuming = resume && fs::exists(dir / "trainer_state.json");
  if (!resuming) {
    WriteManifest(dir / "manifest.json", "train",
                  {{"config", config_path.empty() ? json(nullptr) : json(config_path)},
                   {"data", data_dir},
                   {"split", {kTrainFraction, kValFraction, kTestFraction}}},
                  ConfigToJson(config), config.seed, dir);
  }
  auto trainer = resuming ? Trainer::Resume(dir, splits.train, splits.val)
                          : Trainer(config, splits.train, splits.val);
  std::size_t printed = trainer.records().size();
  auto report = [&] {
    for (; printed < trainer.records().size(); ++printed) {
      const auto& r = trainer.records()[printed];
      out << "epoch " << r.epoch << " " << r.phase << " lr " << r.lr << " loss " << r.loss
          << " map " << r.val.map << " f1 " << r.val.example.f1 << "\n";
    }
  };
  if (trainer.epoch() == 0) trainer.SaveCheckpoint(dir);
  while (!trainer.finished()) {
    trainer.RunEpoch();
    trainer.SaveCheckpoint(dir);
    report();
  }
  return kExitOk;
}

int Eval(const std::string& checkpoint, const std::string& predictions,
         const std::string& data_dir, const std::string& split, const std::string& protocol,
         double min_prior, double threshold, const std::string& out_path, std::ostream& out,
         std::ostream& err) {
  if (checkpoint.empty() == predictions.empty()) {
    throw UsageError("give exactly one of --checkpoint and --predictions");
  }
  const auto data = LoadData(data_dir);
  const auto splits = DefaultSplits(data);
  const Dataset& part = PickSplit(splits, split);
  WriteManifest(SidecarManifest(out_path), "eval",
                {{"checkpoint", checkpoint.empty() ? json(nullptr) : json(checkpoint)},
                 {"predictions", predictions.empty() ? json(nullptr) : json(predictions)},
                 {"data", data_dir},
                 {"split", split}},
                {{"protocol", protocol}, {"min_prior", min_prior}, {"threshold", threshold}},
                std::nullopt, out_path);
  std::vector<double> probs;
  if (!predictions.empty()) {
    probs = ReadPredictions(predictions, part);
  } else {
    if (!fs::exists(fs::path(checkpoint) / "train_config.json")) {
      throw UsageError("no checkpoint at " + checkpoint);
    }
    auto model = LoadTrainedModel(checkpoint, part);
    probs = Predict(model, part, 32);
  }
  const auto labels = part.LabelMatrix();
  const std::size_t c = part.num_attributes();
  const auto priors = PriorsFrom(labels, c);
  std::vector<std::size_t> attributes;
  for (std::size_t a = 0; a < c; ++a) {
    if (priors[a] < min_prior) continue;
    // AP needs a positive; mA also needs a negative.
    if (priors[a] == 0.0 || (protocol == "peta" && priors[a] == 1.0)) {
      err << "skipping attr_" << a << ": only one class in the " << split << " split\n";
      continue;
    }
    attributes.push_back(a);
  }
  if (attributes.empty()) throw UsageError("no attribute can be evaluated on this split");
  const auto report = EvaluateSubset(probs, labels, c,
                                     protocol == "peta" ? Protocol::kPeta : Protocol::kMap,
                                     threshold, attributes);
  const auto j = ReportToJson(report);
  WriteText(out_path, j.dump(2) + "\n");
  out << j.dump() << "\n";
  return kExitOk;
}

int Gradcheck(const std::string& scale, std::uint64_t seed, const std::string& fault,
              std::ostream& out, std::ostream& err) {
  autodiff::SetGradientFault(fault);
  const auto results = scale == "model" ? ModelGradcheck(seed) : OpGradcheck(seed);
  autodiff::SetGradientFault("");
  std::vector<std::string> failing;
  for (const auto& r : results) {
    out << r.component << " " << FormatDouble(r.max_error) << " " << r.tolerance << " "
        << (r.passed() ? "ok" : "FAIL") << "\n";
    if (!r.passed()) failing.push_back(r.component);
  }
  if (failing.empty()) return kExitOk;
  err << "gradient check failed:";
  for (const auto& f : failing) err << " " << f;
  err << "\n";
  return kExitCheckFailed;
}

int ExportMaskCmd(const std::string& checkpoint, const std::string& data_dir,
                  const std::string& samples, const std::string& out_dir, std::ostream& out) {
  const auto data = LoadData(data_dir);
  const auto ids = ParseIds(samples);
  std::vector<std::size_t> positions;
  for (auto id : ids) {
    auto it = std::find_if(data.samples.begin(), data.samples.end(),
                           [&](const Sample& s) { return s.id == id; });
    if (it == data.samples.end()) Fail(ErrorCode::kUnknownSample, "no sample " + std::to_string(id));
    positions.push_back(static_cast<std::size_t>(it - data.samples.begin()));
  }
  if (!fs::exists(fs::path(checkpoint) / "train_config.json")) {
    throw UsageError("no checkpoint at " + checkpoint);
  }
  WriteManifest(fs::path(out_dir) / "manifest.json", "export-masks",
                {{"checkpoint", checkpoint}, {"data", data_dir}, {"samples", ids}}, json::object(),
                std::nullopt, out_dir);
  auto model = LoadTrainedModel(checkpoint, data);
  const auto result = Localize(model, data, positions, true);
  ExportMasks(out_dir, result.masks);
  WriteLocalizationCsv(fs::path(out_dir) / "localization.csv", result.rows);
  const auto summary = Summarize(result.rows);
  out << "samples with true positives " << summary.samples << ", above baseline "
      << summary.above << ", mean in-cue mass " << summary.mean_mass << " vs "
      << summary.mean_baseline << "\n";
  return kExitOk;
}

int Ablation(const std::string& base_path, const std::string& data_dir, const std::string& seeds,
             const std::string& out_path, std::ostream& out) {
  TrainConfig base;
  if (!base_path.empty()) base = ConfigFromJson(ReadJson(base_path, "base config"));
  const auto seed_list = ParseIds(seeds);
  Dataset data = data_dir.empty() ? Generate(DatasetSpec{}) : LoadData(data_dir);
  const auto splits = DefaultSplits(data);
  WriteManifest(SidecarManifest(out_path), "ablation",
                {{"base", base_path.empty() ? json(nullptr) : json(base_path)},
                 {"data", data_dir.empty() ? json(nullptr) : json(data_dir)},
                 {"dataset_spec", SpecToJson(data.spec)}},
                {{"base", ConfigToJson(base)}, {"seeds", seed_list}}, std::nullopt, out_path);
  const auto results = RunAblation(
      base, splits.train, splits.val, DefaultAblationRows(), seed_list,
      [&](const AblationRow& row, std::uint64_t seed, Trainer& t) {
        const auto& v = t.records().back().val;
        out << "Lw=" << row.weighted_focal << " Attention=" << row.attention
            << " La=" << row.attention_loss << " Multiscale=" << row.multiscale << " seed "
            << seed << " map " << v.map << " f1 " << v.example.f1 << std::endl;
      });
  WriteText(out_path, AblationCsv(results));
  return kExitOk;
}

int ExitFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidSpec:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kUnknownSample:
    case ErrorCode::kBadFractions:
    case ErrorCode::kPriorOutOfRange:
    case ErrorCode::kNoPositives:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale attention for imbalanced attribute classification", "attnagg"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "Dataset spec JSON (defaults when omitted)");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string config_path, data_dir;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "Training config JSON (defaults when omitted)");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Checkpoint directory")->required();
  train->add_flag("--resume", resume, "Continue from the checkpoint in --out");

  std::string checkpoint, predictions, split = "test", protocol = "map", out_path;
  double min_prior = 0.0, threshold = 0.5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a predictions file");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  eval->add_option("--predictions", predictions, "CSV of sample_id and probabilities");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--split", split, "Split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--protocol", protocol, "Metric protocol")
      ->check(CLI::IsMember({"map", "peta"}));
  eval->add_option("--min-prior", min_prior, "Skip attributes rarer than this")
      ->check(CLI::Range(0.0, 1.0));
  eval->add_option("--threshold", threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--out", out_path, "Report JSON")->required();

  std::string scale = "op", fault;
  std::uint64_t seed = 1;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--scale", scale, "op or model")->check(CLI::IsMember({"op", "model"}));
  grad->add_option("--seed", seed, "Fixture seed");
  grad->add_option("--inject-fault", fault)->group("");

  std::string samples;
  auto* masks = app.add_subcommand("export-masks", "Write attention masks and localization");
  masks->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  masks->add_option("--data", data_dir, "Dataset directory")->required();
  masks->add_option("--samples", samples, "Comma-separated sample ids")->required();
  masks->add_option("--out", out_dir, "Output directory")->required();

  std::string base_path, seeds = "1,2,3";
  auto* ablation = app.add_subcommand("ablation", "Run the component ablation");
  ablation->add_option("--base", base_path, "Base training config JSON");
  ablation->add_option("--data", data_dir, "Dataset directory (default spec when omitted)");
  ablation->add_option("--seeds", seeds, "Comma-separated seeds");
  ablation->add_option("--out", out_path, "Result CSV")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }

  try {
    Eigen::setNbThreads(static_cast<int>(Threads()));
    if (*gen) return GenData(spec_path, out_dir, out);
    if (*train) return Train(config_path, data_dir, out_dir, resume, out);
    if (*eval) {
      return Eval(checkpoint, predictions, data_dir, split, protocol, min_prior, threshold,
                  out_path, out, err);
    }
    if (*grad) return Gradcheck(scale, seed, fault, out, err);
    if (*masks) return ExportMaskCmd(checkpoint, data_dir, samples, out_dir, out);
    if (*ablation) return Ablation(base_path, data_dir, seeds, out_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace attnagg
