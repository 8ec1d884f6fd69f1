// Copyright 2026 The poet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "poet/config.h"
#include "poet/data.h"
#include "poet/error.h"
#include "poet/gradcheck.h"
#include "poet/log.h"
#include "poet/matching.h"
#include "poet/metrics.h"
#include "poet/pose_io.h"
#include "poet/tape.h"
#include "poet/training.h"

namespace poet::cli {

namespace {

using nlohmann::json;

// Errors the user can fix by changing arguments, config or input files.
bool IsUsageError(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError:
    case ErrorCode::kMissingField:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kTooManyInstances:
    case ErrorCode::kBadDModel:
    case ErrorCode::kSizeMismatch:
      return true;
    default:
      return false;
  }
}

json OptionalJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json EvalJson(const EvalResult& r) {
  json thresholds = json::array();
  for (const auto& v : r.ap_per_threshold) thresholds.push_back(OptionalJson(v));
  return {{"ap", OptionalJson(r.ap)},     {"ap50", OptionalJson(r.ap50)},
          {"ap75", OptionalJson(r.ap75)}, {"ap_m", OptionalJson(r.ap_m)},
          {"ap_l", OptionalJson(r.ap_l)}, {"ar", OptionalJson(r.ar)},
          {"ar50", OptionalJson(r.ar50)}, {"ar75", OptionalJson(r.ar75)},
          {"ar_m", OptionalJson(r.ar_m)}, {"ar_l", OptionalJson(r.ar_l)},
          {"ap_per_threshold", thresholds}};
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string resume;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
};

int Train(const TrainArgs& a, std::ostream& out) {
  RunConfig config = a.config.empty() ? RunConfig{} : LoadRunConfig(a.config);
  for (const std::string& o : a.overrides) ApplyOverride(config, o);
  if (!a.out_dir.empty()) config.out_dir = a.out_dir;
  if (a.seed) config.seed = *a.seed;
  if (a.threads) config.train.threads = *a.threads;
  config.Validate();

  Trainer trainer(config, PrepareRunData(config));
  if (!a.resume.empty()) trainer.Resume(a.resume);
  const std::string final_checkpoint = trainer.Run();
  out << "final checkpoint: " << final_checkpoint << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string data;
  std::string split = "val";
  std::string predictions;
  std::string json_path;
  bool per_layer = false;
  std::optional<double> threshold;
  std::optional<int> top_k;
};

Dataset EvalDataset(const EvalArgs& a, const RunConfig* config) {
  if (!a.data.empty()) return LoadDataset(a.data);
  if (!config) {
    throw Error(ErrorCode::kInvalidConfig, "eval needs --data, --checkpoint or --config");
  }
  RunData data = PrepareRunData(*config);
  if (a.split == "train") return std::move(data.train);
  if (data.val.samples.empty()) throw Error(ErrorCode::kInvalidConfig, "run has no validation split");
  return std::move(data.val);
}

std::vector<std::vector<ScoredPose>> ExternalDetections(const std::string& path, const Dataset& ds,
                                                        const EvalSettings& settings) {
  std::vector<int64_t> ids;
  for (const Sample& s : ds.samples) ids.push_back(s.image_id);

  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  char first = ' ';
  while (in.get(first) && std::isspace(static_cast<unsigned char>(first))) {
  }
  if (first == '[') {
    in.seekg(0);
    std::ostringstream text;
    text << in.rdbuf();
    return ParseCocoResults(text.str(), ids);
  }

  const std::vector<PredictionRecord> records = ReadPredictionsJsonl(path);
  std::map<int64_t, size_t> index;
  for (size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
  std::vector<std::vector<ScoredPose>> dets(ds.samples.size());
  for (size_t r = 0; r < records.size(); ++r) {
    size_t slot = r;
    if (records[r].image_id) {
      const auto it = index.find(*records[r].image_id);
      if (it == index.end()) {
        throw Error(ErrorCode::kParseError, "record " + std::to_string(r + 1) + ": image_id " +
                                                std::to_string(*records[r].image_id) +
                                                " is not in the dataset");
      }
      slot = it->second;
    } else if (r >= ds.samples.size()) {
      throw Error(ErrorCode::kSizeMismatch, "more prediction records than images");
    }
    const std::vector<ScoredPose> d =
        SelectDetections(records[r].preds, ds.samples[slot].image_size, settings);
    dets[slot].insert(dets[slot].end(), d.begin(), d.end());
  }
  return dets;
}

int Eval(const EvalArgs& a, std::ostream& out) {
  std::optional<LoadedCheckpoint> ck;
  std::optional<RunConfig> config;
  if (!a.checkpoint.empty()) {
    ck = LoadTrainingCheckpoint(a.checkpoint);
    config = ck->config;
  } else if (!a.config.empty()) {
    config = LoadRunConfig(a.config);
  }
  if (a.predictions.empty() && !ck) {
    throw Error(ErrorCode::kInvalidConfig, "eval needs --checkpoint or --predictions");
  }
  const Dataset ds = EvalDataset(a, config ? &*config : nullptr);

  EvalSettings settings;
  settings.score_threshold = config ? config->train.score_threshold : 0.5;
  settings.top_k = config ? config->train.top_k : 0;
  if (a.threshold) settings.score_threshold = *a.threshold;
  if (a.top_k) settings.top_k = *a.top_k;

  json report;
  out << FormatEvalHeader() << "\n";
  if (!a.predictions.empty()) {
    EvalOptions options;
    options.oks = DefaultOksParams(ds.num_keypoints);
    const EvalResult r = EvaluateDetections(ExternalDetections(a.predictions, ds, settings),
                                            GroundTruthOf(ds), options);
    out << FormatEvalRow(r) << "\n";
    report = {{"source", a.predictions}, {"result", EvalJson(r)}};
  } else {
    const PoetModel model = ModelFromCheckpoint(*ck);
    if (ds.num_keypoints != model.config().num_keypoints) {
      throw Error(ErrorCode::kSizeMismatch, "dataset has K=" + std::to_string(ds.num_keypoints) +
                                                " but the checkpoint expects K=" +
                                                std::to_string(model.config().num_keypoints));
    }
    const EvalReport r = Evaluate(model, ds, settings, config->loss, config->train.batch_size);
    json layers = json::array();
    for (size_t l = 0; l < r.per_layer.size(); ++l) {
      if (a.per_layer) out << FormatEvalRow(r.per_layer[l]) << "  layer " << l + 1 << "\n";
      layers.push_back(EvalJson(r.per_layer[l]));
    }
    if (!a.per_layer) out << FormatEvalRow(r.final) << "\n";
    report = {{"checkpoint", a.checkpoint}, {"epoch", ck->epoch}, {"result", EvalJson(r.final)},
              {"per_layer", layers}};
  }
  if (!a.json_path.empty()) {
    std::ofstream file(a.json_path, std::ios::trunc);
    if (!file) throw Error(ErrorCode::kIoError, "cannot write " + a.json_path);
    file << report.dump(2) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- match

struct MatchArgs {
  std::string targets;
  std::string preds;
  LossWeights weights;
  bool oracle = false;
  bool csv = false;
};

int Match(const MatchArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<TargetRecord> targets = ReadTargetsJsonl(a.targets);
  const std::vector<PredictionRecord> preds = ReadPredictionsJsonl(a.preds);
  if (targets.size() != preds.size()) {
    err << "error: " << targets.size() << " target records but " << preds.size()
        << " prediction records\n";
    return kExitUsage;
  }
  bool all_agree = true;
  if (a.csv) out << "record,target,prediction,cost\n";
  for (size_t r = 0; r < targets.size(); ++r) {
    const TargetSet& t = targets[r].targets;
    const PredictionSet& p = preds[r].preds;
    if (static_cast<size_t>(t.size()) != p.size()) {
      err << "error: line " << r + 1 << ": " << t.size() << " target slots but " << p.size()
          << " prediction slots\n";
      return kExitUsage;
    }
    CostMatrix cost;
    try {
      cost = BuildCostMatrix(t, p, a.weights);
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(r + 1) + ": " + e.message());
    }
    const Assignment best = HungarianAssign(cost);
    if (a.csv) {
      for (int i = 0; i < t.size(); ++i) {
        const int j = best.perm[static_cast<size_t>(i)];
        out << r + 1 << "," << i << "," << j << "," << std::setprecision(17) << cost(i, j) << "\n";
      }
    } else {
      out << "record " << r + 1 << "\n";
      out << std::setprecision(10);
      for (int i = 0; i < t.size(); ++i) {
        const int j = best.perm[static_cast<size_t>(i)];
        out << "  target " << i << " -> prediction " << j << "  cost " << cost(i, j) << "\n";
      }
      out << "  total " << best.total_cost << "\n";
    }
    if (a.oracle) {
      if (cost.n() > 8) {
        err << "record " << r + 1 << ": oracle skipped for n = " << cost.n() << " > 8\n";
        continue;
      }
      const Assignment brute = BruteForceAssign(cost);
      const bool agree = AssignmentCost(cost, best.perm) == AssignmentCost(cost, brute.perm);
      all_agree = all_agree && agree;
      (a.csv ? err : out) << "  oracle " << (agree ? "OK" : "MISMATCH") << " (brute force total "
                          << std::setprecision(10) << brute.total_cost << ")\n";
    }
  }
  return all_agree ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------ gradcheck

struct GradcheckArgs {
  GradcheckOptions options;
  std::vector<std::string> components;
  bool corrupt = false;
};

int Gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> components = a.components.empty() ? GradcheckComponents() : a.components;
  ad::testing::SetBackwardCorruption(a.corrupt);
  bool ok = true;
  out << std::left << std::setw(8) << "component" << "  max_rel_error  checked  skipped  status\n";
  for (const std::string& c : components) {
    const GradcheckResult r = RunGradcheck(c, a.options);
    out << std::left << std::setw(9) << r.component << "  " << std::scientific << std::setprecision(3)
        << std::setw(13) << r.max_relative_error << "  " << std::setw(7) << r.entries_checked
        << "  " << std::setw(7) << r.entries_skipped << "  " << (r.passed ? "PASS" : "FAIL") << "\n";
    if (!r.passed) {
      err << "gradcheck failed: component '" << r.component << "' max relative error "
          << r.max_relative_error << " (tolerance " << a.options.tolerance << ")\n";
      ok = false;
    }
  }
  ad::testing::SetBackwardCorruption(false);
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthConfig config;
  std::string out = "synth.json";
};

int Synth(const SynthArgs& a, std::ostream& out) {
  const Dataset ds = SynthGenerate(a.config);
  const std::filesystem::path parent = std::filesystem::path(a.out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const std::string manifest = SaveSynthCache(ds, a.config, a.out);
  const DatasetStats stats = ComputeStats(ds);
  out << "wrote " << manifest << "\n";
  out << "samples: " << ds.samples.size() << "\n";
  out << "instances per sample:";
  for (const auto& [n, count] : stats.instances_histogram) out << " " << n << ":" << count;
  out << "\n";
  out << "keypoints: " << stats.keypoints << " (visible " << stats.visible_keypoints << ")\n";
  out << "visibility rate: " << std::fixed << std::setprecision(4) << stats.visibility_rate() << "\n";
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Set-prediction multi-person pose estimation toolkit", "poet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "poet 0.1.0");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config, "Run config file (section.key = value)");
  train_cmd->add_option("--set", train.overrides, "Override a config key, e.g. optimizer.lr_transformer=1e-4");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory (overrides run.out_dir)");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--seed", train.seed, "Run seed (overrides run.seed)");
  train_cmd->add_option("--threads", train.threads, "Worker threads per batch")->check(CLI::PositiveNumber);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or external predictions");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Training checkpoint");
  eval_cmd->add_option("--config", eval.config, "Run config describing the data (with --predictions)");
  eval_cmd->add_option("--data", eval.data, "COCO annotation file or synthetic manifest");
  eval_cmd->add_option("--split", eval.split, "Split of the run's data when --data is absent")
      ->check(CLI::IsMember({"train", "val"}));
  eval_cmd->add_option("--predictions", eval.predictions,
                       "JSON-lines predictions or COCO results file; bypasses the model");
  eval_cmd->add_option("--json", eval.json_path, "Write the results as JSON");
  eval_cmd->add_flag("--per-layer", eval.per_layer, "One row per decoder layer");
  eval_cmd->add_option("--threshold", eval.threshold, "Minimum person probability of a detection");
  eval_cmd->add_option("--top-k", eval.top_k, "Keep at most k detections per image (0 = all)");

  MatchArgs match;
  CLI::App* match_cmd = app.add_subcommand("match", "Optimal assignment between target and prediction sets");
  match_cmd->add_option("targets", match.targets, "JSON-lines target sets")->required();
  match_cmd->add_option("predictions", match.preds, "JSON-lines prediction sets")->required();
  match_cmd->add_option("--lambda-l1", match.weights.lambda_l1, "Keypoint offset weight");
  match_cmd->add_option("--lambda-l2", match.weights.lambda_l2, "Visibility weight");
  match_cmd->add_option("--lambda-ctr", match.weights.lambda_ctr, "Center weight");
  match_cmd->add_option("--nonobject-weight", match.weights.nonobject_class_weight,
                        "Class weight of non-object targets");
  match_cmd->add_flag("--oracle", match.oracle, "Cross-check against brute force (n <= 8)");
  match_cmd->add_flag("--csv", match.csv, "Print record,target,prediction,cost rows");

  GradcheckArgs grad;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad_cmd->add_option("--seed", grad.options.seed, "Seed of the random instances");
  grad_cmd->add_option("--component", grad.components, "ops, loss or model (repeatable)")
      ->check(CLI::IsMember(GradcheckComponents()));
  grad_cmd->add_option("--instances", grad.options.instances, "Random loss instances")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--max-slots", grad.options.max_slots, "Largest N of a loss instance")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--max-keypoints", grad.options.max_keypoints, "Largest K of a loss instance")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad.options.tolerance, "Maximum relative error");
  grad_cmd->add_flag("--corrupt-backward", grad.corrupt, "Test hook: perturb one backward rule")
      ->group("");

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset cache");
  synth_cmd->add_option("--samples", synth.config.num_samples, "Number of images");
  synth_cmd->add_option("--seed", synth.config.seed, "Generator seed");
  synth_cmd->add_option("--occlusion", synth.config.occlusion, "Probability a keypoint is occluded");
  synth_cmd->add_option("--min-instances", synth.config.min_instances, "Fewest persons per image");
  synth_cmd->add_option("--max-instances", synth.config.max_instances, "Most persons per image");
  synth_cmd->add_option("--image-size", synth.config.image_size, "Image side length in pixels");
  synth_cmd->add_option("--keypoints", synth.config.num_keypoints, "Keypoints per person");
  synth_cmd->add_option("--channels", synth.config.channels, "Image channels");
  synth_cmd->add_option("--out", synth.out, "Manifest path; the data goes next to it as .bin");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  InitLogging();
  try {
    if (*train_cmd) return Train(train, out);
    if (*eval_cmd) return Eval(eval, out);
    if (*match_cmd) return Match(match, out, err);
    if (*grad_cmd) return Gradcheck(grad, out, err);
    if (*synth_cmd) return Synth(synth, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return IsUsageError(e.code()) ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace poet::cli
