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

#include "poet/training.h"

#include <algorithm>
#include <charconv>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "poet/error.h"
#include "poet/log.h"
#include "poet/matching.h"
#include "poet/ops.h"
#include "poet/pose.h"

namespace poet {

using ad::Tensor;

namespace {

std::string Num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string Num(const std::optional<double>& v) { return v ? Num(*v) : std::string(); }

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.total += b.total;
  a.class_nll += b.class_nll;
  a.keypoint_l1 += b.keypoint_l1;
  a.visibility_l2 += b.visibility_l2;
  a.center_l2 += b.center_l2;
  return a;
}

LossBreakdown Scaled(LossBreakdown a, double s) {
  a.total *= s;
  a.class_nll *= s;
  a.keypoint_l1 *= s;
  a.visibility_l2 *= s;
  a.center_l2 *= s;
  return a;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers and rethrows the
// first failure in index order.
template <typename Fn>
void ParallelFor(int n, int threads, Fn fn) {
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
  auto guarded = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<size_t>(i)] = std::current_exception();
    }
  };
  const int workers = std::min(threads, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) guarded(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += workers) guarded(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

const Tensor& ImageOf(const Sample& s) {
  if (s.image.empty()) {
    throw Error(ErrorCode::kInvalidConfig,
                "sample " + std::to_string(s.image_id) + " has no image; the model needs pixels");
  }
  return s.image;
}

}  // namespace

SampleStep ComputeSampleStep(const PoetModel& model, const Tensor& image, const TargetSet& targets,
                             const LossWeights& weights, const LossNormalizers& norms, bool train,
                             Rng& rng, bool aux_loss) {
  ad::Tape tape;
  const std::vector<ad::Var> params = model.Bind(tape, true);
  const ForwardOutput out = model.Forward(tape, params, image, train, rng);
  const PredictionSet preds = ToPredictionSet(ValuesOf(out.final()));

  SampleStep step;
  step.assignment = HungarianAssign(BuildCostMatrix(targets, preds, weights));
  const LossVars loss = RecordHungarianLoss(targets, out.final(), step.assignment, weights, norms);
  step.loss = loss.values();
  ad::Var objective = loss.total;
  if (aux_loss) {
    for (size_t l = 0; l + 1 < out.per_layer.size(); ++l) {
      const PredictionVars& layer = out.per_layer[l];
      const Assignment a =
          HungarianAssign(BuildCostMatrix(targets, ToPredictionSet(ValuesOf(layer)), weights));
      objective = ad::Add(objective, RecordHungarianLoss(targets, layer, a, weights, norms).total);
    }
  }
  const ad::Gradients grads = tape.Backward(objective);
  step.grads.reserve(params.size());
  for (const ad::Var& p : params) step.grads.push_back(grads.Of(p));
  return step;
}

EpochStats TrainEpoch(PoetModel& model, const Dataset& dataset, const LossWeights& weights,
                      OptimState& optim, const EpochOptions& options) {
  if (dataset.samples.empty()) throw Error(ErrorCode::kInvalidConfig, "training set is empty");
  const int n_slots = model.config().num_queries;
  Rng shuffle(Rng::Derived(options.seed, 0));
  const std::vector<Batch> batches =
      MakeBatches(dataset, options.batch_size, shuffle.NextU64(), n_slots);

  EpochStats stats;
  for (size_t b = 0; b < batches.size(); ++b) {
    const Batch& batch = batches[b];
    const int count = static_cast<int>(batch.samples.size());
    const LossNormalizers norms = LossNormalizers::ForBatch(batch.num_humans, n_slots * count);
    std::vector<SampleStep> steps(static_cast<size_t>(count));
    try {
      ParallelFor(count, options.threads, [&](int j) {
        const int index = batch.samples[static_cast<size_t>(j)];
        Rng rng = Rng::Derived(options.seed, 1 + static_cast<uint64_t>(index));
        steps[static_cast<size_t>(j)] =
            ComputeSampleStep(model, ImageOf(dataset.samples[static_cast<size_t>(index)]),
                              batch.targets[static_cast<size_t>(j)], weights, norms, true, rng,
                              options.aux_loss);
      });
    } catch (const Error& e) {
      throw Error(e.code(), "batch " + std::to_string(b) + ": " + e.message());
    }

    std::vector<Tensor> grads = std::move(steps[0].grads);
    LossBreakdown loss = steps[0].loss;
    for (int j = 1; j < count; ++j) {
      SampleStep& s = steps[static_cast<size_t>(j)];
      loss += s.loss;
      for (size_t p = 0; p < grads.size(); ++p) {
        double* dst = grads[p].data().data();
        const double* src = s.grads[p].data().data();
        for (int64_t i = 0; i < grads[p].size(); ++i) dst[i] += src[i];
      }
    }
    stats.mean_grad_norm += ClipGlobalNorm(grads, options.clip_norm);
    AdamWStep(model.params(), grads, optim, options.lr_divisor);
    stats.loss += loss;
    ++stats.batches;
  }
  stats.loss = Scaled(stats.loss, 1.0 / stats.batches);
  stats.mean_grad_norm /= stats.batches;
  return stats;
}

OksParams DefaultOksParams(int num_keypoints) {
  return num_keypoints == 17 ? OksParams::Coco() : OksParams::Uniform(num_keypoints, 0.1);
}

std::vector<ScoredPose> SelectDetections(const PredictionSet& preds, ImageSize size,
                                         const EvalSettings& settings) {
  std::vector<ScoredPose> dets;
  for (const PredictionSlot& slot : preds) {
    const double score = slot.human_prob();
    if (score < settings.score_threshold) continue;
    PoseVector pose = slot.pose;
    pose.cls = PoseClass::kHuman;
    dets.push_back({DecodePose(pose, size), score});
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredPose& a, const ScoredPose& b) { return a.score > b.score; });
  if (settings.top_k > 0 && static_cast<int>(dets.size()) > settings.top_k) {
    dets.resize(static_cast<size_t>(settings.top_k));
  }
  return dets;
}

std::vector<std::vector<GroundTruthPose>> GroundTruthOf(const Dataset& dataset) {
  std::vector<std::vector<GroundTruthPose>> gts;
  gts.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) {
    std::vector<GroundTruthPose> image;
    for (size_t i = 0; i < s.instances.size(); ++i) {
      image.push_back({s.instances[i].keypoints, i < s.areas.size() ? s.areas[i] : -1.0});
    }
    gts.push_back(std::move(image));
  }
  return gts;
}

namespace {

LossBreakdown BatchedLoss(const Dataset& dataset, const std::vector<PredictionSet>& preds,
                          const LossWeights& weights, int n_slots, int batch_size) {
  LossBreakdown sum;
  int batches = 0;
  const size_t n = dataset.samples.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
    std::vector<TargetSet> targets;
    int humans = 0;
    for (size_t i = start; i < end; ++i) {
      targets.push_back(SampleTargets(dataset.samples[i], n_slots, dataset.num_keypoints));
      humans += targets.back().num_humans();
    }
    const LossNormalizers norms =
        LossNormalizers::ForBatch(humans, n_slots * static_cast<int>(end - start));
    for (size_t i = start; i < end; ++i) {
      const TargetSet& t = targets[i - start];
      const Assignment a = HungarianAssign(BuildCostMatrix(t, preds[i], weights));
      sum += HungarianLoss(t, preds[i], a, weights, norms);
    }
    ++batches;
  }
  return batches ? Scaled(sum, 1.0 / batches) : sum;
}

}  // namespace

LossBreakdown DatasetLoss(const PoetModel& model, const Dataset& dataset, const LossWeights& weights,
                          int batch_size) {
  std::vector<PredictionSet> preds;
  for (const Sample& s : dataset.samples) {
    preds.push_back(ToPredictionSet(model.Predict(ImageOf(s)).back()));
  }
  return BatchedLoss(dataset, preds, weights, model.config().num_queries, batch_size);
}

EvalReport Evaluate(const PoetModel& model, const Dataset& dataset, const EvalSettings& settings,
                    const LossWeights& weights, int batch_size) {
  const int layers = model.config().dec_layers;
  std::vector<std::vector<std::vector<ScoredPose>>> dets(static_cast<size_t>(layers));
  std::vector<PredictionSet> final_preds;
  for (const Sample& s : dataset.samples) {
    const std::vector<PredictionTensors> out = model.Predict(ImageOf(s));
    for (int l = 0; l < layers; ++l) {
      PredictionSet preds = ToPredictionSet(out[static_cast<size_t>(l)]);
      dets[static_cast<size_t>(l)].push_back(SelectDetections(preds, s.image_size, settings));
      if (l == layers - 1) final_preds.push_back(std::move(preds));
    }
  }
  EvalOptions options;
  options.oks = settings.oks.k.empty() ? DefaultOksParams(dataset.num_keypoints) : settings.oks;
  const auto gts = GroundTruthOf(dataset);

  EvalReport report;
  for (int l = 0; l < layers; ++l) {
    report.per_layer.push_back(EvaluateDetections(dets[static_cast<size_t>(l)], gts, options));
  }
  report.final = report.per_layer.back();
  report.loss = BatchedLoss(dataset, final_preds, weights, model.config().num_queries, batch_size);
  return report;
}

namespace {

std::string SidecarPath(const std::string& checkpoint) {
  return std::filesystem::path(checkpoint).replace_extension(".cfg").string();
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << text;
}

double MetaValue(const std::vector<NamedTensor>& tensors, const std::string& name) {
  const NamedTensor* t = FindTensor(tensors, name);
  if (!t) throw Error(ErrorCode::kMissingField, "checkpoint lacks " + name);
  return t->value.item();
}

}  // namespace

void SaveTrainingCheckpoint(const std::string& path, const RunConfig& config,
                            const PoetModel& model, const OptimState& optim, int epoch) {
  std::vector<NamedTensor> tensors = model.params().ToNamed();
  for (NamedTensor& t : OptimStateToNamed(optim, model.params())) tensors.push_back(std::move(t));
  tensors.push_back({"meta.epoch", Tensor::Scalar(epoch)});
  tensors.push_back({"meta.num_keypoints", Tensor::Scalar(model.config().num_keypoints)});
  tensors.push_back({"meta.image_channels", Tensor::Scalar(model.config().image_channels)});
  WriteCheckpoint(path, tensors);
  WriteText(SidecarPath(path), DumpRunConfig(config));
}

LoadedCheckpoint LoadTrainingCheckpoint(const std::string& path) {
  LoadedCheckpoint ck;
  ck.tensors = ReadCheckpoint(path);
  ck.config = LoadRunConfig(SidecarPath(path));
  ck.model_config = ck.config.model;
  ck.model_config.num_keypoints = static_cast<int>(MetaValue(ck.tensors, "meta.num_keypoints"));
  ck.model_config.image_channels = static_cast<int>(MetaValue(ck.tensors, "meta.image_channels"));
  ck.epoch = static_cast<int>(MetaValue(ck.tensors, "meta.epoch"));
  return ck;
}

PoetModel ModelFromCheckpoint(const LoadedCheckpoint& checkpoint) {
  PoetModel model(checkpoint.model_config, 0);
  model.params().LoadNamed(checkpoint.tensors);
  return model;
}

namespace {

int CountHumans(const Sample& s) {
  return static_cast<int>(std::count_if(s.instances.begin(), s.instances.end(), [](const auto& a) {
    return std::any_of(a.keypoints.begin(), a.keypoints.end(),
                       [](const Keypoint& k) { return k.v > 0; });
  }));
}

void CheckSlots(Dataset& ds, const RunConfig& config, const std::string& split) {
  const int n = config.model.num_queries;
  if (config.data.drop_overfull) {
    const int dropped = DropOverfull(ds, n);
    if (dropped > 0) {
      LogInfo(split + ": dropped " + std::to_string(dropped) + " samples with more than " +
              std::to_string(n) + " persons");
    }
    return;
  }
  for (const Sample& s : ds.samples) {
    const int humans = CountHumans(s);
    if (humans > n) {
      throw Error(ErrorCode::kTooManyInstances,
                  split + " sample " + std::to_string(s.image_id) + " has " +
                      std::to_string(humans) + " persons but the model has " + std::to_string(n) +
                      " query slots; raise model.num_queries or set data.drop_overfull = true");
    }
  }
}

}  // namespace

RunData PrepareRunData(const RunConfig& config) {
  config.Validate();
  RunData data;
  if (config.data.train.empty()) {
    data.train = SynthGenerate(config.synth);
    if (config.data.val.empty() && config.data.val_samples > 0) {
      SynthConfig val = config.synth;
      val.num_samples = config.data.val_samples;
      val.seed = Rng::Derived(config.synth.seed, 1).NextU64();
      data.val = SynthGenerate(val);
    }
  } else {
    data.train = LoadDataset(config.data.train);
    const int dropped = DropUnannotated(data.train);
    if (dropped > 0) LogInfo("train: dropped " + std::to_string(dropped) + " images without persons");
  }
  if (!config.data.val.empty()) data.val = LoadDataset(config.data.val);
  CheckSlots(data.train, config, "train");
  CheckSlots(data.val, config, "val");
  if (data.train.samples.empty()) throw Error(ErrorCode::kInvalidConfig, "training set is empty");
  if (!data.val.samples.empty() && (data.val.num_keypoints != data.train.num_keypoints ||
                                    data.val.channels != data.train.channels)) {
    throw Error(ErrorCode::kSizeMismatch, "validation data differs from training data in K or channels");
  }
  return data;
}

namespace {

ModelConfig ModelFor(const RunConfig& config, const Dataset& train) {
  ModelConfig mc = config.model;
  mc.num_keypoints = train.num_keypoints;
  mc.image_channels = train.channels;
  return mc;
}

const char kLossHeader[] = "epoch,split,class,keypoint,visibility,center,total\n";
const char kMapHeader[] = "epoch,ap,ap50,ap75,ap_m,ap_l,ar,ar50,ar75,ar_m,ar_l\n";
const char kLayerHeader[] = "epoch,layer,ap,ap50,ap75,ap_m,ap_l,ar,ar50,ar75,ar_m,ar_l\n";

std::string EvalColumns(const EvalResult& r) {
  return Num(r.ap) + "," + Num(r.ap50) + "," + Num(r.ap75) + "," + Num(r.ap_m) + "," +
         Num(r.ap_l) + "," + Num(r.ar) + "," + Num(r.ar50) + "," + Num(r.ar75) + "," +
         Num(r.ar_m) + "," + Num(r.ar_l);
}

std::string LossRow(int epoch, const char* split, const LossBreakdown& l) {
  return std::to_string(epoch) + "," + split + "," + Num(l.class_nll) + "," + Num(l.keypoint_l1) +
         "," + Num(l.visibility_l2) + "," + Num(l.center_l2) + "," + Num(l.total) + "\n";
}

void Append(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kIoError, "cannot append to " + path);
  out << text;
}

// Keeps the header and rows whose leading epoch field is <= max_epoch.
void TruncateCsv(const std::string& path, const char* header, int max_epoch) {
  std::ifstream in(path);
  std::string kept = header;
  if (in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoi(line.substr(0, line.find(','))) <= max_epoch) kept += line + "\n";
    }
  }
  WriteText(path, kept);
}

}  // namespace

Trainer::Trainer(RunConfig config, RunData data)
    : config_(std::move(config)),
      data_(std::move(data)),
      model_(ModelFor(config_, data_.train), config_.seed),
      optim_(InitOptimState(model_.params(), config_.optimizer)) {}

void Trainer::Resume(const std::string& checkpoint_path) {
  const LoadedCheckpoint ck = LoadTrainingCheckpoint(checkpoint_path);
  model_.params().LoadNamed(ck.tensors);
  LoadOptimState(ck.tensors, model_.params(), optim_);
  optim_.config = config_.optimizer;
  epoch_ = ck.epoch;
  LogInfo("resumed from " + checkpoint_path + " at epoch " + std::to_string(epoch_));
}

std::string Trainer::CheckpointPath(int epoch) const {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
  return (std::filesystem::path(config_.out_dir) / name).string();
}

void Trainer::WriteHeaders() {
  const std::filesystem::path dir(config_.out_dir);
  TruncateCsv((dir / "losses.csv").string(), kLossHeader, epoch_);
  TruncateCsv((dir / "map.csv").string(), kMapHeader, epoch_);
  TruncateCsv((dir / "per_layer_map.csv").string(), kLayerHeader, epoch_);
}

void Trainer::LogEpoch(int epoch, const EpochStats& stats, const EvalReport* eval) {
  const std::filesystem::path dir(config_.out_dir);
  std::string losses = LossRow(epoch, "train", stats.loss);
  if (eval) losses += LossRow(epoch, "val", eval->loss);
  Append((dir / "losses.csv").string(), losses);

  std::ostringstream msg;
  msg << "epoch " << epoch << " loss " << stats.loss.total << " (class " << stats.loss.class_nll
      << ", kp " << stats.loss.keypoint_l1 << ", vis " << stats.loss.visibility_l2 << ", ctr "
      << stats.loss.center_l2 << ")";
  if (eval) {
    Append((dir / "map.csv").string(), std::to_string(epoch) + "," + EvalColumns(eval->final) + "\n");
    std::string rows;
    for (size_t l = 0; l < eval->per_layer.size(); ++l) {
      rows += std::to_string(epoch) + "," + std::to_string(l + 1) + "," +
              EvalColumns(eval->per_layer[l]) + "\n";
    }
    Append((dir / "per_layer_map.csv").string(), rows);
    msg << " val AP " << Num(eval->final.ap) << " AP50 " << Num(eval->final.ap50);
  }
  LogInfo(msg.str());
}

std::string Trainer::Run() {
  std::filesystem::create_directories(config_.out_dir);
  WriteText((std::filesystem::path(config_.out_dir) / "config.cfg").string(),
            DumpRunConfig(config_));
  WriteHeaders();

  const Schedule& schedule = config_.schedule;
  std::string last_checkpoint;
  const EvalSettings settings{config_.train.score_threshold, config_.train.top_k, {}};
  for (int epoch = epoch_ + 1; epoch <= schedule.total_epochs; ++epoch) {
    EpochOptions options;
    options.batch_size = config_.train.batch_size;
    options.clip_norm = config_.train.clip_norm;
    options.aux_loss = config_.train.aux_loss;
    options.threads = config_.train.threads;
    options.seed = Rng::Derived(config_.seed, static_cast<uint64_t>(epoch)).NextU64();
    options.lr_divisor = schedule.Divisor(epoch);
    const EpochStats stats = TrainEpoch(model_, data_.train, config_.loss, optim_, options);
    epoch_ = epoch;

    const bool last = epoch == schedule.total_epochs;
    std::optional<EvalReport> eval;
    if (!data_.val.samples.empty() && config_.train.eval_every > 0 &&
        (epoch % config_.train.eval_every == 0 || last)) {
      eval = Evaluate(model_, data_.val, settings, config_.loss, config_.train.batch_size);
    }
    LogEpoch(epoch, stats, eval ? &*eval : nullptr);

    const bool at_drop = std::find(schedule.drop_epochs.begin(), schedule.drop_epochs.end(),
                                   epoch) != schedule.drop_epochs.end();
    const bool periodic = config_.train.checkpoint_every > 0 && epoch % config_.train.checkpoint_every == 0;
    if (last || at_drop || periodic) {
      last_checkpoint = CheckpointPath(epoch);
      SaveTrainingCheckpoint(last_checkpoint, config_, model_, optim_, epoch);
    }
  }
  if (last_checkpoint.empty()) {
    last_checkpoint = CheckpointPath(epoch_);
    SaveTrainingCheckpoint(last_checkpoint, config_, model_, optim_, epoch_);
  }
  return last_checkpoint;
}

}  // namespace poet
