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

#include "poet/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "poet/error.h"

namespace poet {

OksParams OksParams::Coco() {
  // nose, eyes, ears, shoulders, elbows, wrists, hips, knees, ankles.
  static constexpr double kSigmas[17] = {0.026, 0.025, 0.025, 0.035, 0.035, 0.079,
                                         0.079, 0.072, 0.072, 0.062, 0.062, 0.107,
                                         0.107, 0.087, 0.087, 0.089, 0.089};
  OksParams p;
  for (double s : kSigmas) p.k.push_back(2.0 * s);
  return p;
}

OksParams OksParams::Uniform(int num_keypoints, double k) {
  return {std::vector<double>(static_cast<size_t>(num_keypoints), k)};
}

double Oks(std::span<const Keypoint> pred, std::span<const Keypoint> gt, double scale,
           const OksParams& params) {
  if (pred.size() != gt.size() || params.k.size() != gt.size()) {
    throw Error(ErrorCode::kSizeMismatch, "OKS needs equal keypoint counts and constants");
  }
  if (!(scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "OKS scale must be positive");
  double total = 0.0;
  int visible = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].v <= 0) continue;
    const double dx = pred[i].x - gt[i].x;
    const double dy = pred[i].y - gt[i].y;
    const double k = params.k[i];
    total += std::exp(-(dx * dx + dy * dy) / (2.0 * scale * scale * k * k));
    ++visible;
  }
  if (visible == 0) throw Error(ErrorCode::kNoVisibleKeypoints, "ground truth has no visible keypoint");
  return total / visible;
}

double KeypointBoxArea(std::span<const Keypoint> keypoints, bool visible_only) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  bool any = false;
  for (const Keypoint& kp : keypoints) {
    if (visible_only && kp.v <= 0) continue;
    x0 = std::min(x0, kp.x);
    x1 = std::max(x1, kp.x);
    y0 = std::min(y0, kp.y);
    y1 = std::max(y1, kp.y);
    any = true;
  }
  return any ? (x1 - x0) * (y1 - y0) : 0.0;
}

std::vector<double> EvalOptions::DefaultThresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

struct AreaRange {
  double lo;
  double hi;
};

constexpr AreaRange kAll{0.0, 1e10};
constexpr AreaRange kMedium{32.0 * 32.0, 96.0 * 96.0};
constexpr AreaRange kLarge{96.0 * 96.0, 1e10};

bool Outside(double area, AreaRange r) { return area < r.lo || area > r.hi; }

struct PreparedImage {
  std::vector<const GroundTruthPose*> gts;
  std::vector<double> gt_area;
  std::vector<const ScoredPose*> dets;  // descending score, capped
  std::vector<double> det_area;
  std::vector<std::vector<double>> oks;  // [det][gt]
};

struct CurvePoint {
  double score;
  bool tp;
};

// Returns (AP, recall) at one threshold for one area range; empty when the
// range holds no ground truth.
std::optional<std::pair<double, double>> EvaluateThreshold(const std::vector<PreparedImage>& images,
                                                           double threshold, AreaRange range) {
  std::vector<CurvePoint> points;
  int64_t num_gt = 0;
  for (const PreparedImage& img : images) {
    const size_t ng = img.gts.size();
    std::vector<char> gt_ignore(ng);
    std::vector<size_t> order;
    for (size_t g = 0; g < ng; ++g) {
      gt_ignore[g] = Outside(img.gt_area[g], range);
      if (!gt_ignore[g]) ++num_gt;
    }
    // Non-ignored ground truth first, preserving input order otherwise.
    for (size_t g = 0; g < ng; ++g) if (!gt_ignore[g]) order.push_back(g);
    for (size_t g = 0; g < ng; ++g) if (gt_ignore[g]) order.push_back(g);

    std::vector<char> gt_taken(ng, 0);
    for (size_t d = 0; d < img.dets.size(); ++d) {
      double best = std::min(threshold, 1.0 - 1e-10);
      int match = -1;
      for (size_t g : order) {
        if (gt_taken[g]) continue;
        if (match >= 0 && !gt_ignore[static_cast<size_t>(match)] && gt_ignore[g]) break;
        if (img.oks[d][g] < best) continue;
        best = img.oks[d][g];
        match = static_cast<int>(g);
      }
      if (match >= 0) {
        gt_taken[static_cast<size_t>(match)] = 1;
        if (!gt_ignore[static_cast<size_t>(match)]) points.push_back({img.dets[d]->score, true});
      } else if (!Outside(img.det_area[d], range)) {
        points.push_back({img.dets[d]->score, false});
      }
    }
  }
  if (num_gt == 0) return std::nullopt;

  std::stable_sort(points.begin(), points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.score > b.score; });
  std::vector<double> recall, precision;
  double tp = 0.0, fp = 0.0;
  for (const CurvePoint& p : points) {
    (p.tp ? tp : fp) += 1.0;
    recall.push_back(tp / static_cast<double>(num_gt));
    precision.push_back(tp / (tp + fp));
  }
  for (size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  constexpr int kRecallPoints = 101;
  double area = 0.0;
  for (int r = 0; r < kRecallPoints; ++r) {
    // Recall levels r * 0.01 match the reference linspace(0, 1, 101) bit for bit.
    const double level = r * 0.01;
    auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) area += precision[static_cast<size_t>(it - recall.begin())];
  }
  const double final_recall = recall.empty() ? 0.0 : recall.back();
  return std::make_pair(area / kRecallPoints, final_recall);
}

std::optional<double> MeanDefined(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

}  // namespace

EvalResult EvaluateDetections(const std::vector<std::vector<ScoredPose>>& detections,
                              const std::vector<std::vector<GroundTruthPose>>& ground_truth,
                              const EvalOptions& options) {
  if (detections.size() != ground_truth.size()) {
    throw Error(ErrorCode::kSizeMismatch, std::to_string(detections.size()) +
                                              " detection lists for " +
                                              std::to_string(ground_truth.size()) + " images");
  }
  std::vector<PreparedImage> images(ground_truth.size());
  for (size_t i = 0; i < ground_truth.size(); ++i) {
    PreparedImage& img = images[i];
    for (const GroundTruthPose& g : ground_truth[i]) {
      const bool any_visible = std::any_of(g.keypoints.begin(), g.keypoints.end(),
                                           [](const Keypoint& k) { return k.v > 0; });
      if (!any_visible) continue;
      img.gts.push_back(&g);
      img.gt_area.push_back(g.area >= 0.0 ? g.area : KeypointBoxArea(g.keypoints));
    }
    for (const ScoredPose& d : detections[i]) img.dets.push_back(&d);
    std::stable_sort(img.dets.begin(), img.dets.end(),
                     [](const ScoredPose* a, const ScoredPose* b) { return a->score > b->score; });
    if (static_cast<int>(img.dets.size()) > options.max_detections) {
      img.dets.resize(static_cast<size_t>(options.max_detections));
    }
    for (const ScoredPose* d : img.dets) {
      img.det_area.push_back(KeypointBoxArea(d->keypoints, false));
      std::vector<double> row;
      for (size_t g = 0; g < img.gts.size(); ++g) {
        const double area = std::max(img.gt_area[g], options.min_area);
        row.push_back(Oks(d->keypoints, img.gts[g]->keypoints, std::sqrt(area), options.oks));
      }
      img.oks.push_back(std::move(row));
    }
  }

  EvalResult result;
  std::vector<std::optional<double>> ap_all, ar_all, ap_m, ar_m, ap_l, ar_l;
  for (double t : options.thresholds) {
    auto all = EvaluateThreshold(images, t, kAll);
    auto med = EvaluateThreshold(images, t, kMedium);
    auto large = EvaluateThreshold(images, t, kLarge);
    ap_all.push_back(all ? std::optional<double>(all->first) : std::nullopt);
    ar_all.push_back(all ? std::optional<double>(all->second) : std::nullopt);
    ap_m.push_back(med ? std::optional<double>(med->first) : std::nullopt);
    ar_m.push_back(med ? std::optional<double>(med->second) : std::nullopt);
    ap_l.push_back(large ? std::optional<double>(large->first) : std::nullopt);
    ar_l.push_back(large ? std::optional<double>(large->second) : std::nullopt);
    if (std::abs(t - 0.5) < 1e-9) {
      result.ap50 = ap_all.back();
      result.ar50 = ar_all.back();
    }
    if (std::abs(t - 0.75) < 1e-9) {
      result.ap75 = ap_all.back();
      result.ar75 = ar_all.back();
    }
  }
  result.ap = MeanDefined(ap_all);
  result.ar = MeanDefined(ar_all);
  result.ap_m = MeanDefined(ap_m);
  result.ar_m = MeanDefined(ar_m);
  result.ap_l = MeanDefined(ap_l);
  result.ar_l = MeanDefined(ar_l);
  result.ap_per_threshold = ap_all;
  return result;
}

std::string FormatEvalHeader() {
  return "    AP   AP50   AP75   AP_M   AP_L |     AR   AR50   AR75   AR_M   AR_L";
}

std::string FormatEvalRow(const EvalResult& r) {
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (v) {
      std::snprintf(buf, sizeof(buf), "%6.3f", *v);
    } else {
      std::snprintf(buf, sizeof(buf), "%6s", "-");
    }
    return std::string(buf);
  };
  return cell(r.ap) + " " + cell(r.ap50) + " " + cell(r.ap75) + " " + cell(r.ap_m) + " " +
         cell(r.ap_l) + " | " + cell(r.ar) + " " + cell(r.ar50) + " " + cell(r.ar75) + " " +
         cell(r.ar_m) + " " + cell(r.ar_l);
}

}  // namespace poet
