#pragma once

// Detection scoring: greedy IoU matching, the threshold sweep,
// AP/mAP/F1, and throughput accounting.

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chipstitch/core.hpp"

namespace chipstitch {

struct EvalConfig {
  double iou_default = 0.5;
  double iou_small_object = 0.25;  // for classes flagged small_object
  std::vector<double> thresholds = linspace(0.05, 0.95, 30);
  double nms_iou = 0.5;

  void validate() const;
  double iou_for(const ClassInfo& cls) const {
    return cls.small_object ? iou_small_object : iou_default;
  }

  /// `count` evenly spaced values from lo to hi inclusive.
  static std::vector<double> linspace(double lo, double hi, int count);
};

struct PRPoint {
  double threshold = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double precision = 1.0;
  double recall = 1.0;
};

/// precision = tp/(tp+fp), recall = tp/(tp+fn); each 1 when its denominator is 0.
PRPoint make_pr_point(double threshold, long tp, long fp, long fn);

struct MatchResult {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detection index, gt index)
};

/// Greedy matching for a single class: detections in descending confidence
/// each claim the unmatched ground truth of highest IoU, if that IoU reaches
/// `iou_thresh`.
MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruthLabel> gts,
                             double iou_thresh);

/// Detections and ground truth of one image.
struct EvalImage {
  std::vector<Detection> detections;
  std::vector<GroundTruthLabel> ground_truth;
};

/// One class's precision/recall at every threshold: filter by confidence,
/// class-wise NMS, match, and sum counts over all images.
std::vector<PRPoint> pr_curve(std::span<const EvalImage> images, int class_id, double match_iou,
                              const EvalConfig& cfg);
std::vector<PRPoint> pr_curve(const std::vector<Detection>& dets,
                              const std::vector<GroundTruthLabel>& gts, int class_id,
                              double match_iou, const EvalConfig& cfg);

/// Area under the monotone precision envelope, anchored at recall 0.
double average_precision(std::span<const PRPoint> curve);

/// Arithmetic mean of per-class APs.
double mean_ap(const std::map<int, double>& per_class);

double f1_score(long tp, long fp, long fn);

struct Throughput {
  double rate_km2_per_s = 0.0;
  double overhead_factor = 1.0;
};

/// rate = area / detector time; overhead = wall time / detector time.
Throughput throughput(double area_km2, double detector_seconds, double wall_seconds);

struct ClassReport {
  int class_id = 0;
  std::string name;
  double match_iou = 0.5;
  std::vector<PRPoint> curve;
  double ap = 0.0;
  double best_f1 = 0.0;
  double best_f1_threshold = 0.0;
};

struct EvalReport {
  std::vector<ClassReport> classes;  // classes present in ground truth
  double map = 0.0;
  double area_km2 = 0.0;
  double throughput_km2_per_s = 0.0;
  double overhead_factor = 1.0;
};

/// Score every class that appears in the ground truth.
EvalReport evaluate(std::span<const EvalImage> images, const ClassTable& classes,
                    const EvalConfig& cfg);

/// Human-readable per-class tables.
std::string format_report_text(const EvalReport& report);
/// Machine-readable rows: class,threshold,tp,fp,fn,precision,recall, then
/// class,AP summary rows and ALL,mAP.
std::string format_report_csv(const EvalReport& report);
/// Whitespace-separated columns (class threshold recall precision) for plotting.
std::string format_pr_columns(const EvalReport& report);

}  // namespace chipstitch
