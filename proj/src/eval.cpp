#include "chipstitch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "chipstitch/kernels.hpp"
#include "chipstitch/stitcher.hpp"

namespace chipstitch {

std::vector<double> EvalConfig::linspace(double lo, double hi, int count) {
  if (count < 1) throw Error(ErrorFamily::kInvalidArgument, "threshold count must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (int i = 0; i < count; ++i) out[i] = lo + (hi - lo) * i / (count - 1);
  out.back() = hi;
  return out;
}

void EvalConfig::validate() const {
  for (double v : {iou_default, iou_small_object, nms_iou}) {
    if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorFamily::kConfig, "IoU thresholds must lie in (0, 1]");
  }
  if (thresholds.empty()) throw Error(ErrorFamily::kConfig, "at least one confidence threshold needed");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) {
      throw Error(ErrorFamily::kConfig, "confidence thresholds must be strictly increasing");
    }
  }
}

PRPoint make_pr_point(double threshold, long tp, long fp, long fn) {
  PRPoint p;
  p.threshold = threshold;
  p.tp = tp;
  p.fp = fp;
  p.fn = fn;
  p.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  p.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p;
}

MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruthLabel> gts,
                             double iou_thresh) {
  std::set<int> classes;
  for (const auto& d : dets) classes.insert(d.class_id);
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.size() > 1) {
    throw Error(ErrorFamily::kInvalidArgument, "match_detections: inputs mix several classes");
  }

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].confidence != dets[b].confidence) return dets[a].confidence > dets[b].confidence;
    if (box_less(dets[a].box, dets[b].box)) return true;
    if (box_less(dets[b].box, dets[a].box)) return false;
    return a < b;
  });

  const std::size_t n = gts.size();
  std::vector<double> xmin(n), ymin(n), xmax(n), ymax(n), overlap(n);
  for (std::size_t g = 0; g < n; ++g) {
    xmin[g] = gts[g].box.xmin;
    ymin[g] = gts[g].box.ymin;
    xmax[g] = gts[g].box.xmax;
    ymax[g] = gts[g].box.ymax;
  }
  const kernels::BoxColumns cols{xmin, ymin, xmax, ymax};
  std::vector<char> matched(n, 0);

  MatchResult result;
  for (std::size_t di : order) {
    const auto& b = dets[di].box;
    std::size_t best = n;
    if (n > 0) {
      kernels::iou_one_to_many(b.xmin, b.ymin, b.xmax, b.ymax, cols, overlap);
      for (std::size_t g = 0; g < n; ++g) {
        if (matched[g] || overlap[g] < iou_thresh) continue;
        if (best == n || overlap[g] > overlap[best] ||
            (overlap[g] == overlap[best] && box_less(gts[g].box, gts[best].box))) {
          best = g;
        }
      }
    }
    if (best < n) {
      matched[best] = 1;
      ++result.tp;
      result.pairs.emplace_back(di, best);
    } else {
      ++result.fp;
    }
  }
  result.fn = static_cast<long>(n) - result.tp;
  return result;
}

std::vector<PRPoint> pr_curve(std::span<const EvalImage> images, int class_id, double match_iou,
                              const EvalConfig& cfg) {
  cfg.validate();
  struct PerImage {
    std::vector<Detection> dets;
    std::vector<GroundTruthLabel> gts;
  };
  std::vector<PerImage> filtered;
  for (const auto& img : images) {
    PerImage p;
    for (const auto& d : img.detections) {
      if (d.class_id == class_id) p.dets.push_back(d);
    }
    for (const auto& g : img.ground_truth) {
      if (g.class_id == class_id) p.gts.push_back(g);
    }
    filtered.push_back(std::move(p));
  }

  std::vector<PRPoint> curve;
  std::vector<Detection> survivors;
  for (double t : cfg.thresholds) {
    long tp = 0, fp = 0, fn = 0;
    for (const auto& p : filtered) {
      survivors.clear();
      for (const auto& d : p.dets) {
        if (d.confidence >= t) survivors.push_back(d);
      }
      const auto kept = global_nms(survivors, cfg.nms_iou);
      const auto m = match_detections(kept, p.gts, match_iou);
      tp += m.tp;
      fp += m.fp;
      fn += m.fn;
    }
    curve.push_back(make_pr_point(t, tp, fp, fn));
  }
  return curve;
}

std::vector<PRPoint> pr_curve(const std::vector<Detection>& dets,
                              const std::vector<GroundTruthLabel>& gts, int class_id,
                              double match_iou, const EvalConfig& cfg) {
  const EvalImage image{dets, gts};
  return pr_curve(std::span<const EvalImage>(&image, 1), class_id, match_iou, cfg);
}

double average_precision(std::span<const PRPoint> curve) {
  if (curve.empty()) throw Error(ErrorFamily::kInvalidArgument, "average_precision: empty curve");
  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  for (const auto& p : curve) pts.emplace_back(p.recall, p.precision);
  std::sort(pts.begin(), pts.end());

  // Envelope: best precision at this recall or beyond.
  std::vector<double> envelope(pts.size());
  double best = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    best = std::max(best, pts[i].second);
    envelope[i] = best;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].first - prev_recall) * envelope[i];
    prev_recall = pts[i].first;
  }
  return std::clamp(ap, 0.0, 1.0);
}

double mean_ap(const std::map<int, double>& per_class) {
  if (per_class.empty()) throw Error(ErrorFamily::kInvalidArgument, "mean_ap: no classes");
  double sum = 0.0;
  for (const auto& [cls, ap] : per_class) sum += ap;
  return sum / static_cast<double>(per_class.size());
}

double f1_score(long tp, long fp, long fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw Error(ErrorFamily::kInvalidArgument, "counts must be >= 0");
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

Throughput throughput(double area_km2, double detector_seconds, double wall_seconds) {
  if (!(detector_seconds > 0.0) || !(wall_seconds > 0.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "throughput needs positive times");
  }
  return {area_km2 / detector_seconds, wall_seconds / detector_seconds};
}

EvalReport evaluate(std::span<const EvalImage> images, const ClassTable& classes,
                    const EvalConfig& cfg) {
  cfg.validate();
  std::set<int> present;
  for (const auto& img : images) {
    for (const auto& g : img.ground_truth) present.insert(g.class_id);
  }

  EvalReport report;
  std::map<int, double> aps;
  for (int cls : present) {
    ClassReport cr;
    cr.class_id = cls;
    cr.name = classes.name(cls);
    cr.match_iou = cfg.iou_for(classes.at(cls));
    cr.curve = pr_curve(images, cls, cr.match_iou, cfg);
    cr.ap = average_precision(cr.curve);
    for (const auto& p : cr.curve) {
      const double f1 = f1_score(p.tp, p.fp, p.fn);
      if (f1 > cr.best_f1) {
        cr.best_f1 = f1;
        cr.best_f1_threshold = p.threshold;
      }
    }
    aps[cls] = cr.ap;
    report.classes.push_back(std::move(cr));
  }
  report.map = aps.empty() ? 0.0 : mean_ap(aps);
  return report;
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::string format_report_text(const EvalReport& report) {
  std::string out;
  for (const auto& c : report.classes) {
    out += "class " + c.name + " (IoU >= " + fmt("%.2f", c.match_iou) + ")\n";
    out += "  threshold      tp      fp      fn  precision  recall\n";
    for (const auto& p : c.curve) {
      char line[128];
      std::snprintf(line, sizeof(line), "  %9.4f %7ld %7ld %7ld  %9.4f  %6.4f\n", p.threshold, p.tp,
                    p.fp, p.fn, p.precision, p.recall);
      out += line;
    }
    out += "  AP " + fmt("%.4f", c.ap) + "  best F1 " + fmt("%.4f", c.best_f1) + " @ " +
           fmt("%.4f", c.best_f1_threshold) + "\n";
  }
  out += "mAP " + fmt("%.4f", report.map) + "\n";
  if (report.throughput_km2_per_s > 0.0) {
    out += "area " + fmt("%.4f", report.area_km2) + " km2, rate " +
           fmt("%.4f", report.throughput_km2_per_s) + " km2/s, overhead " +
           fmt("%.3f", report.overhead_factor) + "\n";
  }
  return out;
}

std::string format_report_csv(const EvalReport& report) {
  std::string out = "class,threshold,tp,fp,fn,precision,recall\n";
  for (const auto& c : report.classes) {
    for (const auto& p : c.curve) {
      out += c.name + ',' + fmt("%.6f", p.threshold) + ',' + std::to_string(p.tp) + ',' +
             std::to_string(p.fp) + ',' + std::to_string(p.fn) + ',' + fmt("%.6f", p.precision) +
             ',' + fmt("%.6f", p.recall) + '\n';
    }
  }
  out += "class,AP\n";
  for (const auto& c : report.classes) out += c.name + ',' + fmt("%.6f", c.ap) + '\n';
  out += "ALL," + fmt("%.6f", report.map) + '\n';
  return out;
}

std::string format_pr_columns(const EvalReport& report) {
  std::string out = "# class threshold recall precision\n";
  for (const auto& c : report.classes) {
    for (const auto& p : c.curve) {
      out += c.name + ' ' + fmt("%.6f", p.threshold) + ' ' + fmt("%.6f", p.recall) + ' ' +
             fmt("%.6f", p.precision) + '\n';
    }
  }
  return out;
}

}  // namespace chipstitch
