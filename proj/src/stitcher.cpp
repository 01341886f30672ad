#include "chipstitch/stitcher.hpp"

#include <algorithm>
#include <numeric>

#include "chipstitch/kernels.hpp"

namespace chipstitch {

std::vector<Detection> globalize(const std::vector<Detection>& dets, const TileRecord& tile) {
  if (tile.parent_width < 1 || tile.parent_height < 1) {
    throw Error(ErrorFamily::kInvalidArgument,
                "tile " + tile.cutout_name() + " does not record its parent extent");
  }
  const double inv = 1.0 / tile.upsample;
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    if (d.is_global()) {
      throw Error(ErrorFamily::kFrame, "globalize: detection is already in the global frame");
    }
    BoundingBox box = tile.upsample == 1 ? d.box : d.box.scaled(inv);
    box = clamp_box(box.translated(tile.col, tile.row), tile.parent_width, tile.parent_height);
    out.push_back({d.class_id, box, d.confidence, Global{}});
  }
  return out;
}

std::vector<std::size_t> nms_keep(std::span<const Detection> dets, double nms_iou,
                                  std::span<const Provenance> tie_break) {
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) {
    throw Error(ErrorFamily::kInvalidArgument, "nms_iou must lie in (0, 1]");
  }
  if (!tie_break.empty() && tie_break.size() != dets.size()) {
    throw Error(ErrorFamily::kInvalidArgument, "tie-break list must parallel the detections");
  }
  for (const auto& d : dets) {
    if (!d.is_global()) {
      throw Error(ErrorFamily::kFrame, "global_nms: detection is in a tile-local frame");
    }
  }

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (detection_less(dets[a], dets[b])) return true;
    if (detection_less(dets[b], dets[a])) return false;
    if (!tie_break.empty() && tie_break[a] != tie_break[b]) return tie_break[a] < tie_break[b];
    return a < b;
  });

  std::vector<std::size_t> kept;
  std::vector<double> xmin, ymin, xmax, ymax, overlap;
  std::vector<char> suppressed;
  std::size_t begin = 0;
  while (begin < order.size()) {
    // [begin, end) is one class, already in priority order.
    const int cls = dets[order[begin]].class_id;
    std::size_t end = begin;
    while (end < order.size() && dets[order[end]].class_id == cls) ++end;
    const std::size_t n = end - begin;

    xmin.resize(n);
    ymin.resize(n);
    xmax.resize(n);
    ymax.resize(n);
    overlap.resize(n);
    suppressed.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& b = dets[order[begin + k]].box;
      xmin[k] = b.xmin;
      ymin[k] = b.ymin;
      xmax[k] = b.xmax;
      ymax[k] = b.ymax;
    }

    for (std::size_t k = 0; k < n; ++k) {
      if (suppressed[k]) continue;
      kept.push_back(order[begin + k]);
      const std::size_t rest = n - k - 1;
      if (rest == 0) break;
      const kernels::BoxColumns cols{std::span<const double>(xmin).subspan(k + 1),
                                     std::span<const double>(ymin).subspan(k + 1),
                                     std::span<const double>(xmax).subspan(k + 1),
                                     std::span<const double>(ymax).subspan(k + 1)};
      kernels::iou_one_to_many(xmin[k], ymin[k], xmax[k], ymax[k], cols,
                               std::span<double>(overlap).subspan(k + 1, rest));
      for (std::size_t j = k + 1; j < n; ++j) {
        if (overlap[j] > nms_iou) suppressed[j] = 1;
      }
    }
    begin = end;
  }
  return kept;
}

std::vector<Detection> global_nms(const std::vector<Detection>& dets, double nms_iou) {
  std::vector<Detection> out;
  for (std::size_t i : nms_keep(dets, nms_iou)) out.push_back(dets[i]);
  return out;
}

GlobalDetectionSet global_nms(const GlobalDetectionSet& set, double nms_iou) {
  GlobalDetectionSet out;
  out.parent_name = set.parent_name;
  for (std::size_t i : nms_keep(set.detections, nms_iou, set.provenance)) {
    out.detections.push_back(set.detections[i]);
    if (!set.provenance.empty()) out.provenance.push_back(set.provenance[i]);
  }
  return out;
}

GlobalDetectionSet stitch(std::span<const TileDetections> per_tile, double nms_iou,
                          const std::string& profile) {
  GlobalDetectionSet merged;
  if (!per_tile.empty()) merged.parent_name = per_tile.front().tile.parent_name;
  for (const auto& entry : per_tile) {
    if (entry.tile.parent_name != merged.parent_name) {
      throw Error(ErrorFamily::kInvalidArgument, "stitch: tiles from different parents ('" +
                                                     merged.parent_name + "' and '" +
                                                     entry.tile.parent_name + "')");
    }
    for (auto& d : globalize(entry.detections, entry.tile)) {
      merged.detections.push_back(d);
      merged.provenance.push_back({entry.tile.row, entry.tile.col, profile});
    }
  }
  return global_nms(merged, nms_iou);
}

}  // namespace chipstitch
