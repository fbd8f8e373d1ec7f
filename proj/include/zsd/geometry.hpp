#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsd {

// Axis-aligned box, origin top-left, continuous coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 >= 0.0 && y1 >= 0.0 && x2 > x1 && y2 > y1;
  }
  double area() const { return (x2 - x1) * (y2 - y1); }
};

struct Detection {
  Box box;
  std::string label;
  double score = 0.0;
};

struct GroundTruth {
  Box box;
  std::string label;
};

// Region proposal with a pointer into the feature matrix.
struct Proposal {
  Box box;
  double score = 0.0;           // objectness from the external proposal method
  std::uint32_t feature_row = 0;
};

inline void validate_box(const Box& b, const char* who) {
  if (!b.valid()) throw std::invalid_argument(std::string(who) + ": invalid box");
}

inline double iou(const Box& a, const Box& b) {
  validate_box(a, "iou");
  validate_box(b, "iou");
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

// Greedy non-maximal suppression for detections of one class. Output is
// sorted by descending score; ties keep input order.
inline std::vector<Detection> greedy_nms(std::vector<Detection> dets, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  kept.reserve(dets.size());
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(d.box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

enum class AssignKind { kPositive, kBackground, kDiscard };

struct Assignment {
  AssignKind kind = AssignKind::kDiscard;
  std::string label;    // set only for kPositive
  double max_iou = 0.0; // over all ground-truth boxes
};

// IoU-band assignment of a proposal against the image's ground truth:
// max IoU > 0.5 -> positive with the argmax box's label (ties: first in list);
// 0 < max IoU < 0.2 -> background; the gap [0.2, 0.5] -> discard. Proposals
// with zero IoU become background only when the caller's random-negative
// sampler asks for it (zero_iou_as_background), otherwise discard.
inline Assignment assign_training_label(const Box& proposal, std::span<const GroundTruth> gts,
                                        bool zero_iou_as_background = false) {
  validate_box(proposal, "assign_training_label");
  Assignment out;
  std::size_t best = gts.size();
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const double v = iou(proposal, gts[i].box);
    if (v > out.max_iou) {
      out.max_iou = v;
      best = i;
    }
  }
  if (out.max_iou > 0.5) {
    out.kind = AssignKind::kPositive;
    out.label = gts[best].label;
  } else if (out.max_iou > 0.0 && out.max_iou < 0.2) {
    out.kind = AssignKind::kBackground;
  } else if (out.max_iou == 0.0 && zero_iou_as_background) {
    out.kind = AssignKind::kBackground;
  } else {
    out.kind = AssignKind::kDiscard;
  }
  return out;
}

}  // namespace zsd
