#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "zsd/geometry.hpp"
#include "zsd/rng.hpp"

using zsd::Box;
using zsd::Detection;
using zsd::GroundTruth;

namespace {

// Independent NMS reference: literal application of the suppression rule,
// no shared code with greedy_nms.
std::vector<Detection> nms_reference(std::vector<Detection> dets, double threshold) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<bool> suppressed(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (suppressed[i]) continue;
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (suppressed[j]) continue;
      if (zsd::iou(dets[i].box, dets[j].box) > threshold) suppressed[j] = true;
    }
  }
  std::vector<Detection> kept;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (!suppressed[i]) kept.push_back(dets[i]);
  }
  return kept;
}

Box random_box(zsd::Rng& rng) {
  const double x1 = rng.uniform(0.0, 80.0);
  const double y1 = rng.uniform(0.0, 80.0);
  return Box{x1, y1, x1 + rng.uniform(1.0, 40.0), y1 + rng.uniform(1.0, 40.0)};
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].score != b[i].score || a[i].box.x1 != b[i].box.x1 || a[i].box.y1 != b[i].box.y1 ||
        a[i].box.x2 != b[i].box.x2 || a[i].box.y2 != b[i].box.y2) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("iou on the pinned cases") {
  const Box a{0, 0, 10, 10};
  CHECK(zsd::iou(a, a) == 1.0);
  CHECK(zsd::iou(a, Box{20, 20, 30, 30}) == 0.0);
  // intersection 25, union 175
  CHECK(zsd::iou(a, Box{5, 5, 15, 15}) == Catch::Approx(25.0 / 175.0).epsilon(1e-12));
  REQUIRE_THROWS(zsd::iou(a, Box{5, 5, 4, 9}));
}

TEST_CASE("iou is symmetric, reflexive and translation invariant") {
  zsd::Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const Box a = random_box(rng);
    const Box b = random_box(rng);
    const double ab = zsd::iou(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == zsd::iou(b, a));
    CHECK(zsd::iou(a, a) == 1.0);

    const double dx = rng.uniform(0.0, 50.0);
    const double dy = rng.uniform(0.0, 50.0);
    const Box at{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy};
    const Box bt{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
    CHECK(zsd::iou(at, bt) == Catch::Approx(ab).margin(1e-12));
  }
}

TEST_CASE("greedy nms on the pinned cases") {
  const Detection only{Box{0, 0, 10, 10}, "c", 0.5};
  CHECK(zsd::greedy_nms({only}, 0.4).size() == 1);
  CHECK(zsd::greedy_nms({}, 0.4).empty());

  // identical boxes: higher score wins
  const auto two = zsd::greedy_nms({Detection{Box{0, 0, 10, 10}, "c", 0.8},
                                    Detection{Box{0, 0, 10, 10}, "c", 0.9}},
                                   0.4);
  REQUIRE(two.size() == 1);
  CHECK(two[0].score == 0.9);

  // box2 overlaps box1 at IoU 0.5, box3 overlaps both below 0.4: keep 1 and 3
  const Box b1{0, 0, 10, 10};
  const Box b2{0, 0, 20, 10};  // IoU(b1, b2) = 100 / 200 = 0.5
  const Box b3{8, 8, 18, 18};  // IoU(b1, b3) = 4 / 196, IoU(b2, b3) = 20 / 280
  REQUIRE(zsd::iou(b1, b2) == Catch::Approx(0.5).margin(1e-9));
  REQUIRE(zsd::iou(b1, b3) < 0.4);
  REQUIRE(zsd::iou(b2, b3) < 0.4);
  const auto three = zsd::greedy_nms(
      {Detection{b1, "c", 0.9}, Detection{b2, "c", 0.8}, Detection{b3, "c", 0.7}}, 0.4);
  REQUIRE(three.size() == 2);
  CHECK(three[0].score == 0.9);
  CHECK(three[1].score == 0.7);
}

TEST_CASE("greedy nms matches the quadratic reference and is idempotent") {
  zsd::Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> dets;
    const std::size_t n = rng.below(51);
    for (std::size_t i = 0; i < n; ++i) {
      // coarse score grid so ties actually happen
      dets.push_back(Detection{random_box(rng), "c", rng.below(10) / 10.0});
    }
    const double threshold = rng.uniform(0.1, 0.9);
    const auto ours = zsd::greedy_nms(dets, threshold);
    const auto ref = nms_reference(dets, threshold);
    REQUIRE(same_detections(ours, ref));
    REQUIRE(same_detections(zsd::greedy_nms(ours, threshold), ours));

    for (std::size_t i = 0; i < ours.size(); ++i) {
      for (std::size_t j = i + 1; j < ours.size(); ++j) {
        CHECK(zsd::iou(ours[i].box, ours[j].box) <= threshold);
      }
    }
  }
}

TEST_CASE("training label bands") {
  const std::vector<GroundTruth> gts{{Box{0, 0, 10, 10}, "cat"}, {Box{30, 30, 40, 40}, "dog"}};

  // identical box: IoU 1 > 0.5
  auto a = zsd::assign_training_label(Box{0, 0, 10, 10}, gts);
  CHECK(a.kind == zsd::AssignKind::kPositive);
  CHECK(a.label == "cat");

  // IoU 0.6 against cat: intersection 7.5x10 = 75, union 125 -> 0.6
  a = zsd::assign_training_label(Box{2.5, 0, 12.5, 10}, gts);
  REQUIRE(a.max_iou == Catch::Approx(0.6).margin(1e-9));
  CHECK(a.kind == zsd::AssignKind::kPositive);
  CHECK(a.label == "cat");

  // max IoU 0.1 -> background band
  a = zsd::assign_training_label(Box{8.9, 0, 18.9, 10}, gts);
  REQUIRE(a.max_iou > 0.0);
  REQUIRE(a.max_iou < 0.2);
  CHECK(a.kind == zsd::AssignKind::kBackground);

  // mid band -> discard; 0.2 <= IoU <= 0.5
  a = zsd::assign_training_label(Box{5, 0, 15, 10}, gts);
  REQUIRE(a.max_iou == Catch::Approx(1.0 / 3.0).margin(1e-9));
  CHECK(a.kind == zsd::AssignKind::kDiscard);

  // zero overlap: discard unless requested as a random negative
  a = zsd::assign_training_label(Box{60, 60, 70, 70}, gts);
  CHECK(a.kind == zsd::AssignKind::kDiscard);
  CHECK(a.max_iou == 0.0);
  a = zsd::assign_training_label(Box{60, 60, 70, 70}, gts, true);
  CHECK(a.kind == zsd::AssignKind::kBackground);

  // ties on the argmax go to the first ground truth in the list
  const std::vector<GroundTruth> tied{{Box{0, 0, 10, 10}, "first"}, {Box{0, 0, 10, 10}, "second"}};
  a = zsd::assign_training_label(Box{0, 0, 10, 10}, tied);
  CHECK(a.label == "first");
}

TEST_CASE("every proposal maps to exactly one outcome") {
  zsd::Rng rng(55);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<GroundTruth> gts;
    const std::size_t n = rng.below(4);
    for (std::size_t i = 0; i < n; ++i) gts.push_back(GroundTruth{random_box(rng), "x"});
    const auto a = zsd::assign_training_label(random_box(rng), gts);
    const bool positive = a.kind == zsd::AssignKind::kPositive;
    const bool background = a.kind == zsd::AssignKind::kBackground;
    const bool discard = a.kind == zsd::AssignKind::kDiscard;
    CHECK((positive + background + discard) == 1);
    if (positive) CHECK(a.max_iou > 0.5);
    if (background) {
      CHECK(a.max_iou > 0.0);
      CHECK(a.max_iou < 0.2);
    }
  }
}
