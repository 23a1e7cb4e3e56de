#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "specmon/errors.hpp"
#include "specmon/metrics.hpp"

using namespace specmon;

TEST_SUITE("metrics") {

TEST_CASE("IoU family matches the set oracle on every 2x3 grid pair") {
  int bad = 0;
  for (unsigned p = 0; p < 64; ++p) {
    for (unsigned q = 0; q < 64; ++q) {
      bad += oracle::iou_mismatches(oracle::grid_from_bits(p, 3, 2), oracle::grid_from_bits(q, 3, 2));
    }
  }
  CHECK(bad == 0);
}

TEST_CASE("IoU family matches the set oracle on all 4x4 grids") {
  int bad = 0;
  for (unsigned g = 0; g < (1U << 16); g += 7) {
    const unsigned h = (g * 40503U + 12345U) & 0xFFFFU;
    bad += oracle::iou_mismatches(oracle::grid_from_bits(g, 4, 4), oracle::grid_from_bits(h, 4, 4));
  }
  CHECK(bad == 0);
}

TEST_CASE("instantaneous IoU hand values") {
  const std::vector<int> truth{1, 1, 0, 0};
  CHECK(iou_instant(std::vector<float>{0.9F, 0.2F, 0.7F, 0.0F}, truth) == doctest::Approx(1.0 / 3.0));
  CHECK(iou_instant(std::vector<float>{0.0F, 0.0F, 0.0F, 0.0F}, std::vector<int>{0, 0, 0, 0}) == 1.0);
  CHECK(iou_instant(std::vector<float>{0.5F, 0.49F}, std::vector<int>{1, 1}) == 0.5);
  CHECK_THROWS_AS(overlap(std::vector<float>{0.5F}, truth), UsageError);
}

TEST_CASE("block IoU pools the last N steps") {
  std::vector<OverlapCounts> c{{0, 4}, {2, 2}, {1, 3}};
  CHECK(iou_block(c, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(iou_block(c, 2) == doctest::Approx(3.0 / 5.0));
  CHECK(iou_block(c, 10) == doctest::Approx(3.0 / 9.0));
  CHECK(iou_cumulative(c) == iou_block(c, 3));
  CHECK(iou_diff_block(c, 2, 1) == doctest::Approx(3.0 / 5.0 - 1.0 / 3.0));
  CHECK_THROWS_AS(iou_diff_block(c, 0, 1), UsageError);
  CHECK_THROWS_AS(iou_block(std::vector<OverlapCounts>{}, 3), UsageError);
}

TEST_CASE("WBCE closed form") {
  const double ln2 = std::log(2.0);
  CHECK(std::abs(wbce_loss(std::vector<float>{0.5F}, std::vector<int>{1}) - ln2) < 1e-9);
  CHECK(std::abs(wbce_loss(std::vector<float>{0.5F}, std::vector<int>{0}) - 0.1 * ln2) < 1e-9);
  CHECK(std::abs(wbce_loss(std::vector<float>{0.5F, 0.5F}, std::vector<int>{1, 0}) - 0.55 * ln2) < 1e-9);
  CHECK(std::abs(wbce_loss(std::vector<float>{0.5F}, std::vector<int>{0}, 1.0) - ln2) < 1e-9);
  CHECK(wbce_loss(std::vector<float>{1.0F, 0.0F}, std::vector<int>{1, 0}) <= 20 * 1e-7);
  CHECK(std::isfinite(wbce_loss(std::vector<float>{0.0F}, std::vector<int>{1})));
  CHECK(wbce_loss(std::vector<float>{0.0F}, std::vector<int>{1}) == doctest::Approx(-std::log(1e-7)));
}

TEST_CASE("multi-class WBCE") {
  const double ln2 = std::log(2.0);
  const std::vector<float> rows{0.5F, 0.5F, 0.0F, 0.5F, 0.25F, 0.25F};
  CHECK(std::abs(wbce_loss_multiclass(rows, std::vector<int>{1, 0}, 2) - 0.55 * ln2) < 1e-9);
  CHECK_THROWS_AS(wbce_loss_multiclass(rows, std::vector<int>{1}, 2), UsageError);
}

}
