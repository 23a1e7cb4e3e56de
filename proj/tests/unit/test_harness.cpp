#include <doctest.h>

#include <sstream>

#include "specmon/baselines.hpp"
#include "specmon/errors.hpp"
#include "specmon/harness.hpp"
#include "specmon/spec_io.hpp"

using namespace specmon;

namespace {

class FixedController final : public Controller {
 public:
  explicit FixedController(int band) : band_(band) {}
  std::string id() const override { return "fixed"; }
  void reset(const EpisodeContext& ctx) override { n_ = ctx.n_bands; }
  int select_band(const History&) override { return band_; }
  BandVector predict(const History&) override { return BandVector::probability(std::vector<float>(n_, 0.0F)); }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<FixedController>(*this); }

 private:
  int band_;
  int n_ = 0;
};

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("history encoding round trip") {
  History h(5, 1);
  h.append(2, {1, 1});
  h.append(4, {0, 0});
  const auto grid = encode_history(h);
  CHECK(grid.size() == 2U * 5U * 2U);
  CHECK(grid[2 * 2] == 1.0F);
  CHECK(grid[2 * 2 + 1] == 1.0F);
  CHECK(decode_history(grid, 5, 1) == h);
  History m(4, 3);
  m.append(1, {1, 2});
  CHECK(decode_history(encode_history(m), 4, 3) == m);
}

TEST_CASE("episode loop scores every step") {
  auto env = sample_environment(builtin_spec("A"), 4);
  ScanController scan;
  RunOptions opt;
  opt.steps = 40;
  const auto log = run_episode(scan, env, opt, 4, "A");
  REQUIRE(log.rows.size() == 40U);
  for (int t = 0; t < 40; ++t) {
    const auto& r = log.rows[t];
    CHECK(r.action == t % 20);
    CHECK(r.truth == env.state_at(t));
    CHECK(r.reward == doctest::Approx(iou_instant(r.prediction.activity_vector(), r.truth)));
  }
  const auto curve = log.cumulative_curve();
  CHECK(curve.back() == doctest::Approx(log.cumulative_iou()));
}

TEST_CASE("differential block reward") {
  std::vector<OverlapCounts> c{{1, 2}, {0, 2}, {2, 2}};
  CHECK(step_reward(RewardKind::kInstantIoU, c, 2) == 1.0);
  CHECK(step_reward(RewardKind::kDiffBlockIoU, c, 2) == doctest::Approx(3.0 / 6.0 - 2.0 / 4.0));
  CHECK(step_reward(RewardKind::kDiffBlockIoU, std::span(c).first(1), 2) == 0.0);
}

TEST_CASE("out-of-range actions are episode errors") {
  auto env = sample_environment(builtin_spec("A"), 1);
  FixedController bad(25);
  CHECK_THROWS_AS(run_episode(bad, env, RunOptions{}), EpisodeError);
}

TEST_CASE("blind episodes never read the truth") {
  auto env = sample_environment(builtin_spec("B1"), 9);
  auto expert = make_baseline("expert", builtin_spec("B1"));
  const auto h = run_blind_episode(*expert, env, 60, 9);
  CHECK(h.size() == 60);
  CHECK(env.truth_reads() == 0);
}

TEST_CASE("episode csv") {
  auto env = sample_environment(builtin_spec("A"), 2);
  RandomController rnd;
  RunOptions opt;
  opt.steps = 3;
  const auto log = run_episode(rnd, env, opt, 2);
  std::ostringstream os;
  write_episode_csv(os, log);
  const auto text = os.str();
  CHECK(text.rfind("t,action,obs,reward,pred_0", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.3333333333333333");
}

}
