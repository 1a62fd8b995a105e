#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "nslam/error.hpp"
#include "nslam/synthetic.hpp"
#include "nslam/tracking.hpp"
#include "support/oracles.hpp"

using namespace nslam;

namespace {

double translation_gap(const Pose& a, const Pose& b) {
  return (a.matrix().topRightCorner<3, 1>() - b.matrix().topRightCorner<3, 1>()).norm();
}

double rotation_gap(const Pose& a, const Pose& b) {
  const Mat3 d = a.matrix().topLeftCorner<3, 3>() * b.matrix().topLeftCorner<3, 3>().transpose();
  return Eigen::AngleAxisd(d).angle();
}

// Moves the camera center by `dt` and turns the camera about its own center.
Pose perturb_about_center(const Pose& p, const Vec3& dt, const Vec3& dw) {
  Mat4 T = p.matrix();
  T.topLeftCorner<3, 3>() = so3_exp(dw) * T.topLeftCorner<3, 3>();
  T.topRightCorner<3, 1>() += dt;
  return Pose::from_matrix(T);
}

Pose pose_from(const Mat3& R, const Vec3& t) {
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = R;
  T.topRightCorner<3, 1>() = t;
  return Pose::from_matrix(T);
}

struct RoomTracking : ::testing::Test {
  static void SetUpTestSuite() {
    cfg_ = new RunConfig(fixture::room_config());
    field_ = new SceneParams(fixture::room_field_gt());
    ds_ = new Dataset(load_synthetic(fixture::room_dataset()));
  }
  static void TearDownTestSuite() {
    delete cfg_;
    delete field_;
    delete ds_;
  }
  static RunConfig* cfg_;
  static SceneParams* field_;
  static Dataset* ds_;
};
RunConfig* RoomTracking::cfg_ = nullptr;
SceneParams* RoomTracking::field_ = nullptr;
Dataset* RoomTracking::ds_ = nullptr;

}  // namespace

TEST(MotionModel, NoHistoryIsIdentity) {
  EXPECT_TRUE(motion_model_init(std::nullopt, std::nullopt).matrix().isApprox(Mat4::Identity(), 0));
}

TEST(MotionModel, SinglePoseIsCopied) {
  std::mt19937_64 rng(1);
  const Pose p = Pose::from_matrix(oracle::random_rigid(rng, 1.0, 1.0));
  EXPECT_TRUE(motion_model_init(p, std::nullopt).matrix().isApprox(p.matrix(), 1e-12));
}

TEST(MotionModel, ZeroVelocityRepeatsPose) {
  std::mt19937_64 rng(2);
  const Pose p = Pose::from_matrix(oracle::random_rigid(rng, 1.0, 1.0));
  EXPECT_LT((motion_model_init(p, p).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MotionModel, ConstantTranslationExtrapolates) {
  const Mat3 R = so3_exp(Vec3(0.1, -0.2, 0.3));
  const Vec3 v(0.01, -0.02, 0.005);
  const Pose p2 = pose_from(R, Vec3(1, 2, 3));
  const Pose p1 = pose_from(R, Vec3(1, 2, 3) + v);
  const Pose pred = motion_model_init(p1, p2);
  const Mat4 T = pred.matrix();
  EXPECT_LT((T.topRightCorner<3, 1>() - (Vec3(1, 2, 3) + 2 * v)).norm(), 1e-12);
  EXPECT_LT((T.topLeftCorner<3, 3>() - R).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MotionModel, ConstantTwistExtrapolates) {
  // Screw motion T_k = exp(k xi) T_0: the prediction from k=1,2 is exactly k=3.
  Vec6 xi;
  xi << 0.02, -0.01, 0.03, 0.01, 0.02, -0.015;
  std::mt19937_64 rng(3);
  const Mat4 T0 = oracle::random_rigid(rng, 1.0, 1.0);
  const Pose p1 = Pose::from_matrix(oracle::expm(oracle::twist_matrix(xi)) * T0);
  const Pose p2 = Pose::from_matrix(oracle::expm(oracle::twist_matrix(2 * xi)) * T0);
  const Mat4 want = oracle::expm(oracle::twist_matrix(3 * xi)) * T0;
  EXPECT_LT((motion_model_init(p2, p1).matrix() - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MotionModel, BeatsZeroMotionOnTheOrbit) {
  const SynthConfig sc;
  const std::vector<Pose> gt = orbit_trajectory(sc);
  double err_motion = 0, err_static = 0;
  for (std::size_t t = 2; t < gt.size(); ++t) {
    err_motion += translation_gap(motion_model_init(gt[t - 1], gt[t - 2]), gt[t]);
    err_static += translation_gap(gt[t - 1], gt[t]);
  }
  EXPECT_LT(err_motion, 0.2 * err_static);
}

TEST(PoseStep, ZeroGradientLeavesPose) {
  std::mt19937_64 rng(4);
  const Pose p = Pose::from_matrix(oracle::random_rigid(rng, 1.0, 1.0));
  ParamGroup opt("pose", AdamConfig{1e-3});
  EXPECT_LT((pose_step(opt, p, Vec6::Zero()).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PoseStep, FirstStepIsLearningRateAgainstGradientSign) {
  ParamGroup opt("pose", AdamConfig{1e-3});
  Vec6 g;
  g << 2, -3, 0.5, -1, 4, -0.25;
  const Pose moved = pose_step(opt, Pose::identity(), g);
  const Vec6 xi = log_map(moved.matrix());
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(xi[i], -1e-3 * (g[i] > 0 ? 1 : -1), 1e-9) << i;
}

TEST(TrackingConfigCheck, RejectsBadValues) {
  TrackingConfig c;
  c.n_t = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrackingConfig{};
  c.lr_pose = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrackingConfig{};
  c.iters = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST_F(RoomTracking, ZeroIterationsReturnsInitExactly) {
  const Frame f = ds_->load_frame(10);
  TrackingConfig tc = cfg_->tracking;
  tc.iters = 0;
  const Pose init = perturb_about_center(ds_->gt_poses[10], Vec3(0.01, 0, 0), Vec3::Zero());
  std::mt19937_64 rng(0);
  const TrackingResult r = track_frame(f, *field_, init, tc, cfg_->sampling, cfg_->weights, rng);
  EXPECT_EQ(r.pose.xi, init.xi);
  EXPECT_TRUE(r.trace.empty());
}

TEST_F(RoomTracking, FieldIsNotModified) {
  const Frame f = ds_->load_frame(7);
  const std::uint64_t before = field_->checksum();
  std::mt19937_64 rng(0);
  track_frame(f, *field_, ds_->gt_poses[7], cfg_->tracking, cfg_->sampling, cfg_->weights, rng);
  EXPECT_EQ(field_->checksum(), before);
}

// Starting at ground truth, ten steps of at most lr per twist coordinate keep
// the pose well inside the basin the recovery test starts from.
TEST_F(RoomTracking, GroundTruthInitStaysClose) {
  const double deg = std::acos(-1.0) / 180.0;
  for (int idx : {5, 23, 41}) {
    const Frame f = ds_->load_frame(idx);
    std::mt19937_64 rng(idx);
    const TrackingResult r =
        track_frame(f, *field_, ds_->gt_poses[idx], cfg_->tracking, cfg_->sampling, cfg_->weights, rng);
    EXPECT_FALSE(r.diverged);
    EXPECT_LT(translation_gap(r.pose, ds_->gt_poses[idx]), 0.01) << idx;
    EXPECT_LT(rotation_gap(r.pose, ds_->gt_poses[idx]), 0.5 * deg) << idx;
  }
}

TEST_F(RoomTracking, PerturbationErrorShrinks) {
  const double deg = std::acos(-1.0) / 180.0;
  std::mt19937_64 dir_rng(11);
  double sum_t = 0, sum_r = 0;
  int n = 0, steps = 0, non_increasing = 0;
  for (int idx = 4; idx < 50; idx += 5) {
    const Frame f = ds_->load_frame(idx);
    const Pose gt = ds_->gt_poses[idx];
    const Pose init = perturb_about_center(gt, 0.01 * oracle::random_unit(dir_rng),
                                           0.5 * deg * oracle::random_unit(dir_rng));
    std::mt19937_64 rng(idx);
    const TrackingResult r = track_frame(f, *field_, init, cfg_->tracking, cfg_->sampling, cfg_->weights, rng);
    EXPECT_LT(r.final_loss, r.initial_loss) << idx;
    sum_t += translation_gap(r.pose, gt);
    sum_r += rotation_gap(r.pose, gt);
    ++n;
    for (std::size_t i = 1; i < r.trace.size(); ++i, ++steps) {
      if (r.trace[i].total <= r.trace[i - 1].total) ++non_increasing;
    }
  }
  EXPECT_LT(sum_t / n, 0.01);
  EXPECT_LT(sum_r / n, 0.5 * deg);
  RecordProperty("mean_translation_mm", std::to_string(1e3 * sum_t / n));
  RecordProperty("mean_rotation_deg", std::to_string(sum_r / n / deg));
  RecordProperty("non_increasing_fraction", std::to_string(double(non_increasing) / steps));
  std::printf("mean residual %.2f mm %.3f deg, non-increasing %d/%d\n", 1e3 * sum_t / n, sum_r / n / deg,
              non_increasing, steps);
}

TEST_F(RoomTracking, DivergenceRevertsToInit) {
  // A factor far below 1 flags every run, so the guard must restore init.
  const Frame f = ds_->load_frame(12);
  TrackingConfig tc = cfg_->tracking;
  tc.divergence_factor = 1e-6;
  const Pose init = perturb_about_center(ds_->gt_poses[12], Vec3(0, 0.01, 0), Vec3::Zero());
  std::mt19937_64 rng(3);
  const TrackingResult r = track_frame(f, *field_, init, tc, cfg_->sampling, cfg_->weights, rng);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.pose.xi, init.xi);
  EXPECT_EQ(r.trace.size(), std::size_t(tc.iters));
}

TEST_F(RoomTracking, PoseLeavingTheRoomIsHandled) {
  // Huge steps carry the camera out of the scene box; rays that miss the box
  // render nothing instead of querying the field out of bounds.
  const Frame f = ds_->load_frame(12);
  TrackingConfig tc = cfg_->tracking;
  tc.lr_pose = 0.5;
  std::mt19937_64 rng(3);
  const TrackingResult r = track_frame(f, *field_, ds_->gt_poses[12], tc, cfg_->sampling, cfg_->weights, rng);
  EXPECT_EQ(r.trace.size(), std::size_t(tc.iters));
  if (r.diverged) EXPECT_EQ(r.pose.xi, ds_->gt_poses[12].xi);
}
