#pragma once

#include <random>
#include <string>
#include <vector>

#include "nslam/dataio.hpp"
#include "nslam/meshing.hpp"

namespace nslam {

/// Area-weighted uniform samples on the surface of a mesh.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, std::mt19937_64& rng);

/// Exact nearest-neighbor distances from each query to a point set.
class PointIndex {
 public:
  explicit PointIndex(const std::vector<Vec3>& points);
  ~PointIndex();
  PointIndex(const PointIndex&) = delete;
  PointIndex& operator=(const PointIndex&) = delete;
  double nearest_distance(const Vec3& q) const;

 private:
  struct Impl;
  Impl* impl_;
};

struct MeshMetrics {
  double accuracy = 0;          // meters, mean pred -> gt distance
  double completion = 0;        // meters, mean gt -> pred distance
  double completion_ratio = 0;  // percent of gt samples within the threshold
};

/// Point-to-sampled-point metrics between two meshes. Both meshes are
/// sampled with generators seeded from `seed`; identical meshes therefore
/// produce identical samples. Throws Errc::EmptyMesh.
MeshMetrics mesh_metrics(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_samples = 200000,
                         double threshold = 0.05, std::uint64_t seed = 0);

struct DepthL1Result {
  double depth_l1 = 0;  // meters
  std::size_t views_used = 0;
  std::size_t views_rejected = 0;
};

/// Mean absolute z-depth difference between ray-cast depth maps of the two
/// meshes over the pixels where the GT mesh is hit; a missing prediction
/// counts as depth 0. Views in which the GT mesh leaves any pixel unobserved
/// are rejected. Throws Errc::NoValidViews.
DepthL1Result depth_l1(const TriangleMesh& pred, const TriangleMesh& gt, const std::vector<Pose>& views,
                       const Intrinsics& intr);

/// Camera poses at uniform random positions inside `box`, looking in uniform
/// random directions.
std::vector<Pose> random_views_in_box(const SceneBounds& box, std::size_t n, std::mt19937_64& rng);

/// RMSE of translation residuals. With `align`, pred positions are first
/// mapped by the least-squares rigid transform (no scale) onto gt.
/// Throws Errc::LengthMismatch for unequal lengths or fewer than 2 poses.
double ate_rmse(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, bool align);
double ate_rmse(const std::vector<StampedPose>& pred, const std::vector<StampedPose>& gt, bool align);

/// Pairs trajectory entries by nearest timestamp within max_dt.
/// Throws Errc::NoAssociations when nothing matches.
void associate_trajectories(const std::vector<StampedPose>& pred, const std::vector<StampedPose>& gt,
                            std::vector<Vec3>& pred_xyz, std::vector<Vec3>& gt_xyz, double max_dt = 0.02);

struct EvalReport {
  double depth_l1_cm = -1;
  double accuracy_cm = -1;
  double completion_cm = -1;
  double completion_ratio = -1;
  double ate_rmse_cm = -1;
  double ate_rmse_unaligned_cm = -1;

  /// "key value" lines; fields never computed (negative) are omitted.
  std::string to_text() const;
};

}  // namespace nslam
