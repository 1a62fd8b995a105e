#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nslam/scene_field.hpp"

namespace nslam {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> colors;  // empty or one per vertex, in [0,1]

  bool empty() const { return triangles.empty(); }
  /// Throws Errc::FormatError on out-of-range indices or non-finite vertices.
  void validate() const;
  double area() const;
  Vec3 face_normal(std::size_t tri) const;  // unit, right-handed winding
  /// Drops unreferenced vertices and renumbers.
  TriangleMesh compacted() const;
};

/// Batched scalar field: fills out[i] = f(xs[i]).
using ScalarField = std::function<void(std::span<const Vec3>, std::span<double>)>;

/// Marching cubes over the lattice min + voxel * (i, j, k) covering `bounds`.
/// Vertices are placed by linear interpolation on lattice edges and shared
/// between cells. Faces with four crossings are split by the asymptotic
/// decider. Triangles wind counter-clockwise seen from the positive side.
/// Throws Errc::EmptySurface when the field has no sign change.
TriangleMesh extract_isosurface(const ScalarField& field, const SceneBounds& bounds, double voxel);

/// Isosurface of the learned SDF with per-vertex color from the color head.
/// Throws Errc::ConfigError for voxel <= 0 and Errc::EmptySurface.
TriangleMesh extract_mesh(const SceneParams& params, const SceneBounds& bounds, double voxel);

/// ASCII PLY with optional per-vertex uchar colors.
void write_ply(const std::filesystem::path& file, const TriangleMesh& mesh);
TriangleMesh read_ply(const std::filesystem::path& file);

/// Exact ray/triangle queries accelerated by a bounding volume hierarchy.
class MeshRaycaster {
 public:
  /// Keeps a reference to `mesh`, which must outlive the raycaster.
  explicit MeshRaycaster(const TriangleMesh& mesh);
  /// Distance along `dir` (unit) to the first hit with t > t_min, if any.
  std::optional<double> cast(const Vec3& origin, const Vec3& dir, double t_min = 1e-9,
                             double t_max = 1e30) const;
  /// z-depth image of the mesh from a camera-to-world pose; 0 where nothing is hit.
  std::vector<double> render_depth(const Intrinsics& intr, const Pose& pose) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int begin = 0, end = 0;     // triangle range for leaves
  };
  int build(int begin, int end);
  bool hit_triangle(int tri, const Vec3& o, const Vec3& d, double t_min, double& t) const;

  const TriangleMesh* mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

enum class CullStrategy {
  None,
  Frustum,            // keep vertices inside at least one camera frustum
  FrustumOcclusion,   // ... and visible (not occluded) in at least one of them
  VirtualView,        // FrustumOcclusion over the trajectory plus extra virtual views
};

struct CullOptions {
  CullStrategy strategy = CullStrategy::FrustumOcclusion;
  std::vector<Pose> views;          // camera-to-world poses of the trajectory
  std::vector<Pose> virtual_views;  // extra views used by VirtualView
  Intrinsics intr;
  double near = 0.0;           // vertices closer than this along +z are outside
  double depth_tolerance = 0.03;  // occlusion test slack, meters
  const TriangleMesh* occluder = nullptr;  // geometry for the occlusion test; the mesh itself when null
};

/// Removes every triangle that has a vertex rejected by the strategy.
/// Throws Errc::ConfigError when the view list is empty.
TriangleMesh cull_mesh(const TriangleMesh& mesh, const CullOptions& opts);

/// Per-vertex keep mask used by cull_mesh.
std::vector<char> cull_vertex_mask(const TriangleMesh& mesh, const CullOptions& opts);

}  // namespace nslam
