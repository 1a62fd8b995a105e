#include "nslam/metrics.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <cmath>
#include <sstream>

#include "nslam/error.hpp"

namespace nslam {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, std::mt19937_64& rng) {
  if (mesh.triangles.empty()) throw Error(Errc::EmptyMesh, "cannot sample an empty mesh");
  std::vector<double> cdf(mesh.triangles.size());
  double acc = 0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    acc += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]).norm();
    cdf[i] = acc;
  }
  if (!(acc > 0)) throw Error(Errc::EmptyMesh, "mesh has zero area");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double r = unit(rng) * acc;
    const std::size_t i = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin(),
                                                cdf.size() - 1);
    double a = unit(rng), b = unit(rng);
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const auto& t = mesh.triangles[i];
    out.push_back(mesh.vertices[t[0]] + a * (mesh.vertices[t[1]] - mesh.vertices[t[0]]) +
                  b * (mesh.vertices[t[2]] - mesh.vertices[t[0]]));
  }
  return out;
}

struct PointIndex::Impl {
  bgi::rtree<BPoint, bgi::rstar<16>> tree;
};

PointIndex::PointIndex(const std::vector<Vec3>& points) : impl_(new Impl) {
  std::vector<BPoint> pts;
  pts.reserve(points.size());
  for (const Vec3& p : points) pts.emplace_back(p.x(), p.y(), p.z());
  impl_->tree = bgi::rtree<BPoint, bgi::rstar<16>>(pts.begin(), pts.end());  // bulk load
}

PointIndex::~PointIndex() { delete impl_; }

double PointIndex::nearest_distance(const Vec3& q) const {
  const BPoint bq(q.x(), q.y(), q.z());
  for (auto it = impl_->tree.qbegin(bgi::nearest(bq, 1)); it != impl_->tree.qend(); ++it) {
    return bg::distance(bq, *it);
  }
  return std::numeric_limits<double>::infinity();
}

MeshMetrics mesh_metrics(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_samples,
                         double threshold, std::uint64_t seed) {
  if (pred.empty() || gt.empty()) throw Error(Errc::EmptyMesh, "mesh metrics need two non-empty meshes");
  std::mt19937_64 rp(seed), rg(seed);
  const std::vector<Vec3> P = sample_surface(pred, n_samples, rp);
  const std::vector<Vec3> G = sample_surface(gt, n_samples, rg);
  const PointIndex ip(P), ig(G);
  MeshMetrics m;
  for (const Vec3& p : P) m.accuracy += ig.nearest_distance(p);
  std::size_t within = 0;
  for (const Vec3& g : G) {
    const double d = ip.nearest_distance(g);
    m.completion += d;
    within += d < threshold;
  }
  m.accuracy /= double(P.size());
  m.completion /= double(G.size());
  m.completion_ratio = 100.0 * double(within) / double(G.size());
  return m;
}

DepthL1Result depth_l1(const TriangleMesh& pred, const TriangleMesh& gt, const std::vector<Pose>& views,
                       const Intrinsics& intr) {
  const MeshRaycaster cp(pred), cg(gt);
  DepthL1Result res;
  double sum = 0;
  std::size_t count = 0;
  for (const Pose& view : views) {
    const std::vector<double> dg = cg.render_depth(intr, view);
    if (std::any_of(dg.begin(), dg.end(), [](double d) { return !(d > 0); })) {
      ++res.views_rejected;
      continue;
    }
    const std::vector<double> dp = cp.render_depth(intr, view);
    for (std::size_t i = 0; i < dg.size(); ++i) sum += std::abs(dp[i] - dg[i]);
    count += dg.size();
    ++res.views_used;
  }
  if (res.views_used == 0) throw Error(Errc::NoValidViews, "every view leaves part of the GT mesh unobserved");
  res.depth_l1 = sum / double(count);
  return res;
}

std::vector<Pose> random_views_in_box(const SceneBounds& box, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Pose> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 c = box.min + box.extent().cwiseProduct(Vec3(unit(rng), unit(rng), unit(rng)));
    Eigen::Vector4d q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
    T.topRightCorner<3, 1>() = c;
    out.push_back(Pose::from_matrix(T));
  }
  return out;
}

double ate_rmse(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, bool align) {
  if (pred.size() != gt.size() || pred.size() < 2) {
    throw Error(Errc::LengthMismatch, "ATE needs two trajectories of equal length >= 2");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(pred.size());
  Eigen::Matrix3Xd P(3, n), G(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    P.col(i) = pred[i];
    G.col(i) = gt[i];
  }
  if (align) {
    const Mat4 T = Eigen::umeyama(P, G, false);
    P = (T.topLeftCorner<3, 3>() * P).colwise() + T.topRightCorner<3, 1>();
  }
  return std::sqrt((P - G).colwise().squaredNorm().mean());
}

void associate_trajectories(const std::vector<StampedPose>& pred, const std::vector<StampedPose>& gt,
                            std::vector<Vec3>& pred_xyz, std::vector<Vec3>& gt_xyz, double max_dt) {
  std::vector<StampedPose> g = gt;
  std::sort(g.begin(), g.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
  std::vector<double> gref, q;
  for (const auto& s : g) gref.push_back(s.timestamp);
  for (const auto& s : pred) q.push_back(s.timestamp);
  const std::vector<int> m = associate_timestamps(q, gref, max_dt);
  pred_xyz.clear();
  gt_xyz.clear();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (m[i] < 0) continue;
    pred_xyz.push_back(pred[i].pose.translation());
    gt_xyz.push_back(g[m[i]].pose.translation());
  }
  if (pred_xyz.empty()) throw Error(Errc::NoAssociations, "no trajectory timestamps match");
}

double ate_rmse(const std::vector<StampedPose>& pred, const std::vector<StampedPose>& gt, bool align) {
  std::vector<Vec3> p, g;
  associate_trajectories(pred, gt, p, g);
  return ate_rmse(p, g, align);
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  auto put = [&](const char* key, double v) {
    if (v >= 0) os << key << ' ' << v << '\n';
  };
  put("depth_l1_cm", depth_l1_cm);
  put("accuracy_cm", accuracy_cm);
  put("completion_cm", completion_cm);
  put("completion_ratio_percent", completion_ratio);
  put("ate_rmse_cm", ate_rmse_cm);
  put("ate_rmse_unaligned_cm", ate_rmse_unaligned_cm);
  return os.str();
}

}  // namespace nslam
