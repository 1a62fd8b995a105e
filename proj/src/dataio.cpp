#include "nslam/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

#include "nslam/error.hpp"

namespace nslam {

namespace fs = std::filesystem;

Ray frame_ray(const Frame& frame, const Pose& pose, int u, int v) {
  Ray ray = pixel_to_ray(frame.intr, pose, u, v);
  ray.gt_color = frame.color_at(u, v);
  if (const auto d = frame.depth_at(u, v)) ray.gt_depth = depth_to_range(frame.intr, u, v, *d);
  return ray;
}

namespace {

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw Error(Errc::MissingFile, "missing file: " + p.string());
}

Pose pose_from_tq(const Vec3& t, const Eigen::Quaterniond& q) {
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = q.normalized().toRotationMatrix();
  T.topRightCorner<3, 1>() = t;
  return Pose::from_matrix(T);
}

// Skips blank lines and '#' comments.
bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace

Frame Dataset::load_frame(std::size_t index) const {
  if (index >= frames.size()) throw Error(Errc::DatasetError, "frame index out of range");
  const FrameEntry& e = frames[index];
  Frame f;
  f.id = static_cast<int>(index);
  f.timestamp = e.timestamp;
  f.intr = intr;
  int w = 0, h = 0, dw = 0, dh = 0;
  f.color = read_color_png(e.color_path, w, h);
  f.depth = read_depth_png(e.depth_path, intr.depth_scale, dw, dh);
  if (w != intr.width || h != intr.height || dw != intr.width || dh != intr.height) {
    throw Error(Errc::DatasetError, "image size does not match intrinsics: " + e.color_path.string());
  }
  return f;
}

Dataset load_synthetic(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::MissingFile, "dataset directory not found: " + dir.string());
  Dataset ds;
  require_file(dir / "intrinsics.txt");
  ds.intr = read_intrinsics(dir / "intrinsics.txt");
  require_file(dir / "trajectory.txt");
  const auto traj = read_trajectory(dir / "trajectory.txt");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    FrameEntry e;
    e.color_path = dir / "frames" / (std::string(name) + ".color.png");
    e.depth_path = dir / "frames" / (std::string(name) + ".depth.png");
    e.timestamp = traj[i].timestamp;
    require_file(e.color_path);
    require_file(e.depth_path);
    ds.frames.push_back(e);
    ds.gt_poses.push_back(traj[i].pose);
  }
  if (ds.frames.empty()) throw Error(Errc::DatasetError, "dataset has no frames: " + dir.string());
  return ds;
}

std::vector<StampedPath> read_stamped_list(const fs::path& file) {
  require_file(file);
  std::ifstream in(file);
  std::vector<StampedPath> out;
  std::string line;
  while (next_data_line(in, line)) {
    std::istringstream ls(line);
    StampedPath sp;
    if (!(ls >> sp.timestamp >> sp.path)) throw Error(Errc::FormatError, "bad line in " + file.string());
    out.push_back(sp);
  }
  return out;
}

std::vector<int> associate_timestamps(const std::vector<double>& query, const std::vector<double>& reference,
                                      double max_dt) {
  std::vector<int> out(query.size(), -1);
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto it = std::lower_bound(reference.begin(), reference.end(), query[i]);
    double best = max_dt;
    int best_j = -1;
    for (auto c : {it, it == reference.begin() ? reference.end() : std::prev(it)}) {
      if (c == reference.end()) continue;
      const double dt = std::abs(*c - query[i]);
      if (dt <= best) {
        best = dt;
        best_j = static_cast<int>(c - reference.begin());
      }
    }
    out[i] = best_j;
  }
  return out;
}

Dataset load_tum(const fs::path& dir, const Intrinsics& intr, double max_dt) {
  if (!fs::is_directory(dir)) throw Error(Errc::MissingFile, "dataset directory not found: " + dir.string());
  const auto rgb = read_stamped_list(dir / "rgb.txt");
  const auto depth = read_stamped_list(dir / "depth.txt");
  std::vector<StampedPose> gt;
  if (fs::exists(dir / "groundtruth.txt")) gt = read_trajectory(dir / "groundtruth.txt");

  std::vector<double> q, dref, gref;
  for (const auto& r : rgb) q.push_back(r.timestamp);
  for (const auto& d : depth) dref.push_back(d.timestamp);
  for (const auto& g : gt) gref.push_back(g.timestamp);
  std::sort(dref.begin(), dref.end());
  std::sort(gref.begin(), gref.end());
  auto dsorted = depth;
  std::sort(dsorted.begin(), dsorted.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
  auto gsorted = gt;
  std::sort(gsorted.begin(), gsorted.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });

  const auto da = associate_timestamps(q, dref, max_dt);
  const auto ga = gt.empty() ? std::vector<int>(q.size(), -1) : associate_timestamps(q, gref, max_dt);

  Dataset ds;
  ds.intr = intr;
  std::vector<Pose> poses;
  double last_t = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    if (da[i] < 0) continue;
    if (!gt.empty() && ga[i] < 0) continue;
    if (!(rgb[i].timestamp > last_t)) continue;
    last_t = rgb[i].timestamp;
    FrameEntry e;
    e.timestamp = rgb[i].timestamp;
    e.color_path = dir / rgb[i].path;
    e.depth_path = dir / dsorted[da[i]].path;
    ds.frames.push_back(e);
    if (!gt.empty()) poses.push_back(gsorted[ga[i]].pose);
  }
  if (ds.frames.empty()) throw Error(Errc::NoAssociations, "no color/depth pairs within tolerance in " + dir.string());
  ds.gt_poses = std::move(poses);
  return ds;
}

std::vector<StampedPose> read_trajectory(const fs::path& file) {
  require_file(file);
  std::ifstream in(file);
  std::vector<StampedPose> out;
  std::string line;
  while (next_data_line(in, line)) {
    std::istringstream ls(line);
    double ts;
    Vec3 t;
    double qx, qy, qz, qw;
    if (!(ls >> ts >> t.x() >> t.y() >> t.z() >> qx >> qy >> qz >> qw)) {
      throw Error(Errc::FormatError, "bad trajectory line in " + file.string() + ": " + line);
    }
    out.push_back({ts, pose_from_tq(t, Eigen::Quaterniond(qw, qx, qy, qz))});
  }
  return out;
}

std::string format_trajectory_line(const StampedPose& p) {
  const Mat4 T = p.pose.matrix();
  const Vec3 t = T.topRightCorner<3, 1>();
  const Eigen::Quaterniond q = rotation_to_quaternion(T.topLeftCorner<3, 3>());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f", p.timestamp, t.x(), t.y(),
                t.z(), q.x(), q.y(), q.z(), q.w());
  return buf;
}

void write_trajectory(const fs::path& file, const std::vector<StampedPose>& traj) {
  std::ofstream out(file);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + file.string());
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& p : traj) out << format_trajectory_line(p) << '\n';
}

void write_color_png(const fs::path& file, int width, int height, const std::vector<Vec3>& color) {
  cv::Mat img(height, width, CV_8UC3);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Vec3& c = color[std::size_t(v) * width + u];
      auto q = [](double x) { return static_cast<uchar>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
      img.at<cv::Vec3b>(v, u) = cv::Vec3b(q(c.z()), q(c.y()), q(c.x()));  // BGR
    }
  }
  if (!cv::imwrite(file.string(), img)) throw Error(Errc::MissingFile, "cannot write " + file.string());
}

std::vector<Vec3> read_color_png(const fs::path& file, int& width, int& height) {
  require_file(file);
  const cv::Mat img = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw Error(Errc::DatasetError, "cannot decode " + file.string());
  width = img.cols;
  height = img.rows;
  std::vector<Vec3> out(std::size_t(width) * height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const cv::Vec3b p = img.at<cv::Vec3b>(v, u);
      out[std::size_t(v) * width + u] = Vec3(p[2], p[1], p[0]) / 255.0;
    }
  }
  return out;
}

void write_depth_png(const fs::path& file, int width, int height, const std::vector<double>& depth,
                     double depth_scale) {
  cv::Mat img(height, width, CV_16UC1);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double d = depth[std::size_t(v) * width + u];
      const double raw = d > 0 ? std::round(d / depth_scale) : 0.0;
      img.at<std::uint16_t>(v, u) = static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
    }
  }
  if (!cv::imwrite(file.string(), img)) throw Error(Errc::MissingFile, "cannot write " + file.string());
}

std::vector<double> read_depth_png(const fs::path& file, double depth_scale, int& width, int& height) {
  require_file(file);
  const cv::Mat img = cv::imread(file.string(), cv::IMREAD_ANYDEPTH);
  if (img.empty() || img.type() != CV_16UC1) throw Error(Errc::DatasetError, "not a 16-bit depth image: " + file.string());
  width = img.cols;
  height = img.rows;
  std::vector<double> out(std::size_t(width) * height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) out[std::size_t(v) * width + u] = img.at<std::uint16_t>(v, u) * depth_scale;
  }
  return out;
}

void write_intrinsics(const fs::path& file, const Intrinsics& intr) {
  std::ofstream out(file);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + file.string());
  out.precision(17);
  out << "# fx fy cx cy width height depth_scale\n";
  out << intr.fx << ' ' << intr.fy << ' ' << intr.cx << ' ' << intr.cy << ' ' << intr.width << ' '
      << intr.height << ' ' << intr.depth_scale << '\n';
}

Intrinsics read_intrinsics(const fs::path& file) {
  require_file(file);
  std::ifstream in(file);
  std::string line;
  Intrinsics intr;
  if (!next_data_line(in, line)) throw Error(Errc::FormatError, "empty intrinsics file " + file.string());
  std::istringstream ls(line);
  if (!(ls >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height >> intr.depth_scale)) {
    throw Error(Errc::FormatError, "bad intrinsics line in " + file.string());
  }
  if (!intr.valid()) throw Error(Errc::DatasetError, "invalid intrinsics in " + file.string());
  return intr;
}

}  // namespace nslam
