#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nslam/geometry.hpp"

namespace nslam {

/// One RGB-D observation with its images decoded.
struct Frame {
  int id = 0;
  double timestamp = 0;
  Intrinsics intr;
  std::vector<Vec3> color;    // row-major, values in [0,1]
  std::vector<double> depth;  // row-major z-depth in meters, 0 where missing

  const Vec3& color_at(int u, int v) const { return color[std::size_t(v) * intr.width + u]; }
  std::optional<double> depth_at(int u, int v) const {
    const double d = depth[std::size_t(v) * intr.width + u];
    if (d > 0) return d;
    return std::nullopt;
  }
};

/// Ray through pixel (u, v) of `frame` seen from `pose`, carrying the
/// observed color and the observed depth as a range along the ray.
Ray frame_ray(const Frame& frame, const Pose& pose, int u, int v);

struct FrameEntry {
  std::filesystem::path color_path;
  std::filesystem::path depth_path;
  double timestamp = 0;
};

struct Dataset {
  std::vector<FrameEntry> frames;
  Intrinsics intr;
  std::vector<Pose> gt_poses;  // empty, or one per frame

  std::size_t size() const { return frames.size(); }
  bool has_ground_truth() const { return gt_poses.size() == frames.size() && !frames.empty(); }
  /// Decodes frame `index`. Throws Errc::DatasetError when the image sizes
  /// disagree with the intrinsics.
  Frame load_frame(std::size_t index) const;
};

/// Synthetic directory layout: intrinsics.txt, frames/NNNN.{color,depth}.png,
/// trajectory.txt. Throws Errc::MissingFile.
Dataset load_synthetic(const std::filesystem::path& dir);

/// TUM RGB-D layout: rgb.txt, depth.txt, optional groundtruth.txt. Rows are
/// associated to each color timestamp by nearest timestamp within
/// `max_dt` seconds. Throws Errc::MissingFile, Errc::NoAssociations.
Dataset load_tum(const std::filesystem::path& dir, const Intrinsics& intr, double max_dt = 0.02);

/// Parsed "timestamp path" list file (comments start with '#').
struct StampedPath {
  double timestamp = 0;
  std::string path;
};
std::vector<StampedPath> read_stamped_list(const std::filesystem::path& file);

/// For every timestamp in `query`, the index of the nearest entry of the
/// sorted `reference` within max_dt, or -1.
std::vector<int> associate_timestamps(const std::vector<double>& query,
                                      const std::vector<double>& reference, double max_dt);

struct StampedPose {
  double timestamp = 0;
  Pose pose;
};

/// Trajectory text: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
std::vector<StampedPose> read_trajectory(const std::filesystem::path& file);
void write_trajectory(const std::filesystem::path& file, const std::vector<StampedPose>& traj);
std::string format_trajectory_line(const StampedPose& p);

/// 8-bit RGB PNG <-> [0,1] colors; 16-bit depth PNG <-> meters (raw * scale).
void write_color_png(const std::filesystem::path& file, int width, int height,
                     const std::vector<Vec3>& color);
std::vector<Vec3> read_color_png(const std::filesystem::path& file, int& width, int& height);
void write_depth_png(const std::filesystem::path& file, int width, int height,
                     const std::vector<double>& depth, double depth_scale);
std::vector<double> read_depth_png(const std::filesystem::path& file, double depth_scale, int& width,
                                   int& height);

void write_intrinsics(const std::filesystem::path& file, const Intrinsics& intr);
Intrinsics read_intrinsics(const std::filesystem::path& file);

}  // namespace nslam
