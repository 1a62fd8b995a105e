#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "nslam/config.hpp"
#include "nslam/dataio.hpp"
#include "nslam/mapping.hpp"
#include "nslam/synthetic.hpp"

namespace nslam {

struct RunResult {
  std::vector<StampedPose> trajectory;  // one per processed frame, in file order
  std::vector<std::size_t> frame_indices;  // dataset index of each trajectory entry
  std::size_t diverged_frames = 0;
  double seconds = 0;
  SceneParams params;
  KeyframeDB db;
  std::filesystem::path trajectory_file;
  std::filesystem::path mesh_file;        // empty when not written
  std::filesystem::path checkpoint_file;  // empty when not written
};

/// Run configuration matching a synthetic dataset: bounds are the room box
/// grown by 10 cm, N_t = 256 and N_g = 512, everything else at defaults.
/// The dataset path is "." and the output directory "output", both relative
/// to the directory the configuration is saved in.
RunConfig synthetic_run_config(const SyntheticScene& scene);

/// Generates the dataset and writes config.yaml next to it.
void write_synthetic_benchmark(const SyntheticScene& scene, const SynthConfig& synth,
                               const std::filesystem::path& out_dir);

/// Opens the dataset named by the configuration.
/// Throws Errc::DatasetError / Errc::MissingFile.
Dataset open_dataset(const RunConfig& cfg);

/// Full SLAM run: frame 0 at the identity with first_frame_iters mapping
/// steps; every later frame is initialized by the motion model and tracked,
/// and every map_every-th frame becomes a keyframe followed by one mapping
/// round. Writes trajectory.txt (and, if enabled, metrics.jsonl,
/// checkpoint.bin, keyframes.txt and mesh.ply) into cfg.output_dir.
/// `progress` receives one human-readable line per frame when non-null.
RunResult run_slam(const RunConfig& cfg, std::ostream* progress = nullptr);

}  // namespace nslam
