#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nslam/mapping.hpp"
#include "nslam/tracking.hpp"

namespace nslam {

enum class DatasetFormat { Synthetic, Tum };

struct RunConfig {
  // dataset
  std::filesystem::path dataset_path;
  DatasetFormat format = DatasetFormat::Synthetic;
  Intrinsics tum_intrinsics;  // TUM folders carry no intrinsics file
  int frame_start = 0;
  int frame_end = -1;  // exclusive; -1 = to the end
  int frame_stride = 1;

  std::filesystem::path output_dir = "output";
  std::uint64_t seed = 0;

  // scene representation
  SceneBounds bounds;
  double finest_voxel = 0.02;
  int grid_levels = 16;
  int grid_r_min = 16;
  int grid_table_log2 = 13;
  int grid_feature_dim = 2;
  int oneblob_bins = 16;
  int hidden_width = 32;
  int hidden_layers = 1;
  int h_dim = 15;

  SamplingConfig sampling;
  LossWeights weights;
  TrackingConfig tracking;
  MappingConfig mapping;

  // outputs
  double mesh_voxel = 0.02;
  bool save_mesh = true;
  bool save_checkpoint = true;
  bool save_keyframes = true;
  bool metrics_log = true;

  FieldConfig field_config() const;
  /// Cross-module consistency; throws Errc::ConfigError.
  void validate() const;
};

/// Reads a YAML run configuration. Keys that are absent keep their defaults;
/// relative paths are resolved against the file's directory.
/// Throws Errc::MissingFile, Errc::ConfigError.
RunConfig load_run_config(const std::filesystem::path& file);

/// Writes every field with a comment describing its default.
void save_run_config(const RunConfig& cfg, const std::filesystem::path& file);

const char* to_string(BaMode mode);
BaMode ba_mode_from_string(const std::string& s);

}  // namespace nslam
