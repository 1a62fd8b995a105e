#pragma once

// Expensive shared inputs, built once per build tree and cached on disk.

#include <filesystem>

#include "nslam/config.hpp"
#include "nslam/dataio.hpp"
#include "nslam/scene_field.hpp"

namespace fixture {

using namespace nslam;

/// Scratch directory inside the build tree.
std::filesystem::path fixture_dir();

/// Default synthetic room dataset (50 frames, 80x60), generated on first use.
const std::filesystem::path& room_dataset();

/// The run configuration written next to the dataset, with absolute paths.
RunConfig room_config();

/// Field mapped with ground-truth poses over the whole room sequence
/// (keyframe every map_every frames, poses frozen). Cached as a checkpoint.
SceneParams room_field_gt();

}  // namespace fixture
