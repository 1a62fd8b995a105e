#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "nslam/dataio.hpp"
#include "nslam/objectives.hpp"
#include "nslam/optim.hpp"

namespace nslam {

/// One stored keyframe pixel. `depth` is the observed z-depth in meters.
struct PixelRecord {
  int frame_id = 0;
  Pixel pixel;
  Vec3 color = Vec3::Zero();
  std::optional<double> depth;
};

/// Append-only store of sampled keyframe pixels plus one optimizable pose per
/// keyframe. Full images are never retained.
class KeyframeDB {
 public:
  KeyframeDB() = default;
  KeyframeDB(const Intrinsics& intr, double pixel_fraction = 0.05);

  const Intrinsics& intrinsics() const { return intr_; }
  double pixel_fraction() const { return pixel_fraction_; }

  /// Samples round(fraction * W * H) distinct pixels uniformly and registers
  /// the pose. Throws Errc::DuplicateKeyframe for a known frame id.
  void insert_keyframe(const Frame& frame, const Pose& pose, std::mt19937_64& rng);

  std::size_t num_keyframes() const { return frame_ids_.size(); }
  std::size_t num_records() const { return records_.size(); }
  const std::vector<PixelRecord>& records() const { return records_; }
  const std::vector<int>& frame_ids() const { return frame_ids_; }
  /// Keyframe slot (insertion order) of a frame id; throws if unknown.
  std::size_t slot_of(int frame_id) const;
  /// Record range [begin, end) belonging to a slot.
  std::pair<std::size_t, std::size_t> record_range(std::size_t slot) const;

  const Pose& pose(std::size_t slot) const { return poses_[slot]; }
  void set_pose(std::size_t slot, const Pose& p) { poses_[slot] = p; }
  const std::vector<Pose>& poses() const { return poses_; }

  /// Materializes a record into a ray using the current pose of its keyframe.
  Ray make_ray(const PixelRecord& rec) const;

  void dump(const std::filesystem::path& file) const;
  static KeyframeDB restore(const std::filesystem::path& file);

 private:
  Intrinsics intr_;
  double pixel_fraction_ = 0.05;
  std::vector<PixelRecord> records_;
  std::vector<std::size_t> record_begin_;  // per slot
  std::vector<int> frame_ids_;
  std::vector<Pose> poses_;
  std::unordered_map<int, std::size_t> slot_;
};

struct SampledRays {
  std::vector<Ray> rays;
  std::vector<std::size_t> record;  // index into db.records()
  std::vector<std::size_t> slot;    // keyframe slot of each ray
};

/// Draws n_g records uniformly from the records of `slots` (all keyframes
/// when empty): without replacement when enough records exist, with
/// replacement otherwise. Throws Errc::EmptyDatabase.
SampledRays sample_global_rays(const KeyframeDB& db, int n_g, std::mt19937_64& rng,
                               const std::vector<std::size_t>& slots = {});

/// Which rays and poses a mapping round uses.
enum class BaMode {
  Global,  // rays from every keyframe, all poses but the first optimized
  Local,   // rays and poses from the newest `local_window` keyframes
  None,    // rays from the newest frame only, no pose optimization
};

struct MappingConfig {
  int n_g = 2048;
  int ba_iters = 10;
  int k_m = 10;  // scene steps per pose step
  int first_frame_iters = 200;
  int map_every = 5;
  double pixel_fraction = 0.05;
  double lr_grid = 1e-2;
  double lr_decoder = 1e-2;
  double lr_pose = 1e-3;
  int smooth_region = 8;
  BaMode mode = BaMode::Global;
  int local_window = 10;
  bool optimize_poses = true;

  void validate() const;
};

/// Optimizer state that persists across mapping rounds.
struct MapperState {
  ParamGroup grid;
  ParamGroup decoders;
  std::vector<ParamGroup> poses;  // one per keyframe slot
  std::size_t scene_steps = 0;
  std::size_t pose_steps = 0;

  static MapperState create(const MappingConfig& cfg);
};

using MappingCallback = std::function<void(int, const LossReport&)>;

/// Joint optimization of the scene and the keyframe poses. Every iteration
/// renders rays drawn from the database, steps the scene parameters, and
/// accumulates pose gradients; after every k_m iterations one pose step is
/// taken per touched keyframe from the accumulated gradient. Slot 0 is
/// never moved. Throws Errc::EmptyDatabase.
std::vector<LossReport> global_ba(KeyframeDB& db, SceneParams& params, MapperState& state,
                                  const MappingConfig& cfg, const SamplingConfig& sampling,
                                  const LossWeights& weights, std::mt19937_64& rng,
                                  const MappingCallback& on_iter = {});

/// Scene-only optimization on rays drawn from a full frame at a fixed pose
/// (first-frame initialization and the no-database ablation).
std::vector<LossReport> map_frame(const Frame& frame, const Pose& pose, SceneParams& params,
                                  MapperState& state, int iters, int n_rays, const MappingConfig& cfg,
                                  const SamplingConfig& sampling, const LossWeights& weights,
                                  std::mt19937_64& rng, const MappingCallback& on_iter = {});

}  // namespace nslam
