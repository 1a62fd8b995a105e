#include "nslam/pipeline.hpp"

#include <chrono>
#include <fstream>

#include "nslam/error.hpp"
#include "nslam/meshing.hpp"
#include "nslam/tracking.hpp"

namespace nslam {

namespace fs = std::filesystem;

RunConfig synthetic_run_config(const SyntheticScene& scene) {
  RunConfig c;
  c.dataset_path = ".";
  c.output_dir = "output";
  const SceneBounds room = scene.room_bounds();
  c.bounds = SceneBounds{room.min - Vec3::Constant(0.1), room.max + Vec3::Constant(0.1)};
  c.tracking.n_t = 256;
  c.mapping.n_g = 512;
  return c;
}

void write_synthetic_benchmark(const SyntheticScene& scene, const SynthConfig& synth, const fs::path& out_dir) {
  generate_synthetic(scene, synth, out_dir);
  save_run_config(synthetic_run_config(scene), out_dir / "config.yaml");
}

Dataset open_dataset(const RunConfig& cfg) {
  if (!fs::is_directory(cfg.dataset_path)) {
    throw Error(Errc::DatasetError, "dataset not found: " + cfg.dataset_path.string());
  }
  return cfg.format == DatasetFormat::Tum ? load_tum(cfg.dataset_path, cfg.tum_intrinsics)
                                          : load_synthetic(cfg.dataset_path);
}

namespace {

class MetricsLog {
 public:
  MetricsLog(const fs::path& file, bool enabled) {
    if (enabled) {
      out_.open(file);
      if (!out_) throw Error(Errc::MissingFile, "cannot write " + file.string());
    }
  }
  void write(const char* phase, int frame, int iter, const LossReport& rep) {
    if (!out_.is_open()) return;
    const std::string body = rep.to_json_line();
    out_ << "{\"phase\":\"" << phase << "\",\"frame\":" << frame << ",\"iter\":" << iter << ','
         << body.substr(1) << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace

RunResult run_slam(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Dataset ds = open_dataset(cfg);
  std::vector<std::size_t> indices;
  const std::size_t end = cfg.frame_end < 0 ? ds.size() : std::min<std::size_t>(cfg.frame_end, ds.size());
  for (std::size_t i = cfg.frame_start; i < end; i += cfg.frame_stride) indices.push_back(i);
  if (indices.empty()) throw Error(Errc::DatasetError, "the configured frame range selects no frames");

  fs::create_directories(cfg.output_dir);
  MetricsLog log(cfg.output_dir / "metrics.jsonl", cfg.metrics_log);

  std::mt19937_64 rng(cfg.seed);
  RunResult res;
  res.params = SceneParams::create(cfg.field_config(), cfg.bounds, rng);
  res.db = KeyframeDB(ds.intr, cfg.mapping.pixel_fraction);
  MapperState state = MapperState::create(cfg.mapping);
  SceneParams& params = res.params;
  KeyframeDB& db = res.db;

  std::vector<Pose> poses;
  std::vector<int> keyframe_slot;  // per processed frame, -1 if not a keyframe
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const Frame frame = ds.load_frame(indices[t]);
    const int fid = frame.id;
    if (t == 0) {
      const Pose pose = Pose::identity();
      map_frame(frame, pose, params, state, cfg.mapping.first_frame_iters, cfg.mapping.n_g, cfg.mapping,
                cfg.sampling, cfg.weights, rng,
                [&](int it, const LossReport& r) { log.write("first_frame", fid, it, r); });
      db.insert_keyframe(frame, pose, rng);
      poses.push_back(pose);
      keyframe_slot.push_back(0);
      if (progress) *progress << "frame " << fid << ": initialized\n";
      continue;
    }
    const Pose init = motion_model_init(poses[t - 1], t >= 2 ? std::optional<Pose>(poses[t - 2]) : std::nullopt);
    const TrackingResult tr = track_frame(frame, params, init, cfg.tracking, cfg.sampling, cfg.weights, rng,
                                          [&](int it, const LossReport& r) { log.write("track", fid, it, r); });
    if (tr.diverged) ++res.diverged_frames;
    poses.push_back(tr.pose);
    keyframe_slot.push_back(-1);

    if (t % std::size_t(cfg.mapping.map_every) == 0) {
      db.insert_keyframe(frame, tr.pose, rng);
      keyframe_slot.back() = int(db.num_keyframes() - 1);
      auto cb = [&](int it, const LossReport& r) { log.write("map", fid, it, r); };
      if (cfg.mapping.mode == BaMode::None) {
        map_frame(frame, tr.pose, params, state, cfg.mapping.ba_iters, cfg.mapping.n_g, cfg.mapping, cfg.sampling,
                  cfg.weights, rng, cb);
      } else {
        global_ba(db, params, state, cfg.mapping, cfg.sampling, cfg.weights, rng, cb);
      }
      // Keyframe poses may have moved during the round.
      for (std::size_t k = 0; k < poses.size(); ++k) {
        if (keyframe_slot[k] >= 0) poses[k] = db.pose(keyframe_slot[k]);
      }
    }
    if (progress) {
      *progress << "frame " << fid << ": loss " << tr.trace.back().total << (tr.diverged ? " (diverged, reverted)" : "")
                << '\n';
    }
  }

  for (std::size_t t = 0; t < indices.size(); ++t) {
    res.trajectory.push_back({ds.frames[indices[t]].timestamp, poses[t]});
    res.frame_indices.push_back(indices[t]);
  }
  res.trajectory_file = cfg.output_dir / "trajectory.txt";
  write_trajectory(res.trajectory_file, res.trajectory);
  if (cfg.save_checkpoint) {
    res.checkpoint_file = cfg.output_dir / "checkpoint.bin";
    save_checkpoint(params, res.checkpoint_file);
  }
  if (cfg.save_keyframes) db.dump(cfg.output_dir / "keyframes.txt");
  if (cfg.save_mesh) {
    try {
      const TriangleMesh mesh = extract_mesh(params, params.bounds, cfg.mesh_voxel);
      res.mesh_file = cfg.output_dir / "mesh.ply";
      write_ply(res.mesh_file, mesh);
    } catch (const Error& e) {
      if (e.code() != Errc::EmptySurface) throw;
      if (progress) *progress << "no surface to mesh\n";
    }
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace nslam
