#include "support/fixtures.hpp"

#include "nslam/mapping.hpp"
#include "nslam/pipeline.hpp"
#include "nslam/synthetic.hpp"

namespace fs = std::filesystem;

namespace fixture {

fs::path fixture_dir() {
  const fs::path dir = fs::path(NSLAM_FIXTURE_DIR);
  fs::create_directories(dir);
  return dir;
}

const fs::path& room_dataset() {
  static const fs::path dir = [] {
    const fs::path d = fixture_dir() / "room";
    if (!fs::exists(d / "config.yaml")) {
      const fs::path tmp = fixture_dir() / "room.partial";
      fs::remove_all(tmp);
      write_synthetic_benchmark(SyntheticScene::desk_room(), SynthConfig{}, tmp);
      fs::remove_all(d);
      fs::rename(tmp, d);
    }
    return d;
  }();
  return dir;
}

RunConfig room_config() { return load_run_config(room_dataset() / "config.yaml"); }

SceneParams room_field_gt() {
  const fs::path ckpt = fixture_dir() / "room_field_gt.bin";
  if (fs::exists(ckpt)) return load_checkpoint(ckpt);

  RunConfig cfg = room_config();
  cfg.mapping.optimize_poses = false;
  const Dataset ds = open_dataset(cfg);
  std::mt19937_64 rng(cfg.seed);
  SceneParams params = SceneParams::create(cfg.field_config(), cfg.bounds, rng);
  KeyframeDB db(ds.intr, cfg.mapping.pixel_fraction);
  MapperState state = MapperState::create(cfg.mapping);
  for (std::size_t t = 0; t < ds.size(); ++t) {
    const Frame frame = ds.load_frame(t);
    if (t == 0) {
      map_frame(frame, ds.gt_poses[0], params, state, cfg.mapping.first_frame_iters, cfg.mapping.n_g,
                cfg.mapping, cfg.sampling, cfg.weights, rng);
      db.insert_keyframe(frame, ds.gt_poses[0], rng);
    } else if (t % std::size_t(cfg.mapping.map_every) == 0) {
      db.insert_keyframe(frame, ds.gt_poses[t], rng);
      global_ba(db, params, state, cfg.mapping, cfg.sampling, cfg.weights, rng);
    }
  }
  const fs::path tmp = fixture_dir() / "room_field_gt.partial";
  save_checkpoint(params, tmp);
  fs::rename(tmp, ckpt);
  return params;
}

}  // namespace fixture
