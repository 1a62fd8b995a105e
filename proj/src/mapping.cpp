#include "nslam/mapping.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <utility>

#include "nslam/error.hpp"
#include "nslam/tracking.hpp"

namespace nslam {

KeyframeDB::KeyframeDB(const Intrinsics& intr, double pixel_fraction)
    : intr_(intr), pixel_fraction_(pixel_fraction) {
  if (!(pixel_fraction > 0 && pixel_fraction <= 1)) {
    throw Error(Errc::ConfigError, "pixel_fraction must lie in (0, 1]");
  }
}

void KeyframeDB::insert_keyframe(const Frame& frame, const Pose& pose, std::mt19937_64& rng) {
  if (slot_.count(frame.id)) {
    throw Error(Errc::DuplicateKeyframe, "frame " + std::to_string(frame.id) + " is already a keyframe");
  }
  const std::size_t n_pix = std::size_t(frame.intr.width) * frame.intr.height;
  const std::size_t n_take = std::max<std::size_t>(
      1, std::min<std::size_t>(n_pix, std::llround(pixel_fraction_ * double(n_pix))));
  // Partial Fisher-Yates: the first n_take entries become a uniform subset.
  std::vector<std::size_t> idx(n_pix);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_take; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n_pix - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  slot_[frame.id] = frame_ids_.size();
  frame_ids_.push_back(frame.id);
  poses_.push_back(pose);
  record_begin_.push_back(records_.size());
  for (std::size_t i = 0; i < n_take; ++i) {
    PixelRecord rec;
    rec.frame_id = frame.id;
    rec.pixel = Pixel{int(idx[i] % frame.intr.width), int(idx[i] / frame.intr.width)};
    rec.color = frame.color_at(rec.pixel.u, rec.pixel.v);
    rec.depth = frame.depth_at(rec.pixel.u, rec.pixel.v);
    records_.push_back(rec);
  }
}

std::size_t KeyframeDB::slot_of(int frame_id) const {
  const auto it = slot_.find(frame_id);
  if (it == slot_.end()) throw Error(Errc::DatasetError, "frame " + std::to_string(frame_id) + " is not a keyframe");
  return it->second;
}

std::pair<std::size_t, std::size_t> KeyframeDB::record_range(std::size_t slot) const {
  const std::size_t end = slot + 1 < record_begin_.size() ? record_begin_[slot + 1] : records_.size();
  return {record_begin_[slot], end};
}

Ray KeyframeDB::make_ray(const PixelRecord& rec) const {
  Ray ray = pixel_to_ray(intr_, poses_[slot_of(rec.frame_id)], rec.pixel.u, rec.pixel.v);
  ray.gt_color = rec.color;
  if (rec.depth) ray.gt_depth = depth_to_range(intr_, rec.pixel.u, rec.pixel.v, *rec.depth);
  return ray;
}

void KeyframeDB::dump(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + file.string());
  out.precision(17);
  out << "nslam_keyframes 1\n";
  out << intr_.fx << ' ' << intr_.fy << ' ' << intr_.cx << ' ' << intr_.cy << ' ' << intr_.width << ' '
      << intr_.height << ' ' << intr_.depth_scale << '\n';
  out << pixel_fraction_ << ' ' << frame_ids_.size() << ' ' << records_.size() << '\n';
  for (std::size_t s = 0; s < frame_ids_.size(); ++s) {
    out << frame_ids_[s] << ' ' << record_begin_[s];
    for (int k = 0; k < 6; ++k) out << ' ' << poses_[s].xi[k];
    out << '\n';
  }
  for (const PixelRecord& r : records_) {
    out << r.frame_id << ' ' << r.pixel.u << ' ' << r.pixel.v << ' ' << r.color.x() << ' ' << r.color.y()
        << ' ' << r.color.z() << ' ' << (r.depth ? *r.depth : -1.0) << '\n';
  }
}

KeyframeDB KeyframeDB::restore(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::MissingFile, "missing file: " + file.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "nslam_keyframes" || version != 1) throw Error(Errc::FormatError, "not a keyframe database: " + file.string());
  Intrinsics intr;
  in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height >> intr.depth_scale;
  double fraction = 0;
  std::size_t n_kf = 0, n_rec = 0;
  in >> fraction >> n_kf >> n_rec;
  if (!in) throw Error(Errc::FormatError, "truncated keyframe database header");
  KeyframeDB db(intr, fraction);
  for (std::size_t s = 0; s < n_kf; ++s) {
    int id = 0;
    std::size_t begin = 0;
    Pose p;
    in >> id >> begin;
    for (int k = 0; k < 6; ++k) in >> p.xi[k];
    db.slot_[id] = s;
    db.frame_ids_.push_back(id);
    db.record_begin_.push_back(begin);
    db.poses_.push_back(p);
  }
  db.records_.resize(n_rec);
  for (PixelRecord& r : db.records_) {
    double d = 0;
    in >> r.frame_id >> r.pixel.u >> r.pixel.v >> r.color.x() >> r.color.y() >> r.color.z() >> d;
    if (d >= 0) r.depth = d;
  }
  if (!in) throw Error(Errc::FormatError, "truncated keyframe database: " + file.string());
  return db;
}

SampledRays sample_global_rays(const KeyframeDB& db, int n_g, std::mt19937_64& rng,
                               const std::vector<std::size_t>& slots) {
  if (db.num_records() == 0) throw Error(Errc::EmptyDatabase, "keyframe database is empty");
  std::vector<std::size_t> pool;
  if (slots.empty()) {
    pool.resize(db.num_records());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  } else {
    for (std::size_t s : slots) {
      const auto [b, e] = db.record_range(s);
      for (std::size_t i = b; i < e; ++i) pool.push_back(i);
    }
    if (pool.empty()) throw Error(Errc::EmptyDatabase, "selected keyframes hold no records");
  }
  const std::size_t n = static_cast<std::size_t>(n_g);
  std::vector<std::size_t> chosen(n);
  if (pool.size() >= n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, pool.size() - 1);
      std::swap(pool[i], pool[d(rng)]);
      chosen[i] = pool[i];
    }
  } else {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    for (std::size_t i = 0; i < n; ++i) chosen[i] = pool[d(rng)];
  }
  SampledRays out;
  out.rays.reserve(n);
  for (std::size_t idx : chosen) {
    const PixelRecord& rec = db.records()[idx];
    out.rays.push_back(db.make_ray(rec));
    out.record.push_back(idx);
    out.slot.push_back(db.slot_of(rec.frame_id));
  }
  return out;
}

void MappingConfig::validate() const {
  if (n_g < 1 || ba_iters < 0 || k_m < 1 || first_frame_iters < 0 || map_every < 1 || local_window < 1 ||
      !(pixel_fraction > 0 && pixel_fraction <= 1) || !(lr_grid > 0) || !(lr_decoder > 0) || !(lr_pose > 0) ||
      smooth_region < 2) {
    throw Error(Errc::ConfigError, "invalid mapping configuration");
  }
}

MapperState MapperState::create(const MappingConfig& cfg) {
  MapperState s;
  s.grid = ParamGroup("grid", AdamConfig{cfg.lr_grid});
  s.decoders = ParamGroup("decoders", AdamConfig{cfg.lr_decoder});
  return s;
}

namespace {

void scene_step(SceneParams& params, const SceneGrads& grads, MapperState& state) {
  const auto pb = params.blocks();
  const auto gb = grads.blocks();
  state.grid.step(std::span(pb.data(), 1), std::span(gb.data(), 1));
  state.decoders.step(std::span(pb.data() + 1, pb.size() - 1), std::span(gb.data() + 1, gb.size() - 1));
  ++state.scene_steps;
}

}  // namespace

std::vector<LossReport> global_ba(KeyframeDB& db, SceneParams& params, MapperState& state,
                                  const MappingConfig& cfg, const SamplingConfig& sampling,
                                  const LossWeights& weights, std::mt19937_64& rng,
                                  const MappingCallback& on_iter) {
  cfg.validate();
  if (db.num_records() == 0) throw Error(Errc::EmptyDatabase, "keyframe database is empty");
  const std::size_t n_kf = db.num_keyframes();
  while (state.poses.size() < n_kf) {
    state.poses.emplace_back("pose_kf" + std::to_string(state.poses.size()), AdamConfig{cfg.lr_pose});
  }

  std::vector<std::size_t> slots;
  switch (cfg.mode) {
    case BaMode::Global: break;
    case BaMode::Local:
      for (std::size_t s = n_kf > std::size_t(cfg.local_window) ? n_kf - cfg.local_window : 0; s < n_kf; ++s)
        slots.push_back(s);
      break;
    case BaMode::None: slots.push_back(n_kf - 1); break;
  }
  const bool optimize_poses = cfg.optimize_poses && cfg.mode != BaMode::None;

  SceneGrads grads = SceneGrads::zeros_like(params);
  std::vector<Vec6> acc(n_kf, Vec6::Zero());
  std::vector<char> touched(n_kf, 0);
  std::vector<Vec6> ray_grads;
  std::vector<LossReport> trace;
  for (int it = 0; it < cfg.ba_iters; ++it) {
    const SampledRays s = sample_global_rays(db, cfg.n_g, rng, slots);
    const RenderBatch batch = render(s.rays, params, sampling, rng);
    grads.set_zero();
    const LossReport rep = total_loss(batch, params, weights, rng, cfg.smooth_region,
                                      LossGrads{&grads, optimize_poses ? &ray_grads : nullptr});
    trace.push_back(rep);
    if (on_iter) on_iter(it, rep);
    scene_step(params, grads, state);
    if (!optimize_poses) continue;
    for (std::size_t r = 0; r < s.slot.size(); ++r) {
      acc[s.slot[r]] += ray_grads[r];
      touched[s.slot[r]] = 1;
    }
    if ((it + 1) % cfg.k_m == 0) {
      for (std::size_t k = 1; k < n_kf; ++k) {
        if (!touched[k]) continue;
        db.set_pose(k, pose_step(state.poses[k], db.pose(k), acc[k]));
      }
      ++state.pose_steps;
      std::fill(acc.begin(), acc.end(), Vec6::Zero());
      std::fill(touched.begin(), touched.end(), 0);
    }
  }
  return trace;
}

std::vector<LossReport> map_frame(const Frame& frame, const Pose& pose, SceneParams& params,
                                  MapperState& state, int iters, int n_rays, const MappingConfig& cfg,
                                  const SamplingConfig& sampling, const LossWeights& weights,
                                  std::mt19937_64& rng, const MappingCallback& on_iter) {
  std::uniform_int_distribution<int> du(0, frame.intr.width - 1), dv(0, frame.intr.height - 1);
  SceneGrads grads = SceneGrads::zeros_like(params);
  std::vector<LossReport> trace;
  std::vector<Ray> rays(static_cast<std::size_t>(n_rays));
  for (int it = 0; it < iters; ++it) {
    for (Ray& r : rays) {
      const int u = du(rng), v = dv(rng);
      r = frame_ray(frame, pose, u, v);
    }
    const RenderBatch batch = render(rays, params, sampling, rng);
    grads.set_zero();
    const LossReport rep = total_loss(batch, params, weights, rng, cfg.smooth_region, LossGrads{&grads, nullptr});
    trace.push_back(rep);
    if (on_iter) on_iter(it, rep);
    scene_step(params, grads, state);
  }
  return trace;
}

}  // namespace nslam
