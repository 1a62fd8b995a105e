#include "nslam/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>

#include "nslam/error.hpp"

namespace nslam {

namespace fs = std::filesystem;

const char* to_string(BaMode mode) {
  switch (mode) {
    case BaMode::Global: return "global";
    case BaMode::Local: return "local";
    case BaMode::None: return "none";
  }
  return "global";
}

BaMode ba_mode_from_string(const std::string& s) {
  if (s == "global") return BaMode::Global;
  if (s == "local") return BaMode::Local;
  if (s == "none") return BaMode::None;
  throw Error(Errc::ConfigError, "unknown mapping mode '" + s + "' (expected global, local or none)");
}

FieldConfig RunConfig::field_config() const {
  FieldConfig f;
  f.grid = HashGridConfig::for_bounds(bounds, finest_voxel, grid_levels, grid_r_min, grid_table_log2, grid_feature_dim);
  f.oneblob.bins = oneblob_bins;
  f.hidden_width = hidden_width;
  f.hidden_layers = hidden_layers;
  f.h_dim = h_dim;
  f.sdf_bias_init = sampling.tr;
  return f;
}

void RunConfig::validate() const {
  if (dataset_path.empty()) throw Error(Errc::ConfigError, "dataset.path is required");
  if (!bounds.valid()) throw Error(Errc::ConfigError, "bounds.max must exceed bounds.min on every axis");
  if (!(finest_voxel > 0) || !(mesh_voxel > 0)) throw Error(Errc::ConfigError, "voxel sizes must be positive");
  if (frame_start < 0 || frame_stride < 1 || (frame_end >= 0 && frame_end <= frame_start)) {
    throw Error(Errc::ConfigError, "invalid frame range");
  }
  if (hidden_width < 1 || hidden_layers < 0 || h_dim < 1 || oneblob_bins < 2) {
    throw Error(Errc::ConfigError, "invalid decoder configuration");
  }
  field_config().grid.validate();
  sampling.validate();
  weights.validate();
  tracking.validate();
  mapping.validate();
  if (format == DatasetFormat::Tum && !tum_intrinsics.valid()) {
    throw Error(Errc::ConfigError, "TUM datasets need dataset.intrinsics");
  }
}

namespace {

template <typename T>
void get(const YAML::Node& node, const char* key, T& out) {
  if (!node || !node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    throw Error(Errc::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

Vec3 get_vec3(const YAML::Node& node, const char* key, const Vec3& fallback) {
  if (!node || !node[key]) return fallback;
  const YAML::Node v = node[key];
  if (!v.IsSequence() || v.size() != 3) throw Error(Errc::ConfigError, std::string(key) + " must be a 3-element list");
  return Vec3(v[0].as<double>(), v[1].as<double>(), v[2].as<double>());
}

}  // namespace

RunConfig load_run_config(const fs::path& file) {
  if (!fs::exists(file)) throw Error(Errc::MissingFile, "config file not found: " + file.string());
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::Exception& e) {
    throw Error(Errc::ConfigError, "cannot parse " + file.string() + ": " + e.what());
  }
  const fs::path base = fs::absolute(file).parent_path();
  RunConfig c;

  const YAML::Node ds = root["dataset"];
  std::string path, format = "synthetic";
  get(ds, "path", path);
  get(ds, "format", format);
  if (!path.empty()) c.dataset_path = fs::path(path).is_absolute() ? fs::path(path) : base / path;
  if (format == "synthetic") {
    c.format = DatasetFormat::Synthetic;
  } else if (format == "tum") {
    c.format = DatasetFormat::Tum;
  } else {
    throw Error(Errc::ConfigError, "dataset.format must be 'synthetic' or 'tum'");
  }
  if (ds && ds["intrinsics"]) {
    const YAML::Node k = ds["intrinsics"];
    get(k, "fx", c.tum_intrinsics.fx);
    get(k, "fy", c.tum_intrinsics.fy);
    get(k, "cx", c.tum_intrinsics.cx);
    get(k, "cy", c.tum_intrinsics.cy);
    get(k, "width", c.tum_intrinsics.width);
    get(k, "height", c.tum_intrinsics.height);
    get(k, "depth_scale", c.tum_intrinsics.depth_scale);
  }
  get(ds, "frame_start", c.frame_start);
  get(ds, "frame_end", c.frame_end);
  get(ds, "frame_stride", c.frame_stride);

  std::string out = c.output_dir.string();
  get(root, "output_dir", out);
  c.output_dir = fs::path(out).is_absolute() ? fs::path(out) : base / out;
  get(root, "seed", c.seed);

  c.bounds.min = get_vec3(root["bounds"], "min", c.bounds.min);
  c.bounds.max = get_vec3(root["bounds"], "max", c.bounds.max);

  const YAML::Node g = root["grid"];
  get(g, "finest_voxel", c.finest_voxel);
  get(g, "levels", c.grid_levels);
  get(g, "r_min", c.grid_r_min);
  get(g, "table_size_log2", c.grid_table_log2);
  get(g, "feature_dim", c.grid_feature_dim);
  get(root["oneblob"], "bins", c.oneblob_bins);
  const YAML::Node d = root["decoder"];
  get(d, "hidden_width", c.hidden_width);
  get(d, "hidden_layers", c.hidden_layers);
  get(d, "h_dim", c.h_dim);

  const YAML::Node s = root["sampling"];
  get(s, "m_c", c.sampling.m_c);
  get(s, "m_f", c.sampling.m_f);
  get(s, "near", c.sampling.near);
  get(s, "far", c.sampling.far);
  get(s, "tr", c.sampling.tr);
  c.sampling.d_s = 0.25 * c.sampling.tr;
  get(s, "d_s", c.sampling.d_s);

  const YAML::Node l = root["loss"];
  get(l, "rgb", c.weights.rgb);
  get(l, "depth", c.weights.depth);
  get(l, "sdf", c.weights.sdf);
  get(l, "fs", c.weights.fs);
  get(l, "smooth", c.weights.smooth);
  get(l, "smooth_region", c.mapping.smooth_region);

  const YAML::Node t = root["tracking"];
  get(t, "n_t", c.tracking.n_t);
  get(t, "iters", c.tracking.iters);
  get(t, "lr_pose", c.tracking.lr_pose);
  get(t, "divergence_factor", c.tracking.divergence_factor);

  const YAML::Node m = root["mapping"];
  get(m, "n_g", c.mapping.n_g);
  get(m, "ba_iters", c.mapping.ba_iters);
  c.mapping.k_m = c.mapping.ba_iters;
  get(m, "k_m", c.mapping.k_m);
  get(m, "first_frame_iters", c.mapping.first_frame_iters);
  get(m, "map_every", c.mapping.map_every);
  get(m, "pixel_fraction", c.mapping.pixel_fraction);
  get(m, "lr_grid", c.mapping.lr_grid);
  get(m, "lr_decoder", c.mapping.lr_decoder);
  get(m, "lr_pose", c.mapping.lr_pose);
  std::string mode = to_string(c.mapping.mode);
  get(m, "mode", mode);
  c.mapping.mode = ba_mode_from_string(mode);
  get(m, "local_window", c.mapping.local_window);
  get(m, "optimize_poses", c.mapping.optimize_poses);

  const YAML::Node o = root["output"];
  get(o, "mesh_voxel", c.mesh_voxel);
  get(o, "save_mesh", c.save_mesh);
  get(o, "save_checkpoint", c.save_checkpoint);
  get(o, "save_keyframes", c.save_keyframes);
  get(o, "metrics_log", c.metrics_log);

  c.validate();
  return c;
}

void save_run_config(const RunConfig& c, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + file.string());
  out.precision(10);
  auto vec = [](const Vec3& v) {
    std::ostringstream os;
    os.precision(10);
    os << '[' << v.x() << ", " << v.y() << ", " << v.z() << ']';
    return os.str();
  };
  const Intrinsics& k = c.tum_intrinsics;
  out << "# Run configuration. Relative paths are resolved against this file's directory.\n"
      << "dataset:\n"
      << "  path: \"" << c.dataset_path.generic_string() << "\"\n"
      << "  format: " << (c.format == DatasetFormat::Tum ? "tum" : "synthetic") << "  # synthetic | tum\n"
      << "  frame_start: " << c.frame_start << "\n"
      << "  frame_end: " << c.frame_end << "  # exclusive, -1 = all\n"
      << "  frame_stride: " << c.frame_stride << "\n";
  if (c.format == DatasetFormat::Tum) {
    out << "  intrinsics: {fx: " << k.fx << ", fy: " << k.fy << ", cx: " << k.cx << ", cy: " << k.cy
        << ", width: " << k.width << ", height: " << k.height << ", depth_scale: " << k.depth_scale << "}\n";
  }
  out << "output_dir: \"" << c.output_dir.generic_string() << "\"\n"
      << "seed: " << c.seed << "  # single RNG stream for every stochastic choice\n"
      << "bounds:  # axis-aligned scene box, meters\n"
      << "  min: " << vec(c.bounds.min) << "\n"
      << "  max: " << vec(c.bounds.max) << "\n"
      << "grid:\n"
      << "  levels: " << c.grid_levels << "  # default 16\n"
      << "  r_min: " << c.grid_r_min << "  # coarsest resolution, default 16\n"
      << "  finest_voxel: " << c.finest_voxel << "  # meters; r_max = ceil(max extent / finest_voxel), default 0.02\n"
      << "  table_size_log2: " << c.grid_table_log2 << "  # default 13\n"
      << "  feature_dim: " << c.grid_feature_dim << "  # default 2\n"
      << "oneblob:\n"
      << "  bins: " << c.oneblob_bins << "  # default 16\n"
      << "decoder:\n"
      << "  hidden_width: " << c.hidden_width << "  # default 32\n"
      << "  hidden_layers: " << c.hidden_layers << "  # default 1 (input -> hidden -> output)\n"
      << "  h_dim: " << c.h_dim << "  # geometric feature size, default 15\n"
      << "sampling:\n"
      << "  m_c: " << c.sampling.m_c << "  # stratified samples per ray, default 32\n"
      << "  m_f: " << c.sampling.m_f << "  # depth-guided samples per ray, default 11\n"
      << "  near: " << c.sampling.near << "  # default 0.1\n"
      << "  far: " << c.sampling.far << "  # default 6.0\n"
      << "  tr: " << c.sampling.tr << "  # truncation, meters, default 0.1\n"
      << "  d_s: " << c.sampling.d_s << "  # surface window half-width, default 0.25 * tr\n"
      << "loss:\n"
      << "  rgb: " << c.weights.rgb << "  # default 5\n"
      << "  depth: " << c.weights.depth << "  # default 0.1\n"
      << "  sdf: " << c.weights.sdf << "  # default 1000\n"
      << "  fs: " << c.weights.fs << "  # default 10\n"
      << "  smooth: " << c.weights.smooth << "  # default 1e-6\n"
      << "  smooth_region: " << c.mapping.smooth_region << "  # coarse vertices per side, default 8\n"
      << "tracking:\n"
      << "  n_t: " << c.tracking.n_t << "  # pixels per iteration, default 1024\n"
      << "  iters: " << c.tracking.iters << "  # default 10\n"
      << "  lr_pose: " << c.tracking.lr_pose << "  # default 1e-3\n"
      << "  divergence_factor: " << c.tracking.divergence_factor << "  # revert when the loss grows by this factor, default 2\n"
      << "mapping:\n"
      << "  n_g: " << c.mapping.n_g << "  # rays per BA iteration, default 2048\n"
      << "  ba_iters: " << c.mapping.ba_iters << "  # default 10\n"
      << "  k_m: " << c.mapping.k_m << "  # scene steps per pose step, default ba_iters\n"
      << "  first_frame_iters: " << c.mapping.first_frame_iters << "  # default 200\n"
      << "  map_every: " << c.mapping.map_every << "  # keyframe + BA every n frames, default 5\n"
      << "  pixel_fraction: " << c.mapping.pixel_fraction << "  # pixels kept per keyframe, default 0.05\n"
      << "  lr_grid: " << c.mapping.lr_grid << "  # default 1e-2\n"
      << "  lr_decoder: " << c.mapping.lr_decoder << "  # default 1e-2\n"
      << "  lr_pose: " << c.mapping.lr_pose << "  # default 1e-3\n"
      << "  mode: " << to_string(c.mapping.mode) << "  # global | local | none, default global\n"
      << "  local_window: " << c.mapping.local_window << "  # keyframes used by local mode, default 10\n"
      << "  optimize_poses: " << (c.mapping.optimize_poses ? "true" : "false") << "  # default true\n"
      << "output:\n"
      << "  mesh_voxel: " << c.mesh_voxel << "  # marching-cubes voxel, meters, default 0.02\n"
      << "  save_mesh: " << (c.save_mesh ? "true" : "false") << "\n"
      << "  save_checkpoint: " << (c.save_checkpoint ? "true" : "false") << "\n"
      << "  save_keyframes: " << (c.save_keyframes ? "true" : "false") << "\n"
      << "  metrics_log: " << (c.metrics_log ? "true" : "false") << "\n";
}

}  // namespace nslam
