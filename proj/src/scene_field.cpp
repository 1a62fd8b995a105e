#include "nslam/scene_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nslam/error.hpp"

namespace nslam {

MlpParams MlpParams::create(int in_dim, int hidden_width, int hidden_layers, int out_dim,
                            std::mt19937_64& rng) {
  MlpParams mlp;
  int prev = in_dim;
  auto add = [&](int out) {
    const double bound = std::sqrt(1.0 / prev);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer;
    layer.weight.resize(out, prev);
    layer.bias.resize(out);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = dist(rng);
    mlp.layers.push_back(std::move(layer));
    prev = out;
  };
  for (int i = 0; i < hidden_layers; ++i) add(hidden_width);
  add(out_dim);
  return mlp;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const Layer& l : layers) {
    z.layers.push_back({RowMat::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

SceneParams SceneParams::create(const FieldConfig& cfg, const SceneBounds& bounds,
                                std::mt19937_64& rng) {
  if (!bounds.valid()) throw Error(Errc::ConfigError, "scene bounds must satisfy max > min");
  SceneParams p;
  p.bounds = bounds;
  p.oneblob = cfg.oneblob;
  p.h_dim = cfg.h_dim;
  p.grid = HashGridParams(cfg.grid);
  p.grid.init_uniform(rng, cfg.grid_init_scale);
  const int enc_dim = cfg.oneblob.output_dim();
  p.geo = MlpParams::create(enc_dim + cfg.grid.output_dim(), cfg.hidden_width, cfg.hidden_layers,
                            1 + cfg.h_dim, rng);
  p.color = MlpParams::create(enc_dim + cfg.h_dim, cfg.hidden_width, cfg.hidden_layers, 3, rng);
  p.geo.layers.back().bias[0] = cfg.sdf_bias_init;
  p.validate();
  return p;
}

void SceneParams::validate() const {
  const int enc = oneblob.output_dim();
  if (geo.layers.empty() || color.layers.empty() || oneblob.bins < 2 ||
      geo.in_dim() != enc + grid.config.output_dim() || geo.out_dim() != 1 + h_dim ||
      color.in_dim() != enc + h_dim || color.out_dim() != 3) {
    throw Error(Errc::ConfigError, "scene parameter shapes are inconsistent");
  }
  for (const MlpParams* m : {&geo, &color}) {
    for (std::size_t i = 1; i < m->layers.size(); ++i) {
      if (m->layers[i].in_dim() != m->layers[i - 1].out_dim()) {
        throw Error(Errc::ConfigError, "decoder layer shapes do not chain");
      }
    }
  }
}

namespace {

template <typename Mlp, typename Span>
void append_mlp_blocks(Mlp& mlp, std::vector<Span>& out) {
  for (auto& l : mlp.layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

}  // namespace

std::vector<std::span<double>> SceneParams::blocks() {
  std::vector<std::span<double>> b{std::span<double>(grid.features)};
  append_mlp_blocks(geo, b);
  append_mlp_blocks(color, b);
  return b;
}

std::vector<std::span<const double>> SceneParams::blocks() const {
  std::vector<std::span<const double>> b{std::span<const double>(grid.features)};
  append_mlp_blocks(geo, b);
  append_mlp_blocks(color, b);
  return b;
}

std::size_t SceneParams::num_params() const {
  std::size_t n = 0;
  for (auto b : blocks()) n += b.size();
  return n;
}

std::uint64_t SceneParams::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (auto b : blocks()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(b.data());
    for (std::size_t i = 0; i < b.size_bytes(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

SceneGrads SceneGrads::zeros_like(const SceneParams& params) {
  SceneGrads g;
  g.grid.assign(params.grid.features.size(), 0.0);
  g.geo = params.geo.zeros_like();
  g.color = params.color.zeros_like();
  return g;
}

void SceneGrads::set_zero() {
  for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
}

SceneGrads& SceneGrads::operator+=(const SceneGrads& other) {
  auto mine = blocks();
  auto theirs = other.blocks();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    for (std::size_t j = 0; j < mine[i].size(); ++j) mine[i][j] += theirs[i][j];
  }
  return *this;
}

std::vector<std::span<double>> SceneGrads::blocks() {
  std::vector<std::span<double>> b{std::span<double>(grid)};
  append_mlp_blocks(geo, b);
  append_mlp_blocks(color, b);
  return b;
}

std::vector<std::span<const double>> SceneGrads::blocks() const {
  std::vector<std::span<const double>> b{std::span<const double>(grid)};
  append_mlp_blocks(geo, b);
  append_mlp_blocks(color, b);
  return b;
}

namespace {

// Row kernels. Batch and single-point evaluation share them, which keeps the
// results bit-identical regardless of batch composition.

// y = W x + b with W given transposed (in x out, row-major).
inline void affine_row(const double* wt, const double* b, const double* x, int in, int out,
                       double* y) {
  std::copy(b, b + out, y);
  for (int k = 0; k < in; ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    const double* w = wt + static_cast<std::size_t>(k) * out;
    for (int j = 0; j < out; ++j) y[j] += xk * w[j];
  }
}

inline void relu_row(double* y, int n) {
  for (int j = 0; j < n; ++j) y[j] = y[j] > 0.0 ? y[j] : 0.0;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<RowMat> transposed_weights(const MlpParams& mlp) {
  std::vector<RowMat> wt;
  wt.reserve(mlp.layers.size());
  for (const Layer& l : mlp.layers) wt.emplace_back(l.weight.transpose());
  return wt;
}

// Runs an MLP over rows of acts[0], filling acts[1..]. Hidden outputs are ReLU'd.
void mlp_forward_rows(const MlpParams& mlp, const std::vector<RowMat>& wt, std::vector<RowMat>& acts) {
  const Eigen::Index n = acts[0].rows();
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    const Layer& l = mlp.layers[li];
    RowMat& out = acts[li + 1];
    out.resize(n, l.out_dim());
    const bool hidden = li + 1 < mlp.layers.size();
    for (Eigen::Index r = 0; r < n; ++r) {
      affine_row(wt[li].data(), l.bias.data(), acts[li].row(r).data(), l.in_dim(), l.out_dim(),
                 out.row(r).data());
      if (hidden) relu_row(out.row(r).data(), l.out_dim());
    }
  }
}

// Backward through an MLP. grad_out holds d/d(last layer output) and is
// consumed; returns d/d(acts[0]).
RowMat mlp_backward_rows(const MlpParams& mlp, const std::vector<RowMat>& acts, RowMat grad_out,
                         MlpParams* grads) {
  const Eigen::Index n = grad_out.rows();
  RowMat g = std::move(grad_out);
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const Layer& l = mlp.layers[li];
    const int in = l.in_dim(), out = l.out_dim();
    const RowMat& a_in = acts[li];
    RowMat g_in = RowMat::Zero(n, in);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double* gy = g.row(r).data();
      const double* x = a_in.row(r).data();
      double* gx = g_in.row(r).data();
      for (int j = 0; j < out; ++j) {
        const double gj = gy[j];
        if (gj == 0.0) continue;
        const double* w = l.weight.row(j).data();
        for (int k = 0; k < in; ++k) gx[k] += gj * w[k];
        if (grads) {
          double* gw = grads->layers[li].weight.row(j).data();
          for (int k = 0; k < in; ++k) gw[k] += gj * x[k];
          grads->layers[li].bias[j] += gj;
        }
      }
      if (li > 0) {
        for (int k = 0; k < in; ++k)
          if (x[k] <= 0.0) gx[k] = 0.0;
      }
    }
    g = std::move(g_in);
  }
  return g;
}

}  // namespace

FieldBatch field_forward(const SceneParams& params, std::span<const Vec3> xs, FieldTape* tape) {
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  const int bins = params.oneblob.bins;
  const int ob = params.oneblob.output_dim();
  const int gd = params.grid.config.output_dim();
  const int hd = params.h_dim;

  FieldTape local;
  FieldTape& t = tape ? *tape : local;
  t.n = xs.size();
  t.u.resize(xs.size());
  t.geo_acts.assign(params.geo.layers.size() + 1, RowMat());
  t.color_acts.assign(params.color.layers.size() + 1, RowMat());

  RowMat& enc = t.geo_acts[0];
  enc.resize(n, ob + gd);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!params.bounds.contains(xs[i])) throw Error(Errc::OutOfBounds, "field query outside scene bounds");
    const Vec3 u = params.bounds.normalize(xs[i]);
    t.u[i] = u;
    double* row = enc.row(i).data();
    one_blob_encode_into(u, bins, row);
    grid_interpolate_normalized(params.grid, u, row + ob);
  }
  mlp_forward_rows(params.geo, transposed_weights(params.geo), t.geo_acts);
  const RowMat& geo_out = t.geo_acts.back();

  RowMat& cin = t.color_acts[0];
  cin.resize(n, ob + hd);
  cin.leftCols(ob) = enc.leftCols(ob);
  cin.rightCols(hd) = geo_out.rightCols(hd);
  mlp_forward_rows(params.color, transposed_weights(params.color), t.color_acts);

  FieldBatch out;
  out.sdf = geo_out.col(0);
  out.h = geo_out.rightCols(hd);
  out.color.resize(n, 3);
  const RowMat& logits = t.color_acts.back();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.color(i, c) = sigmoid(logits(i, c));
  t.color = out.color;
  return out;
}

FieldOutput field_forward(const SceneParams& params, const Vec3& x) {
  const FieldBatch b = field_forward(params, std::span<const Vec3>(&x, 1));
  FieldOutput o;
  o.sdf = b.sdf[0];
  o.color = b.color.row(0).transpose();
  o.h = b.h.row(0).transpose();
  return o;
}

void field_sdf(const SceneParams& params, std::span<const Vec3> xs, std::span<double> out) {
  const int bins = params.oneblob.bins;
  const int ob = params.oneblob.output_dim();
  const int gd = params.grid.config.output_dim();
  const auto wt = transposed_weights(params.geo);
  const std::size_t max_width = [&] {
    std::size_t w = ob + gd;
    for (const Layer& l : params.geo.layers) w = std::max<std::size_t>(w, l.out_dim());
    return w;
  }();
  std::vector<double> a(max_width), b(max_width);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!params.bounds.contains(xs[i])) throw Error(Errc::OutOfBounds, "field query outside scene bounds");
    const Vec3 u = params.bounds.normalize(xs[i]);
    one_blob_encode_into(u, bins, a.data());
    grid_interpolate_normalized(params.grid, u, a.data() + ob);
    for (std::size_t li = 0; li < params.geo.layers.size(); ++li) {
      const Layer& l = params.geo.layers[li];
      affine_row(wt[li].data(), l.bias.data(), a.data(), l.in_dim(), l.out_dim(), b.data());
      if (li + 1 < params.geo.layers.size()) relu_row(b.data(), l.out_dim());
      std::swap(a, b);
    }
    out[i] = a[0];
  }
}

void field_backward(const SceneParams& params, const FieldTape& tape, std::span<const double> grad_sdf,
                    const RowMat& grad_color, const BackwardRequest& request) {
  const Eigen::Index n = static_cast<Eigen::Index>(tape.n);
  if (grad_sdf.size() != tape.n || grad_color.rows() != n || grad_color.cols() != 3 ||
      tape.geo_acts.size() != params.geo.layers.size() + 1 ||
      tape.color_acts.size() != params.color.layers.size() + 1) {
    throw Error(Errc::TapeMismatch, "gradient shapes do not match the recorded forward pass");
  }
  const int bins = params.oneblob.bins;
  const int ob = params.oneblob.output_dim();
  const int hd = params.h_dim;

  RowMat g_logits(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const double s = tape.color(i, c);
      g_logits(i, c) = grad_color(i, c) * s * (1.0 - s);
    }
  SceneGrads* pg = request.param_grads;
  const RowMat g_cin =
      mlp_backward_rows(params.color, tape.color_acts, std::move(g_logits), pg ? &pg->color : nullptr);

  RowMat g_geo_out(n, 1 + hd);
  for (Eigen::Index i = 0; i < n; ++i) {
    g_geo_out(i, 0) = grad_sdf[i];
    for (int j = 0; j < hd; ++j) g_geo_out(i, 1 + j) = g_cin(i, ob + j);
  }
  const RowMat g_enc =
      mlp_backward_rows(params.geo, tape.geo_acts, std::move(g_geo_out), pg ? &pg->geo : nullptr);

  if (request.x_grads) request.x_grads->assign(tape.n, Vec3::Zero());
  std::vector<double> g_ob(ob);
  const Vec3 inv_extent = params.bounds.extent().cwiseInverse();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 gu_grid = grid_backward_normalized(params.grid, tape.u[i], g_enc.row(i).data() + ob,
                                                  pg ? pg->grid.data() : nullptr);
    if (request.x_grads) {
      for (int k = 0; k < ob; ++k) g_ob[k] = g_enc(i, k) + g_cin(i, k);
      const Vec3 gu = gu_grid + one_blob_grad_x(tape.u[i], bins, g_ob.data());
      (*request.x_grads)[i] = gu.cwiseProduct(inv_extent);
    }
  }
}

std::uint64_t field_signature(const SceneParams& params, const FieldTape& tape) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  for (const auto* acts : {&tape.geo_acts, &tape.color_acts}) {
    for (std::size_t li = 1; li + 1 < acts->size(); ++li) {
      const RowMat& a = (*acts)[li];
      for (Eigen::Index i = 0; i < a.size(); ++i) mix(a.data()[i] > 0.0 ? 1 : 2);
    }
  }
  for (const Vec3& u : tape.u) {
    for (int l = 0; l < params.grid.config.levels; ++l) {
      const int res = params.grid.resolutions[l];
      for (int a = 0; a < 3; ++a) {
        mix(static_cast<std::uint64_t>(std::clamp(static_cast<int>(std::floor(u[a] * res)), 0, res - 1)));
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

constexpr const char* kCheckpointMagic = "nslam_checkpoint";
constexpr int kCheckpointVersion = 1;

void write_mlp_header(std::ostream& os, const char* name, const MlpParams& mlp) {
  os << name << ' ' << mlp.layers.size();
  for (const Layer& l : mlp.layers) os << ' ' << l.in_dim() << ' ' << l.out_dim();
  os << '\n';
}

MlpParams read_mlp_header(std::istream& is, const std::string& expected) {
  std::string key;
  std::size_t count = 0;
  is >> key >> count;
  if (key != expected || count == 0 || count > 64) throw Error(Errc::FormatError, "bad " + expected + " header");
  MlpParams mlp;
  for (std::size_t i = 0; i < count; ++i) {
    int in = 0, out = 0;
    is >> in >> out;
    if (in <= 0 || out <= 0) throw Error(Errc::FormatError, "bad layer shape");
    mlp.layers.push_back({RowMat::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return mlp;
}

}  // namespace

void save_checkpoint(const SceneParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::MissingFile, "cannot write " + path.string());
  os.precision(17);
  const auto& g = params.grid.config;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "bounds_min " << params.bounds.min.transpose() << '\n';
  os << "bounds_max " << params.bounds.max.transpose() << '\n';
  os << "grid " << g.levels << ' ' << g.r_min << ' ' << g.r_max << ' ' << g.table_size_log2 << ' '
     << g.feature_dim << '\n';
  os << "oneblob_bins " << params.oneblob.bins << '\n';
  os << "h_dim " << params.h_dim << '\n';
  write_mlp_header(os, "geo_layers", params.geo);
  write_mlp_header(os, "color_layers", params.color);
  os << "num_params " << params.num_params() << '\n';
  os << "end_header\n";
  for (auto b : params.blocks()) {
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size_bytes()));
  }
  if (!os) throw Error(Errc::FormatError, "failed writing " + path.string());
}

SceneParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::MissingFile, path.string());
  std::string key;
  int version = 0;
  is >> key >> version;
  if (key != kCheckpointMagic || version != kCheckpointVersion) {
    throw Error(Errc::FormatError, "not a checkpoint (or unsupported version): " + path.string());
  }
  SceneParams p;
  auto expect = [&](const char* k) {
    is >> key;
    if (key != k) throw Error(Errc::FormatError, std::string("expected ") + k + ", got " + key);
  };
  expect("bounds_min");
  is >> p.bounds.min.x() >> p.bounds.min.y() >> p.bounds.min.z();
  expect("bounds_max");
  is >> p.bounds.max.x() >> p.bounds.max.y() >> p.bounds.max.z();
  HashGridConfig gc;
  expect("grid");
  is >> gc.levels >> gc.r_min >> gc.r_max >> gc.table_size_log2 >> gc.feature_dim;
  expect("oneblob_bins");
  is >> p.oneblob.bins;
  expect("h_dim");
  is >> p.h_dim;
  if (!is) throw Error(Errc::FormatError, "truncated checkpoint header");
  p.grid = HashGridParams(gc);
  p.geo = read_mlp_header(is, "geo_layers");
  p.color = read_mlp_header(is, "color_layers");
  std::size_t num = 0;
  expect("num_params");
  is >> num;
  expect("end_header");
  is.get();  // newline
  p.validate();
  if (num != p.num_params()) throw Error(Errc::FormatError, "parameter count mismatch");
  for (auto b : p.blocks()) {
    is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size_bytes()));
  }
  if (!is) throw Error(Errc::FormatError, "truncated checkpoint payload");
  return p;
}

}  // namespace nslam
