#include "nslam/meshing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "nslam/error.hpp"

namespace nslam {

void TriangleMesh::validate() const {
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) throw Error(Errc::FormatError, "mesh has a non-finite vertex");
  }
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int i : t) {
      if (i < 0 || i >= n) throw Error(Errc::FormatError, "mesh triangle index out of range");
    }
  }
  if (!colors.empty() && colors.size() != vertices.size()) {
    throw Error(Errc::FormatError, "mesh color count differs from vertex count");
  }
}

double TriangleMesh::area() const {
  double a = 0;
  for (const auto& t : triangles) {
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }
  return a;
}

Vec3 TriangleMesh::face_normal(std::size_t tri) const {
  const auto& t = triangles[tri];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).normalized();
}

TriangleMesh TriangleMesh::compacted() const {
  std::vector<int> remap(vertices.size(), -1);
  TriangleMesh out;
  for (const auto& t : triangles) {
    std::array<int, 3> nt;
    for (int k = 0; k < 3; ++k) {
      int& m = remap[t[k]];
      if (m < 0) {
        m = static_cast<int>(out.vertices.size());
        out.vertices.push_back(vertices[t[k]]);
        if (!colors.empty()) out.colors.push_back(colors[t[k]]);
      }
      nt[k] = m;
    }
    out.triangles.push_back(nt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Marching cubes

namespace {

// Cube corner c sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1).
struct CubeTopology {
  std::array<std::array<int, 2>, 12> edge_corners;
  std::array<std::array<int, 8>, 8> edge_of;  // corner pair -> edge id, -1 if not an edge
  std::array<std::array<int, 4>, 6> face_corners;  // cyclic order

  CubeTopology() {
    for (auto& row : edge_of) row.fill(-1);
    int e = 0;
    for (int a = 0; a < 8; ++a) {
      for (int bit = 1; bit < 8; bit <<= 1) {
        const int b = a | bit;
        if (b == a) continue;
        edge_corners[e] = {a, b};
        edge_of[a][b] = edge_of[b][a] = e;
        ++e;
      }
    }
    int f = 0;
    for (int axis = 0; axis < 3; ++axis) {
      const int b1 = 1 << ((axis + 1) % 3), b2 = 1 << ((axis + 2) % 3);
      for (int side = 0; side < 2; ++side) {
        const int base = side ? (1 << axis) : 0;
        face_corners[f++] = {base, base | b1, base | b1 | b2, base | b2};
      }
    }
  }
};

const CubeTopology& topo() {
  static const CubeTopology t;
  return t;
}

struct Lattice {
  Vec3 origin;
  double voxel;
  int nx, ny, nz;

  std::size_t index(int i, int j, int k) const { return (std::size_t(k) * ny + j) * nx + i; }
  Vec3 point(int i, int j, int k) const { return origin + voxel * Vec3(i, j, k); }
};

}  // namespace

TriangleMesh extract_isosurface(const ScalarField& field, const SceneBounds& bounds, double voxel) {
  if (!(voxel > 0)) throw Error(Errc::ConfigError, "voxel size must be positive");
  if (!bounds.valid()) throw Error(Errc::ConfigError, "invalid bounds");
  const Vec3 ext = bounds.extent();
  Lattice lat{bounds.min, voxel, int(std::floor(ext.x() / voxel + 1e-9)) + 1,
              int(std::floor(ext.y() / voxel + 1e-9)) + 1, int(std::floor(ext.z() / voxel + 1e-9)) + 1};
  if (lat.nx < 2 || lat.ny < 2 || lat.nz < 2) throw Error(Errc::ConfigError, "voxel larger than the bounds");

  std::vector<double> val(std::size_t(lat.nx) * lat.ny * lat.nz);
  {
    std::vector<Vec3> slab(std::size_t(lat.nx) * lat.ny);
    for (int k = 0; k < lat.nz; ++k) {
      for (int j = 0; j < lat.ny; ++j)
        for (int i = 0; i < lat.nx; ++i) slab[std::size_t(j) * lat.nx + i] = lat.point(i, j, k);
      field(slab, std::span<double>(val.data() + lat.index(0, 0, k), slab.size()));
    }
  }

  const CubeTopology& T = topo();
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](int ci, int cj, int ck, int a, int b) -> int {
    // Global key: lower lattice endpoint and axis of the edge.
    const int lo = std::min(a, b), axis = (a ^ b) == 1 ? 0 : ((a ^ b) == 2 ? 1 : 2);
    const int li = ci + (lo & 1), lj = cj + (lo >> 1 & 1), lk = ck + (lo >> 2 & 1);
    const std::uint64_t key = std::uint64_t(lat.index(li, lj, lk)) * 3 + axis;
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double v0 = val[lat.index(li, lj, lk)];
    const int hi_i = li + (axis == 0), hi_j = lj + (axis == 1), hi_k = lk + (axis == 2);
    const double v1 = val[lat.index(hi_i, hi_j, hi_k)];
    const double t = v0 / (v0 - v1);
    const Vec3 p0 = lat.point(li, lj, lk), p1 = lat.point(hi_i, hi_j, hi_k);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p0 + t * (p1 - p0));
    edge_vertex.emplace(key, id);
    return id;
  };

  std::array<double, 8> v;
  std::array<bool, 8> pos;
  for (int k = 0; k + 1 < lat.nz; ++k) {
    for (int j = 0; j + 1 < lat.ny; ++j) {
      for (int i = 0; i + 1 < lat.nx; ++i) {
        int n_pos = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = val[lat.index(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1))];
          pos[c] = v[c] >= 0.0;
          n_pos += pos[c];
        }
        if (n_pos == 0 || n_pos == 8) continue;

        // Segments on each face, as pairs of crossed cube edges.
        std::array<std::array<int, 2>, 12> nbr;
        std::array<int, 12> deg{};
        auto link = [&](int e0, int e1) {
          nbr[e0][deg[e0]++] = e1;
          nbr[e1][deg[e1]++] = e0;
        };
        for (const auto& f : T.face_corners) {
          std::array<int, 4> fe;
          int crossings = 0;
          for (int s = 0; s < 4; ++s) {
            fe[s] = T.edge_of[f[s]][f[(s + 1) % 4]];
            crossings += pos[f[s]] != pos[f[(s + 1) % 4]];
          }
          if (crossings == 2) {
            int found[2], n = 0;
            for (int s = 0; s < 4; ++s)
              if (pos[f[s]] != pos[f[(s + 1) % 4]]) found[n++] = fe[s];
            link(found[0], found[1]);
          } else if (crossings == 4) {
            const double a0 = v[f[0]], a1 = v[f[1]], a2 = v[f[2]], a3 = v[f[3]];
            const double saddle = (a0 * a2 - a1 * a3) / (a0 + a2 - a1 - a3);
            if ((saddle >= 0.0) == pos[f[0]]) {
              link(fe[0], fe[1]);  // corners 0 and 2 joined: cut off corners 1 and 3
              link(fe[2], fe[3]);
            } else {
              link(fe[3], fe[0]);
              link(fe[1], fe[2]);
            }
          }
        }

        std::array<bool, 12> used{};
        for (int start = 0; start < 12; ++start) {
          if (deg[start] != 2 || used[start]) continue;
          std::vector<int> loop;
          int prev = -1, cur = start;
          while (!used[cur]) {
            used[cur] = true;
            loop.push_back(cur);
            const int next = nbr[cur][0] != prev ? nbr[cur][0] : nbr[cur][1];
            prev = cur;
            cur = next;
          }
          if (loop.size() < 3) continue;

          std::vector<int> ids;
          Vec3 uphill = Vec3::Zero();
          for (int e : loop) {
            const int a = T.edge_corners[e][0], b = T.edge_corners[e][1];
            ids.push_back(vertex_on(i, j, k, a, b));
            const Vec3 d = Vec3((b & 1) - (a & 1), (b >> 1 & 1) - (a >> 1 & 1), (b >> 2 & 1) - (a >> 2 & 1));
            uphill += pos[b] ? d : -d;
          }
          Vec3 newell = Vec3::Zero();
          for (std::size_t s = 0; s < ids.size(); ++s) {
            const Vec3& p = mesh.vertices[ids[s]];
            const Vec3& q = mesh.vertices[ids[(s + 1) % ids.size()]];
            newell += p.cross(q);
          }
          if (newell.dot(uphill) < 0) std::reverse(ids.begin(), ids.end());
          for (std::size_t s = 1; s + 1 < ids.size(); ++s) mesh.triangles.push_back({ids[0], ids[s], ids[s + 1]});
        }
      }
    }
  }
  if (mesh.triangles.empty()) throw Error(Errc::EmptySurface, "the field has no zero crossing inside the bounds");
  return mesh;
}

TriangleMesh extract_mesh(const SceneParams& params, const SceneBounds& bounds, double voxel) {
  // Never query past the field's own box.
  SceneBounds b{bounds.min.cwiseMax(params.bounds.min), bounds.max.cwiseMin(params.bounds.max)};
  TriangleMesh mesh = extract_isosurface(
      [&](std::span<const Vec3> xs, std::span<double> out) { field_sdf(params, xs, out); }, b, voxel);
  mesh.colors.resize(mesh.vertices.size());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t s = 0; s < mesh.vertices.size(); s += kChunk) {
    const std::size_t n = std::min(kChunk, mesh.vertices.size() - s);
    std::vector<Vec3> xs(mesh.vertices.begin() + s, mesh.vertices.begin() + s + n);
    for (Vec3& x : xs) x = x.cwiseMax(params.bounds.min).cwiseMin(params.bounds.max);
    const FieldBatch fb = field_forward(params, xs);
    for (std::size_t i = 0; i < n; ++i) mesh.colors[s + i] = fb.color.row(i).transpose();
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// PLY

void write_ply(const std::filesystem::path& file, const TriangleMesh& mesh) {
  mesh.validate();
  std::ofstream out(file);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + file.string());
  const bool color = !mesh.colors.empty();
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  char buf[160];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    int n = std::snprintf(buf, sizeof buf, "%.7g %.7g %.7g", p.x(), p.y(), p.z());
    if (color) {
      const Vec3 c = (mesh.colors[i].cwiseMax(0.0).cwiseMin(1.0) * 255.0).array().round();
      std::snprintf(buf + n, sizeof buf - n, " %d %d %d", int(c.x()), int(c.y()), int(c.z()));
    }
    out << buf << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

TriangleMesh read_ply(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::MissingFile, "missing file: " + file.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw Error(Errc::FormatError, "not a PLY file: " + file.string());
  std::size_t n_vert = 0, n_face = 0;
  std::vector<std::string> vprops;
  std::string current;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw Error(Errc::FormatError, "only ASCII PLY is supported: " + file.string());
    } else if (kw == "element") {
      std::size_t n;
      ls >> current >> n;
      if (current == "vertex") n_vert = n;
      if (current == "face") n_face = n;
    } else if (kw == "property" && current == "vertex") {
      std::string type, name;
      ls >> type >> name;
      vprops.push_back(name);
    } else if (kw == "end_header") {
      break;
    }
  }
  auto find = [&](const char* name) {
    const auto it = std::find(vprops.begin(), vprops.end(), name);
    return it == vprops.end() ? -1 : int(it - vprops.begin());
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int ir = find("red"), ig = find("green"), ib = find("blue");
  if (ix < 0 || iy < 0 || iz < 0) throw Error(Errc::FormatError, "PLY vertices lack x/y/z");
  const bool color = ir >= 0 && ig >= 0 && ib >= 0;
  TriangleMesh mesh;
  std::vector<double> vals(vprops.size());
  for (std::size_t i = 0; i < n_vert; ++i) {
    for (double& x : vals) in >> x;
    mesh.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
    if (color) mesh.colors.emplace_back(vals[ir] / 255.0, vals[ig] / 255.0, vals[ib] / 255.0);
  }
  for (std::size_t f = 0; f < n_face; ++f) {
    int cnt = 0;
    in >> cnt;
    std::vector<int> idx(cnt);
    for (int& x : idx) in >> x;
    for (int s = 1; s + 1 < cnt; ++s) mesh.triangles.push_back({idx[0], idx[s], idx[s + 1]});
  }
  if (!in) throw Error(Errc::FormatError, "truncated PLY file: " + file.string());
  mesh.validate();
  return mesh;
}

// ---------------------------------------------------------------------------
// Ray casting

MeshRaycaster::MeshRaycaster(const TriangleMesh& mesh) : mesh_(&mesh) {
  order_.resize(mesh.triangles.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
  if (!order_.empty()) {
    nodes_.reserve(2 * order_.size());
    build(0, int(order_.size()));
  }
}

int MeshRaycaster::build(int begin, int end) {
  const int id = int(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, cbox;
  for (int i = begin; i < end; ++i) {
    const auto& t = mesh_->triangles[order_[i]];
    Vec3 c = Vec3::Zero();
    for (int k : t) {
      box.extend(mesh_->vertices[k]);
      c += mesh_->vertices[k];
    }
    cbox.extend(c / 3.0);
  }
  nodes_[id].box = box;
  if (end - begin <= 4) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  cbox.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const auto& ta = mesh_->triangles[a];
    const auto& tb = mesh_->triangles[b];
    const double ca = mesh_->vertices[ta[0]][axis] + mesh_->vertices[ta[1]][axis] + mesh_->vertices[ta[2]][axis];
    const double cb = mesh_->vertices[tb[0]][axis] + mesh_->vertices[tb[1]][axis] + mesh_->vertices[tb[2]][axis];
    return ca < cb;
  });
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

bool MeshRaycaster::hit_triangle(int tri, const Vec3& o, const Vec3& d, double t_min, double& t) const {
  // Moller-Trumbore. The barycentric slack keeps rays through a shared edge
  // from slipping between its two triangles.
  constexpr double kEdgeSlack = 1e-12;
  const auto& tr = mesh_->triangles[tri];
  const Vec3& a = mesh_->vertices[tr[0]];
  const Vec3 e1 = mesh_->vertices[tr[1]] - a;
  const Vec3 e2 = mesh_->vertices[tr[2]] - a;
  const Vec3 p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-15) return false;
  const double inv = 1.0 / det;
  const Vec3 s = o - a;
  const double u = s.dot(p) * inv;
  if (u < -kEdgeSlack || u > 1.0 + kEdgeSlack) return false;
  const Vec3 q = s.cross(e1);
  const double v = d.dot(q) * inv;
  if (v < -kEdgeSlack || u + v > 1.0 + kEdgeSlack) return false;
  const double th = e2.dot(q) * inv;
  if (th <= t_min || th >= t) return false;
  t = th;
  return true;
}

std::optional<double> MeshRaycaster::cast(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv = dir.cwiseInverse();
  double best = t_max;
  bool hit = false;
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp) {
    const Node& n = nodes_[stack[--sp]];
    double t0 = t_min, t1 = best;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      double ta = (n.box.min()[a] - origin[a]) * inv[a];
      double tb = (n.box.max()[a] - origin[a]) * inv[a];
      if (ta > tb) std::swap(ta, tb);
      if (std::isnan(ta) || std::isnan(tb)) continue;  // parallel ray on a slab face
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      miss = t0 > t1;
    }
    if (miss) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) hit |= hit_triangle(order_[i], origin, dir, t_min, best);
    } else {
      stack[sp++] = n.left;
      stack[sp++] = n.right;
    }
  }
  if (!hit) return std::nullopt;
  return best;
}

std::vector<double> MeshRaycaster::render_depth(const Intrinsics& intr, const Pose& pose) const {
  std::vector<double> depth(std::size_t(intr.width) * intr.height, 0.0);
  const Mat4 T = pose.matrix();
  const Mat3 R = T.topLeftCorner<3, 3>();
  const Vec3 o = T.topRightCorner<3, 1>();
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Vec3 bp = intr.backproject(u, v);
      const double len = bp.norm();
      if (const auto t = cast(o, R * bp / len)) depth[std::size_t(v) * intr.width + u] = *t / len;
    }
  }
  return depth;
}

// ---------------------------------------------------------------------------
// Culling

std::vector<char> cull_vertex_mask(const TriangleMesh& mesh, const CullOptions& opts) {
  std::vector<char> keep(mesh.vertices.size(), 1);
  if (opts.strategy == CullStrategy::None) return keep;
  if (opts.views.empty()) throw Error(Errc::ConfigError, "culling needs at least one view");
  std::vector<Pose> views = opts.views;
  if (opts.strategy == CullStrategy::VirtualView) {
    views.insert(views.end(), opts.virtual_views.begin(), opts.virtual_views.end());
  }
  const bool occlusion = opts.strategy != CullStrategy::Frustum;
  std::optional<MeshRaycaster> caster;
  if (occlusion) caster.emplace(opts.occluder ? *opts.occluder : mesh);

  struct Cam {
    Mat3 R;
    Vec3 c;
  };
  std::vector<Cam> cams;
  for (const Pose& p : views) {
    const Mat4 T = p.matrix();
    cams.push_back({T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>()});
  }
  const Intrinsics& K = opts.intr;
  const double near = std::max(opts.near, 1e-9);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& x = mesh.vertices[i];
    bool kept = false;
    for (const Cam& cam : cams) {
      const Vec3 pc = cam.R.transpose() * (x - cam.c);
      if (pc.z() <= near) continue;
      const double u = K.fx * pc.x() / pc.z() + K.cx;
      const double v = K.fy * pc.y() / pc.z() + K.cy;
      if (u < -0.5 || u >= K.width - 0.5 || v < -0.5 || v >= K.height - 0.5) continue;
      if (!occlusion) {
        kept = true;
        break;
      }
      const Vec3 d = x - cam.c;
      const double dist = d.norm();
      const auto hit = caster->cast(cam.c, d / dist, 1e-9, dist - opts.depth_tolerance);
      if (!hit) {
        kept = true;
        break;
      }
    }
    keep[i] = kept;
  }
  return keep;
}

TriangleMesh cull_mesh(const TriangleMesh& mesh, const CullOptions& opts) {
  const std::vector<char> keep = cull_vertex_mask(mesh, opts);
  TriangleMesh out;
  out.vertices = mesh.vertices;
  out.colors = mesh.colors;
  for (const auto& t : mesh.triangles) {
    if (keep[t[0]] && keep[t[1]] && keep[t[2]]) out.triangles.push_back(t);
  }
  return out.compacted();
}

}  // namespace nslam
