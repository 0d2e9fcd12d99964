#include "hrtfp/mesh.hpp"

#include "hrtfp/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

namespace hrtfp {

double TriMesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

double TriMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& t : faces) {
    v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  return v / 6.0;
}

namespace {

std::string one_based(int a, int b) {
  return "(" + std::to_string(a + 1) + ", " + std::to_string(b + 1) + ")";
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

void validate_mesh(TriMesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices.size());
  if (nv == 0 || mesh.faces.empty()) throw TopologyError("mesh has no faces");
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int i : mesh.faces[f]) {
      if (i < 0 || i >= nv) {
        throw TopologyError("face " + std::to_string(f + 1) + " references vertex " +
                            std::to_string(i + 1) + " out of range");
      }
    }
    if (!(mesh.face_area(f) > 1e-12)) {
      throw TopologyError("face " + std::to_string(f + 1) + " is degenerate");
    }
  }

  std::map<std::pair<int, int>, int> directed;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    for (int e = 0; e < 3; ++e) {
      const std::pair<int, int> key{t[e], t[(e + 1) % 3]};
      if (!directed.emplace(key, static_cast<int>(f)).second) {
        throw TopologyError("edge " + one_based(key.first, key.second) +
                            " is non-manifold or inconsistently oriented");
      }
    }
  }

  std::map<int, int> open;  // boundary edges keyed by start vertex
  for (const auto& [key, f] : directed) {
    if (!directed.count({key.second, key.first})) open.emplace(key.first, key.second);
  }
  if (!open.empty()) {
    std::string loop;
    int v = open.begin()->first;
    for (std::size_t n = 0; n <= open.size(); ++n) {
      loop += (loop.empty() ? "" : " ") + std::to_string(v + 1);
      auto it = open.find(v);
      if (it == open.end()) break;
      v = it->second;
      if (v == open.begin()->first) break;
    }
    throw TopologyError("open boundary: edge loop through vertices " + loop);
  }

  std::vector<int> parent(nv);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<char> used(nv, 0);
  for (const auto& t : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      used[t[e]] = 1;
      parent[find_root(parent, t[e])] = find_root(parent, t[(e + 1) % 3]);
    }
  }
  for (int i = 0; i < nv; ++i) {
    if (!used[i]) throw TopologyError("vertex " + std::to_string(i + 1) + " is isolated");
    if (find_root(parent, i) != find_root(parent, 0)) {
      throw TopologyError("mesh has more than one connected component (vertex " +
                          std::to_string(i + 1) + ")");
    }
  }
  const long euler = static_cast<long>(nv) - static_cast<long>(directed.size() / 2) +
                     static_cast<long>(mesh.faces.size());
  if (euler != 2) {
    throw TopologyError("Euler characteristic " + std::to_string(euler) +
                        " (genus-0 surfaces have 2)");
  }
  if (mesh.signed_volume() < 0.0) {
    for (auto& t : mesh.faces) std::swap(t[1], t[2]);
  }
}

TriMesh read_mesh(std::istream& in) {
  TriMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    auto bad = [&] {
      return ParseError("mesh line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
    };
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ls >> p.x() >> p.y() >> p.z()) || !p.allFinite()) throw bad();
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      long a, b, c;
      if (!(ls >> a >> b >> c)) throw bad();
      mesh.faces.push_back({static_cast<int>(a - 1), static_cast<int>(b - 1),
                            static_cast<int>(c - 1)});
    } else {
      throw bad();
    }
    std::string rest;
    if (ls >> rest) throw bad();
  }
  validate_mesh(mesh);
  return mesh;
}

TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh " + path.string());
  try {
    return read_mesh(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const TopologyError& e) {
    throw TopologyError(path.string() + ": " + e.what());
  }
}

void write_mesh(std::ostream& out, const TriMesh& mesh) {
  char buf[96];
  for (const auto& p : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& t : mesh.faces) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

void save_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh " + path.string());
  write_mesh(out, mesh);
  if (!out) throw IoError("failed writing mesh " + path.string());
}

TriMesh icosphere(int level, double radius) {
  if (level < 0) throw DomainError("icosphere level must be >= 0");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]);
      const int b = midpoint(tri[1], tri[2]);
      const int c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f.swap(next);
  }
  TriMesh mesh;
  for (auto& p : v) mesh.vertices.push_back(radius * p);
  mesh.faces = std::move(f);
  if (mesh.signed_volume() < 0.0) {
    for (auto& tri : mesh.faces) std::swap(tri[1], tri[2]);
  }
  return mesh;
}

}  // namespace hrtfp
