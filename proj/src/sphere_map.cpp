#include "hrtfp/sphere_map.hpp"

#include "hrtfp/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace hrtfp {

EdgeWeights edge_weights(const TriMesh& mesh, bool cotangent) {
  const int nv = static_cast<int>(mesh.vertices.size());
  std::vector<std::map<int, double>> rows(nv);
  for (const auto& t : mesh.faces) {
    for (int c = 0; c < 3; ++c) {
      const int i = t[(c + 1) % 3];
      const int j = t[(c + 2) % 3];
      double w = 1.0;
      if (cotangent) {
        // half the cotangent of the corner opposite edge (i, j)
        const Eigen::Vector3d a = mesh.vertices[i] - mesh.vertices[t[c]];
        const Eigen::Vector3d b = mesh.vertices[j] - mesh.vertices[t[c]];
        w = 0.5 * a.dot(b) / a.cross(b).norm();
      } else {
        w = 0.5;  // each interior edge is seen from two faces
      }
      rows[i][j] += w;
      rows[j][i] += w;
    }
  }
  EdgeWeights out;
  out.offsets.reserve(nv + 1);
  out.offsets.push_back(0);
  for (const auto& row : rows) {
    for (const auto& [j, w] : row) {
      out.neighbors.push_back(j);
      out.weights.push_back(std::max(w, 0.0));
    }
    out.offsets.push_back(static_cast<int>(out.neighbors.size()));
  }
  return out;
}

double harmonic_energy(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& positions) {
  const auto w = edge_weights(mesh, true);
  double e = 0.0;
  for (int i = 0; i + 1 < static_cast<int>(w.offsets.size()); ++i) {
    for (int k = w.offsets[i]; k < w.offsets[i + 1]; ++k) {
      const int j = w.neighbors[k];
      if (j > i) e += 0.5 * w.weights[k] * (positions[i] - positions[j]).squaredNorm();
    }
  }
  return e;
}

int count_flipped(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& positions) {
  int flips = 0;
  for (const auto& t : mesh.faces) {
    if (positions[t[0]].dot(positions[t[1]].cross(positions[t[2]])) <= 0.0) ++flips;
  }
  return flips;
}

Eigen::Vector3d image_centroid(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& positions) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  double area = 0.0;
  for (const auto& t : mesh.faces) {
    const auto& a = positions[t[0]];
    const auto& b = positions[t[1]];
    const auto& c = positions[t[2]];
    const double ar = 0.5 * (b - a).cross(c - a).norm();
    sum += ar * (a + b + c) / 3.0;
    area += ar;
  }
  return sum / area;
}

namespace {

// Hyperbolic translation of the ball taking a to the origin, restricted to
// the unit sphere.
void moebius_center(const TriMesh& mesh, std::vector<Eigen::Vector3d>& u) {
  for (int it = 0; it < 100; ++it) {
    const Eigen::Vector3d mu = image_centroid(mesh, u);
    if (mu.norm() < 1e-13) return;
    Eigen::Vector3d a = 0.75 * mu;
    if (a.norm() > 0.5) a *= 0.5 / a.norm();
    const double aa = a.squaredNorm();
    for (auto& x : u) {
      const Eigen::Vector3d d = x - a;
      x = (((1.0 - aa) * d - d.squaredNorm() * a) / d.squaredNorm()).normalized();
    }
  }
}

Eigen::Vector3d surface_centroid(const TriMesh& mesh) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  double area = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    const double ar = mesh.face_area(f);
    sum += ar * (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    area += ar;
  }
  return sum / area;
}

SphereMap solve(const TriMesh& mesh, const ParameterizeOptions& options, bool cotangent) {
  const auto w = edge_weights(mesh, cotangent);
  const std::size_t nv = mesh.vertices.size();
  const Eigen::Vector3d c0 = surface_centroid(mesh);
  std::vector<Eigen::Vector3d> u(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    u[i] = mesh.vertices[i] - c0;
    if (u[i].norm() == 0.0) throw TopologyError("vertex at the surface centroid");
    u[i].normalize();
  }
  moebius_center(mesh, u);

  SphereMap out;
  out.mesh = mesh;
  std::vector<Eigen::Vector3d> before(nv);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    before = u;
    for (std::size_t i = 0; i < nv; ++i) {
      Eigen::Vector3d s = Eigen::Vector3d::Zero();
      for (int k = w.offsets[i]; k < w.offsets[i + 1]; ++k) s += w.weights[k] * u[w.neighbors[k]];
      if (s.norm() > 0.0) u[i] = s.normalized();
    }
    moebius_center(mesh, u);
    double step = 0.0;
    for (std::size_t i = 0; i < nv; ++i) step = std::max(step, (u[i] - before[i]).norm());
    out.iterations = iter;
    out.gradient_norm = step;
    if (step < options.tolerance) {
      out.unit_positions = std::move(u);
      return out;
    }
  }
  throw ConvergenceError("spherical parameterization did not converge in " +
                         std::to_string(options.max_iterations) +
                         " sweeps; final update norm " + std::to_string(out.gradient_norm));
}

}  // namespace

SphereMap spherical_parameterize(const TriMesh& mesh, ParameterizeOptions options) {
  if (options.cotangent_weights) {
    auto map = solve(mesh, options, true);
    if (count_flipped(mesh, map.unit_positions) == 0) return map;
  }
  auto map = solve(mesh, options, false);
  map.used_uniform_fallback = options.cotangent_weights;
  const int flips = count_flipped(mesh, map.unit_positions);
  if (flips != 0) {
    throw TopologyError("spherical map has " + std::to_string(flips) + " flipped triangles");
  }
  return map;
}

}  // namespace hrtfp
