#include "hrtfp/ear_patch.hpp"

#include "hrtfp/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hrtfp {

Direction map_direction(const SphereMap& map, const Eigen::Vector3d& physical_dir) {
  const Eigen::Vector3d d = physical_dir.normalized();
  const auto& mesh = map.mesh;
  double best_t = -1.0;
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  for (const auto& f : mesh.faces) {
    // Moeller-Trumbore with the ray origin at the mesh origin
    const Eigen::Vector3d& p0 = mesh.vertices[f[0]];
    const Eigen::Vector3d e1 = mesh.vertices[f[1]] - p0;
    const Eigen::Vector3d e2 = mesh.vertices[f[2]] - p0;
    const Eigen::Vector3d p = d.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-300) continue;
    const Eigen::Vector3d s = -p0;
    const double u = s.dot(p) / det;
    if (u < -1e-12 || u > 1.0 + 1e-12) continue;
    const Eigen::Vector3d q = s.cross(e1);
    const double v = d.dot(q) / det;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
    const double t = e2.dot(q) / det;
    if (t > best_t) {
      best_t = t;
      best = (1.0 - u - v) * map.unit_positions[f[0]] + u * map.unit_positions[f[1]] +
             v * map.unit_positions[f[2]];
    }
  }
  if (best_t <= 0.0) throw DomainError("direction does not hit the mesh from its origin");
  return Direction::from_vector(best);
}

Eigen::Matrix3d cap_frame(const Direction& center, const Direction& reference) {
  const Eigen::Vector3d e3 = center.unit_vector();
  Eigen::Vector3d e1 = Eigen::Vector3d::Zero();
  for (const Eigen::Vector3d& ref :
       {reference.unit_vector(), Eigen::Vector3d::UnitX().eval(), Eigen::Vector3d::UnitY().eval()}) {
    e1 = ref - ref.dot(e3) * e3;
    if (e1.norm() > 1e-6) break;
  }
  e1.normalize();
  Eigen::Matrix3d frame;
  frame.row(0) = e1.transpose();
  frame.row(1) = e3.cross(e1).transpose();
  frame.row(2) = e3.transpose();
  return frame;
}

Direction CroppedCap::local_direction(std::size_t i) const {
  const auto& p = local[i];
  return Direction::from_polar(std::atan2(std::hypot(p.x(), p.y()), p.z()), std::atan2(p.y(), p.x()));
}

CroppedCap crop_cap(const SphereMap& map, const Direction& center, double half_angle,
                    const Direction& reference) {
  if (!(half_angle > 0.0)) throw DomainError("crop half angle must be positive");
  CroppedCap cap;
  cap.half_angle = half_angle;
  cap.frame = cap_frame(center, reference);
  const double zmin = std::cos(half_angle) - 1e-15;
  std::vector<int> local_index(map.unit_positions.size(), -1);
  for (std::size_t i = 0; i < map.unit_positions.size(); ++i) {
    const Eigen::Vector3d p = cap.frame * map.unit_positions[i];
    if (p.z() >= zmin) {
      local_index[i] = static_cast<int>(cap.local.size());
      cap.source_vertex.push_back(static_cast<int>(i));
      cap.local.push_back(p);
      cap.position.push_back(map.mesh.vertices[i]);
    }
  }
  for (const auto& f : map.mesh.faces) {
    if (local_index[f[0]] >= 0 && local_index[f[1]] >= 0 && local_index[f[2]] >= 0) {
      cap.faces.push_back({local_index[f[0]], local_index[f[1]], local_index[f[2]]});
    }
  }
  if (cap.faces.empty()) {
    throw DomainError("empty crop: no triangle lies within " +
                      std::to_string(rad2deg(half_angle)) + " deg of the cap center");
  }
  return cap;
}

DirectionSet uniform_cap_grid(double half_angle, std::size_t n) {
  if (n == 0) throw DomainError("cap grid needs at least one point");
  if (!(half_angle > 0.0) || half_angle > kPi) throw DomainError("cap half angle out of range");
  if (n == 1) return DirectionSet({Direction::from_polar(0.0, 0.0)});
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double c = std::cos(half_angle);
  std::vector<Direction> dirs;
  dirs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (1.0 - c) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    dirs.push_back(Direction::from_polar(std::acos(z), std::fmod(golden * static_cast<double>(i), 2.0 * kPi)));
  }
  return DirectionSet(std::move(dirs));
}

CapLocation locate_in_cap(const CroppedCap& cap, const DirectionSet& grid) {
  const double zmin = 0.05;  // gnomonic projection stays well defined
  auto gnomonic = [](const Eigen::Vector3d& p) { return Eigen::Vector2d(p.x() / p.z(), p.y() / p.z()); };
  std::vector<Eigen::Vector2d> query(grid.size());
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::Vector3d p = grid[i].unit_vector();
    if (p.z() <= zmin) throw DomainError("grid direction too far from the cap axis");
    query[i] = gnomonic(p);
    lo = lo.cwiseMin(query[i]);
    hi = hi.cwiseMax(query[i]);
  }
  std::vector<Eigen::Vector2d> plane(cap.local.size());
  for (std::size_t i = 0; i < cap.local.size(); ++i) {
    plane[i] = cap.local[i].z() > zmin ? gnomonic(cap.local[i])
                                       : Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  }

  const int cells = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(cap.faces.size()) / 2.0)));
  const Eigen::Vector2d span = (hi - lo).cwiseMax(1e-12);
  auto cell_of = [&](double v, int axis) {
    return std::clamp(static_cast<int>((v - lo[axis]) / span[axis] * cells), 0, cells - 1);
  };
  std::vector<std::vector<int>> bucket(static_cast<std::size_t>(cells) * cells);
  for (std::size_t f = 0; f < cap.faces.size(); ++f) {
    const auto& t = cap.faces[f];
    if (!plane[t[0]].allFinite() || !plane[t[1]].allFinite() || !plane[t[2]].allFinite()) continue;
    const Eigen::Vector2d tlo = plane[t[0]].cwiseMin(plane[t[1]]).cwiseMin(plane[t[2]]);
    const Eigen::Vector2d thi = plane[t[0]].cwiseMax(plane[t[1]]).cwiseMax(plane[t[2]]);
    if (thi.x() < lo.x() || thi.y() < lo.y() || tlo.x() > hi.x() || tlo.y() > hi.y()) continue;
    for (int cx = cell_of(tlo.x(), 0); cx <= cell_of(thi.x(), 0); ++cx) {
      for (int cy = cell_of(tlo.y(), 1); cy <= cell_of(thi.y(), 1); ++cy) {
        bucket[static_cast<std::size_t>(cx) * cells + cy].push_back(static_cast<int>(f));
      }
    }
  }

  CapLocation out;
  out.vertices.resize(grid.size());
  out.weights.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::Vector2d& q = query[i];
    double best_min = -std::numeric_limits<double>::infinity();
    for (int f : bucket[static_cast<std::size_t>(cell_of(q.x(), 0)) * cells + cell_of(q.y(), 1)]) {
      const auto& t = cap.faces[f];
      const Eigen::Vector2d a = plane[t[0]];
      const Eigen::Vector2d e1 = plane[t[1]] - a;
      const Eigen::Vector2d e2 = plane[t[2]] - a;
      const Eigen::Vector2d r = q - a;
      const double det = e1.x() * e2.y() - e1.y() * e2.x();
      const double b1 = (r.x() * e2.y() - r.y() * e2.x()) / det;
      const double b2 = (e1.x() * r.y() - e1.y() * r.x()) / det;
      const Eigen::Vector3d b(1.0 - b1 - b2, b1, b2);
      if (b.minCoeff() > best_min) {
        best_min = b.minCoeff();
        out.vertices[i] = t;
        out.weights[i] = b;
      }
    }
    if (best_min < -1e-10) {
      throw DomainError("grid direction (theta " + std::to_string(rad2deg(grid[i].polar())) +
                        " deg, phi " + std::to_string(rad2deg(grid[i].azimuth)) +
                        " deg) is not covered by the cropped mesh");
    }
  }
  return out;
}

Eigen::MatrixXd interpolate_field(const CroppedCap& cap, const DirectionSet& grid,
                                  const Eigen::MatrixXd& values) {
  if (values.rows() != static_cast<Eigen::Index>(cap.local.size())) {
    throw DimensionError("field needs one row per cropped vertex");
  }
  const auto loc = locate_in_cap(cap, grid);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(grid.size()), values.cols());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& t = loc.vertices[i];
    const auto& b = loc.weights[i];
    out.row(static_cast<Eigen::Index>(i)) = b[0] * values.row(t[0]) + b[1] * values.row(t[1]) + b[2] * values.row(t[2]);
  }
  return out;
}

EarPatch remesh_cap(const CroppedCap& cap, const DirectionSet& grid, const CapSpec& spec) {
  spec.validate();
  if (!(spec.half_angle < cap.half_angle)) {
    throw DomainError("resampling cap must be strictly inside the cropped cap");
  }
  for (const auto& d : grid) {
    if (d.polar() > spec.half_angle + 1e-12) throw DomainError("grid direction outside the resampling cap");
  }
  const auto loc = locate_in_cap(cap, grid);
  EarPatch patch{spec, grid, Eigen::MatrixXd(static_cast<Eigen::Index>(grid.size()), 3)};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& t = loc.vertices[i];
    const auto& b = loc.weights[i];
    double radius = 0.0;
    Eigen::Vector3d dir = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) {
      const Eigen::Vector3d& p = cap.position[t[k]];
      const double r = p.norm();
      radius += b[k] * r;
      if (r > 0.0) dir += b[k] * p / r;
    }
    const double dn = dir.norm();
    patch.samples_xyz.row(static_cast<Eigen::Index>(i)) =
        (dn > 0.0 ? Eigen::Vector3d(radius * dir / dn) : Eigen::Vector3d::Zero()).transpose();
  }
  return patch;
}

EarFeatures ear_sch_features(const EarPatch& patch, EarSide side, const CapFitter& fitter) {
  if (fitter.basis().values.rows() != patch.samples_xyz.rows()) {
    throw DimensionError("cap fitter and patch have different sample counts");
  }
  if (fitter.basis().spec.max_degree != patch.cap.max_degree) {
    throw DimensionError("cap fitter and patch disagree on K");
  }
  return {side, fitter.fit_columns(patch.samples_xyz)};
}

EarFeatures ear_sch_features(const EarPatch& patch, EarSide side) {
  const CapFitter fitter(cap_basis(patch.cap, patch.grid));
  return ear_sch_features(patch, side, fitter);
}

}  // namespace hrtfp
