#pragma once

#include "hrtfp/cap_harmonics.hpp"
#include "hrtfp/directions.hpp"
#include "hrtfp/sphere_map.hpp"

#include <Eigen/Core>

#include <array>
#include <vector>

namespace hrtfp {

/// Image on the sphere map of a physical direction: the outermost hit of the
/// ray from the mesh origin, mapped through the hit triangle barycentrically.
Direction map_direction(const SphereMap& map, const Eigen::Vector3d& physical_dir);

/// Orthonormal frame of a cap: rows e1, e2, axis. Cap-local phi = 0 points
/// along the reference direction projected to the tangent plane at the axis.
Eigen::Matrix3d cap_frame(const Direction& center, const Direction& reference);

/// Part of a sphere-mapped mesh inside a cap, faces kept only when all three
/// vertices are inside.
struct CroppedCap {
  double half_angle = 0.0;
  Eigen::Matrix3d frame;                  // map domain -> cap-local
  std::vector<int> source_vertex;         // index into the full mesh
  std::vector<Eigen::Vector3d> local;     // cap-local unit vectors, axis = +z
  std::vector<Eigen::Vector3d> position;  // original coordinates, meters
  std::vector<std::array<int, 3>> faces;  // indices into the arrays above

  /// Cap-local polar angle and azimuth of vertex i.
  Direction local_direction(std::size_t i) const;
};

/// Throws DomainError if no face survives.
CroppedCap crop_cap(const SphereMap& map, const Direction& center, double half_angle,
                    const Direction& reference = Direction(0.0, kPi / 2.0));

/// Spiral layout of n near-equal-area directions in the cap around +z
/// (cap-local); n = 1 gives the cap center.
DirectionSet uniform_cap_grid(double half_angle, std::size_t n);

/// Containing triangle and barycentric weights for each grid direction,
/// located in the gnomonic plane of the cap (great-circle edges become
/// straight lines). Throws DomainError naming an uncovered direction.
struct CapLocation {
  std::vector<std::array<int, 3>> vertices;
  std::vector<Eigen::Vector3d> weights;
};
CapLocation locate_in_cap(const CroppedCap& cap, const DirectionSet& grid);

/// Barycentric interpolation of per-vertex values (one row per vertex).
Eigen::MatrixXd interpolate_field(const CroppedCap& cap, const DirectionSet& grid,
                                  const Eigen::MatrixXd& values);

struct EarPatch {
  CapSpec cap;
  DirectionSet grid;
  Eigen::MatrixXd samples_xyz;  // grid size x 3, meters
};

/// Resamples the original coordinates on the grid. Radius about the origin
/// and direction are interpolated separately, so surfaces of constant radius
/// are reproduced exactly.
EarPatch remesh_cap(const CroppedCap& cap, const DirectionSet& grid, const CapSpec& spec);

enum class EarSide { kLeft = 0, kRight = 1 };

struct EarFeatures {
  EarSide side = EarSide::kLeft;
  Eigen::MatrixXd sch_xyz;  // (K+1)^2 x 3
};

/// One cap fit per coordinate column.
EarFeatures ear_sch_features(const EarPatch& patch, EarSide side, const CapFitter& fitter);
EarFeatures ear_sch_features(const EarPatch& patch, EarSide side);

}  // namespace hrtfp
