#pragma once

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace hrtfp {

/// Closed triangle mesh, coordinates in meters.
struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  double face_area(std::size_t f) const;
  /// Volume enclosed by the faces; positive for outward orientation.
  double signed_volume() const;
};

/// Checks indices, face areas (> 1e-12 m^2), two-manifold closed edges with
/// consistent orientation, a single connected component and Euler
/// characteristic 2. Flips every face if the signed volume is negative.
/// Throws TopologyError naming the offending element.
void validate_mesh(TriMesh& mesh);

/// ASCII "v x y z" / "f i j k" (1-based) reader; blank lines are skipped,
/// anything else is a ParseError. The result is validated.
TriMesh read_mesh(std::istream& in);
TriMesh load_mesh(const std::filesystem::path& path);

void write_mesh(std::ostream& out, const TriMesh& mesh);
void save_mesh(const std::filesystem::path& path, const TriMesh& mesh);

/// Icosahedron subdivided `level` times, vertices pushed to the sphere of the
/// given radius. 10 * 4^level + 2 vertices.
TriMesh icosphere(int level, double radius = 1.0);

}  // namespace hrtfp
