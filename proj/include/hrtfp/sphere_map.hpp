#pragma once

#include "hrtfp/mesh.hpp"

#include <Eigen/Core>

#include <vector>

namespace hrtfp {

struct ParameterizeOptions {
  int max_iterations = 20000;
  /// Stop once the largest per-vertex update of a sweep, in radians, drops
  /// below this.
  double tolerance = 1e-6;
  /// Cotangent weights (negative ones clamped to zero); uniform graph
  /// weights otherwise.
  bool cotangent_weights = true;
};

/// Per-vertex image of a genus-0 mesh on the unit sphere.
struct SphereMap {
  TriMesh mesh;
  std::vector<Eigen::Vector3d> unit_positions;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool used_uniform_fallback = false;
};

/// Harmonic map to the unit sphere: Gauss-Seidel on the weighted Dirichlet
/// energy with projection back to the sphere, followed each sweep by a
/// Moebius transformation that moves the area centroid of the image to the
/// origin. Starts from the central projection about the surface centroid.
/// If the cotangent result has flipped triangles the solve is repeated with
/// uniform weights; throws TopologyError if flips remain and
/// ConvergenceError if the iteration cap is hit.
SphereMap spherical_parameterize(const TriMesh& mesh, ParameterizeOptions options = {});

/// Symmetric edge weights as CSR rows (neighbor, weight), one row per vertex.
struct EdgeWeights {
  std::vector<int> offsets;
  std::vector<int> neighbors;
  std::vector<double> weights;
};
EdgeWeights edge_weights(const TriMesh& mesh, bool cotangent);

/// 1/2 sum over edges of w_ij |u_i - u_j|^2 with the mesh's cotangent weights.
double harmonic_energy(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& positions);

/// Triangles whose image has negative orientation det(u_a, u_b, u_c) <= 0.
int count_flipped(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& positions);

/// Area-weighted centroid of the flat image triangles.
Eigen::Vector3d image_centroid(const TriMesh& mesh, const std::vector<Eigen::Vector3d>& positions);

}  // namespace hrtfp
