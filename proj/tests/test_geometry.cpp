#include "doctest.h"

#include "hrtfp/anthro.hpp"
#include "hrtfp/ear_patch.hpp"
#include "hrtfp/errors.hpp"
#include "hrtfp/mesh.hpp"
#include "hrtfp/sphere_map.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace hrtfp;

namespace {

std::string to_text(const TriMesh& m) {
  std::ostringstream out;
  write_mesh(out, m);
  return out.str();
}

TriMesh parse(const std::string& text) {
  std::istringstream in(text);
  return read_mesh(in);
}

// Sphere of radius a with a raised cosine bump of height h and angular
// half-width w centered on `axis`.
TriMesh bumped_sphere(int level, double a, const Eigen::Vector3d& axis, double h, double w) {
  auto m = icosphere(level, a);
  for (auto& v : m.vertices) {
    const double g = std::acos(std::clamp(v.normalized().dot(axis), -1.0, 1.0));
    if (g < w) v *= (a + h * 0.5 * (1.0 + std::cos(kPi * g / w))) / a;
  }
  return m;
}

}  // namespace

TEST_CASE("mesh reader: icosahedron, sphere volume, orientation") {
  const auto ico = parse(to_text(icosphere(0)));
  CHECK(ico.vertices.size() == 12);
  CHECK(ico.faces.size() == 20);
  CHECK(ico.signed_volume() > 0.0);

  const auto sphere = parse(to_text(icosphere(4)));
  CHECK(sphere.vertices.size() == 2562);
  CHECK(sphere.signed_volume() == doctest::Approx(4.0 * kPi / 3.0).epsilon(0.02));

  // inward-facing input is flipped to outward
  auto inward = icosphere(1);
  for (auto& f : inward.faces) std::swap(f[0], f[1]);
  REQUIRE(inward.signed_volume() < 0.0);
  const auto fixed = parse(to_text(inward));
  CHECK(fixed.signed_volume() == doctest::Approx(-inward.signed_volume()));
}

TEST_CASE("mesh reader rejects malformed input and bad topology") {
  auto ico = icosphere(0);
  const auto removed = ico.faces.back();
  ico.faces.pop_back();
  try {
    parse(to_text(ico));
    FAIL("open mesh accepted");
  } catch (const TopologyError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("boundary") != std::string::npos);
    // the loop names exactly the three vertices of the missing face
    for (int v : removed) CHECK(msg.find(std::to_string(v + 1)) != std::string::npos);
  }

  auto dup = icosphere(0);
  dup.faces.push_back(dup.faces.front());
  CHECK_THROWS_AS(parse(to_text(dup)), TopologyError);

  auto flipped_one = icosphere(1);
  std::swap(flipped_one.faces[3][0], flipped_one.faces[3][1]);
  CHECK_THROWS_AS(parse(to_text(flipped_one)), TopologyError);

  CHECK_THROWS_AS(parse("v 0 0 0\nvt 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse("v 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse("v 0 0 0\nf 1 2\n"), ParseError);
  CHECK_THROWS_AS(parse("v 0 0 0 1\n"), ParseError);
  CHECK_THROWS_AS(parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"), TopologyError);
  CHECK_THROWS_AS(parse("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"), TopologyError);

  // two disjoint tetrahedra: Euler characteristic 4 -> rejected
  std::string two;
  for (int k = 0; k < 2; ++k) {
    two += "v " + std::to_string(3 * k) + " 0 0\nv " + std::to_string(3 * k + 1) +
           " 0 0\nv " + std::to_string(3 * k) + " 1 0\nv " + std::to_string(3 * k) + " 0 1\n";
  }
  for (int k = 0; k < 2; ++k) {
    const int o = 4 * k;
    for (auto f : {std::array<int, 3>{1, 3, 2}, {1, 2, 4}, {1, 4, 3}, {2, 3, 4}}) {
      two += "f " + std::to_string(f[0] + o) + " " + std::to_string(f[1] + o) + " " +
             std::to_string(f[2] + o) + "\n";
    }
  }
  CHECK_THROWS_AS(parse(two), TopologyError);
}

TEST_CASE("mesh file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "hrtfp_test_mesh.txt";
  const auto m = icosphere(2, 0.09);
  save_mesh(path, m);
  const auto back = load_mesh(path);
  REQUIRE(back.vertices.size() == m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(back.vertices[i] == m.vertices[i]);
  CHECK(back.faces == m.faces);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_mesh(path), IoError);
}

TEST_CASE("sphere map of a sphere is the identity") {
  // the icosahedron is symmetric enough that the identity is an exact
  // critical point of the discrete energy
  const auto ico = icosphere(0);
  const auto m0 = spherical_parameterize(ico);
  std::vector<Eigen::Vector3d> id;
  for (const auto& v : ico.vertices) id.push_back(v.normalized());
  CHECK(std::abs(harmonic_energy(ico, m0.unit_positions) - harmonic_energy(ico, id)) < 1e-8);
  for (std::size_t i = 0; i < id.size(); ++i) CHECK((m0.unit_positions[i] - id[i]).norm() < 1e-8);

  // a subdivided sphere moves only by its discretization error
  const auto s4 = icosphere(4);
  const auto m4 = spherical_parameterize(s4);
  id.clear();
  for (const auto& v : s4.vertices) id.push_back(v.normalized());
  const double e0 = harmonic_energy(s4, id);
  CHECK(std::abs(harmonic_energy(s4, m4.unit_positions) - e0) / e0 < 1e-7);
  double dev = 0.0;
  for (std::size_t i = 0; i < id.size(); ++i) dev = std::max(dev, (m4.unit_positions[i] - id[i]).norm());
  CHECK(dev < 1e-4);
  CHECK(count_flipped(s4, m4.unit_positions) == 0);
}

TEST_CASE("sphere map of an ellipsoid") {
  auto e = icosphere(4);
  for (auto& v : e.vertices) v = Eigen::Vector3d(v.x(), 0.8 * v.y(), 0.7 * v.z());
  const auto map = spherical_parameterize(e);
  CHECK(count_flipped(e, map.unit_positions) == 0);
  CHECK(image_centroid(e, map.unit_positions).norm() < 1e-6);
  for (const auto& u : map.unit_positions) CHECK(std::abs(u.norm() - 1.0) < 1e-9);
  CHECK(map.gradient_norm < 1e-6);
  CHECK_FALSE(map.used_uniform_fallback);
}

TEST_CASE("sphere map keeps a bump in one contiguous patch") {
  const Eigen::Vector3d axis(0.0, 1.0, 0.0);
  const double w = 0.35;
  const auto mesh = bumped_sphere(4, 0.0875, axis, 0.015, w);
  const auto map = spherical_parameterize(mesh);
  CHECK(count_flipped(mesh, map.unit_positions) == 0);
  CHECK(image_centroid(mesh, map.unit_positions).norm() < 1e-6);

  std::vector<char> in_bump(mesh.vertices.size(), 0);
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (std::acos(std::clamp(mesh.vertices[i].normalized().dot(axis), -1.0, 1.0)) < w) {
      in_bump[i] = 1;
      c += map.unit_positions[i];
    }
  }
  c.normalize();
  double inner = 0.0;
  double outer = kPi;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const double g = std::acos(std::clamp(map.unit_positions[i].dot(c), -1.0, 1.0));
    if (in_bump[i]) {
      inner = std::max(inner, g);
    } else {
      outer = std::min(outer, g);
    }
  }
  // the image of the bump is separated from the rest by a circle about c
  CHECK(inner < outer);

  // and is connected through mesh edges
  std::vector<int> comp(mesh.vertices.size(), -1);
  int components = 0;
  for (std::size_t s = 0; s < mesh.vertices.size(); ++s) {
    if (!in_bump[s] || comp[s] >= 0) continue;
    std::vector<int> stack{static_cast<int>(s)};
    comp[s] = components;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
          if (f[k] != v) continue;
          for (int n : {f[(k + 1) % 3], f[(k + 2) % 3]}) {
            if (in_bump[n] && comp[n] < 0) {
              comp[n] = components;
              stack.push_back(n);
            }
          }
        }
      }
    }
    ++components;
  }
  CHECK(components == 1);
}

TEST_CASE("map_direction and cap frame") {
  const auto mesh = icosphere(3, 0.09);
  const auto map = spherical_parameterize(mesh);
  for (const auto& d : {Direction::from_degrees(90, 0), Direction::from_degrees(17, -40),
                        Direction::from_degrees(250, 80)}) {
    CHECK(angular_distance(map_direction(map, d.unit_vector()), d) < 1e-4);
  }
  const auto f = cap_frame(Direction::from_degrees(90, 0), Direction(0.0, kPi / 2));
  CHECK((f * f.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(f.determinant() == doctest::Approx(1.0));
  CHECK((f.row(2).transpose() - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
  CHECK((f.row(0).transpose() - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);
  // reference parallel to the axis falls back to another tangent
  const auto g = cap_frame(Direction(0.0, kPi / 2), Direction(0.0, kPi / 2));
  CHECK((g * g.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("crop_cap") {
  const auto mesh = icosphere(4);
  const auto map = spherical_parameterize(mesh);
  const auto all = crop_cap(map, Direction::from_degrees(30, 10), kPi);
  CHECK(all.local.size() == mesh.vertices.size());
  CHECK(all.faces.size() == mesh.faces.size());

  const double ha = deg2rad(30.0);
  const auto cap = crop_cap(map, Direction::from_degrees(90, 0), ha);
  const double fraction = static_cast<double>(cap.local.size()) / mesh.vertices.size();
  CHECK(fraction == doctest::Approx((1.0 - std::cos(ha)) / 2.0).epsilon(0.2));
  for (std::size_t i = 0; i < cap.local.size(); ++i) {
    CHECK(cap.local_direction(i).polar() <= ha + 1e-12);
    CHECK((cap.position[i] - mesh.vertices[cap.source_vertex[i]]).norm() == 0.0);
  }
  CHECK_THROWS_AS(crop_cap(map, Direction(0.0, kPi / 2), 0.01), DomainError);
}

TEST_CASE("uniform_cap_grid") {
  const auto one = uniform_cap_grid(deg2rad(25.0), 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].polar() == 0.0);

  const double ha = deg2rad(25.0);
  const auto grid = uniform_cap_grid(ha, 9062);
  REQUIRE(grid.size() == 9062);
  std::vector<Eigen::Vector3d> p;
  for (const auto& d : grid) {
    CHECK(d.polar() <= ha + 1e-12);
    p.push_back(d.unit_vector());
  }
  std::vector<double> nn(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double best = -2.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j != i) best = std::max(best, p[i].dot(p[j]));
    }
    nn[i] = std::acos(std::min(best, 1.0));
  }
  const Eigen::Map<Eigen::VectorXd> v(nn.data(), static_cast<Eigen::Index>(nn.size()));
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().mean());
  CHECK(sd / mean < 0.25);
  CHECK(uniform_cap_grid(ha, 500).directions() == uniform_cap_grid(ha, 500).directions());
}

TEST_CASE("remesh_cap exactness") {
  const double r = 0.0875;
  const auto mesh = icosphere(4, r);
  const auto map = spherical_parameterize(mesh);
  const auto cap = crop_cap(map, Direction::from_degrees(90, 0), deg2rad(30.0));
  const CapSpec spec{deg2rad(25.0), 20};
  const auto grid = uniform_cap_grid(spec.half_angle, 2000);

  const auto patch = remesh_cap(cap, grid, spec);
  REQUIRE(patch.samples_xyz.rows() == 2000);
  for (Eigen::Index i = 0; i < patch.samples_xyz.rows(); ++i) {
    CHECK(std::abs(patch.samples_xyz.row(i).norm() - r) < 1e-9);
  }

  // grid points placed exactly on cropped vertices return the vertex
  std::vector<Direction> on_vertex;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < cap.local.size(); ++i) {
    const auto d = cap.local_direction(i);
    if (d.polar() < deg2rad(24.0)) {
      on_vertex.push_back(d);
      which.push_back(i);
    }
  }
  REQUIRE(on_vertex.size() > 20);
  const auto at_vertices = remesh_cap(cap, DirectionSet(on_vertex), spec);
  for (std::size_t k = 0; k < which.size(); ++k) {
    CHECK((at_vertices.samples_xyz.row(static_cast<Eigen::Index>(k)).transpose() -
           cap.position[which[k]]).norm() < 1e-15);
  }

  // fields linear in the gnomonic coordinates are reproduced
  Eigen::MatrixXd field(static_cast<Eigen::Index>(cap.local.size()), 2);
  auto plane = [](const Eigen::Vector3d& p) {
    return Eigen::Vector2d(0.3 + 1.7 * p.x() / p.z() - 0.4 * p.y() / p.z(),
                           -2.0 + 0.25 * p.y() / p.z());
  };
  for (std::size_t i = 0; i < cap.local.size(); ++i) {
    field.row(static_cast<Eigen::Index>(i)) = plane(cap.local[i]).transpose();
  }
  const auto interp = interpolate_field(cap, grid, field);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    worst = std::max(worst, (interp.row(static_cast<Eigen::Index>(i)).transpose() -
                             plane(grid[i].unit_vector())).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);

  CHECK_THROWS_AS(remesh_cap(cap, grid, {deg2rad(30.0), 20}), DomainError);
  CHECK_THROWS_AS(remesh_cap(cap, uniform_cap_grid(deg2rad(28.0), 50), spec), DomainError);
}

TEST_CASE("ear_sch_features round trip and zero patch") {
  const CapSpec spec{deg2rad(25.0), 20};
  const auto grid = uniform_cap_grid(spec.half_angle, 2500);
  const CapFitter fitter(cap_basis(spec, grid));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd q0(441, 3);
  for (auto& v : q0.reshaped()) v = nd(rng) * 1e-3;
  const EarPatch patch{spec, grid, fitter.basis().values * q0};
  const auto feats = ear_sch_features(patch, EarSide::kRight, fitter);
  CHECK(feats.side == EarSide::kRight);
  REQUIRE(feats.sch_xyz.rows() == 441);
  REQUIRE(feats.sch_xyz.cols() == 3);
  const Eigen::MatrixXd rec = fitter.basis().values * feats.sch_xyz;
  CHECK((rec - patch.samples_xyz).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((feats.sch_xyz - q0).norm() / q0.norm() < 1e-8);

  const EarPatch zero{spec, grid, Eigen::MatrixXd::Zero(2500, 3)};
  CHECK(ear_sch_features(zero, EarSide::kLeft, fitter).sch_xyz.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ear features of a bumped sphere") {
  const double a = 0.0875;
  const Eigen::Vector3d ear(0.0, 1.0, 0.0);
  const auto mesh = bumped_sphere(4, a, ear, 0.012, 0.3);
  const auto map = spherical_parameterize(mesh);
  const auto center = map_direction(map, ear);
  const auto cap = crop_cap(map, center, deg2rad(30.0), map_direction(map, Eigen::Vector3d::UnitZ()));
  const CapSpec spec{deg2rad(25.0), 20};
  const auto grid = uniform_cap_grid(spec.half_angle, 9062);
  const auto patch = remesh_cap(cap, grid, spec);
  const CapFitter fitter(cap_basis(spec, grid));
  const auto feats = ear_sch_features(patch, EarSide::kLeft, fitter);
  const Eigen::MatrixXd rec = fitter.basis().values * feats.sch_xyz;
  std::vector<double> dist(static_cast<std::size_t>(rec.rows()));
  for (Eigen::Index i = 0; i < rec.rows(); ++i) dist[i] = (rec.row(i) - patch.samples_xyz.row(i)).norm();
  const double mean = std::accumulate(dist.begin(), dist.end(), 0.0) / dist.size();
  std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
  const double median = dist[dist.size() / 2];
  MESSAGE("bump reconstruction mean " << mean * 1e3 << " mm, median " << median * 1e3 << " mm");
  CHECK(median < mean);
  CHECK(mean < 1e-3);
}

TEST_CASE("equivalent head radius and normalization factor") {
  auto rec = [](const std::string& id, double w, double h, double d) {
    return AnthroRecord{id, {"x1", "x2", "x3"}, Eigen::Vector3d(w, h, d)};
  };
  const auto ref = rec("ref", 0.18, 0.18, 0.18);
  CHECK(equivalent_head_radius(ref) == doctest::Approx(0.09581).epsilon(1e-12));
  CHECK(normalization_factor(ref, ref) == 1.0);

  const double r0 = equivalent_head_radius(ref);
  const double s = (1.1 * r0 - 0.032) / (r0 - 0.032);
  const auto big = rec("big", 0.18 * s, 0.18 * s, 0.18 * s);
  CHECK(normalization_factor(big, ref) == doctest::Approx(1.10).epsilon(1e-12));

  // scale covariance of the offset-free part
  const auto odd = rec("odd", 0.15, 0.21, 0.19);
  const auto odd3 = rec("odd3", 0.45, 0.63, 0.57);
  CHECK(equivalent_head_radius(odd3) - 0.032 ==
        doctest::Approx(3.0 * (equivalent_head_radius(odd) - 0.032)).epsilon(1e-12));

  HeadRadiusModel model;
  model.width = "x9";
  CHECK_THROWS_AS(equivalent_head_radius(ref, model), DomainError);
}

TEST_CASE("anthropometric CSV") {
  const auto path = std::filesystem::temp_directory_path() / "hrtfp_test_anthro.csv";
  std::vector<AnthroRecord> rows;
  for (int s = 0; s < 3; ++s) {
    AnthroRecord r{"S" + std::to_string(s), default_anthro_columns(), Eigen::VectorXd(13)};
    for (int i = 0; i < 13; ++i) r.values[i] = 0.01 * (i + 1) + 0.001 * s;
    rows.push_back(r);
  }
  write_anthro_csv(path, rows);
  const auto back = read_anthro_csv(path, {"x3", "x1"});
  REQUIRE(back.size() == 3);
  CHECK(back[2].subject_id == "S2");
  CHECK(back[2].get("x3") == doctest::Approx(0.032));
  CHECK(back[2].values[1] == doctest::Approx(0.012));
  CHECK_THROWS_AS(read_anthro_csv(path, {"x14"}), ParseError);
  {
    std::ofstream out(path);
    out << "subject_id,x1\nA,-0.1\n";
  }
  CHECK_THROWS_AS(read_anthro_csv(path, {"x1"}), ParseError);
  std::filesystem::remove(path);
}
