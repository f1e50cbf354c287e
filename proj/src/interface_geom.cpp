#include "cohesim/interface_geom.hpp"

#include <cmath>

#include "cohesim/errors.hpp"

namespace cohesim {

namespace {

Vec3 bezier_point(const std::array<Vec3, 4>& p, double t) {
  const double u = 1.0 - t;
  return p[0] * (u * u * u) + p[1] * (3.0 * u * u * t) + p[2] * (3.0 * u * t * t) +
         p[3] * (t * t * t);
}

Vec3 bezier_tangent(const std::array<Vec3, 4>& p, double t) {
  const double u = 1.0 - t;
  return (p[1] - p[0]) * (3.0 * u * u) + (p[2] - p[1]) * (6.0 * u * t) +
         (p[3] - p[2]) * (3.0 * t * t);
}

/// Depth axis of the (nearly) planar control polygon; falls back to a global
/// reference when the polygon is collinear so straight interfaces still get a
/// well-defined convention.
Vec3 plane_depth_axis(const std::array<Vec3, 4>& p) {
  const Vec3 c1 = p[1] - p[0];
  const Vec3 c2 = p[3] - p[0];
  const Vec3 c3 = p[2] - p[0];
  Vec3 n = c1.cross(c2);
  if (n.norm() < 1e-12) n = c1.cross(c3);
  if (n.norm() < 1e-12) n = c2.cross(c3);
  if (n.norm() >= 1e-12) return n.normalized();
  // Collinear polygon: pick the least-aligned global axis as depth.
  Vec3 dir = c2;
  if (dir.norm() < 1e-12) dir = c1;
  if (dir.norm() < 1e-12) throw DomainError("bezier_interface: degenerate control polygon");
  dir = dir.normalized();
  const Vec3 ref = std::abs(dir.dot({0.0, 1.0, 0.0})) < 0.9 ? Vec3{0.0, 1.0, 0.0}
                                                            : Vec3{0.0, 0.0, 1.0};
  return (ref - dir * ref.dot(dir)).normalized();
}

/// Arc length of the curve over [t0, t1] by 5-point Gauss-Legendre on
/// subdivisions; exact to well below 1e-10 for cubics at this density.
double arc_length(const std::array<Vec3, 4>& p, double t0, double t1, int subdivisions = 20) {
  static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                               0.5384693101056831, 0.9061798459386640};
  static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
  double total = 0.0;
  const double h = (t1 - t0) / subdivisions;
  for (int s = 0; s < subdivisions; ++s) {
    const double a = t0 + s * h;
    const double mid = a + 0.5 * h;
    for (int g = 0; g < 5; ++g)
      total += 0.5 * h * wg[g] * bezier_tangent(p, mid + 0.5 * h * xg[g]).norm();
  }
  return total;
}

}  // namespace

Tensor3 rotation_from_normal(const Vec3& N, const Vec3& X1) {
  if (std::abs(N.norm() - 1.0) > 1e-12) throw DomainError("rotation_from_normal: N not unit");
  if (std::abs(X1.norm() - 1.0) > 1e-12) throw DomainError("rotation_from_normal: X1 not unit");
  const double align = X1.dot(N);
  if (std::abs(align) >= 1.0 - 1e-9)
    throw DomainError("rotation_from_normal: X1 parallel to N (degenerate frame)");
  const Vec3 y1 = (X1 - N * align).normalized();
  return Tensor3::from_rows(y1, N.cross(y1), N);
}

nlohmann::ordered_json InterfaceMesh::to_json() const {
  nlohmann::ordered_json j;
  auto cp = nlohmann::ordered_json::array();
  for (const auto& p : control_points_mm) cp.push_back({p[0], p[1], p[2]});
  j["control_points_mm"] = std::move(cp);
  j["l_c_um"] = l_c_um;
  j["total_arc_mm"] = total_arc_mm;
  auto els = nlohmann::ordered_json::array();
  for (const auto& e : elements) {
    els.push_back({{"id", e.id},
                   {"s", e.arc_s},
                   {"centroid_mm", {e.centroid_mm[0], e.centroid_mm[1], e.centroid_mm[2]}},
                   {"normal", {e.normal[0], e.normal[1], e.normal[2]}},
                   {"area_mm2", e.area_mm2}});
  }
  j["elements"] = std::move(els);
  return j;
}

InterfaceMesh bezier_interface(const std::array<Vec3, 4>& control_points_mm, int n_elements,
                               double l_c_um, bool flip_normals) {
  if (n_elements < 1) throw DomainError("bezier_interface: n_elements must be >= 1");
  if (!(l_c_um > 0.0)) throw DomainError("bezier_interface: l_c must be positive");

  const auto& cp = control_points_mm;
  const double total = arc_length(cp, 0.0, 1.0);
  if (!(total > 1e-12)) throw DomainError("bezier_interface: zero-length curve");

  const Vec3 depth = plane_depth_axis(cp);

  InterfaceMesh mesh;
  mesh.control_points_mm = cp;
  mesh.l_c_um = l_c_um;
  mesh.total_arc_mm = total;
  mesh.elements.reserve(static_cast<std::size_t>(n_elements));

  double arc_before = 0.0;
  for (int e = 0; e < n_elements; ++e) {
    const double t0 = static_cast<double>(e) / n_elements;
    const double t1 = static_cast<double>(e + 1) / n_elements;
    const double tm = 0.5 * (t0 + t1);
    const double seg_len = arc_length(cp, t0, t1);
    const double mid_len = arc_before + arc_length(cp, t0, tm);

    CohesiveElement el;
    el.id = e;
    el.centroid_mm = bezier_point(cp, tm);
    const Vec3 tangent = bezier_tangent(cp, tm).normalized();
    Vec3 normal = tangent.cross(depth).normalized();
    if (flip_normals) normal = -normal;
    el.normal = normal;
    el.area_mm2 = seg_len * 1.0;  // unit depth
    el.arc_s = mid_len / total;

    Vec3 seed{1.0, 0.0, 0.0};
    if (std::abs(seed.dot(normal)) >= 1.0 - 1e-9) seed = tangent;
    el.tangent_seed = seed;
    el.rotation = rotation_from_normal(normal, seed);
    mesh.elements.push_back(el);
    arc_before += seg_len;
  }

  for (std::size_t e = 1; e < mesh.elements.size(); ++e) {
    const double c = mesh.elements[e - 1].normal.dot(mesh.elements[e].normal);
    if (std::acos(std::min(1.0, std::max(-1.0, c))) > 10.0 * M_PI / 180.0)
      throw DomainError("bezier_interface: neighbor normals differ by more than 10 degrees; "
                        "increase n_elements");
  }
  return mesh;
}

}  // namespace cohesim
