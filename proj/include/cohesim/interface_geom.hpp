#pragma once

#include <array>
#include <vector>

#include "cohesim/model.hpp"
#include "cohesim/tensor.hpp"
#include "json.hpp"

namespace cohesim {

/// One cohesive element along the interface arc. Geometry is immutable after
/// construction; jump and model are mutated by the macro driver only.
struct CohesiveElement {
  int id = 0;
  Vec3 centroid_mm;
  Vec3 normal;          // unit, points from the - adherend to the + adherend
  Vec3 tangent_seed;    // unit X1 used to build the rotation
  double area_mm2 = 0.0;
  double arc_s = 0.0;   // normalized arc-length position in [0, 1]
  Tensor3 rotation;     // rows (Y1*, N x Y1*, N); maps global to cell frame

  Vec3 jump_um;                       // current displacement jump
  MicroModel model = MicroModel::TM;  // current assignment
  int ruc_id = 0;
};

struct InterfaceMesh {
  std::vector<CohesiveElement> elements;  // ordered by arc length
  std::array<Vec3, 4> control_points_mm{};
  double l_c_um = 0.0;
  double total_arc_mm = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Frame rotation from the interface normal and a tangent seed: projects X1
/// off N (the drift-eliminating step), then rows are (Y1*, N x Y1*, N). The
/// third row stores N verbatim.
Tensor3 rotation_from_normal(const Vec3& N, const Vec3& X1);

/// Discretizes a cubic Bezier arc into n_elements cohesive elements at
/// uniform parameter midpoints. Normals follow the in-plane convention
/// (tangent rotated a quarter turn about the curve plane's depth axis);
/// flip_normals negates them. Throws when the control polygon is degenerate
/// or when the discretization leaves neighbor normals more than 10 degrees
/// apart.
InterfaceMesh bezier_interface(const std::array<Vec3, 4>& control_points_mm, int n_elements,
                               double l_c_um, bool flip_normals = false);

}  // namespace cohesim
