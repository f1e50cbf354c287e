#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cohesim/material.hpp"
#include "cohesim/tensor.hpp"
#include "json.hpp"

namespace cohesim {

/// Spherical filler particles placed by random sequential addition.
struct ParticleSpec {
  int count = 0;
  double diameter_um = 0.0;
  std::uint64_t seed = 0;

  /// Geometric volume fraction implied by count and diameter, in percent.
  double requested_fraction_pct(double l_ruc_um) const;
};

/// Non-overlapping sphere centers in continuous coordinates. Packing is done
/// once in continuous space and voxelized per grid, so refining the grid does
/// not move the particles.
struct Packing {
  std::vector<Vec3> centers_um;
  double radius_um = 0.0;
};

/// Places `count` spheres of the given diameter in an l_ruc^3 cell. Spheres
/// stay fully inside the lateral bounds and keep a z_margin of matrix between
/// the sphere surface and the +-Y3 faces. Deterministic given the seed.
/// Throws PackingError when no placement is found within bounded attempts.
Packing pack_particles(int count, double diameter_um, double l_ruc_um, double z_margin_um,
                       std::uint64_t seed);

/// Phase id per voxel: 0 = matrix, 1 = particle. A voxel is particle when its
/// center lies strictly inside a sphere.
std::vector<std::uint8_t> voxelize(const Packing& packing, int n, double l_ruc_um);

struct RucSpec {
  int n = 10;              // voxels per edge
  double l_ruc_um = 100.0; // cell edge length
  double l_c_um = 100.0;   // interface layer thickness
  MaterialParams matrix;
  MaterialParams particle; // ignored when particles.count == 0
  ParticleSpec particles;
};

/// Voxelized representative unit cell: geometry, per-phase materials and the
/// per-voxel damage field. The damage field is the only mutable part; it is
/// carried across macro steps regardless of which micro model updated it.
struct Ruc {
  int n = 0;
  double l_ruc_um = 0.0;
  double l_c_um = 0.0;
  std::vector<std::uint8_t> phase_map;  // n^3, voxel (i,j,k) at (k*n + j)*n + i
  std::vector<MaterialParams> phases;   // phase id -> material
  std::vector<DamageState> damage;      // n^3
  ParticleSpec particles;
  std::vector<Vec3> particle_centers_um;

  int voxel_count() const { return n * n * n; }
  int index(int i, int j, int k) const { return (k * n + j) * n + i; }
  double voxel_edge_um() const { return l_ruc_um / n; }

  /// Fraction of voxels carrying the given phase id, in percent.
  double phase_fraction_pct(std::uint8_t phase) const;

  /// Mean of DamageState::total() over all voxels.
  double mean_damage() const;

  /// Grid, materials and phase layout (not damage): two cells agree exactly
  /// when a database trained on one is valid for the other.
  std::uint64_t fingerprint() const;

  nlohmann::ordered_json to_json() const;
  static Ruc from_json(const nlohmann::ordered_json& j);
};

/// Builds a cell from the spec: packs particles (retrying with fresh substreams
/// until the voxelized volume fraction lands within 1.5 percentage points of
/// the requested one), voxelizes, and initializes pristine damage.
/// Throws PackingError when packing or the volume-fraction band fails, and
/// DomainError on invalid dimensions.
Ruc make_ruc(const RucSpec& spec);

}  // namespace cohesim
