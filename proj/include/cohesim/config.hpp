#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cohesim/interface_geom.hpp"
#include "cohesim/macro_driver.hpp"
#include "cohesim/ruc.hpp"
#include "cohesim/sampling_db.hpp"

namespace cohesim {

/// One experiment definition: cell, interface, database recipe, load program
/// and network layout. All randomness is derived from the single root seed
/// through named streams ("ruc", "scramble", "transport"), so two configs
/// differing only in out_dir produce identical science.
struct RunConfig {
  std::string config_dir;  // directory the file was loaded from

  std::string matrix_file;
  std::string particle_file;  // empty: homogeneous cell

  int ruc_n = 8;
  double l_ruc_um = 100.0;
  int particle_count = 0;
  double particle_diameter_um = 0.0;

  std::array<Vec3, 4> control_points_mm{};
  int n_elements = 8;
  double l_c_um = 100.0;
  bool flip_normals = false;

  DbBuildParams database;      // gamma/seed stamped per query below
  std::vector<double> gammas;  // one database per tolerance
  int test_count = 200;        // independent directions for error evaluation

  LoadProgram program;

  int servers = 1;
  int workers_per_server = 1;
  bool threaded = false;

  std::uint64_t root_seed = 0;
  std::string out_dir = "out";

  /// Parses and validates a config file. Relative material paths resolve
  /// against the config's own directory. Throws ConfigError on any problem,
  /// including a missing seeds.root (wall-clock entropy is banned).
  static RunConfig load(const std::string& path);

  Ruc make_cell() const;
  InterfaceMesh make_mesh() const;
  DbBuildParams db_params(double gamma) const;
  std::uint64_t transport_seed() const;
  DriverNetConfig net_config() const;

  std::string database_dir() const { return out_dir + "/db"; }
  std::string db_path(double gamma) const;
  std::string audit_path(double gamma) const;
};

}  // namespace cohesim
