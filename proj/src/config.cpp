#include "cohesim/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cohesim/errors.hpp"
#include "cohesim/rng.hpp"
#include "json.hpp"

namespace cohesim {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const json& require(const json& j, const char* key, const char* section) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError(std::string("config: missing ") + section + "." + key);
  }
  return *it;
}

double positive(const json& j, const char* key, const char* section) {
  double v = require(j, key, section).get<double>();
  if (!(v > 0.0)) {
    throw ConfigError(std::string("config: ") + section + "." + key + " must be positive");
  }
  return v;
}

// Seeds may not fit in a double, so large values travel as decimal strings.
std::uint64_t seed_value(const json& j, const char* key, const char* section) {
  const json& v = require(j, key, section);
  if (v.is_string()) {
    try {
      return std::stoull(v.get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError(std::string("config: ") + section + "." + key + " is not a decimal seed");
    }
  }
  if (v.is_number_unsigned() || v.is_number_integer()) {
    return v.get<std::uint64_t>();
  }
  throw ConfigError(std::string("config: ") + section + "." + key + " must be an integer or string");
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  fs::path p{path};
  if (p.is_absolute()) return path;
  return (fs::path{base_dir} / p).lexically_normal().string();
}

std::string gamma_tag(double gamma) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", gamma);
  return buf;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }

  try {
    RunConfig cfg;
    cfg.config_dir = fs::path{path}.parent_path().string();
    if (cfg.config_dir.empty()) cfg.config_dir = ".";

    if (require(j, "schema", "").get<std::string>() != "cohesim-run-1") {
      throw ConfigError("config: unknown schema tag, expected cohesim-run-1");
    }

    const json& mats = require(j, "materials", "");
    cfg.matrix_file = resolve(cfg.config_dir, require(mats, "matrix", "materials").get<std::string>());
    if (mats.contains("particle")) {
      cfg.particle_file = resolve(cfg.config_dir, mats.at("particle").get<std::string>());
    }

    const json& ruc = require(j, "ruc", "");
    cfg.ruc_n = require(ruc, "n", "ruc").get<int>();
    cfg.l_ruc_um = positive(ruc, "l_ruc_um", "ruc");
    cfg.particle_count = ruc.value("particle_count", 0);
    cfg.particle_diameter_um = ruc.value("particle_diameter_um", 0.0);
    if (cfg.ruc_n < 2) throw ConfigError("config: ruc.n must be at least 2");
    if (cfg.particle_count < 0) throw ConfigError("config: ruc.particle_count must be nonnegative");
    if (cfg.particle_count > 0) {
      if (cfg.particle_file.empty()) {
        throw ConfigError("config: ruc.particle_count > 0 needs materials.particle");
      }
      if (!(cfg.particle_diameter_um > 0.0)) {
        throw ConfigError("config: ruc.particle_diameter_um must be positive");
      }
    }

    const json& iface = require(j, "interface", "");
    const json& cps = require(iface, "control_points_mm", "interface");
    if (!cps.is_array() || cps.size() != 4) {
      throw ConfigError("config: interface.control_points_mm needs exactly 4 points");
    }
    for (int p = 0; p < 4; ++p) {
      const json& pt = cps.at(p);
      if (!pt.is_array() || pt.size() != 3) {
        throw ConfigError("config: interface control point must be [x, y, z]");
      }
      cfg.control_points_mm[p] = Vec3{pt.at(0).get<double>(), pt.at(1).get<double>(),
                                      pt.at(2).get<double>()};
    }
    cfg.n_elements = require(iface, "n_elements", "interface").get<int>();
    cfg.l_c_um = positive(iface, "l_c_um", "interface");
    cfg.flip_normals = iface.value("flip_normals", false);
    if (cfg.n_elements < 1) throw ConfigError("config: interface.n_elements must be positive");

    const json& db = require(j, "database", "");
    cfg.database.lambda_um = positive(db, "lambda_um", "database");
    cfg.database.n_segments = require(db, "n_segments", "database").get<int>();
    cfg.database.n_training = require(db, "n_training", "database").get<int>();
    cfg.database.loading_rate_per_s = db.value("loading_rate_per_s", 1.0);
    cfg.database.max_build_seconds = db.value("max_build_seconds", 0.0);
    std::string phi = db.value("phi_range", std::string{"full"});
    if (phi == "full") {
      cfg.database.phi_range = 0.0;
    } else if (phi == "reduced") {
      cfg.database.phi_range = std::acos(-1.0) / 4.0;
    } else {
      throw ConfigError("config: database.phi_range must be \"full\" or \"reduced\"");
    }
    if (db.contains("svr")) {
      const json& svr = db.at("svr");
      cfg.database.svr_c = svr.value("C", cfg.database.svr_c);
      cfg.database.svr_epsilon = svr.value("epsilon", cfg.database.svr_epsilon);
      cfg.database.svr_sigma = svr.value("sigma", cfg.database.svr_sigma);
    }
    const json& gammas = require(db, "gammas", "database");
    if (!gammas.is_array() || gammas.empty()) {
      throw ConfigError("config: database.gammas must be a nonempty array");
    }
    for (const json& g : gammas) cfg.gammas.push_back(g.get<double>());
    cfg.test_count = db.value("test_count", 200);
    if (cfg.test_count < 0) throw ConfigError("config: database.test_count must be nonnegative");

    const json& prog = require(j, "program", "");
    cfg.program.delta_max_mm = positive(prog, "delta_max_mm", "program");
    cfg.program.steps = require(prog, "steps", "program").get<int>();
    cfg.program.rate_cap_per_s = prog.value("rate_cap_per_s", 1.0);
    cfg.program.shear_mix = prog.value("shear_mix", 0.0);
    cfg.program.initial_crack_s = prog.value("initial_crack_s", 0.35);

    if (j.contains("msnet")) {
      const json& net = j.at("msnet");
      cfg.servers = net.value("servers", 1);
      cfg.workers_per_server = net.value("workers_per_server", 1);
      cfg.threaded = net.value("threaded", false);
    }
    if (cfg.servers < 1 || cfg.workers_per_server < 1) {
      throw ConfigError("config: msnet.servers and msnet.workers_per_server must be positive");
    }

    cfg.root_seed = seed_value(require(j, "seeds", ""), "root", "seeds");
    cfg.out_dir = j.value("out_dir", std::string{"out"});

    for (const std::string& f : {cfg.matrix_file, cfg.particle_file}) {
      if (!f.empty() && !fs::exists(f)) {
        throw ConfigError("config: material file not found: " + f);
      }
    }

    // Fail on bad program / database numbers now, not mid-build.
    cfg.program.validate();
    cfg.db_params(cfg.gammas.front()).validate();
    for (double g : cfg.gammas) {
      if (!(g > 0.0) || !(g < 1.0)) {
        throw ConfigError("config: database.gammas entries must lie in (0, 1)");
      }
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
}

Ruc RunConfig::make_cell() const {
  RucSpec spec;
  spec.n = ruc_n;
  spec.l_ruc_um = l_ruc_um;
  spec.l_c_um = l_c_um;
  spec.matrix = load_material(matrix_file);
  spec.particle = particle_file.empty() ? spec.matrix : load_material(particle_file);
  spec.particles.count = particle_count;
  spec.particles.diameter_um = particle_diameter_um;
  spec.particles.seed = derive_stream(root_seed, "ruc");
  return make_ruc(spec);
}

InterfaceMesh RunConfig::make_mesh() const {
  return bezier_interface(control_points_mm, n_elements, l_c_um, flip_normals);
}

DbBuildParams RunConfig::db_params(double gamma) const {
  DbBuildParams p = database;
  p.gamma = gamma;
  p.seed = derive_stream(root_seed, "scramble");
  return p;
}

std::uint64_t RunConfig::transport_seed() const { return derive_stream(root_seed, "transport"); }

DriverNetConfig RunConfig::net_config() const {
  DriverNetConfig net;
  net.servers = servers;
  net.workers_per_server = workers_per_server;
  net.threaded = threaded;
  net.transport_seed = transport_seed();
  return net;
}

std::string RunConfig::db_path(double gamma) const {
  return database_dir() + "/db_gamma_" + gamma_tag(gamma) + ".json";
}

std::string RunConfig::audit_path(double gamma) const {
  return database_dir() + "/audit_gamma_" + gamma_tag(gamma) + ".csv";
}

}  // namespace cohesim
