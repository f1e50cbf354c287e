#include "cohesim/ruc.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

#include "cohesim/errors.hpp"
#include "cohesim/log.hpp"
#include "cohesim/rng.hpp"

namespace cohesim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxPackableFractionPct = 30.0;
constexpr int kDrawsPerSphere = 5000;
constexpr int kRestartsPerCall = 40;
constexpr int kBandRetries = 20;
constexpr double kFractionBandPp = 1.5;

void feed(std::uint64_t& h, const void* data, std::size_t n) { h = fnv1a_bytes(data, n, h); }

void feed_double(std::uint64_t& h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  feed(h, &bits, sizeof bits);
}

void feed_material(std::uint64_t& h, const MaterialParams& m) {
  feed(h, m.name.data(), m.name.size());
  for (double v : {m.E, m.nu, m.mu, m.kappa, m.Y_in, m.p1, m.p2, m.mu_visc}) feed_double(h, v);
  const std::uint8_t d = m.damageable ? 1 : 0;
  feed(h, &d, 1);
}

}  // namespace

double ParticleSpec::requested_fraction_pct(double l_ruc_um) const {
  const double sphere = kPi / 6.0 * diameter_um * diameter_um * diameter_um;
  return 100.0 * count * sphere / (l_ruc_um * l_ruc_um * l_ruc_um);
}

Packing pack_particles(int count, double diameter_um, double l_ruc_um, double z_margin_um,
                       std::uint64_t seed) {
  if (count < 0) throw DomainError("particle count must be >= 0");
  Packing packing;
  packing.radius_um = diameter_um / 2.0;
  if (count == 0) return packing;
  if (diameter_um <= 0.0) throw DomainError("particle diameter must be > 0");

  const double r = packing.radius_um;
  const double lo_xy = r, hi_xy = l_ruc_um - r;
  const double lo_z = r + z_margin_um, hi_z = l_ruc_um - r - z_margin_um;
  if (hi_xy <= lo_xy || hi_z <= lo_z)
    throw PackingError("particle does not fit the cell interior");

  Rng rng(seed);
  const double d2 = diameter_um * diameter_um;
  for (int restart = 0; restart < kRestartsPerCall; ++restart) {
    packing.centers_um.clear();
    bool stuck = false;
    for (int p = 0; p < count && !stuck; ++p) {
      int draws = 0;
      for (;; ++draws) {
        if (draws == kDrawsPerSphere) {
          stuck = true;
          break;
        }
        const Vec3 c{rng.uniform(lo_xy, hi_xy), rng.uniform(lo_xy, hi_xy),
                     rng.uniform(lo_z, hi_z)};
        bool overlaps = false;
        for (const Vec3& o : packing.centers_um) {
          const Vec3 dv = c - o;
          if (dv.dot(dv) < d2) {
            overlaps = true;
            break;
          }
        }
        if (!overlaps) {
          packing.centers_um.push_back(c);
          break;
        }
      }
    }
    if (!stuck) return packing;
  }
  throw PackingError("sphere placement failed after bounded attempts");
}

std::vector<std::uint8_t> voxelize(const Packing& packing, int n, double l_ruc_um) {
  if (n <= 0) throw DomainError("grid resolution must be > 0");
  std::vector<std::uint8_t> map(static_cast<std::size_t>(n) * n * n, 0);
  const double h = l_ruc_um / n;
  const double r2 = packing.radius_um * packing.radius_um;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3 c{(i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h};
        for (const Vec3& o : packing.centers_um) {
          const Vec3 dv = c - o;
          if (dv.dot(dv) < r2) {
            map[(static_cast<std::size_t>(k) * n + j) * n + i] = 1;
            break;
          }
        }
      }
  return map;
}

double Ruc::phase_fraction_pct(std::uint8_t phase) const {
  std::size_t hits = 0;
  for (std::uint8_t p : phase_map)
    if (p == phase) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(phase_map.size());
}

double Ruc::mean_damage() const {
  double sum = 0.0;
  for (const DamageState& s : damage) sum += s.total();
  return sum / static_cast<double>(damage.size());
}

std::uint64_t Ruc::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const std::uint32_t nn = static_cast<std::uint32_t>(n);
  feed(h, &nn, sizeof nn);
  feed_double(h, l_ruc_um);
  feed_double(h, l_c_um);
  for (const MaterialParams& m : phases) feed_material(h, m);
  feed(h, phase_map.data(), phase_map.size());
  const std::int32_t count = particles.count;
  feed(h, &count, sizeof count);
  feed_double(h, particles.diameter_um);
  feed(h, &particles.seed, sizeof particles.seed);
  return h;
}

nlohmann::ordered_json Ruc::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["l_ruc_um"] = l_ruc_um;
  j["l_c_um"] = l_c_um;
  j["phases"] = nlohmann::ordered_json::array();
  for (const MaterialParams& m : phases) j["phases"].push_back(material_to_json(m));

  auto rle = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < phase_map.size();) {
    std::size_t run = i;
    while (run < phase_map.size() && phase_map[run] == phase_map[i]) ++run;
    rle.push_back({int(phase_map[i]), run - i});
    i = run;
  }
  j["phase_map_rle"] = std::move(rle);

  auto damage_rle = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < damage.size();) {
    std::size_t run = i;
    while (run < damage.size() && damage[run] == damage[i]) ++run;
    const DamageState& s = damage[i];
    damage_rle.push_back({run - i, s.omega_d, s.omega_v, s.kappa_d, s.kappa_v});
    i = run;
  }
  j["damage_rle"] = std::move(damage_rle);

  j["particles"] = {{"count", particles.count},
                    {"diameter_um", particles.diameter_um},
                    {"seed", std::to_string(particles.seed)}};
  auto centers = nlohmann::ordered_json::array();
  for (const Vec3& c : particle_centers_um) centers.push_back({c[0], c[1], c[2]});
  j["particle_centers_um"] = std::move(centers);
  j["fingerprint"] = fingerprint();
  return j;
}

Ruc Ruc::from_json(const nlohmann::ordered_json& j) {
  Ruc ruc;
  try {
    ruc.n = j.at("n").get<int>();
    ruc.l_ruc_um = j.at("l_ruc_um").get<double>();
    ruc.l_c_um = j.at("l_c_um").get<double>();
    for (const auto& m : j.at("phases")) ruc.phases.push_back(material_from_json(m));
    for (const auto& run : j.at("phase_map_rle")) {
      const int phase = run.at(0).get<int>();
      const std::size_t len = run.at(1).get<std::size_t>();
      ruc.phase_map.insert(ruc.phase_map.end(), len, static_cast<std::uint8_t>(phase));
    }
    for (const auto& run : j.at("damage_rle")) {
      DamageState s;
      const std::size_t len = run.at(0).get<std::size_t>();
      s.omega_d = run.at(1).get<double>();
      s.omega_v = run.at(2).get<double>();
      s.kappa_d = run.at(3).get<double>();
      s.kappa_v = run.at(4).get<double>();
      ruc.damage.insert(ruc.damage.end(), len, s);
    }
    const auto& pj = j.at("particles");
    ruc.particles.count = pj.at("count").get<int>();
    ruc.particles.diameter_um = pj.at("diameter_um").get<double>();
    const std::string seed_str = pj.at("seed").get<std::string>();
    std::uint64_t seed = 0;
    const auto res = std::from_chars(seed_str.data(), seed_str.data() + seed_str.size(), seed);
    if (res.ec != std::errc{}) throw ConfigError("cell: bad particle seed " + seed_str);
    ruc.particles.seed = seed;
    for (const auto& c : j.at("particle_centers_um"))
      ruc.particle_centers_um.push_back(
          {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cell definition: ") + e.what());
  }
  const std::size_t v = static_cast<std::size_t>(ruc.n) * ruc.n * ruc.n;
  if (ruc.phase_map.size() != v || ruc.damage.size() != v)
    throw ConfigError("cell definition: voxel array length disagrees with grid");
  if (j.contains("fingerprint") && j.at("fingerprint").get<std::uint64_t>() != ruc.fingerprint())
    throw ConfigError("cell definition: fingerprint mismatch");
  return ruc;
}

Ruc make_ruc(const RucSpec& spec) {
  if (spec.n <= 0) throw DomainError("grid resolution must be > 0");
  if (spec.l_ruc_um <= 0.0) throw DomainError("cell edge length must be > 0");
  if (spec.l_c_um <= 0.0) throw DomainError("layer thickness must be > 0");

  Ruc ruc;
  ruc.n = spec.n;
  ruc.l_ruc_um = spec.l_ruc_um;
  ruc.l_c_um = spec.l_c_um;
  ruc.particles = spec.particles;
  ruc.damage.assign(static_cast<std::size_t>(spec.n) * spec.n * spec.n, DamageState{});

  if (spec.particles.count == 0) {
    ruc.phases = {spec.matrix};
    ruc.phase_map.assign(ruc.damage.size(), 0);
    return ruc;
  }

  ruc.phases = {spec.matrix, spec.particle};
  const double requested = spec.particles.requested_fraction_pct(spec.l_ruc_um);
  if (requested > kMaxPackableFractionPct)
    throw PackingError("requested particle fraction exceeds the packing limit");

  // One voxel layer of matrix on the +-Y3 faces for the coarsest grid in use.
  const double z_margin = spec.l_ruc_um / 8.0;
  const std::uint64_t stream = derive_stream(spec.particles.seed, "packing");
  for (int attempt = 0; attempt < kBandRetries; ++attempt) {
    const Packing packing = pack_particles(spec.particles.count, spec.particles.diameter_um,
                                           spec.l_ruc_um, z_margin, stream + attempt);
    ruc.phase_map = voxelize(packing, spec.n, spec.l_ruc_um);
    const double achieved = ruc.phase_fraction_pct(1);
    if (std::abs(achieved - requested) <= kFractionBandPp) {
      ruc.particle_centers_um = packing.centers_um;
      // The margin construction keeps bond faces matrix; check anyway.
      for (int jj = 0; jj < spec.n; ++jj)
        for (int ii = 0; ii < spec.n; ++ii)
          if (ruc.phase_map[ruc.index(ii, jj, 0)] != 0 ||
              ruc.phase_map[ruc.index(ii, jj, spec.n - 1)] != 0)
            throw PackingError("particle voxel reached a bond face");
      return ruc;
    }
    COHESIM_LOG_DEBUG("packing attempt %d: fraction %.2f%% outside band around %.2f%%", attempt,
                      achieved, requested);
  }
  throw PackingError("voxelized particle fraction never reached the requested band");
}

}  // namespace cohesim
