#include "cohesim/material.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cohesim/errors.hpp"
#include "cohesim/log.hpp"
#include "json.hpp"

namespace cohesim {

namespace {
constexpr double kOmegaCap = 1.0 - 1e-9;
}

void MaterialParams::validate() const {
  if (!(E > 0.0) || !(mu > 0.0) || !(kappa > 0.0))
    throw DomainError("material '" + name + "': moduli must be positive");
  if (!(nu > 0.0 && nu < 0.5))
    throw DomainError("material '" + name + "': nu must lie in (0, 0.5)");
  if (!(Y_in >= 0.0) || !(mu_visc >= 0.0))
    throw DomainError("material '" + name + "': Y_in and mu_visc must be nonnegative");
  if (damageable) {
    if (!(Y_in > 0.0)) throw DomainError("material '" + name + "': Y_in must be positive");
    if (!(p1 > 0.0) || !(p2 > 0.0))
      throw DomainError("material '" + name + "': p1, p2 must be positive");
    if (!(mu_visc > 0.0)) throw DomainError("material '" + name + "': mu_visc must be positive");
  }
  const double kappa_from_E = E / (3.0 * (1.0 - 2.0 * nu));
  if (std::abs(kappa - kappa_from_E) / kappa > 0.01)
    COHESIM_LOG_WARN("material '%s': kappa=%g inconsistent with E/(3(1-2nu))=%g", name.c_str(),
                     kappa, kappa_from_E);
}

double DamageState::total() const {
  return std::sqrt(omega_d * omega_d + omega_v * omega_v) / std::sqrt(2.0);
}

double dev_energy(const Tensor3& C_hat, double mu) {
  if (!C_hat.is_spd(1e-9)) throw DomainError("dev_energy: C_hat is not SPD");
  const double d = C_hat.det();
  if (std::abs(d - 1.0) > 1e-8) throw DomainError("dev_energy: C_hat is not unimodular");
  return 0.5 * mu * (C_hat.trace() - 3.0);
}

double vol_energy(double J, double kappa) {
  if (!(J > 0.0)) throw DomainError("vol_energy: J must be positive");
  return 0.5 * kappa * (std::exp(J - 1.0) - std::log(J) - 1.0);
}

Tensor3 unimodular(const Tensor3& C) {
  const double d = C.det();
  if (!(d > 0.0)) throw DomainError("unimodular: det C must be positive");
  return std::pow(d, -1.0 / 3.0) * C;
}

Tensor3 pk2_stress(const Tensor3& C, const DamageState& damage, const MaterialParams& p) {
  if (!C.is_spd(1e-9)) throw DomainError("pk2_stress: C is not SPD");
  const double detC = C.det();
  const double J = std::sqrt(detC);
  const double a = std::pow(detC, -1.0 / 3.0);
  const Tensor3 Cinv = C.inverse();
  const Tensor3 I = Tensor3::identity();

  // S_dev = mu det(C)^(-1/3) (I - tr(C)/3 C^-1): push of the isochoric energy.
  const Tensor3 S_dev = (p.mu * a) * (I - (C.trace() / 3.0) * Cinv);
  // S_vol = U'(J) J C^-1 with U'(J) = kappa/2 (exp(J-1) - 1/J).
  const double UpJ = 0.5 * p.kappa * (J * std::exp(J - 1.0) - 1.0);
  const Tensor3 S_vol = UpJ * Cinv;

  return (1.0 - damage.omega_d) * S_dev + (1.0 - damage.omega_v) * S_vol;
}

void pk2_stress_tangent(const Tensor3& C, const DamageState& damage, const MaterialParams& p,
                        Tensor3& S, Tangent4& CC) {
  if (!C.is_spd(1e-9)) throw DomainError("pk2_stress_tangent: C is not SPD");
  const double detC = C.det();
  const double J = std::sqrt(detC);
  const double a = std::pow(detC, -1.0 / 3.0);
  const double t = C.trace();
  const Tensor3 Cinv = C.inverse();
  const Tensor3 I = Tensor3::identity();

  const double gd = (1.0 - damage.omega_d) * p.mu;
  const double gv = 1.0 - damage.omega_v;
  const double q = 0.5 * p.kappa * (J * std::exp(J - 1.0) - 1.0);       // U'(J) J
  const double dq_dJ = 0.5 * p.kappa * std::exp(J - 1.0) * (1.0 + J);  // d(U'J)/dJ

  S = gd * a * (I - (t / 3.0) * Cinv) + (gv * q) * Cinv;

  // CC_ijkl = 2 dS_ij / dC_kl, assembled from the closed forms
  //   dS_dev/dC = mu a [ -(1/3) Cinv_kl (I - t/3 Cinv)_ij - (1/3) delta_kl Cinv_ij
  //               + (t/6)(Cinv_ik Cinv_jl + Cinv_il Cinv_jk) ]
  //   dS_vol/dC = (J/2) dq_dJ Cinv_ij Cinv_kl - (q/2)(Cinv_ik Cinv_jl + Cinv_il Cinv_jk)
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double dev_ij = I(i, j) - (t / 3.0) * Cinv(i, j);
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          const double CiCk = Cinv(i, k) * Cinv(j, l) + Cinv(i, l) * Cinv(j, k);
          double d_dev = gd * a *
                         (-(1.0 / 3.0) * Cinv(k, l) * dev_ij - (1.0 / 3.0) * I(k, l) * Cinv(i, j) +
                          (t / 6.0) * CiCk);
          double d_vol = gv * (0.5 * J * dq_dJ * Cinv(i, j) * Cinv(k, l) - 0.5 * q * CiCk);
          CC[static_cast<std::size_t>(((i * 3 + j) * 3 + k) * 3 + l)] = 2.0 * (d_dev + d_vol);
        }
    }
}

double energy_release(double W_dev, double U_vol, double J, DamageBranch /*branch*/) {
  if (!(J > 0.0)) throw DomainError("energy_release: J must be positive");
  // Both branches share weights: full deviatoric drive, volumetric drive
  // only under dilatation.
  const double beta = (J >= 1.0) ? 1.0 : 0.0;
  return W_dev + beta * U_vol;
}

double damage_saturation(double Y, const MaterialParams& p) {
  const double over = (Y - p.Y_in) / p.Y_in;
  if (over <= 0.0) return 0.0;
  const double g = 1.0 - std::exp(-p.p1 * std::pow(over, p.p2));
  return std::clamp(g, 0.0, kOmegaCap);
}

DamageState damage_update(const DamageState& s, double Y_d, double Y_v, double dt,
                          const MaterialParams& p) {
  if (!(dt > 0.0)) throw DomainError("damage_update: dt must be positive");
  if (!p.damageable) return s;

  DamageState n = s;
  // Sub-threshold drives are not recorded: they can never initiate damage, and
  // skipping them keeps "Y below Y_in leaves the state unchanged" exact.
  if (Y_d > p.Y_in) n.kappa_d = std::max(s.kappa_d, Y_d);
  if (Y_v > p.Y_in) n.kappa_v = std::max(s.kappa_v, Y_v);

  // Backward Euler on omega_dot = mu_visc <g(Y_eff) - omega>_+ has the closed
  // form below: growth only while the saturation level exceeds the current
  // damage, which keeps omega monotone and bounded by g < 1.
  const auto advance = [&](double omega, double Y_eff) {
    if (Y_eff <= p.Y_in) return omega;
    const double g = damage_saturation(Y_eff, p);
    if (g <= omega) return omega;
    const double h = dt * p.mu_visc;
    // Outer max guards against a one-ulp rounding dip near saturation.
    return std::max(omega, std::min((omega + h * g) / (1.0 + h), kOmegaCap));
  };
  n.omega_d = advance(s.omega_d, n.kappa_d);
  n.omega_v = advance(s.omega_v, n.kappa_v);
  return n;
}

MaterialParams material_from_json(const nlohmann::json& j) {
  MaterialParams p;
  try {
    p.name = j.at("name").get<std::string>();
    p.E = j.at("E").get<double>();
    p.nu = j.at("nu").get<double>();
    p.mu = j.at("mu").get<double>();
    p.kappa = j.at("kappa").get<double>();
    p.damageable = j.value("damageable", false);
    if (p.damageable) {
      p.Y_in = j.at("Y_in").get<double>();
      p.p1 = j.at("p1").get<double>();
      p.p2 = j.at("p2").get<double>();
      p.mu_visc = j.at("mu_visc").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("material definition: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::ordered_json material_to_json(const MaterialParams& p) {
  nlohmann::ordered_json j{
      {"name", p.name}, {"E", p.E}, {"nu", p.nu}, {"mu", p.mu}, {"kappa", p.kappa},
      {"damageable", p.damageable}};
  if (p.damageable) {
    j["Y_in"] = p.Y_in;
    j["p1"] = p.p1;
    j["p2"] = p.p2;
    j["mu_visc"] = p.mu_visc;
  }
  return j;
}

MaterialParams load_material(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open material file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("material file " + path + ": " + e.what());
  }
  try {
    return material_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (from " + path + ")");
  } catch (const DomainError& e) {
    throw ConfigError(std::string(e.what()) + " (from " + path + ")");
  }
}

}  // namespace cohesim
