#pragma once

#include <array>
#include <string>

#include "cohesim/tensor.hpp"
#include "json.hpp"

namespace cohesim {

/// Hyperelastic constants plus damage evolution constants. Stress-like
/// quantities are MPa, lengths microns, time seconds.
struct MaterialParams {
  std::string name;
  double E = 0.0;      // Young's modulus [MPa]
  double nu = 0.0;     // Poisson ratio
  double mu = 0.0;     // shear modulus [MPa]
  double kappa = 0.0;  // bulk modulus [MPa]
  bool damageable = false;
  double Y_in = 0.0;     // damage initiation threshold [MPa]
  double p1 = 0.0;       // saturation shape
  double p2 = 0.0;       // saturation exponent
  double mu_visc = 0.0;  // damage rate constant [1/s]

  /// Throws DomainError on out-of-range constants; logs a warning when kappa
  /// disagrees with E/(3(1-2nu)) by more than 1% (published values round).
  void validate() const;
};

/// Split isotropic damage state of one material point. Both variables grow
/// monotonically and stay below 1; kappa_* are running maxima of the driving
/// energies.
struct DamageState {
  double omega_d = 0.0;  // deviatoric damage
  double omega_v = 0.0;  // volumetric damage
  double kappa_d = 0.0;  // largest deviatoric energy seen [MPa]
  double kappa_v = 0.0;  // largest volumetric energy seen [MPa]

  /// Scalar summary in [0, 1): RMS of the two variables.
  double total() const;

  bool operator==(const DamageState&) const = default;
};

enum class DamageBranch { Deviatoric, Volumetric };

/// Isochoric strain energy (mu/2)(tr C_hat - 3). C_hat must be SPD with
/// det C_hat = 1 to 1e-8 relative.
double dev_energy(const Tensor3& C_hat, double mu);

/// Volumetric strain energy (kappa/2)(exp(J-1) - ln J - 1). J must be > 0.
double vol_energy(double J, double kappa);

/// Unimodular part det(C)^(-1/3) C.
Tensor3 unimodular(const Tensor3& C);

/// Second Piola-Kirchhoff stress of the damaged compressible neo-Hookean
/// solid: (1-omega_d) S_dev + (1-omega_v) S_vol. C must be SPD.
Tensor3 pk2_stress(const Tensor3& C, const DamageState& damage, const MaterialParams& p);

/// Material tangent CC = 2 dS/dC in full 3x3x3x3 layout, index [i][j][k][l]
/// flattened to 81 doubles as ((i*3+j)*3+k)*3+l.
using Tangent4 = std::array<double, 81>;
void pk2_stress_tangent(const Tensor3& C, const DamageState& damage, const MaterialParams& p,
                        Tensor3& S, Tangent4& CC);

/// Thermodynamic driving energy of one damage branch. The volumetric part
/// contributes only under dilatation (J >= 1); compression drives no damage.
double energy_release(double W_dev, double U_vol, double J, DamageBranch branch);

/// One backward-Euler step of the viscous damage law. The effective drive is
/// the running maximum of the branch energy, so unloading never heals and a
/// drive below Y_in leaves the state unchanged. dt must be > 0.
DamageState damage_update(const DamageState& s, double Y_d, double Y_v, double dt,
                          const MaterialParams& p);

/// Saturation level g(Y) in [0, 1 - 1e-9] approached under sustained drive Y.
double damage_saturation(double Y, const MaterialParams& p);

/// Reads a material definition from a JSON file. Throws ConfigError on
/// missing or inconsistent fields.
MaterialParams load_material(const std::string& path);

/// JSON round trip. Damage constants appear only for damageable materials.
MaterialParams material_from_json(const nlohmann::json& j);
nlohmann::ordered_json material_to_json(const MaterialParams& p);

}  // namespace cohesim
