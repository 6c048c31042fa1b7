#ifndef TLED_MATERIALS_HPP_
#define TLED_MATERIALS_HPP_

#include "tled/types.hpp"

#include <utility>
#include <vector>

namespace tled {

enum class MaterialModel { NeoHookean, OgdenVisco };

struct PronyTerm {
    double g;   // relative modulus, dimensionless
    double tau; // relaxation time, s
};

struct MaterialParams {
    MaterialModel model = MaterialModel::NeoHookean;
    double E = 0;  // Pa
    double nu = 0; // dimensionless
    std::vector<double> ogdenMu;    // Pa
    std::vector<double> ogdenAlpha; // dimensionless
    std::vector<PronyTerm> prony;

    void validate() const;
    double mu() const;    // shear modulus from (E, nu)
    double kappa() const; // bulk modulus from (E, nu)
};

// Per-integration-point history for the Prony-series convolution,
// one deviatoric stress tensor per term. Zero at t = 0.
struct ViscoState {
    std::vector<Mat3> q;

    void init(std::size_t terms) { q.assign(terms, Mat3::Zero()); }
    bool empty() const { return q.empty(); }
};

// mu = E/(2(1+nu)), kappa = E/(3(1-2nu)). Rejects nu >= 0.5.
std::pair<double, double> moduli_from_E_nu(double E, double nu);

// Second Piola-Kirchhoff stress of the nearly incompressible Neo-Hookean
// energy W = mu/2 (J^(-2/3) tr C - 3) + kappa/2 (J - 1)^2.
Mat3 pk2_neo_hookean(const Mat3 &F, double mu, double kappa);

// Deviatoric / volumetric split used by the ANP tetrahedra.
Mat3 pk2_neo_hookean_deviatoric(const Mat3 &F, double mu);
Mat3 pk2_ogden_deviatoric(const Mat3 &F, const std::vector<double> &mu,
                          const std::vector<double> &alpha);
inline Mat3 pk2_volumetric(const Mat3 &F, double kappa) {
    const double J = F.determinant();
    const Mat3 Cinv = (F.transpose() * F).inverse();
    return kappa * (J - 1.0) * J * Cinv;
}

// Hyperelastic Ogden stress (principal-stretch form) plus the recursive
// Prony update on the deviatoric part. Empty prony leaves `state` alone
// and reduces to the hyperelastic response.
Mat3 pk2_ogden_visco(const Mat3 &F, double dt, const MaterialParams &params,
                     ViscoState &state);

// Dispatch on params.model; hyperelastic response only (no history).
Mat3 pk2_stress(const Mat3 &F, const MaterialParams &params);

// Stored energy densities; the test oracles differentiate these.
double energy_neo_hookean(const Mat3 &F, double mu, double kappa);
double energy_ogden(const Mat3 &F, const MaterialParams &params);
double energy_density(const Mat3 &F, const MaterialParams &params);

// Applies pk2_ogden_visco pointwise to a stored gradient field (one fresh
// zero history per point, a single step of length dt).
std::vector<Mat3> resubstitute_stress(const std::vector<Mat3> &FField,
                                      const MaterialParams &params,
                                      double dt = 1.0);

} // namespace tled

#endif // TLED_MATERIALS_HPP_
