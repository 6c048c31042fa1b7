#include "tled/materials.hpp"

#include <cmath>

namespace tled {

void MaterialParams::validate() const {
    if (!(E > 0)) throw Error("Young's modulus must be positive");
    if (!(nu >= 0 && nu < 0.5))
        throw Error("Poisson's ratio must lie in [0, 0.5); the incompressible "
                    "limit is handled by a large bulk modulus, not nu = 0.5");
    if (model == MaterialModel::OgdenVisco) {
        if (ogdenMu.empty() || ogdenMu.size() != ogdenAlpha.size())
            throw Error("ogdenMu and ogdenAlpha must have equal length >= 1");
    }
    double gsum = 0;
    for (const auto &p : prony) {
        if (!(p.tau > 0)) throw Error("Prony relaxation times must be positive");
        gsum += p.g;
    }
    if (gsum >= 1) throw Error("sum of Prony relative moduli must be < 1");
}

double MaterialParams::mu() const { return moduli_from_E_nu(E, nu).first; }
double MaterialParams::kappa() const { return moduli_from_E_nu(E, nu).second; }

std::pair<double, double> moduli_from_E_nu(double E, double nu) {
    if (!(E > 0)) throw Error("Young's modulus must be positive");
    if (!(nu >= 0 && nu < 0.5)) throw Error("Poisson's ratio must lie in [0, 0.5)");
    return {E / (2.0 * (1.0 + nu)), E / (3.0 * (1.0 - 2.0 * nu))};
}

namespace {

void require_not_inverted(const Mat3 &F, double J) {
    if (!(J > 0)) throw InversionError("stress evaluation", F);
}

} // namespace

Mat3 pk2_neo_hookean_deviatoric(const Mat3 &F, double mu) {
    const double J = F.determinant();
    require_not_inverted(F, J);
    const Mat3 C = F.transpose() * F;
    const Mat3 Cinv = C.inverse();
    const double scale = mu * std::pow(J, -2.0 / 3.0);
    return scale * (Mat3::Identity() - (C.trace() / 3.0) * Cinv);
}

Mat3 pk2_neo_hookean(const Mat3 &F, double mu, double kappa) {
    return pk2_neo_hookean_deviatoric(F, mu) + pk2_volumetric(F, kappa);
}

double energy_neo_hookean(const Mat3 &F, double mu, double kappa) {
    const double J = F.determinant();
    require_not_inverted(F, J);
    const double I1 = (F.transpose() * F).trace();
    return 0.5 * mu * (std::pow(J, -2.0 / 3.0) * I1 - 3.0) +
           0.5 * kappa * (J - 1.0) * (J - 1.0);
}

Mat3 pk2_ogden_deviatoric(const Mat3 &F, const std::vector<double> &mu,
                          const std::vector<double> &alpha) {
    const double J = F.determinant();
    require_not_inverted(F, J);
    const Mat3 C = F.transpose() * F;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(C);
    const Vec3 lambdaSq = eig.eigenvalues().cwiseMax(0.0);
    const Vec3 lambda = lambdaSq.cwiseSqrt();
    const double Jm13 = std::pow(J, -1.0 / 3.0);
    const Vec3 lbar = Jm13 * lambda;

    // Principal deviatoric Kirchhoff stresses.
    Vec3 tau = Vec3::Zero();
    for (std::size_t i = 0; i < mu.size(); ++i) {
        Vec3 pow_a;
        for (int a = 0; a < 3; ++a) pow_a[a] = std::pow(lbar[a], alpha[i]);
        const double mean = pow_a.sum() / 3.0;
        tau += (2.0 * mu[i] / alpha[i]) * (pow_a.array() - mean).matrix();
    }

    Mat3 S = Mat3::Zero();
    for (int a = 0; a < 3; ++a) {
        const Vec3 n = eig.eigenvectors().col(a);
        S += (tau[a] / lambdaSq[a]) * (n * n.transpose());
    }
    return S;
}

double energy_ogden(const Mat3 &F, const MaterialParams &params) {
    const double J = F.determinant();
    require_not_inverted(F, J);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(F.transpose() * F);
    const Vec3 lbar = std::pow(J, -1.0 / 3.0) * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    double W = 0;
    for (std::size_t i = 0; i < params.ogdenMu.size(); ++i) {
        const double a = params.ogdenAlpha[i];
        W += (2.0 * params.ogdenMu[i] / (a * a)) *
             (std::pow(lbar[0], a) + std::pow(lbar[1], a) + std::pow(lbar[2], a) - 3.0);
    }
    return W + 0.5 * params.kappa() * (J - 1.0) * (J - 1.0);
}

double energy_density(const Mat3 &F, const MaterialParams &params) {
    if (params.model == MaterialModel::NeoHookean)
        return energy_neo_hookean(F, params.mu(), params.kappa());
    return energy_ogden(F, params);
}

Mat3 pk2_ogden_visco(const Mat3 &F, double dt, const MaterialParams &params,
                     ViscoState &state) {
    if (!(dt > 0)) throw Error("dt must be positive");
    Mat3 Sdev = pk2_ogden_deviatoric(F, params.ogdenMu, params.ogdenAlpha);
    const Mat3 Svol = pk2_volumetric(F, params.kappa());
    if (params.prony.empty()) return Sdev + Svol;

    if (state.q.size() != params.prony.size()) state.init(params.prony.size());
    Mat3 relaxed = Sdev;
    for (std::size_t k = 0; k < params.prony.size(); ++k) {
        const double decay = std::exp(-dt / params.prony[k].tau);
        state.q[k] = decay * state.q[k] + params.prony[k].g * (1.0 - decay) * Sdev;
        relaxed -= state.q[k];
    }
    return relaxed + Svol;
}

Mat3 pk2_stress(const Mat3 &F, const MaterialParams &params) {
    if (params.model == MaterialModel::NeoHookean)
        return pk2_neo_hookean(F, params.mu(), params.kappa());
    return pk2_ogden_deviatoric(F, params.ogdenMu, params.ogdenAlpha) +
           pk2_volumetric(F, params.kappa());
}

std::vector<Mat3> resubstitute_stress(const std::vector<Mat3> &FField,
                                      const MaterialParams &params, double dt) {
    std::vector<Mat3> stresses;
    stresses.reserve(FField.size());
    for (const Mat3 &F : FField) {
        ViscoState state;
        stresses.push_back(pk2_ogden_visco(F, dt, params, state));
    }
    return stresses;
}

} // namespace tled
