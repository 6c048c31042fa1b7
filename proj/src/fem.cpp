#include "tled/fem.hpp"

#include "tled/parallel.hpp"

#include <cmath>

namespace tled {

namespace {

constexpr double kHexSign[8][3] = {
    {-1, -1, -1}, {+1, -1, -1}, {+1, +1, -1}, {-1, +1, -1},
    {-1, -1, +1}, {+1, -1, +1}, {+1, +1, +1}, {-1, +1, +1},
};

// Hourglass base patterns for the node ordering above.
constexpr double kHourglassBase[8][4] = {
    // xi*eta, eta*zeta, xi*zeta, xi*eta*zeta
    {+1, +1, +1, -1}, {-1, +1, -1, +1}, {+1, -1, -1, -1}, {-1, -1, +1, +1},
    {+1, -1, -1, +1}, {-1, -1, +1, -1}, {+1, +1, +1, +1}, {-1, +1, -1, -1},
};

int region_of(const std::vector<int> &regions, std::size_t e) {
    return regions.empty() ? 0 : regions[e];
}

const RegionLaw &law_of(const std::vector<RegionLaw> &laws, int region) {
    if (region < 0 || region >= static_cast<int>(laws.size()))
        throw Error("no material for region " + std::to_string(region));
    return laws[region];
}

Mat3 deviatoric_stress(const RegionLaw &law, const Mat3 &F) {
    if (law.model == MaterialModel::NeoHookean)
        return pk2_neo_hookean_deviatoric(F, law.mu);
    return pk2_ogden_deviatoric(F, law.params.ogdenMu, law.params.ogdenAlpha);
}

Mat3 full_stress(const RegionLaw &law, const Mat3 &F) {
    if (law.model == MaterialModel::NeoHookean)
        return pk2_neo_hookean(F, law.mu, law.kappa);
    return pk2_ogden_deviatoric(F, law.params.ogdenMu, law.params.ogdenAlpha) +
           pk2_volumetric(F, law.kappa);
}

double deviatoric_energy(const RegionLaw &law, const Mat3 &F) {
    if (law.model == MaterialModel::NeoHookean) {
        const double J = F.determinant();
        const double I1 = (F.transpose() * F).trace();
        return 0.5 * law.mu * (std::pow(J, -2.0 / 3.0) * I1 - 3.0);
    }
    MaterialParams dev = law.params;
    // energy_ogden adds the volumetric term through kappa(); null it out by
    // evaluating at nu giving kappa and subtracting.
    const double J = F.determinant();
    return energy_ogden(F, dev) - 0.5 * law.kappa * (J - 1.0) * (J - 1.0);
}

} // namespace

std::vector<RegionLaw> make_region_laws(const std::vector<MaterialParams> &materials) {
    std::vector<RegionLaw> laws;
    laws.reserve(materials.size());
    for (const auto &m : materials) {
        m.validate();
        const auto [mu, kappa] = moduli_from_E_nu(m.E, m.nu);
        laws.push_back({m.model, mu, kappa, m});
    }
    return laws;
}

Mat3 hex_deformation_gradient(const HexPrecomp &hex, const Field3 &u) {
    Mat3 F = Mat3::Identity();
    for (int a = 0; a < 8; ++a)
        F += u.row(hex.nodes[a]).transpose() * hex.dNdX.row(a);
    return F;
}

Mat3 tet_deformation_gradient(const TetPrecomp &tet, const Field3 &u) {
    Mat3 F = Mat3::Identity();
    for (int a = 0; a < 4; ++a)
        F += u.row(tet.nodes[a]).transpose() * tet.dNdX.row(a);
    return F;
}

ElementPrecomp precompute_elements(const Mesh &mesh, double hourglassCoeff) {
    ElementPrecomp pre;
    pre.hourglassCoeff = hourglassCoeff;
    pre.hexes.reserve(mesh.hexes.size());
    pre.tets.reserve(mesh.tets.size());

    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        HexPrecomp hp;
        hp.nodes = mesh.hexes[e];
        hp.region = region_of(mesh.hexRegions, e);

        Eigen::Matrix<double, 8, 3> X;
        for (int a = 0; a < 8; ++a) X.row(a) = mesh.nodes[hp.nodes[a]];

        Mat3 J = Mat3::Zero(); // J_ij = d x_i / d xi_j at the centroid
        for (int a = 0; a < 8; ++a)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    J(i, j) += 0.125 * kHexSign[a][j] * X(a, i);
        const double detJ = J.determinant();
        if (detJ <= 0) throw Error("degenerate element: hex " + std::to_string(e));
        hp.V0 = 8.0 * detJ;

        const Mat3 Jinv = J.inverse();
        for (int a = 0; a < 8; ++a) {
            Vec3 dNdXi(0.125 * kHexSign[a][0], 0.125 * kHexSign[a][1],
                       0.125 * kHexSign[a][2]);
            hp.dNdX.row(a) = (Jinv.transpose() * dNdXi).transpose();
        }

        // Orthogonalize the base patterns against the linear nodal fields
        // so hourglass forces vanish on any affine displacement.
        for (int k = 0; k < 4; ++k) {
            Eigen::Matrix<double, 8, 1> h;
            for (int a = 0; a < 8; ++a) h[a] = kHourglassBase[a][k];
            const Vec3 xh = X.transpose() * h;
            hp.gamma.col(k) = h - hp.dNdX * xh;
        }
        // Geometric part only; assembly multiplies by the region shear modulus.
        hp.khg = hourglassCoeff * std::pow(hp.V0, 2.0 / 3.0);
        pre.hexes.push_back(hp);
    }

    pre.anpNodalV0 = VecX::Zero(mesh.num_nodes());
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        TetPrecomp tp;
        tp.nodes = mesh.tets[e];
        tp.region = region_of(mesh.tetRegions, e);
        const Vec3 &a = mesh.nodes[tp.nodes[0]];
        const Vec3 &b = mesh.nodes[tp.nodes[1]];
        const Vec3 &c = mesh.nodes[tp.nodes[2]];
        const Vec3 &d = mesh.nodes[tp.nodes[3]];
        tp.V0 = tet_volume(a, b, c, d);
        if (tp.V0 <= 0) throw Error("degenerate element: tet " + std::to_string(e));

        // Constant gradients: dN_a/dX = grad of barycentric coordinate a.
        Mat3 D;
        D.col(0) = b - a;
        D.col(1) = c - a;
        D.col(2) = d - a;
        const Mat3 Dinv = D.inverse();
        for (int i = 0; i < 3; ++i) tp.dNdX.row(i + 1) = Dinv.row(i);
        tp.dNdX.row(0) = -(tp.dNdX.row(1) + tp.dNdX.row(2) + tp.dNdX.row(3));

        for (int n = 0; n < 4; ++n) pre.anpNodalV0[tp.nodes[n]] += tp.V0 / 4.0;
        pre.tets.push_back(tp);
    }
    return pre;
}

void hex_internal_forces(const ElementPrecomp &pre, const std::vector<Vec3> &,
                         const Field3 &u, const std::vector<RegionLaw> &laws,
                         Field3 &f) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(pre.hexes.size());
    std::vector<Eigen::Matrix<double, 8, 3>> elemForce(n);
    parallel_for(n, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t e = begin; e < end; ++e) {
            const HexPrecomp &hp = pre.hexes[e];
            const RegionLaw &law = law_of(laws, hp.region);
            const Mat3 F = hex_deformation_gradient(hp, u);
            if (!(F.determinant() > 0))
                throw InversionError("hex " + std::to_string(e), F);
            const Mat3 S = full_stress(law, F);
            Eigen::Matrix<double, 8, 3> fe = hp.V0 * hp.dNdX * S * F.transpose();

            const double k = law.mu * hp.khg;
            for (int m = 0; m < 4; ++m) {
                Vec3 q = Vec3::Zero();
                for (int a = 0; a < 8; ++a)
                    q += hp.gamma(a, m) * u.row(hp.nodes[a]).transpose();
                for (int a = 0; a < 8; ++a)
                    fe.row(a) += k * hp.gamma(a, m) * q.transpose();
            }
            elemForce[e] = fe;
        }
    });
    for (std::ptrdiff_t e = 0; e < n; ++e)
        for (int a = 0; a < 8; ++a)
            f.row(pre.hexes[e].nodes[a]) += elemForce[e].row(a);
}

void tet_internal_forces(const ElementPrecomp &pre, const std::vector<Vec3> &X,
                         const Field3 &u, const std::vector<RegionLaw> &laws,
                         Field3 &f, bool anp) {
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(pre.tets.size());
    if (n == 0) return;

    VecX elemJ(n);          // current volume ratio per tet
    std::vector<Mat3> Fs(n);
    parallel_for(n, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t e = begin; e < end; ++e) {
            const TetPrecomp &tp = pre.tets[e];
            const Mat3 F = tet_deformation_gradient(tp, u);
            const double J = F.determinant();
            if (!(J > 0)) throw InversionError("tet " + std::to_string(e), F);
            Fs[e] = F;
            elemJ[e] = J;
        }
    });

    // Element pressure: own volumetric law, or the average of nodal
    // pressures computed from nodal volume ratios (ANP).
    VecX elemPressure(n);
    if (anp) {
        VecX nodalV = VecX::Zero(f.rows());
        VecX nodalKappaV0 = VecX::Zero(f.rows());
        for (std::ptrdiff_t e = 0; e < n; ++e) {
            const TetPrecomp &tp = pre.tets[e];
            const double Ve = tp.V0 * elemJ[e];
            const double kappa = law_of(laws, tp.region).kappa;
            for (int a = 0; a < 4; ++a) {
                nodalV[tp.nodes[a]] += Ve / 4.0;
                nodalKappaV0[tp.nodes[a]] += kappa * tp.V0 / 4.0;
            }
        }
        VecX nodalPressure = VecX::Zero(f.rows());
        for (Eigen::Index i = 0; i < nodalPressure.size(); ++i) {
            if (pre.anpNodalV0[i] > 0) {
                const double Jn = nodalV[i] / pre.anpNodalV0[i];
                const double kappaN = nodalKappaV0[i] / pre.anpNodalV0[i];
                nodalPressure[i] = kappaN * (Jn - 1.0);
            }
        }
        for (std::ptrdiff_t e = 0; e < n; ++e) {
            const TetPrecomp &tp = pre.tets[e];
            double p = 0;
            for (int a = 0; a < 4; ++a) p += nodalPressure[tp.nodes[a]];
            elemPressure[e] = p / 4.0;
        }
    } else {
        for (std::ptrdiff_t e = 0; e < n; ++e)
            elemPressure[e] = law_of(laws, pre.tets[e].region).kappa * (elemJ[e] - 1.0);
    }

    std::vector<Eigen::Matrix<double, 4, 3>> elemForce(n);
    parallel_for(n, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t e = begin; e < end; ++e) {
            const TetPrecomp &tp = pre.tets[e];
            const RegionLaw &law = law_of(laws, tp.region);
            const Mat3 &F = Fs[e];
            const Mat3 Sdev = deviatoric_stress(law, F);
            // Pressure part: p * J * F^{-T} == F * (p J C^{-1}).
            const Mat3 FinvT = F.inverse().transpose();
            const Mat3 P = F * Sdev + elemPressure[e] * elemJ[e] * FinvT;
            elemForce[e] = tp.V0 * tp.dNdX * P.transpose();
        }
    });
    (void)X;
    for (std::ptrdiff_t e = 0; e < n; ++e)
        for (int a = 0; a < 4; ++a)
            f.row(pre.tets[e].nodes[a]) += elemForce[e].row(a);
}

void internal_forces(const ElementPrecomp &pre, const std::vector<Vec3> &X,
                     const Field3 &u, const std::vector<RegionLaw> &laws,
                     Field3 &f, bool anp) {
    f.setZero();
    hex_internal_forces(pre, X, u, laws, f);
    tet_internal_forces(pre, X, u, laws, f, anp);
}

double total_energy(const ElementPrecomp &pre, const std::vector<Vec3> &,
                    const Field3 &u, const std::vector<RegionLaw> &laws, bool anp) {
    double E = 0;
    for (std::size_t e = 0; e < pre.hexes.size(); ++e) {
        const HexPrecomp &hp = pre.hexes[e];
        const RegionLaw &law = law_of(laws, hp.region);
        const Mat3 F = hex_deformation_gradient(hp, u);
        if (law.model == MaterialModel::NeoHookean)
            E += hp.V0 * energy_neo_hookean(F, law.mu, law.kappa);
        else
            E += hp.V0 * energy_ogden(F, law.params);
        const double k = law.mu * hp.khg;
        for (int m = 0; m < 4; ++m) {
            Vec3 q = Vec3::Zero();
            for (int a = 0; a < 8; ++a)
                q += hp.gamma(a, m) * u.row(hp.nodes[a]).transpose();
            E += 0.5 * k * q.squaredNorm();
        }
    }
    if (pre.tets.empty()) return E;

    VecX nodalV = VecX::Zero(u.rows());
    VecX nodalKappaV0 = VecX::Zero(u.rows());
    for (const TetPrecomp &tp : pre.tets) {
        const RegionLaw &law = law_of(laws, tp.region);
        const Mat3 F = tet_deformation_gradient(tp, u);
        const double J = F.determinant();
        E += tp.V0 * deviatoric_energy(law, F);
        if (anp) {
            for (int a = 0; a < 4; ++a) {
                nodalV[tp.nodes[a]] += tp.V0 * J / 4.0;
                nodalKappaV0[tp.nodes[a]] += law.kappa * tp.V0 / 4.0;
            }
        } else {
            E += tp.V0 * 0.5 * law.kappa * (J - 1.0) * (J - 1.0);
        }
    }
    if (anp) {
        for (Eigen::Index i = 0; i < nodalV.size(); ++i) {
            if (pre.anpNodalV0[i] > 0) {
                const double Jn = nodalV[i] / pre.anpNodalV0[i];
                const double kappaN = nodalKappaV0[i] / pre.anpNodalV0[i];
                E += 0.5 * kappaN * pre.anpNodalV0[i] * (Jn - 1.0) * (Jn - 1.0);
            }
        }
    }
    return E;
}

double min_edge_length(const Mesh &mesh) {
    static const int hexEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                        {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                        {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    double best = std::numeric_limits<double>::infinity();
    for (const auto &h : mesh.hexes)
        for (const auto &e : hexEdges)
            best = std::min(best, (mesh.nodes[h[e[0]]] - mesh.nodes[h[e[1]]]).norm());
    for (const auto &t : mesh.tets)
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                best = std::min(best, (mesh.nodes[t[i]] - mesh.nodes[t[j]]).norm());
    return best;
}

} // namespace tled
