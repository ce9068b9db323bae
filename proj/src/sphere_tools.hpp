#pragma once

#include <vector>

#include "maxkit/geometry.hpp"
#include "maxkit/model.hpp"
#include "maxkit/potentials.hpp"

namespace maxkit::detail {

// Per-layer harmonic function sum_h (a_h r^n + b_h r^{-n-1}) Y_h, layer 0
// outermost, plus an exterior part c_h r^{-n-1}.
struct LayeredHarmonic {
    int lmax = 0;
    std::vector<double> radii;  // descending, radii[0] = R
    std::vector<Eigen::VectorXcd> a, b;
    Eigen::VectorXcd c;

    int region(double r, bool exterior_at_boundary) const {
        const double R = radii.front();
        const bool on = std::abs(r - R) <= 1e-12 * R;
        if ((r > R && !on) || (on && exterior_at_boundary)) return -1;
        int j = 0;
        while (j + 1 < static_cast<int>(radii.size()) && r < radii[j + 1]) ++j;
        return j;
    }

    void coeffs(double r, bool exterior_at_boundary, Eigen::VectorXcd& o, Eigen::VectorXcd& d) const {
        const int nh = harmonic_count(lmax);
        o = Eigen::VectorXcd::Zero(nh);
        d = Eigen::VectorXcd::Zero(nh);
        const int j = region(r, exterior_at_boundary);
        for (int n = 0; n <= lmax; ++n) {
            const double pn = std::pow(r, n), qn = std::pow(r, -n - 1);
            const double dpn = n == 0 ? 0.0 : n * std::pow(r, n - 1), dqn = -(n + 1.0) * std::pow(r, -n - 2);
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                if (j < 0) {
                    if (c.size()) {
                        o[h] = c[h] * qn;
                        d[h] = c[h] * dqn;
                    }
                } else {
                    o[h] = a[j][h] * pn + b[j][h] * qn;
                    d[h] = a[j][h] * dpn + b[j][h] * dqn;
                }
            }
        }
    }

    CField gradient(const std::vector<Vec3>& pts, bool exterior_at_boundary) const {
        CField g;
        synthesise_targets(
            lmax, pts, 1e-10 * radii.front(),
            [&](double r, Eigen::VectorXcd& o, Eigen::VectorXcd& d) { coeffs(r, exterior_at_boundary, o, d); },
            nullptr, &g);
        return g;
    }

    Eigen::VectorXcd value_at_boundary(bool exterior) const {
        Eigen::VectorXcd o, d;
        coeffs(radii.front(), exterior, o, d);
        return o;
    }
};

// Solves, per harmonic, for h = a r^n + b r^{-n-1} in each layer with h
// continuous, kappa_out h'_out - kappa_in h'_in = data[j] at radii[j] (j >= 1),
// and at radii[0] either kappa_0 h'(R-) = data[0] (kappa_ext <= 0) or the same
// jump condition against an exterior c r^{-n-1} with coefficient kappa_ext.
LayeredHarmonic solve_layered(const std::vector<double>& radii, const std::vector<double>& kappa, double kappa_ext,
                              const std::vector<Eigen::VectorXcd>& data, int lmax);

// Harmonic coefficients of nu . F on a sphere rule
Eigen::VectorXcd normal_coefficients(const SurfaceQuadrature& s, const CField& F, int lmax);

// Coefficients a_h of the surface-gradient part of a tangential field on a
// sphere of radius R: T = (1/R) sum_h a_h grad_{S^2} Y_h + surface curls.
Eigen::VectorXcd surface_gradient_coefficients(const SurfaceQuadrature& s, const CField& F, int lmax);

CField cross_rows(const std::vector<Vec3>& x, const CField& g);

// sum_h w_n c_h grad(r^n Y_h) (interior) or grad(r^{-n-1} Y_h) (exterior)
CField solid_gradient(const Eigen::VectorXcd& c, const std::vector<double>& weight, bool exterior,
                      const std::vector<Vec3>& pts, int lmax, double R);

}  // namespace maxkit::detail
