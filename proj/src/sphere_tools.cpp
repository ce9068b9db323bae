#include <cmath>

#include "maxkit/potentials.hpp"
#include "sphere_tools.hpp"

namespace maxkit::detail {

namespace {
constexpr cplx kI(0.0, 1.0);
}  // namespace

// Solves, per harmonic, for h = a r^n + b r^{-n-1} in each layer with h
// continuous, kappa_out h'_out - kappa_in h'_in = data[j] at radii[j] (j >= 1),
// and at radii[0] either kappa_0 h'(R-) = data[0] (kappa_ext <= 0) or the same
// jump condition against an exterior c r^{-n-1} with coefficient kappa_ext.
LayeredHarmonic solve_layered(const std::vector<double>& radii, const std::vector<double>& kappa, double kappa_ext,
                              const std::vector<Eigen::VectorXcd>& data, int lmax) {
    const int L = static_cast<int>(radii.size());
    const int nh = harmonic_count(lmax);
    const bool ext = kappa_ext > 0.0;
    LayeredHarmonic out;
    out.lmax = lmax;
    out.radii = radii;
    out.a.assign(L, Eigen::VectorXcd::Zero(nh));
    out.b.assign(L, Eigen::VectorXcd::Zero(nh));
    if (ext) out.c = Eigen::VectorXcd::Zero(nh);
    for (int n = 0; n <= lmax; ++n) {
        const int nu = 2 * L + (ext ? 1 : 0);
        auto P = [&](double r) { return std::pow(r, n); };
        auto Q = [&](double r) { return std::pow(r, -n - 1); };
        auto dP = [&](double r) { return n == 0 ? 0.0 : n * std::pow(r, n - 1); };
        auto dQ = [&](double r) { return -(n + 1.0) * std::pow(r, -n - 2); };
        std::vector<Eigen::RowVectorXd> rows;
        std::vector<int> data_row;  // index into data, or -1 for homogeneous
        for (int j = 1; j < L; ++j) {
            const double r = radii[j];
            Eigen::RowVectorXd cont = Eigen::RowVectorXd::Zero(nu), flux = Eigen::RowVectorXd::Zero(nu);
            cont[2 * (j - 1)] = P(r);
            cont[2 * (j - 1) + 1] = Q(r);
            cont[2 * j] = -P(r);
            cont[2 * j + 1] = -Q(r);
            flux[2 * (j - 1)] = kappa[j - 1] * dP(r);
            flux[2 * (j - 1) + 1] = kappa[j - 1] * dQ(r);
            flux[2 * j] = -kappa[j] * dP(r);
            flux[2 * j + 1] = -kappa[j] * dQ(r);
            rows.push_back(cont);
            data_row.push_back(-1);
            rows.push_back(flux);
            data_row.push_back(j);
        }
        {
            Eigen::RowVectorXd inner = Eigen::RowVectorXd::Zero(nu);
            inner[2 * (L - 1) + 1] = 1.0;
            rows.push_back(inner);
            data_row.push_back(-1);
        }
        const double R = radii[0];
        if (ext) {
            Eigen::RowVectorXd cont = Eigen::RowVectorXd::Zero(nu), flux = Eigen::RowVectorXd::Zero(nu);
            cont[0] = P(R);
            cont[1] = Q(R);
            cont[2 * L] = -Q(R);
            flux[0] = -kappa[0] * dP(R);
            flux[1] = -kappa[0] * dQ(R);
            flux[2 * L] = kappa_ext * dQ(R);
            rows.push_back(cont);
            data_row.push_back(-1);
            rows.push_back(flux);
            data_row.push_back(0);
        } else {
            Eigen::RowVectorXd flux = Eigen::RowVectorXd::Zero(nu);
            flux[0] = kappa[0] * dP(R);
            flux[1] = kappa[0] * dQ(R);
            rows.push_back(flux);
            data_row.push_back(0);
            if (n == 0) {
                Eigen::RowVectorXd gauge = Eigen::RowVectorXd::Zero(nu);
                gauge[2 * (L - 1)] = 1.0;
                rows.push_back(gauge);
                data_row.push_back(-1);
            }
        }
        Eigen::MatrixXd M(rows.size(), nu);
        for (std::size_t i = 0; i < rows.size(); ++i) M.row(i) = rows[i];
        const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> dec(M.cast<cplx>());
        for (int m = -n; m <= n; ++m) {
            const int h = harmonic_index(n, m);
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                if (data_row[i] >= 0) rhs[i] = data[data_row[i]][h];
            const Eigen::VectorXcd x = dec.solve(rhs);
            for (int j = 0; j < L; ++j) {
                out.a[j][h] = x[2 * j];
                out.b[j][h] = x[2 * j + 1];
            }
            if (ext) out.c[h] = x[2 * L];
        }
    }
    return out;
}

// Harmonic coefficients of nu . F on a sphere rule
Eigen::VectorXcd normal_coefficients(const SurfaceQuadrature& s, const CField& F, int lmax) {
    Eigen::VectorXcd f(s.size());
    for (int i = 0; i < s.size(); ++i) f[i] = (F.row(i) * s.normals[i].cast<cplx>())(0);
    return surface_coefficients(s, f, lmax);
}

// Coefficients a_h of the surface-gradient part of a tangential field on a
// sphere of radius R: T = (1/R) sum_h a_h grad_{S^2} Y_h + surface curls.
Eigen::VectorXcd surface_gradient_coefficients(const SurfaceQuadrature& s, const CField& F, int lmax) {
    const HarmonicTable tab = make_harmonic_table(lmax, s.normals);
    const int nh = harmonic_count(lmax);
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(nh);
    const double R = s.radius;
    for (int i = 0; i < s.size(); ++i) {
        double r, th, ph;
        Vec3 er, et, ep;
        spherical_frame(s.normals[i], r, th, ph, er, et, ep);
        const cplx ft = (F.row(i) * et.cast<cplx>())(0), fp = (F.row(i) * ep.cast<cplx>())(0);
        const double w = s.weights[i] / (R * R), st = std::sin(th);
        for (int n = 1; n <= lmax; ++n)
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                const cplx gt = tab.dtheta(i, h), gp = kI * double(m) * tab.Y(i, h) / st;
                a[h] += w * (ft * std::conj(gt) + fp * std::conj(gp));
            }
    }
    for (int n = 1; n <= lmax; ++n)
        for (int m = -n; m <= n; ++m) a[harmonic_index(n, m)] *= R / (n * (n + 1.0));
    return a;
}

CField cross_rows(const std::vector<Vec3>& x, const CField& g) {
    CField out(g.rows(), 3);
    for (int i = 0; i < g.rows(); ++i) {
        const CVec3 xc = x[i].cast<cplx>();
        const CVec3 gi = g.row(i).transpose();
        out.row(i) = xc.cross(gi).transpose();
    }
    return out;
}

// sum_h w_n c_h grad(r^n Y_h) (interior) or grad(r^{-n-1} Y_h) (exterior)
CField solid_gradient(const Eigen::VectorXcd& c, const std::vector<double>& weight, bool exterior,
                      const std::vector<Vec3>& pts, int lmax, double R) {
    LayeredHarmonic f;
    f.lmax = lmax;
    f.radii = {R};
    const int nh = harmonic_count(lmax);
    f.a.assign(1, Eigen::VectorXcd::Zero(nh));
    f.b.assign(1, Eigen::VectorXcd::Zero(nh));
    f.c = Eigen::VectorXcd::Zero(nh);
    for (int n = 0; n <= lmax; ++n)
        for (int m = -n; m <= n; ++m) {
            const int h = harmonic_index(n, m);
            (exterior ? f.c : f.a[0])[h] = weight[n] * c[h];
        }
    return f.gradient(pts, exterior);
}

}  // namespace maxkit::detail
