#include "maxkit/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace maxkit {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr cplx kI(0.0, 1.0);
constexpr int kPanelPoints = 24;

struct GaussRule {
    std::vector<double> x, w;
    explicit GaussRule(int n) { gauss_legendre(n, x, w); }
};

const GaussRule& panel_rule() {
    static const GaussRule rule(kPanelPoints);
    return rule;
}

cplx sph_h1(int n, double x) { return cplx(std::sph_bessel(n, x), std::sph_neumann(n, x)); }
// f_n'(x) = (n / x) f_n(x) - f_{n+1}(x)
double sph_j_prime(int n, double x) { return n / x * std::sph_bessel(n, x) - std::sph_bessel(n + 1, x); }
cplx sph_h1_prime(int n, double x) { return double(n) / x * sph_h1(n, x) - sph_h1(n + 1, x); }

// Lagrange basis values on nodes xs at point t
void lagrange_values(const std::vector<double>& xs, double t, std::vector<double>& out) {
    const int n = static_cast<int>(xs.size());
    out.assign(n, 1.0);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
            if (k != j) out[j] *= (t - xs[k]) / (xs[j] - xs[k]);
}

// Panels on [a, b]. Above the target radius the kernels behave like powers
// of 1/s, so panels grow geometrically from a; below it one panel pair is
// enough.
std::vector<double> panels_above(double a, double b) {
    std::vector<double> p{a};
    if (a > 0.0)
        for (double x = 2.0 * a; x < b; x *= 2.0) p.push_back(x);
    p.push_back(b);
    return p;
}

std::vector<double> panels_below(double a, double b) { return {a, 0.5 * (a + b), b}; }

// Targets on the polar axis are replaced by the mean of two mirrored
// directions tilted by 1e-5, which keeps the phi component defined and the
// error O(1e-10).
struct TargetSet {
    std::vector<Vec3> dirs;
    std::vector<double> radii;
    std::vector<int> first, second;  // expanded indices per original target
};

TargetSet expand_targets(const std::vector<Vec3>& targets, double floor_radius) {
    TargetSet ts;
    constexpr double tilt = 1e-5;
    for (const Vec3& x : targets) {
        const double r = std::max(x.norm(), floor_radius);
        Vec3 d = x.norm() > 0.0 ? Vec3(x / x.norm()) : Vec3::UnitZ();
        const int i = static_cast<int>(ts.dirs.size());
        if (std::hypot(d.x(), d.y()) < tilt) {
            const double z = d.z() >= 0.0 ? 1.0 : -1.0;
            ts.dirs.push_back(Vec3(tilt, 0.0, z).normalized());
            ts.dirs.push_back(Vec3(-tilt, 0.0, z).normalized());
            ts.radii.push_back(r);
            ts.radii.push_back(r);
            ts.first.push_back(i);
            ts.second.push_back(i + 1);
        } else {
            ts.dirs.push_back(d);
            ts.radii.push_back(r);
            ts.first.push_back(i);
            ts.second.push_back(i);
        }
    }
    return ts;
}

}  // namespace

cplx fundamental_solution(double k0, const Vec3& x) {
    const double d = x.norm();
    if (d == 0.0) throw std::domain_error("fundamental_solution: singular at x = 0");
    return std::exp(kI * (k0 * d)) / (4.0 * kPi * d);
}

cplx RadialKernel::value(int n, double r, double s) const {
    const double lo = std::min(r, s), hi = std::max(r, s);
    switch (kind) {
        case KernelKind::helmholtz:
            if (k > 0.0) return kI * k * std::sph_bessel(n, k * lo) * sph_h1(n, k * hi);
            [[fallthrough]];
        case KernelKind::laplace:
            return std::pow(lo, n) / std::pow(hi, n + 1) / (2.0 * n + 1.0);
        case KernelKind::distance: {
            const double a = std::pow(lo, n + 2) / (std::pow(hi, n + 1) * (2.0 * n + 3.0));
            const double b = std::pow(lo, n) * std::pow(hi, 1 - n) / (2.0 * n - 1.0);
            return -(a - b) / (2.0 * n + 1.0);
        }
    }
    return 0.0;
}

cplx RadialKernel::dr(int n, double r, double s) const {
    // targets within rounding of the source sphere take the outer limit
    const bool inner = r < s * (1.0 - 1e-12);
    switch (kind) {
        case KernelKind::helmholtz:
            if (k > 0.0) {
                if (inner) return kI * k * k * sph_j_prime(n, k * r) * sph_h1(n, k * s);
                return kI * k * k * std::sph_bessel(n, k * s) * sph_h1_prime(n, k * r);
            }
            [[fallthrough]];
        case KernelKind::laplace:
            if (inner) return n == 0 ? 0.0 : n * std::pow(r, n - 1) / std::pow(s, n + 1) / (2.0 * n + 1.0);
            return -(n + 1.0) * std::pow(s, n) / std::pow(r, n + 2) / (2.0 * n + 1.0);
        case KernelKind::distance: {
            double a, b;
            if (inner) {
                a = (n + 2.0) * std::pow(r, n + 1) / (std::pow(s, n + 1) * (2.0 * n + 3.0));
                b = n == 0 ? 0.0 : n * std::pow(r, n - 1) * std::pow(s, 1 - n) / (2.0 * n - 1.0);
            } else {
                a = -(n + 1.0) * std::pow(s, n + 2) / (std::pow(r, n + 2) * (2.0 * n + 3.0));
                b = (1.0 - n) * std::pow(s, n) * std::pow(r, -n) / (2.0 * n - 1.0);
            }
            return -(a - b) / (2.0 * n + 1.0);
        }
    }
    return 0.0;
}

cplx RadialKernel::of_distance(double d) const {
    switch (kind) {
        case KernelKind::helmholtz: return std::exp(kI * (k * d)) / (4.0 * kPi * d);
        case KernelKind::laplace: return 1.0 / (4.0 * kPi * d);
        case KernelKind::distance: return -d / (4.0 * kPi);
    }
    return 0.0;
}

cplx RadialKernel::d_of_distance(double d) const {
    switch (kind) {
        case KernelKind::helmholtz: return std::exp(kI * (k * d)) * (kI * k * d - 1.0) / (4.0 * kPi * d * d);
        case KernelKind::laplace: return -1.0 / (4.0 * kPi * d * d);
        case KernelKind::distance: return -1.0 / (4.0 * kPi);
    }
    return 0.0;
}

// ---------------------------------------------------------------- shells

ShellBasis make_shell_basis(const VolumeQuadrature& quad, int lmax) {
    ShellBasis b;
    b.lmax = lmax;
    b.table = make_harmonic_table(lmax, quad.sphere.normals);
    const int np = quad.per_shell(), nh = harmonic_count(lmax);
    b.wconj.resize(np, nh);
    b.aphi.resize(np, nh);
    for (int k = 0; k < np; ++k) {
        const double st = std::sin(b.table.theta[k]);
        for (int n = 0; n <= lmax; ++n)
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                b.wconj(k, h) = quad.sphere.weights[k] * std::conj(b.table.Y(k, h));
                b.aphi(k, h) = kI * double(m) * b.table.Y(k, h) / st;
            }
    }
    return b;
}

Eigen::MatrixXcd shell_analyse(const ShellBasis& b, const VolumeQuadrature& quad, const Eigen::VectorXcd& f) {
    if (f.size() != quad.size()) throw std::invalid_argument("shell_analyse: density size mismatch");
    Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> F(
        f.data(), quad.shells(), quad.per_shell());
    return F * b.wconj;
}

namespace {

Eigen::VectorXcd flatten(const Eigen::MatrixXcd& m) {
    Eigen::VectorXcd out(m.size());
    Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), m.rows(),
                                                                                        m.cols()) = m;
    return out;
}

}  // namespace

Eigen::VectorXcd shell_synthesise(const ShellBasis& b, const Eigen::MatrixXcd& c) {
    return flatten(c * b.table.Y.transpose());
}

CField shell_gradient(const ShellBasis& b, const VolumeQuadrature& quad, const Eigen::MatrixXcd& c,
                      const Eigen::MatrixXcd& dc) {
    const Eigen::MatrixXcd vr = dc * b.table.Y.transpose();
    const Eigen::MatrixXcd vt = c * b.table.dtheta.transpose();
    const Eigen::MatrixXcd vp = c * b.aphi.transpose();
    const int ns = quad.shells(), np = quad.per_shell();
    CField g(quad.size(), 3);
    for (int k = 0; k < np; ++k) {
        double r, th, ph;
        Vec3 er, et, ep;
        spherical_frame(quad.sphere.normals[k], r, th, ph, er, et, ep);
        for (int s = 0; s < ns; ++s) {
            const double inv = 1.0 / quad.shell_radius[s];
            g.row(s * np + k) = (vr(s, k) * er.cast<cplx>() + inv * vt(s, k) * et.cast<cplx>() +
                                 inv * vp(s, k) * ep.cast<cplx>())
                                    .transpose();
        }
    }
    return g;
}

Eigen::MatrixXd lagrange_derivative(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> wb(n, 1.0);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
            if (k != j) wb[j] /= (x[j] - x[k]);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (i != j) {
                D(i, j) = wb[j] / wb[i] / (x[i] - x[j]);
                D(i, i) -= D(i, j);
            }
    }
    return D;
}

CField spectral_gradient(const ShellBasis& b, const VolumeQuadrature& quad, const Eigen::VectorXcd& f) {
    const Eigen::MatrixXcd c = shell_analyse(b, quad, f);
    Eigen::MatrixXcd dc(c.rows(), c.cols());
    const int ro = quad.radial_order;
    for (int seg = 0; seg < quad.segments(); ++seg) {
        const int s0 = seg * ro;
        std::vector<double> xs(quad.shell_radius.begin() + s0, quad.shell_radius.begin() + s0 + ro);
        dc.middleRows(s0, ro) = lagrange_derivative(xs).cast<cplx>() * c.middleRows(s0, ro);
    }
    return shell_gradient(b, quad, c, dc);
}

// ---------------------------------------------------------------- volume operator

VolumeOperator::VolumeOperator(const VolumeQuadrature& quad, int lmax, RadialKernel kernel)
    : quad_(quad), lmax_(lmax), kernel_(kernel) {
    if (lmax < 0) throw std::invalid_argument("VolumeOperator: lmax must be >= 0");
    basis_ = make_shell_basis(quad_, lmax_);
    const int ns = quad_.shells();
    node_val_.assign(lmax_ + 1, Eigen::MatrixXcd(ns, ns));
    node_der_.assign(lmax_ + 1, Eigen::MatrixXcd(ns, ns));
#pragma omp parallel for schedule(static)
    for (int t = 0; t < ns; ++t) {
        Eigen::MatrixXcd v, d;
        radial_rows(quad_.shell_radius[t], v, d);
        for (int n = 0; n <= lmax_; ++n) {
            node_val_[n].row(t) = v.row(n);
            node_der_[n].row(t) = d.row(n);
        }
    }
}

void VolumeOperator::radial_rows(double r, Eigen::MatrixXcd& val, Eigen::MatrixXcd& der) const {
    const int ns = quad_.shells(), ro = quad_.radial_order;
    val = Eigen::MatrixXcd::Zero(lmax_ + 1, ns);
    der = Eigen::MatrixXcd::Zero(lmax_ + 1, ns);
    const GaussRule& g = panel_rule();
    std::vector<double> ell;
    for (int seg = 0; seg < quad_.segments(); ++seg) {
        const double a = quad_.breaks[seg], b = quad_.breaks[seg + 1];
        const int s0 = seg * ro;
        std::vector<double> xs(quad_.shell_radius.begin() + s0, quad_.shell_radius.begin() + s0 + ro);
        std::vector<std::vector<double>> pieces;
        if (r <= a) {
            pieces.push_back(panels_above(a, b));
        } else if (r >= b) {
            pieces.push_back(panels_below(a, b));
        } else {
            pieces.push_back(panels_below(a, r));
            pieces.push_back(panels_above(r, b));
        }
        for (const auto& br : pieces)
            for (std::size_t p = 0; p + 1 < br.size(); ++p) {
                const double lo = br[p], hi = br[p + 1];
                for (int q = 0; q < kPanelPoints; ++q) {
                    const double s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g.x[q];
                    const double w = 0.5 * (hi - lo) * g.w[q] * s * s;
                    lagrange_values(xs, s, ell);
                    for (int n = 0; n <= lmax_; ++n) {
                        const cplx kv = kernel_.value(n, r, s) * w;
                        const cplx kd = kernel_.dr(n, r, s) * w;
                        for (int j = 0; j < ro; ++j) {
                            val(n, s0 + j) += kv * ell[j];
                            der(n, s0 + j) += kd * ell[j];
                        }
                    }
                }
            }
    }
}

Eigen::MatrixXcd VolumeOperator::analyse(const Eigen::VectorXcd& f) const { return shell_analyse(basis_, quad_, f); }

Eigen::VectorXcd VolumeOperator::apply(const Eigen::VectorXcd& f) const {
    const Eigen::MatrixXcd c = analyse(f);
    Eigen::MatrixXcd out(c.rows(), c.cols());
    for (int n = 0; n <= lmax_; ++n)
        out.middleCols(n * n, 2 * n + 1) = node_val_[n] * c.middleCols(n * n, 2 * n + 1);
    return shell_synthesise(basis_, out);
}

CField VolumeOperator::apply(const CField& f) const {
    CField out(f.rows(), 3);
    for (int c = 0; c < 3; ++c) out.col(c) = apply(Eigen::VectorXcd(f.col(c)));
    return out;
}

void VolumeOperator::node_coefficients(const Eigen::MatrixXcd& c, Eigen::MatrixXcd* out,
                                       Eigen::MatrixXcd* dout) const {
    if (out) out->resize(c.rows(), c.cols());
    if (dout) dout->resize(c.rows(), c.cols());
    for (int n = 0; n <= lmax_; ++n) {
        if (out) out->middleCols(n * n, 2 * n + 1) = node_val_[n] * c.middleCols(n * n, 2 * n + 1);
        if (dout) dout->middleCols(n * n, 2 * n + 1) = node_der_[n] * c.middleCols(n * n, 2 * n + 1);
    }
}

CField VolumeOperator::gradient(const Eigen::VectorXcd& f) const {
    const Eigen::MatrixXcd c = analyse(f);
    Eigen::MatrixXcd out(c.rows(), c.cols()), dout(c.rows(), c.cols());
    for (int n = 0; n <= lmax_; ++n) {
        out.middleCols(n * n, 2 * n + 1) = node_val_[n] * c.middleCols(n * n, 2 * n + 1);
        dout.middleCols(n * n, 2 * n + 1) = node_der_[n] * c.middleCols(n * n, 2 * n + 1);
    }
    return shell_gradient(basis_, quad_, out, dout);
}

void VolumeOperator::evaluate(const Eigen::VectorXcd& f, const std::vector<Vec3>& targets,
                              Eigen::VectorXcd* value, CField* grad) const {
    const Eigen::MatrixXcd c = analyse(f);
    evaluate_coefficients(c, targets, value, grad);
}

void VolumeOperator::evaluate_coefficients(const Eigen::MatrixXcd& c, const std::vector<Vec3>& targets,
                                           Eigen::VectorXcd* value, CField* grad) const {
    const int nh = harmonic_count(lmax_);
    synthesise_targets(
        lmax_, targets, 1e-10 * quad_.outer_radius,
        [&](double r, Eigen::VectorXcd& o, Eigen::VectorXcd& d) {
            Eigen::MatrixXcd rv, rd;
            radial_rows(r, rv, rd);
            o.resize(nh);
            d.resize(nh);
            for (int n = 0; n <= lmax_; ++n) {
                o.segment(n * n, 2 * n + 1) = (rv.row(n) * c.middleCols(n * n, 2 * n + 1)).transpose();
                d.segment(n * n, 2 * n + 1) = (rd.row(n) * c.middleCols(n * n, 2 * n + 1)).transpose();
            }
        },
        value, grad);
}

void synthesise_targets(int lmax, const std::vector<Vec3>& targets, double floor_radius,
                        const RadialCoefficients& coeffs, Eigen::VectorXcd* value, CField* grad) {
    const TargetSet ts = expand_targets(targets, floor_radius);
    const std::vector<Vec3>& dirs = ts.dirs;
    const std::vector<double>& radii = ts.radii;
    const int nt = static_cast<int>(dirs.size());
    Eigen::VectorXcd vals(nt);
    CField grads(nt, 3);
    const HarmonicTable tab = make_harmonic_table(lmax, dirs);
    std::map<double, std::pair<Eigen::VectorXcd, Eigen::VectorXcd>> rows;
    for (double r : radii) rows[r];
    std::vector<double> keys;
    for (auto& kv : rows) keys.push_back(kv.first);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(keys.size()); ++i) {
        auto& slot = rows.at(keys[i]);
        coeffs(keys[i], slot.first, slot.second);
    }
    for (int i = 0; i < nt; ++i) {
        const auto& [o, d] = rows.at(radii[i]);
        vals[i] = tab.Y.row(i) * o;
        if (grad) {
            double r, th, ph;
            Vec3 er, et, ep;
            spherical_frame(dirs[i], r, th, ph, er, et, ep);
            const double st = std::sin(th);
            cplx gr = tab.Y.row(i) * d, gt = tab.dtheta.row(i) * o, gp = 0.0;
            for (int n = 0; n <= lmax; ++n)
                for (int m = -n; m <= n; ++m) {
                    const int h = harmonic_index(n, m);
                    gp += kI * double(m) * tab.Y(i, h) / st * o[h];
                }
            const double inv = 1.0 / radii[i];
            grads.row(i) = (gr * er.cast<cplx>() + inv * gt * et.cast<cplx>() + inv * gp * ep.cast<cplx>()).transpose();
        }
    }
    const int n0 = static_cast<int>(targets.size());
    if (value) {
        value->resize(n0);
        for (int i = 0; i < n0; ++i) (*value)[i] = 0.5 * (vals[ts.first[i]] + vals[ts.second[i]]);
    }
    if (grad) {
        grad->resize(n0, 3);
        for (int i = 0; i < n0; ++i) grad->row(i) = 0.5 * (grads.row(ts.first[i]) + grads.row(ts.second[i]));
    }
}

// ---------------------------------------------------------------- volume wrappers

namespace {

RadialKernel helmholtz_or_laplace(double k0) {
    return k0 > 0.0 ? RadialKernel{KernelKind::helmholtz, k0} : RadialKernel{KernelKind::laplace, 0.0};
}

// curl from the gradients of the three components: curl_i = eps_ijk d_j F_k
CField curl_from_gradients(const CField& g0, const CField& g1, const CField& g2) {
    CField out(g0.rows(), 3);
    out.col(0) = g2.col(1) - g1.col(2);
    out.col(1) = g0.col(2) - g2.col(0);
    out.col(2) = g1.col(0) - g0.col(1);
    return out;
}

}  // namespace

Eigen::VectorXcd volume_potential(double k0, const VolumeQuadrature& quad, const Eigen::VectorXcd& density,
                                  const std::vector<Vec3>& targets, int lmax) {
    VolumeOperator op(quad, lmax, helmholtz_or_laplace(k0));
    Eigen::VectorXcd v;
    op.evaluate(density, targets, &v, nullptr);
    return v;
}

CField volume_potential(double k0, const VolumeQuadrature& quad, const CField& density,
                        const std::vector<Vec3>& targets, int lmax) {
    VolumeOperator op(quad, lmax, helmholtz_or_laplace(k0));
    CField out(targets.size(), 3);
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXcd v;
        op.evaluate(density.col(c), targets, &v, nullptr);
        out.col(c) = v;
    }
    return out;
}

CField d2_volume_potential(const VolumeQuadrature& quad, const CField& density, const Eigen::VectorXcd& div,
                           const std::vector<Vec3>& targets, int lmax) {
    if (div.size() != density.rows() || div.size() != quad.size())
        throw std::invalid_argument("d2_volume_potential: divergence samples are required at every node");
    VolumeOperator op(quad, lmax, RadialKernel{});
    CField g;
    op.evaluate(div, targets, nullptr, &g);
    return g;
}

CField curl_volume_potential(double k0, const VolumeQuadrature& quad, const CField& density, const CField& curl,
                             const std::vector<Vec3>& targets, CurlPath path, int lmax) {
    if (path == CurlPath::curl_density) {
        if (curl.rows() != quad.size())
            throw std::invalid_argument("curl_volume_potential: curl samples are required at every node");
        return volume_potential(k0, quad, curl, targets, lmax);
    }
    if (density.rows() != quad.size()) throw std::invalid_argument("curl_volume_potential: density size mismatch");
    VolumeOperator op(quad, lmax, helmholtz_or_laplace(k0));
    CField g[3];
    for (int c = 0; c < 3; ++c) op.evaluate(density.col(c), targets, nullptr, &g[c]);
    return curl_from_gradients(g[0], g[1], g[2]);
}

Eigen::VectorXcd l_operator(const VolumeQuadrature& quad, const Eigen::VectorXcd& density,
                            const std::vector<Vec3>& targets, int lmax) {
    VolumeOperator op(quad, lmax, RadialKernel{KernelKind::distance, 0.0});
    Eigen::VectorXcd v;
    op.evaluate(density, targets, &v, nullptr);
    return v;
}

// ---------------------------------------------------------------- surface operators

SurfaceKernelSpectrum surface_spectrum(SurfaceKernel which, double k0, double R, double r, int lmax) {
    if (!(R > 0.0) || r < 0.0) throw std::invalid_argument("surface_spectrum: invalid radii");
    const RadialKernel ker = helmholtz_or_laplace(k0);
    // t = 1 - 2u^2 moves the near-singular point t = 1 to u = 0
    const double u0 = r > 0.0 ? std::abs(r - R) / (2.0 * std::sqrt(r * R)) : 1.0;
    std::vector<double> br{0.0, 0.25, 0.5, 0.75, 1.0};
    if (u0 > 0.0 && u0 < 0.25)
        for (double u = u0 / 8.0; u < 1.0; u *= 2.0) br.push_back(u);
    if (u0 == 0.0)
        for (double u = 1.0 / 64.0; u < 0.25; u *= 2.0) br.push_back(u);
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());

    SurfaceKernelSpectrum out;
    out.value.assign(lmax + 1, 0.0);
    out.dr.assign(lmax + 1, 0.0);
    const GaussRule& g = panel_rule();
    std::vector<double> P(lmax + 1);
    for (std::size_t p = 0; p + 1 < br.size(); ++p) {
        const double lo = br[p], hi = br[p + 1];
        for (int q = 0; q < kPanelPoints; ++q) {
            const double u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g.x[q];
            const double w = 0.5 * (hi - lo) * g.w[q] * 4.0 * u;
            const double t = 1.0 - 2.0 * u * u;
            const double d = std::sqrt((r - R) * (r - R) + 4.0 * r * R * u * u);
            cplx kv = 0.0, kd = 0.0;
            switch (which) {
                case SurfaceKernel::single_layer:
                    kv = ker.of_distance(d);
                    kd = ker.d_of_distance(d) * (r - R * t) / d;
                    break;
                case SurfaceKernel::double_layer:
                    kv = -ker.d_of_distance(d) * (r * t - R) / d;
                    break;
                case SurfaceKernel::adjoint_double_layer:
                    kv = ker.d_of_distance(d) * (r - R * t) / d;
                    break;
            }
            P[0] = 1.0;
            if (lmax >= 1) P[1] = t;
            for (int n = 2; n <= lmax; ++n) P[n] = ((2.0 * n - 1.0) * t * P[n - 1] - (n - 1.0) * P[n - 2]) / n;
            for (int n = 0; n <= lmax; ++n) {
                out.value[n] += w * kv * P[n];
                out.dr[n] += w * kd * P[n];
            }
        }
    }
    for (int n = 0; n <= lmax; ++n) {
        out.value[n] *= 2.0 * kPi * R * R;
        out.dr[n] *= 2.0 * kPi * R * R;
    }
    return out;
}

Eigen::VectorXcd surface_coefficients(const SurfaceQuadrature& quad, const Eigen::VectorXcd& density, int lmax) {
    if (density.size() != quad.size()) throw std::invalid_argument("surface_coefficients: density size mismatch");
    const HarmonicTable tab = make_harmonic_table(lmax, quad.normals);
    const double inv = 1.0 / (quad.radius * quad.radius);
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(harmonic_count(lmax));
    for (int j = 0; j < quad.size(); ++j) c += (quad.weights[j] * inv * density[j]) * tab.Y.row(j).conjugate().transpose();
    return c;
}

namespace {

// sum_n lambda_n(r) sum_m c_nm Y_n^m at targets, with optional gradient
void surface_synthesis(SurfaceKernel which, double k0, double R, const Eigen::VectorXcd& c, int lmax,
                       const std::vector<Vec3>& targets, Eigen::VectorXcd* value, CField* grad) {
    synthesise_targets(
        lmax, targets, 1e-10 * R,
        [&](double r, Eigen::VectorXcd& o, Eigen::VectorXcd& d) {
            const SurfaceKernelSpectrum sp = surface_spectrum(which, k0, R, r, lmax);
            o.resize(c.size());
            d.resize(c.size());
            for (int n = 0; n <= lmax; ++n)
                for (int m = -n; m <= n; ++m) {
                    const int h = harmonic_index(n, m);
                    o[h] = sp.value[n] * c[h];
                    d[h] = sp.dr[n] * c[h];
                }
        },
        value, grad);
}

}  // namespace

Eigen::VectorXcd single_layer(double k0, const SurfaceQuadrature& quad, const Eigen::VectorXcd& density,
                              const std::vector<Vec3>& targets, CField* grad, int lmax) {
    const Eigen::VectorXcd c = surface_coefficients(quad, density, lmax);
    Eigen::VectorXcd v;
    surface_synthesis(SurfaceKernel::single_layer, k0, quad.radius, c, lmax, targets, &v, grad);
    return v;
}

Eigen::VectorXcd double_layer(const SurfaceQuadrature& quad, const Eigen::VectorXcd& density,
                              const std::vector<Vec3>& targets, int lmax) {
    const Eigen::VectorXcd c = surface_coefficients(quad, density, lmax);
    Eigen::VectorXcd v;
    surface_synthesis(SurfaceKernel::double_layer, 0.0, quad.radius, c, lmax, targets, &v, nullptr);
    return v;
}

OperatorMatrix surface_operator(SurfaceKernel which, double k0, const SurfaceQuadrature& source,
                                const SurfaceQuadrature& target, int lmax) {
    if (which != SurfaceKernel::single_layer && k0 != 0.0)
        throw std::invalid_argument("surface_operator: double layer operators are defined at k0 = 0 only");
    const SurfaceKernelSpectrum sp = surface_spectrum(which, k0, source.radius, target.radius, lmax);
    const HarmonicTable ts = make_harmonic_table(lmax, source.normals);
    const HarmonicTable tt = make_harmonic_table(lmax, target.normals);
    Eigen::MatrixXcd lam = tt.Y;
    for (int n = 0; n <= lmax; ++n) lam.middleCols(n * n, 2 * n + 1) *= sp.value[n];
    Eigen::MatrixXcd right = ts.Y.conjugate().transpose();  // harmonics x source nodes
    const double inv = 1.0 / (source.radius * source.radius);
    for (int j = 0; j < source.size(); ++j) right.col(j) *= source.weights[j] * inv;
    OperatorMatrix op;
    op.entries = lam * right;
    const char* tags[] = {"S", "D", "K*"};
    op.kernel_tag = tags[static_cast<int>(which)];
    if (which == SurfaceKernel::double_layer && source.radius == target.radius) op.kernel_tag = "K";
    op.domain_label = "surface r=" + std::to_string(source.radius) + " scalar";
    op.range_label = "surface r=" + std::to_string(target.radius) + " scalar";
    op.wavenumber = k0;
    return op;
}

OperatorMatrix np_operator(const SurfaceQuadrature& quad, bool adjoint, int lmax) {
    return surface_operator(adjoint ? SurfaceKernel::adjoint_double_layer : SurfaceKernel::double_layer, 0.0, quad,
                            quad, lmax);
}

Eigen::VectorXcd richardson_limit(const std::vector<Eigen::VectorXcd>& seq) {
    if (seq.empty()) throw std::invalid_argument("richardson_limit: empty sequence");
    std::vector<Eigen::VectorXcd> t = seq;
    for (std::size_t level = 1; level < seq.size(); ++level) {
        const double f = std::ldexp(1.0, static_cast<int>(level));
        for (std::size_t i = 0; i + level < seq.size(); ++i) t[i] = (f * t[i + 1] - t[i]) / (f - 1.0);
    }
    return t[0];
}

Eigen::VectorXcd single_layer_normal_trace(double k0, const SurfaceQuadrature& quad, const Eigen::VectorXcd& density,
                                           int side, int lmax) {
    std::vector<Eigen::VectorXcd> seq;
    for (int k : kTraceLevels) {
        const double h = std::ldexp(1.0, -k);
        std::vector<Vec3> t;
        for (const Vec3& x : quad.normals) t.push_back(quad.radius * (1.0 + side * h) * x);
        CField g;
        single_layer(k0, quad, density, t, &g, lmax);
        Eigen::VectorXcd dn(quad.size());
        for (int i = 0; i < quad.size(); ++i) dn[i] = (g.row(i) * quad.normals[i].cast<cplx>())(0);
        seq.push_back(dn);
    }
    return richardson_limit(seq);
}

// ---------------------------------------------------------------- Neumann function and ND map

double neumann_function_ball(double eps, const Vec3& x, const Vec3& y) {
    if (!(eps > 0.0)) throw std::invalid_argument("neumann_function_ball: eps must be positive");
    const double rx = x.norm(), ry = y.norm();
    if (rx > 1.0 + 1e-12 || ry > 1.0 + 1e-12) throw std::invalid_argument("neumann_function_ball: points must lie in the unit ball");
    const double d = (x - y).norm();
    if (d == 0.0) throw std::domain_error("neumann_function_ball: singular at x = y");
    const double z = rx * ry;
    const double t = z > 0.0 ? x.dot(y) / z : 0.0;
    const double Rq = std::sqrt(1.0 - 2.0 * t * z + z * z);
    // sum_{n>=1} z^n P_n(t) = 1/Rq - 1 and sum_{n>=1} z^n P_n(t) / n = log(2 / (1 - t z + Rq))
    const double n1 = 1.0 / (4.0 * kPi * d) + (1.0 / Rq - 1.0 + std::log(2.0 / (1.0 - t * z + Rq)) - 1.0) / (4.0 * kPi);
    return n1 / eps;
}

double nd_eigenvalue(const MediumConfig& medium, int n) {
    if (n <= 0) return 0.0;
    const int L = medium.layers();
    // u = a r^n + b r^{-n-1} per layer, innermost b = 0
    double a = 1.0, b = 0.0;
    for (int i = L - 1; i >= 1; --i) {
        const double rho = medium.layer_radii[i];
        const double ein = medium.eps_layers[i], eout = medium.eps_layers[i - 1];
        const double U = a * std::pow(rho, n) + b * std::pow(rho, -n - 1);
        const double F = ein * (n * a * std::pow(rho, n - 1) - (n + 1.0) * b * std::pow(rho, -n - 2));
        // a' rho^n + b' rho^{-n-1} = U, eout (n a' rho^{n-1} - (n+1) b' rho^{-n-2}) = F
        Eigen::Matrix2d M;
        M << std::pow(rho, n), std::pow(rho, -n - 1), eout * n * std::pow(rho, n - 1),
            -eout * (n + 1.0) * std::pow(rho, -n - 2);
        const Eigen::Vector2d sol = M.fullPivLu().solve(Eigen::Vector2d(U, F));
        a = sol[0];
        b = sol[1];
    }
    const double R = medium.outer_radius();
    const double u = a * std::pow(R, n) + b * std::pow(R, -n - 1);
    const double du = n * a * std::pow(R, n - 1) - (n + 1.0) * b * std::pow(R, -n - 2);
    return u / (medium.eps_layers[0] * du);
}

OperatorMatrix nd_map(const MediumConfig& medium, const SurfaceQuadrature& quad, int lmax) {
    const HarmonicTable tab = make_harmonic_table(lmax, quad.normals);
    Eigen::MatrixXcd lam = tab.Y;
    for (int n = 0; n <= lmax; ++n) lam.middleCols(n * n, 2 * n + 1) *= nd_eigenvalue(medium, n);
    Eigen::MatrixXcd right = tab.Y.conjugate().transpose();
    const double inv = 1.0 / (quad.radius * quad.radius);
    for (int j = 0; j < quad.size(); ++j) right.col(j) *= quad.weights[j] * inv;
    OperatorMatrix op;
    op.entries = lam * right;
    op.kernel_tag = "Lambda";
    op.domain_label = "surface r=" + std::to_string(quad.radius) + " scalar mean-zero";
    op.range_label = op.domain_label;
    return op;
}

Eigen::VectorXcd apply_nd_map(const MediumConfig& medium, const SurfaceQuadrature& quad, const Eigen::VectorXcd& data,
                              int lmax) {
    const Eigen::VectorXcd c = surface_coefficients(quad, data, lmax);
    double scale = 0.0;
    for (int j = 0; j < quad.size(); ++j) scale += quad.weights[j] * std::norm(data[j]);
    scale = std::sqrt(scale / (quad.radius * quad.radius));
    if (std::abs(c[0]) > 1e-10 * std::max(scale, 1e-300))
        throw std::domain_error("apply_nd_map: Neumann data must have zero mean");
    const HarmonicTable tab = make_harmonic_table(lmax, quad.normals);
    Eigen::VectorXcd lc = c;
    for (int n = 0; n <= lmax; ++n) lc.segment(n * n, 2 * n + 1) *= nd_eigenvalue(medium, n);
    return tab.Y * lc;
}

}  // namespace maxkit
