#include "maxkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace maxkit {

namespace {
constexpr double kPi = std::numbers::pi;
}

void gauss_legendre(int count, std::vector<double>& x, std::vector<double>& w) {
    if (count < 1) throw std::invalid_argument("gauss_legendre: count must be >= 1");
    x.assign(count, 0.0);
    w.assign(count, 0.0);
    for (int i = 0; i < (count + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (count + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= count; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (count == 1) { p1 = z; p0 = 1.0; }
            dp = count * (z * p1 - p0) / (z * z - 1.0);
            double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        // recompute derivative at converged node
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= count; ++k) {
            double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = (count == 1) ? 1.0 : count * (z * p1 - p0) / (z * z - 1.0);
        x[i] = -z;
        x[count - 1 - i] = z;
        w[i] = w[count - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    if (count == 1) { x[0] = 0.0; w[0] = 2.0; }
}

SurfaceQuadrature make_sphere_quadrature(double radius, int order) {
    if (order < 1 || order > kMaxSphereOrder) {
        std::ostringstream os;
        os << "make_sphere_quadrature: unsupported order " << order << " (supported orders: 1.."
           << kMaxSphereOrder << ")";
        throw std::invalid_argument(os.str());
    }
    if (!(radius > 0.0)) throw std::invalid_argument("make_sphere_quadrature: radius must be positive");
    SurfaceQuadrature q;
    q.radius = radius;
    q.order = order;
    q.n_theta = order + 1;
    q.n_phi = 2 * order + 2;
    std::vector<double> x, w;
    gauss_legendre(q.n_theta, x, w);
    const double dphi = 2.0 * kPi / q.n_phi;
    for (int it = 0; it < q.n_theta; ++it) {
        // descending cos(theta) so that theta increases with the index
        const double ct = -x[it];
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        for (int ip = 0; ip < q.n_phi; ++ip) {
            const double ph = ip * dphi;
            Vec3 n(st * std::cos(ph), st * std::sin(ph), ct);
            q.normals.push_back(n);
            q.nodes.push_back(radius * n);
            q.weights.push_back(w[it] * dphi * radius * radius);
        }
    }
    return q;
}

VolumeQuadrature make_ball_quadrature(double outer_radius, const std::vector<double>& layer_radii,
                                      int radial_order, int angular_order,
                                      const std::vector<double>& extra_breaks) {
    if (!(outer_radius > 0.0)) throw std::invalid_argument("make_ball_quadrature: outer radius must be positive");
    if (radial_order < 1) throw std::invalid_argument("make_ball_quadrature: radial order must be >= 1");
    std::vector<double> inner;
    for (std::size_t i = 0; i < layer_radii.size(); ++i) {
        double r = layer_radii[i];
        if (i == 0 && std::abs(r - outer_radius) <= 1e-14 * outer_radius) continue;
        inner.push_back(r);
    }
    double prev = outer_radius;
    for (double r : inner) {
        if (!(r > 0.0) || !(r < prev))
            throw std::invalid_argument("make_ball_quadrature: overlapping or unordered layer radii");
        prev = r;
    }
    VolumeQuadrature q;
    q.outer_radius = outer_radius;
    q.radial_order = radial_order;
    q.angular_order = angular_order;
    q.sphere = make_sphere_quadrature(1.0, angular_order);

    std::vector<double> br{0.0, outer_radius};
    br.insert(br.end(), inner.begin(), inner.end());
    for (double r : extra_breaks)
        if (r > 0.0 && r < outer_radius) br.push_back(r);
    std::sort(br.begin(), br.end());
    for (double r : br)
        if (q.breaks.empty() || r - q.breaks.back() > 1e-12 * outer_radius) q.breaks.push_back(r);

    std::vector<double> gx, gw;
    gauss_legendre(radial_order, gx, gw);
    for (int s = 0; s + 1 < static_cast<int>(q.breaks.size()); ++s) {
        const double a = q.breaks[s], b = q.breaks[s + 1];
        for (int k = 0; k < radial_order; ++k) {
            const double r = 0.5 * (a + b) + 0.5 * (b - a) * gx[k];
            q.shell_radius.push_back(r);
            q.shell_weight.push_back(0.5 * (b - a) * gw[k] * r * r);
            q.shell_segment.push_back(s);
            int lay = 0;
            for (double ri : inner)
                if (ri > r) ++lay;
            q.shell_layer.push_back(lay);
        }
    }
    for (int s = 0; s < q.shells(); ++s) {
        for (int k = 0; k < q.sphere.size(); ++k) {
            q.nodes.push_back(q.shell_radius[s] * q.sphere.normals[k]);
            q.weights.push_back(q.shell_weight[s] * q.sphere.weights[k]);
            q.layer.push_back(q.shell_layer[s]);
        }
    }
    return q;
}

void legendre_table(int lmax, double x, std::vector<double>& out) {
    out.assign(harmonic_count(lmax), 0.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
    double pmm = std::sqrt(1.0 / (4.0 * kPi));
    for (int m = 0; m <= lmax; ++m) {
        if (m > 0) pmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
        out[harmonic_index(m, m)] = pmm;
        if (m + 1 <= lmax) out[harmonic_index(m + 1, m)] = x * std::sqrt(2.0 * m + 3.0) * pmm;
        for (int n = m + 2; n <= lmax; ++n) {
            const double a = std::sqrt((4.0 * n * n - 1.0) / (double(n) * n - double(m) * m));
            const double b = std::sqrt(((n - 1.0) * (n - 1.0) - double(m) * m) /
                                       (4.0 * (n - 1.0) * (n - 1.0) - 1.0));
            out[harmonic_index(n, m)] =
                a * (x * out[harmonic_index(n - 1, m)] - b * out[harmonic_index(n - 2, m)]);
        }
    }
}

void spherical_frame(const Vec3& p, double& r, double& theta, double& phi, Vec3& er, Vec3& et,
                     Vec3& ep) {
    r = p.norm();
    if (r == 0.0) {
        theta = 0.0;
        phi = 0.0;
    } else {
        theta = std::acos(std::clamp(p.z() / r, -1.0, 1.0));
        phi = std::atan2(p.y(), p.x());
    }
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cp = std::cos(phi), sp = std::sin(phi);
    er = Vec3(st * cp, st * sp, ct);
    et = Vec3(ct * cp, ct * sp, -st);
    ep = Vec3(-sp, cp, 0.0);
}

namespace {

void harmonics_at(int lmax, double theta, double phi, std::vector<double>& leg, cplx* row) {
    legendre_table(lmax, std::cos(theta), leg);
    for (int n = 0; n <= lmax; ++n) {
        for (int m = 0; m <= n; ++m) {
            const cplx e = std::polar(1.0, m * phi);
            const cplx y = leg[harmonic_index(n, m)] * e;
            row[harmonic_index(n, m)] = y;
            if (m > 0) row[harmonic_index(n, -m)] = ((m % 2) ? -1.0 : 1.0) * std::conj(y);
        }
    }
}

}  // namespace

cplx eval_spherical_harmonic(int n, int m, const Vec3& direction) {
    if (n < 0 || std::abs(m) > n) throw std::invalid_argument("eval_spherical_harmonic: require |m| <= n");
    const double len = direction.norm();
    if (std::abs(len - 1.0) > 1e-12) throw std::invalid_argument("eval_spherical_harmonic: direction must be a unit vector");
    double r, th, ph;
    Vec3 a, b, c;
    spherical_frame(direction, r, th, ph, a, b, c);
    std::vector<double> leg;
    std::vector<cplx> row(harmonic_count(n));
    harmonics_at(n, th, ph, leg, row.data());
    return row[harmonic_index(n, m)];
}

cplx solid_harmonic(int n, int m, const Vec3& point) {
    if (n < 0 || std::abs(m) > n) throw std::invalid_argument("solid_harmonic: require |m| <= n");
    if (!point.allFinite()) throw std::invalid_argument("solid_harmonic: point must be finite");
    const double r = point.norm();
    if (r == 0.0) return n == 0 ? cplx(1.0 / std::sqrt(4.0 * kPi)) : cplx(0.0);
    return std::pow(r, n) * eval_spherical_harmonic(n, m, point / r);
}

HarmonicTable make_harmonic_table(int lmax, const std::vector<Vec3>& directions) {
    HarmonicTable t;
    t.lmax = lmax;
    const int nh = harmonic_count(lmax + 1);
    const int np = static_cast<int>(directions.size());
    t.Y.resize(np, harmonic_count(lmax));
    t.dtheta.resize(np, harmonic_count(lmax));
    t.theta.resize(np);
    t.phi.resize(np);
    std::vector<double> leg;
    std::vector<cplx> row(nh);
    for (int i = 0; i < np; ++i) {
        double r, th, ph;
        Vec3 a, b, c;
        spherical_frame(directions[i], r, th, ph, a, b, c);
        t.theta[i] = th;
        t.phi[i] = ph;
        harmonics_at(lmax + 1, th, ph, leg, row.data());
        const double st = std::sin(th), ct = std::cos(th);
        const cplx emi = std::polar(1.0, -ph);
        for (int n = 0; n <= lmax; ++n) {
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                t.Y(i, h) = row[h];
                cplx d = 0.0;
                if (m + 1 <= n) d += std::sqrt(double(n - m) * (n + m + 1)) * emi * row[harmonic_index(n, m + 1)];
                if (m != 0) {
                    if (st > 1e-14) {
                        d += double(m) * ct / st * row[h];
                    }
                }
                t.dtheta(i, h) = d;
            }
        }
    }
    return t;
}

}  // namespace maxkit
