#include <cmath>
#include <stdexcept>

#include "maxkit/forward.hpp"
#include "sphere_tools.hpp"

namespace maxkit {

namespace {

using namespace detail;

constexpr cplx kI(0.0, 1.0);

struct Context {
    const MediumConfig& medium;
    const VolumeQuadrature& quad;
    const SurfaceQuadrature& surf;
    int lmax;
    SurfaceQuadrature fine;  // analysis rule on the outer sphere
    VectorPotentials pot;
    std::vector<double> radii;

    Context(const MediumConfig& m, const VolumeQuadrature& q, const SurfaceQuadrature& s, int l)
        : medium(m),
          quad(q),
          surf(s),
          lmax(l),
          fine(make_sphere_quadrature(m.outer_radius(), std::min(2 * l + 4, kMaxSphereOrder))),
          pot(q, 0.0, l),
          radii(m.layer_radii) {}

    SurfaceQuadrature sphere_at(double r) const { return make_sphere_quadrature(r, fine.order); }

    // V[g] harmonic coefficients and radial derivative at radius r
    void potential_modes(const Eigen::MatrixXcd& c, double r, Eigen::VectorXcd& val, Eigen::VectorXcd& der) const {
        Eigen::MatrixXcd rv, rd;
        pot.op().radial_rows(r, rv, rd);
        const int nh = harmonic_count(lmax);
        val.resize(nh);
        der.resize(nh);
        for (int n = 0; n <= lmax; ++n) {
            val.segment(n * n, 2 * n + 1) = (rv.row(n) * c.middleCols(n * n, 2 * n + 1)).transpose();
            der.segment(n * n, 2 * n + 1) = (rd.row(n) * c.middleCols(n * n, 2 * n + 1)).transpose();
        }
    }
};

struct Magnetostatic {
    CField vol, surf;
    Eigen::VectorXcd alpha;  // u_in = sum alpha_h r^n Y_h
};

// H = curl V[K] + grad u for a divergence-free current K in the ball
Magnetostatic magnetostatic(const Context& ctx, const CField& K) {
    const double R = ctx.medium.outer_radius(), mu = ctx.medium.mu_interior, mu0 = ctx.medium.mu0;
    const int lmax = ctx.lmax;
    Magnetostatic out;
    const CField cf = ctx.pot.at_targets(K, ctx.fine.nodes).curl;
    const Eigen::VectorXcd f = normal_coefficients(ctx.fine, cf, lmax);
    out.alpha = Eigen::VectorXcd::Zero(f.size());
    Eigen::VectorXcd beta = out.alpha;
    for (int n = 0; n <= lmax; ++n)
        for (int m = -n; m <= n; ++m) {
            const int h = harmonic_index(n, m);
            out.alpha[h] = (mu0 - mu) * f[h] / ((mu * n + mu0 * (n + 1.0)) * std::pow(R, n - 1));
            beta[h] = out.alpha[h] * std::pow(R, 2 * n + 1);
        }
    const std::vector<double> ones(lmax + 1, 1.0);
    out.vol = ctx.pot.at_nodes(K).curl + solid_gradient(out.alpha, ones, false, ctx.quad.nodes, lmax, R);
    out.surf = ctx.pot.at_targets(K, ctx.surf.nodes).curl + solid_gradient(beta, ones, true, ctx.surf.nodes, lmax, R);
    return out;
}

// E1 = i mu A + grad phi inside, A = V[J] - sum alpha x * grad(r^n Y) / (n + 1),
// phi from the layered sigma-Neumann problem
struct FirstOrder {
    const Context& ctx;
    const SourceSpec& source;
    Eigen::VectorXcd alpha;
    LayeredHarmonic phi;

    CField at(const std::vector<Vec3>& pts) const {
        const int lmax = ctx.lmax;
        std::vector<double> inv_np1(lmax + 1);
        for (int n = 0; n <= lmax; ++n) inv_np1[n] = 1.0 / (n + 1.0);
        const double R = ctx.medium.outer_radius();
        const CField v = ctx.pot.at_targets(source.values, pts, &source.div_values).v;
        const CField a = v - cross_rows(pts, solid_gradient(alpha, inv_np1, false, pts, lmax, R));
        return kI * ctx.medium.mu_interior * a + phi.gradient(pts, false);
    }
};

FirstOrder first_order(const Context& ctx, const SourceSpec& source, const Eigen::VectorXcd& alpha) {
    const MediumConfig& medium = ctx.medium;
    const int L = medium.layers(), lmax = ctx.lmax;
    const double mu = medium.mu_interior;
    std::vector<Eigen::VectorXcd> data(L);
    for (int j = 0; j < L; ++j) {
        const SurfaceQuadrature s = ctx.sphere_at(ctx.radii[j]);
        const CField v = ctx.pot.at_targets(source.values, s.nodes, &source.div_values).v;
        const Eigen::VectorXcd vn = normal_coefficients(s, v, lmax);
        data[j] = j == 0 ? Eigen::VectorXcd(-kI * mu * medium.sigma_layers[0] * vn)
                         : Eigen::VectorXcd(kI * mu * (medium.sigma_layers[j] - medium.sigma_layers[j - 1]) * vn);
    }
    return {ctx, source, alpha, solve_layered(ctx.radii, medium.sigma_layers, 0.0, data, lmax)};
}

bool divergence_free(const SourceSpec& s) {
    if (s.class_tag == SourceClass::div_free) return true;
    if (s.class_tag == SourceClass::curl_free) return false;
    const double jm = s.values.cwiseAbs().maxCoeff();
    return s.div_values.cwiseAbs().maxCoeff() <= 1e-8 * std::max(jm, 1e-300);
}

// sigma = 0 everywhere (+1), > 0 everywhere (-1); throws otherwise
bool all_conductive(const MediumConfig& m) {
    int pos = 0;
    for (double s : m.sigma_layers) pos += s > 0.0 ? 1 : 0;
    if (pos != 0 && pos != m.layers())
        throw std::domain_error("expand_low_freq: conductivity must be positive in every layer or zero in all");
    return pos > 0;
}

}  // namespace

ExpansionTerms expand_low_freq(const MediumConfig& medium, const SourceSpec& source, const VolumeQuadrature& quad,
                               const SurfaceQuadrature& surf, int order, int lmax) {
    const ValidationReport rep = validate_config(medium, nullptr);
    if (!rep.pass) throw std::domain_error("expand_low_freq: invalid medium: " + rep.violations.front());
    if (order < 0 || order > 2) throw std::invalid_argument("expand_low_freq: order must be 0, 1 or 2");
    if (source.values.rows() != quad.size() || source.div_values.size() != quad.size())
        throw std::invalid_argument("expand_low_freq: source must be sampled on the quadrature nodes");
    if (std::abs(surf.radius - medium.outer_radius()) > 1e-12)
        throw std::invalid_argument("expand_low_freq: surface rule must lie on the outer sphere");

    const Context ctx(medium, quad, surf, lmax);
    const bool conductive = all_conductive(medium);
    const bool div_free = divergence_free(source);
    const int L = medium.layers();
    const double R = medium.outer_radius(), mu = medium.mu_interior, mu0 = medium.mu0;
    const std::vector<double> ones(lmax + 1, 1.0);
    ExpansionTerms t;

    if (div_free) {
        if (!conductive && order >= 1)
            throw std::domain_error(
                "expand_low_freq: E(1) for a divergence-free source needs sigma > 0; use a source with div J != 0");
        t.e_power = 1;
        const Magnetostatic h0 = magnetostatic(ctx, source.values);
        t.H0 = h0.vol;
        t.H0_surface = h0.surf;
        if (order == 0) return t;

        const FirstOrder e1 = first_order(ctx, source, h0.alpha);
        const LayeredHarmonic& phi = e1.phi;
        t.E_lead = e1.at(quad.nodes);

        // exterior: i mu0 (V[J] + sum beta x * grad(r^{-n-1} Y) / n) + grad psi
        std::vector<double> inv_n(lmax + 1, 0.0);
        for (int n = 1; n <= lmax; ++n) inv_n[n] = 1.0 / n;
        const CField vjs = ctx.pot.at_targets(source.values, surf.nodes, &source.div_values).v;
        const CField vjf = ctx.pot.at_targets(source.values, ctx.fine.nodes, &source.div_values).v;
        const Eigen::VectorXcd av = surface_gradient_coefficients(ctx.fine, vjf, lmax);
        const Eigen::VectorXcd phib = phi.value_at_boundary(false);
        Eigen::VectorXcd beta(harmonic_count(lmax)), psi(harmonic_count(lmax));
        for (int n = 0; n <= lmax; ++n)
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                beta[h] = h0.alpha[h] * std::pow(R, 2 * n + 1);
                // psi = sum psi_h r^{-n-1} Y with psi(R) = phi(R) + i (mu - mu0) a
                psi[h] = n == 0 ? cplx(0.0) : (phib[h] + kI * (mu - mu0) * av[h]) * std::pow(R, n + 1);
            }
        t.E_lead_surface = kI * mu0 * (vjs + cross_rows(surf.nodes, solid_gradient(beta, inv_n, true, surf.nodes, lmax, R))) +
                           solid_gradient(psi, ones, true, surf.nodes, lmax, R);
        if (order == 1) return t;

        CField K = t.E_lead;
        for (int i = 0; i < quad.size(); ++i) K.row(i) *= medium.sigma_layers[quad.layer[i]];
        const Magnetostatic h1 = magnetostatic(ctx, K);
        t.H1 = h1.vol;
        t.H1_surface = h1.surf;
        return t;
    }

    // div J != 0: leading E is a gradient
    std::vector<double> kappa = conductive ? medium.sigma_layers : medium.eps_layers;
    Eigen::VectorXcd g(quad.size());
    for (int i = 0; i < quad.size(); ++i) g[i] = source.div_values[i] / kappa[quad.layer[i]];
    const Eigen::MatrixXcd gc = ctx.pot.op().analyse(g);
    // u = s V[g] + h with s = i (sigma = 0) or 1 (sigma > 0)
    const cplx s = conductive ? cplx(1.0) : kI;
    std::vector<Eigen::VectorXcd> data(L);
    for (int j = 0; j < L; ++j) {
        Eigen::VectorXcd val, der;
        ctx.potential_modes(gc, ctx.radii[j], val, der);
        if (j == 0)
            data[0] = conductive ? Eigen::VectorXcd(-kappa[0] * der) : Eigen::VectorXcd(s * (kappa[0] - medium.eps0) * der);
        else
            data[j] = s * (kappa[j] - kappa[j - 1]) * der;
    }
    const LayeredHarmonic h = solve_layered(ctx.radii, kappa, conductive ? 0.0 : medium.eps0, data, lmax);
    CField gv, gs;
    ctx.pot.op().evaluate_coefficients(gc, quad.nodes, nullptr, &gv);
    ctx.pot.op().evaluate_coefficients(gc, surf.nodes, nullptr, &gs);
    t.e_power = conductive ? 0 : -1;
    if (order >= 1) {
        t.E_lead = s * gv + h.gradient(quad.nodes, false);
        if (conductive) {
            // exterior: gradient of the decaying harmonic with the boundary values of u
            Eigen::VectorXcd val, der;
            ctx.potential_modes(gc, R, val, der);
            const Eigen::VectorXcd hb = h.value_at_boundary(false);
            Eigen::VectorXcd c(harmonic_count(lmax));
            for (int n = 0; n <= lmax; ++n)
                for (int m = -n; m <= n; ++m) {
                    const int k = harmonic_index(n, m);
                    c[k] = n == 0 ? cplx(0.0) : (val[k] + hb[k]) * std::pow(R, n + 1);
                }
            t.E_lead_surface = solid_gradient(c, ones, true, surf.nodes, lmax, R);
        } else {
            t.E_lead_surface = s * gs + h.gradient(surf.nodes, true);
        }
    }
    CField K = source.values;
    if (conductive) {
        const CField e0 = s * gv + h.gradient(quad.nodes, false);
        for (int i = 0; i < quad.size(); ++i) K.row(i) += medium.sigma_layers[quad.layer[i]] * e0.row(i);
    }
    const Magnetostatic h0 = magnetostatic(ctx, K);
    t.H0 = h0.vol;
    t.H0_surface = h0.surf;
    return t;
}

CField first_order_field(const MediumConfig& medium, const SourceSpec& source, const VolumeQuadrature& quad,
                         const std::vector<Vec3>& targets, int lmax) {
    if (!all_conductive(medium)) throw std::domain_error("first_order_field: needs sigma > 0 in every layer");
    if (!divergence_free(source)) throw std::domain_error("first_order_field: needs a divergence-free source");
    const SurfaceQuadrature surf = make_sphere_quadrature(medium.outer_radius(), 2);
    const Context ctx(medium, quad, surf, lmax);
    const Magnetostatic h0 = magnetostatic(ctx, source.values);
    return first_order(ctx, source, h0.alpha).at(targets);
}

}  // namespace maxkit
