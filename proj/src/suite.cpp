#include "maxkit/suite.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "maxkit/inverse.hpp"

namespace maxkit {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Eigen::VectorXcd sample_harmonic(const SurfaceQuadrature& q, int n, int m) {
    Eigen::VectorXcd v(q.size());
    for (int i = 0; i < q.size(); ++i) v[i] = eval_spherical_harmonic(n, m, q.normals[i]);
    return v;
}

Eigen::VectorXcd normal_part(const CField& f, const std::vector<Vec3>& n) {
    Eigen::VectorXcd out(f.rows());
    for (int i = 0; i < f.rows(); ++i) out[i] = (f.row(i) * n[i].cast<cplx>())(0);
    return out;
}

CField tangential_part(const CField& f, const std::vector<Vec3>& n) {
    CField out = f;
    const Eigen::VectorXcd fn = normal_part(f, n);
    for (int i = 0; i < f.rows(); ++i) out.row(i) -= fn[i] * n[i].cast<cplx>().transpose();
    return out;
}

double weighted_l2(const std::vector<double>& w, const CField& f) {
    double s = 0.0;
    for (int i = 0; i < f.rows(); ++i) s += w[i] * f.row(i).squaredNorm();
    return std::sqrt(s);
}

Check named(std::string name, double measured, double required) {
    Check c;
    c.name = std::move(name);
    c.measured = measured;
    c.required = required;
    return c;
}

Check finish(Check c, Clock::time_point t0, bool at_most = false) {
    c.pass = at_most ? c.measured <= c.required : c.measured < c.required;
    c.seconds = since(t0);
    return c;
}

}  // namespace

Check check_np_spectrum(int surface_order, int lmax, int nmax, double bound) {
    const auto t0 = Clock::now();
    const SurfaceQuadrature s = make_sphere_quadrature(1.0, surface_order);
    const OperatorMatrix K = np_operator(s, true, lmax);
    Check c = named("NP spectrum", 0.0, bound);
    for (int n = 0; n <= nmax; ++n)
        for (int m = -n; m <= n; ++m) {
            const Eigen::VectorXcd y = sample_harmonic(s, n, m);
            const double lam = -1.0 / (2.0 * (2 * n + 1));
            c.measured = std::max(c.measured, (K.entries * y - lam * y).cwiseAbs().maxCoeff());
        }
    std::ostringstream d;
    d << "order " << surface_order << ", lmax " << lmax << ", n <= " << nmax << ", max abs error";
    c.detail = d.str();
    return finish(c, t0);
}

Check check_trace_formulae(int surface_order, int lmax, int nmax, double bound) {
    const auto t0 = Clock::now();
    const SurfaceQuadrature s = make_sphere_quadrature(1.0, surface_order);
    const OperatorMatrix Ks = np_operator(s, true, lmax);
    Check c = named("trace formulae", 0.0, bound);
    for (int n = 0; n <= nmax; ++n)
        for (int m = -n; m <= n; ++m) {
            const Eigen::VectorXcd phi = sample_harmonic(s, n, m);
            for (int side : {-1, 1}) {
                const Eigen::VectorXcd lim = single_layer_normal_trace(0.0, s, phi, side, lmax);
                const Eigen::VectorXcd expect = -side * 0.5 * phi + Ks.entries * phi;
                // the interior trace of S[Y_0^0] vanishes; measure against phi there
                const double scale = expect.norm() > 1e-8 * phi.norm() ? expect.norm() : phi.norm();
                c.measured = std::max(c.measured, (lim - expect).norm() / scale);
            }
        }
    std::ostringstream d;
    d << "Y_n^m, n <= " << nmax << ", both sides, max relative L2 error";
    c.detail = d.str();
    return finish(c, t0);
}

std::vector<Check> check_d2v(int radial_order, int angular_order, int lmax, double bound, double form_bound) {
    const auto t0 = Clock::now();
    auto make = [](const char* kind, double radius, int power, Vec3 axis) {
        SourceParams p;
        p.kind = kind;
        p.radius = radius;
        p.power = power;
        p.axis = axis.normalized();
        return p;
    };
    const std::vector<SourceParams> grads = {
        make("curl_free_bump", 0.8, 3, Vec3::UnitZ()), make("curl_free_bump", 0.6, 4, Vec3::UnitZ()),
        make("dipole_bump", 0.8, 3, Vec3::UnitZ()),    make("dipole_bump", 0.7, 3, Vec3(1, 1, 0)),
        make("dipole_bump", 0.9, 4, Vec3(0, 1, 2))};
    const std::vector<SourceParams> sols = {
        make("div_free_bump", 0.8, 3, Vec3::UnitZ()),  make("div_free_bump", 0.6, 4, Vec3(1, 0, 1)),
        make("poloidal_bump", 0.8, 3, Vec3::UnitZ()),  make("poloidal_bump", 0.7, 3, Vec3(0, 1, 0)),
        make("div_free_bump", 0.9, 3, Vec3(1, 2, 3))};
    const VolumeQuadrature q =
        make_ball_quadrature(1.0, {1.0}, radial_order, angular_order, {0.6, 0.7, 0.8, 0.9});
    Check g = named("D2V = -I on gradients", 0.0, bound), z = named("D2V = 0 on solenoidal fields", 0.0, bound);
    Check f = named("Re <D2V phi, phi> on gradients", -std::numeric_limits<double>::infinity(), form_bound);
    for (const SourceParams& p : grads) {
        const SourceSpec s = sample_source(make_source(p), q.nodes);
        const CField a = d2_volume_potential(q, s.values, s.div_values, q.nodes, lmax);
        g.measured = std::max(g.measured, weighted_l2(q.weights, CField(a + s.values)) / weighted_l2(q.weights, s.values));
        double form = 0.0;
        for (int i = 0; i < q.size(); ++i) form += q.weights[i] * std::real(a.row(i).dot(s.values.row(i)));
        f.measured = std::max(f.measured, form);
    }
    for (const SourceParams& p : sols) {
        const SourceSpec s = sample_source(make_source(p), q.nodes);
        const CField a = d2_volume_potential(q, s.values, s.div_values, q.nodes, lmax);
        z.measured = std::max(z.measured, weighted_l2(q.weights, a) / weighted_l2(q.weights, s.values));
    }
    g.detail = "5 compactly supported gradients, max relative L2 error";
    z.detail = "5 compactly supported solenoidal fields, max norm relative to input";
    f.detail = "largest value over the gradients (must be <= bound)";
    return {finish(g, t0), finish(z, t0), finish(f, t0, true)};
}

Check check_neumann_identity(const std::vector<double>& eps, bool verbatim, int lmax, double bound) {
    const auto t0 = Clock::now();
    const SurfaceQuadrature s = make_sphere_quadrature(1.0, 10);
    const VolumeQuadrature q = make_ball_quadrature(1.0, {1.0}, 8, 24, {0.8});
    const std::vector<std::function<double(const Vec3&)>> shapes = {
        [](const Vec3& y) { return 1.0 + y.x() - 2.0 * y.y() * y.z(); },
        [](const Vec3& y) { return y.z() - 3.0 * y.x() * y.x() + y.squaredNorm(); },
        [](const Vec3& y) { return std::cos(3.0 * y.x()) * (1.0 + y.y()); }};
    const OperatorMatrix K = np_operator(s, false, lmax);
    const double half = verbatim ? -0.5 : 0.5;
    Check c = named(verbatim ? "Neumann identity with (-1/2 I + K)" : "Neumann identity with (1/2 I + K)", 0.0, bound);
    for (const auto& shape : shapes) {
        Eigen::VectorXcd rho(q.size());
        double mass = 0.0, vol = 0.0;
        for (int i = 0; i < q.size(); ++i) {
            const Vec3& y = q.nodes[i];
            const double r = y.norm();
            rho[i] = r < 0.8 ? std::pow(1 - r * r / 0.64, 3) * shape(y) : 0.0;
            mass += q.weights[i] * rho[i].real();
            if (r < 0.8) vol += q.weights[i];
        }
        for (int i = 0; i < q.size(); ++i)
            if (q.nodes[i].norm() < 0.8) rho[i] -= mass / vol;
        const Eigen::VectorXcd v = volume_potential(0.0, q, rho, s.nodes, lmax);
        for (double e : eps) {
            Eigen::VectorXcd u(s.size());
#pragma omp parallel for schedule(static)
            for (int j = 0; j < s.size(); ++j) {
                cplx acc = 0.0;
                for (int i = 0; i < q.size(); ++i)
                    if (rho[i] != 0.0) acc += q.weights[i] * neumann_function_ball(e, s.nodes[j], q.nodes[i]) * rho[i];
                u[j] = acc;
            }
            const Eigen::VectorXcd lhs = half * u + K.entries * u;
            const Eigen::VectorXcd rhs = v / e;
            c.measured = std::max(c.measured, (lhs - rhs).norm() / rhs.norm());
        }
    }
    std::ostringstream d;
    d << "3 mean-zero densities, eps in {";
    for (std::size_t i = 0; i < eps.size(); ++i) d << (i ? ", " : "") << eps[i];
    d << "}, max relative L2 residual";
    c.detail = d.str();
    return finish(c, t0);
}

Check check_calderon(double outer, double inner, int surface_order, int lmax, double bound) {
    const auto t0 = Clock::now();
    const BlockSystem b = assemble_block_system(make_sphere_quadrature(outer, surface_order),
                                                make_sphere_quadrature(inner, surface_order), lmax);
    Check c = named("Calderon identity", b.calderon_residual(), bound);
    std::ostringstream d;
    d << "radii (" << outer << ", " << inner << "), order " << surface_order << ", lmax " << lmax;
    c.detail = d.str();
    return finish(c, t0);
}

ForwardRun run_forward(const ForwardConfig& cfg) {
    const ForwardSetup st = make_setup(cfg);
    const MediumConfig& m = cfg.medium;
    const int lmax = cfg.options.lmax;
    ForwardRun out;
    BoundaryDataset& d = out.data;
    d.frequencies = cfg.frequencies;
    d.radius = st.surf.radius;
    d.nodes = st.surf.nodes;
    d.normals = st.surf.normals;
    d.weights = st.surf.weights;
    const std::vector<Vec3>& n = st.surf.normals;
    const std::vector<double>& wt = st.surf.weights;
    for (double w : cfg.frequencies) {
        const ForwardSolution sol = solve_direct(w, m, st.source, st.quad, cfg.options);
        CField Ep, Hp, Em, Hm;
        evaluate_fields(sol, m, st.source, st.quad, st.surf.nodes, Ep, Hp, lmax);
        interior_traces(sol, m, st.source, st.quad, st.surf, Em, Hm, lmax);
        // normal parts are compared against their own size unless they vanish identically
        auto rel = [&](const CField& a, const CField& b, const CField& full) {
            const double fa = weighted_l2(wt, full), na = weighted_l2(wt, a);
            const double scale = na > 1e-8 * fa ? na : fa;
            return scale == 0.0 ? 0.0 : weighted_l2(wt, CField(a - b)) / scale;
        };
        auto nrm = [&](const CField& f, cplx k) {
            const Eigen::VectorXcd v = k * normal_part(f, n);
            CField o = CField::Zero(f.rows(), 3);
            for (int i = 0; i < f.rows(); ++i) o.row(i) = v[i] * n[i].cast<cplx>().transpose();
            return o;
        };
        FrequencySummary r;
        r.omega = w;
        r.e_norm = weighted_l2(wt, Ep);
        r.h_norm = weighted_l2(wt, Hp);
        r.normal_d = rel(nrm(Ep, m.eps0), nrm(Em, m.eps_complex(0, w)), CField(m.eps0 * Ep));
        r.normal_b = rel(nrm(Hp, m.mu0), nrm(Hm, m.mu_interior), CField(m.mu0 * Hp));
        r.tangential_e = rel(tangential_part(Ep, n), tangential_part(Em, n), Ep);
        r.tangential_h = rel(tangential_part(Hp, n), tangential_part(Hm, n), Hp);
        r.iterations = sol.iterations;
        r.solver_residual = sol.residual;
        out.rows.push_back(r);
        d.E.push_back(Ep);
        d.H.push_back(Hp);
    }
    return out;
}

Check check_transmission(const ForwardConfig& cfg, double bound) {
    const auto t0 = Clock::now();
    Check c = named("transmission conditions", 0.0, bound);
    std::ostringstream d;
    for (const FrequencySummary& r : run_forward(cfg).rows) {
        c.measured = std::max(c.measured, r.transmission());
        d << "omega " << r.omega << ": nu.D " << r.normal_d << ", nu.B " << r.normal_b << ", nu x E "
          << r.tangential_e << ", nu x H " << r.tangential_h << "; ";
    }
    c.detail = d.str();
    return finish(c, t0);
}

OrderCheck check_forward_order(const ForwardConfig& cfg, double lo, double hi) {
    const auto t0 = Clock::now();
    const ForwardSetup st = make_setup(cfg);
    const int lmax = cfg.options.lmax;
    const ExpansionTerms t = expand_low_freq(cfg.medium, st.source, st.quad, st.surf, 2, lmax);
    OrderCheck out;
    out.frequencies = cfg.frequencies;
    for (double w : cfg.frequencies) {
        const ForwardSolution sol = solve_direct(w, cfg.medium, st.source, st.quad, cfg.options);
        CField E, H;
        evaluate_fields(sol, cfg.medium, st.source, st.quad, st.surf.nodes, E, H, lmax);
        const CField Ep = std::pow(w, t.e_power) * t.E_lead_surface;
        CField Hp = t.H0_surface;
        if (t.H1_surface.rows() == Hp.rows()) Hp += w * t.H1_surface;
        out.e_error.push_back(weighted_l2(st.surf.weights, CField(E - Ep)));
        out.h_error.push_back(weighted_l2(st.surf.weights, CField(H - Hp)));
    }
    Check& c = out.check;
    c.name = "forward order of accuracy";
    c.required = 0.0;
    bool ok = out.frequencies.size() >= 2;
    double worst = 0.0;
    for (std::size_t i = 1; i < out.frequencies.size(); ++i) {
        out.e_ratio.push_back(out.e_error[i - 1] / out.e_error[i]);
        out.h_ratio.push_back(out.h_error[i - 1] / out.h_error[i]);
        for (double r : {out.e_ratio.back(), out.h_ratio.back()}) {
            ok = ok && r >= lo && r <= hi;
            worst = std::max(worst, std::abs(r - 0.5 * (lo + hi)));
        }
    }
    std::ostringstream d;
    d << "error ratios E";
    for (double r : out.e_ratio) d << " " << r;
    d << ", H";
    for (double r : out.h_ratio) d << " " << r;
    d << " (required in [" << lo << ", " << hi << "])";
    c.detail = d.str();
    c.measured = worst;
    c.required = 0.5 * (hi - lo);
    c.pass = ok;
    c.seconds = since(t0);
    return out;
}

}  // namespace maxkit
