#include <cmath>

#include "doctest.h"
#include "maxkit/forward.hpp"

using namespace maxkit;

namespace {

const cplx kI(0.0, 1.0);

MediumConfig two_layer() {
    MediumConfig m;
    m.layer_radii = {1.0, 0.5};
    m.eps_layers = {2.0, 5.0};
    m.sigma_layers = {1.0, 2.0};
    m.mu_interior = 1.5;
    return m;
}

SourceSpec bump(const VolumeQuadrature& q, const std::string& kind, double radius = 0.8, int power = 3) {
    SourceParams p;
    p.kind = kind;
    p.radius = radius;
    p.power = power;
    return sample_source(make_source(p), q.nodes);
}

// toroidal, poloidal and dipolar currents together, so that no normal or
// tangential field component vanishes identically on the sphere
SourceSpec general_source(const VolumeQuadrature& q, double radius = 0.8) {
    SourceSpec a = bump(q, "div_free_bump", radius);
    for (const char* kind : {"poloidal_bump", "dipole_bump"}) {
        const SourceSpec b = bump(q, kind, radius);
        a.values += b.values;
        a.div_values += b.div_values;
        a.curl_values += b.curl_values;
    }
    a.class_tag = SourceClass::general;
    a.kind = "general";
    return a;
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

}  // namespace

TEST_CASE("catalog sources: analytic div and curl match differences") {
    for (const char* kind : {"dipole_bump", "poloidal_bump"}) {
        SourceParams p;
        p.kind = kind;
        p.radius = 0.7;
        p.power = 4;
        p.axis = Vec3(0.3, -0.2, 1.0);
        p.center = Vec3(0.1, 0.05, -0.1);
        const SourceModel a = make_source(p);
        const SourceModel fd = sampled_source(a.value, a.support_radius, a.class_tag);
        for (const Vec3& x : {Vec3(0.2, 0.1, 0.3), Vec3(-0.3, 0.2, -0.1), Vec3(0.0, -0.4, 0.1)}) {
            CHECK(std::abs(a.div(x) - fd.div(x)) < 1e-7);
            CHECK((a.curl(x) - fd.curl(x)).norm() < 1e-7);
        }
    }
}

TEST_CASE("system operator: zero contrast is the identity") {
    auto q = make_ball_quadrature(1.0, {1.0}, 3, 3);
    MediumConfig m;
    const OperatorMatrix a = assemble_system(0.3, m, q, false, 3);
    const Eigen::Index n = a.entries.rows();
    CHECK(n == 6 * q.size());
    CHECK((a.entries - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("system operator: static limit is block lower triangular") {
    auto q = make_ball_quadrature(1.0, {1.0, 0.5}, 3, 3);
    const MediumConfig m = two_layer();
    const OperatorMatrix a = assemble_system(0.1, m, q, true, 3);
    const Eigen::Index h = a.entries.rows() / 2;
    CHECK(a.entries.topRightCorner(h, h).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.entries.bottomLeftCorner(h, h).cwiseAbs().maxCoeff() > 1e-3);
    CHECK(a.entries.topLeftCorner(h, h).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("system operator: A^k - A^0 is second order in omega") {
    auto q = make_ball_quadrature(1.0, {1.0, 0.5}, 3, 3);
    MediumConfig m = two_layer();
    m.sigma_layers = {0.0, 0.0};
    auto gap = [&](double w) {
        return (assemble_system(w, m, q, false, 3).entries - assemble_system(w, m, q, true, 3).entries).norm();
    };
    const double ratio = gap(0.02) / gap(0.01);
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("solve_direct: trivial cases") {
    auto q = make_ball_quadrature(1.0, {1.0}, 5, 4, {0.8});
    ForwardOptions opt;
    opt.lmax = 4;

    SUBCASE("zero source gives zero fields") {
        const SourceSpec s = bump(q, "zero");
        const ForwardSolution sol = solve_direct(0.1, two_layer(), s, q, opt);
        CHECK(sol.E.norm() == 0.0);
        CHECK(sol.H.norm() == 0.0);
    }
    SUBCASE("zero contrast reproduces the incident field") {
        MediumConfig m;
        const SourceSpec s = bump(q, "mixed_bump");
        const double w = 0.2;
        const ForwardSolution sol = solve_direct(w, m, s, q, opt);
        const SystemOperator op(m, q, w, false, 4);
        const Eigen::VectorXcd f = op.rhs(s);
        CHECK((sol.u - f).norm() / f.norm() < 1e-10);
    }
    CHECK_THROWS_AS(solve_direct(0.0, two_layer(), bump(q, "zero"), q, opt), std::domain_error);
}

TEST_CASE("expansion engine: magnetostatic and electrostatic oracles") {
    auto q = make_ball_quadrature(1.0, {1.0}, 6, 5, {0.8});
    auto surf = make_sphere_quadrature(1.0, 6);

    SUBCASE("mu~ = 0: H0 is curl V[J]") {
        MediumConfig m;
        m.eps_layers = {2.0};
        m.sigma_layers = {1.0};
        const SourceSpec s = bump(q, "div_free_bump");
        const ExpansionTerms t = expand_low_freq(m, s, q, surf, 0, 6);
        const CField ref = curl_volume_potential(0.0, q, s.values, s.curl_values, q.nodes, CurlPath::curl_density, 6);
        CHECK((t.H0 - ref).norm() / ref.norm() < 1e-6);
    }
    SUBCASE("curl-free J, zero contrast: omega E -> -(i/eps0) J") {
        MediumConfig m;
        const SourceSpec s = bump(q, "curl_free_bump", 1.0, 2);
        const ExpansionTerms t = expand_low_freq(m, s, q, surf, 1, 6);
        CHECK(t.e_power == -1);
        const CField ref = -kI / m.eps0 * s.values;
        CHECK((t.E_lead - ref).norm() / ref.norm() < 1e-2);
        CHECK(t.H0.norm() < 1e-10 * s.values.norm());
    }
    SUBCASE("E(1) on the sigma path needs sigma > 0") {
        MediumConfig m;
        m.eps_layers = {2.0};
        CHECK_THROWS_AS(expand_low_freq(m, bump(q, "div_free_bump"), q, surf, 1, 6), std::domain_error);
        CHECK_NOTHROW(expand_low_freq(m, bump(q, "div_free_bump"), q, surf, 0, 6));
    }
    SUBCASE("conductivity must not vanish in only some layers") {
        MediumConfig m = two_layer();
        m.sigma_layers = {0.0, 1.0};
        auto q2 = make_ball_quadrature(1.0, {1.0, 0.5}, 4, 4, {0.8});
        CHECK_THROWS_AS(expand_low_freq(m, bump(q2, "div_free_bump"), q2, surf, 1, 4), std::domain_error);
    }
}

TEST_CASE("expansion engine: E(1) is tangentially continuous and normal-free inside") {
    const MediumConfig m = two_layer();
    auto q = make_ball_quadrature(1.0, {1.0, 0.5}, 6, 5, {0.8});
    // same directions as the shells of the volume rule
    auto surf = make_sphere_quadrature(1.0, 5);
    const SourceSpec s = bump(q, "div_free_bump");
    const ExpansionTerms t = expand_low_freq(m, s, q, surf, 1, 5);
    CHECK(t.e_power == 1);
    // interior trace by extrapolating the nodal field along each ray of the outer segment
    const int np = q.per_shell(), ro = q.radial_order, ns = q.shells();
    CField inner(np, 3);
    for (int k = 0; k < np; ++k)
        for (int c = 0; c < 3; ++c) {
            cplx v = 0.0;
            for (int j = 0; j < ro; ++j) {
                const int sj = ns - ro + j;
                double ell = 1.0;
                for (int l = 0; l < ro; ++l)
                    if (l != j) {
                        const int sl = ns - ro + l;
                        ell *= (1.0 - q.shell_radius[sl]) / (q.shell_radius[sj] - q.shell_radius[sl]);
                    }
                v += ell * t.E_lead(sj * np + k, c);
            }
            inner(k, c) = v;
        }
    const double scale = t.E_lead_surface.norm();
    CHECK((tangential_part(inner, surf.normals) - tangential_part(t.E_lead_surface, surf.normals)).norm() / scale <
          1e-4);
    CHECK(normal_part(inner, surf.normals).norm() / scale < 1e-4);
}

TEST_CASE("direct solve and expansion engine agree to the next order") {
    const MediumConfig m = two_layer();
    auto q = make_ball_quadrature(1.0, {1.0, 0.5}, 6, 5, {0.8});
    auto surf = make_sphere_quadrature(1.0, 6);
    const SourceSpec s = bump(q, "div_free_bump");
    ForwardOptions opt;
    opt.lmax = 5;
    const ExpansionTerms t = expand_low_freq(m, s, q, surf, 2, opt.lmax);
    double prev_e = 0.0, prev_h = 0.0;
    for (double w : {1e-2, 5e-3}) {
        const ForwardSolution sol = solve_direct(w, m, s, q, opt);
        CField E, H;
        evaluate_fields(sol, m, s, q, surf.nodes, E, H, opt.lmax);
        const double de = (E - w * t.E_lead_surface).norm(), dh = (H - t.H0_surface - w * t.H1_surface).norm();
        if (prev_e > 0.0) {
            CHECK(prev_e / de == doctest::Approx(4.0).epsilon(0.25));
            CHECK(prev_h / dh == doctest::Approx(4.0).epsilon(0.25));
        }
        prev_e = de;
        prev_h = dh;
    }
}

TEST_CASE("off-centre current: no spurious static electric field") {
    // the support sphere of an off-centre bump is a break the samples do not resolve radially
    MediumConfig m;
    m.eps_layers = {2.0};
    m.sigma_layers = {1.0};
    SourceParams p;
    p.radius = 0.55;
    p.center = Vec3(0.15, -0.1, 0.2);
    p.axis = Vec3(0.6, 0.0, 0.8);
    auto q = make_ball_quadrature(1.0, {1.0}, 7, 6, {p.center.norm() + p.radius});
    auto surf = make_sphere_quadrature(1.0, 6);
    const SourceSpec s = sample_source(make_source(p), q.nodes);
    ForwardOptions opt;
    opt.lmax = 6;
    const ExpansionTerms t = expand_low_freq(m, s, q, surf, 1, opt.lmax);
    const double w = 1e-3;
    const ForwardSolution sol = solve_direct(w, m, s, q, opt);
    CField E, H;
    evaluate_fields(sol, m, s, q, surf.nodes, E, H, opt.lmax);
    CHECK((E - w * t.E_lead_surface).norm() < 1e-2 * (w * t.E_lead_surface).norm());
}

TEST_CASE("boundary data: transmission conditions and symmetry") {
    const MediumConfig m = two_layer();
    auto q = make_ball_quadrature(1.0, {1.0, 0.5}, 7, 5, {0.8});
    auto surf = make_sphere_quadrature(1.0, 6);
    const SourceSpec s = general_source(q);
    ForwardOptions opt;
    opt.lmax = 5;
    const double w = 0.05;
    const ForwardSolution sol = solve_direct(w, m, s, q, opt);
    CField Ep, Hp, Em, Hm;
    evaluate_fields(sol, m, s, q, surf.nodes, Ep, Hp, opt.lmax);
    interior_traces(sol, m, s, q, surf, Em, Hm, opt.lmax);

    const Eigen::VectorXcd dp = m.eps0 * normal_part(Ep, surf.normals);
    const Eigen::VectorXcd dm = m.eps_complex(0, w) * normal_part(Em, surf.normals);
    CHECK((dp - dm).norm() / dp.norm() < 1e-3);
    const Eigen::VectorXcd bp = m.mu0 * normal_part(Hp, surf.normals);
    const Eigen::VectorXcd bm = m.mu_interior * normal_part(Hm, surf.normals);
    CHECK((bp - bm).norm() / bp.norm() < 1e-3);
    CHECK((tangential_part(Hp, surf.normals) - tangential_part(Hm, surf.normals)).norm() / Hp.norm() < 1e-3);
    CHECK((tangential_part(Ep, surf.normals) - tangential_part(Em, surf.normals)).norm() / Ep.norm() < 1e-3);

    // the source is symmetric about the z axis: rotating by one azimuth step maps the data onto itself
    const double dphi = 2.0 * M_PI / surf.n_phi;
    const Eigen::Matrix3cd rot = Eigen::AngleAxisd(dphi, Vec3::UnitZ()).toRotationMatrix().cast<cplx>();
    double err = 0.0;
    for (int it = 0; it < surf.n_theta; ++it)
        for (int ip = 0; ip < surf.n_phi; ++ip) {
            const int i = it * surf.n_phi + ip, j = it * surf.n_phi + (ip + 1) % surf.n_phi;
            err = std::max(err, (rot * Ep.row(i).transpose() - Ep.row(j).transpose()).norm());
            err = std::max(err, (rot * Hp.row(i).transpose() - Hp.row(j).transpose()).norm());
        }
    CHECK(err < 1e-9 * std::max(Ep.cwiseAbs().maxCoeff(), Hp.cwiseAbs().maxCoeff()));

    const SourceSpec zero = bump(q, "zero");
    const BoundaryDataset d = boundary_data({0.01, 0.02}, m, zero, surf, q, opt);
    CHECK(d.E.size() == 2);
    CHECK(d.E[1].norm() == 0.0);
    CHECK(d.H[0].norm() == 0.0);
}

TEST_CASE("interior divergence constraints") {
    MediumConfig m;
    m.eps_layers = {3.0};
    m.mu_interior = 2.0;
    auto q = make_ball_quadrature(1.0, {1.0}, 7, 5, {0.6});
    ForwardOptions opt;
    opt.lmax = 5;
    const SourceSpec s = general_source(q, 0.6);
    const double w = 0.05;
    const ForwardSolution sol = solve_direct(w, m, s, q, opt);
    const VectorPotentials pot(q, 0.0, opt.lmax);
    const Eigen::VectorXcd de = pot.divergence(sol.E * m.eps_complex(0, w) / m.eps0);
    const Eigen::VectorXcd ref = -kI / (w * m.eps0) * s.div_values;
    CHECK((de - ref).norm() / ref.norm() < 1e-2);
    const Eigen::VectorXcd dh = pot.divergence(sol.H * m.mu_interior);
    CHECK(dh.norm() / (m.mu_interior * sol.H.norm()) < 1e-2);
}
