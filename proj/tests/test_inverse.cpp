#include <cmath>
#include <random>

#include "doctest.h"
#include "maxkit/inverse.hpp"

using namespace maxkit;

namespace {

const cplx kI(0.0, 1.0);

SourceSpec bump(const VolumeQuadrature& q, const std::string& kind, double radius = 0.8, int power = 3,
                int degree = 1) {
    SourceParams p;
    p.kind = kind;
    p.radius = radius;
    p.power = power;
    p.degree = degree;
    return sample_source(make_source(p), q.nodes);
}

SourceSpec general_div_free(const VolumeQuadrature& q) {
    SourceSpec a = bump(q, "div_free_bump");
    const SourceSpec b = bump(q, "poloidal_bump");
    a.values += b.values;
    a.curl_values += b.curl_values;
    a.kind = "general_div_free";
    return a;
}

AsymptoticCoefficients engine_coefficients(const MediumConfig& m, const SourceSpec& s, const VolumeQuadrature& q,
                                           const SurfaceQuadrature& surf, int lmax) {
    const ExpansionTerms t = expand_low_freq(m, s, q, surf, s.div_values.norm() == 0.0 ? 2 : 1, lmax);
    AsymptoticCoefficients c;
    c.e_power = t.e_power;
    c.E = {t.E_lead_surface};
    c.H = {t.H0_surface};
    if (t.H1_surface.rows() == surf.size()) c.H.push_back(t.H1_surface);
    c.radius = surf.radius;
    c.nodes = surf.nodes;
    c.normals = surf.normals;
    c.weights = surf.weights;
    return c;
}

double rel_l2(const VolumeQuadrature& q, const CField& a, const CField& b) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        num += q.weights[i] * (a.row(i) - b.row(i)).squaredNorm();
        den += q.weights[i] * b.row(i).squaredNorm();
    }
    return std::sqrt(num / den);
}

double rel_l2(const VolumeQuadrature& q, const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        num += q.weights[i] * std::norm(a[i] - b[i]);
        den += q.weights[i] * std::norm(b[i]);
    }
    return std::sqrt(num / den);
}

Eigen::VectorXcd restricted(const VolumeQuadrature& q, double a, const std::function<cplx(const Vec3&)>& f) {
    Eigen::VectorXcd out(q.size());
    for (int i = 0; i < q.size(); ++i) out[i] = q.nodes[i].norm() <= a ? f(q.nodes[i]) : cplx(0.0);
    return out;
}

Eigen::VectorXcd exterior_potential(const VolumeQuadrature& q, const Eigen::VectorXcd& rho,
                                    const SurfaceQuadrature& s, int lmax) {
    const VolumeOperator op(q, lmax, RadialKernel{});
    Eigen::VectorXcd v;
    op.evaluate(rho, s.nodes, &v, nullptr);
    return v;
}

Eigen::VectorXcd normal_part(const CField& f, const std::vector<Vec3>& n) {
    Eigen::VectorXcd out(f.rows());
    for (int i = 0; i < f.rows(); ++i) out[i] = (f.row(i) * n[i].cast<cplx>())(0);
    return out;
}

KnownParameters known_all(const MediumConfig& m) { return {m, true, true, true}; }

}  // namespace

TEST_CASE("fit_asymptotics") {
    const SurfaceQuadrature s = make_sphere_quadrature(1.0, 2);
    BoundaryDataset d;
    d.radius = 1.0;
    d.nodes = s.nodes;
    d.normals = s.normals;
    d.weights = s.weights;
    CField c0 = CField::Random(s.size(), 3), c1 = CField::Random(s.size(), 3);
    for (double w : {0.01, 0.02, 0.03, 0.04}) {
        d.frequencies.push_back(w);
        d.E.push_back(c0 + w * c1);
        d.H.push_back(c0 - w * c1);
    }
    AsymptoticOrders o;
    o.e_power = 0;
    o.e_terms = 2;
    o.h_terms = 2;

    SUBCASE("exact model class") {
        const AsymptoticCoefficients f = fit_asymptotics(d, o);
        CHECK((f.E[0] - c0).norm() < 1e-10 * c0.norm());
        CHECK((f.E[1] - c1).norm() < 1e-10 * c1.norm());
        CHECK((f.H[1] + c1).norm() < 1e-10 * c1.norm());
        CHECK(f.e_order(1) == &f.E[1]);
        CHECK(f.e_order(2) == nullptr);
    }
    SUBCASE("too few frequencies") {
        o.window = 0.015;
        CHECK_THROWS_AS(fit_asymptotics(d, o), std::domain_error);
    }
    SUBCASE("outside the asymptotic regime") {
        for (std::size_t i = 0; i < d.E.size(); ++i) d.E[i] *= std::exp(40.0 * d.frequencies[i]);
        CHECK_THROWS_WITH_AS(fit_asymptotics(d, o), doctest::Contains("data not in asymptotic regime"),
                             std::domain_error);
    }
    SUBCASE("a field at round-off level fits as zero") {
        for (CField& h : d.H) h = 1e-16 * CField::Random(s.size(), 3);
        const AsymptoticCoefficients f = fit_asymptotics(d, o);
        CHECK(f.h_residual < 1e-3);
        CHECK(f.H[0].norm() < 1e-12);
    }
}

TEST_CASE("fit_asymptotics: H(0) of forward data matches the expansion engine") {
    MediumConfig m;
    m.eps_layers = {2.0};
    m.sigma_layers = {1.0};
    m.mu_interior = 1.5;
    auto q = make_ball_quadrature(1.0, {1.0}, 5, 4, {0.8});
    auto surf = make_sphere_quadrature(1.0, 5);
    const SourceSpec s = general_div_free(q);
    ForwardOptions opt;
    opt.lmax = 4;
    const BoundaryDataset d = boundary_data({0.04, 0.02, 0.01, 0.005}, m, s, surf, q, opt);
    const AsymptoticCoefficients f = fit_asymptotics(d, {});
    const ExpansionTerms t = expand_low_freq(m, s, q, surf, 2, opt.lmax);
    CHECK((f.H[0] - t.H0_surface).norm() / t.H0_surface.norm() < 1e-2);
    CHECK((f.E[0] - t.E_lead_surface).norm() / t.E_lead_surface.norm() < 1e-2);
}

TEST_CASE("moments_from_exterior") {
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 6, {0.8});
    auto s = make_sphere_quadrature(1.0, 8);
    const int lmax = 6;

    SUBCASE("|y| Y_1^0 on the 0.8 ball") {
        const Eigen::VectorXcd rho = restricted(q, 0.8, [](const Vec3& y) { return solid_harmonic(1, 0, y); });
        const MomentSet M = moments_from_exterior(s, exterior_potential(q, rho, s, lmax), 4, 0.8);
        CHECK(std::abs(M.at(1, 0) - std::pow(0.8, 5) / 5.0) < 1e-4);
        const MomentSet B = volume_moments(q, rho, 4);
        for (std::size_t h = 0; h < M.coefficients.size(); ++h)
            CHECK(std::abs(M.coefficients[h] - B.coefficients[h]) < 1e-8);
    }
    SUBCASE("zero-mean radial density has no moments") {
        const Eigen::VectorXcd rho =
            restricted(q, 0.8, [](const Vec3& y) { return cplx(y.squaredNorm() - 0.6 * 0.64); });
        const MomentSet M = moments_from_exterior(s, exterior_potential(q, rho, s, lmax), 4, 0.8);
        for (cplx c : M.coefficients) CHECK(std::abs(c) < 1e-8);
    }
    SUBCASE("sphere inside the support") {
        CHECK_THROWS_AS(moments_from_exterior(make_sphere_quadrature(0.5, 4), Eigen::VectorXcd::Zero(50), 2, 0.8),
                        std::domain_error);
    }
}

TEST_CASE("admissible classes and reconstruction") {
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 8, {0.8});
    const double a = 0.8;

    SUBCASE("harmonic density") {
        const Eigen::VectorXcd rho = restricted(q, a, [](const Vec3& y) { return solid_harmonic(1, 0, y); });
        const MomentSet M = volume_moments(q, rho, 4);
        const Reconstruction r = reconstruct_admissible(M, AdmissibleClass::harmonic(3), q, a);
        CHECK(rel_l2(q, r.density, rho) < 1e-3);
        // moments -> reconstruction -> moments
        const MomentSet M2 = volume_moments(q, r.density, 4);
        double num = 0.0, den = 0.0;
        for (std::size_t h = 0; h < M.coefficients.size(); ++h) {
            num += std::norm(M2.coefficients[h] - M.coefficients[h]);
            den += std::norm(M.coefficients[h]);
        }
        CHECK(std::sqrt(num / den) < 1e-6);
    }
    SUBCASE("zero density") {
        MomentSet M;
        M.max_degree = 3;
        M.coefficients.assign(16, 0.0);
        const Reconstruction r = reconstruct_admissible(M, AdmissibleClass::harmonic(2), q, a);
        CHECK(r.density.norm() == 0.0);
    }
    SUBCASE("direction-invariant density") {
        const Vec3 d = Vec3::UnitZ();
        auto f = [&](const Vec3& y) {
            const double s = y.x() / a, t = y.y() / a;
            return cplx(s * t + 0.5 * (3 * s * s - 1) * 0.4 - 0.3 * t);
        };
        const Eigen::VectorXcd rho = restricted(q, a, f);
        const Reconstruction r = reconstruct_admissible(volume_moments(q, rho, 6),
                                                        AdmissibleClass::direction_invariant(d, 3), q, a);
        CHECK(rel_l2(q, r.density, rho) < 5e-2);
    }
    SUBCASE("class too rich") {
        MomentSet M;
        M.max_degree = 1;
        M.coefficients.assign(4, 0.0);
        CHECK_THROWS_AS(reconstruct_admissible(M, AdmissibleClass::harmonic(3), q, a), IdentifiabilityError);
        CHECK_THROWS_AS(AdmissibleClass::direction_invariant(Vec3(1, 1, 0), 2), std::invalid_argument);
    }
}

TEST_CASE("Herglotz functions") {
    HerglotzSpec h;
    h.xi = CVec3(1.0, kI, 0.0) * 1.3;
    h.alpha = 0.7;
    h.beta = -0.2;
    CHECK(h.valid());
    HerglotzSpec bad;
    bad.xi = CVec3(1.0, 0.0, 0.0);
    CHECK_FALSE(bad.valid());

    const SurfaceQuadrature s = make_sphere_quadrature(1.0, 8);
    Eigen::VectorXcd v(s.size());
    for (int i = 0; i < s.size(); ++i) v[i] = h(s.nodes[i]);
    const HerglotzFit fit = fit_herglotz(s, v);
    CHECK(fit.residual < 1e-6);
    CHECK(fit.spec.valid(1e-10));

    Eigen::VectorXcd r(s.size());
    for (int i = 0; i < s.size(); ++i) r[i] = solid_harmonic(3, 1, s.nodes[i]) + solid_harmonic(2, -2, s.nodes[i]);
    CHECK(fit_herglotz(s, r).residual > 1e-2);
}

TEST_CASE("J reassembly identities") {
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 7, {0.8});
    const int lmax = 7;
    SUBCASE("curl-free: J = -grad V[div J]") {
        const SourceSpec s = bump(q, "curl_free_bump");
        const VolumeOperator op(q, lmax, RadialKernel{});
        CHECK(rel_l2(q, CField(-op.gradient(s.div_values)), s.values) < 1e-2);
    }
    SUBCASE("div-free: J = curl V[curl J]") {
        const SourceSpec s = bump(q, "div_free_bump");
        const VectorPotentials pot(q, 0.0, lmax);
        CHECK(rel_l2(q, pot.at_nodes(s.curl_values).curl, s.values) < 1e-2);
    }
}

TEST_CASE("recover_source: curl-free round trips") {
    auto q = make_ball_quadrature(1.0, {1.0}, 7, 6, {0.8});
    auto surf = make_sphere_quadrature(1.0, 8);
    const int lmax = 6;
    for (int degree : {1, 2}) {
        const SourceSpec s = bump(q, "neumann_gradient", 0.8, 3, degree);
        for (double sigma : {1.0, 0.0}) {
            CAPTURE(degree);
            CAPTURE(sigma);
            MediumConfig m;
            m.eps_layers = {2.0};
            m.sigma_layers = {sigma};
            const AsymptoticCoefficients c = engine_coefficients(m, s, q, surf, lmax);
            const SourceRecovery r = recover_source(c, known_all(m), SourceClass::curl_free,
                                                    AdmissibleClass::harmonic(2), q, 0.8, lmax);
            CHECK(rel_l2(q, r.source.values, s.values) < 5e-2);
            CHECK(rel_l2(q, r.source.div_values, s.div_values) < 5e-2);
        }
    }
}

TEST_CASE("recover_source: divergence-free path") {
    auto q = make_ball_quadrature(1.0, {1.0}, 7, 6, {0.8});
    auto surf = make_sphere_quadrature(1.0, 8);
    const int lmax = 6;
    MediumConfig m;
    m.eps_layers = {2.0};
    m.sigma_layers = {1.0};
    m.mu_interior = 1.5;
    // curl J of this current is not harmonic; the class keeps only its harmonic part
    const SourceSpec s = bump(q, "div_free_bump", 0.8, 2);
    const AsymptoticCoefficients c = engine_coefficients(m, s, q, surf, lmax);
    const SourceRecovery r =
        recover_source(c, known_all(m), SourceClass::div_free, AdmissibleClass::harmonic(4), q, 0.8, lmax);
    CHECK(rel_l2(q, r.source.values, CField(s.values / 3.0)) < 2e-2);

    SUBCASE("in-class curl: moments of curl J are reproduced") {
        for (std::size_t k = 0; k < 3; ++k) {
            const MomentSet ref = volume_moments(q, s.curl_values.col(k), 4);
            for (int h = 0; h < 25; ++h)
                CHECK(std::abs(r.moments[k].coefficients[h] - ref.coefficients[h]) < 1e-6);
        }
    }
    SUBCASE("gauge robustness") {
        AsymptoticCoefficients c2 = c;
        const cplx g(0.3, -2.0);
        for (auto& e : c2.E) e *= g;
        for (auto& h : c2.H) h *= g;
        const SourceRecovery r2 =
            recover_source(c2, known_all(m), SourceClass::div_free, AdmissibleClass::harmonic(4), q, 0.8, lmax);
        CHECK((r2.source.values / g - r.source.values).norm() < 1e-8 * r.source.values.norm());
    }
    SUBCASE("zero data") {
        AsymptoticCoefficients z = c;
        for (auto& e : z.E) e.setZero();
        for (auto& h : z.H) h.setZero();
        const SourceRecovery r0 =
            recover_source(z, known_all(m), SourceClass::div_free, AdmissibleClass::harmonic(4), q, 0.8, lmax);
        CHECK(r0.source.values.norm() == 0.0);
    }
    SUBCASE("recovery order and class checks") {
        KnownParameters k = known_all(m);
        k.mu = false;
        CHECK_THROWS_AS(recover_source(c, k, SourceClass::div_free, AdmissibleClass::harmonic(4), q, 0.8, lmax),
                        RecoveryOrderError);
        CHECK_THROWS_AS(recover_source(c, known_all(m), SourceClass::curl_free, AdmissibleClass::harmonic(2), q, 0.8,
                                       lmax),
                        std::domain_error);
    }
}

TEST_CASE("recover_mu") {
    auto q = make_ball_quadrature(1.0, {1.0}, 7, 6, {0.8});
    auto surf = make_sphere_quadrature(1.0, 8);
    const int lmax = 6;
    MediumConfig m;
    m.eps_layers = {2.0};
    m.sigma_layers = {1.0};
    const SourceSpec s = general_div_free(q);
    for (double mu : {1.0, 1.5}) {
        CAPTURE(mu);
        m.mu_interior = mu;
        const ExpansionTerms t = expand_low_freq(m, s, q, surf, 0, lmax);
        const MuRecovery r = recover_mu(surf, t.H0_surface, s, q, m, lmax);
        CHECK(std::abs(r.mu - mu) < 1e-2 * mu);
        if (mu == 1.0) CHECK(std::abs(r.mu_tilde) < 1e-6);
        // rescaling J and the data together leaves mu unchanged
        SourceSpec s2 = s;
        s2.values *= 4.0;
        s2.curl_values *= 4.0;
        CHECK(std::abs(recover_mu(surf, CField(4.0 * t.H0_surface), s2, q, m, lmax).mu - r.mu) < 1e-10);
    }
    const SourceSpec cf = bump(q, "curl_free_bump");
    const ExpansionTerms t = expand_low_freq(m, cf, q, surf, 0, lmax);
    CHECK_THROWS_WITH_AS(recover_mu(surf, t.H0_surface, cf, q, m, lmax), doctest::Contains("mu not identifiable"),
                         IdentifiabilityError);
    CHECK_THROWS_AS(recover_mu(surf, t.H0_surface, SourceSpec{}, q, m, lmax), RecoveryOrderError);
}

TEST_CASE("recover_sigma") {
    auto q = make_ball_quadrature(1.0, {1.0}, 7, 6, {0.8});
    auto surf = make_sphere_quadrature(1.0, 8);
    const int lmax = 6;
    MediumConfig m;
    m.eps_layers = {2.0};
    m.sigma_layers = {1.0};
    const SourceSpec s = general_div_free(q);
    const AsymptoticCoefficients c = engine_coefficients(m, s, q, surf, lmax);

    SUBCASE("constant sigma") {
        const SigmaRecovery r = recover_sigma(c, known_all(m), s, q, true, lmax);
        CHECK(std::abs(r.sigma[0] - 1.0) < 2e-2);
        CHECK(r.normal_trace > 1e-3);
    }
    SUBCASE("no conduction current") {
        AsymptoticCoefficients z = c;
        z.H[1].setZero();
        CHECK(recover_sigma(z, known_all(m), s, q, true, lmax).sigma[0] <= 1e-8);
    }
    SUBCASE("null configuration: toroidal current about the centre") {
        const SourceSpec tor = bump(q, "div_free_bump");
        const AsymptoticCoefficients ct = engine_coefficients(m, tor, q, surf, lmax);
        CHECK_THROWS_WITH_AS(recover_sigma(ct, known_all(m), tor, q, true, lmax),
                             doctest::Contains("nonvanishing-trace"), IdentifiabilityError);
    }
    SUBCASE("recovery order") {
        KnownParameters k = known_all(m);
        k.mu = false;
        CHECK_THROWS_AS(recover_sigma(c, k, s, q, true, lmax), RecoveryOrderError);
        CHECK_THROWS_AS(recover_sigma(c, known_all(m), SourceSpec{}, q, true, lmax), RecoveryOrderError);
    }
}

TEST_CASE("recover_sigma: two layers") {
    MediumConfig m;
    m.layer_radii = {1.0, 0.5};
    m.eps_layers = {2.0, 5.0};
    m.sigma_layers = {1.0, 2.0};
    auto q = make_ball_quadrature(1.0, m.layer_radii, 6, 5, {0.8});
    auto surf = make_sphere_quadrature(1.0, 6);
    const int lmax = 5;
    SUBCASE("off-centre current") {
        SourceParams p;
        p.radius = 0.55;
        p.center = Vec3(0.15, -0.1, 0.2);
        p.axis = Vec3(0.6, 0.0, 0.8);
        const SourceSpec s = sample_source(make_source(p), q.nodes);
        const SigmaRecovery r =
            recover_sigma(engine_coefficients(m, s, q, surf, lmax), known_all(m), s, q, false, lmax);
        CHECK(std::abs(r.sigma[0] - 1.0) < 2e-2);
        CHECK(std::abs(r.sigma[1] - 2.0) < 4e-2);
    }
    SUBCASE("centred degree-one currents only reach the exterior as a dipole") {
        const SourceSpec s = general_div_free(q);
        CHECK_THROWS_AS(recover_sigma(engine_coefficients(m, s, q, surf, lmax), known_all(m), s, q, false, lmax),
                        IdentifiabilityError);
    }
}

TEST_CASE("block system") {
    const SurfaceQuadrature b = make_sphere_quadrature(1.0, 8), s1 = make_sphere_quadrature(0.5, 8);
    const BlockSystem sys = assemble_block_system(b, s1, 8);
    CHECK(sys.calderon_residual() < 1e-3);

    std::mt19937 rng(7);
    std::normal_distribution<double> nd;
    const int n = sys.nb + sys.ns;
    Eigen::VectorXcd p(n), r(n);
    for (int i = 0; i < n; ++i) {
        p[i] = cplx(nd(rng), nd(rng));
        r[i] = cplx(nd(rng), nd(rng));
    }
    auto inner = [&](const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) {
        return (x.array() * sys.weights.array().cast<cplx>() * y.conjugate().array()).sum();
    };
    const cplx lhs = inner(sys.Kstar * p, r), rhs = inner(p, sys.K * r);
    CHECK(std::abs(lhs - rhs) < 1e-8 * std::abs(lhs));

    const Eigen::MatrixXcd kb = np_operator(b, true, 8).entries, ks = np_operator(s1, true, 8).entries;
    CHECK((sys.Kstar.topLeftCorner(sys.nb, sys.nb) + kb).norm() < 1e-12 * kb.norm());
    CHECK((sys.Kstar.bottomRightCorner(sys.ns, sys.ns) - ks).norm() < 1e-12 * ks.norm());
    CHECK_THROWS_AS(assemble_block_system(b, make_sphere_quadrature(1.0, 4), 8), std::invalid_argument);
}

TEST_CASE("two-layer test pair") {
    MediumConfig m;
    m.layer_radii = {1.0, 0.5};
    m.eps_layers = {2.0, 5.0};
    m.sigma_layers = {1.0, 2.0};
    auto q = make_ball_quadrature(1.0, m.layer_radii, 6, 6, {0.8});
    const SurfaceQuadrature b = make_sphere_quadrature(1.0, 6), s1 = make_sphere_quadrature(0.5, 6);
    const int lmax = 6;
    const SourceSpec s = general_div_free(q);
    auto nudged = [](const SurfaceQuadrature& sq, double f) {
        std::vector<Vec3> x;
        for (const Vec3& n : sq.normals) x.push_back(sq.radius * f * n);
        return x;
    };
    const Eigen::VectorXcd ne_sigma = normal_part(first_order_field(m, s, q, nudged(s1, 1 + 1e-13), lmax), s1.normals);
    const Eigen::VectorXcd ne_b = normal_part(first_order_field(m, s, q, nudged(b, 1 - 1e-13), lmax), b.normals);
    std::vector<Eigen::VectorXcd> cand;
    const HarmonicTable t = make_harmonic_table(2, s1.normals);
    for (int h = 1; h < 9; ++h) cand.push_back(t.Y.col(h));

    SUBCASE("the interior normal trace of E(1) vanishes, so every pairing is degenerate") {
        CHECK(ne_b.norm() < 1e-6 * ne_sigma.norm());
        CHECK_THROWS_WITH_AS(build_test_pair(m, s1, b, ne_sigma, ne_b, cand, lmax),
                             doctest::Contains("configuration not verified admissible"), std::domain_error);
    }
    SUBCASE("nonzero mean rejected") {
        CHECK_THROWS_AS(test_density(m, s1, b, Eigen::VectorXcd::Ones(s1.size()), lmax), std::invalid_argument);
    }
    SUBCASE("test density solves the defining harmonic problem per mode") {
        // degree-one density with equal conductivities: g = (R / rho) l extended
        MediumConfig eq = m;
        eq.sigma_layers = {1.0, 1.0};
        const Eigen::VectorXcd g = test_density(eq, s1, b, cand[1], lmax);
        const HarmonicTable tb = make_harmonic_table(2, b.normals);
        CHECK((g - 2.0 * tb.Y.col(2)).norm() < 1e-10 * g.norm());
    }
}

TEST_CASE("solve_eps_linear is exact on its linearization") {
    const SurfaceQuadrature s = make_sphere_quadrature(1.0, 4);
    std::vector<CField> sens = {CField::Random(s.size(), 3), CField::Random(s.size(), 3)};
    const double t1 = 0.73, t2 = -1.9;
    const CField mis = t1 * sens[0] + t2 * sens[1];
    const EpsRecovery r = solve_eps_linear(mis, sens, s);
    CHECK(std::abs(r.t[0] - t1) < 1e-10);
    CHECK(std::abs(r.t[1] - t2) < 1e-10);

    TwoLayerTestPair pair;
    pair.g1 = Eigen::VectorXcd::Random(s.size());
    pair.g2 = Eigen::VectorXcd::Random(s.size());
    const EpsRecovery rp = solve_eps_linear(mis, sens, s, &pair);
    CHECK(std::abs(rp.t[0] - t1) < 1e-10);
    CHECK(std::abs(rp.t[1] - t2) < 1e-10);

    pair.g2 = pair.g1;
    CHECK_THROWS_WITH_AS(solve_eps_linear(mis, sens, s, &pair), doctest::Contains("test pair ill-conditioned"),
                         IdentifiabilityError);
    CHECK(solve_eps_linear(CField::Zero(s.size(), 3), sens, s).t[0] == 0.0);
}

TEST_CASE("recover_eps: single layer") {
    MediumConfig m;
    m.eps_layers = {3.0};
    m.sigma_layers = {1.0};
    auto q = make_ball_quadrature(1.0, m.layer_radii, 5, 4, {0.8});
    auto surf = make_sphere_quadrature(1.0, 5);
    const SourceSpec s = general_div_free(q);
    const std::vector<double> freqs = {0.04, 0.03, 0.02, 0.01};
    ForwardOptions opt;
    opt.lmax = 4;
    const AsymptoticCoefficients c = fit_asymptotics(boundary_data(freqs, m, s, surf, q, opt), {});
    const EpsRecovery r = recover_eps(c, known_all(m), s, q, {}, nullptr, opt);
    CHECK(std::abs(r.eps[0] - 3.0) < 1e-2 * 3.0);

    AsymptoticCoefficients c1 = c;
    c1.E.resize(1);
    CHECK_THROWS_AS(recover_eps(c1, known_all(m), s, q), std::domain_error);
    KnownParameters k = known_all(m);
    k.sigma = false;
    CHECK_THROWS_AS(recover_eps(c, k, s, q), RecoveryOrderError);
}

TEST_CASE("verify_uniqueness") {
    ForwardConfig a;
    a.medium.eps_layers = {2.0};
    a.medium.sigma_layers = {1.0};
    a.radial_order = 5;
    a.angular_order = 4;
    a.surface_order = 5;
    a.options.lmax = 4;
    a.source.kind = "poloidal_bump";
    const std::vector<double> f = {0.02, 0.01, 0.005, 0.0025};
    AsymptoticOrders o;
    CHECK(verify_uniqueness(a, a, f, &o).max_discrepancy < 1e-10);
    ForwardConfig b = a;
    b.medium.mu_interior = 1.5;
    const UniquenessReport r = verify_uniqueness(a, b, f, &o);
    CHECK_FALSE(r.indistinguishable);
    CHECK(r.h_order_discrepancy[0] > 1e-3);
}
