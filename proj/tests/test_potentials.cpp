#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "maxkit/model.hpp"
#include "maxkit/potentials.hpp"

using namespace maxkit;

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);

double rel_l2(const CField& a, const CField& b, const std::vector<double>& w) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        num += w[i] * (a.row(i) - b.row(i)).squaredNorm();
        den += w[i] * b.row(i).squaredNorm();
    }
    return std::sqrt(num / den);
}

Eigen::VectorXcd sample_harmonic(const SurfaceQuadrature& q, int n, int m) {
    Eigen::VectorXcd v(q.size());
    for (int i = 0; i < q.size(); ++i) v[i] = eval_spherical_harmonic(n, m, q.normals[i]);
    return v;
}

}  // namespace

TEST_CASE("Richardson limit removes polynomial terms") {
    std::vector<Eigen::VectorXcd> seq;
    for (int k = 0; k < 4; ++k) {
        const double h = std::ldexp(0.1, -k);
        seq.push_back(Eigen::VectorXcd::Constant(1, 2.0 + 3.0 * h - h * h + 5.0 * h * h * h));
    }
    CHECK(std::abs(richardson_limit(seq)[0] - 2.0) < 1e-12);
}

TEST_CASE("fundamental solution values") {
    CHECK(std::abs(fundamental_solution(0.0, Vec3(1, 0, 0)) - 1.0 / (4 * kPi)) < 1e-15);
    const cplx g = fundamental_solution(1.0, Vec3(0, 1, 0));
    CHECK(std::abs(g - std::polar(1.0, 1.0) / (4 * kPi)) < 1e-15);
    CHECK(std::abs(g.real() - 0.042996) < 1e-5);
    CHECK(std::abs(g.imag() - 0.066959) < 1e-5);
    CHECK(std::abs(fundamental_solution(0.0, Vec3(0, 0, 2)) - 1.0 / (8 * kPi)) < 1e-15);
    CHECK_THROWS_AS(fundamental_solution(0.0, Vec3::Zero()), std::domain_error);
}

TEST_CASE("Newtonian potential of the uniform ball") {
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 4);
    Eigen::VectorXcd one = Eigen::VectorXcd::Ones(q.size());
    auto v = volume_potential(0.0, q, one, {Vec3::Zero(), Vec3(0, 0, 2), Vec3(1.2, -0.4, 1.1)});
    CHECK(std::abs(v[0] - 0.5) < 1e-4);
    CHECK(std::abs(v[1] - 1.0 / 6.0) < 1e-6);
    CHECK(std::abs(v[2] - 1.0 / (3.0 * Vec3(1.2, -0.4, 1.1).norm())) < 1e-10);

    // inside: (3 - r^2) / 6, gradient -x / 3, also at the nodes themselves
    VolumeOperator op(q, 6, RadialKernel{});
    Eigen::VectorXcd at = op.apply(one);
    CField g = op.gradient(one);
    double worst = 0.0, gworst = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        worst = std::max(worst, std::abs(at[i] - (3.0 - q.nodes[i].squaredNorm()) / 6.0));
        gworst = std::max(gworst, (g.row(i).transpose() + q.nodes[i].cast<cplx>() / 3.0).norm());
    }
    CHECK(worst < 1e-10);
    CHECK(gworst < 1e-10);

    CHECK(volume_potential(0.0, q, Eigen::VectorXcd::Zero(q.size()).eval(), {Vec3(0.1, 0.2, 0.3)})
              .norm() == 0.0);
}

TEST_CASE("Helmholtz volume potential at the centre") {
    const double k = 1.3;
    auto q = make_ball_quadrature(1.0, {1.0}, 10, 3);
    Eigen::VectorXcd one = Eigen::VectorXcd::Ones(q.size());
    auto v = volume_potential(k, q, one, {Vec3::Zero()});
    // int_0^1 r e^{ikr} dr
    const cplx e = std::exp(kI * k);
    const cplx exact = e / (kI * k) + (e - 1.0) / (k * k);
    CHECK(std::abs(v[0] - exact) < 1e-8);
}

TEST_CASE("volume potential against direct quadrature off the ball") {
    auto q = make_ball_quadrature(1.0, {1.0, 0.6}, 8, 6);
    Eigen::VectorXcd f(q.size());
    for (int i = 0; i < q.size(); ++i) {
        const Vec3& y = q.nodes[i];
        f[i] = (1.0 - y.squaredNorm()) * cplx(y.x(), 0.5 * y.z()) + (q.layer[i] == 1 ? 0.3 : 0.0);
    }

    // brute force on a much finer rule so the kernel is resolved
    auto fine = make_ball_quadrature(1.0, {1.0, 0.6}, 12, 40);
    auto dens = [](const Vec3& y, int layer) {
        return (1.0 - y.squaredNorm()) * cplx(y.x(), 0.5 * y.z()) + (layer == 1 ? 0.3 : 0.0);
    };
    const Vec3 x(0.9, 1.1, -0.7);
    for (double k : {0.0, 0.8}) {
        cplx direct = 0.0;
        for (int i = 0; i < fine.size(); ++i)
            direct += fine.weights[i] * fundamental_solution(k, x - fine.nodes[i]) * dens(fine.nodes[i], fine.layer[i]);
        auto v = volume_potential(k, q, f, {x});
        CHECK(std::abs(v[0] - direct) < 1e-9 * std::abs(direct));
    }
}

TEST_CASE("single layer of the unit sphere") {
    auto s = make_sphere_quadrature(1.0, 10);
    Eigen::VectorXcd one = Eigen::VectorXcd::Ones(s.size());
    auto v = single_layer(0.0, s, one, {Vec3::Zero(), Vec3(0, 2, 0)});
    CHECK(std::abs(v[0] - 1.0) < 1e-8);
    CHECK(std::abs(v[1] - 0.5) < 1e-8);
    auto S = surface_operator(SurfaceKernel::single_layer, 0.0, s, s);
    for (int n = 0; n <= 4; ++n)
        for (int m = -n; m <= n; ++m) {
            Eigen::VectorXcd y = sample_harmonic(s, n, m);
            CHECK((S.entries * y - y / (2.0 * n + 1.0)).cwiseAbs().maxCoeff() < 1e-6);
        }
    CHECK(S.entries.imag().cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("double layer with the Gamma(x - y) normal derivative") {
    auto s = make_sphere_quadrature(1.0, 10);
    Eigen::VectorXcd one = Eigen::VectorXcd::Ones(s.size());
    auto v = double_layer(s, one, {Vec3(0.1, 0.2, -0.3), Vec3(0.0, 0.0, 0.97), Vec3(1.5, 0, 0), Vec3(0, 1.03, 0)});
    CHECK(std::abs(v[0] + 1.0) < 1e-6);
    CHECK(std::abs(v[1] + 1.0) < 1e-6);
    CHECK(std::abs(v[2]) < 1e-6);
    CHECK(std::abs(v[3]) < 1e-6);
    auto K = np_operator(s, false);
    Eigen::VectorXcd k1 = K.entries * one;
    CHECK((k1.array() + 0.5).abs().maxCoeff() < 1e-8);
    // interior limit (-1/2 + K)[1] = -1
    CHECK((-0.5 * one + k1 + one).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("adjoint NP operator spectrum on the unit sphere") {
    auto s = make_sphere_quadrature(1.0, 12);
    auto K = np_operator(s, true, 8);
    for (int n = 0; n <= 5; ++n)
        for (int m = -n; m <= n; ++m) {
            Eigen::VectorXcd y = sample_harmonic(s, n, m);
            const double lam = -1.0 / (2.0 * (2 * n + 1));
            CHECK((K.entries * y - lam * y).cwiseAbs().maxCoeff() < 1e-3);
        }
    // 1/2 I - K* is boundedly invertible
    Eigen::MatrixXcd A = 0.5 * Eigen::MatrixXcd::Identity(s.size(), s.size()) - K.entries;
    Eigen::VectorXd w(s.size());
    for (int i = 0; i < s.size(); ++i) w[i] = std::sqrt(s.weights[i]);
    Eigen::MatrixXcd Aw = w.asDiagonal() * A * w.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Aw);
    CHECK(svd.singularValues().minCoeff() >= 0.4);
}

TEST_CASE("trace formulae by extrapolation along the normal") {
    auto s = make_sphere_quadrature(1.0, 12);
    auto Ks = np_operator(s, true, 8);
    for (int n = 0; n <= 4; ++n) {
        Eigen::VectorXcd phi = sample_harmonic(s, n, n > 1 ? 1 : 0);
        for (int side : {-1, 1}) {
            Eigen::VectorXcd lim = single_layer_normal_trace(0.0, s, phi, side, 8);
            Eigen::VectorXcd expect = -side * 0.5 * phi + Ks.entries * phi;
            // the interior trace of S[Y_0^0] vanishes, so measure against phi there
            const double scale = expect.norm() > 1e-8 * phi.norm() ? expect.norm() : phi.norm();
            CHECK((lim - expect).norm() / scale < 1e-3);
        }
    }
}

TEST_CASE("D2V acts as -I on gradients and annihilates solenoidal fields") {
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 6);
    CField grad(q.size(), 3), sol(q.size(), 3);
    Eigen::VectorXcd div(q.size()), zero = Eigen::VectorXcd::Zero(q.size());
    std::vector<double> w = q.weights;
    for (int i = 0; i < q.size(); ++i) {
        const Vec3& x = q.nodes[i];
        const double r2 = x.squaredNorm();
        // u = (1 - r^2)^2
        grad.row(i) = (-4.0 * (1.0 - r2) * x).cast<cplx>().transpose();
        div[i] = -12.0 * (1.0 - r2) + 8.0 * r2;
        // curl((1 - r^2)^2 e_z) = grad psi x e_z
        sol.row(i) = (-4.0 * (1.0 - r2) * x).cross(Vec3::UnitZ()).cast<cplx>().transpose();
    }
    CField a = d2_volume_potential(q, grad, div, q.nodes);
    CHECK(rel_l2(a, CField(-grad), w) < 1e-2);
    double form = 0.0;
    for (int i = 0; i < q.size(); ++i) form += w[i] * std::real(a.row(i).dot(grad.row(i)));
    CHECK(form <= 1e-8);
    CField b = d2_volume_potential(q, sol, zero, q.nodes);
    CHECK(b.norm() == 0.0);
    CHECK_THROWS_AS(d2_volume_potential(q, grad, Eigen::VectorXcd(3), q.nodes), std::invalid_argument);
}

TEST_CASE("curl of the volume potential by two paths") {
    auto q = make_ball_quadrature(1.0, {1.0, 0.8}, 8, 6);
    SourceParams p;
    p.kind = "mixed_bump";
    p.radius = 0.8;
    p.axis = Vec3(0.3, -0.5, 1.0);
    auto src = sample_source(make_source(p), q.nodes);
    std::vector<Vec3> t{Vec3(0.1, 0.2, 0.3), Vec3(0.5, -0.4, 0.2), Vec3(0, 0, 1.4)};
    for (double k : {0.0, 0.5}) {
        CField a = curl_volume_potential(k, q, src.values, src.curl_values, t);
        CField b = curl_volume_potential(k, q, src.values, src.curl_values, t, CurlPath::kernel_gradient);
        CHECK((a - b).norm() < 1e-3 * b.norm());
    }
    p.kind = "curl_free_bump";
    auto cf = sample_source(make_source(p), q.nodes);
    CField c = curl_volume_potential(0.0, q, cf.values, cf.curl_values, t, CurlPath::kernel_gradient);
    CHECK(c.norm() < 1e-2 * cf.values.norm());
}

TEST_CASE("L operator") {
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 4);
    Eigen::VectorXcd one = Eigen::VectorXcd::Ones(q.size());
    CHECK(std::abs(l_operator(q, one, {Vec3::Zero()})[0] + 0.25) < 1e-10);
    CHECK(l_operator(q, Eigen::VectorXcd::Zero(q.size()).eval(), {Vec3(0.3, 0, 0)}).norm() == 0.0);

    // Laplacian of L[rho] equals -2 V[rho]
    Eigen::VectorXcd rho(q.size());
    for (int i = 0; i < q.size(); ++i) rho[i] = 1.0 + q.nodes[i].x() * q.nodes[i].y() - q.nodes[i].z();
    const Vec3 x(0.2, -0.3, 0.25);
    const double h = 1e-2;
    std::vector<Vec3> pts{x};
    for (int k = 0; k < 3; ++k)
        for (double s : {-2.0, -1.0, 1.0, 2.0}) {
            Vec3 e = Vec3::Zero();
            e[k] = s * h;
            pts.push_back(x + e);
        }
    auto L = l_operator(q, rho, pts);
    cplx lap = -90.0 * L[0];
    for (int k = 0; k < 3; ++k) lap += -L[1 + 4 * k] + 16.0 * L[2 + 4 * k] + 16.0 * L[3 + 4 * k] - L[4 + 4 * k];
    lap /= 12.0 * h * h;
    const cplx v = volume_potential(0.0, q, rho, {x})[0];
    CHECK(std::abs(lap + 2.0 * v) < 1e-3 * std::abs(v));
}

TEST_CASE("Neumann function of the unit ball") {
    auto s = make_sphere_quadrature(1.0, 24);
    std::mt19937 g(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double eps : {1.0, 2.5}) {
        const Vec3 y(u(g), u(g), u(g));
        double flux = 0.0, mean = 0.0;
        const double h = 1e-5;
        for (int i = 0; i < s.size(); ++i) {
            const Vec3& x = s.nodes[i];
            const double dn = (neumann_function_ball(eps, x, y) - neumann_function_ball(eps, (1 - h) * x, y)) / h;
            const double dn2 = (neumann_function_ball(eps, x, y) - neumann_function_ball(eps, (1 - 2 * h) * x, y)) / (2 * h);
            flux += s.weights[i] * eps * (2.0 * dn - dn2);
            mean += s.weights[i] * neumann_function_ball(eps, x, y);
        }
        CHECK(std::abs(flux + 1.0) < 1e-6);
        CHECK(std::abs(mean) < 1e-8);
    }
    for (int t = 0; t < 10; ++t) {
        Vec3 a(u(g), u(g), u(g)), b(u(g), u(g), u(g));
        CHECK(std::abs(neumann_function_ball(2.0, a, b) - neumann_function_ball(2.0, b, a)) < 1e-8);
    }
    CHECK_THROWS_AS(neumann_function_ball(1.0, Vec3(0.1, 0, 0), Vec3(0.1, 0, 0)), std::domain_error);
}

TEST_CASE("Neumann-to-Dirichlet map") {
    auto s = make_sphere_quadrature(1.0, 8);
    MediumConfig m;
    m.eps_layers = {3.0};
    for (int n = 1; n <= 4; ++n) {
        Eigen::VectorXcd y = sample_harmonic(s, n, -1);
        auto out = apply_nd_map(m, s, y);
        CHECK((out - y / (n * 3.0)).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK_THROWS_AS(apply_nd_map(m, s, Eigen::VectorXcd::Ones(s.size()).eval()), std::domain_error);
    MediumConfig two;
    two.layer_radii = {1.0, 0.5};
    two.eps_layers = {3.0, 3.0};
    two.sigma_layers = {0.0, 0.0};
    for (int n = 1; n <= 4; ++n) CHECK(std::abs(nd_eigenvalue(two, n) - nd_eigenvalue(m, n)) < 1e-12);
    auto M = nd_map(m, s, 6);
    Eigen::VectorXcd y2 = sample_harmonic(s, 2, 2);
    CHECK((M.entries * y2 - y2 / 6.0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("Neumann function identity on the boundary") {
    // (1/2 I + K)[int N_eps rho] = eps^-1 V[rho] for mean-zero rho
    auto s = make_sphere_quadrature(1.0, 10);
    auto q = make_ball_quadrature(1.0, {1.0}, 8, 24, {0.8});
    Eigen::VectorXcd rho(q.size());
    double mass = 0.0, vol = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        const Vec3& y = q.nodes[i];
        const double r = y.norm();
        rho[i] = r < 0.8 ? std::pow(1 - r * r / 0.64, 3) * (1.0 + y.x() - 2.0 * y.y() * y.z()) : 0.0;
        mass += q.weights[i] * rho[i].real();
        if (r < 0.8) vol += q.weights[i];
    }
    for (int i = 0; i < q.size(); ++i)
        if (q.nodes[i].norm() < 0.8) rho[i] -= mass / vol;
    auto K = np_operator(s, false, 8);
    for (double eps : {1.0, 2.0, 5.0}) {
        Eigen::VectorXcd u(s.size());
        for (int j = 0; j < s.size(); ++j) {
            cplx acc = 0.0;
            for (int i = 0; i < q.size(); ++i) acc += q.weights[i] * neumann_function_ball(eps, s.nodes[j], q.nodes[i]) * rho[i];
            u[j] = acc;
        }
        Eigen::VectorXcd lhs = 0.5 * u + K.entries * u;
        Eigen::VectorXcd rhs = volume_potential(0.0, q, rho, s.nodes) / eps;
        CHECK((lhs - rhs).norm() / rhs.norm() < 1e-3);
    }
}
