#include <cmath>
#include <sstream>

#include "maxkit/inverse.hpp"
#include "sphere_tools.hpp"

namespace maxkit {

using namespace detail;

namespace {

Eigen::VectorXcd normal_part(const std::vector<Vec3>& normals, const CField& F) {
    Eigen::VectorXcd out(F.rows());
    for (int i = 0; i < F.rows(); ++i) out[i] = (F.row(i) * normals[i].cast<cplx>())(0);
    return out;
}

cplx integrate(const SurfaceQuadrature& s, const Eigen::VectorXcd& f, const Eigen::VectorXcd& g) {
    cplx sum = 0.0;
    for (int i = 0; i < s.size(); ++i) sum += s.weights[i] * f[i] * g[i];
    return sum;
}

double wnorm(const SurfaceQuadrature& s, const Eigen::VectorXcd& f) {
    double sum = 0.0;
    for (int i = 0; i < s.size(); ++i) sum += s.weights[i] * std::norm(f[i]);
    return std::sqrt(sum);
}

double wnorm(const SurfaceQuadrature& s, const CField& f) {
    double sum = 0.0;
    for (int i = 0; i < s.size(); ++i) sum += s.weights[i] * f.row(i).squaredNorm();
    return std::sqrt(sum);
}

}  // namespace

// ---- block system ----

double BlockSystem::calderon_residual() const {
    const Eigen::VectorXd sq = weights.cwiseSqrt();
    const Eigen::VectorXd isq = sq.cwiseInverse();
    auto weighted = [&](const Eigen::MatrixXcd& A) {
        return (sq.asDiagonal() * A * isq.asDiagonal()).norm();
    };
    const Eigen::MatrixXcd ks = K * S;
    const double d = weighted(ks);
    return d == 0.0 ? 0.0 : weighted(S * Kstar - ks) / d;
}

BlockSystem assemble_block_system(const SurfaceQuadrature& boundary, const SurfaceQuadrature& sigma1, int lmax) {
    if (!(sigma1.radius < boundary.radius)) throw std::invalid_argument("assemble_block_system: inner sphere must lie inside");
    BlockSystem b;
    b.nb = boundary.size();
    b.ns = sigma1.size();
    const int n = b.nb + b.ns;
    const SurfaceQuadrature* sp[2] = {&boundary, &sigma1};
    const int off[2] = {0, b.nb};
    auto block = [&](SurfaceKernel which) {
        Eigen::MatrixXcd M(n, n);
        for (int t = 0; t < 2; ++t)
            for (int s = 0; s < 2; ++s)
                M.block(off[t], off[s], sp[t]->size(), sp[s]->size()) =
                    surface_operator(which, 0.0, *sp[s], *sp[t], lmax).entries;
        return M;
    };
    // normal of dB taken inward (toward the annulus): rows of K* and columns of K on dB change sign
    b.Kstar = block(SurfaceKernel::adjoint_double_layer);
    b.Kstar.topRows(b.nb) *= -1.0;
    b.K = block(SurfaceKernel::double_layer);
    b.K.leftCols(b.nb) *= -1.0;
    b.S = block(SurfaceKernel::single_layer);
    b.weights.resize(n);
    for (int i = 0; i < b.nb; ++i) b.weights[i] = boundary.weights[i];
    for (int i = 0; i < b.ns; ++i) b.weights[b.nb + i] = sigma1.weights[i];
    return b;
}

// ---- test pair ----

Eigen::VectorXcd test_density(const MediumConfig& medium, const SurfaceQuadrature& sigma1,
                              const SurfaceQuadrature& boundary, const Eigen::VectorXcd& l, int lmax) {
    if (medium.layers() != 2) throw std::invalid_argument("test_density: needs a two-layer medium");
    if (!(medium.sigma_layers[0] > 0.0 && medium.sigma_layers[1] > 0.0))
        throw std::invalid_argument("test_density: needs positive conductivity in both layers");
    const double R = boundary.radius, rho = sigma1.radius;
    if (std::abs(rho - medium.layer_radii[1]) > 1e-12 * R || std::abs(R - medium.outer_radius()) > 1e-12 * R)
        throw std::invalid_argument("test_density: spheres must match the layer radii");
    const Eigen::VectorXcd c = surface_coefficients(sigma1, l, lmax);
    const double lscale = std::max(c.norm(), 1e-300);
    if (std::abs(c[0]) > 1e-10 * lscale)
        throw std::invalid_argument("test_density: l must have zero mean on the inner interface");
    const double s = medium.sigma_layers[1] / medium.sigma_layers[0];
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(c.size());
    for (int n = 1; n <= lmax; ++n) {
        const double h2 = (s * n + (n + 1.0) - (s - 1.0) * n * std::pow(rho / R, 2 * n + 1)) / (2.0 * n + 1.0);
        const double f = std::pow(R / rho, n) * h2;
        for (int m = -n; m <= n; ++m) g[harmonic_index(n, m)] = f * c[harmonic_index(n, m)];
    }
    return make_harmonic_table(lmax, boundary.normals).Y * g;
}

TwoLayerTestPair build_test_pair(const MediumConfig& medium, const SurfaceQuadrature& sigma1,
                                 const SurfaceQuadrature& boundary, const Eigen::VectorXcd& ne1_sigma_outer,
                                 const Eigen::VectorXcd& ne1_boundary_inner,
                                 const std::vector<Eigen::VectorXcd>& candidates, int lmax, double tol) {
    struct Entry {
        Eigen::VectorXcd l, g;
        cplx C;
    };
    std::vector<Entry> ok;
    int vanishing = 0;
    const double nb = wnorm(boundary, ne1_boundary_inner);
    for (const Eigen::VectorXcd& l : candidates) {
        const Eigen::VectorXcd g = test_density(medium, sigma1, boundary, l, lmax);
        const cplx num = integrate(sigma1, l, ne1_sigma_outer);
        const cplx den = integrate(boundary, g, ne1_boundary_inner);
        if (std::abs(den) <= tol * wnorm(boundary, g) * nb) {
            ++vanishing;
            continue;
        }
        ok.push_back({l, g, num / den});
    }
    TwoLayerTestPair best;
    for (std::size_t i = 0; i < ok.size(); ++i)
        for (std::size_t j = i + 1; j < ok.size(); ++j) {
            const double sep = std::abs(ok[i].C - ok[j].C);
            if (sep > best.separation) {
                best = {ok[i].l, ok[j].l, ok[i].g, ok[j].g, ok[i].C, ok[j].C, sep};
            }
        }
    const double scale = std::max({1.0, std::abs(best.C1), std::abs(best.C2)});
    if (best.separation <= tol * scale) {
        std::ostringstream m;
        m << "configuration not verified admissible: no two test densities with distinct pairing constants ("
          << vanishing << " of " << candidates.size() << " candidates have a vanishing pairing int g nu.E1|- over dB)";
        throw std::domain_error(m.str());
    }
    return best;
}

// ---- permittivity ----

EpsRecovery solve_eps_linear(const CField& mismatch, const std::vector<CField>& sens, const SurfaceQuadrature& sphere,
                             const TwoLayerTestPair* pair, double det_floor) {
    const int L = static_cast<int>(sens.size());
    if (L < 1) throw std::invalid_argument("solve_eps_linear: no sensitivities");
    EpsRecovery out;
    out.t.assign(L, 0.0);
    if (pair) {
        if (L != 2) throw std::invalid_argument("solve_eps_linear: the test pair needs exactly two layers");
        const Eigen::VectorXcd* g[2] = {&pair->g1, &pair->g2};
        Eigen::Matrix2cd A;
        Eigen::Vector2cd b;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) A(i, j) = integrate(sphere, *g[i], normal_part(sphere.normals, sens[j]));
            b[i] = integrate(sphere, *g[i], normal_part(sphere.normals, mismatch));
        }
        const double scale = A.col(0).norm() * A.col(1).norm();
        out.determinant = scale > 0.0 ? std::abs(A.determinant()) / scale : 0.0;
        if (out.determinant <= det_floor)
            throw IdentifiabilityError("eps not identifiable: test pair ill-conditioned (normalised determinant below floor)");
        const Eigen::Vector2cd t = A.partialPivLu().solve(b);
        for (int j = 0; j < 2; ++j) out.t[j] = t[j].real();
        out.residual = b.norm() > 0.0 ? (A * t - b).norm() / b.norm() : 0.0;
        return out;
    }
    const int n = sphere.size();
    Eigen::MatrixXd A(6 * n, L);
    Eigen::VectorXd b(6 * n);
    auto pack = [&](const CField& f, auto&& col) {
        for (int i = 0; i < n; ++i) {
            const double sw = std::sqrt(sphere.weights[i]);
            for (int k = 0; k < 3; ++k) {
                col[6 * i + 2 * k] = sw * f(i, k).real();
                col[6 * i + 2 * k + 1] = sw * f(i, k).imag();
            }
        }
    };
    for (int j = 0; j < L; ++j) {
        if (sens[j].rows() != n) throw std::invalid_argument("solve_eps_linear: sensitivity size mismatch");
        Eigen::VectorXd c(6 * n);
        pack(sens[j], c);
        A.col(j) = c;
    }
    pack(mismatch, b);
    Eigen::VectorXd cn = A.colwise().norm();
    for (int j = 0; j < L; ++j) {
        if (cn[j] == 0.0) throw IdentifiabilityError("eps not identifiable: E^(2) is insensitive to a layer permittivity");
    }
    const Eigen::MatrixXd An = A * cn.cwiseInverse().asDiagonal();
    out.determinant = (An.transpose() * An).determinant();
    if (out.determinant <= det_floor)
        throw IdentifiabilityError("eps not identifiable: layer sensitivities are linearly dependent");
    const Eigen::VectorXd t = An.colPivHouseholderQr().solve(b).cwiseQuotient(cn);
    for (int j = 0; j < L; ++j) out.t[j] = t[j];
    out.residual = b.norm() > 0.0 ? (A * t - b).norm() / b.norm() : 0.0;
    return out;
}

EpsRecovery recover_eps(const AsymptoticCoefficients& data, const KnownParameters& known, const SourceSpec& source,
                        const VolumeQuadrature& quad, const EpsOptions& opt, const TwoLayerTestPair* pair,
                        const ForwardOptions& fwd) {
    if (data.e_power != 1) throw std::domain_error("recover_eps: needs a divergence-free source (E starts at omega^1)");
    const CField* e2 = data.e_order(2);
    if (!e2) throw std::domain_error("recover_eps: E^(2) coefficient missing from the fit (use e_terms >= 2)");
    if (source.values.rows() != quad.size()) throw RecoveryOrderError("eps needs J; recover the source first");
    if (!known.mu) throw RecoveryOrderError("eps needs mu; recover mu first");
    if (!known.sigma) throw RecoveryOrderError("eps needs sigma; recover sigma first");
    const SurfaceQuadrature sphere = coefficient_sphere(data);
    const int L = known.medium.layers();
    std::vector<double> ref = opt.eps_ref.empty() ? std::vector<double>(L, known.medium.eps0) : opt.eps_ref;
    if (static_cast<int>(ref.size()) != L) throw std::invalid_argument("recover_eps: eps_ref needs one value per layer");
    const std::vector<double> freqs = opt.model_freqs.empty() ? data.frequencies : opt.model_freqs;
    AsymptoticOrders orders = opt.orders;
    orders.e_power = 1;
    orders.e_terms = std::max(orders.e_terms, 2);

    auto model_e2 = [&](const std::vector<double>& eps) {
        MediumConfig m = known.medium;
        m.eps_layers = eps;
        const BoundaryDataset d = boundary_data(freqs, m, source, sphere, quad, fwd);
        return CField(*fit_asymptotics(d, orders).e_order(2));
    };

    CField base = model_e2(ref);
    std::vector<CField> sens;
    for (int j = 0; j < L; ++j) {
        std::vector<double> p = ref;
        p[j] += 1.0;
        sens.push_back(model_e2(p) - base);
    }
    EpsRecovery out;
    for (int it = 0; it < opt.max_iter; ++it) {
        const EpsRecovery step = solve_eps_linear(*e2 - base, sens, sphere, pair);
        double dn = 0.0, rn = 0.0;
        for (int j = 0; j < L; ++j) {
            ref[j] += step.t[j];
            dn = std::max(dn, std::abs(step.t[j]));
            rn = std::max(rn, std::abs(ref[j]));
        }
        out.t = step.t;
        out.determinant = step.determinant;
        out.iterations = it + 1;
        if (dn <= opt.tol * rn) break;
        base = model_e2(ref);
    }
    out.eps = ref;
    const double nd = wnorm(sphere, *e2);
    out.residual = nd > 0.0 ? wnorm(sphere, CField(*e2 - model_e2(ref))) / nd : 0.0;
    return out;
}

// ---- uniqueness ----

UniquenessReport verify_uniqueness(const ForwardConfig& a, const ForwardConfig& b, const std::vector<double>& freqs,
                                   const AsymptoticOrders* orders, double noise_floor) {
    if (freqs.empty()) throw std::invalid_argument("verify_uniqueness: no frequencies");
    if (a.surface_order != b.surface_order || a.medium.outer_radius() != b.medium.outer_radius())
        throw std::invalid_argument("verify_uniqueness: both configurations must share the measurement sphere");
    ForwardConfig ca = a, cb = b;
    ca.frequencies = freqs;
    cb.frequencies = freqs;
    const BoundaryDataset da = synthesize(ca), db = synthesize(cb);
    const SurfaceQuadrature s = dataset_sphere(da);
    auto rel = [&](const CField& x, const CField& y) {
        const double d = std::max(wnorm(s, x), wnorm(s, y));
        return d == 0.0 ? 0.0 : wnorm(s, CField(x - y)) / d;
    };
    UniquenessReport r;
    r.frequencies = freqs;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        r.e_discrepancy.push_back(rel(da.E[i], db.E[i]));
        r.h_discrepancy.push_back(rel(da.H[i], db.H[i]));
        r.max_discrepancy = std::max({r.max_discrepancy, r.e_discrepancy.back(), r.h_discrepancy.back()});
    }
    if (orders) {
        r.e_power = orders->e_power;
        const AsymptoticCoefficients fa = fit_asymptotics(da, *orders), fb = fit_asymptotics(db, *orders);
        for (std::size_t k = 0; k < fa.E.size(); ++k) r.e_order_discrepancy.push_back(rel(fa.E[k], fb.E[k]));
        for (std::size_t k = 0; k < fa.H.size(); ++k) r.h_order_discrepancy.push_back(rel(fa.H[k], fb.H[k]));
        for (double d : r.e_order_discrepancy) r.max_discrepancy = std::max(r.max_discrepancy, d);
        for (double d : r.h_order_discrepancy) r.max_discrepancy = std::max(r.max_discrepancy, d);
    }
    r.indistinguishable = r.max_discrepancy <= noise_floor;
    return r;
}

}  // namespace maxkit
