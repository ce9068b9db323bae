#include "maxkit/forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <stdexcept>

#include <unsupported/Eigen/IterativeSolvers>

namespace maxkit {

namespace {

constexpr cplx kI(0.0, 1.0);

RadialKernel kernel_for(double k0) {
    return k0 > 0.0 ? RadialKernel{KernelKind::helmholtz, k0} : RadialKernel{KernelKind::laplace, 0.0};
}

std::vector<double> lagrange_at(const std::vector<double>& xs, double t) {
    const int n = static_cast<int>(xs.size());
    std::vector<double> out(n, 1.0);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
            if (k != j) out[j] *= (t - xs[k]) / (xs[j] - xs[k]);
    return out;
}

CField curl_from_gradients(const CField g[3]) {
    CField out(g[0].rows(), 3);
    out.col(0) = g[2].col(1) - g[1].col(2);
    out.col(1) = g[0].col(2) - g[2].col(0);
    out.col(2) = g[1].col(0) - g[0].col(1);
    return out;
}

// adds sum_b (rho_b^2 g_n(r, rho_b)) jump_b to per-shell coefficients
void add_break_terms(const std::vector<Eigen::MatrixXcd>& rows, const std::vector<Eigen::VectorXcd>& jumps, int lmax,
                     Eigen::MatrixXcd& c) {
    for (std::size_t b = 0; b < jumps.size(); ++b)
        for (int n = 0; n <= lmax; ++n)
            c.middleCols(n * n, 2 * n + 1) +=
                rows[b].row(n).transpose() * jumps[b].segment(n * n, 2 * n + 1).transpose();
}

Eigen::VectorXcd flatten(const CField& f) { return Eigen::Map<const Eigen::VectorXcd>(f.data(), f.size()); }

CField unflatten(const Eigen::VectorXcd& v, Eigen::Index rows) {
    return Eigen::Map<const CField>(v.data(), rows, 3);
}

}  // namespace

// ---------------------------------------------------------------- vector potentials

VectorPotentials::VectorPotentials(const VolumeQuadrature& quad, double k0, int lmax)
    : k0_(k0), op_(quad, lmax, kernel_for(k0)), basis_(make_shell_basis(quad, lmax)), kernel_(kernel_for(k0)) {
    const int ns = quad.shells();
    for (int b = 1; b <= quad.segments(); ++b) {
        const double rho = quad.breaks[b];
        Eigen::MatrixXcd val(lmax + 1, ns), der(lmax + 1, ns);
        for (int t = 0; t < ns; ++t)
            for (int n = 0; n <= lmax; ++n) {
                val(n, t) = rho * rho * kernel_.value(n, quad.shell_radius[t], rho);
                der(n, t) = rho * rho * kernel_.dr(n, quad.shell_radius[t], rho);
            }
        break_val_.push_back(val);
        break_der_.push_back(der);
    }
}

Eigen::MatrixXcd VectorPotentials::segment_end_values(const Eigen::MatrixXcd& c, bool upper) const {
    const VolumeQuadrature& q = quad();
    const int ro = q.radial_order;
    Eigen::MatrixXcd out(q.segments(), c.cols());
    for (int seg = 0; seg < q.segments(); ++seg) {
        const int s0 = seg * ro;
        std::vector<double> xs(q.shell_radius.begin() + s0, q.shell_radius.begin() + s0 + ro);
        const std::vector<double> ell = lagrange_at(xs, q.breaks[seg + (upper ? 1 : 0)]);
        out.row(seg).setZero();
        for (int j = 0; j < ro; ++j) out.row(seg) += ell[j] * c.row(s0 + j);
    }
    return out;
}

std::vector<Eigen::VectorXcd> VectorPotentials::normal_jumps(const CField& phi) const {
    const VolumeQuadrature& q = quad();
    const int np = q.per_shell();
    Eigen::VectorXcd f(q.size());
    for (int i = 0; i < q.size(); ++i) f[i] = (phi.row(i) * q.sphere.normals[i % np].cast<cplx>())(0);
    const Eigen::MatrixXcd c = shell_analyse(basis_, q, f);
    const Eigen::MatrixXcd lo = segment_end_values(c, false), hi = segment_end_values(c, true);
    std::vector<Eigen::VectorXcd> jumps;
    const int S = q.segments();
    for (int b = 1; b <= S; ++b) {
        Eigen::VectorXcd j = -hi.row(b - 1).transpose();
        if (b < S) j += lo.row(b).transpose();
        jumps.push_back(j);
    }
    return jumps;
}

Eigen::VectorXcd VectorPotentials::divergence(const CField& phi) const {
    Eigen::VectorXcd d = Eigen::VectorXcd::Zero(phi.rows());
    for (int c = 0; c < 3; ++c) d += spectral_gradient(basis_, quad(), phi.col(c)).col(c);
    return d;
}

VectorPotentials::Fields VectorPotentials::at_nodes(const CField& phi, const Eigen::VectorXcd* div) const {
    const VolumeQuadrature& q = quad();
    if (phi.rows() != q.size()) throw std::invalid_argument("VectorPotentials: density size mismatch");
    Fields f;
    f.v.resize(q.size(), 3);
    CField g[3];
    for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXcd out, dout;
        op_.node_coefficients(op_.analyse(phi.col(c)), &out, &dout);
        f.v.col(c) = shell_synthesise(basis_, out);
        g[c] = shell_gradient(basis_, q, out, dout);
    }
    f.curl = curl_from_gradients(g);
    const Eigen::VectorXcd dv = div ? *div : divergence(phi);
    Eigen::MatrixXcd out, dout;
    op_.node_coefficients(op_.analyse(dv), &out, &dout);
    // an exact divergence carries the whole distributional divergence (phi in H(div))
    const std::vector<Eigen::VectorXcd> jumps = div ? std::vector<Eigen::VectorXcd>{} : normal_jumps(phi);
    add_break_terms(break_val_, jumps, op_.lmax(), out);
    add_break_terms(break_der_, jumps, op_.lmax(), dout);
    f.d2 = shell_gradient(basis_, q, out, dout);
    return f;
}

VectorPotentials::Fields VectorPotentials::at_targets(const CField& phi, const std::vector<Vec3>& targets,
                                                      const Eigen::VectorXcd* div) const {
    const VolumeQuadrature& q = quad();
    if (phi.rows() != q.size()) throw std::invalid_argument("VectorPotentials: density size mismatch");
    Fields f;
    const int nt = static_cast<int>(targets.size());
    f.v.resize(nt, 3);
    CField g[3];
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXcd v;
        op_.evaluate_coefficients(op_.analyse(phi.col(c)), targets, &v, &g[c]);
        f.v.col(c) = v;
    }
    f.curl = curl_from_gradients(g);
    const Eigen::VectorXcd dv = div ? *div : divergence(phi);
    const Eigen::MatrixXcd cd = op_.analyse(dv);
    // an exact divergence carries the whole distributional divergence (phi in H(div))
    const std::vector<Eigen::VectorXcd> jumps = div ? std::vector<Eigen::VectorXcd>{} : normal_jumps(phi);
    const int lmax = op_.lmax(), nh = harmonic_count(lmax);
    synthesise_targets(
        lmax, targets, 1e-10 * q.outer_radius,
        [&](double r, Eigen::VectorXcd& o, Eigen::VectorXcd& d) {
            Eigen::MatrixXcd rv, rd;
            op_.radial_rows(r, rv, rd);
            o = Eigen::VectorXcd::Zero(nh);
            d = Eigen::VectorXcd::Zero(nh);
            for (int n = 0; n <= lmax; ++n) {
                o.segment(n * n, 2 * n + 1) = (rv.row(n) * cd.middleCols(n * n, 2 * n + 1)).transpose();
                d.segment(n * n, 2 * n + 1) = (rd.row(n) * cd.middleCols(n * n, 2 * n + 1)).transpose();
            }
            for (std::size_t b = 0; b < jumps.size(); ++b) {
                const double rho = q.breaks[b + 1];
                for (int n = 0; n <= lmax; ++n) {
                    const cplx gv = rho * rho * kernel_.value(n, r, rho);
                    const cplx gd = rho * rho * kernel_.dr(n, r, rho);
                    o.segment(n * n, 2 * n + 1) += gv * jumps[b].segment(n * n, 2 * n + 1);
                    d.segment(n * n, 2 * n + 1) += gd * jumps[b].segment(n * n, 2 * n + 1);
                }
            }
        },
        nullptr, &f.d2);
    return f;
}

// ---------------------------------------------------------------- system operator

SystemOperator::SystemOperator(const MediumConfig& medium, const VolumeQuadrature& quad, double omega,
                               bool static_limit, int lmax)
    : medium_(medium),
      quad_(quad),
      omega_(omega),
      k0_(static_limit ? 0.0 : medium.k0(omega)),
      static_(static_limit),
      pot_(quad, static_limit ? 0.0 : medium.k0(omega), lmax) {
    if (!(omega > 0.0)) throw std::domain_error("SystemOperator: omega must be positive");
    if (std::abs(quad.outer_radius - medium.outer_radius()) > 1e-12)
        throw std::invalid_argument("SystemOperator: quadrature radius differs from the medium radius");
    gamma_.resize(quad.size());
    for (int i = 0; i < quad.size(); ++i) gamma_[i] = medium.gamma_tilde(quad.layer[i], omega);
    mu_tilde_ = medium.mu_tilde();
}

void SystemOperator::contrast(const Eigen::VectorXcd& u, CField& phi_e, CField& phi_h) const {
    const Eigen::Index n = nodes();
    phi_e = unflatten(u.head(3 * n), n);
    phi_h = unflatten(u.tail(3 * n), n) * mu_tilde_;
    for (int c = 0; c < 3; ++c) phi_e.col(c) = phi_e.col(c).cwiseProduct(gamma_);
}

Eigen::VectorXcd SystemOperator::apply(const Eigen::VectorXcd& u) const {
    if (u.size() != size()) throw std::invalid_argument("SystemOperator::apply: size mismatch");
    CField pe, ph;
    contrast(u, pe, ph);
    const double k2 = k0_ * k0_;
    const auto fe = pot_.at_nodes(pe);
    const auto fh = pot_.at_nodes(ph);
    CField me = k2 * fe.v + fe.d2;
    if (!static_) me += kI * omega_ * omega_ * medium_.mu0 * fh.curl;
    const CField mh = -kI * medium_.eps0 * fe.curl + k2 * fh.v + fh.d2;
    Eigen::VectorXcd out(size());
    out << flatten(me), flatten(mh);
    return u - out;
}

Eigen::VectorXcd SystemOperator::rhs(const SourceSpec& source) const {
    if (source.values.rows() != nodes() || source.div_values.size() != nodes())
        throw std::invalid_argument("SystemOperator::rhs: source must be sampled on the quadrature nodes");
    const auto f = pot_.at_nodes(source.values, &source.div_values);
    Eigen::VectorXcd out(size());
    out << flatten(CField(kI / medium_.eps0 * (k0_ * k0_ * f.v + f.d2))), flatten(f.curl);
    return out;
}

void SystemOperator::represent(const Eigen::VectorXcd& u, const SourceSpec& source, const std::vector<Vec3>& targets,
                               CField& omega_e, CField& h) const {
    CField pe, ph;
    contrast(u, pe, ph);
    const double k2 = k0_ * k0_;
    const auto fe = pot_.at_targets(pe, targets);
    const auto fh = pot_.at_targets(ph, targets);
    const auto fj = pot_.at_targets(source.values, targets, &source.div_values);
    omega_e = k2 * fe.v + fe.d2 + kI / medium_.eps0 * (k2 * fj.v + fj.d2);
    if (!static_) omega_e += kI * omega_ * omega_ * medium_.mu0 * fh.curl;
    h = -kI * medium_.eps0 * fe.curl + k2 * fh.v + fh.d2 + fj.curl;
}

OperatorMatrix assemble_system(double omega, const MediumConfig& medium, const VolumeQuadrature& quad,
                               bool static_limit, int lmax) {
    const SystemOperator op(medium, quad, omega, static_limit, lmax);
    const Eigen::Index n = op.size();
    OperatorMatrix m;
    m.entries.resize(n, n);
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(n);
        e[j] = 1.0;
        m.entries.col(j) = op.apply(e);
    }
    m.domain_label = "[omega E; H] at volume nodes";
    m.range_label = "[omega E; H] at volume nodes";
    m.kernel_tag = static_limit ? "A0" : "Ak";
    m.wavenumber = op.k0();
    return m;
}

}  // namespace maxkit

// ---------------------------------------------------------------- matrix-free GMRES glue

namespace maxkit::detail {
class ScaledSystem;
}

namespace Eigen::internal {
template <>
struct traits<maxkit::detail::ScaledSystem> : public traits<Eigen::SparseMatrix<std::complex<double>>> {};
}  // namespace Eigen::internal

namespace maxkit::detail {

// D^-1 A D with D = diag(s I, I), s balancing the omega E and H blocks
class ScaledSystem : public Eigen::EigenBase<ScaledSystem> {
public:
    using Scalar = cplx;
    using RealScalar = double;
    using StorageIndex = int;
    enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

    ScaledSystem(const SystemOperator& op, double s) : op_(&op), s_(s) {}
    Eigen::Index rows() const { return op_->size(); }
    Eigen::Index cols() const { return op_->size(); }

    template <typename Rhs>
    Eigen::Product<ScaledSystem, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
        return Eigen::Product<ScaledSystem, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
    }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& y) const {
        const Eigen::Index h = y.size() / 2;
        Eigen::VectorXcd u = y;
        u.head(h) *= s_;
        Eigen::VectorXcd a = op_->apply(u);
        a.head(h) /= s_;
        return a;
    }

private:
    const SystemOperator* op_;
    double s_;
};

}  // namespace maxkit::detail

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<maxkit::detail::ScaledSystem, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<maxkit::detail::ScaledSystem, Rhs,
                                generic_product_impl<maxkit::detail::ScaledSystem, Rhs>> {
    using Scalar = typename Product<maxkit::detail::ScaledSystem, Rhs>::Scalar;
    template <typename Dest>
    static void scaleAndAddTo(Dest& dst, const maxkit::detail::ScaledSystem& lhs, const Rhs& rhs,
                              const Scalar& alpha) {
        dst.noalias() += alpha * lhs.apply(Eigen::VectorXcd(rhs));
    }
};
}  // namespace Eigen::internal

namespace maxkit {

ForwardSolution solve_direct(double omega, const MediumConfig& medium, const SourceSpec& source,
                             const VolumeQuadrature& quad, const ForwardOptions& opt) {
    const SystemOperator op(medium, quad, omega, false, opt.lmax);
    const Eigen::VectorXcd f = op.rhs(source);
    const Eigen::Index n = op.size(), h = n / 2;
    ForwardSolution sol;
    sol.omega = omega;
    sol.u = Eigen::VectorXcd::Zero(n);
    sol.E = CField::Zero(op.nodes(), 3);
    sol.H = CField::Zero(op.nodes(), 3);
    if (f.norm() == 0.0) return sol;

    const double fe = f.head(h).norm(), fh = f.tail(h).norm();
    const double s = fh > 0.0 ? std::clamp(fe / fh, omega * omega, 1.0) : 1.0;
    const detail::ScaledSystem sys(op, s);
    Eigen::VectorXcd g = f;
    g.head(h) /= s;
    Eigen::GMRES<detail::ScaledSystem, Eigen::IdentityPreconditioner> gmres;
    gmres.set_restart(opt.restart);
    gmres.setMaxIterations(opt.max_iter);
    gmres.setTolerance(opt.tol);
    gmres.compute(sys);
    Eigen::VectorXcd y = gmres.solve(g);
    // one refinement pass
    const Eigen::VectorXcd r = g - sys.apply(y);
    y += gmres.solve(r);
    sol.iterations = static_cast<int>(gmres.iterations());
    sol.residual = (g - sys.apply(y)).norm() / g.norm();
    if (!(sol.residual < 1e3 * opt.tol + 1e-9))
        throw std::runtime_error("solve_direct: iterative solve did not converge (relative residual " +
                                 std::to_string(sol.residual) + ")");
    y.head(h) *= s;
    sol.u = y;
    sol.E = unflatten(y.head(h), op.nodes()) / omega;
    sol.H = unflatten(y.tail(h), op.nodes());
    return sol;
}

void evaluate_fields(const ForwardSolution& sol, const MediumConfig& medium, const SourceSpec& source,
                     const VolumeQuadrature& quad, const std::vector<Vec3>& targets, CField& E, CField& H, int lmax) {
    const SystemOperator op(medium, quad, sol.omega, false, lmax);
    CField oe;
    op.represent(sol.u, source, targets, oe, H);
    E = oe / sol.omega;
}

void interior_traces(const ForwardSolution& sol, const MediumConfig& medium, const SourceSpec& source,
                     const VolumeQuadrature& quad, const SurfaceQuadrature& surf, CField& E, CField& H, int lmax) {
    const SystemOperator op(medium, quad, sol.omega, false, lmax);
    std::vector<Eigen::VectorXcd> se, sh;
    for (int k : kTraceLevels) {
        const double h = std::ldexp(1.0, -k);
        std::vector<Vec3> pts;
        for (const Vec3& x : surf.nodes) pts.push_back(x * (1.0 - h));
        CField oe, hh;
        op.represent(sol.u, source, pts, oe, hh);
        se.push_back(flatten(oe));
        sh.push_back(flatten(hh));
    }
    E = unflatten(richardson_limit(se), surf.size()) / sol.omega;
    H = unflatten(richardson_limit(sh), surf.size());
}

BoundaryDataset boundary_data(const std::vector<double>& freqs, const MediumConfig& medium,
                              const SourceSpec& source, const SurfaceQuadrature& surf, const VolumeQuadrature& quad,
                              const ForwardOptions& opt) {
    BoundaryDataset d;
    d.frequencies = freqs;
    d.radius = surf.radius;
    d.nodes = surf.nodes;
    d.normals = surf.normals;
    d.weights = surf.weights;
    for (double w : freqs) {
        if (!(w > 0.0)) throw std::domain_error("boundary_data: frequencies must be positive");
        const ForwardSolution sol = solve_direct(w, medium, source, quad, opt);
        CField E, H;
        evaluate_fields(sol, medium, source, quad, surf.nodes, E, H, opt.lmax);
        d.E.push_back(E);
        d.H.push_back(H);
    }
    return d;
}

}  // namespace maxkit

namespace maxkit {

ForwardSetup make_setup(const ForwardConfig& cfg) {
    ForwardSetup s;
    std::vector<SourceModel> terms{make_source(cfg.source)};
    for (const SourceParams& p : cfg.extra_sources) terms.push_back(make_source(p));
    s.model = sum_sources(terms);
    const double R = cfg.medium.outer_radius();
    std::vector<double> extra;
    for (const SourceModel& t : terms)
        if (t.support_radius < R * (1.0 - 1e-9) &&
            std::find(extra.begin(), extra.end(), t.support_radius) == extra.end())
            extra.push_back(t.support_radius);
    s.quad = make_ball_quadrature(R, cfg.medium.layer_radii, cfg.radial_order, cfg.angular_order, extra);
    s.surf = make_sphere_quadrature(R, cfg.surface_order);
    s.source = sample_source(s.model, s.quad.nodes);
    return s;
}

BoundaryDataset synthesize(const ForwardConfig& cfg) {
    const ForwardSetup s = make_setup(cfg);
    return boundary_data(cfg.frequencies, cfg.medium, s.source, s.surf, s.quad, cfg.options);
}

}  // namespace maxkit
