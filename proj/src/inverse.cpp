#include <cmath>
#include <sstream>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "maxkit/inverse.hpp"
#include "sphere_tools.hpp"

namespace maxkit {

using namespace detail;

namespace {

// relative to the larger of the two fields, below which a trace counts as zero
constexpr double kFitNoiseFloor = 1e-9;

constexpr cplx kI(0.0, 1.0);

Eigen::VectorXcd flatten(const CField& f) { return Eigen::Map<const Eigen::VectorXcd>(f.data(), f.size()); }

CField unflatten(const Eigen::VectorXcd& v, Eigen::Index rows) {
    return Eigen::Map<const CField>(v.data(), rows, 3);
}

Eigen::VectorXcd normal_part(const std::vector<Vec3>& normals, const CField& F) {
    Eigen::VectorXcd out(F.rows());
    for (int i = 0; i < F.rows(); ++i) out[i] = (F.row(i) * normals[i].cast<cplx>())(0);
    return out;
}

double weighted_norm(const std::vector<double>& w, const Eigen::VectorXcd& f) {
    double s = 0.0;
    for (int i = 0; i < f.size(); ++i) s += w[i] * std::norm(f[i]);
    return std::sqrt(s);
}

double weighted_norm(const std::vector<double>& w, const CField& f) {
    double s = 0.0;
    for (int i = 0; i < f.rows(); ++i) s += w[i] * f.row(i).squaredNorm();
    return std::sqrt(s);
}

// sum_h c_h Y_h at the nodes of a sphere
Eigen::VectorXcd synthesise_sphere(const SurfaceQuadrature& s, const Eigen::VectorXcd& c, int lmax) {
    const HarmonicTable t = make_harmonic_table(lmax, s.normals);
    return t.Y * c.head(harmonic_count(lmax));
}

// least-squares coefficients of V c = Y; returns the relative residual
// Residual relative to max(|Y|, floor); the floor keeps a field that vanishes to round-off from failing the fit.
double polyfit(const Eigen::MatrixXd& V, const Eigen::MatrixXcd& Y, double floor, Eigen::MatrixXcd& c) {
    const Eigen::MatrixXcd Vc = V.cast<cplx>();
    c = Vc.colPivHouseholderQr().solve(Y);
    const double ny = std::max(Y.norm(), floor);
    return ny == 0.0 ? 0.0 : (Vc * c - Y).norm() / ny;
}

}  // namespace

// ---- asymptotic fit ----

SurfaceQuadrature dataset_sphere(const BoundaryDataset& data) {
    if (data.weights.size() != data.nodes.size())
        throw std::invalid_argument("dataset has no surface quadrature weights");
    SurfaceQuadrature s;
    s.radius = data.radius;
    s.nodes = data.nodes;
    s.normals = data.normals;
    s.weights = data.weights;
    return s;
}

SurfaceQuadrature coefficient_sphere(const AsymptoticCoefficients& c) {
    if (c.weights.size() != c.nodes.size()) throw std::invalid_argument("coefficients carry no surface weights");
    SurfaceQuadrature s;
    s.radius = c.radius;
    s.nodes = c.nodes;
    s.normals = c.normals;
    s.weights = c.weights;
    return s;
}

AsymptoticCoefficients fit_asymptotics(const BoundaryDataset& data, const AsymptoticOrders& orders) {
    if (orders.e_terms < 1 || orders.h_terms < 1) throw std::invalid_argument("fit_asymptotics: need at least one term");
    std::vector<int> use;
    for (std::size_t i = 0; i < data.frequencies.size(); ++i)
        if (data.frequencies[i] <= orders.window) use.push_back(static_cast<int>(i));
    const int need = std::max(orders.e_terms, orders.h_terms) + 1;
    if (static_cast<int>(use.size()) < need) {
        std::ostringstream m;
        m << "fit_asymptotics: " << use.size() << " frequencies inside the window, need at least " << need;
        throw std::domain_error(m.str());
    }
    const Eigen::Index nodes = static_cast<Eigen::Index>(data.nodes.size());
    double wmax = 0.0;
    for (int i : use) wmax = std::max(wmax, data.frequencies[i]);

    AsymptoticCoefficients out;
    out.e_power = orders.e_power;
    out.radius = data.radius;
    out.nodes = data.nodes;
    out.normals = data.normals;
    out.weights = data.weights;
    for (int i : use) out.frequencies.push_back(data.frequencies[i]);

    const int nf = static_cast<int>(use.size());
    double scale = 0.0;
    for (int i : use) scale = std::max({scale, data.E[i].norm(), data.H[i].norm()});
    const double floor = kFitNoiseFloor * std::sqrt(static_cast<double>(nf)) * scale;
    auto fit = [&](const std::vector<CField>& field, int power, int terms, std::vector<CField>& coef) {
        Eigen::MatrixXd V(nf, terms);
        Eigen::MatrixXcd Y(nf, 3 * nodes);
        for (int r = 0; r < nf; ++r) {
            const double s = data.frequencies[use[r]] / wmax;
            for (int k = 0; k < terms; ++k) V(r, k) = std::pow(s, power + k);
            if (field[use[r]].rows() != nodes) throw std::invalid_argument("fit_asymptotics: trace size mismatch");
            Y.row(r) = flatten(field[use[r]]).transpose();
        }
        Eigen::MatrixXcd c;
        const double res = polyfit(V, Y, floor, c);
        coef.clear();
        for (int k = 0; k < terms; ++k)
            coef.push_back(unflatten(c.row(k).transpose() / std::pow(wmax, power + k), nodes));
        return res;
    };
    out.e_residual = fit(data.E, orders.e_power, orders.e_terms, out.E);
    out.h_residual = fit(data.H, 0, orders.h_terms, out.H);
    const double worst = std::max(out.e_residual, out.h_residual);
    if (worst > orders.max_residual) {
        std::ostringstream m;
        m << "data not in asymptotic regime: relative fit residual " << worst << " exceeds " << orders.max_residual;
        throw std::domain_error(m.str());
    }
    return out;
}

// ---- moments ----

MomentSet moments_from_exterior(const SurfaceQuadrature& sphere, const Eigen::VectorXcd& values, int max_degree,
                                double support_radius) {
    if (sphere.radius < support_radius * (1.0 - 1e-12))
        throw std::domain_error("moments_from_exterior: measurement sphere is smaller than the support");
    if (values.size() != sphere.size()) throw std::invalid_argument("moments_from_exterior: size mismatch");
    const Eigen::VectorXcd c = surface_coefficients(sphere, values, max_degree);
    MomentSet M;
    M.max_degree = max_degree;
    M.coefficients.assign(harmonic_count(max_degree), 0.0);
    for (int n = 0; n <= max_degree; ++n)
        for (int m = -n; m <= n; ++m)
            M.at(n, m) = (2.0 * n + 1.0) * std::pow(sphere.radius, n + 1) * c[harmonic_index(n, m)];
    return M;
}

MomentSet volume_moments(const VolumeQuadrature& quad, const Eigen::VectorXcd& density, int max_degree) {
    MomentSet M;
    M.max_degree = max_degree;
    M.coefficients.assign(harmonic_count(max_degree), 0.0);
    for (int i = 0; i < quad.size(); ++i) {
        if (density[i] == 0.0) continue;
        for (int n = 0; n <= max_degree; ++n)
            for (int m = -n; m <= n; ++m)
                M.at(n, m) += quad.weights[i] * density[i] * std::conj(solid_harmonic(n, m, quad.nodes[i]));
    }
    return M;
}

// ---- classes ----

bool HerglotzSpec::valid(double tol) const {
    const double n2 = xi.squaredNorm();
    return n2 > 0.0 && std::abs(xi.dot(xi.conjugate())) <= tol * n2;
}

cplx HerglotzSpec::operator()(const Vec3& x) const {
    return alpha * std::exp(kI * (x.cast<cplx>().transpose() * xi)(0)) + beta;
}

AdmissibleClass AdmissibleClass::harmonic(int max_degree) {
    if (max_degree < 0) throw std::invalid_argument("AdmissibleClass: max_degree must be >= 0");
    AdmissibleClass c;
    c.kind = Kind::harmonic;
    c.max_degree = max_degree;
    return c;
}

AdmissibleClass AdmissibleClass::direction_invariant(const Vec3& d, int basis_size) {
    if (std::abs(d.norm() - 1.0) > 1e-12) throw std::invalid_argument("AdmissibleClass: direction must be a unit vector");
    if (basis_size < 1) throw std::invalid_argument("AdmissibleClass: basis_size must be >= 1");
    AdmissibleClass c;
    c.kind = Kind::direction_invariant;
    c.direction = d;
    c.basis_size = basis_size;
    return c;
}

int AdmissibleClass::dimension() const {
    return kind == Kind::harmonic ? harmonic_count(max_degree) : basis_size * basis_size;
}

std::string AdmissibleClass::describe() const {
    std::ostringstream s;
    if (kind == Kind::harmonic)
        s << "harmonic(" << max_degree << ")";
    else
        s << "direction_invariant((" << direction.x() << "," << direction.y() << "," << direction.z() << "),"
          << basis_size << ")";
    return s.str();
}

Reconstruction reconstruct_admissible(const MomentSet& moments, const AdmissibleClass& cls,
                                      const VolumeQuadrature& quad, double support_radius, double max_condition) {
    const double a = support_radius;
    if (!(a > 0.0)) throw std::invalid_argument("reconstruct_admissible: support radius must be positive");
    const int N = moments.max_degree, rows = harmonic_count(N), dim = cls.dimension();
    if (dim > rows) throw IdentifiabilityError("class too rich for available moments: basis dimension exceeds moment count");
    if (cls.kind == AdmissibleClass::Kind::harmonic && cls.max_degree > N)
        throw IdentifiabilityError("class too rich for available moments: degree above the highest moment");

    std::vector<int> inside;
    for (int i = 0; i < quad.size(); ++i)
        if (quad.nodes[i].norm() <= a * (1.0 + 1e-12)) inside.push_back(i);
    const int ni = static_cast<int>(inside.size());

    Eigen::MatrixXcd B(ni, dim);
    if (cls.kind == AdmissibleClass::Kind::harmonic) {
        for (int k = 0; k < ni; ++k)
            for (int n = 0; n <= cls.max_degree; ++n)
                for (int m = -n; m <= n; ++m)
                    B(k, harmonic_index(n, m)) = solid_harmonic(n, m, quad.nodes[inside[k]]);
    } else {
        const Vec3 d = cls.direction;
        const Vec3 u = (std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).cross(d).normalized();
        const Vec3 v = d.cross(u);
        const int b = cls.basis_size;
        for (int k = 0; k < ni; ++k) {
            const Vec3& x = quad.nodes[inside[k]];
            const double s = x.dot(u) / a, t = x.dot(v) / a;
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < b; ++j)
                    B(k, i * b + j) = std::legendre(i, s) * std::legendre(j, t);
        }
    }
    Eigen::VectorXd wi(ni);
    for (int k = 0; k < ni; ++k) wi[k] = quad.weights[inside[k]];
    Eigen::VectorXd cnorm(dim);
    for (int c = 0; c < dim; ++c) {
        cnorm[c] = std::sqrt((wi.array() * B.col(c).array().abs2()).sum());
        if (cnorm[c] == 0.0) throw IdentifiabilityError("class basis function vanishes on the support");
        B.col(c) /= cnorm[c];
    }
    // rows normalised by the L2 norm of |y|^n Y on the support ball
    Eigen::MatrixXcd G(rows, dim);
    Eigen::VectorXcd M(rows);
    for (int n = 0; n <= N; ++n) {
        const double rn = std::sqrt((2.0 * n + 3.0) / std::pow(a, 2 * n + 3));
        for (int m = -n; m <= n; ++m) {
            const int h = harmonic_index(n, m);
            for (int c = 0; c < dim; ++c) {
                cplx s = 0.0;
                for (int k = 0; k < ni; ++k)
                    s += wi[k] * B(k, c) * std::conj(solid_harmonic(n, m, quad.nodes[inside[k]]));
                G(h, c) = rn * s;
            }
            M[h] = rn * moments.at(n, m);
        }
    }
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    Reconstruction out;
    out.condition = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
    if (out.condition > max_condition) {
        std::ostringstream m;
        m << "class too rich for available moments: Gram condition number " << out.condition << " > " << max_condition;
        throw IdentifiabilityError(m.str());
    }
    const Eigen::VectorXcd c = svd.solve(M);
    const double nm = M.norm();
    out.residual = nm == 0.0 ? 0.0 : (G * c - M).norm() / nm;
    out.coefficients = c.cwiseQuotient(cnorm.cast<cplx>());
    out.density = Eigen::VectorXcd::Zero(quad.size());
    const Eigen::VectorXcd vals = B * c;
    for (int k = 0; k < ni; ++k) out.density[inside[k]] = vals[k];
    return out;
}

// ---- source ----

SourceRecovery recover_source(const AsymptoticCoefficients& coeffs, const KnownParameters& known,
                              SourceClass declared, const AdmissibleClass& cls, const VolumeQuadrature& quad,
                              double support_radius, int lmax) {
    const MediumConfig& med = known.medium;
    const SurfaceQuadrature sphere = coefficient_sphere(coeffs);
    const double R = sphere.radius;
    if (std::abs(R - med.outer_radius()) > 1e-12 * R)
        throw std::invalid_argument("recover_source: data sphere must be the outer boundary");
    SourceRecovery out;
    out.source.nodes = quad.nodes;
    out.source.support_radius = support_radius;
    out.source.class_tag = declared;
    out.source.kind = "recovered";
    const int nh = harmonic_count(lmax);

    if (declared == SourceClass::curl_free) {
        if (coeffs.e_power == 1)
            throw std::domain_error("recover_source: class mismatch, the data fit declares div J = 0 but the source is declared curl-free");
        if (med.layers() != 1) throw std::domain_error("recover_source: the curl-free path needs a constant medium");
        const CField* lead = coeffs.e_order(coeffs.e_power);
        if (!lead) throw std::domain_error("recover_source: leading E coefficient missing");
        const bool conductive = coeffs.e_power == 0;
        if (conductive && !known.sigma) throw RecoveryOrderError("the curl-free path needs sigma; recover or declare it first");
        if (!conductive && !known.eps) throw RecoveryOrderError("the curl-free path needs eps; recover or declare it first");
        const double sig = med.sigma_layers[0], eps = med.eps_layers[0], eps0 = med.eps0;
        // exterior potential psi = sum psi_h (R/r)^{n+1} Y_h with nu . E = d psi / dr
        const Eigen::VectorXcd en = surface_coefficients(sphere, normal_part(sphere.normals, *lead), lmax);
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(nh);
        for (int n = 1; n <= lmax; ++n) {
            // boundary value of u per unit Newtonian trace of div J:
            // sigma > 0: u = N_sigma[div J], (1/2 + K)[u] = V[div J] / sigma with (1/2 + K) = n / (2n + 1);
            // sigma = 0: transmission to the eps0 exterior
            const cplx T = conductive ? cplx((2.0 * n + 1.0) / (n * sig))
                                      : kI * (2.0 * n + 1.0) / (n * eps + (n + 1.0) * eps0);
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                const cplx psi = -R * en[h] / (n + 1.0);
                v[h] = psi / T;
            }
        }
        const MomentSet M = moments_from_exterior(sphere, synthesise_sphere(sphere, v, lmax), lmax, support_radius);
        const Reconstruction rho = reconstruct_admissible(M, cls, quad, support_radius);
        // J = grad phi, Delta phi = div J, d phi / d nu = 0: phi = -V[rho] + w
        const VolumeOperator op(quad, lmax, RadialKernel{});
        const Eigen::MatrixXcd c = op.analyse(rho.density);
        const double a = support_radius;
        Eigen::MatrixXcd rv, rd;
        op.radial_rows(a, rv, rd);
        Eigen::VectorXcd wc = Eigen::VectorXcd::Zero(nh);
        for (int n = 1; n <= lmax; ++n) {
            const Eigen::RowVectorXcd der = rd.row(n) * c.middleCols(n * n, 2 * n + 1);
            for (int m = -n; m <= n; ++m) wc[harmonic_index(n, m)] = der[m + n] / (n * std::pow(a, n - 1));
        }
        const std::vector<double> ones(lmax + 1, 1.0);
        out.source.values = -op.gradient(rho.density) + solid_gradient(wc, ones, false, quad.nodes, lmax, a);
        for (int i = 0; i < quad.size(); ++i)
            if (quad.nodes[i].norm() > a * (1.0 + 1e-12)) out.source.values.row(i).setZero();
        out.source.div_values = rho.density;
        out.source.curl_values = CField::Zero(quad.size(), 3);
        out.moments.push_back(M);
        out.parts.push_back(rho);
        out.class_residual = rho.residual;
        return out;
    }

    if (declared == SourceClass::div_free) {
        if (coeffs.e_power != 1)
            throw std::domain_error("recover_source: class mismatch, the data fit declares div J != 0 but the source is declared divergence-free");
        if (coeffs.H.empty()) throw std::domain_error("recover_source: H^(0) coefficient missing");
        if (!known.mu) throw RecoveryOrderError("the divergence-free path needs mu; recover or declare it first");
        const double mu = med.mu_interior, mu0 = med.mu0, mut = med.mu_tilde();
        // interior trace: tangential part continuous, nu . H|- = (mu0 / mu) nu . H|+
        CField hm = coeffs.H[0];
        const Eigen::VectorXcd hn = normal_part(sphere.normals, hm);
        for (int i = 0; i < sphere.size(); ++i)
            hm.row(i) += (mu0 / mu - 1.0) * hn[i] * sphere.normals[i].cast<cplx>().transpose();
        // V[curl J] = H|- + mu~ grad S[nu . H|-] on dB
        const Eigen::VectorXcd g = surface_coefficients(sphere, normal_part(sphere.normals, hm), lmax);
        Eigen::VectorXcd sc(nh);
        for (int n = 0; n <= lmax; ++n)
            for (int m = -n; m <= n; ++m) {
                const int h = harmonic_index(n, m);
                sc[h] = g[h] * std::pow(R, 1 - n) / (2.0 * n + 1.0);
            }
        const std::vector<double> ones(lmax + 1, 1.0);
        const CField vc = hm + mut * solid_gradient(sc, ones, false, sphere.nodes, lmax, R);
        CField C(quad.size(), 3);
        for (int k = 0; k < 3; ++k) {
            const MomentSet M = moments_from_exterior(sphere, vc.col(k), lmax, support_radius);
            const Reconstruction rk = reconstruct_admissible(M, cls, quad, support_radius);
            C.col(k) = rk.density;
            out.moments.push_back(M);
            out.parts.push_back(rk);
            out.class_residual = std::max(out.class_residual, rk.residual);
        }
        const VectorPotentials pot(quad, 0.0, lmax);
        out.source.values = pot.at_nodes(C).curl;
        out.source.div_values = Eigen::VectorXcd::Zero(quad.size());
        out.source.curl_values = C;
        return out;
    }
    throw std::invalid_argument("recover_source: declare the source curl-free or divergence-free");
}

// ---- mu ----

MuRecovery recover_mu(const SurfaceQuadrature& sphere, const CField& h0_exterior, const SourceSpec& source,
                      const VolumeQuadrature& quad, const MediumConfig& geometry, int lmax) {
    if (source.values.rows() != quad.size()) throw RecoveryOrderError("mu needs the current J on the quadrature nodes");
    if (h0_exterior.rows() != sphere.size()) throw std::invalid_argument("recover_mu: trace size mismatch");
    const double R = sphere.radius, mu0 = geometry.mu0;
    const VectorPotentials pot(quad, 0.0, lmax);
    const auto vj = pot.at_targets(source.values, sphere.nodes, &source.div_values);
    const Eigen::VectorXcd f = surface_coefficients(sphere, normal_part(sphere.normals, vj.curl), lmax);
    const Eigen::VectorXcd D = surface_coefficients(sphere, normal_part(sphere.normals, h0_exterior), lmax);
    const double scale = std::max(weighted_norm(sphere.weights, vj.v) / R, weighted_norm(sphere.weights, h0_exterior));
    if (!(scale > 0.0) || f.norm() <= 1e-6 * scale * std::sqrt(4.0 * M_PI))
        throw IdentifiabilityError(
            "mu not identifiable from this source at leading order: nu . curl V[J] vanishes on dB, so H^(0) carries no "
            "permeability contrast (curl J = 0 gives no magnetic leading signal)");
    // per mode: D (n + mu0 (n+1) s) = (2n+1) f, s = 1 / mu
    cplx num = 0.0;
    double den = 0.0;
    Eigen::VectorXcd a(D.size()), b(D.size());
    for (int n = 0; n <= lmax; ++n)
        for (int m = -n; m <= n; ++m) {
            const int h = harmonic_index(n, m);
            a[h] = mu0 * (n + 1.0) * D[h];
            b[h] = (2.0 * n + 1.0) * f[h] - double(n) * D[h];
            num += std::conj(a[h]) * b[h];
            den += std::norm(a[h]);
        }
    if (den == 0.0) throw IdentifiabilityError("mu not identifiable: the measured H^(0) normal trace vanishes");
    const double s = num.real() / den;
    if (!(s > 0.0)) throw IdentifiabilityError("mu not identifiable: least-squares 1/mu is not positive");
    MuRecovery out;
    out.mu = 1.0 / s;
    out.mu_tilde = (out.mu - mu0) / mu0;
    out.residual = b.norm() > 0.0 ? (a * s - b).norm() / b.norm() : 0.0;
    return out;
}

// ---- sigma ----

namespace {

struct SigmaModel {
    const KnownParameters& known;
    const SourceSpec& source;
    const VolumeQuadrature& quad;
    const SurfaceQuadrature& sphere;
    int lmax;

    CField h1(const std::vector<double>& sigma) const {
        MediumConfig m = known.medium;
        m.sigma_layers = sigma;
        return expand_low_freq(m, source, quad, sphere, 2, lmax).H1_surface;
    }
};

struct SigmaFunctor {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const SigmaModel* model;
    Eigen::VectorXd data;  // weighted real and imaginary parts
    std::vector<double> sw;
    int m_inputs, m_values;

    int inputs() const { return m_inputs; }
    int values() const { return m_values; }

    Eigen::VectorXd pack(const CField& f) const {
        Eigen::VectorXd v(m_values);
        const Eigen::Index n = f.rows();
        for (Eigen::Index i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) {
                v[2 * (3 * i + k)] = sw[i] * f(i, k).real();
                v[2 * (3 * i + k) + 1] = sw[i] * f(i, k).imag();
            }
        return v;
    }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
        std::vector<double> s(x.size());
        for (int j = 0; j < x.size(); ++j) s[j] = std::exp(x[j]);
        fvec = pack(model->h1(s)) - data;
        return 0;
    }
};

}  // namespace

SigmaRecovery recover_sigma(const AsymptoticCoefficients& coeffs, const KnownParameters& known,
                            const SourceSpec& source, const VolumeQuadrature& quad, bool constant_sigma, int lmax,
                            double noise_floor) {
    if (coeffs.e_power != 1) throw std::domain_error("recover_sigma: needs a divergence-free source (E starts at omega^1)");
    if (source.values.rows() != quad.size()) throw RecoveryOrderError("sigma needs J; recover the source first");
    if (!known.mu) throw RecoveryOrderError("sigma needs mu; recover mu first");
    if (coeffs.H.size() < 2) throw std::domain_error("recover_sigma: H^(1) coefficient missing from the fit");
    const CField* e1 = coeffs.e_order(1);
    if (!e1) throw std::domain_error("recover_sigma: E^(1) coefficient missing from the fit");
    const SurfaceQuadrature sphere = coefficient_sphere(coeffs);
    SigmaRecovery out;
    const double e1n = weighted_norm(sphere.weights, *e1);
    out.normal_trace = e1n > 0.0 ? weighted_norm(sphere.weights, normal_part(sphere.normals, *e1)) / e1n : 0.0;
    if (out.normal_trace <= noise_floor)
        throw IdentifiabilityError("sigma not identifiable: nu . E^(1)|+ vanishes on dB (nonvanishing-trace hypothesis fails)");

    const SigmaModel model{known, source, quad, sphere, lmax};
    const int L = known.medium.layers();
    const CField& data = coeffs.H[1];
    // constant conductivity: E^(1) does not depend on sigma, so H^(1) = sigma H^(1)[sigma = 1]
    const CField basis = model.h1(std::vector<double>(L, 1.0));
    cplx num = 0.0;
    double den = 0.0;
    for (int i = 0; i < sphere.size(); ++i) {
        num += sphere.weights[i] * (basis.row(i).conjugate() * data.row(i).transpose())(0);
        den += sphere.weights[i] * basis.row(i).squaredNorm();
    }
    const double s0 = std::max(num.real() / den, 0.0);
    const double dn = weighted_norm(sphere.weights, data);
    if (constant_sigma || L == 1) {
        out.sigma.assign(L, s0);
        out.residual = dn > 0.0 ? weighted_norm(sphere.weights, CField(s0 * basis - data)) / dn : 0.0;
        return out;
    }
    if (!(s0 > 0.0)) throw IdentifiabilityError("sigma not identifiable: H^(1) vanishes");
    SigmaFunctor fn;
    fn.model = &model;
    fn.m_inputs = L;
    fn.m_values = 6 * sphere.size();
    for (double w : sphere.weights) fn.sw.push_back(std::sqrt(w));
    fn.data = fn.pack(data);
    Eigen::NumericalDiff<SigmaFunctor> nd(fn, 1e-6);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<SigmaFunctor>> lm(nd);
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-14;
    lm.parameters.maxfev = 60;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(L, std::log(s0));
    lm.minimize(x);
    Eigen::MatrixXd jac(fn.m_values, L);
    nd.df(x, jac);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
    const Eigen::VectorXd sv = svd.singularValues();
    if (!(sv[L - 1] > 1e-6 * sv[0]))
        throw IdentifiabilityError(
            "sigma not identifiable per layer: H^(1) responds to a single combination of the layer conductivities "
            "for this source");
    out.sigma.resize(L);
    for (int j = 0; j < L; ++j) out.sigma[j] = std::exp(x[j]);
    Eigen::VectorXd r;
    fn(x, r);
    out.residual = dn > 0.0 ? r.norm() / dn : 0.0;
    return out;
}

// ---- Herglotz ----

namespace {

struct HerglotzFunctor {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const SurfaceQuadrature* s;
    Eigen::VectorXcd f;
    Eigen::VectorXd sw;

    int inputs() const { return 5; }
    int values() const { return 2 * static_cast<int>(f.size()); }

    // x = (polar, azimuth, roll, kappa_re, kappa_im)
    static CVec3 xi_of(const Eigen::VectorXd& x) {
        const double th = x[0], ph = x[1], ro = x[2];
        const Vec3 n(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
        const Vec3 e1 = (std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX()).cross(n).normalized();
        const Vec3 e2 = n.cross(e1);
        const Vec3 a = std::cos(ro) * e1 + std::sin(ro) * e2;
        const Vec3 b = n.cross(a);
        return cplx(x[3], x[4]) * (a.cast<cplx>() + kI * b.cast<cplx>());
    }

    // best alpha, beta for a given xi; returns the weighted residual vector
    Eigen::VectorXcd solve(const CVec3& xi, cplx& alpha, cplx& beta) const {
        const int n = static_cast<int>(f.size());
        Eigen::MatrixXcd A(n, 2);
        for (int i = 0; i < n; ++i) {
            A(i, 0) = sw[i] * std::exp(kI * (s->nodes[i].cast<cplx>().transpose() * xi)(0));
            A(i, 1) = sw[i];
        }
        const Eigen::VectorXcd rhs = sw.cast<cplx>().cwiseProduct(f);
        const Eigen::VectorXcd c = A.colPivHouseholderQr().solve(rhs);
        alpha = c[0];
        beta = c[1];
        return A * c - rhs;
    }

    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
        cplx a, b;
        const Eigen::VectorXcd r = solve(xi_of(x), a, b);
        fvec.resize(2 * r.size());
        for (int i = 0; i < r.size(); ++i) {
            fvec[2 * i] = r[i].real();
            fvec[2 * i + 1] = r[i].imag();
        }
        return 0;
    }
};

}  // namespace

HerglotzFit fit_herglotz(const SurfaceQuadrature& sphere, const Eigen::VectorXcd& values) {
    HerglotzFit best;
    HerglotzFunctor fn;
    fn.s = &sphere;
    fn.f = values;
    fn.sw.resize(sphere.size());
    for (int i = 0; i < sphere.size(); ++i) fn.sw[i] = std::sqrt(sphere.weights[i]);
    const double fnorm = fn.sw.cast<cplx>().cwiseProduct(values).norm();
    if (fnorm == 0.0) {
        best.spec.xi = CVec3(1.0, kI, 0.0);
        best.residual = 0.0;
        return best;
    }
    Eigen::NumericalDiff<HerglotzFunctor> nd(fn, 1e-7);
    for (double th : {0.3, 1.2, 2.2})
        for (double ph : {0.0, 2.1, 4.2})
            for (double k : {0.5, 1.5}) {
                Eigen::VectorXd x(5);
                x << th, ph, 0.4, k, 0.1;
                Eigen::LevenbergMarquardt<Eigen::NumericalDiff<HerglotzFunctor>> lm(nd);
                lm.parameters.maxfev = 400;
                lm.minimize(x);
                HerglotzSpec sp;
                sp.xi = HerglotzFunctor::xi_of(x);
                const double res = fn.solve(sp.xi, sp.alpha, sp.beta).norm() / fnorm;
                if (res < best.residual) {
                    best.residual = res;
                    best.spec = sp;
                }
            }
    return best;
}

}  // namespace maxkit
