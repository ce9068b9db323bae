#include "maxkit/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace maxkit {

int MediumConfig::layer_of(double r) const {
    int j = 0;
    for (int i = 1; i < layers(); ++i)
        if (r < layer_radii[i]) j = i;
    return j;
}

cplx MediumConfig::eps_complex(int j, double omega) const {
    return cplx(eps_layers.at(j), sigma_layers.at(j) / omega);
}

cplx MediumConfig::cj(int j, double omega) const {
    const double e = eps_layers.at(j), s = sigma_layers.at(j);
    return cplx(s, e * omega) / (e * e * omega * omega + s * s);
}

bool MediumConfig::sigma_proportional(double* c) const {
    const double ratio = sigma_layers.front() / eps_layers.front();
    for (int j = 0; j < layers(); ++j)
        if (std::abs(sigma_layers[j] - ratio * eps_layers[j]) > 1e-12 * (1.0 + std::abs(sigma_layers[j])))
            return false;
    if (c) *c = ratio;
    return true;
}

cplx MediumConfig::c1(double omega) const {
    double c = 0.0;
    if (!sigma_proportional(&c)) throw std::domain_error("c1: conductivity is not proportional to permittivity");
    return cplx(0.0, 1.0) / (eps0 * cplx(omega, c));
}

bool MediumConfig::constant_medium() const {
    for (int j = 1; j < layers(); ++j)
        if (eps_layers[j] != eps_layers[0] || sigma_layers[j] != sigma_layers[0]) return false;
    return true;
}

bool MediumConfig::conductive() const {
    for (double s : sigma_layers)
        if (s > 0.0) return true;
    return false;
}

std::string to_string(SourceClass c) {
    switch (c) {
        case SourceClass::curl_free: return "curl_free";
        case SourceClass::div_free: return "div_free";
        default: return "general";
    }
}

SourceClass source_class_from_string(const std::string& s) {
    if (s == "curl_free") return SourceClass::curl_free;
    if (s == "div_free") return SourceClass::div_free;
    if (s == "general") return SourceClass::general;
    throw std::invalid_argument("unknown source class '" + s + "'");
}

namespace {

struct Bump {
    double a, amp;
    int p;
    Vec3 c;

    // psi = (1 - q)^p, q = |x - c|^2 / a^2
    bool inside(const Vec3& x, double& q) const {
        q = (x - c).squaredNorm() / (a * a);
        return q < 1.0;
    }
    double value(const Vec3& x) const {
        double q;
        return inside(x, q) ? std::pow(1.0 - q, p) : 0.0;
    }
    Vec3 grad(const Vec3& x) const {
        double q;
        if (!inside(x, q)) return Vec3::Zero();
        return -2.0 * p * std::pow(1.0 - q, p - 1) / (a * a) * (x - c);
    }
    Eigen::Matrix3d hessian(const Vec3& x) const {
        double q;
        if (!inside(x, q)) return Eigen::Matrix3d::Zero();
        const Vec3 d = x - c;
        return 4.0 * p * (p - 1) * std::pow(1.0 - q, p - 2) / std::pow(a, 4) * d * d.transpose() -
               2.0 * p * std::pow(1.0 - q, p - 1) / (a * a) * Eigen::Matrix3d::Identity();
    }
    // grad of the Laplacian; needs p >= 3
    Vec3 grad_laplacian(const Vec3& x) const {
        double q;
        if (!inside(x, q)) return Vec3::Zero();
        // lap psi = (2p / a^2) [-3 (1-q)^{p-1} + 2 (p-1) q (1-q)^{p-2}]
        const double s = 1.0 - q;
        const double dq = 2.0 * p / (a * a) *
                          (3.0 * (p - 1) * std::pow(s, p - 2) +
                           2.0 * (p - 1) * (std::pow(s, p - 2) - (p - 2) * q * std::pow(s, p - 3)));
        return dq * 2.0 / (a * a) * (x - c);
    }
};

}  // namespace

SourceModel make_source(const SourceParams& p) {
    if (!(p.radius > 0.0)) throw std::invalid_argument("make_source: bump radius must be positive");
    if (p.power < 2) throw std::invalid_argument("make_source: power must be >= 2");
    const Bump b{p.radius, p.amplitude, p.power, p.center};
    const Vec3 d = p.axis.normalized();
    SourceModel m;
    m.kind = p.kind;
    m.support_radius = p.center.norm() + p.radius;
    const cplx A = p.amplitude;
    auto zero3 = [](const Vec3&) { return CVec3(CVec3::Zero()); };
    if (p.kind == "curl_free_bump") {
        m.class_tag = SourceClass::curl_free;
        m.value = [b, A](const Vec3& x) { return CVec3(A * b.grad(x).cast<cplx>()); };
        m.div = [b, A](const Vec3& x) { return A * b.hessian(x).trace(); };
        m.curl = zero3;
    } else if (p.kind == "div_free_bump") {
        m.class_tag = SourceClass::div_free;
        m.value = [b, A, d](const Vec3& x) { return CVec3(A * b.grad(x).cross(d).cast<cplx>()); };
        m.div = [](const Vec3&) { return cplx(0.0); };
        m.curl = [b, A, d](const Vec3& x) {
            const Eigen::Matrix3d h = b.hessian(x);
            return CVec3(A * (h * d - h.trace() * d).cast<cplx>());
        };
    } else if (p.kind == "mixed_bump") {
        m.class_tag = SourceClass::general;
        m.value = [b, A, d](const Vec3& x) { return CVec3(A * (b.grad(x) + b.grad(x).cross(d)).cast<cplx>()); };
        m.div = [b, A](const Vec3& x) { return A * b.hessian(x).trace(); };
        m.curl = [b, A, d](const Vec3& x) {
            const Eigen::Matrix3d h = b.hessian(x);
            return CVec3(A * (h * d - h.trace() * d).cast<cplx>());
        };
    } else if (p.kind == "dipole_bump") {
        // J = A grad(psi l), l = (x - c) . axis / a
        m.class_tag = SourceClass::curl_free;
        m.value = [b, A, d](const Vec3& x) {
            const double l = (x - b.c).dot(d) / b.a;
            return CVec3(A * (l * b.grad(x) + b.value(x) / b.a * d).cast<cplx>());
        };
        m.div = [b, A, d](const Vec3& x) {
            const double l = (x - b.c).dot(d) / b.a;
            return A * (l * b.hessian(x).trace() + 2.0 * b.grad(x).dot(d) / b.a);
        };
        m.curl = zero3;
    } else if (p.kind == "poloidal_bump") {
        // J = A curl curl(psi axis)
        if (p.power < 3) throw std::invalid_argument("make_source: poloidal_bump needs power >= 3");
        m.class_tag = SourceClass::div_free;
        m.value = [b, A, d](const Vec3& x) {
            const Eigen::Matrix3d h = b.hessian(x);
            return CVec3(A * (h * d - h.trace() * d).cast<cplx>());
        };
        m.div = [](const Vec3&) { return cplx(0.0); };
        m.curl = [b, A, d](const Vec3& x) { return CVec3(-A * b.grad_laplacian(x).cross(d).cast<cplx>()); };
    } else if (p.kind == "neumann_gradient") {
        // phi = (r^2 - (n + 2) a^2 / n) p_n / (4 n + 6), r = |x - c|
        if (p.degree < 1 || p.degree > 2) throw std::invalid_argument("make_source: neumann_gradient degree must be 1 or 2");
        m.class_tag = SourceClass::curl_free;
        const int n = p.degree;
        const double a = p.radius, cst = (n + 2.0) * a * a / n, k = 1.0 / (4.0 * n + 6.0);
        const Vec3 c = p.center;
        auto pn = [n, d](const Vec3& y) { return n == 1 ? y.dot(d) : y.dot(d) * y.dot(d) - y.squaredNorm() / 3.0; };
        auto gpn = [n, d](const Vec3& y) { return Vec3(n == 1 ? d : Vec3(2.0 * y.dot(d) * d - 2.0 * y / 3.0)); };
        m.value = [=](const Vec3& x) {
            const Vec3 y = x - c;
            if (y.norm() >= a) return CVec3(CVec3::Zero());
            return CVec3(A * k * (2.0 * pn(y) * y + (y.squaredNorm() - cst) * gpn(y)).cast<cplx>());
        };
        m.div = [=](const Vec3& x) {
            const Vec3 y = x - c;
            return y.norm() >= a ? cplx(0.0) : A * pn(y);
        };
        m.curl = zero3;
        m.support_radius = c.norm() + a;
    } else if (p.kind == "zero") {
        m.class_tag = SourceClass::general;
        m.value = zero3;
        m.div = [](const Vec3&) { return cplx(0.0); };
        m.curl = zero3;
    } else {
        throw std::invalid_argument("make_source: unknown kind '" + p.kind +
                                    "' (known: curl_free_bump, div_free_bump, mixed_bump, dipole_bump, poloidal_bump, neumann_gradient, zero)");
    }
    return m;
}

SourceModel sum_sources(const std::vector<SourceModel>& terms) {
    if (terms.empty()) throw std::invalid_argument("sum_sources: no terms");
    if (terms.size() == 1) return terms[0];
    SourceModel m;
    m.kind = terms[0].kind;
    m.class_tag = terms[0].class_tag;
    for (std::size_t i = 1; i < terms.size(); ++i) {
        m.kind += "+" + terms[i].kind;
        if (terms[i].class_tag != m.class_tag) m.class_tag = SourceClass::general;
    }
    for (const SourceModel& t : terms) m.support_radius = std::max(m.support_radius, t.support_radius);
    m.value = [terms](const Vec3& x) {
        CVec3 v = CVec3::Zero();
        for (const SourceModel& t : terms) v += t.value(x);
        return v;
    };
    m.div = [terms](const Vec3& x) {
        cplx v = 0.0;
        for (const SourceModel& t : terms) v += t.div(x);
        return v;
    };
    m.curl = [terms](const Vec3& x) {
        CVec3 v = CVec3::Zero();
        for (const SourceModel& t : terms) v += t.curl(x);
        return v;
    };
    return m;
}

SourceModel sampled_source(std::function<CVec3(const Vec3&)> f, double support_radius, SourceClass tag,
                           double h) {
    SourceModel m;
    m.kind = "sampled";
    m.support_radius = support_radius;
    m.class_tag = tag;
    m.value = f;
    // jac(i, k) = d f_i / d x_k
    auto jac = [f, h](const Vec3& x) {
        Eigen::Matrix3cd J;
        for (int k = 0; k < 3; ++k) {
            Vec3 e = Vec3::Zero();
            e[k] = h;
            J.col(k) = (-f(x + 2 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2 * e)) / (12.0 * h);
        }
        return J;
    };
    m.div = [jac](const Vec3& x) { return jac(x).trace(); };
    m.curl = [jac](const Vec3& x) {
        const Eigen::Matrix3cd J = jac(x);
        return CVec3(J(2, 1) - J(1, 2), J(0, 2) - J(2, 0), J(1, 0) - J(0, 1));
    };
    return m;
}

SourceSpec sample_source(const SourceModel& model, const std::vector<Vec3>& nodes) {
    SourceSpec s;
    const int n = static_cast<int>(nodes.size());
    s.nodes = nodes;
    s.values.resize(n, 3);
    s.div_values.resize(n);
    s.curl_values.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        s.values.row(i) = model.value(nodes[i]).transpose();
        s.div_values[i] = model.div(nodes[i]);
        s.curl_values.row(i) = model.curl(nodes[i]).transpose();
    }
    s.support_radius = model.support_radius;
    s.class_tag = model.class_tag;
    s.kind = model.kind;
    return s;
}

ValidationReport validate_config(const MediumConfig& m, const SourceSpec* src, double tol) {
    ValidationReport r;
    auto fail = [&r](const std::string& msg) {
        r.pass = false;
        r.violations.push_back(msg);
    };
    const int L = m.layers();
    if (L == 0) fail("medium has no layers");
    for (int j = 0; j < L; ++j) {
        if (!(m.layer_radii[j] > 0.0)) fail("layer radius must be positive");
        if (j > 0 && !(m.layer_radii[j] < m.layer_radii[j - 1])) fail("layer radii must be strictly descending");
    }
    if (static_cast<int>(m.eps_layers.size()) != L || static_cast<int>(m.sigma_layers.size()) != L)
        fail("eps/sigma list lengths must match the number of layers");
    for (double e : m.eps_layers)
        if (!(e > 0.0)) fail("permittivity must be positive");
    for (double s : m.sigma_layers)
        if (!(s >= 0.0)) fail("conductivity must be non-negative");
    if (!(m.mu_interior > 0.0)) fail("permeability must be positive");
    if (!(m.eps0 > 0.0) || !(m.mu0 > 0.0)) fail("background constants must be positive");

    std::ostringstream mc;
    if (r.pass && m.constant_medium() && m.eps_layers[0] == m.eps0 && m.sigma_layers[0] == 0.0 &&
        m.mu_interior == m.mu0)
        mc << "constant";
    else
        mc << "layered(" << L << ")";
    r.medium_class = mc.str();

    if (!src) return r;
    r.source_class = to_string(src->class_tag);
    const int n = static_cast<int>(src->values.rows());
    if (!src->nodes.empty() && static_cast<int>(src->nodes.size()) != n) fail("source node count mismatch");
    if (L > 0 && !(src->support_radius < m.outer_radius())) fail("source support must lie strictly inside the ball");
    double vmax = 0.0, dmax = 0.0, cmax = 0.0, outside = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = src->values.row(i).norm();
        vmax = std::max(vmax, v);
        if (src->div_values.size() == n) dmax = std::max(dmax, std::abs(src->div_values[i]));
        if (src->curl_values.rows() == n) cmax = std::max(cmax, src->curl_values.row(i).norm());
        if (!src->nodes.empty() && src->nodes[i].norm() >= src->support_radius) outside = std::max(outside, v);
    }
    if (outside > 1e-12) fail("source values do not vanish outside the support radius");
    const double scale = tol * std::max(vmax, 1e-300);
    if (src->class_tag == SourceClass::div_free && dmax > scale) fail("div_free source has nonzero divergence");
    if (src->class_tag == SourceClass::curl_free && cmax > scale) fail("curl_free source has nonzero curl");
    if (vmax > 0.0 && dmax <= scale && cmax <= scale)
        fail("source is both divergence-free and curl-free but nonzero (impossible for compact support)");
    return r;
}

}  // namespace maxkit
