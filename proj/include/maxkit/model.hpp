#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maxkit/geometry.hpp"

namespace maxkit {

using CField = Eigen::Matrix<cplx, Eigen::Dynamic, 3>;  // one complex 3-vector per row

// Concentric layered ball. Layer j occupies radii (layer_radii[j+1], layer_radii[j]);
// layer 0 is the outermost, the last layer contains the origin.
struct MediumConfig {
    std::vector<double> layer_radii{1.0};
    std::vector<double> eps_layers{1.0};
    std::vector<double> sigma_layers{0.0};
    double mu_interior = 1.0;
    double eps0 = 1.0;
    double mu0 = 1.0;

    int layers() const { return static_cast<int>(layer_radii.size()); }
    double outer_radius() const { return layer_radii.front(); }
    std::vector<double> inner_radii() const { return {layer_radii.begin() + 1, layer_radii.end()}; }
    int layer_of(double r) const;

    double k0(double omega) const { return omega * std::sqrt(eps0 * mu0); }
    // complex permittivity eps + i sigma / omega of layer j
    cplx eps_complex(int j, double omega) const;
    cplx gamma_tilde(int j, double omega) const { return (eps_complex(j, omega) - eps0) / eps0; }
    double mu_tilde() const { return (mu_interior - mu0) / mu0; }
    // sigma = c eps case: c_1(omega) = i / (eps0 (omega + c i))
    bool sigma_proportional(double* c = nullptr) const;
    cplx c1(double omega) const;
    // c_j(omega) = (sigma_j + i eps_j omega) / (eps_j^2 omega^2 + sigma_j^2) = i / (omega eps_complex(j))
    cplx cj(int j, double omega) const;
    bool constant_medium() const;
    bool conductive() const;
};

enum class SourceClass { curl_free, div_free, general };
std::string to_string(SourceClass c);
SourceClass source_class_from_string(const std::string& s);

// Closed-form current density with analytic divergence and curl.
struct SourceModel {
    std::string kind;
    double support_radius = 0.0;
    SourceClass class_tag = SourceClass::general;
    std::function<CVec3(const Vec3&)> value;
    std::function<cplx(const Vec3&)> div;
    std::function<CVec3(const Vec3&)> curl;
};

struct SourceParams {
    std::string kind = "div_free_bump";
    double radius = 0.8;     // bump radius
    double amplitude = 1.0;
    int power = 3;
    int degree = 1;          // neumann_gradient: degree of the harmonic divergence
    Vec3 axis = Vec3::UnitZ();
    Vec3 center = Vec3::Zero();
};

// Catalog: curl_free_bump (J = A grad psi), div_free_bump (J = A curl(psi axis)),
// mixed_bump (sum of both), dipole_bump (J = A grad(psi (x-c).axis / a)),
// poloidal_bump (J = A curl curl(psi axis), p >= 3), zero,
// neumann_gradient (J = A grad phi on the ball |x - c| < a with div J = p_n
// harmonic of degree 1 or 2 along axis and d phi / d nu = 0 on its boundary).
// psi = (1 - |x-c|^2/a^2)^p inside the bump.
SourceModel make_source(const SourceParams& p);

// Pointwise sum; the class tag survives only if all terms share it.
SourceModel sum_sources(const std::vector<SourceModel>& terms);

// Wraps node samples; div and curl come from fourth-order differences of a
// smooth interpolant supplied as a callable.
SourceModel sampled_source(std::function<CVec3(const Vec3&)> f, double support_radius,
                           SourceClass tag, double h = 1e-3);

struct SourceSpec {
    std::vector<Vec3> nodes;
    CField values;
    Eigen::VectorXcd div_values;
    CField curl_values;
    double support_radius = 0.0;
    SourceClass class_tag = SourceClass::general;
    std::string kind;
};

SourceSpec sample_source(const SourceModel& model, const std::vector<Vec3>& nodes);

struct BoundaryDataset {
    std::vector<double> frequencies;
    double radius = 1.0;
    std::vector<Vec3> nodes;
    std::vector<Vec3> normals;
    std::vector<double> weights;  // surface quadrature weights, empty if unknown
    std::vector<CField> E;        // per frequency, nodes x 3
    std::vector<CField> H;
};

// Per-node fit E = sum_k E[k] omega^(e_power + k), H = sum_k H[k] omega^k.
struct AsymptoticCoefficients {
    int e_power = 1;
    std::vector<CField> E, H;
    double e_residual = 0.0;  // relative least-squares residuals
    double h_residual = 0.0;
    std::vector<double> frequencies;  // frequencies used by the fit
    double radius = 1.0;
    std::vector<Vec3> nodes, normals;
    std::vector<double> weights;

    // coefficient of omega^p in E, or nullptr
    const CField* e_order(int p) const {
        const int k = p - e_power;
        return k >= 0 && k < static_cast<int>(E.size()) ? &E[k] : nullptr;
    }
};

struct MomentSet {
    int max_degree = 0;
    std::vector<cplx> coefficients;  // harmonic_index(n, m)
    cplx& at(int n, int m) { return coefficients[harmonic_index(n, m)]; }
    cplx at(int n, int m) const { return coefficients[harmonic_index(n, m)]; }
};

struct ValidationReport {
    bool pass = true;
    std::vector<std::string> violations;
    std::string medium_class;  // "constant" or "layered(N)"
    std::string source_class;
};

ValidationReport validate_config(const MediumConfig& medium, const SourceSpec* source,
                                 double tol = 1e-8);

}  // namespace maxkit
