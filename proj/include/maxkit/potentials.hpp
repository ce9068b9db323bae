#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maxkit/geometry.hpp"
#include "maxkit/model.hpp"

namespace maxkit {

constexpr int kDefaultLmax = 8;

// e^{i k |x|} / (4 pi |x|)
cplx fundamental_solution(double k0, const Vec3& x);

// Kernels that are functions of |x - y|, expanded as
//   G(x, y) = sum_n g_n(|x|, |y|) sum_m Y_n^m(x^) conj(Y_n^m(y^)).
enum class KernelKind { laplace, helmholtz, distance };

struct RadialKernel {
    KernelKind kind = KernelKind::laplace;
    double k = 0.0;

    cplx value(int n, double r, double s) const;
    cplx dr(int n, double r, double s) const;  // derivative in the target radius r
    // the kernel itself as a function of distance; used for surface integrals
    cplx of_distance(double d) const;
    cplx d_of_distance(double d) const;
};

struct OperatorMatrix {
    Eigen::MatrixXcd entries;
    std::string domain_label;
    std::string range_label;
    std::string kernel_tag;
    double wavenumber = 0.0;
};

// Harmonic analysis/synthesis on the shells of a VolumeQuadrature.
struct ShellBasis {
    int lmax = 0;
    HarmonicTable table;       // on the unit sphere rule
    Eigen::MatrixXcd wconj;    // per_shell x harmonics: w conj(Y)
    Eigen::MatrixXcd aphi;     // i m Y / sin(theta)
};
ShellBasis make_shell_basis(const VolumeQuadrature& quad, int lmax);
// shells x harmonics
Eigen::MatrixXcd shell_analyse(const ShellBasis& b, const VolumeQuadrature& quad, const Eigen::VectorXcd& f);
// values at nodes from shell coefficients
Eigen::VectorXcd shell_synthesise(const ShellBasis& b, const Eigen::MatrixXcd& c);
// gradient at nodes from value and radial-derivative coefficients
CField shell_gradient(const ShellBasis& b, const VolumeQuadrature& quad, const Eigen::MatrixXcd& c,
                      const Eigen::MatrixXcd& dc);

// Volume integrals against a RadialKernel on a VolumeQuadrature. The density
// is expanded in spherical harmonics on each shell and in Lagrange
// polynomials on the Gauss nodes of each radial segment; radial integrals
// against g_n are done with panels split at the target radius, so targets
// may coincide with nodes.
class VolumeOperator {
public:
    VolumeOperator(const VolumeQuadrature& quad, int lmax, RadialKernel kernel);

    const VolumeQuadrature& quad() const { return quad_; }
    int lmax() const { return lmax_; }
    const RadialKernel& kernel() const { return kernel_; }

    // shells x harmonics: c(s, h) = sum over the shell of w f conj(Y_h)
    Eigen::MatrixXcd analyse(const Eigen::VectorXcd& f) const;

    Eigen::VectorXcd apply(const Eigen::VectorXcd& f) const;
    CField gradient(const Eigen::VectorXcd& f) const;
    CField apply(const CField& f) const;

    // arbitrary targets; either output may be null
    void evaluate(const Eigen::VectorXcd& f, const std::vector<Vec3>& targets, Eigen::VectorXcd* value,
                  CField* grad) const;

    // per-shell coefficients of V[f] and d/dr V[f] at the nodes from analyse(f); either may be null
    void node_coefficients(const Eigen::MatrixXcd& c, Eigen::MatrixXcd* out, Eigen::MatrixXcd* dout) const;
    const ShellBasis& basis() const { return basis_; }

    // same from coefficients returned by analyse (or combinations of them)
    void evaluate_coefficients(const Eigen::MatrixXcd& c, const std::vector<Vec3>& targets,
                               Eigen::VectorXcd* value, CField* grad) const;

    // radial rows for a target radius: (lmax+1) x shells
    void radial_rows(double r, Eigen::MatrixXcd& val, Eigen::MatrixXcd& der) const;

private:
    VolumeQuadrature quad_;
    int lmax_;
    RadialKernel kernel_;
    ShellBasis basis_;
    std::vector<Eigen::MatrixXcd> node_val_;  // per degree: target shell x source shell
    std::vector<Eigen::MatrixXcd> node_der_;
};

// Synthesis of sum_h a_h(r) Y_h(x^) and its gradient at arbitrary targets.
// The callback fills a_h and da_h/dr for one radius; it is called once per
// distinct target radius, possibly concurrently. Radii below floor_radius are
// clamped.
using RadialCoefficients = std::function<void(double r, Eigen::VectorXcd& a, Eigen::VectorXcd& da)>;
void synthesise_targets(int lmax, const std::vector<Vec3>& targets, double floor_radius,
                        const RadialCoefficients& coeffs, Eigen::VectorXcd* value, CField* grad);

// Gradient of nodal samples by harmonic analysis per shell and Lagrange
// differentiation along each radial segment.
CField spectral_gradient(const ShellBasis& b, const VolumeQuadrature& quad, const Eigen::VectorXcd& f);

// Lagrange differentiation matrix on the radial nodes of one segment.
Eigen::MatrixXd lagrange_derivative(const std::vector<double>& x);

Eigen::VectorXcd volume_potential(double k0, const VolumeQuadrature& quad, const Eigen::VectorXcd& density,
                                  const std::vector<Vec3>& targets, int lmax = kDefaultLmax);
CField volume_potential(double k0, const VolumeQuadrature& quad, const CField& density,
                        const std::vector<Vec3>& targets, int lmax = kDefaultLmax);

// grad V[div Phi]
CField d2_volume_potential(const VolumeQuadrature& quad, const CField& density, const Eigen::VectorXcd& div,
                           const std::vector<Vec3>& targets, int lmax = kDefaultLmax);

enum class CurlPath { curl_density, kernel_gradient };
// V[curl Phi] (default) or curl V[Phi] by differentiating the kernel
CField curl_volume_potential(double k0, const VolumeQuadrature& quad, const CField& density,
                             const CField& curl, const std::vector<Vec3>& targets,
                             CurlPath path = CurlPath::curl_density, int lmax = kDefaultLmax);

// -(1/4 pi) int |x - y| Phi(y) dy
Eigen::VectorXcd l_operator(const VolumeQuadrature& quad, const Eigen::VectorXcd& density,
                            const std::vector<Vec3>& targets, int lmax = kDefaultLmax);

// Surface operators on a sphere centred at the origin via the Funk-Hecke
// formula: an integral operator with kernel K(x^ . y^) acts on Y_n^m by
// 2 pi int_{-1}^{1} K(t) P_n(t) dt. The kernel integrals are computed
// numerically with panels graded toward t = 1.
struct SurfaceKernelSpectrum {
    std::vector<cplx> value;  // per degree
    std::vector<cplx> dr;     // derivative in the target radius
};

enum class SurfaceKernel { single_layer, double_layer, adjoint_double_layer };

SurfaceKernelSpectrum surface_spectrum(SurfaceKernel which, double k0, double source_radius,
                                       double target_radius, int lmax);

// conj-harmonic coefficients on the unit sphere: sum_j (w_j / R^2) f_j conj(Y(y_j^))
Eigen::VectorXcd surface_coefficients(const SurfaceQuadrature& quad, const Eigen::VectorXcd& density, int lmax);

// S^k[phi] at targets (value and optional gradient)
Eigen::VectorXcd single_layer(double k0, const SurfaceQuadrature& quad, const Eigen::VectorXcd& density,
                              const std::vector<Vec3>& targets, CField* grad = nullptr,
                              int lmax = kDefaultLmax);
// D^0[phi] with kernel d/dnu_y Gamma_0(x - y); on-surface targets get the
// principal value.
Eigen::VectorXcd double_layer(const SurfaceQuadrature& quad, const Eigen::VectorXcd& density,
                              const std::vector<Vec3>& targets, int lmax = kDefaultLmax);

// Dense operator on the nodes of one sphere. Targets default to the same sphere.
OperatorMatrix surface_operator(SurfaceKernel which, double k0, const SurfaceQuadrature& source,
                                const SurfaceQuadrature& target, int lmax = kDefaultLmax);
OperatorMatrix np_operator(const SurfaceQuadrature& quad, bool adjoint, int lmax = kDefaultLmax);

// One-sided limits along the normal: offsets h = 2^-k R for k in
// kTraceLevels, combined by Richardson extrapolation with ratio 2.
constexpr int kTraceLevels[] = {4, 5, 6, 7};
Eigen::VectorXcd richardson_limit(const std::vector<Eigen::VectorXcd>& seq);
// normal derivative of S^k[phi] at x + side h nu extrapolated to h -> 0
Eigen::VectorXcd single_layer_normal_trace(double k0, const SurfaceQuadrature& quad, const Eigen::VectorXcd& density,
                                           int side, int lmax = kDefaultLmax);

// Neumann function of div(eps grad) on the unit ball: flux -1/|dB|, zero
// boundary mean.
double neumann_function_ball(double eps, const Vec3& x, const Vec3& y);

// Neumann-to-Dirichlet map on the outer sphere for concentric layered eps.
OperatorMatrix nd_map(const MediumConfig& medium, const SurfaceQuadrature& quad, int lmax = kDefaultLmax);
// per-degree eigenvalue of the map
double nd_eigenvalue(const MediumConfig& medium, int n);
// applies the map to data; throws if the data has nonzero mean
Eigen::VectorXcd apply_nd_map(const MediumConfig& medium, const SurfaceQuadrature& quad,
                              const Eigen::VectorXcd& data, int lmax = kDefaultLmax);

}  // namespace maxkit
