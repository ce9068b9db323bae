#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "maxkit/forward.hpp"
#include "maxkit/model.hpp"
#include "maxkit/potentials.hpp"

namespace maxkit {

constexpr double kNoiseFloor = 1e-9;

// Raised when a recovery stage runs before the stages it depends on.
class RecoveryOrderError : public std::domain_error {
public:
    explicit RecoveryOrderError(const std::string& what) : std::domain_error("recovery order: " + what) {}
};

// Raised when the data cannot determine the requested quantity.
class IdentifiabilityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// ---- asymptotic fit ----

struct AsymptoticOrders {
    int e_power = 1;  // 1 for div J = 0, 0 for div J != 0 with sigma > 0, -1 for sigma = 0
    int e_terms = 3;
    int h_terms = 3;
    double window = std::numeric_limits<double>::infinity();  // largest frequency used
    double max_residual = 1e-3;                                 // relative
};

AsymptoticCoefficients fit_asymptotics(const BoundaryDataset& data, const AsymptoticOrders& orders);

// Sphere rule carried by a dataset (radius, nodes, normals, weights).
SurfaceQuadrature dataset_sphere(const BoundaryDataset& data);
SurfaceQuadrature coefficient_sphere(const AsymptoticCoefficients& c);

// ---- moments and admissible reconstruction ----

// moment(n, m) = int |y|^n conj(Y_n^m(y^)) rho(y) dy from the exterior
// Newtonian potential of rho sampled on a sphere enclosing its support.
MomentSet moments_from_exterior(const SurfaceQuadrature& sphere, const Eigen::VectorXcd& values, int max_degree,
                                double support_radius);

// Brute-force moments of node samples.
MomentSet volume_moments(const VolumeQuadrature& quad, const Eigen::VectorXcd& density, int max_degree);

// u(x) = alpha exp(i x . xi) + beta with xi . xi = 0
struct HerglotzSpec {
    CVec3 xi = CVec3::Zero();
    cplx alpha = 0.0, beta = 0.0;

    bool valid(double tol = 1e-12) const;
    cplx operator()(const Vec3& x) const;
};

struct AdmissibleClass {
    enum class Kind { harmonic, direction_invariant };
    Kind kind = Kind::harmonic;
    int max_degree = 4;            // harmonic
    Vec3 direction = Vec3::UnitZ();  // direction_invariant: unit d
    int basis_size = 3;            // direction_invariant: Legendre degrees per transverse axis

    static AdmissibleClass harmonic(int max_degree);
    static AdmissibleClass direction_invariant(const Vec3& d, int basis_size);
    int dimension() const;
    std::string describe() const;
};

struct Reconstruction {
    Eigen::VectorXcd density;  // on the quadrature nodes, zero outside the support
    Eigen::VectorXcd coefficients;
    double residual = 0.0;     // relative moment misfit
    double condition = 1.0;
};

// Least-squares fit of the class basis to the moments; the unknown lives on
// the ball of radius support_radius. Throws if the Gram system has condition
// number above max_condition.
Reconstruction reconstruct_admissible(const MomentSet& moments, const AdmissibleClass& cls,
                                      const VolumeQuadrature& quad, double support_radius,
                                      double max_condition = 1e10);

// ---- source, mu, sigma ----

// Medium parameters the caller vouches for. Flags mark which entries of
// medium may be used; geometry (radii, eps0, mu0) is always known.
struct KnownParameters {
    MediumConfig medium;
    bool mu = false;
    bool sigma = false;
    bool eps = false;
};

struct SourceRecovery {
    SourceSpec source;                  // on the quadrature nodes
    std::vector<MomentSet> moments;     // div J, or the three components of curl J
    std::vector<Reconstruction> parts;  // matching reconstructions
    double class_residual = 0.0;        // largest relative moment misfit
};

// declared = curl_free: div J from the leading E trace (constant medium,
// sigma known when conductive, eps known when sigma = 0), J = grad phi with
// d phi / d nu = 0. declared = div_free: curl J from the H^(0) trace (mu
// known), J = curl V_B[curl J].
SourceRecovery recover_source(const AsymptoticCoefficients& coeffs, const KnownParameters& known,
                              SourceClass declared, const AdmissibleClass& cls, const VolumeQuadrature& quad,
                              double support_radius, int lmax = kDefaultLmax);

struct MuRecovery {
    double mu = 1.0;
    double mu_tilde = 0.0;
    double residual = 0.0;
};

// mu from the exterior H^(0) trace and a known current (least squares in 1 / mu).
MuRecovery recover_mu(const SurfaceQuadrature& sphere, const CField& h0_exterior, const SourceSpec& source,
                      const VolumeQuadrature& quad, const MediumConfig& geometry, int lmax = kDefaultLmax);

struct SigmaRecovery {
    std::vector<double> sigma;
    double residual = 0.0;
    double normal_trace = 0.0;  // relative size of nu . E^(1)|+
};

// sigma per layer from H^(1) (div J = 0, J and mu known). One free value
// when all layers share the conductivity; otherwise Levenberg-Marquardt on
// log sigma.
SigmaRecovery recover_sigma(const AsymptoticCoefficients& coeffs, const KnownParameters& known,
                            const SourceSpec& source, const VolumeQuadrature& quad, bool constant_sigma,
                            int lmax = kDefaultLmax, double noise_floor = kNoiseFloor);

// Fit of a boundary trace to a Herglotz harmonic function.
struct HerglotzFit {
    HerglotzSpec spec;
    double residual = 1.0;  // relative
};
HerglotzFit fit_herglotz(const SurfaceQuadrature& sphere, const Eigen::VectorXcd& values);

// ---- two-layer structure ----

// Kstar = [-K*_B, -dS_Sigma/dnu; dS_B/dnu, K*_Sigma], K its adjoint
// [-K_B, D_Sigma; -D_B, K_Sigma], S = [S_B, S_Sigma; S_B, S_Sigma].
struct BlockSystem {
    Eigen::MatrixXcd Kstar, K, S;  // on H = L2(dB) x L2(dSigma1), dB nodes first
    Eigen::VectorXd weights;       // quadrature weights of the product space
    int nb = 0, ns = 0;

    // (S K* - K S) relative to K S in the weighted norm
    double calderon_residual() const;
};

BlockSystem assemble_block_system(const SurfaceQuadrature& boundary, const SurfaceQuadrature& sigma1,
                                  int lmax = kDefaultLmax);

struct TwoLayerTestPair {
    Eigen::VectorXcd l1, l2;  // on dSigma1
    Eigen::VectorXcd g1, g2;  // on dB
    cplx C1 = 0.0, C2 = 0.0;
    double separation = 0.0;  // |C1 - C2|
};

// g_l on dB for a mean-zero l on dSigma1 (defining harmonic problem of the pair)
Eigen::VectorXcd test_density(const MediumConfig& medium, const SurfaceQuadrature& sigma1,
                              const SurfaceQuadrature& boundary, const Eigen::VectorXcd& l, int lmax);

// Searches the candidates for two densities with distinct pairing constants
// int l nu.E1|+ (dSigma1) = C int g_l nu.E1|- (dB).
TwoLayerTestPair build_test_pair(const MediumConfig& medium, const SurfaceQuadrature& sigma1,
                                 const SurfaceQuadrature& boundary, const Eigen::VectorXcd& ne1_sigma_outer,
                                 const Eigen::VectorXcd& ne1_boundary_inner,
                                 const std::vector<Eigen::VectorXcd>& candidates, int lmax = kDefaultLmax,
                                 double tol = 1e-3);

// ---- permittivity ----

struct EpsRecovery {
    std::vector<double> eps;
    std::vector<double> t;  // eps - eps_ref of the last linear solve
    double residual = 0.0;
    double determinant = 0.0;
    int iterations = 0;
};

// Solves sum_j t_j sens[j] = mismatch. With a pair, the rows are the
// pairings of the normal components with g1, g2; otherwise all trace
// components in the weighted least-squares sense.
EpsRecovery solve_eps_linear(const CField& mismatch, const std::vector<CField>& sens, const SurfaceQuadrature& sphere,
                             const TwoLayerTestPair* pair = nullptr, double det_floor = 1e-12);

struct EpsOptions {
    std::vector<double> eps_ref;    // per layer; defaults to eps0
    std::vector<double> model_freqs;  // defaults to the data frequencies
    AsymptoticOrders orders;
    int max_iter = 4;
    double tol = 1e-6;  // relative step size
};

// eps per layer from the fitted E^(2). The model side runs the forward
// solver at eps_ref and at unit perturbations of each layer; E^(2) is affine
// in eps, so the update is linear and is repeated around the new reference.
EpsRecovery recover_eps(const AsymptoticCoefficients& data, const KnownParameters& known, const SourceSpec& source,
                        const VolumeQuadrature& quad, const EpsOptions& opt = {},
                        const TwoLayerTestPair* pair = nullptr, const ForwardOptions& fwd = {});

// ---- uniqueness ----

struct UniquenessReport {
    std::vector<double> frequencies;
    std::vector<double> e_discrepancy, h_discrepancy;  // relative, per frequency
    std::vector<double> e_order_discrepancy;  // per fitted E order (e_power + k)
    std::vector<double> h_order_discrepancy;  // per fitted H order
    int e_power = 1;
    double max_discrepancy = 0.0;
    bool indistinguishable = false;
};

UniquenessReport verify_uniqueness(const ForwardConfig& a, const ForwardConfig& b, const std::vector<double>& freqs,
                                   const AsymptoticOrders* orders = nullptr, double noise_floor = kNoiseFloor);

}  // namespace maxkit
