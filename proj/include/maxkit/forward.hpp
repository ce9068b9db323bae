#pragma once

#include <vector>

#include "maxkit/geometry.hpp"
#include "maxkit/model.hpp"
#include "maxkit/potentials.hpp"

namespace maxkit {

struct ForwardOptions {
    int lmax = kDefaultLmax;
    double tol = 1e-12;  // relative residual of the iterative solve
    int restart = 200;
    int max_iter = 4000;
};

// k0^2 V[phi], D^2 V[phi] and curl V[phi] for vector densities that are smooth
// on each radial segment of a ball quadrature and may jump across segment
// breaks. D^2 V[phi] = grad(V[div phi] + sum_b S_b[jump of nu . phi]) with the
// single layers on the break spheres (phi vanishes outside the ball).
class VectorPotentials {
public:
    VectorPotentials(const VolumeQuadrature& quad, double k0, int lmax);

    struct Fields {
        CField v;     // V[phi]
        CField d2;    // grad div V[phi]
        CField curl;  // curl V[phi]
    };

    // div: optional exact divergence of a phi with no normal jumps across the
    // breaks (phi in H(div)); otherwise differentiated per segment and the
    // break jumps are added
    Fields at_nodes(const CField& phi, const Eigen::VectorXcd* div = nullptr) const;
    Fields at_targets(const CField& phi, const std::vector<Vec3>& targets,
                      const Eigen::VectorXcd* div = nullptr) const;

    Eigen::VectorXcd divergence(const CField& phi) const;
    // per break radius (breaks[1..]): harmonic coefficients of the jump of nu . phi (outer minus inner)
    std::vector<Eigen::VectorXcd> normal_jumps(const CField& phi) const;

    const VolumeQuadrature& quad() const { return op_.quad(); }
    const VolumeOperator& op() const { return op_; }
    const ShellBasis& basis() const { return basis_; }
    double k0() const { return k0_; }

    // shells x harmonics: values at the ends of each segment from shell coefficients
    Eigen::MatrixXcd segment_end_values(const Eigen::MatrixXcd& c, bool upper) const;

private:
    double k0_;
    VolumeOperator op_;
    ShellBasis basis_;
    RadialKernel kernel_;
    std::vector<Eigen::MatrixXcd> break_val_;  // per break: (lmax+1) x shells, rho^2 g_n(r_t, rho)
    std::vector<Eigen::MatrixXcd> break_der_;
};

// A^{k0} = I - M^{k0} diag(gamma~, mu~) on U = [omega E; H] at the volume
// nodes, stored component-major (x, y, z of omega E, then of H). With
// static_limit the wavenumber is replaced by 0 while gamma~ keeps its value at omega.
class SystemOperator {
public:
    SystemOperator(const MediumConfig& medium, const VolumeQuadrature& quad, double omega, bool static_limit,
                   int lmax = kDefaultLmax);

    int nodes() const { return quad_.size(); }
    Eigen::Index size() const { return 6 * static_cast<Eigen::Index>(quad_.size()); }
    double omega() const { return omega_; }
    double k0() const { return k0_; }
    const VolumeQuadrature& quad() const { return quad_; }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& u) const;
    // right-hand side [i/eps0 (k0^2 + D^2) V[J]; curl V[J]] at the nodes
    Eigen::VectorXcd rhs(const SourceSpec& source) const;
    // U at arbitrary points from the representation formula, given nodal U
    void represent(const Eigen::VectorXcd& u, const SourceSpec& source, const std::vector<Vec3>& targets,
                   CField& omega_e, CField& h) const;

private:
    void contrast(const Eigen::VectorXcd& u, CField& phi_e, CField& phi_h) const;

    MediumConfig medium_;
    VolumeQuadrature quad_;
    double omega_, k0_;
    bool static_;
    VectorPotentials pot_;
    Eigen::VectorXcd gamma_;  // per node
    cplx mu_tilde_;
};

// Dense matrix of A^{k0} (or A^0) by columns; intended for small quadratures.
OperatorMatrix assemble_system(double omega, const MediumConfig& medium, const VolumeQuadrature& quad,
                               bool static_limit = false, int lmax = kDefaultLmax);

struct ForwardSolution {
    double omega = 0.0;
    CField E, H;  // at volume nodes
    Eigen::VectorXcd u;  // [omega E; H] component-major
    int iterations = 0;
    double residual = 0.0;
};

// Source samples must sit on the quadrature nodes (sample_source(model, quad.nodes)).
ForwardSolution solve_direct(double omega, const MediumConfig& medium, const SourceSpec& source,
                             const VolumeQuadrature& quad, const ForwardOptions& opt = {});

// (E, H) at arbitrary points; points on the outer sphere get exterior traces.
void evaluate_fields(const ForwardSolution& sol, const MediumConfig& medium, const SourceSpec& source,
                     const VolumeQuadrature& quad, const std::vector<Vec3>& targets, CField& E, CField& H,
                     int lmax = kDefaultLmax);

// Interior one-sided traces on the surface nodes, extrapolated from offsets
// R (1 - 2^-k), k in kTraceLevels.
void interior_traces(const ForwardSolution& sol, const MediumConfig& medium, const SourceSpec& source,
                     const VolumeQuadrature& quad, const SurfaceQuadrature& surf, CField& E, CField& H,
                     int lmax = kDefaultLmax);

BoundaryDataset boundary_data(const std::vector<double>& freqs, const MediumConfig& medium,
                              const SourceSpec& source, const SurfaceQuadrature& surf, const VolumeQuadrature& quad,
                              const ForwardOptions& opt = {});

// Low-frequency terms. E = omega^p E_lead + ..., H = H0 + omega H1 + ...
//   div J = 0, sigma > 0 in every layer: p = 1 (E_lead = E^(1)), H1 available;
//   div J != 0, sigma = 0 everywhere: p = -1;
//   div J != 0, sigma > 0 everywhere: p = 0.
// order 0 gives H0 only, order 1 adds E_lead, order 2 adds H1.
struct ExpansionTerms {
    int e_power = 1;
    CField E_lead, H0, H1;                         // at volume nodes
    CField E_lead_surface, H0_surface, H1_surface;  // exterior traces on the surface nodes
};

ExpansionTerms expand_low_freq(const MediumConfig& medium, const SourceSpec& source, const VolumeQuadrature& quad,
                               const SurfaceQuadrature& surf, int order = 2, int lmax = kDefaultLmax);

// Everything needed to synthesize boundary data for one configuration.
struct ForwardConfig {
    MediumConfig medium;
    SourceParams source;
    std::vector<SourceParams> extra_sources;  // added to source
    int radial_order = 7;
    int angular_order = 6;
    int surface_order = 8;
    std::vector<double> frequencies;
    ForwardOptions options;
};

struct ForwardSetup {
    VolumeQuadrature quad;  // breaks at the layer radii and the source supports
    SurfaceQuadrature surf;
    SourceModel model;
    SourceSpec source;
};

ForwardSetup make_setup(const ForwardConfig& cfg);
BoundaryDataset synthesize(const ForwardConfig& cfg);

// E^(1) for a divergence-free source in a conductive medium at points inside
// the closed ball. Points on an interface belong to the outer layer.
CField first_order_field(const MediumConfig& medium, const SourceSpec& source, const VolumeQuadrature& quad,
                         const std::vector<Vec3>& targets, int lmax = kDefaultLmax);

}  // namespace maxkit
