#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "maxkit/forward.hpp"

namespace maxkit {

// One measured property against its bound. pass means measured < required
// (or <= for the sign checks, which use required = 0).
struct Check {
    std::string name;
    double measured = 0.0;
    double required = 0.0;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

// K* on a sphere of radius 1 against -1/(2(2n+1)), n <= nmax; largest absolute error.
Check check_np_spectrum(int surface_order = 12, int lmax = 8, int nmax = 5, double bound = 1e-3);

// Extrapolated dS[Y_n^m]/dnu from both sides against (-+1/2 + K*)[Y_n^m], n <= nmax.
Check check_trace_formulae(int surface_order = 12, int lmax = 8, int nmax = 4, double bound = 1e-3);

// D^2 V on five gradient fields (-I) and five solenoidal fields (0); the third
// check is the largest Re <D^2 V phi, phi> over the gradients (must be <= bound).
std::vector<Check> check_d2v(int radial_order = 8, int angular_order = 8, int lmax = 8, double bound = 1e-2,
                             double form_bound = 1e-8);

// (1/2 I + K)[int N_eps rho] = eps^-1 V[rho] on the unit sphere for three
// mean-zero densities and each eps. verbatim = true measures the form with
// (-1/2 I + K) instead.
Check check_neumann_identity(const std::vector<double>& eps, bool verbatim = false, int lmax = 8,
                             double bound = 1e-3);

// || S K* - K S || / || K S || for the two-sphere block system.
Check check_calderon(double outer, double inner, int surface_order = 8, int lmax = 8, double bound = 1e-3);

// Per-frequency summary of a direct solve: exterior trace norms and relative
// transmission residuals at dB.
struct FrequencySummary {
    double omega = 0.0;
    double e_norm = 0.0, h_norm = 0.0;
    double normal_d = 0.0, normal_b = 0.0, tangential_e = 0.0, tangential_h = 0.0;
    int iterations = 0;
    double solver_residual = 0.0;

    double transmission() const { return std::max({normal_d, normal_b, tangential_e, tangential_h}); }
};

struct ForwardRun {
    BoundaryDataset data;  // exterior traces on the surface rule
    std::vector<FrequencySummary> rows;
};

ForwardRun run_forward(const ForwardConfig& cfg);

// Transmission conditions at dB from a direct solve at each frequency: normal
// D and B and tangential E and H; largest relative residual.
Check check_transmission(const ForwardConfig& cfg, double bound = 1e-3);

// Direct solve minus the expansion prediction at successive frequencies
// (each half the previous); ratios of consecutive errors for E and H.
struct OrderCheck {
    std::vector<double> frequencies, e_error, h_error, e_ratio, h_ratio;
    Check check;
};
OrderCheck check_forward_order(const ForwardConfig& cfg, double lo = 3.0, double hi = 5.0);

}  // namespace maxkit
