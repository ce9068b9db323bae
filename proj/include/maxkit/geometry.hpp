#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace maxkit {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;

inline int harmonic_index(int n, int m) { return n * n + n + m; }
inline int harmonic_count(int lmax) { return (lmax + 1) * (lmax + 1); }

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int count, std::vector<double>& x, std::vector<double>& w);

// Product rule on a sphere: Gauss-Legendre in cos(theta), uniform in phi.
// Nodes are stored theta-major: index = it * n_phi + ip.
struct SurfaceQuadrature {
    double radius = 1.0;
    int order = 0;
    int n_theta = 0;
    int n_phi = 0;
    std::vector<Vec3> nodes;
    std::vector<Vec3> normals;
    std::vector<double> weights;  // area weights, sum = 4 pi R^2

    int size() const { return static_cast<int>(nodes.size()); }
};

constexpr int kMaxSphereOrder = 64;

SurfaceQuadrature make_sphere_quadrature(double radius, int order);

// Radial segments between consecutive breakpoints, each carrying Gauss nodes,
// crossed with a unit-sphere rule. Nodes are shell-major.
struct VolumeQuadrature {
    double outer_radius = 1.0;
    int radial_order = 0;
    int angular_order = 0;
    SurfaceQuadrature sphere;           // unit sphere rule
    std::vector<double> breaks;         // ascending, breaks.front() == 0
    std::vector<double> shell_radius;   // ascending
    std::vector<double> shell_weight;   // Gauss weight times r^2
    std::vector<int> shell_segment;     // segment index of each shell
    std::vector<int> shell_layer;       // medium layer index (0 = outermost)
    std::vector<Vec3> nodes;
    std::vector<double> weights;
    std::vector<int> layer;             // per node

    int size() const { return static_cast<int>(nodes.size()); }
    int shells() const { return static_cast<int>(shell_radius.size()); }
    int per_shell() const { return sphere.size(); }
    int segments() const { return static_cast<int>(breaks.size()) - 1; }
};

// layer_radii: descending medium interfaces starting with the outer radius
// (the first entry may be omitted). extra_breaks: additional radial cuts,
// e.g. the support radius of a source.
VolumeQuadrature make_ball_quadrature(double outer_radius, const std::vector<double>& layer_radii,
                                      int radial_order, int angular_order,
                                      const std::vector<double>& extra_breaks = {});

cplx eval_spherical_harmonic(int n, int m, const Vec3& direction);
cplx solid_harmonic(int n, int m, const Vec3& point);

// Normalised associated Legendre values with Condon-Shortley phase for all
// 0 <= m <= n <= lmax, stored at harmonic_index(n, m).
void legendre_table(int lmax, double x, std::vector<double>& out);

// Y_n^m and d/dtheta Y_n^m for every harmonic up to lmax at each direction.
struct HarmonicTable {
    int lmax = 0;
    Eigen::MatrixXcd Y;       // points x harmonics
    Eigen::MatrixXcd dtheta;  // points x harmonics
    std::vector<double> theta, phi;
};

HarmonicTable make_harmonic_table(int lmax, const std::vector<Vec3>& directions);

// Orthonormal frame (r, theta, phi) at a direction. Poles use phi = 0.
void spherical_frame(const Vec3& p, double& r, double& theta, double& phi, Vec3& er, Vec3& et,
                     Vec3& ep);

}  // namespace maxkit
