#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "maxkit/forward.hpp"
#include "maxkit/inverse.hpp"

namespace maxkit {

// Missing, unreadable or malformed files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RecoveryConfig {
    std::string declared_class;  // "curl_free", "div_free" or empty (take the source tag)
    AdmissibleClass cls = AdmissibleClass::harmonic(4);
    double support_radius = 0.0;  // 0: support of the configured source
    int e_terms = 3, h_terms = 3;
    double window = std::numeric_limits<double>::infinity();
    double max_residual = 1e-3;
    std::vector<double> eps_ref;  // empty: eps0 in every layer
    int constant_sigma = -1;      // -1: decide from the configured medium
};

struct RunConfig {
    ForwardConfig forward;
    bool mu_known = false, sigma_known = false, eps_known = false, source_known = false;
    RecoveryConfig recovery;
};

// Throws IoError on schema errors (unknown keys, wrong types).
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& c);
// FNV-1a of the canonical JSON form, 16 hex digits
std::string config_hash(const RunConfig& c);

// Shortest round-trip representation ("%.17g").
std::string format_double(double v);

constexpr const char* kDatasetHeader =
    "omega,node_index,x,y,z,nx,ny,nz,Ex_re,Ex_im,Ey_re,Ey_im,Ez_re,Ez_im,Hx_re,Hx_im,Hy_re,Hy_im,Hz_re,Hz_im";

// CSV plus a sidecar <path>.json with geometry and provenance.
void write_dataset(const std::string& path, const BoundaryDataset& data, const RunConfig& cfg);
// Restores the surface weights from the sidecar's sphere order.
BoundaryDataset read_dataset(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace maxkit
