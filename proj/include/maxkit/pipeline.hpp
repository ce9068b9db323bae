#pragma once

#include <string>

#include "maxkit/io.hpp"

namespace maxkit {

// Caps OpenMP workers at MAXKIT_THREADS when set; returns the cap in force
// (0 when unset).
int apply_thread_limit();

struct RecoveryRun {
    nlohmann::json report;
    bool ok = true;
    std::string error;  // first failing stage, verbatim
};

// kind in {source, mu, sigma, eps, all}. Stages run in the order
// source -> mu -> sigma -> eps; a stage needs its inputs either from an
// earlier stage or from the config's known flags, otherwise it fails with a
// RecoveryOrderError. When mu is unknown but the current is known, `all`
// recovers mu before the divergence-free source. Domain and identifiability
// errors stop the run and are recorded in the report; invalid_argument and
// IoError propagate.
RecoveryRun run_recovery(const std::string& kind, const BoundaryDataset& data, const RunConfig& cfg);

}  // namespace maxkit
