// maxkit forward | recover | validate

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "maxkit/io.hpp"
#include "maxkit/pipeline.hpp"
#include "maxkit/suite.hpp"

using namespace maxkit;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct Overrides {
    std::optional<int> lmax;
    std::optional<double> tol;
    std::optional<double> window;
};

RunConfig load_with_overrides(const std::string& path, const Overrides& o, bool tol_is_fit) {
    RunConfig c = load_config(path);
    if (o.lmax) c.forward.options.lmax = *o.lmax;
    if (o.tol) (tol_is_fit ? c.recovery.max_residual : c.forward.options.tol) = *o.tol;
    if (o.window) c.recovery.window = *o.window;
    return c;
}

// Returns false (after printing the violations) when the configuration is invalid.
bool report_validation(const RunConfig& c) {
    std::vector<std::string> violations;
    try {
        const ForwardSetup st = make_setup(c.forward);
        const ValidationReport v = validate_config(c.forward.medium, &st.source);
        violations = v.violations;
        if (v.pass)
            std::printf("config: medium %s, source %s\n", v.medium_class.c_str(), v.source_class.c_str());
    } catch (const std::invalid_argument& e) {
        violations.push_back(e.what());
    } catch (const std::domain_error& e) {
        violations.push_back(e.what());
    }
    for (double w : c.forward.frequencies)
        if (!(w > 0.0)) violations.push_back("frequencies must be positive, got " + format_double(w));
    if (c.forward.frequencies.empty()) violations.push_back("no frequencies given");
    for (const std::string& s : violations) std::fprintf(stderr, "invalid config: %s\n", s.c_str());
    return violations.empty();
}

int cmd_forward(const std::string& config, const std::string& out, const Overrides& o) {
    const RunConfig c = load_with_overrides(config, o, false);
    if (!report_validation(c)) return kExitDomain;
    const ForwardRun run = run_forward(c.forward);
    std::printf("%-12s %-12s %-12s %-12s %-12s %-12s %-12s %s\n", "omega", "|E| on dB", "|H| on dB", "nu.D", "nu.B",
                "nu x E", "nu x H", "iterations");
    for (const FrequencySummary& r : run.rows)
        std::printf("%-12.5g %-12.5g %-12.5g %-12.3e %-12.3e %-12.3e %-12.3e %d\n", r.omega, r.e_norm, r.h_norm,
                    r.normal_d, r.normal_b, r.tangential_e, r.tangential_h, r.iterations);
    write_dataset(out, run.data, c);
    std::printf("wrote %s (%zu rows) and %s.json\n", out.c_str(), run.data.frequencies.size() * run.data.nodes.size(),
                out.c_str());
    return 0;
}

int cmd_recover(const std::string& kind, const std::string& data_path, const std::string& config,
                const std::string& out, const Overrides& o) {
    const BoundaryDataset data = read_dataset(data_path);
    const RunConfig c = load_with_overrides(config, o, true);
    const auto t0 = std::chrono::steady_clock::now();
    const RecoveryRun run = run_recovery(kind, data, c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(out, run.report);
    for (const auto& st : run.report["stages"]) {
        if (st.contains("error")) continue;
        std::printf("%-7s residual %.3e  %s\n", st["stage"].get<std::string>().c_str(), st["residual"].get<double>(),
                    st["recovered"].dump().substr(0, 160).c_str());
    }
    std::printf("recover %s: %s in %.1f s, report %s\n", kind.c_str(), run.ok ? "ok" : "failed", secs, out.c_str());
    if (!run.ok) {
        std::fprintf(stderr, "error: %s\n", run.error.c_str());
        return kExitDomain;
    }
    return 0;
}

void print_check(const Check& c) {
    std::printf("%-4s %-44s measured %-11.3e required %-11.3e (%.1f s)\n", c.pass ? "ok" : "FAIL", c.name.c_str(),
                c.measured, c.required, c.seconds);
}

int cmd_validate(const std::string& config, const std::string& sweep, const Overrides& o) {
    const RunConfig c = load_with_overrides(config, o, false);
    if (!report_validation(c)) return kExitDomain;
    const ForwardConfig& f = c.forward;
    const int lmax = f.options.lmax;
    const MediumConfig& m = f.medium;

    std::vector<Check> checks;
    checks.push_back(check_np_spectrum(f.surface_order, lmax, std::min(5, lmax)));
    checks.push_back(check_trace_formulae(f.surface_order, lmax, std::min(4, lmax)));
    for (const Check& d : check_d2v(f.radial_order, f.angular_order, lmax)) checks.push_back(d);
    const std::set<double> eps(m.eps_layers.begin(), m.eps_layers.end());
    checks.push_back(check_neumann_identity({eps.begin(), eps.end()}, false, lmax));
    const double inner = m.layers() > 1 ? m.layer_radii[1] : 0.5 * m.outer_radius();
    checks.push_back(check_calderon(m.outer_radius(), inner, f.surface_order, lmax));
    ForwardConfig first = f;
    first.frequencies = {f.frequencies.front()};
    checks.push_back(check_transmission(first));

    bool all = true;
    for (const Check& k : checks) {
        print_check(k);
        all = all && k.pass;
    }

    if (!sweep.empty()) {
        std::ofstream s(sweep, std::ios::binary);
        if (!s) throw IoError("cannot write '" + sweep + "'");
        s << "lmax,np_spectrum,trace_formulae,calderon\n";
        for (int n = 1; n <= lmax; ++n) {
            const Check a = check_np_spectrum(f.surface_order, n, std::min(5, n));
            const Check b = check_trace_formulae(f.surface_order, n, std::min(4, n));
            const Check k = check_calderon(m.outer_radius(), inner, f.surface_order, n);
            s << n << ',' << format_double(a.measured) << ',' << format_double(b.measured) << ','
              << format_double(k.measured) << '\n';
        }
        if (!s) throw IoError("write failed for '" + sweep + "'");
        std::printf("wrote %s\n", sweep.c_str());
    }
    std::printf("%s\n", all ? "all checks pass" : "some checks failed");
    return all ? 0 : kExitDomain;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-frequency Maxwell boundary data: synthesis, recovery and checks"};
    app.require_subcommand(1);
    Overrides o;
    auto add_overrides = [&](CLI::App* sub, bool recover) {
        sub->add_option("--lmax", o.lmax, "harmonic truncation N_max");
        sub->add_option("--tol", o.tol, recover ? "largest relative residual of the asymptotic fit"
                                                : "relative residual of the iterative solve");
        if (recover) sub->add_option("--window", o.window, "largest frequency used by the asymptotic fit");
    };

    std::string config, out, data, kind, sweep;
    CLI::App* fwd = app.add_subcommand("forward", "synthesize boundary data from a config");
    fwd->add_option("config", config, "JSON config")->required();
    fwd->add_option("-o,--output", out, "dataset CSV (sidecar written to <output>.json)")->required();
    add_overrides(fwd, false);

    CLI::App* rec = app.add_subcommand("recover", "recover source, mu, sigma or eps from boundary data");
    rec->add_option("kind", kind, "source | mu | sigma | eps | all")
        ->required()
        ->check(CLI::IsMember({"source", "mu", "sigma", "eps", "all"}));
    rec->add_option("data", data, "dataset CSV written by forward")->required();
    rec->add_option("config", config, "JSON config (known parameters and recovery settings)")->required();
    rec->add_option("-o,--output", out, "report JSON")->required();
    add_overrides(rec, true);

    CLI::App* val = app.add_subcommand("validate", "run the operator property checks on the configured geometry");
    val->add_option("config", config, "JSON config")->required();
    val->add_option("--sweep", sweep, "write error against N_max as CSV");
    add_overrides(val, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitIo;
    }

    try {
        const int threads = apply_thread_limit();
        if (threads > 0) std::fprintf(stderr, "MAXKIT_THREADS: %d\n", threads);
        if (*fwd) return cmd_forward(config, out, o);
        if (*rec) return cmd_recover(kind, data, config, out, o);
        return cmd_validate(config, sweep, o);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    }
}
