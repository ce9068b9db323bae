#include "maxkit/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace maxkit {

using nlohmann::json;

int apply_thread_limit() {
    const char* v = std::getenv("MAXKIT_THREADS");
    if (!v || !*v) return 0;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw std::invalid_argument("MAXKIT_THREADS must be a positive integer, got '" + std::string(v) + "'");
#ifdef _OPENMP
    omp_set_num_threads(static_cast<int>(n));
#endif
    return static_cast<int>(n);
}

namespace {

constexpr double kClassResidual = 1e-2;

json hypothesis(const std::string& name, double value, std::optional<double> bound, bool pass) {
    json h = {{"name", name}, {"value", value}, {"pass", pass}};
    h["bound"] = bound ? json(*bound) : json(nullptr);
    return h;
}

json complex_list(const std::vector<cplx>& v) {
    json a = json::array();
    for (const cplx& z : v) a.push_back({z.real(), z.imag()});
    return a;
}

double weighted_norm(const VolumeQuadrature& q, const CField& f) {
    double s = 0.0;
    for (int i = 0; i < q.size(); ++i) s += q.weights[i] * f.row(i).squaredNorm();
    return std::sqrt(s);
}

Eigen::VectorXcd normal_part(const CField& f, const std::vector<Vec3>& normals) {
    Eigen::VectorXcd v(f.rows());
    for (Eigen::Index i = 0; i < f.rows(); ++i) v[i] = (f.row(i) * normals[i].cast<cplx>())(0);
    return v;
}

SourceClass declared_class(const RunConfig& cfg, const SourceModel& model) {
    if (!cfg.recovery.declared_class.empty()) return source_class_from_string(cfg.recovery.declared_class);
    return model.class_tag;
}

struct State {
    const RunConfig& cfg;
    ForwardSetup setup;
    SourceClass declared;
    AsymptoticCoefficients coeffs;
    KnownParameters known;
    std::optional<SourceSpec> current;  // J used by the mu, sigma and eps stages
    int lmax;
    double support;
};

json stage_source(State& s) {
    if (s.declared == SourceClass::general)
        throw std::domain_error(
            "source recovery needs a declared class (curl_free or div_free); set recovery.declared_class");
    const SourceRecovery r =
        recover_source(s.coeffs, s.known, s.declared, s.cfg.recovery.cls, s.setup.quad, s.support, s.lmax);
    json parts = json::array();
    for (std::size_t k = 0; k < r.parts.size(); ++k)
        parts.push_back({{"moments", complex_list(r.moments[k].coefficients)},
                         {"max_degree", r.moments[k].max_degree},
                         {"residual", r.parts[k].residual},
                         {"condition", r.parts[k].condition}});
    json rec = {{"class", to_string(s.declared)},
                {"admissible_class", s.cfg.recovery.cls.describe()},
                {"support_radius", s.support},
                {"parts", parts},
                {"current_norm", weighted_norm(s.setup.quad, r.source.values)}};
    if (s.cfg.source_known) {
        const double ref = weighted_norm(s.setup.quad, s.setup.source.values);
        rec["relative_error_vs_config"] =
            weighted_norm(s.setup.quad, r.source.values - s.setup.source.values) / (ref > 0.0 ? ref : 1.0);
    }
    json hyp = json::array();
    hyp.push_back(hypothesis("admissible class reproduces the moments", r.class_residual, kClassResidual,
                             r.class_residual < kClassResidual));
    if (s.declared == SourceClass::div_free)
        hyp.push_back(hypothesis("mu known (config or earlier stage)", s.known.medium.mu_interior, std::nullopt, true));
    if (!s.cfg.source_known) s.current = r.source;
    return {{"stage", "source"}, {"recovered", rec}, {"residual", r.class_residual}, {"hypotheses_checked", hyp}};
}

const SourceSpec& need_current(const State& s, const std::string& stage) {
    if (!s.current)
        throw RecoveryOrderError(stage + " needs J; recover the source first or mark it known in the config");
    return *s.current;
}

json stage_mu(State& s) {
    const SourceSpec& J = need_current(s, "mu");
    const SurfaceQuadrature sphere = coefficient_sphere(s.coeffs);
    const MuRecovery r = recover_mu(sphere, s.coeffs.H.at(0), J, s.setup.quad, s.known.medium, s.lmax);
    s.known.medium.mu_interior = r.mu;
    s.known.mu = true;

    // Herglotz form of the single layer of the interior normal trace of H^(0)
    Eigen::VectorXcd nh = normal_part(s.coeffs.H.at(0), sphere.normals) * (s.known.medium.mu0 / r.mu);
    const Eigen::VectorXcd sv = single_layer(0.0, sphere, nh, sphere.nodes, nullptr, s.lmax);
    const HerglotzFit hf = fit_herglotz(sphere, sv);

    json hyp = json::array();
    hyp.push_back(hypothesis("curl J nonzero (leading magnetic signal present)", 1.0, std::nullopt, true));
    hyp.push_back(hypothesis("single layer of nu.H(0)|- is a Herglotz function", hf.residual, 1e-3, hf.residual < 1e-3));
    json rec = {{"mu", r.mu},
                {"mu_tilde", r.mu_tilde},
                {"herglotz",
                 {{"xi", {{hf.spec.xi.x().real(), hf.spec.xi.x().imag()},
                          {hf.spec.xi.y().real(), hf.spec.xi.y().imag()},
                          {hf.spec.xi.z().real(), hf.spec.xi.z().imag()}}},
                  {"alpha", {hf.spec.alpha.real(), hf.spec.alpha.imag()}},
                  {"beta", {hf.spec.beta.real(), hf.spec.beta.imag()}}}}};
    return {{"stage", "mu"}, {"recovered", rec}, {"residual", r.residual}, {"hypotheses_checked", hyp}};
}

json stage_sigma(State& s) {
    const SourceSpec& J = need_current(s, "sigma");
    const bool constant =
        s.cfg.recovery.constant_sigma >= 0 ? s.cfg.recovery.constant_sigma == 1 : s.known.medium.layers() == 1;
    const SigmaRecovery r = recover_sigma(s.coeffs, s.known, J, s.setup.quad, constant, s.lmax);
    s.known.medium.sigma_layers = r.sigma;
    s.known.sigma = true;
    json hyp = json::array();
    hyp.push_back(hypothesis("divergence-free current (E starts at omega^1)", s.coeffs.e_power, std::nullopt, true));
    hyp.push_back(hypothesis("nu.E(1)|+ nonvanishing on dB", r.normal_trace, kNoiseFloor, true));
    return {{"stage", "sigma"},
            {"recovered", {{"sigma", r.sigma}, {"constant", constant}}},
            {"residual", r.residual},
            {"hypotheses_checked", hyp}};
}

json stage_eps(State& s) {
    const SourceSpec& J = need_current(s, "eps");
    if (!s.known.mu) throw RecoveryOrderError("eps needs mu; recover mu first or mark it known in the config");
    if (!s.known.sigma) throw RecoveryOrderError("eps needs sigma; recover sigma first or mark it known in the config");
    json hyp = json::array();
    std::optional<TwoLayerTestPair> pair;
    if (s.known.medium.layers() == 2) {
        const SurfaceQuadrature boundary = coefficient_sphere(s.coeffs);
        const SurfaceQuadrature s1 =
            make_sphere_quadrature(s.known.medium.layer_radii[1], s.cfg.forward.surface_order);
        // one-sided points: just outside dSigma1, just inside dB
        auto nudged = [](const SurfaceQuadrature& q, double f) {
            std::vector<Vec3> x;
            for (const Vec3& n : q.normals) x.push_back(q.radius * f * n);
            return x;
        };
        const Eigen::VectorXcd ne_s =
            normal_part(first_order_field(s.known.medium, J, s.setup.quad, nudged(s1, 1 + 1e-13), s.lmax), s1.normals);
        const Eigen::VectorXcd ne_b = normal_part(
            first_order_field(s.known.medium, J, s.setup.quad, nudged(boundary, 1 - 1e-13), s.lmax), boundary.normals);
        std::vector<Eigen::VectorXcd> cand;
        const HarmonicTable t = make_harmonic_table(2, s1.normals);
        for (int h = 1; h < harmonic_count(2); ++h) cand.push_back(t.Y.col(h));
        try {
            pair = build_test_pair(s.known.medium, s1, boundary, ne_s, ne_b, cand, s.lmax);
            hyp.push_back(hypothesis("two-layer admissibility (test pair with C1 != C2)", pair->separation, 1e-3, true));
        } catch (const std::domain_error& e) {
            json h = hypothesis("two-layer admissibility (test pair with C1 != C2)", 0.0, 1e-3, false);
            h["detail"] = std::string(e.what()) + "; eps solved by least squares on all E(2) components";
            hyp.push_back(h);
        }
    }
    EpsOptions opt;
    opt.eps_ref = s.cfg.recovery.eps_ref;
    opt.orders.e_power = s.coeffs.e_power;
    opt.orders.e_terms = s.cfg.recovery.e_terms;
    opt.orders.h_terms = s.cfg.recovery.h_terms;
    opt.orders.window = s.cfg.recovery.window;
    opt.orders.max_residual = s.cfg.recovery.max_residual;
    const EpsRecovery r = recover_eps(s.coeffs, s.known, J, s.setup.quad, opt, pair ? &*pair : nullptr,
                                      s.cfg.forward.options);
    s.known.medium.eps_layers = r.eps;
    s.known.eps = true;
    hyp.push_back(hypothesis("E(2) available from the fit", static_cast<double>(s.coeffs.E.size()), std::nullopt,
                             true));
    hyp.push_back(hypothesis("linear system determinant", r.determinant, std::nullopt, true));
    return {{"stage", "eps"},
            {"recovered", {{"eps", r.eps}, {"iterations", r.iterations}, {"method", pair ? "test_pair" : "least_squares"}}},
            {"residual", r.residual},
            {"hypotheses_checked", hyp}};
}

}  // namespace

RecoveryRun run_recovery(const std::string& kind, const BoundaryDataset& data, const RunConfig& cfg) {
    static const std::vector<std::string> kinds = {"source", "mu", "sigma", "eps", "all"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
        throw std::invalid_argument("unknown recovery kind '" + kind + "'");

    State s{cfg, make_setup(cfg.forward), SourceClass::general, {}, {}, std::nullopt, cfg.forward.options.lmax, 0.0};
    s.declared = declared_class(cfg, s.setup.model);
    s.support = cfg.recovery.support_radius > 0.0 ? cfg.recovery.support_radius : s.setup.model.support_radius;
    s.known.medium = cfg.forward.medium;
    s.known.mu = cfg.mu_known;
    s.known.sigma = cfg.sigma_known;
    s.known.eps = cfg.eps_known;
    if (cfg.source_known) s.current = s.setup.source;

    RecoveryRun run;
    json& rep = run.report;
    rep["kind"] = kind;
    rep["config_hash"] = config_hash(cfg);
    rep["dataset"] = {{"frequencies", data.frequencies.size()}, {"nodes", data.nodes.size()}, {"radius", data.radius}};
    rep["stages"] = json::array();

    AsymptoticOrders orders;
    orders.e_power = s.declared == SourceClass::div_free ? 1 : (cfg.forward.medium.conductive() ? 0 : -1);
    orders.e_terms = cfg.recovery.e_terms;
    orders.h_terms = cfg.recovery.h_terms;
    orders.window = cfg.recovery.window;
    orders.max_residual = cfg.recovery.max_residual;

    std::vector<std::string> stages;
    if (kind != "all")
        stages = {kind};
    else if (!cfg.mu_known && cfg.source_known && s.declared == SourceClass::div_free)
        stages = {"mu", "source", "sigma", "eps"};
    else
        stages = {"source", "mu", "sigma", "eps"};

    std::string current_stage = "fit";
    try {
        s.coeffs = fit_asymptotics(data, orders);
        rep["fit"] = {{"e_power", s.coeffs.e_power},
                      {"e_residual", s.coeffs.e_residual},
                      {"h_residual", s.coeffs.h_residual},
                      {"frequencies_used", s.coeffs.frequencies}};
        for (const std::string& st : stages) {
            current_stage = st;
            json block = st == "source" ? stage_source(s)
                         : st == "mu"   ? stage_mu(s)
                         : st == "sigma" ? stage_sigma(s)
                                         : stage_eps(s);
            rep["stages"].push_back(block);
        }
    } catch (const std::domain_error& e) {
        run.ok = false;
        run.error = e.what();
        rep["stages"].push_back({{"stage", current_stage}, {"error", run.error}});
    }
    rep["status"] = run.ok ? "ok" : "error";
    if (!run.ok) rep["error"] = run.error;
    return run;
}

}  // namespace maxkit
