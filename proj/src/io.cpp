#include "maxkit/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace maxkit {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw IoError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw IoError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw IoError(where + "." + key + ": " + e.what());
    }
}

void get_vec3(const json& j, const char* key, Vec3& out, const std::string& where) {
    std::vector<double> v;
    get(j, key, v, where);
    if (j.contains(key)) {
        if (v.size() != 3) throw IoError(where + "." + key + ": expected three numbers");
        out = Vec3(v[0], v[1], v[2]);
    }
}

SourceParams parse_source(const json& j, const std::string& where) {
    check_keys(j, where, {"kind", "params"});
    SourceParams p;
    get(j, "kind", p.kind, where);
    if (j.contains("params")) {
        const std::string w = where + ".params";
        const json& q = j["params"];
        check_keys(q, w, {"radius", "amplitude", "power", "degree", "axis", "center"});
        get(q, "radius", p.radius, w);
        get(q, "amplitude", p.amplitude, w);
        get(q, "power", p.power, w);
        get(q, "degree", p.degree, w);
        get_vec3(q, "axis", p.axis, w);
        get_vec3(q, "center", p.center, w);
    }
    return p;
}

json source_to_json(const SourceParams& p) {
    return {{"kind", p.kind},
            {"params",
             {{"radius", p.radius},
              {"amplitude", p.amplitude},
              {"power", p.power},
              {"degree", p.degree},
              {"axis", {p.axis.x(), p.axis.y(), p.axis.z()}},
              {"center", {p.center.x(), p.center.y(), p.center.z()}}}}};
}

// Either an explicit list or {"start", "count", "ratio"}: start * ratio^k.
std::vector<double> parse_frequencies(const json& j) {
    std::vector<double> out;
    if (j.is_array()) {
        get(json{{"frequencies", j}}, "frequencies", out, "config");
        return out;
    }
    check_keys(j, "frequencies", {"start", "count", "ratio"});
    double start = 0.0, ratio = 0.5;
    int count = 0;
    get(j, "start", start, "frequencies");
    get(j, "count", count, "frequencies");
    get(j, "ratio", ratio, "frequencies");
    if (!j.contains("start") || !j.contains("count")) throw IoError("frequencies: 'start' and 'count' are required");
    if (count < 1) throw IoError("frequencies.count: must be positive");
    for (int k = 0; k < count; ++k) out.push_back(start * std::pow(ratio, k));
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

RunConfig parse_config(const json& j) {
    check_keys(j, "config", {"medium", "source", "frequencies", "discretization", "known", "recovery"});
    RunConfig c;
    ForwardConfig& f = c.forward;
    if (j.contains("medium")) {
        const json& m = j["medium"];
        check_keys(m, "medium", {"layers", "mu", "eps0", "mu0"});
        if (m.contains("layers")) {
            const json& ls = m["layers"];
            if (!ls.is_array() || ls.empty()) throw IoError("medium.layers: expected a nonempty list");
            f.medium.layer_radii.clear();
            f.medium.eps_layers.clear();
            f.medium.sigma_layers.clear();
            for (std::size_t i = 0; i < ls.size(); ++i) {
                const std::string w = "medium.layers[" + std::to_string(i) + "]";
                check_keys(ls[i], w, {"radius", "eps", "sigma"});
                if (!ls[i].contains("radius")) throw IoError(w + ": 'radius' is required");
                double r = 0.0, e = 1.0, sg = 0.0;
                get(ls[i], "radius", r, w);
                get(ls[i], "eps", e, w);
                get(ls[i], "sigma", sg, w);
                f.medium.layer_radii.push_back(r);
                f.medium.eps_layers.push_back(e);
                f.medium.sigma_layers.push_back(sg);
            }
        }
        get(m, "mu", f.medium.mu_interior, "medium");
        get(m, "eps0", f.medium.eps0, "medium");
        get(m, "mu0", f.medium.mu0, "medium");
    }
    if (j.contains("source")) {
        const json& s = j["source"];
        if (s.is_array()) {
            if (s.empty()) throw IoError("source: empty list");
            f.source = parse_source(s[0], "source[0]");
            for (std::size_t i = 1; i < s.size(); ++i)
                f.extra_sources.push_back(parse_source(s[i], "source[" + std::to_string(i) + "]"));
        } else {
            f.source = parse_source(s, "source");
        }
    }
    if (j.contains("frequencies")) f.frequencies = parse_frequencies(j["frequencies"]);
    if (j.contains("discretization")) {
        const json& d = j["discretization"];
        check_keys(d, "discretization", {"radial_order", "angular_order", "surface_order", "lmax", "tol"});
        get(d, "radial_order", f.radial_order, "discretization");
        get(d, "angular_order", f.angular_order, "discretization");
        get(d, "surface_order", f.surface_order, "discretization");
        get(d, "lmax", f.options.lmax, "discretization");
        get(d, "tol", f.options.tol, "discretization");
    }
    if (j.contains("known")) {
        const json& k = j["known"];
        check_keys(k, "known", {"mu", "sigma", "eps", "source"});
        get(k, "mu", c.mu_known, "known");
        get(k, "sigma", c.sigma_known, "known");
        get(k, "eps", c.eps_known, "known");
        get(k, "source", c.source_known, "known");
    }
    if (j.contains("recovery")) {
        const json& r = j["recovery"];
        RecoveryConfig& rc = c.recovery;
        check_keys(r, "recovery", {"declared_class", "class", "support_radius", "e_terms", "h_terms", "window",
                                   "max_residual", "eps_ref", "constant_sigma"});
        get(r, "declared_class", rc.declared_class, "recovery");
        if (!rc.declared_class.empty() && rc.declared_class != "curl_free" && rc.declared_class != "div_free")
            throw IoError("recovery.declared_class: expected 'curl_free' or 'div_free'");
        if (r.contains("class")) {
            const json& k = r["class"];
            check_keys(k, "recovery.class", {"kind", "max_degree", "direction", "basis_size"});
            std::string kind = "harmonic";
            int degree = 4, basis = 3;
            Vec3 d = Vec3::UnitZ();
            get(k, "kind", kind, "recovery.class");
            get(k, "max_degree", degree, "recovery.class");
            get(k, "basis_size", basis, "recovery.class");
            get_vec3(k, "direction", d, "recovery.class");
            try {
                if (kind == "harmonic")
                    rc.cls = AdmissibleClass::harmonic(degree);
                else if (kind == "direction_invariant")
                    rc.cls = AdmissibleClass::direction_invariant(d, basis);
                else
                    throw IoError("recovery.class.kind: expected 'harmonic' or 'direction_invariant'");
            } catch (const std::invalid_argument& e) {
                throw IoError(std::string("recovery.class: ") + e.what());
            }
        }
        get(r, "support_radius", rc.support_radius, "recovery");
        get(r, "e_terms", rc.e_terms, "recovery");
        get(r, "h_terms", rc.h_terms, "recovery");
        if (r.contains("window") && !r["window"].is_null()) get(r, "window", rc.window, "recovery");
        get(r, "max_residual", rc.max_residual, "recovery");
        get(r, "eps_ref", rc.eps_ref, "recovery");
        if (r.contains("constant_sigma")) {
            bool b = false;
            get(r, "constant_sigma", b, "recovery");
            rc.constant_sigma = b ? 1 : 0;
        }
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    const std::string text = slurp(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError("'" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

json config_to_json(const RunConfig& c) {
    const ForwardConfig& f = c.forward;
    json src = json::array();
    src.push_back(source_to_json(f.source));
    for (const SourceParams& p : f.extra_sources) src.push_back(source_to_json(p));
    json j;
    json layers = json::array();
    for (int i = 0; i < f.medium.layers(); ++i)
        layers.push_back({{"radius", f.medium.layer_radii[i]},
                          {"eps", f.medium.eps_layers.at(i)},
                          {"sigma", f.medium.sigma_layers.at(i)}});
    j["medium"] = {{"layers", layers}, {"mu", f.medium.mu_interior}, {"eps0", f.medium.eps0}, {"mu0", f.medium.mu0}};
    j["source"] = src;
    j["frequencies"] = f.frequencies;
    j["discretization"] = {{"radial_order", f.radial_order}, {"angular_order", f.angular_order},
                           {"surface_order", f.surface_order}, {"lmax", f.options.lmax}, {"tol", f.options.tol}};
    j["known"] = {{"mu", c.mu_known}, {"sigma", c.sigma_known}, {"eps", c.eps_known}, {"source", c.source_known}};
    const RecoveryConfig& r = c.recovery;
    json cls;
    if (r.cls.kind == AdmissibleClass::Kind::harmonic)
        cls = {{"kind", "harmonic"}, {"max_degree", r.cls.max_degree}};
    else
        cls = {{"kind", "direction_invariant"},
               {"direction", {r.cls.direction.x(), r.cls.direction.y(), r.cls.direction.z()}},
               {"basis_size", r.cls.basis_size}};
    j["recovery"] = {{"declared_class", r.declared_class},
                     {"class", cls},
                     {"support_radius", r.support_radius},
                     {"e_terms", r.e_terms},
                     {"h_terms", r.h_terms},
                     {"window", std::isfinite(r.window) ? json(r.window) : json(nullptr)},
                     {"max_residual", r.max_residual},
                     {"eps_ref", r.eps_ref}};
    if (r.constant_sigma >= 0) j["recovery"]["constant_sigma"] = r.constant_sigma == 1;
    return j;
}

std::string config_hash(const RunConfig& c) {
    const std::string s = config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_dataset(const std::string& path, const BoundaryDataset& data, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << kDatasetHeader << '\n';
    const int n = static_cast<int>(data.nodes.size());
    for (std::size_t f = 0; f < data.frequencies.size(); ++f)
        for (int i = 0; i < n; ++i) {
            out << format_double(data.frequencies[f]) << ',' << i;
            for (int k = 0; k < 3; ++k) out << ',' << format_double(data.nodes[i][k]);
            for (int k = 0; k < 3; ++k) out << ',' << format_double(data.normals[i][k]);
            for (const CField* F : {&data.E[f], &data.H[f]})
                for (int k = 0; k < 3; ++k)
                    out << ',' << format_double((*F)(i, k).real()) << ',' << format_double((*F)(i, k).imag());
            out << '\n';
        }
    if (!out) throw IoError("write failed for '" + path + "'");
    const json side = {{"format", "maxkit-dataset"},
                       {"version", 1},
                       {"radius", data.radius},
                       {"surface_order", cfg.forward.surface_order},
                       {"nodes", n},
                       {"frequencies", data.frequencies},
                       {"config_hash", config_hash(cfg)},
                       {"config", config_to_json(cfg)}};
    write_json(path + ".json", side);
}

BoundaryDataset read_dataset(const std::string& path) {
    json side;
    try {
        side = json::parse(slurp(path + ".json"));
    } catch (const json::parse_error& e) {
        throw IoError("sidecar '" + path + ".json' is not valid JSON: " + e.what());
    }
    BoundaryDataset d;
    int order = 0;
    try {
        d.radius = side.at("radius").get<double>();
        order = side.at("surface_order").get<int>();
    } catch (const json::exception& e) {
        throw IoError("sidecar '" + path + ".json': " + e.what());
    }
    SurfaceQuadrature s;
    try {
        s = make_sphere_quadrature(d.radius, order);
    } catch (const std::invalid_argument& e) {
        throw IoError("sidecar '" + path + ".json': " + e.what());
    }
    const int n = s.size();
    d.nodes = s.nodes;
    d.normals = s.normals;
    d.weights = s.weights;

    std::istringstream in(slurp(path));
    std::string line;
    if (!std::getline(in, line) || line != kDatasetHeader) throw IoError("'" + path + "': unexpected header");
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("'" + path + "' row " + std::to_string(row + 2) + ": bad number '" + cell + "'");
            }
        }
        if (v.size() != 20) throw IoError("'" + path + "' row " + std::to_string(row + 2) + ": expected 20 columns");
        const int i = static_cast<int>(v[1]);
        if (i != row % n) throw IoError("'" + path + "' row " + std::to_string(row + 2) + ": node index out of order");
        if (i == 0) {
            d.frequencies.push_back(v[0]);
            d.E.push_back(CField::Zero(n, 3));
            d.H.push_back(CField::Zero(n, 3));
        } else if (v[0] != d.frequencies.back()) {
            throw IoError("'" + path + "' row " + std::to_string(row + 2) + ": frequency changes inside a block");
        }
        if ((Vec3(v[2], v[3], v[4]) - s.nodes[i]).norm() > 1e-12 * d.radius)
            throw IoError("'" + path + "' row " + std::to_string(row + 2) + ": node does not match the sphere rule");
        for (int k = 0; k < 3; ++k) {
            d.E.back()(i, k) = cplx(v[8 + 2 * k], v[9 + 2 * k]);
            d.H.back()(i, k) = cplx(v[14 + 2 * k], v[15 + 2 * k]);
        }
        ++row;
    }
    if (row == 0 || row % n != 0) throw IoError("'" + path + "': row count is not a multiple of the node count");
    return d;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace maxkit
