#include "zefoz/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "zefoz/util.hpp"

namespace zefoz {

namespace {

using nlohmann::json;

// SAX pass that only checks for duplicate object keys (the DOM parser keeps
// the last occurrence silently).
class DuplicateKeyScanner : public nlohmann::json_sax<json> {
public:
    std::string duplicate_path;

    bool key(string_t& val) override {
        if (!stack_.empty() && !stack_.back().second.insert(val).second) {
            if (duplicate_path.empty()) duplicate_path = path() + "/" + val;
        }
        pending_key_ = val;
        return true;
    }
    bool start_object(std::size_t) override {
        stack_.emplace_back(pending_key_, std::set<std::string>{});
        pending_key_.clear();
        return true;
    }
    bool end_object() override {
        stack_.pop_back();
        return true;
    }
    bool start_array(std::size_t) override { return true; }
    bool end_array() override { return true; }
    bool null() override { return true; }
    bool boolean(bool) override { return true; }
    bool number_integer(number_integer_t) override { return true; }
    bool number_unsigned(number_unsigned_t) override { return true; }
    bool number_float(number_float_t, const string_t&) override { return true; }
    bool string(string_t&) override { return true; }
    bool binary(binary_t&) override { return true; }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
        return false;  // the DOM pass reports parse errors with byte offsets
    }

private:
    std::string pending_key_;
    std::vector<std::pair<std::string, std::set<std::string>>> stack_;

    std::string path() const {
        std::string p;
        for (const auto& [name, keys] : stack_)
            if (!name.empty()) p += "/" + name;
        return p;
    }
};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config error at " + (path.empty() ? "/" : path) + ": " + what);
}

void require_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed,
                  const std::set<std::string>& required) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) fail(path + "/" + k, "unknown key");
    for (const auto& k : required)
        if (!obj.contains(k)) fail(path, "missing required key '" + k + "'");
}

double finite_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "non-finite number");
    return d;
}

double unit_to_mhz(const json& node, const std::string& path) {
    if (!node.is_string()) fail(path, "expected a unit string");
    const std::string u = node.get<std::string>();
    if (u == "MHz") return 1.0;
    if (u == "GHz") return 1e3;
    if (u == "kHz") return 1e-3;
    fail(path, "unit '" + u + "' not supported (use kHz, MHz or GHz)");
}

Eigen::Vector3d vector3(const json& node, const std::string& path) {
    if (!node.is_array() || node.size() != 3) fail(path, "expected an array of 3 numbers");
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) v(i) = finite_number(node[i], path + "[" + std::to_string(i) + "]");
    return v;
}

EulerAngles euler_from_deg(const json& node, const std::string& path) {
    const Eigen::Vector3d deg = vector3(node, path);
    return {deg2rad(deg(0)), deg2rad(deg(1)), deg2rad(deg(2))};
}

// unit_required: A/Q carry 'unit: MHz'; g is dimensionless and must not.
TensorSpec tensor_spec(const json& node, const std::string& path, bool unit_required) {
    std::set<std::string> allowed = {"principal_values", "euler_deg", "notes"};
    std::set<std::string> required = {"principal_values"};
    if (unit_required) {
        allowed.insert("unit");
        required.insert("unit");
    }
    require_keys(node, path, allowed, required);

    TensorSpec t;
    const double scale = unit_required ? unit_to_mhz(node.at("unit"), path + "/unit") : 1.0;
    t.principal_values = scale * vector3(node.at("principal_values"), path + "/principal_values");
    if (node.contains("euler_deg"))
        t.orientation = euler_from_deg(node.at("euler_deg"), path + "/euler_deg");
    return t;
}

HalfInteger quantum_number(const json& node, const std::string& path) {
    if (node.is_string()) {
        const std::string s = node.get<std::string>();
        // accept "1/2", "3/2", ... and plain integers "1", "2"
        const auto slash = s.find('/');
        try {
            if (slash == std::string::npos) return HalfInteger(2 * std::stoi(s));
            if (s.substr(slash + 1) != "2") fail(path, "denominator must be 2");
            return HalfInteger(std::stoi(s.substr(0, slash)));
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            fail(path, "cannot parse quantum number '" + s + "'");
        }
    }
    if (node.is_number()) return HalfInteger::from_value(finite_number(node, path));
    fail(path, "expected a quantum number (e.g. \"1/2\" or 0.5)");
}

SpinSystem parse_system(const json& node, const std::string& name, const std::string& path) {
    require_keys(node, path,
                 {"S", "I", "A", "g", "g_n", "g_n_tensor", "Q", "label", "notes"},
                 {"S", "I", "A", "g", "g_n"});

    SpinSystem sys;
    sys.S = quantum_number(node.at("S"), path + "/S");
    sys.I = quantum_number(node.at("I"), path + "/I");
    sys.A = tensor_spec(node.at("A"), path + "/A", true);
    sys.g = tensor_spec(node.at("g"), path + "/g", false);
    sys.g_n = finite_number(node.at("g_n"), path + "/g_n");
    if (node.contains("g_n_tensor"))
        sys.g_n_tensor = tensor_spec(node.at("g_n_tensor"), path + "/g_n_tensor", false);
    if (node.contains("Q")) sys.Q = tensor_spec(node.at("Q"), path + "/Q", true);
    sys.label = node.contains("label") ? node.at("label").get<std::string>() : name;
    return sys;
}

Config build_config(const json& doc, const std::string& text);

} // namespace

const SpinSystem& Config::system(const std::string& name) const {
    const auto it = systems.find(name);
    if (it == systems.end()) throw ConfigError("config defines no system named '" + name + "'");
    return it->second;
}

Config parse_config_text(const std::string& text, const std::string& origin) {
    // duplicate-key scan first; the DOM parser would silently keep the last
    DuplicateKeyScanner scanner;
    try {
        json::sax_parse(text, &scanner);
    } catch (const json::exception&) {
        // malformed input; the DOM pass below reports it with position info
    }
    if (!scanner.duplicate_path.empty())
        throw ConfigError("config error at " + scanner.duplicate_path + ": duplicate key (" +
                          origin + ")");

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }

    try {
        return build_config(doc, text);
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

namespace {

Config build_config(const json& doc, const std::string& text) {
    require_keys(doc, "", {"constants", "systems", "optical_offset", "noise", "map", "seeds"},
                 {"systems"});

    Config cfg;
    cfg.source_hash = fnv1a(text);

    if (doc.contains("constants")) {
        const json& c = doc.at("constants");
        require_keys(c, "/constants", {"mu_B_mhz_per_t", "mu_n_mhz_per_t"}, {});
        if (c.contains("mu_B_mhz_per_t"))
            cfg.constants.mu_B_mhz_per_t =
                finite_number(c.at("mu_B_mhz_per_t"), "/constants/mu_B_mhz_per_t");
        if (c.contains("mu_n_mhz_per_t"))
            cfg.constants.mu_n_mhz_per_t =
                finite_number(c.at("mu_n_mhz_per_t"), "/constants/mu_n_mhz_per_t");
        if (cfg.constants.mu_B_mhz_per_t <= 0.0 || cfg.constants.mu_n_mhz_per_t <= 0.0)
            fail("/constants", "magneton ratios must be positive");
    }

    const json& systems = doc.at("systems");
    if (!systems.is_object() || systems.empty()) fail("/systems", "expected at least one system");
    for (const auto& [name, node] : systems.items()) {
        const SpinSystem sys = parse_system(node, name, "/systems/" + name);
        for (const auto& w : validate_system(sys)) cfg.warnings.push_back(w);
        cfg.systems.emplace(name, sys);
    }

    if (doc.contains("optical_offset")) {
        const json& node = doc.at("optical_offset");
        require_keys(node, "/optical_offset", {"unit", "value"}, {"unit", "value"});
        cfg.optical_offset_mhz = unit_to_mhz(node.at("unit"), "/optical_offset/unit") *
                                 finite_number(node.at("value"), "/optical_offset/value");
    }

    if (doc.contains("noise")) {
        const json& node = doc.at("noise");
        require_keys(node, "/noise", {"magnitude_ut", "mode", "direction"}, {"magnitude_ut"});
        cfg.noise.magnitude_t = 1e-6 * finite_number(node.at("magnitude_ut"), "/noise/magnitude_ut");
        if (cfg.noise.magnitude_t < 0.0) fail("/noise/magnitude_ut", "must be >= 0");
        if (node.contains("mode")) {
            const std::string m = node.at("mode").get<std::string>();
            if (m == "worst-case") cfg.noise.mode = NoiseVector::Mode::WorstCase;
            else if (m == "isotropic-average") cfg.noise.mode = NoiseVector::Mode::IsotropicAverage;
            else if (m == "fixed-direction") cfg.noise.mode = NoiseVector::Mode::FixedDirection;
            else fail("/noise/mode", "unknown mode '" + m + "'");
        }
        if (cfg.noise.mode == NoiseVector::Mode::FixedDirection) {
            if (!node.contains("direction"))
                fail("/noise", "fixed-direction mode requires 'direction'");
            cfg.noise.direction = vector3(node.at("direction"), "/noise/direction").normalized();
        } else if (node.contains("direction")) {
            fail("/noise/direction", "only meaningful for fixed-direction mode");
        }
    } else {
        cfg.noise.magnitude_t = 3e-6;
        cfg.noise.mode = NoiseVector::Mode::IsotropicAverage;
    }

    if (doc.contains("map")) {
        const json& node = doc.at("map");
        require_keys(node, "/map", {"theta_deg", "phi_deg"}, {"theta_deg", "phi_deg"});
        auto parse_axis = [&](const json& ax, const std::string& p, double& lo, double& hi,
                              double& step) {
            require_keys(ax, p, {"min", "max", "step"}, {"min", "max", "step"});
            lo = finite_number(ax.at("min"), p + "/min");
            hi = finite_number(ax.at("max"), p + "/max");
            step = finite_number(ax.at("step"), p + "/step");
            if (step <= 0.0) fail(p + "/step", "must be positive");
            if (hi < lo) fail(p, "max must be >= min");
        };
        parse_axis(node.at("theta_deg"), "/map/theta_deg", cfg.map_window.theta_min_deg,
                   cfg.map_window.theta_max_deg, cfg.map_window.theta_step_deg);
        parse_axis(node.at("phi_deg"), "/map/phi_deg", cfg.map_window.phi_min_deg,
                   cfg.map_window.phi_max_deg, cfg.map_window.phi_step_deg);
    }

    if (doc.contains("seeds")) {
        const json& node = doc.at("seeds");
        require_keys(node, "/seeds", {"inhomogeneity", "synthesis"}, {});
        if (node.contains("inhomogeneity")) {
            if (!node.at("inhomogeneity").is_number_unsigned())
                fail("/seeds/inhomogeneity", "expected a non-negative integer");
            cfg.seed_inhomogeneity = node.at("inhomogeneity").get<std::uint64_t>();
        }
        if (node.contains("synthesis")) {
            if (!node.at("synthesis").is_number_unsigned())
                fail("/seeds/synthesis", "expected a non-negative integer");
            cfg.seed_synthesis = node.at("synthesis").get<std::uint64_t>();
        }
    }
    return cfg;
}

} // namespace

Config parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

} // namespace zefoz
