// zefoz - command line front end: spin-level tables, angular gradient maps,
// clock-point search, coherence predictions and echo-decay fits.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "zefoz/config.hpp"
#include "zefoz/decoherence.hpp"
#include "zefoz/echo_analysis.hpp"
#include "zefoz/util.hpp"
#include "zefoz/zefoz_search.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::ordered_json;
using namespace zefoz;

int thread_cap() {
    const char* env = std::getenv("ZEFOZ_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

// Every output begins with this block: tool version, config hash, seed and
// the mode decisions that shaped the numbers.
std::string csv_metadata(const Config* cfg, const std::vector<std::string>& extra) {
    std::ostringstream os;
    os << "# zefoz " << kVersion << '\n';
    if (cfg) {
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(cfg->source_hash));
        os << "# config_hash=" << hash << '\n';
    }
    for (const auto& line : extra) os << "# " << line << '\n';
    return os.str();
}

ordered_json json_metadata(const Config* cfg, const std::vector<std::pair<std::string, std::string>>& extra) {
    ordered_json meta;
    meta["tool"] = std::string("zefoz ") + kVersion;
    if (cfg) {
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(cfg->source_hash));
        meta["config_hash"] = hash;
    }
    for (const auto& [k, v] : extra) meta[k] = v;
    return meta;
}

void write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error("cannot open output file: " + out_path);
    out << text;
}

FieldVector parse_triplet(const std::string& s, const char* what) {
    FieldVector v;
    std::istringstream in(s);
    std::string tok;
    for (int i = 0; i < 3; ++i) {
        if (!std::getline(in, tok, ','))
            throw Error(std::string(what) + " expects three comma-separated numbers");
        try {
            v(i) = std::stod(tok);
        } catch (const std::exception&) {
            throw Error(std::string(what) + ": cannot parse '" + tok + "'");
        }
    }
    if (std::getline(in, tok, ',')) throw Error(std::string(what) + ": too many components");
    return v;
}

struct FieldFlags {
    std::string cartesian;  // "x,y,z" tesla
    double bmag = 0.0;
    double theta_deg = 0.0, phi_deg = 0.0;

    FieldVector resolve() const {
        if (!cartesian.empty()) return parse_triplet(cartesian, "--field");
        return bmag * direction_unit_vector(deg2rad(theta_deg), deg2rad(phi_deg));
    }
};

void add_field_flags(CLI::App* cmd, FieldFlags& ff) {
    cmd->add_option("--field", ff.cartesian, "static field as D1,D2,b in tesla");
    cmd->add_option("--bmag", ff.bmag, "field magnitude in tesla");
    cmd->add_option("--theta", ff.theta_deg, "polar angle from the D1-D2 plane, degrees")
        ->needs(cmd->get_option("--bmag"));
    cmd->add_option("--phi", ff.phi_deg, "azimuth in the D1-D2 plane, degrees")
        ->needs(cmd->get_option("--bmag"));
}

TransitionId parse_transition(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw Error("--transition expects 'lower,upper'");
    try {
        return make_transition(std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1)));
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw Error("--transition: cannot parse '" + s + "'");
    }
}

// Default spin transition: the psi pair for S = I = 1/2 systems.
TransitionId default_transition(const SpinSystem& sys, const Constants&) {
    if (sys.dim() == 4) {
        const auto labels = label_levels(sys);
        int lo = -1, hi = -1;
        for (int k = 0; k < 4; ++k) {
            if (labels[k] == LevelLabel::PsiPlus) hi = k;
            if (labels[k] == LevelLabel::PsiMinus) lo = k;
        }
        if (lo >= 0 && hi >= 0) return make_transition(lo, hi);
    }
    throw Error("no default transition for this system; pass --transition lower,upper");
}

NoiseVector resolve_noise(const Config& cfg, double noise_ut, const std::string& mode,
                          const std::string& direction) {
    NoiseVector n = cfg.noise;
    if (noise_ut >= 0.0) n.magnitude_t = 1e-6 * noise_ut;
    if (!mode.empty()) {
        if (mode == "worst-case") n.mode = NoiseVector::Mode::WorstCase;
        else if (mode == "isotropic-average") n.mode = NoiseVector::Mode::IsotropicAverage;
        else if (mode.rfind("fixed", 0) == 0) n.mode = NoiseVector::Mode::FixedDirection;
        else throw Error("unknown noise mode '" + mode + "'");
    }
    if (!direction.empty()) {
        n.direction = parse_triplet(direction, "--noise-direction").normalized();
        n.mode = NoiseVector::Mode::FixedDirection;
    }
    return n;
}

std::vector<std::string> noise_meta(const NoiseVector& n) {
    return {std::string("noise_mode=") + to_string(n.mode),
            "noise_ut=" + format_double(n.magnitude_t * 1e6)};
}

// ---------------------------------------------------------------------------

int run_levels(const Config& cfg, const std::string& system_name, const FieldFlags& ff,
               const std::string& bac, const std::string& out_path) {
    const SpinSystem& sys = cfg.system(system_name);
    const Constants& c = cfg.constants;
    const FieldVector B = ff.resolve();

    const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
    const bool at_zero = B.norm() == 0.0;
    std::vector<LevelLabel> labels(sol.dim(), LevelLabel::Unlabeled);
    if (at_zero) labels = label_levels(sys);

    ordered_json doc;
    doc["metadata"] = json_metadata(&cfg, {{"system", system_name}});
    doc["field_t"] = {B(0), B(1), B(2)};
    doc["levels"] = ordered_json::array();
    for (int k = 0; k < sol.dim(); ++k) {
        ordered_json level;
        level["index"] = k;
        level["energy_mhz"] = sol.energies(k);
        level["label"] = to_string(labels[k]);
        doc["levels"].push_back(level);
    }

    std::optional<FieldVector> bac_field;
    if (!bac.empty()) bac_field = parse_triplet(bac, "--bac");

    doc["transitions"] = ordered_json::array();
    for (int i = 0; i < sol.dim(); ++i) {
        for (int j = i + 1; j < sol.dim(); ++j) {
            ordered_json tr;
            tr["lower"] = i;
            tr["upper"] = j;
            tr["nu_mhz"] = sol.energies(j) - sol.energies(i);
            if (bac_field) {
                const TransitionMoment m =
                    transition_moment(sol, sys, make_transition(i, j), *bac_field, c);
                tr["rabi_mhz"] = m.rabi_mhz;
            }
            doc["transitions"].push_back(tr);
        }
    }

    write_output(doc.dump(2) + "\n", out_path);
    return 0;
}

int run_map(const Config& cfg, const std::string& system_name, double bmag,
            const std::string& transition, const std::string& window, double noise_ut,
            const std::string& noise_mode, const std::string& noise_dir,
            const std::string& out_path) {
    const SpinSystem& sys = cfg.system(system_name);
    const Constants& c = cfg.constants;

    GridSpec grid = cfg.map_window;
    if (!window.empty()) {
        std::istringstream in(window);
        std::string tok;
        double vals[6];
        for (int i = 0; i < 6; ++i) {
            if (!std::getline(in, tok, ','))
                throw Error("--window expects thmin,thmax,thstep,phmin,phmax,phstep");
            vals[i] = std::stod(tok);
        }
        grid = {vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]};
    }

    const TransitionId t =
        transition.empty() ? default_transition(sys, c) : parse_transition(transition);
    const NoiseVector noise = resolve_noise(cfg, noise_ut, noise_mode, noise_dir);

    const AngularGrid map =
        angular_gradient_map(sys, bmag, grid, t, noise, c, thread_cap());

    auto meta = noise_meta(noise);
    meta.push_back("system=" + system_name);
    meta.push_back("bmag_t=" + format_double(bmag));
    meta.push_back("transition=" + std::to_string(t.lower) + "-" + std::to_string(t.upper));
    meta.push_back("s1=hellmann-feynman s2=perturbation-sum");
    write_output(map.to_csv(csv_metadata(&cfg, meta)), out_path);
    return 0;
}

int run_zefoz(const Config& cfg, const std::string& system_name, const std::string& excited_name,
              bool optimize, double bmag, double theta0, double phi0,
              const std::string& transition, const std::string& out_path) {
    const SpinSystem& sys = cfg.system(system_name);
    const Constants& c = cfg.constants;

    if (!optimize) {
        std::optional<SpinSystem> excited;
        if (!excited_name.empty() && cfg.has_system(excited_name))
            excited = cfg.system(excited_name);
        const double offset = cfg.optical_offset_mhz.value_or(0.0);
        const ZeroFieldReport rep = zero_field_report(sys, excited, offset, c);
        std::vector<std::string> meta{"system=" + system_name};
        if (excited) meta.push_back("excited=" + excited_name);
        write_output(rep.to_csv(csv_metadata(&cfg, meta), c), out_path);
        return rep.all_pass() ? 0 : 0;  // failures are report rows, not exit codes
    }

    const TransitionId t =
        transition.empty() ? default_transition(sys, c) : parse_transition(transition);
    const OptimumReport rep =
        minimize_gradient_direction(sys, bmag, theta0, phi0, t, cfg.noise, c);

    ordered_json doc;
    doc["metadata"] = json_metadata(
        &cfg, {{"system", system_name},
               {"noise_mode", to_string(cfg.noise.mode)},
               {"noise_ut", format_double(cfg.noise.magnitude_t * 1e6)}});
    doc["bmag_t"] = bmag;
    doc["transition"] = {t.lower, t.upper};
    doc["theta_deg"] = rep.theta_deg;
    doc["phi_deg"] = rep.phi_deg;
    doc["grad_mhz_per_t"] = rep.grad_mhz_per_t;
    doc["converged"] = rep.converged;
    doc["iterations"] = rep.iterations;
    if (rep.t2_s) doc["t2_pred_s"] = *rep.t2_s;
    ordered_json trace = ordered_json::array();
    for (const auto& step : rep.trace) trace.push_back({step[0], step[1], step[2]});
    doc["trace"] = trace;
    if (!rep.converged)
        std::cerr << "warning: optimizer did not converge; best sample reported\n";

    write_output(doc.dump(2) + "\n", out_path);
    return 0;
}

int run_predict(const Config& cfg, const std::string& system_name, const FieldFlags& ff,
                const std::vector<std::string>& transitions, double noise_ut,
                const std::string& noise_mode, const std::string& noise_dir, double inhom_spread,
                int inhom_samples, const std::string& out_path) {
    const SpinSystem& sys = cfg.system(system_name);
    const Constants& c = cfg.constants;
    const FieldVector B = ff.resolve();
    const NoiseVector noise = resolve_noise(cfg, noise_ut, noise_mode, noise_dir);

    std::vector<TransitionId> ids;
    if (transitions.empty()) {
        const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
        for (int i = 0; i < sol.dim(); ++i)
            for (int j = i + 1; j < sol.dim(); ++j) ids.push_back(make_transition(i, j));
    } else {
        for (const auto& s : transitions) ids.push_back(parse_transition(s));
    }

    std::vector<T2Prediction> rows;
    for (const TransitionId& t : ids)
        rows.push_back(predict_t2(transition_sensitivity(sys, B, t, c), noise));

    auto meta = noise_meta(noise);
    meta.push_back("system=" + system_name);
    meta.push_back("field_t=" + format_double(B(0)) + "," + format_double(B(1)) + "," +
                   format_double(B(2)));
    meta.push_back("s1=hellmann-feynman s2=perturbation-sum");
    if (inhom_spread > 0.0) {
        meta.push_back("inhomogeneity_spread=" + format_double(inhom_spread));
        meta.push_back("inhomogeneity_samples=" + std::to_string(inhom_samples));
        meta.push_back("inhomogeneity_seed=" + std::to_string(cfg.seed_inhomogeneity));
        // combined rate: magnetic noise + inhomogeneous broadening
        for (auto& row : rows) {
            const InhomogeneityResult inhom =
                inhomogeneity_dephasing(sys, B, inhom_spread, row.inputs.transition,
                                        inhom_samples, cfg.seed_inhomogeneity, c);
            const double total = row.total_rate_hz() + inhom.sigma_nu_hz;
            row.t2_s = total > 0.0 ? std::optional<double>(1.0 / (kPi * total)) : std::nullopt;
        }
    }
    write_output(predictions_to_csv(rows, csv_metadata(&cfg, meta)), out_path);
    return 0;
}

int run_fit(const std::string& data_path, const std::vector<std::string>& trace_paths,
            const std::string& window, bool nonlinear, const std::string& out_path) {
    EchoDataset data;
    if (!data_path.empty()) {
        data = load_echo_dataset(data_path);
    } else if (!trace_paths.empty()) {
        if (window.empty()) throw Error("--traces requires --window f_lo,f_hi in Hz");
        const auto comma = window.find(',');
        if (comma == std::string::npos) throw Error("--window expects f_lo,f_hi");
        const double flo = std::stod(window.substr(0, comma));
        const double fhi = std::stod(window.substr(comma + 1));
        for (const auto& path : trace_paths) {
            const BeatTrace trace = load_beat_trace(path);
            const PeakArea peak = spectrum_peak_area(trace, flo, fhi);
            if (!peak.echo_found) {
                std::cerr << "warning: no echo detected in " << path << ", skipped\n";
                continue;
            }
            data.points.push_back({trace.tau_s, peak.area, peak.area_error});
        }
        std::sort(data.points.begin(), data.points.end(),
                  [](const EchoPoint& a, const EchoPoint& b) { return a.tau_s < b.tau_s; });
    } else {
        throw Error("fit requires --data or --traces");
    }

    const T2Estimate est = fit_decay(data, nonlinear);

    ordered_json doc;
    doc["metadata"] = json_metadata(nullptr, {{"estimator", "weighted log-linear"},
                                              {"ci", "95% Student-t on the slope"},
                                              {"decay_model", "I0*exp(-4*tau/T2)"}});
    doc["t2_s"] = est.t2_s;
    doc["t2_ci95_s"] = ordered_json::array();
    doc["t2_ci95_s"].push_back(est.ci_low_s);
    if (std::isfinite(est.ci_high_s))
        doc["t2_ci95_s"].push_back(est.ci_high_s);
    else
        doc["t2_ci95_s"].push_back(nullptr);
    doc["i0"] = est.i0;
    doc["residual_rms"] = est.residual_rms;
    doc["points_used"] = est.points_used;
    doc["points_excluded"] = est.points_excluded;
    if (est.t2_nonlinear_s) doc["t2_nonlinear_s"] = *est.t2_nonlinear_s;

    write_output(doc.dump(2) + "\n", out_path);
    return 0;
}

int run_subsites(const Config& cfg, const std::string& system_name, double theta, double phi,
                 double bmax, int steps, const std::string& transition,
                 const std::string& out_path) {
    const SpinSystem& sys = cfg.system(system_name);
    const SpinSystem twin = subsite_counterpart(sys);
    const Constants& c = cfg.constants;
    if (steps < 2) throw Error("--steps must be at least 2");

    const TransitionId t =
        transition.empty() ? default_transition(sys, c) : parse_transition(transition);
    const Eigen::Vector3d dir = direction_unit_vector(deg2rad(theta), deg2rad(phi));

    std::ostringstream os;
    os << csv_metadata(&cfg, {"system=" + system_name,
                              "direction_deg=" + format_double(theta) + "," + format_double(phi),
                              "transition=" + std::to_string(t.lower) + "-" +
                                  std::to_string(t.upper)});
    os << "b_t,nu_subsite_a_mhz,nu_subsite_b_mhz,split_mhz\n";
    for (int k = 0; k < steps; ++k) {
        const double b = bmax * k / (steps - 1);
        const FieldVector B = b * dir;
        const EigenSolution a = eigensolve(build_hamiltonian(sys, B, c), B);
        const EigenSolution bb = eigensolve(build_hamiltonian(twin, B, c), B);
        const double nua = a.energies(t.upper) - a.energies(t.lower);
        const double nub = bb.energies(t.upper) - bb.energies(t.lower);
        os << format_double(b) << ',' << format_double(nua) << ',' << format_double(nub) << ','
           << format_double(nua - nub) << '\n';
    }
    write_output(os.str(), out_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"anisotropic electron-nuclear spin systems near zero field: level "
                 "structure, Zeeman sensitivities, clock points, coherence predictions "
                 "and echo-decay fits"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("zefoz ") + kVersion);

    std::string config_path, out_path, system_name = "ground", excited_name = "excited";

    // levels
    auto* levels = app.add_subcommand("levels", "energies, labels, transitions and Rabi rates");
    FieldFlags levels_field;
    std::string bac;
    levels->add_option("--config", config_path, "JSON config")->required();
    levels->add_option("--system", system_name, "system name in the config");
    add_field_flags(levels, levels_field);
    levels->add_option("--bac", bac, "ac field D1,D2,b in tesla for the Rabi column");
    levels->add_option("--out", out_path, "output file (stdout when omitted)");

    // map
    auto* map = app.add_subcommand("map", "angular |S1| map at fixed field magnitude");
    double map_bmag = 5e-3, noise_ut = -1.0;
    std::string map_window, map_transition, noise_mode, noise_dir;
    map->add_option("--config", config_path, "JSON config")->required();
    map->add_option("--system", system_name, "system name in the config");
    map->add_option("--bmag", map_bmag, "field magnitude in tesla");
    map->add_option("--transition", map_transition, "lower,upper level indices");
    map->add_option("--window", map_window, "thmin,thmax,thstep,phmin,phmax,phstep in degrees");
    map->add_option("--noise-ut", noise_ut, "noise magnitude in uT for the T2 column");
    map->add_option("--noise-mode", noise_mode,
                    "worst-case | isotropic-average | fixed-direction");
    map->add_option("--noise-direction", noise_dir, "unit direction for fixed-direction mode");
    map->add_option("--out", out_path, "output file");

    // zefoz
    auto* zf = app.add_subcommand("zefoz", "zero-field report or gradient minimization");
    bool optimize = false;
    double zf_bmag = 5e-3, theta0 = 0.0, phi0 = 0.0;
    std::string zf_transition;
    zf->add_option("--config", config_path, "JSON config")->required();
    zf->add_option("--system", system_name, "system name in the config");
    zf->add_option("--excited", excited_name, "excited system name for optical rows");
    zf->add_flag("--optimize", optimize, "minimize |S1| over direction instead");
    zf->add_option("--bmag", zf_bmag, "field magnitude for --optimize");
    zf->add_option("--theta0", theta0, "starting theta, degrees");
    zf->add_option("--phi0", phi0, "starting phi, degrees");
    zf->add_option("--transition", zf_transition, "lower,upper level indices");
    zf->add_option("--out", out_path, "output file");

    // predict
    auto* predict = app.add_subcommand("predict", "T2 predictions from the noise model");
    FieldFlags predict_field;
    std::vector<std::string> predict_transitions;
    double inhom_spread = 0.0;
    int inhom_samples = 10000;
    predict->add_option("--config", config_path, "JSON config")->required();
    predict->add_option("--system", system_name, "system name in the config");
    add_field_flags(predict, predict_field);
    predict->add_option("--transition", predict_transitions,
                        "lower,upper (repeatable; default: all pairs)");
    predict->add_option("--noise-ut", noise_ut, "noise magnitude in uT");
    predict->add_option("--noise-mode", noise_mode,
                        "worst-case | isotropic-average | fixed-direction");
    predict->add_option("--noise-direction", noise_dir, "unit direction for fixed-direction");
    predict->add_option("--inhom-spread", inhom_spread,
                        "fractional field inhomogeneity folded into the rate");
    predict->add_option("--inhom-samples", inhom_samples, "Monte-Carlo samples");
    predict->add_option("--out", out_path, "output file");

    // fit
    auto* fit = app.add_subcommand("fit", "fit T2 from an echo-decay dataset");
    std::string data_path, fit_window;
    std::vector<std::string> trace_paths;
    bool nonlinear = false;
    fit->add_option("--data", data_path, "CSV dataset tau_s,area[,area_err]");
    fit->add_option("--traces", trace_paths, "per-tau beat trace files (repeatable)");
    fit->add_option("--window", fit_window, "f_lo,f_hi in Hz for the spectrum peak");
    fit->add_flag("--nonlinear-check", nonlinear, "also report a nonlinear exponential refit");
    fit->add_option("--out", out_path, "output file");

    // subsites
    auto* subsites = app.add_subcommand("subsites", "paired sub-site spectra vs field scan");
    double ss_theta = 0.0, ss_phi = 0.0, ss_bmax = 5e-3;
    int ss_steps = 51;
    std::string ss_transition;
    subsites->add_option("--config", config_path, "JSON config")->required();
    subsites->add_option("--system", system_name, "system name in the config");
    subsites->add_option("--theta", ss_theta, "scan direction theta, degrees")->required();
    subsites->add_option("--phi", ss_phi, "scan direction phi, degrees")->required();
    subsites->add_option("--bmax", ss_bmax, "maximum field, tesla");
    subsites->add_option("--steps", ss_steps, "number of field points");
    subsites->add_option("--transition", ss_transition, "lower,upper level indices");
    subsites->add_option("--out", out_path, "output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return 1;  // usage error
    }

    try {
        std::optional<Config> cfg;
        if (!config_path.empty()) {
            cfg = parse_config(config_path);
            for (const auto& w : cfg->warnings) std::cerr << "warning: " << w << '\n';
        }

        if (levels->parsed()) return run_levels(*cfg, system_name, levels_field, bac, out_path);
        if (map->parsed())
            return run_map(*cfg, system_name, map_bmag, map_transition, map_window, noise_ut,
                           noise_mode, noise_dir, out_path);
        if (zf->parsed())
            return run_zefoz(*cfg, system_name, excited_name, optimize, zf_bmag, theta0, phi0,
                             zf_transition, out_path);
        if (predict->parsed())
            return run_predict(*cfg, system_name, predict_field, predict_transitions, noise_ut,
                               noise_mode, noise_dir, inhom_spread, inhom_samples, out_path);
        if (fit->parsed())
            return run_fit(data_path, trace_paths, fit_window, nonlinear, out_path);
        if (subsites->parsed())
            return run_subsites(*cfg, system_name, ss_theta, ss_phi, ss_bmax, ss_steps,
                                ss_transition, out_path);
        std::cerr << "error: no subcommand selected\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
