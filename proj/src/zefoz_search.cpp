#include "zefoz/zefoz_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "zefoz/decoherence.hpp"
#include "zefoz/util.hpp"

namespace zefoz {

namespace {

constexpr double kZefozPassMhzPerT = 1e-3;

int count_steps(double lo, double hi, double step) {
    if (step <= 0.0) throw Error("grid step must be positive");
    if (hi < lo) throw Error("grid range is empty");
    return static_cast<int>(std::floor((hi - lo) / step + 0.5)) + 1;
}

std::optional<double> cell_t2(const TransitionSensitivity& ts,
                              const std::optional<NoiseVector>& noise) {
    if (!noise) return std::nullopt;
    const T2Prediction pred = predict_t2(ts, *noise);
    if (pred.infinite()) return std::nullopt;
    return pred.t2_s;
}

} // namespace

int GridSpec::theta_count() const {
    return count_steps(theta_min_deg, theta_max_deg, theta_step_deg);
}
int GridSpec::phi_count() const { return count_steps(phi_min_deg, phi_max_deg, phi_step_deg); }

const AngularCell& AngularGrid::at(int it, int ip) const {
    return cells.at(static_cast<std::size_t>(it) * spec.phi_count() + ip);
}

double AngularGrid::min_valid_grad() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cell : cells)
        if (cell.valid) best = std::min(best, cell.grad_mhz_per_t);
    return best;
}

double AngularGrid::max_valid_grad() const {
    double best = 0.0;
    for (const auto& cell : cells)
        if (cell.valid) best = std::max(best, cell.grad_mhz_per_t);
    return best;
}

std::string AngularGrid::to_csv(const std::string& metadata_header) const {
    std::ostringstream os;
    os << metadata_header;
    os << "theta_deg,phi_deg,grad_mhz_per_t,log10_grad,t2_pred_s\n";
    for (const auto& cell : cells) {
        os << format_double(cell.theta_deg) << ',' << format_double(cell.phi_deg) << ',';
        if (!cell.valid) {
            os << "nan,nan,nan\n";
            continue;
        }
        os << format_double(cell.grad_mhz_per_t) << ','
           << format_double(std::log10(cell.grad_mhz_per_t)) << ',';
        os << (cell.t2_s ? format_double(*cell.t2_s) : "nan") << '\n';
    }
    return os.str();
}

AngularGrid angular_gradient_map(const SpinSystem& sys, double bmag_t, const GridSpec& grid,
                                 TransitionId t, const std::optional<NoiseVector>& noise,
                                 const Constants& c, int threads) {
    const int nth = grid.theta_count();
    const int nph = grid.phi_count();

    AngularGrid out;
    out.spec = grid;
    out.bmag_t = bmag_t;
    out.transition = t;
    out.cells.resize(static_cast<std::size_t>(nth) * nph);

    auto eval_cell = [&](int it, int ip) {
        AngularCell cell;
        cell.theta_deg = grid.theta_min_deg + it * grid.theta_step_deg;
        cell.phi_deg = grid.phi_min_deg + ip * grid.phi_step_deg;
        const FieldVector B =
            bmag_t * direction_unit_vector(deg2rad(cell.theta_deg), deg2rad(cell.phi_deg));
        try {
            const TransitionSensitivity ts = transition_sensitivity(sys, B, t, c);
            cell.grad_mhz_per_t = ts.s1.norm();
            cell.t2_s = cell_t2(ts, noise);
        } catch (const DegeneracyError&) {
            cell.valid = false;  // cell marked invalid, not fatal
        }
        out.cells[static_cast<std::size_t>(it) * nph + ip] = cell;
    };

    threads = std::max(1, threads);
    if (threads == 1) {
        for (int it = 0; it < nth; ++it)
            for (int ip = 0; ip < nph; ++ip) eval_cell(it, ip);
    } else {
        // cells are independent; each worker owns a stripe of rows
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (int it = w; it < nth; it += threads)
                    for (int ip = 0; ip < nph; ++ip) eval_cell(it, ip);
            });
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

namespace {

struct SimplexPoint {
    double theta, phi, value;
};

} // namespace

OptimumReport minimize_gradient_direction(const SpinSystem& sys, double bmag_t,
                                          double theta0_deg, double phi0_deg, TransitionId t,
                                          const std::optional<NoiseVector>& noise,
                                          const Constants& c, int max_iterations) {
    // best-ever sample, so the report can never exceed an evaluated value
    double best_theta = theta0_deg, best_phi = phi0_deg;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<std::array<double, 3>> trace;

    auto objective = [&](double th, double ph) {
        const FieldVector B = bmag_t * direction_unit_vector(deg2rad(th), deg2rad(ph));
        double v;
        try {
            v = gradient_hellmann_feynman(sys, B, t, c).norm();
        } catch (const DegeneracyError&) {
            return std::numeric_limits<double>::infinity();
        }
        if (v < best_value) {
            best_value = v;
            best_theta = th;
            best_phi = ph;
        }
        return v;
    };

    // Nelder-Mead on (theta, phi) in degrees
    std::array<SimplexPoint, 3> s;
    s[0] = {theta0_deg, phi0_deg, objective(theta0_deg, phi0_deg)};
    s[1] = {theta0_deg + 0.5, phi0_deg, objective(theta0_deg + 0.5, phi0_deg)};
    s[2] = {theta0_deg, phi0_deg + 0.5, objective(theta0_deg, phi0_deg + 0.5)};

    auto sort_simplex = [&] {
        std::sort(s.begin(), s.end(),
                  [](const SimplexPoint& a, const SimplexPoint& b) { return a.value < b.value; });
    };
    sort_simplex();

    bool converged = false;
    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        const double diam = std::max({std::hypot(s[0].theta - s[1].theta, s[0].phi - s[1].phi),
                                      std::hypot(s[0].theta - s[2].theta, s[0].phi - s[2].phi),
                                      std::hypot(s[1].theta - s[2].theta, s[1].phi - s[2].phi)});
        const double spread = std::abs(s[2].value - s[0].value);
        if (diam < 0.01 && spread <= 1e-3 * std::max(std::abs(s[0].value), 1e-30)) {
            converged = true;
            break;
        }

        const double cth = 0.5 * (s[0].theta + s[1].theta);
        const double cph = 0.5 * (s[0].phi + s[1].phi);

        auto make = [&](double th, double ph) { return SimplexPoint{th, ph, objective(th, ph)}; };
        const SimplexPoint refl = make(cth + (cth - s[2].theta), cph + (cph - s[2].phi));
        if (refl.value < s[0].value) {
            const SimplexPoint exp_ =
                make(cth + 2.0 * (cth - s[2].theta), cph + 2.0 * (cph - s[2].phi));
            s[2] = exp_.value < refl.value ? exp_ : refl;
        } else if (refl.value < s[1].value) {
            s[2] = refl;
        } else {
            const SimplexPoint contr =
                make(cth + 0.5 * (s[2].theta - cth), cph + 0.5 * (s[2].phi - cph));
            if (contr.value < s[2].value) {
                s[2] = contr;
            } else {
                // shrink toward the best vertex
                for (int k = 1; k < 3; ++k)
                    s[k] = make(s[0].theta + 0.5 * (s[k].theta - s[0].theta),
                                s[0].phi + 0.5 * (s[k].phi - s[0].phi));
            }
        }
        sort_simplex();
        trace.push_back({s[0].theta, s[0].phi, s[0].value});
    }

    // refine against a local 0.05 deg grid to guard against false minima
    for (int pass = 0; pass < 2; ++pass) {
        const double t0 = best_theta, p0 = best_phi;
        for (int i = -4; i <= 4; ++i)
            for (int j = -4; j <= 4; ++j) objective(t0 + 0.05 * i, p0 + 0.05 * j);
    }

    OptimumReport rep;
    rep.theta_deg = best_theta;
    rep.phi_deg = best_phi;
    rep.grad_mhz_per_t = best_value;
    rep.converged = converged;
    rep.iterations = iter;
    rep.trace = std::move(trace);
    if (noise) {
        const FieldVector B =
            bmag_t * direction_unit_vector(deg2rad(best_theta), deg2rad(best_phi));
        try {
            rep.t2_s = cell_t2(transition_sensitivity(sys, B, t, c), noise);
        } catch (const DegeneracyError&) {
        }
    }
    return rep;
}

bool ZeroFieldReport::all_pass() const {
    if (!anisotropy_ok) return false;
    for (const auto& row : rows)
        if (!row.zefoz_pass) return false;
    return true;
}

std::string ZeroFieldReport::to_csv(const std::string& metadata_header, const Constants& c) const {
    std::ostringstream os;
    os << metadata_header;
    os << "# anisotropy_check=" << (anisotropy_ok ? "pass" : ("fail: " + anisotropy_note))
       << '\n';
    os << "kind,lower,upper,nu_mhz,s1_mhz_per_t,s1_mu_b,s2_specnorm_mhz_per_t2,zefoz_pass,"
          "cluster\n";
    for (const auto& row : rows) {
        os << (row.optical ? "optical" : "spin") << ',' << row.lower << ',' << row.upper << ','
           << format_double(row.nu_mhz) << ',' << format_double(row.s1_mhz_per_t) << ','
           << format_double(in_bohr_magneton_units(row.s1_mhz_per_t, c)) << ','
           << format_double(row.s2_norm_mhz_per_t2) << ',' << (row.zefoz_pass ? 1 : 0) << ','
           << (row.cluster ? 1 : 0) << '\n';
    }
    return os.str();
}

ZeroFieldReport zero_field_report(const SpinSystem& ground,
                                  const std::optional<SpinSystem>& excited,
                                  double optical_offset_mhz, const Constants& c) {
    ZeroFieldReport rep;

    // anisotropy check: all three A eigenvalues distinct and nonzero
    const Eigen::Vector3d A = ground.A.principal_values;
    const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
    const char* axis_names[3] = {"A_x", "A_y", "A_z"};
    rep.anisotropy_ok = true;
    for (int i = 0; i < 3 && rep.anisotropy_ok; ++i) {
        if (std::abs(A(i)) < 1e-9 * scale) {
            rep.anisotropy_ok = false;
            rep.anisotropy_note = std::string(axis_names[i]) + " = 0";
        }
        for (int j = i + 1; j < 3 && rep.anisotropy_ok; ++j) {
            if (std::abs(A(i) - A(j)) < 1e-9 * scale) {
                rep.anisotropy_ok = false;
                rep.anisotropy_note =
                    std::string(axis_names[i]) + " = " + axis_names[j] + " (degenerate pair)";
            }
        }
    }

    const FieldVector zero = FieldVector::Zero();
    const EigenSolution gsol = eigensolve(build_hamiltonian(ground, zero, c), zero);
    const auto gclusters = gsol.clusters();
    auto in_cluster = [](const std::vector<std::vector<int>>& cls, int level) {
        for (const auto& cl : cls)
            if (cl.size() > 1 && std::find(cl.begin(), cl.end(), level) != cl.end()) return true;
        return false;
    };

    const int d = static_cast<int>(gsol.dim());
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            ZeroFieldRow row;
            row.lower = i;
            row.upper = j;
            row.nu_mhz = gsol.energies(j) - gsol.energies(i);
            row.cluster = in_cluster(gclusters, i) || in_cluster(gclusters, j);
            const TransitionId t{i, j};
            row.s1_mhz_per_t = worst_directional_slope(ground, gsol, t, c);
            row.s2_norm_mhz_per_t2 = std::numeric_limits<double>::quiet_NaN();
            if (!row.cluster) {
                row.s2_norm_mhz_per_t2 =
                    spectral_radius_sym(curvature_perturbation(ground, gsol, t, c));
            }
            row.zefoz_pass = row.s1_mhz_per_t <= kZefozPassMhzPerT;
            rep.rows.push_back(row);
        }
    }

    if (excited) {
        const EigenSolution esol = eigensolve(build_hamiltonian(*excited, zero, c), zero);
        const auto eclusters = esol.clusters();
        for (int gi = 0; gi < d; ++gi) {
            for (int ej = 0; ej < esol.dim(); ++ej) {
                ZeroFieldRow row;
                row.optical = true;
                row.lower = gi;
                row.upper = ej;
                row.nu_mhz = optical_offset_mhz + esol.energies(ej) - gsol.energies(gi);
                row.cluster = in_cluster(gclusters, gi) || in_cluster(eclusters, ej);
                row.s1_mhz_per_t =
                    worst_directional_slope_optical(ground, gsol, gi, *excited, esol, ej, c);
                row.s2_norm_mhz_per_t2 = std::numeric_limits<double>::quiet_NaN();
                if (!row.cluster) {
                    const TransitionSensitivity ts = optical_sensitivity(
                        ground, *excited, zero, gi, ej, optical_offset_mhz, c);
                    row.s2_norm_mhz_per_t2 = spectral_radius_sym(ts.s2);
                }
                row.zefoz_pass = row.s1_mhz_per_t <= kZefozPassMhzPerT;
                rep.rows.push_back(row);
            }
        }
    }
    return rep;
}

} // namespace zefoz
