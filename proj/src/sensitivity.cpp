#include "zefoz/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "zefoz/util.hpp"

namespace zefoz {

namespace {

constexpr double kClusterTolMhz = 1e-6;
constexpr double kCurvatureGapMinMhz = 1e-3;
constexpr double kDefaultGradStepT = 1e-5;
constexpr double kNearZeroFieldT = 1e-4;
constexpr double kNearZeroStepT = 1e-6;
constexpr double kDefaultCurvStepT = 2e-5;
constexpr double kOverlapMargin = 0.1;

std::string cluster_message(const EigenSolution& sol, int level) {
    std::ostringstream os;
    os << "level " << level << " is degenerate (cluster {";
    bool first = true;
    for (const auto& cl : sol.clusters(kClusterTolMhz)) {
        if (std::find(cl.begin(), cl.end(), level) == cl.end()) continue;
        for (int k : cl) {
            os << (first ? "" : ", ") << k;
            first = false;
        }
    }
    os << "} within " << kClusterTolMhz << " MHz)";
    return os.str();
}

void require_isolated(const EigenSolution& sol, TransitionId t) {
    if (t.lower < 0 || t.upper >= sol.dim())
        throw Error("transition indices out of range");
    for (int level : {t.lower, t.upper})
        if (sol.gap(level) <= kClusterTolMhz)
            throw DegeneracyError("Hellmann-Feynman invalid: " + cluster_message(sol, level));
}

// Level-resolved pieces shared by spin and optical sensitivities.
Eigen::Vector3d level_gradient(const SpinSystem& sys, const EigenSolution& sol, int level,
                               const Constants& c) {
    Eigen::Vector3d g;
    const Eigen::VectorXcd v = sol.states.col(level);
    for (int p = 0; p < 3; ++p)
        g(p) = (v.adjoint() * (zeeman_derivative(sys, p, c) * v))(0).real();
    return g;
}

Eigen::Matrix3d level_curvature(const SpinSystem& sys, const EigenSolution& sol, int level,
                                const Constants& c) {
    const Eigen::Index n = sol.dim();
    Eigen::MatrixXcd V[3];
    for (int p = 0; p < 3; ++p) V[p] = zeeman_derivative(sys, p, c);

    // <n|V_p|k> for all k
    Eigen::MatrixXcd elem(3, n);
    const Eigen::VectorXcd vn = sol.states.col(level);
    for (int p = 0; p < 3; ++p) elem.row(p) = (vn.adjoint() * V[p] * sol.states).row(0);

    Eigen::Matrix3d curv = Eigen::Matrix3d::Zero();
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == level) continue;
        const double denom = sol.energies(level) - sol.energies(k);
        if (std::abs(denom) < kCurvatureGapMinMhz)
            throw DegeneracyError("perturbation sum diverges: gap between levels " +
                                  std::to_string(level) + " and " + std::to_string(k) + " is " +
                                  format_double(denom) + " MHz");
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q)
                curv(p, q) += 2.0 * (elem(p, k) * std::conj(elem(q, k))).real() / denom;
    }
    return 0.5 * (curv + curv.transpose());
}

// Track level `level` of `base` into a displaced solution by maximal
// overlap; ambiguity signals a crossing inside the stencil.
int track_level(const EigenSolution& base, const EigenSolution& displaced, int level) {
    const Eigen::VectorXcd ref = base.states.col(level);
    int best = -1;
    double obest = -1.0, osecond = -1.0;
    for (int j = 0; j < displaced.dim(); ++j) {
        const double o = std::abs((displaced.states.col(j).adjoint() * ref)(0));
        if (o > obest) {
            osecond = obest;
            best = j;
            obest = o;
        } else if (o > osecond) {
            osecond = o;
        }
    }
    if (obest - osecond < kOverlapMargin)
        throw TrackingError(
            "eigenstate tracking ambiguous (level crossing inside the stencil?); "
            "reduce the finite-difference step");
    return best;
}

double tracked_nu(const SpinSystem& sys, const EigenSolution& base, const FieldVector& B,
                  TransitionId t, const Constants& c) {
    const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
    const int lo = track_level(base, sol, t.lower);
    const int hi = track_level(base, sol, t.upper);
    if (lo == hi) throw TrackingError("both transition levels tracked to the same state");
    return sol.energies(hi) - sol.energies(lo);
}

// Deterministic direction set for worst-case directional slopes.
const std::vector<Eigen::Vector3d>& slope_directions() {
    static const std::vector<Eigen::Vector3d> dirs = [] {
        std::vector<Eigen::Vector3d> d;
        d.emplace_back(1, 0, 0);
        d.emplace_back(0, 1, 0);
        d.emplace_back(0, 0, 1);
        const double r = 1.0 / std::sqrt(2.0);
        const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
        for (const auto& ab : pairs) {
            for (double s : {1.0, -1.0}) {
                Eigen::Vector3d v = Eigen::Vector3d::Zero();
                v(ab[0]) = r;
                v(ab[1]) = s * r;
                d.push_back(v);
            }
        }
        const double q = 1.0 / std::sqrt(3.0);
        d.emplace_back(q, q, q);
        d.emplace_back(q, q, -q);
        d.emplace_back(q, -q, q);
        d.emplace_back(-q, q, q);
        // golden-angle spiral for coverage between the symmetry axes
        for (int k = 0; k < 24; ++k) {
            const double z = -1.0 + 2.0 * (k + 0.5) / 24.0;
            const double rho = std::sqrt(1.0 - z * z);
            const double ang = 2.399963229728653 * k;
            d.emplace_back(rho * std::cos(ang), rho * std::sin(ang), z);
        }
        return d;
    }();
    return dirs;
}

// First-order splitting rates of a degenerate cluster along direction n:
// eigenvalues of the cluster-projected dH/dB.n (degenerate perturbation
// theory). A singleton cluster reduces to the Hellmann-Feynman value.
Eigen::VectorXd cluster_rates(const EigenSolution& sol, const std::vector<int>& cluster,
                              const Eigen::MatrixXcd V[3], const Eigen::Vector3d& n) {
    const int k = static_cast<int>(cluster.size());
    Eigen::MatrixXcd W(sol.dim(), k);
    for (int i = 0; i < k; ++i) W.col(i) = sol.states.col(cluster[i]);
    Eigen::MatrixXcd small = Eigen::MatrixXcd::Zero(k, k);
    for (int p = 0; p < 3; ++p)
        if (n(p) != 0.0) small += n(p) * (W.adjoint() * V[p] * W);
    small = 0.5 * (small + small.adjoint()).eval();  // Hermitian up to roundoff
    return eigensolve(small).energies;
}

const std::vector<int>& cluster_of(const std::vector<std::vector<int>>& clusters, int level) {
    for (const auto& cl : clusters)
        if (std::find(cl.begin(), cl.end(), level) != cl.end()) return cl;
    throw Error("level not found in any cluster");
}

} // namespace

Eigen::Vector3d gradient_hellmann_feynman(const SpinSystem& sys, const EigenSolution& sol,
                                          TransitionId t, const Constants& c) {
    require_isolated(sol, t);
    return level_gradient(sys, sol, t.upper, c) - level_gradient(sys, sol, t.lower, c);
}

Eigen::Vector3d gradient_hellmann_feynman(const SpinSystem& sys, const FieldVector& B,
                                          TransitionId t, const Constants& c) {
    const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
    return gradient_hellmann_feynman(sys, sol, t, c);
}

Eigen::Vector3d gradient_finite_difference(const SpinSystem& sys, const FieldVector& B,
                                           TransitionId t, double step_t, const Constants& c) {
    if (step_t < 0.0) throw Error("finite-difference step must be positive");
    if (step_t == 0.0) step_t = B.norm() < kNearZeroFieldT ? kNearZeroStepT : kDefaultGradStepT;

    const EigenSolution base = eigensolve(build_hamiltonian(sys, B, c), B);
    if (t.lower < 0 || t.upper >= base.dim()) throw Error("transition indices out of range");

    Eigen::Vector3d grad;
    for (int p = 0; p < 3; ++p) {
        auto central = [&](double h) {
            FieldVector bp = B, bm = B;
            bp(p) += h;
            bm(p) -= h;
            return (tracked_nu(sys, base, bp, t, c) - tracked_nu(sys, base, bm, t, c)) /
                   (2.0 * h);
        };
        const double d1 = central(step_t);
        const double d2 = central(0.5 * step_t);
        grad(p) = (4.0 * d2 - d1) / 3.0;  // Richardson
    }
    return grad;
}

Eigen::Matrix3d curvature_numeric(const SpinSystem& sys, const FieldVector& B, TransitionId t,
                                  double step_t, const Constants& c) {
    if (step_t < 0.0) throw Error("finite-difference step must be positive");
    if (step_t == 0.0) step_t = kDefaultCurvStepT;
    const double h = step_t;

    const EigenSolution base = eigensolve(build_hamiltonian(sys, B, c), B);
    if (t.lower < 0 || t.upper >= base.dim()) throw Error("transition indices out of range");
    const double nu0 = base.energies(t.upper) - base.energies(t.lower);

    auto nu_at = [&](double dx, double dy, double dz) {
        FieldVector b = B;
        b(0) += dx;
        b(1) += dy;
        b(2) += dz;
        return tracked_nu(sys, base, b, t, c);
    };

    Eigen::Matrix3d curv;
    for (int p = 0; p < 3; ++p) {
        double offs[3] = {0, 0, 0};
        offs[p] = h;
        curv(p, p) = (nu_at(offs[0], offs[1], offs[2]) + nu_at(-offs[0], -offs[1], -offs[2]) -
                      2.0 * nu0) /
                     (h * h);
    }
    for (int p = 0; p < 3; ++p) {
        for (int q = p + 1; q < 3; ++q) {
            double dpp[3] = {0, 0, 0}, dpm[3] = {0, 0, 0};
            dpp[p] = h;
            dpp[q] = h;
            dpm[p] = h;
            dpm[q] = -h;
            const double v = (nu_at(dpp[0], dpp[1], dpp[2]) - nu_at(dpm[0], dpm[1], dpm[2]) -
                              nu_at(-dpm[0], -dpm[1], -dpm[2]) +
                              nu_at(-dpp[0], -dpp[1], -dpp[2])) /
                             (4.0 * h * h);
            curv(p, q) = v;
            curv(q, p) = v;
        }
    }
    return curv;
}

Eigen::Matrix3d curvature_perturbation(const SpinSystem& sys, const EigenSolution& sol,
                                       TransitionId t, const Constants& c) {
    if (t.lower < 0 || t.upper >= sol.dim()) throw Error("transition indices out of range");
    return level_curvature(sys, sol, t.upper, c) - level_curvature(sys, sol, t.lower, c);
}

Eigen::Matrix3d curvature_perturbation(const SpinSystem& sys, const FieldVector& B,
                                       TransitionId t, const Constants& c) {
    const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
    return curvature_perturbation(sys, sol, t, c);
}

TransitionSensitivity transition_sensitivity(const SpinSystem& sys, const FieldVector& B,
                                             TransitionId t, const Constants& c) {
    const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
    TransitionSensitivity ts;
    ts.nu_mhz = sol.energies(t.upper) - sol.energies(t.lower);
    ts.s1 = gradient_hellmann_feynman(sys, sol, t, c);
    ts.s2 = curvature_perturbation(sys, sol, t, c);
    ts.field = B;
    ts.transition = t;
    return ts;
}

ClosedFormGradient closed_form_gradient(const Eigen::Vector3d& A, const Eigen::Vector3d& g,
                                        const Eigen::Vector3d& B, const Constants& c) {
    const double ax = A(0), ay = A(1), az = A(2);
    const double scale = A.cwiseAbs().maxCoeff();
    if (std::abs(std::abs(ax) - std::abs(az)) < 1e-9 * scale ||
        std::abs(std::abs(ay) - std::abs(az)) < 1e-9 * scale)
        throw Error("closed-form gradient singular: |A_x| or |A_y| equals |A_z|");
    if (std::abs(ax + ay) < 1e-12 * scale)
        throw Error("closed-form gradient singular: A_x + A_y = 0");

    const double mu2 = c.mu_B_mhz_per_t * c.mu_B_mhz_per_t;
    const double gx2 = g(0) * g(0), gy2 = g(1) * g(1), gz2 = g(2) * g(2);

    const double term_z = B(2) * B(2) * gz2 * gz2 / ((ax + ay) * (ax + ay));
    const double dxz = ax * ax - az * az;
    const double dyz = ay * ay - az * az;
    const double term_y = B(1) * B(1) * gy2 * gy2 * ax * ax / (dxz * dxz);
    const double term_x = B(0) * B(0) * gx2 * gx2 * ay * ay / (dyz * dyz);

    ClosedFormGradient out;
    out.eq2_mhz_per_t = 2.0 * mu2 * std::sqrt(term_z + term_y + term_x);
    if (B(2) == 0.0) {
        const double b = std::hypot(B(0), B(1));
        const double phi = std::atan2(B(1), B(0));
        const double s = std::sin(phi), co = std::cos(phi);
        out.eq3_mhz_per_t = 2.0 * mu2 * b / (az * az) *
                            std::sqrt(gy2 * gy2 * ax * ax * s * s + gx2 * gx2 * ay * ay * co * co);
    }
    return out;
}

TransitionSensitivity optical_sensitivity(const SpinSystem& ground, const SpinSystem& excited,
                                          const FieldVector& B, int ground_level,
                                          int excited_level, double optical_offset_mhz,
                                          const Constants& c) {
    const EigenSolution gsol = eigensolve(build_hamiltonian(ground, B, c), B);
    const EigenSolution esol = eigensolve(build_hamiltonian(excited, B, c), B);
    if (ground_level < 0 || ground_level >= gsol.dim() || excited_level < 0 ||
        excited_level >= esol.dim())
        throw Error("optical_sensitivity: level index out of range");
    if (gsol.gap(ground_level) <= kClusterTolMhz)
        throw DegeneracyError("optical sensitivity: ground " + cluster_message(gsol, ground_level));
    if (esol.gap(excited_level) <= kClusterTolMhz)
        throw DegeneracyError("optical sensitivity: excited " +
                              cluster_message(esol, excited_level));

    TransitionSensitivity ts;
    ts.nu_mhz = optical_offset_mhz + esol.energies(excited_level) - gsol.energies(ground_level);
    ts.s1 = level_gradient(excited, esol, excited_level, c) -
            level_gradient(ground, gsol, ground_level, c);
    ts.s2 = level_curvature(excited, esol, excited_level, c) -
            level_curvature(ground, gsol, ground_level, c);
    ts.field = B;
    ts.transition = TransitionId{ground_level, excited_level};
    return ts;
}

double worst_directional_slope(const SpinSystem& sys, const EigenSolution& sol, TransitionId t,
                               const Constants& c) {
    const auto clusters = sol.clusters(kClusterTolMhz);
    const auto& ci = cluster_of(clusters, t.lower);
    const auto& cf = cluster_of(clusters, t.upper);
    const bool same = &ci == &cf;
    if (ci.size() == 1 && cf.size() == 1 && !same)
        return gradient_hellmann_feynman(sys, sol, t, c).norm();

    Eigen::MatrixXcd V[3];
    for (int p = 0; p < 3; ++p) V[p] = zeeman_derivative(sys, p, c);

    double worst = 0.0;
    for (const auto& n : slope_directions()) {
        const Eigen::VectorXd ri = cluster_rates(sol, ci, V, n);
        if (same) {
            worst = std::max(worst, ri.maxCoeff() - ri.minCoeff());
            continue;
        }
        const Eigen::VectorXd rf = cluster_rates(sol, cf, V, n);
        for (int a = 0; a < ri.size(); ++a)
            for (int b = 0; b < rf.size(); ++b)
                worst = std::max(worst, std::abs(rf(b) - ri(a)));
    }
    return worst;
}

double worst_directional_slope_optical(const SpinSystem& ground, const EigenSolution& gsol,
                                       int ground_level, const SpinSystem& excited,
                                       const EigenSolution& esol, int excited_level,
                                       const Constants& c) {
    const auto gclusters = gsol.clusters(kClusterTolMhz);
    const auto eclusters = esol.clusters(kClusterTolMhz);
    const auto& cg = cluster_of(gclusters, ground_level);
    const auto& ce = cluster_of(eclusters, excited_level);

    Eigen::MatrixXcd Vg[3], Ve[3];
    for (int p = 0; p < 3; ++p) {
        Vg[p] = zeeman_derivative(ground, p, c);
        Ve[p] = zeeman_derivative(excited, p, c);
    }
    double worst = 0.0;
    for (const auto& n : slope_directions()) {
        const Eigen::VectorXd rg = cluster_rates(gsol, cg, Vg, n);
        const Eigen::VectorXd re = cluster_rates(esol, ce, Ve, n);
        for (int a = 0; a < rg.size(); ++a)
            for (int b = 0; b < re.size(); ++b)
                worst = std::max(worst, std::abs(re(b) - rg(a)));
    }
    return worst;
}

double in_bohr_magneton_units(double grad_mhz_per_t, const Constants& c) {
    return grad_mhz_per_t / c.mu_B_mhz_per_t;
}

double spectral_radius_sym(const Eigen::Matrix3d& m) {
    const Eigen::Matrix3d sym = 0.5 * (m + m.transpose());
    const EigenSolution sol = eigensolve(sym.cast<std::complex<double>>());
    return sol.energies.cwiseAbs().maxCoeff();
}

const char* to_string(NoiseVector::Mode m) {
    switch (m) {
        case NoiseVector::Mode::WorstCase: return "worst-case";
        case NoiseVector::Mode::IsotropicAverage: return "isotropic-average";
        case NoiseVector::Mode::FixedDirection: return "fixed-direction";
    }
    return "?";
}

} // namespace zefoz
