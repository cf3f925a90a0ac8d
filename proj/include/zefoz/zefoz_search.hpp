#pragma once

#include <array>
#include <optional>

#include "zefoz/sensitivity.hpp"

namespace zefoz {

// Angular window in degrees; inclusive of both ends (within half a step).
struct GridSpec {
    double theta_min_deg = -10.0, theta_max_deg = 10.0, theta_step_deg = 0.5;
    double phi_min_deg = -90.0, phi_max_deg = 0.0, phi_step_deg = 0.5;

    int theta_count() const;
    int phi_count() const;
};

struct AngularCell {
    double theta_deg = 0.0, phi_deg = 0.0;
    double grad_mhz_per_t = 0.0;
    std::optional<double> t2_s;  // absent when no noise model or rate is zero
    bool valid = true;           // false when the cell hit a degeneracy
};

// |S1| over a (theta, phi) window at fixed field magnitude; row-major in
// theta (outer) then phi, deterministic regardless of thread count.
struct AngularGrid {
    GridSpec spec;
    double bmag_t = 0.0;
    TransitionId transition;
    std::vector<AngularCell> cells;

    const AngularCell& at(int it, int ip) const;
    double min_valid_grad() const;
    double max_valid_grad() const;
    // CSV per the interface: theta_deg,phi_deg,grad_mhz_per_t,log10_grad,t2_pred_s
    std::string to_csv(const std::string& metadata_header) const;
};

AngularGrid angular_gradient_map(const SpinSystem& sys, double bmag_t, const GridSpec& grid,
                                 TransitionId t, const std::optional<NoiseVector>& noise = {},
                                 const Constants& c = {}, int threads = 1);

// Nelder-Mead over (theta, phi) minimizing |S1|, refined against a local
// 0.05 deg grid; converged when the simplex diameter is below 0.01 deg and
// the value changes by less than 0.1%.
struct OptimumReport {
    double theta_deg = 0.0, phi_deg = 0.0;
    double grad_mhz_per_t = 0.0;
    std::optional<double> t2_s;
    bool converged = false;
    int iterations = 0;
    std::vector<std::array<double, 3>> trace;  // (theta, phi, value) per accepted step
};
OptimumReport minimize_gradient_direction(const SpinSystem& sys, double bmag_t,
                                          double theta0_deg, double phi0_deg, TransitionId t,
                                          const std::optional<NoiseVector>& noise = {},
                                          const Constants& c = {}, int max_iterations = 500);

// Zero-field survey: every spin transition (and optical pair when an excited
// system is given) evaluated at B = 0. Failures are rows, not errors.
struct ZeroFieldRow {
    bool optical = false;
    int lower = 0, upper = 0;  // levels; for optical rows lower=ground level, upper=excited
    double nu_mhz = 0.0;
    double s1_mhz_per_t = 0.0;        // |S1| or worst directional slope for clusters
    double s2_norm_mhz_per_t2 = 0.0;  // spectral norm; NaN when a cluster is involved
    bool zefoz_pass = false;          // s1 <= 1e-3 MHz/T
    bool cluster = false;
};

struct ZeroFieldReport {
    bool anisotropy_ok = false;
    std::string anisotropy_note;  // names the degenerate or vanishing pair
    std::vector<ZeroFieldRow> rows;

    bool all_pass() const;
    std::string to_csv(const std::string& metadata_header, const Constants& c = {}) const;
};

ZeroFieldReport zero_field_report(const SpinSystem& ground,
                                  const std::optional<SpinSystem>& excited = {},
                                  double optical_offset_mhz = 0.0, const Constants& c = {});

} // namespace zefoz
