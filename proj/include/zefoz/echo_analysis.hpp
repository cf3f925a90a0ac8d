#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zefoz/errors.hpp"

namespace zefoz {

// One heterodyne beat record, belonging to a single echo delay tau.
struct BeatTrace {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
    double tau_s = 0.0;
};

struct EchoPoint {
    double tau_s = 0.0;
    double area = 0.0;
    double area_error = 0.0;  // 0 means unknown (uniform weighting)
};

// (tau, echo area) samples; taus strictly increasing.
struct EchoDataset {
    std::vector<EchoPoint> points;
};

// Result of the spectrum peak fit. area = a sigma sqrt(2 pi) of the fitted
// Gaussian on the one-sided DFT magnitude spectrum; area_error propagated
// from the fit covariance. echo_found is false when no bin rises above 3x
// the median magnitude of the window (area is then 0).
struct PeakArea {
    double area = 0.0;
    double area_error = 0.0;
    bool echo_found = false;
    double center_hz = 0.0;
    double sigma_hz = 0.0;
    double amplitude = 0.0;
    double baseline = 0.0;
};

// FFT magnitude spectrum + Gaussian peak fit inside [f_lo, f_hi].
// Requires >= 64 samples and 0 <= f_lo < f_hi <= sample_rate/2.
PeakArea spectrum_peak_area(const BeatTrace& trace, double f_lo_hz, double f_hi_hz);

struct T2Estimate {
    double t2_s = 0.0;
    double ci_low_s = 0.0;
    double ci_high_s = 0.0;  // +inf when the slope CI touches zero
    double i0 = 0.0;
    double residual_rms = 0.0;  // rms of ln-area residuals
    int points_used = 0;
    int points_excluded = 0;               // non-positive areas dropped
    std::optional<double> t2_nonlinear_s;  // cross-check refit when requested
};

// Weighted linear least squares on ln(area) vs tau; T2 = -4/slope; 95% CI
// from the Student-t interval of the slope. Points with area <= 0 are
// excluded (counted); fewer than 3 usable points or a non-negative slope is
// an error.
T2Estimate fit_decay(const EchoDataset& data, bool nonlinear_refit = false);

// File interfaces. Dataset CSV: header tau_s,area[,area_err]. Trace file:
// "# sample_rate_hz=..." and "# tau_s=..." header lines, then
// sample_index,amplitude rows.
EchoDataset load_echo_dataset(const std::string& path);
BeatTrace load_beat_trace(const std::string& path);

} // namespace zefoz
