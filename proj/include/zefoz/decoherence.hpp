#pragma once

#include <cstdint>
#include <span>

#include "zefoz/echo_analysis.hpp"
#include "zefoz/sensitivity.hpp"

namespace zefoz {

// (pi T2)^-1 = |S1 . dB| + |dB . S2 . dB|, all terms as magnitudes; an
// exactly zero total rate yields the infinite-T2 sentinel (t2_s empty).
struct T2Prediction {
    std::optional<double> t2_s;
    double rate_linear_hz = 0.0;
    double rate_quadratic_hz = 0.0;
    NoiseVector noise;
    TransitionSensitivity inputs;

    bool infinite() const { return !t2_s.has_value(); }
    double total_rate_hz() const { return rate_linear_hz + rate_quadratic_hz; }
};

T2Prediction predict_t2(const TransitionSensitivity& ts, const NoiseVector& noise);

// Monte-Carlo dephasing from a fractional field spread: B = B0 (1 + eps),
// eps ~ N(0, spread) independently per component, counter-seeded. Samples
// hitting a degeneracy at the transition levels are discarded and counted.
struct InhomogeneityResult {
    double sigma_nu_hz = 0.0;
    std::optional<double> t2_star_s;  // 1/(pi sigma); empty when sigma = 0
    int samples_used = 0;
    int samples_discarded = 0;
};
InhomogeneityResult inhomogeneity_dephasing(const SpinSystem& sys, const FieldVector& B0,
                                            double fractional_spread, TransitionId t,
                                            int samples = 10000, std::uint64_t seed = 20180730,
                                            const Constants& c = {});

// Test-data generator: area(tau) = i0 exp(-4 tau / t2) (1 + eta),
// eta ~ N(0, relative_noise), seeded; area_error carries the true sigma.
EchoDataset synthesize_echo(double t2_s, double i0, std::span<const double> tau_s,
                            double relative_noise, std::uint64_t seed);

// T2 <= 2 T1 bound (boundary inclusive).
struct T1CeilingCheck {
    bool pass = false;
    double margin_s = 0.0;  // 2 T1 - T2
};
T1CeilingCheck t1_ceiling(double t2_s, double t1_s);

// CSV row per the interface:
// transition,nu_mhz,grad_mhz_per_t,curv_max_mhz_per_t2,noise_ut,mode,t2_s,infinite_flag
std::string predictions_to_csv(const std::vector<T2Prediction>& rows,
                               const std::string& metadata_header);

} // namespace zefoz
