#include "zefoz/decoherence.hpp"

#include <cmath>
#include <sstream>

#include "zefoz/util.hpp"

namespace zefoz {

T2Prediction predict_t2(const TransitionSensitivity& ts, const NoiseVector& noise) {
    if (noise.magnitude_t < 0.0) throw Error("noise magnitude must be >= 0");

    const double dB = noise.magnitude_t;
    double lin_mhz = 0.0, quad_mhz = 0.0;
    switch (noise.mode) {
        case NoiseVector::Mode::WorstCase:
            lin_mhz = ts.s1.norm() * dB;
            quad_mhz = dB * dB * spectral_radius_sym(ts.s2);
            break;
        case NoiseVector::Mode::IsotropicAverage:
            // <|S1.n|> over the sphere is |S1|/2; <n.S2.n> is tr(S2)/3
            lin_mhz = 0.5 * ts.s1.norm() * dB;
            quad_mhz = dB * dB * std::abs(ts.s2.trace()) / 3.0;
            break;
        case NoiseVector::Mode::FixedDirection: {
            const Eigen::Vector3d n = noise.direction.normalized();
            lin_mhz = std::abs(ts.s1.dot(n)) * dB;
            quad_mhz = dB * dB * std::abs(n.dot(ts.s2 * n));
            break;
        }
    }

    T2Prediction out;
    out.rate_linear_hz = lin_mhz * 1e6;
    out.rate_quadratic_hz = quad_mhz * 1e6;
    out.noise = noise;
    out.inputs = ts;
    const double total = out.rate_linear_hz + out.rate_quadratic_hz;
    if (total > 0.0) out.t2_s = 1.0 / (kPi * total);
    return out;
}

InhomogeneityResult inhomogeneity_dephasing(const SpinSystem& sys, const FieldVector& B0,
                                            double fractional_spread, TransitionId t,
                                            int samples, std::uint64_t seed, const Constants& c) {
    if (fractional_spread < 0.0) throw Error("fractional spread must be >= 0");
    if (samples < 10) throw Error("at least 10 samples required");

    InhomogeneityResult out;
    if (fractional_spread == 0.0) {
        out.samples_used = samples;
        return out;  // sigma = 0, infinite T2* sentinel
    }

    // Welford accumulation: the spread is many orders below nu itself, a
    // naive sum-of-squares cancels catastrophically.
    double mean = 0.0, m2 = 0.0;
    int used = 0;
    for (int i = 0; i < samples; ++i) {
        FieldVector B = B0;
        for (int p = 0; p < 3; ++p)
            B(p) *= 1.0 + fractional_spread * gaussian(seed, 3 * static_cast<std::uint64_t>(i) + p);
        const EigenSolution sol = eigensolve(build_hamiltonian(sys, B, c), B);
        if (sol.gap(t.lower) <= 1e-6 || sol.gap(t.upper) <= 1e-6) {
            ++out.samples_discarded;
            continue;
        }
        const double nu = sol.energies(t.upper) - sol.energies(t.lower);
        ++used;
        const double delta = nu - mean;
        mean += delta / used;
        m2 += delta * (nu - mean);
    }
    if (used < 2) throw Error("too few usable samples (degeneracies discarded " +
                              std::to_string(out.samples_discarded) + ")");
    out.samples_used = used;
    out.sigma_nu_hz = std::sqrt(std::max(0.0, m2 / used)) * 1e6;
    if (out.sigma_nu_hz > 0.0) out.t2_star_s = 1.0 / (kPi * out.sigma_nu_hz);
    return out;
}

EchoDataset synthesize_echo(double t2_s, double i0, std::span<const double> tau_s,
                            double relative_noise, std::uint64_t seed) {
    if (t2_s <= 0.0) throw Error("t2 must be positive");
    EchoDataset out;
    out.points.reserve(tau_s.size());
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < tau_s.size(); ++k) {
        if (tau_s[k] <= prev) throw Error("tau grid must be strictly increasing");
        prev = tau_s[k];
        const double model = i0 * std::exp(-4.0 * tau_s[k] / t2_s);
        const double eta = relative_noise == 0.0 ? 0.0 : relative_noise * gaussian(seed, k);
        out.points.push_back({tau_s[k], model * (1.0 + eta), std::abs(model) * relative_noise});
    }
    return out;
}

T1CeilingCheck t1_ceiling(double t2_s, double t1_s) {
    if (t1_s <= 0.0) throw Error("t1 must be positive");
    T1CeilingCheck out;
    out.margin_s = 2.0 * t1_s - t2_s;
    out.pass = t2_s <= 2.0 * t1_s;
    return out;
}

std::string predictions_to_csv(const std::vector<T2Prediction>& rows,
                               const std::string& metadata_header) {
    std::ostringstream os;
    os << metadata_header;
    os << "transition,nu_mhz,grad_mhz_per_t,curv_max_mhz_per_t2,noise_ut,mode,t2_s,"
          "infinite_flag\n";
    for (const auto& r : rows) {
        os << r.inputs.transition.lower << '-' << r.inputs.transition.upper << ','
           << format_double(r.inputs.nu_mhz) << ',' << format_double(r.inputs.s1.norm()) << ','
           << format_double(spectral_radius_sym(r.inputs.s2)) << ','
           << format_double(r.noise.magnitude_t * 1e6) << ',' << to_string(r.noise.mode) << ',';
        // sentinel: empty cell + flag, never a float infinity
        if (r.infinite())
            os << ",1\n";
        else
            os << format_double(*r.t2_s) << ",0\n";
    }
    return os.str();
}

} // namespace zefoz
