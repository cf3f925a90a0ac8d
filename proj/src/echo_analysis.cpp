#include "zefoz/echo_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <unsupported/Eigen/FFT>

#include "zefoz/util.hpp"

namespace zefoz {

namespace {

// --- generic Levenberg-Marquardt on small dense problems ------------------

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // sigma^2 (J^T J)^-1 with sigma^2 = chi2/dof
    double chi2 = 0.0;
    bool converged = false;
};

// model(params, x, &value, &jacobian_row)
template <typename Model>
LmResult levenberg_marquardt(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                             Eigen::VectorXd p, Model&& model, int max_iter = 200,
                             double tol = 1e-10) {
    const Eigen::Index m = x.size();
    const Eigen::Index np = p.size();

    auto evaluate = [&](const Eigen::VectorXd& params, Eigen::VectorXd& resid,
                        Eigen::MatrixXd& jac) {
        resid.resize(m);
        jac.resize(m, np);
        Eigen::VectorXd row(np);
        for (Eigen::Index i = 0; i < m; ++i) {
            double v;
            model(params, x(i), v, row);
            resid(i) = y(i) - v;
            jac.row(i) = row;
        }
        return resid.squaredNorm();
    };

    Eigen::VectorXd resid;
    Eigen::MatrixXd jac;
    double chi2 = evaluate(p, resid, jac);
    double lambda = 1e-3;
    // absolute floor: once chi2 sits at the numerical noise of the data it
    // cannot shrink by a meaningful relative amount anymore
    const double chi2_floor = 1e-22 * std::max(y.squaredNorm(), 1e-300);

    LmResult out;
    for (int it = 0; it < max_iter; ++it) {
        if (chi2 <= chi2_floor) {
            out.converged = true;
            break;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * resid;
        Eigen::MatrixXd damped = jtj;
        for (Eigen::Index k = 0; k < np; ++k)
            damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);

        const Eigen::VectorXd step = damped.ldlt().solve(jtr);
        const Eigen::VectorXd trial = p + step;
        Eigen::VectorXd tresid;
        Eigen::MatrixXd tjac;
        const double tchi2 = evaluate(trial, tresid, tjac);

        if (tchi2 < chi2) {
            const double drop = chi2 - tchi2;
            p = trial;
            resid.swap(tresid);
            jac.swap(tjac);
            chi2 = tchi2;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (drop <= tol * chi2 + chi2_floor) {
                out.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) {
                // stuck at a stationary point; accept if the fit is tight
                out.converged = chi2 <= 1e-12 * std::max(y.squaredNorm(), 1e-300);
                break;
            }
        }
    }

    out.params = p;
    out.chi2 = chi2;
    const double dof = static_cast<double>(m - np);
    const double sigma2 = dof > 0 ? chi2 / dof : 0.0;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    out.covariance = sigma2 * jtj.ldlt().solve(Eigen::MatrixXd::Identity(np, np));
    return out;
}

std::vector<double> magnitude_spectrum(const std::vector<double>& samples) {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    std::vector<double> in = samples;
    fft.fwd(freq, in);
    const std::size_t half = samples.size() / 2;
    std::vector<double> mag(half + 1);
    for (std::size_t k = 0; k <= half; ++k) mag[k] = std::abs(freq[k]);
    return mag;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (hi + v[mid - 1]);
}

} // namespace

PeakArea spectrum_peak_area(const BeatTrace& trace, double f_lo_hz, double f_hi_hz) {
    if (trace.samples.size() < 64) throw Error("beat trace needs at least 64 samples");
    if (trace.sample_rate_hz <= 0.0) throw Error("sample rate must be positive");
    const double nyquist = 0.5 * trace.sample_rate_hz;
    if (f_lo_hz < 0.0 || f_hi_hz <= f_lo_hz || f_hi_hz > nyquist)
        throw Error("window must satisfy 0 <= f_lo < f_hi <= sample_rate/2");

    const std::vector<double> mag = magnitude_spectrum(trace.samples);
    const double df = trace.sample_rate_hz / static_cast<double>(trace.samples.size());

    std::vector<double> f, m;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        const double fk = df * static_cast<double>(k);
        if (fk >= f_lo_hz && fk <= f_hi_hz) {
            f.push_back(fk);
            m.push_back(mag[k]);
        }
    }
    if (f.size() < 6) throw Error("window too narrow: fewer than 6 spectrum bins");

    PeakArea out;
    const double med = median(m);
    std::size_t kmax = 0;
    for (std::size_t k = 1; k < m.size(); ++k)
        if (m[k] > m[kmax]) kmax = k;
    const double peak = m[kmax];

    // detection floor: 3x the median magnitude of the window, raised by a
    // robust-sigma guard so the extreme-value tail of a wide noise-only
    // window does not fake a peak
    std::vector<double> dev(m.size());
    for (std::size_t k = 0; k < m.size(); ++k) dev[k] = std::abs(m[k] - med);
    const double rsigma = 1.4826 * median(dev);
    const double floor = std::max(3.0 * med, med + 6.0 * rsigma);
    if (!(peak > floor) || peak <= 0.0) {
        out.echo_found = false;
        return out;
    }

    // initialization: max bin -> center, half-max width -> sigma, max -> amplitude
    const double c0 = *std::min_element(m.begin(), m.end());
    const double a0 = peak - c0;
    const double half = c0 + 0.5 * a0;
    std::size_t klo = kmax, khi = kmax;
    while (klo > 0 && m[klo - 1] >= half) --klo;
    while (khi + 1 < m.size() && m[khi + 1] >= half) ++khi;
    double sigma0 = (f[khi] - f[klo]) / 2.3548;  // FWHM -> sigma
    if (sigma0 <= 0.0) sigma0 = df;

    Eigen::VectorXd xs = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
    Eigen::VectorXd ys = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    Eigen::VectorXd p0(4);
    p0 << a0, f[kmax], sigma0, c0;

    auto gauss_model = [](const Eigen::VectorXd& p, double x, double& v, Eigen::VectorXd& jrow) {
        const double a = p(0), f0 = p(1), s = p(2), c = p(3);
        const double z = (x - f0) / s;
        const double e = std::exp(-0.5 * z * z);
        v = a * e + c;
        jrow(0) = e;
        jrow(1) = a * e * z / s;
        jrow(2) = a * e * z * z / s;
        jrow(3) = 1.0;
    };

    const LmResult fit = levenberg_marquardt(xs, ys, p0, gauss_model);
    if (!fit.converged) throw Error("Gaussian peak fit did not converge");

    const double a = fit.params(0);
    const double s = std::abs(fit.params(2));
    const double sqrt2pi = std::sqrt(2.0 * kPi);

    out.echo_found = true;
    out.amplitude = a;
    out.center_hz = fit.params(1);
    out.sigma_hz = s;
    out.baseline = fit.params(3);
    out.area = a * s * sqrt2pi;
    // residual covariance propagated through area = a sigma sqrt(2 pi)
    const double var = 2.0 * kPi *
                       (s * s * fit.covariance(0, 0) + a * a * fit.covariance(2, 2) +
                        2.0 * a * s * fit.covariance(0, 2));
    out.area_error = std::sqrt(std::max(0.0, var));
    return out;
}

T2Estimate fit_decay(const EchoDataset& data, bool nonlinear_refit) {
    std::vector<const EchoPoint*> usable;
    int excluded = 0;
    double prev_tau = -std::numeric_limits<double>::infinity();
    for (const auto& pt : data.points) {
        if (!(pt.tau_s > prev_tau)) throw Error("dataset taus must be strictly increasing");
        prev_tau = pt.tau_s;
        if (!std::isfinite(pt.area)) throw Error("dataset contains non-finite area");
        if (pt.area <= 0.0) {
            ++excluded;  // cannot take the log; dropped with a count
            continue;
        }
        usable.push_back(&pt);
    }
    const int n = static_cast<int>(usable.size());
    if (n < 3) throw Error("decay fit needs at least 3 points with positive area");

    // uniform weights unless every point carries a positive error
    bool have_errors = true;
    for (const auto* pt : usable)
        if (!(pt->area_error > 0.0)) have_errors = false;

    // weighted linear LS on ln(area) = b + s tau
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (const auto* pt : usable) {
        const double y = std::log(pt->area);
        const double sigma_ln = have_errors ? pt->area_error / pt->area : 1.0;
        const double w = 1.0 / (sigma_ln * sigma_ln);
        sw += w;
        swx += w * pt->tau_s;
        swy += w * y;
        swxx += w * pt->tau_s * pt->tau_s;
        swxy += w * pt->tau_s * y;
    }
    const double det = sw * swxx - swx * swx;
    if (det <= 0.0) throw Error("decay fit is singular (degenerate tau grid)");
    const double slope = (sw * swxy - swx * swy) / det;
    const double intercept = (swxx * swy - swx * swxy) / det;

    if (slope >= 0.0) throw Error("no measurable decay: fitted slope is non-negative");

    double chi2 = 0.0, rss = 0.0;
    for (const auto* pt : usable) {
        const double y = std::log(pt->area);
        const double r = y - (intercept + slope * pt->tau_s);
        const double sigma_ln = have_errors ? pt->area_error / pt->area : 1.0;
        chi2 += (r / sigma_ln) * (r / sigma_ln);
        rss += r * r;
    }
    const int dof = n - 2;
    const double sigma2 = chi2 / dof;
    const double var_slope = sigma2 * sw / det;

    const boost::math::students_t_distribution<double> tdist(dof);
    const double tq = boost::math::quantile(tdist, 0.975);
    const double half_width = tq * std::sqrt(std::max(0.0, var_slope));
    const double s_lo = slope - half_width;
    const double s_hi = slope + half_width;

    T2Estimate out;
    out.t2_s = -4.0 / slope;
    out.ci_low_s = -4.0 / s_lo;  // s_lo < slope < 0, so this is the lower bound
    out.ci_high_s = s_hi < 0.0 ? -4.0 / s_hi : std::numeric_limits<double>::infinity();
    out.i0 = std::exp(intercept);
    out.residual_rms = std::sqrt(rss / n);
    out.points_used = n;
    out.points_excluded = excluded;

    if (nonlinear_refit) {
        Eigen::VectorXd xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            xs(i) = usable[i]->tau_s;
            ys(i) = usable[i]->area;
        }
        Eigen::VectorXd p0(2);
        p0 << out.i0, out.t2_s;
        auto exp_model = [](const Eigen::VectorXd& p, double x, double& v, Eigen::VectorXd& jrow) {
            const double i0 = p(0), t2 = p(1);
            const double e = std::exp(-4.0 * x / t2);
            v = i0 * e;
            jrow(0) = e;
            jrow(1) = i0 * e * 4.0 * x / (t2 * t2);
        };
        const LmResult refit = levenberg_marquardt(xs, ys, p0, exp_model);
        if (refit.converged && refit.params(1) > 0.0) out.t2_nonlinear_s = refit.params(1);
    }
    return out;
}

EchoDataset load_echo_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file: " + path);

    EchoDataset out;
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("tau_s,area", 0) != 0)
                throw Error(path + ": expected header 'tau_s,area[,area_err]'");
            header_seen = true;
            continue;
        }
        std::istringstream fields(line);
        std::string tok;
        EchoPoint pt;
        try {
            if (!std::getline(fields, tok, ',')) throw Error("missing tau");
            pt.tau_s = std::stod(tok);
            if (!std::getline(fields, tok, ',')) throw Error("missing area");
            pt.area = std::stod(tok);
            if (std::getline(fields, tok, ',') && !tok.empty()) pt.area_error = std::stod(tok);
        } catch (const std::exception&) {
            throw Error(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
        }
        if (!std::isfinite(pt.tau_s) || !std::isfinite(pt.area) || pt.area_error < 0.0)
            throw Error(path + ":" + std::to_string(lineno) + ": non-finite or negative values");
        out.points.push_back(pt);
    }
    if (!header_seen) throw Error(path + ": empty dataset");
    return out;
}

BeatTrace load_beat_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open trace file: " + path);

    BeatTrace out;
    bool have_rate = false, have_tau = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto parse_kv = [&](const std::string& key, double& dst, bool& flag) {
                const std::string prefix = "# " + key + "=";
                if (line.rfind(prefix, 0) == 0) {
                    dst = std::stod(line.substr(prefix.size()));
                    flag = true;
                }
            };
            parse_kv("sample_rate_hz", out.sample_rate_hz, have_rate);
            parse_kv("tau_s", out.tau_s, have_tau);
            continue;
        }
        if (line.rfind("sample_index", 0) == 0) continue;
        std::istringstream fields(line);
        std::string tok;
        try {
            if (!std::getline(fields, tok, ',')) throw Error("missing index");
            if (!std::getline(fields, tok, ',')) throw Error("missing amplitude");
            out.samples.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw Error(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
        }
    }
    if (!have_rate) throw Error(path + ": missing '# sample_rate_hz=' header");
    if (!have_tau) throw Error(path + ": missing '# tau_s=' header");
    if (out.samples.size() < 64) throw Error(path + ": trace needs at least 64 samples");
    return out;
}

} // namespace zefoz
