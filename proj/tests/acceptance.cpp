// Acceptance run: one PASS/FAIL line per criterion, exit status = number of failures.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sroloop/harness.hpp"
#include "sroloop/lti.hpp"

using namespace sroloop;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

constexpr double kFs = 16000.0;
constexpr int kNs = 2048;
constexpr int kLb = 39;
constexpr double kA1 = 0.5;
constexpr double kA2 = 0.99;
constexpr double kTf = 8.0;

double frame_period() { return kNs / kFs; }
double beta() { return pole_from_time_constant(frame_period(), kTf); }

Scenario default_scenario(SroProfile profile, std::uint64_t seed = 1, double duration_s = 180.0) {
    ScenarioConfig c;
    c.duration_s = duration_s;
    c.seed = seed;
    c.sro_profile = std::move(profile);
    return generate_scenario(c);
}

std::vector<DxcpEstimate> run_estimator(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    DxcpEstimator est;
    std::vector<DxcpEstimate> out;
    const Eigen::Index frames = std::min(a.size(), b.size()) / kNs;
    for (Eigen::Index f = 0; f < frames; ++f)
        out.push_back(est.process_frame({a.data() + f * kNs, std::size_t(kNs)}, {b.data() + f * kNs, std::size_t(kNs)}));
    return out;
}

double tail_mean(const std::vector<DxcpEstimate>& e, double window_s) {
    const double t_end = double(e.size()) * frame_period();
    double sum = 0.0;
    int n = 0;
    for (const auto& x : e)
        if (x.valid && double(x.frame_index) * frame_period() > t_end - window_s) {
            sum += x.sro_hat;
            ++n;
        }
    return sum / n;
}

// ---------------------------------------------------------------------------

Outcome robustness_margin() {
    const auto t0 = Clock::now();
    const auto g = build_gdxcp(kNs, kLb, kA1, kA2);
    const auto gh = build_gdxcp_hat(kA2);
    const auto f = build_f(beta(), 2);
    const auto grid = make_frequency_grid(1 << 16);
    const double margin = stability_margin(f, grid, model_uncertainty(g, gh, grid));
    const double t = since(t0);
    return {std::abs(margin - 0.1514) <= 0.002 && margin < 1.0 && t < 5.0,
            fmt("margin %.5f (target 0.1514 +/- 0.002), %.3f s on 2^16 points", margin, t)};
}

Outcome constants() {
    const double thr = step_threshold(kNs, kLb);
    const double tdx = dxcp_time_constant(frame_period(), kA2);
    const bool exact = thr == 1.0 / (double(kNs) * kLb) && tdx == frame_period() / std::log(1.0 / kA2);
    return {exact && std::abs(thr * 1e6 - 12.52) < 0.005 && std::abs(tdx - 12.73) <= 0.01,
            fmt("threshold %.4f ppm (12.52), T_dxcp %.4f s (12.73 +/- 0.01)", thr * 1e6, tdx)};
}

Outcome lti_loop_oracle() {
    const auto t0 = Clock::now();
    const double step = 40e-6;
    const int n = 3000;
    RationalFilterd plant = build_gdxcp_hat(kA2);
    ImcController imc(kA2, beta(), 2);
    Eigen::VectorXd residual(n);
    for (int l = 0; l < n; ++l) {
        const double u = imc.controller_filter().peek();
        residual(l) = step - u;
        imc.update(plant.step(residual(l)));
    }
    const auto f = build_f(beta(), 2);
    Eigen::VectorXd one_minus_f = f.denominator();
    one_minus_f.head(f.numerator().size()) -= f.numerator();
    const Eigen::VectorXd oracle =
        simulate(RationalFilterd(one_minus_f, f.denominator()), Eigen::VectorXd::Constant(n, step));
    const double dev = (residual - oracle).cwiseAbs().maxCoeff() / step;
    const double t = since(t0);
    return {dev < 1e-9 && t < 1.0, fmt("max |loop - (1-F)| = %.2e of step over %d frames, %.4f s", dev, n, t)};
}

Outcome open_loop_accuracy() {
    bool ok = true;
    std::ostringstream d;
    for (double ppm : {0.0, 5.0, 10.0, 20.0, 40.0}) {
        const RunResult r = run_open_loop(default_scenario(SroProfile(ppm * 1e-6)), PipelineConfig{});
        const double bias = r.metrics.steady_state_bias_ppm;
        const double limit = ppm == 0.0 ? 0.3 : 1.5;
        ok &= std::abs(bias) <= limit;
        d << fmt("%s%g ppm: bias %+.3f (<= %.1f)", ppm == 0.0 ? "" : "; ", ppm, bias, limit);
    }
    return {ok, d.str()};
}

std::vector<SummaryRow> g_closed_loop_rows;

Outcome closed_loop_accuracy() {
    bool ok = true;
    double worst_rmse = 0.0, worst_res = 0.0;
    for (double ppm : {20.0, 40.0, 100.0}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const RunResult r = run_closed_loop(default_scenario(SroProfile(ppm * 1e-6), seed), PipelineConfig{});
            double res = 0.0;
            for (const auto& row : r.trace)
                if (row.valid && row.time_s > 150.0)
                    res = std::max(res, std::abs(row.residual) * 1e6);
            ok &= r.metrics.final_rmse_ppm < 0.5 && res < 0.5;
            worst_rmse = std::max(worst_rmse, r.metrics.final_rmse_ppm);
            worst_res = std::max(worst_res, res);
            g_closed_loop_rows.push_back({seed, ppm, r.metrics});
        }
    }
    return {ok, fmt("15 runs: worst final-30 s RMSE %.4f ppm, worst |residual| %.4f ppm (both < 0.5)", worst_rmse,
                    worst_res)};
}

Outcome step_handling() {
    const double step_time = 60.0;
    const RunResult r = run_closed_loop(default_scenario(SroProfile::step(step_time, 0.0, 40e-6)), PipelineConfig{});
    const double tdx = dxcp_time_constant(frame_period(), kA2);
    // First frame whose analysis window holds post-step samples.
    std::int64_t onset = -1, fired_at = -1;
    int firings = 0;
    for (const auto& row : r.trace) {
        if (onset < 0 && row.time_s > step_time)
            onset = row.frame_index;
        if (row.detector_fired) {
            ++firings;
            if (fired_at < 0)
                fired_at = row.frame_index;
        }
    }
    if (fired_at < 0)
        return {false, "detector never fired"};
    const double latency = double(fired_at - onset);
    const double budget = tdx / frame_period() + 5.0;

    int hold = 0;
    for (auto it = r.trace.begin() + (fired_at - r.trace.front().frame_index); it != r.trace.end(); ++it) {
        if (it->mode != ControlMode::Hold)
            break;
        ++hold;
    }

    const double deadline = step_time + tdx + 3.0 * kTf;
    double late_err = 0.0;
    for (const auto& row : r.trace)
        if (row.valid && row.time_s >= deadline)
            late_err = std::max(late_err, std::abs(row.eps_total - row.sro_true) * 1e6);

    const bool ok = firings == 1 && latency >= 0 && latency <= budget && hold == 100 && late_err < 1.0;
    return {ok, fmt("fired %d time(s), %.0f frames after onset (<= %.1f); HOLD %d frames (100); "
                    "max |error| after %.2f s = %.4f ppm (< 1)",
                    firings, latency, budget, hold, deadline, late_err)};
}

Outcome multi_stage() {
    const MultiStageResult m = run_multi_stage(default_scenario(SroProfile(40e-6)), PipelineConfig{});
    bool decreasing = m.stages.size() == 3;
    std::ostringstream d;
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        if (i > 0)
            decreasing &= std::abs(m.stages[i].stage_estimate) < std::abs(m.stages[i - 1].stage_estimate);
        d << fmt("stage %d residual %.4f ppm; ", m.stages[i].stage, m.stages[i].stage_estimate * 1e6);
    }
    const double err = (m.total_estimate - 40e-6) * 1e6;
    d << fmt("final error %+.4f ppm (< 0.3)", err);
    return {decreasing && std::abs(err) < 0.3, d.str()};
}

// Flat band-limited periodic noise.
Eigen::VectorXd bandlimited_noise(int n, double f_max, std::uint64_t seed) {
    Eigen::FFT<double> fft;
    std::vector<double> x(static_cast<std::size_t>(n));
    Eigen::Map<Eigen::VectorXd>(x.data(), n) = white_noise(n, seed);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, x);
    for (int k = 0; k < n; ++k)
        if (double(std::min(k, n - k)) * kFs / n > f_max)
            spec[std::size_t(k)] = 0.0;
    fft.inv(x, spec);
    return Eigen::Map<Eigen::VectorXd>(x.data(), n);
}

Eigen::VectorXd circular_delay(const Eigen::VectorXd& x, double d) {
    const int n = int(x.size());
    Eigen::FFT<double> fft;
    std::vector<double> in(x.data(), x.data() + n), out;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, in);
    for (int k = 0; k < n; ++k) {
        const int kk = k <= n / 2 ? k : k - n;
        spec[std::size_t(k)] *= std::polar(1.0, -2.0 * M_PI * kk * d / n);
    }
    fft.inv(out, spec);
    return Eigen::Map<Eigen::VectorXd>(out.data(), n);
}

// Delay of b behind a around sample m: correlation maximum plus cross-spectrum phase slope.
double block_delay(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::Index m, int lo, int hi) {
    constexpr int block = 8192;
    int best = lo;
    double best_c = -1e300;
    for (int d = lo; d <= hi; ++d) {
        const double c = b.segment(m, block).dot(a.segment(m - d, block));
        if (c > best_c) {
            best_c = c;
            best = d;
        }
    }
    std::vector<double> xa(block), xb(block);
    for (int i = 0; i < block; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / block);
        xa[std::size_t(i)] = w * a(m + i - best);
        xb[std::size_t(i)] = w * b(m + i);
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> fa, fb;
    fft.fwd(fa, xa);
    fft.fwd(fb, xb);
    double num = 0.0, den = 0.0;
    for (int k = 1; k < int(0.3 * block); ++k) {
        const auto c = fb[std::size_t(k)] * std::conj(fa[std::size_t(k)]);
        num += std::abs(c) * k * std::arg(c);
        den += std::abs(c) * double(k) * k;
    }
    return best - num / den * block / (2.0 * M_PI);
}

Outcome properties() {
    std::ostringstream d;
    bool ok = true;

    // Scale invariance.
    {
        const Scenario s = default_scenario(SroProfile(20e-6), 1, 40.0);
        const auto e0 = run_estimator(s.z1, s.z2);
        double worst = 0.0;
        for (double g : {0.01, 3.7, 250.0}) {
            const auto e1 = run_estimator(g * s.z1, g * s.z2);
            for (std::size_t i = 0; i < e0.size(); ++i)
                worst = std::max(worst, std::abs(e0[i].sro_hat - e1[i].sro_hat) * 1e6);
        }
        ok &= worst <= 1e-9;
        d << fmt("scale %.1e ppm (<= 1e-9); ", worst);
    }
    // STO invariance and realness.
    {
        ScenarioConfig c;
        c.duration_s = 120.0;
        c.sro_profile = SroProfile(20e-6);
        const Scenario s0 = generate_scenario(c);
        c.sto_samples = 100;
        const Scenario s1 = generate_scenario(c);
        const auto e0 = run_estimator(s0.z1, s0.z2);
        const auto e1 = run_estimator(s1.z1, s1.z2);
        const double shift = std::abs(tail_mean(e1, 30.0) - tail_mean(e0, 30.0)) * 1e6;
        double residue = 0.0;
        for (const auto* e : {&e0, &e1})
            for (const auto& x : *e)
                if (x.valid)
                    residue = std::max(residue, x.imag_residue);
        ok &= shift < 0.2 && residue < 1e-10;
        d << fmt("STO shift %.4f ppm (< 0.2); imag residue %.1e (< 1e-10); ", shift, residue);
    }
    // Resampler inverse of the imposition.
    {
        const Eigen::VectorXd x = bandlimited_noise(1 << 17, 6000.0, 17);
        double worst = 1e300;
        for (double eps : {40e-6, -100e-6}) {
            const Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
            const SincKernel k{17};
            const int extra = 64;
            StreamResampler rs(k, extra);
            rs.push({y.data(), std::size_t(y.size())});
            const int n_out = int(y.size() - 600);
            const Eigen::VectorXd z = rs.produce(eps, n_out);
            const Eigen::VectorXd ref = circular_delay(x, 256.0 + (k.half_width() + extra) * (1.0 + eps));
            const Eigen::Index lo = 2000, len = n_out - 4000;
            const double snr = 10.0 * std::log10(ref.segment(lo, len).squaredNorm() /
                                                 (z.segment(lo, len) - ref.segment(lo, len)).squaredNorm());
            worst = std::min(worst, snr);
        }
        ok &= worst > 55.0;
        d << fmt("ASRC inverse %.2f dB (> 55); ", worst);
    }
    // Drift law: delay grows by ε per sample.
    {
        const double eps = 100e-6;
        const Eigen::VectorXd x = white_noise(Eigen::Index(60 * kFs), 21);
        const Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
        std::vector<double> t, lag;
        for (Eigen::Index m = 20000; m + 8192 < y.size() - 1000; m += 40000) {
            t.push_back(double(m) + 4096.0);
            const double expected = 256.0 - eps * t.back();
            lag.push_back(block_delay(x, y, m, int(std::floor(expected)) - 3, int(std::floor(expected)) + 4));
        }
        const double tm = std::accumulate(t.begin(), t.end(), 0.0) / double(t.size());
        const double lm = std::accumulate(lag.begin(), lag.end(), 0.0) / double(lag.size());
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            sxy += (t[i] - tm) * (lag[i] - lm);
            sxx += (t[i] - tm) * (t[i] - tm);
        }
        const double rel = std::abs(-sxy / sxx - eps) / eps;
        ok &= rel < 0.01;
        d << fmt("drift slope error %.3f%% (< 1%%)", rel * 100.0);
    }
    return {ok, d.str()};
}

Outcome real_time_factor() {
    if (g_closed_loop_rows.empty())
        return {false, "no closed-loop runs available"};
    std::ofstream os("acceptance_summary.csv");
    write_summary_csv(os, g_closed_loop_rows);
    bool ok = bool(os);
    double worst = 0.0, worst_wo = 0.0;
    for (const auto& r : g_closed_loop_rows) {
        ok &= r.metrics.rtf < 0.5 && r.metrics.rtf_without_resampler < r.metrics.rtf;
        worst = std::max(worst, r.metrics.rtf);
        worst_wo = std::max(worst_wo, r.metrics.rtf_without_resampler);
    }
    return {ok, fmt("worst RTF %.4f (< 0.5), worst RTF without resampler %.4f (< RTF); "
                    "written to acceptance_summary.csv",
                    worst, worst_wo)};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"robustness margin", robustness_margin},
        {"constants", constants},
        {"LTI loop oracle", lti_loop_oracle},
        {"open-loop accuracy", open_loop_accuracy},
        {"closed-loop accuracy", closed_loop_accuracy},
        {"step handling", step_handling},
        {"multi-stage", multi_stage},
        {"property suites", properties},
        {"real-time factor", real_time_factor},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str(), since(t0));
        std::fflush(stdout);
    }
    return failures;
}
