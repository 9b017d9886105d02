#include "sroloop/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

namespace sroloop {

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

std::int64_t frame_count(const Scenario& s, const PipelineConfig& c) {
    const auto n = std::min(s.z1.size(), s.z2.size());
    return n / c.stft.frame_shift;
}

void check_scenario(const Scenario& s, const PipelineConfig& c) {
    if (frame_count(s, c) < 1)
        throw ParameterError("pipeline: scenario shorter than one frame");
    if (s.sample_rate != c.stft.sample_rate)
        throw ParameterError("pipeline: scenario and STFT sample rates differ");
}

std::span<const double> frame_of(const Eigen::VectorXd& x, std::int64_t index, int shift) {
    return {x.data() + index * shift, std::size_t(shift)};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParameterError("setting '" + key + "': not a number: " + v);
    }
}

int to_int(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d))
        throw ParameterError("setting '" + key + "': not an integer: " + v);
    return int(d);
}

} // namespace

void PipelineConfig::validate(double duration_s) const {
    stft.validate();
    dxcp.validate(stft);
    resampler.validate();
    if (stages < 1)
        throw ParameterError("PipelineConfig: stages must be >= 1");
    if (!(metrics_window_s > 0.0) || metrics_window_s > duration_s)
        throw ParameterError("PipelineConfig: metrics window must be positive and not exceed the duration");
    if (resampler_headroom < 0)
        throw ParameterError("PipelineConfig: resampler headroom must be >= 0");
    if (controller.order < 2 || !(controller.time_constant_s > 0.0))
        throw ParameterError("PipelineConfig: controller needs order >= 2 and a positive time constant");
}

// ---------------------------------------------------------------------------

RunResult run_open_loop(const Scenario& scenario, const PipelineConfig& config) {
    check_scenario(scenario, config);
    const double duration = double(std::min(scenario.z1.size(), scenario.z2.size())) / scenario.sample_rate;
    config.validate(duration);

    const int ns = config.stft.frame_shift;
    const std::int64_t frames = frame_count(scenario, config);
    DxcpEstimator dxcp(config.stft, config.dxcp);
    StreamResampler resampler(config.resampler, config.resampler_headroom);

    RunResult result;
    result.trace.reserve(std::size_t(frames));
    if (config.keep_output)
        result.synchronized.resize(frames * ns);

    Timing timing;
    timing.resampler_timed = config.time_resampler;
    double eps_prev = 0.0;
    for (std::int64_t l = 0; l < frames; ++l) {
        const auto t0 = Clock::now();
        const DxcpEstimate est = dxcp.process_frame(frame_of(scenario.z1, l, ns), frame_of(scenario.z2, l, ns));
        const auto t1 = Clock::now();
        resampler.push(frame_of(scenario.z2, l, ns));
        Eigen::VectorXd out = resampler.produce(eps_prev, ns);
        const auto t2 = Clock::now();
        if (config.keep_output)
            result.synchronized.segment(l * ns, ns) = out;
        eps_prev = est.sro_hat;

        timing.total_s += seconds(t2 - t0);
        timing.without_resampler_s += seconds(t1 - t0);

        TraceRow row;
        row.frame_index = est.frame_index;
        row.time_s = double((l + 1) * ns) / scenario.sample_rate;
        row.sro_true = scenario.truth.at(row.time_s);
        row.sro_hat = est.sro_hat;
        row.tau_delta_hat = est.tau_delta_hat;
        row.valid = est.valid;
        row.peak_quality = est.peak_quality;
        row.eps_total = est.sro_hat;
        row.residual = est.sro_hat;
        result.trace.push_back(row);
    }
    result.metrics = compute_metrics(result.trace, scenario.truth, config.metrics_window_s, duration, timing);
    return result;
}

RunResult run_closed_loop(const Scenario& scenario, const PipelineConfig& config) {
    check_scenario(scenario, config);
    const double duration = double(std::min(scenario.z1.size(), scenario.z2.size())) / scenario.sample_rate;
    config.validate(duration);

    const int ns = config.stft.frame_shift;
    const std::int64_t frames = frame_count(scenario, config);
    DxcpEstimator dxcp(config.stft, config.dxcp);
    StreamResampler resampler(config.resampler, config.resampler_headroom);
    Supervisor supervisor(make_supervisor_config(config.stft, config.dxcp, config.controller));

    RunResult result;
    result.trace.reserve(std::size_t(frames));
    if (config.keep_output)
        result.synchronized.resize(frames * ns);

    Timing timing;
    timing.resampler_timed = config.time_resampler;
    double eps_prev = 0.0;
    for (std::int64_t l = 0; l < frames; ++l) {
        const auto t0 = Clock::now();
        resampler.push(frame_of(scenario.z2, l, ns));
        const Eigen::VectorXd synced = resampler.produce(eps_prev, ns);
        const auto t1 = Clock::now();
        const DxcpEstimate est = dxcp.process_frame(frame_of(scenario.z1, l, ns), {synced.data(), std::size_t(ns)});
        const SupervisorOutput ctl = supervisor.update(est);
        const auto t2 = Clock::now();
        if (config.keep_output)
            result.synchronized.segment(l * ns, ns) = synced;

        timing.total_s += seconds(t2 - t0);
        timing.without_resampler_s += seconds(t2 - t1);

        if (!std::isfinite(ctl.eps_total) || std::abs(ctl.eps_total) > config.divergence_limit) {
            std::ostringstream msg;
            msg << "closed loop diverged at frame " << est.frame_index << ": eps_hat = " << ctl.eps_total * 1e6
                << " ppm";
            throw DivergenceError(msg.str());
        }
        eps_prev = ctl.eps_total;

        TraceRow row;
        row.frame_index = est.frame_index;
        row.time_s = double((l + 1) * ns) / scenario.sample_rate;
        row.sro_true = scenario.truth.at(row.time_s);
        row.sro_hat = est.sro_hat;
        row.tau_delta_hat = est.tau_delta_hat;
        row.valid = est.valid;
        row.peak_quality = est.peak_quality;
        row.mode = ctl.mode;
        row.eps_op = ctl.eps_op;
        row.eps_imc = ctl.eps_imc;
        row.eps_total = ctl.eps_total;
        row.residual = ctl.residual;
        row.detector_fired = ctl.detector_fired;
        result.trace.push_back(row);
    }
    result.metrics = compute_metrics(result.trace, scenario.truth, config.metrics_window_s, duration, timing);
    return result;
}

MultiStageResult run_multi_stage(const Scenario& scenario, const PipelineConfig& config) {
    check_scenario(scenario, config);
    const double duration = double(std::min(scenario.z1.size(), scenario.z2.size())) / scenario.sample_rate;
    config.validate(duration);

    const int ns = config.stft.frame_shift;
    const std::int64_t frames = frame_count(scenario, config);
    MultiStageResult result;
    double total = 0.0;
    Timing timing;
    timing.resampler_timed = config.time_resampler;

    for (int stage = 1; stage <= config.stages; ++stage) {
        const auto t0 = Clock::now();
        const Eigen::VectorXd z2 = stage == 1 ? scenario.z2 : compensate_sro(scenario.z2, total, config.resampler);
        const auto t1 = Clock::now();

        DxcpEstimator dxcp(config.stft, config.dxcp);
        RunResult run;
        run.trace.reserve(std::size_t(frames));
        std::vector<double> window;
        for (std::int64_t l = 0; l < frames; ++l) {
            const DxcpEstimate est = dxcp.process_frame(frame_of(scenario.z1, l, ns), frame_of(z2, l, ns));
            TraceRow row;
            row.frame_index = est.frame_index;
            row.time_s = double((l + 1) * ns) / scenario.sample_rate;
            row.sro_true = scenario.truth.at(row.time_s);
            row.sro_hat = est.sro_hat;
            row.tau_delta_hat = est.tau_delta_hat;
            row.valid = est.valid;
            row.peak_quality = est.peak_quality;
            row.eps_op = total;
            row.residual = est.sro_hat;
            row.eps_total = est.valid ? (1.0 + total) * (1.0 + est.sro_hat) - 1.0 : total;
            row.eps_imc = row.eps_total - total;
            run.trace.push_back(row);
            if (est.valid && row.time_s > duration - config.metrics_window_s)
                window.push_back(est.sro_hat);
        }
        const auto t2 = Clock::now();
        timing.total_s += seconds(t2 - t0);
        timing.without_resampler_s += seconds(t2 - t1);

        if (window.empty())
            throw ParameterError("run_multi_stage: no valid estimates in the metrics window");
        StageResult sr;
        sr.stage = stage;
        sr.stage_estimate = median(window);
        total = (1.0 + total) * (1.0 + sr.stage_estimate) - 1.0;
        sr.total_estimate = total;
        sr.error = total - scenario.truth.at(duration);
        result.stages.push_back(sr);
        result.last_stage = std::move(run);
        if (config.keep_output)
            result.last_stage.synchronized = z2;
    }
    result.total_estimate = total;
    result.last_stage.metrics =
        compute_metrics(result.last_stage.trace, scenario.truth, config.metrics_window_s, duration, timing);
    return result;
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
    if (values.empty())
        throw ParameterError("median: empty sequence");
    const auto mid = values.begin() + std::ptrdiff_t(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (values.size() % 2 == 1)
        return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

MetricsReport compute_metrics(const Trace& trace, const SroProfile& truth, double window_s,
                              double duration_s, const Timing& timing) {
    if (trace.empty())
        throw ParameterError("compute_metrics: empty trace");
    if (!(duration_s > 0.0))
        throw ParameterError("compute_metrics: duration must be positive");
    MetricsReport m;
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    const double window_start = duration_s - window_s;
    for (const auto& row : trace) {
        if (!row.valid || row.time_s <= window_start)
            continue;
        const double err = (row.eps_total - truth.at(row.time_s)) * 1e6;
        sum += err;
        sum_sq += err * err;
        ++count;
    }
    m.window_frames = count;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.final_rmse_ppm = count ? std::sqrt(sum_sq / double(count)) : nan;
    m.steady_state_bias_ppm = count ? sum / double(count) : nan;

    // Walk backwards to the start of the final run of in-tolerance valid frames.
    m.settled = false;
    m.settling_time_s = nan;
    bool any_valid = false;
    for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
        if (!it->valid)
            continue;
        if (std::abs(it->eps_total - truth.at(it->time_s)) * 1e6 >= 1.0)
            break;
        any_valid = true;
        m.settling_time_s = it->time_s;
    }
    m.settled = any_valid;

    m.rtf = timing.total_s / duration_s;
    m.rtf_without_resampler = timing.resampler_timed ? timing.without_resampler_s / duration_s : nan;
    return m;
}

// ---------------------------------------------------------------------------

void write_trace_csv(std::ostream& os, const Trace& trace) {
    os << "frame_index,time_s,sro_true_ppm,sro_hat_ppm,tau_delta_hat,valid,peak_quality,mode,eps_op_ppm,"
          "eps_imc_ppm,eps_total_ppm,residual_ppm,detector_fired\n";
    os << std::setprecision(12);
    for (const auto& r : trace) {
        os << r.frame_index << ',' << r.time_s << ',' << r.sro_true * 1e6 << ',' << r.sro_hat * 1e6 << ','
           << r.tau_delta_hat << ',' << int(r.valid) << ',' << r.peak_quality << ',' << to_string(r.mode) << ','
           << r.eps_op * 1e6 << ',' << r.eps_imc * 1e6 << ',' << r.eps_total * 1e6 << ',' << r.residual * 1e6
           << ',' << int(r.detector_fired) << '\n';
    }
}

void write_trace_csv(const std::string& path, const Trace& trace) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("write_trace_csv: cannot open " + path);
    write_trace_csv(os, trace);
}

Trace read_trace_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("read_trace_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line))
        throw std::runtime_error("read_trace_csv: empty file " + path);
    const auto header = split(line, ',');
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::runtime_error("read_trace_csv: missing column " + name);
        return std::size_t(it - header.begin());
    };
    const std::size_t c_frame = col("frame_index"), c_time = col("time_s"), c_true = col("sro_true_ppm"),
                      c_hat = col("sro_hat_ppm"), c_tau = col("tau_delta_hat"), c_valid = col("valid"),
                      c_q = col("peak_quality"), c_mode = col("mode"), c_op = col("eps_op_ppm"),
                      c_imc = col("eps_imc_ppm"), c_tot = col("eps_total_ppm"), c_res = col("residual_ppm"),
                      c_fired = col("detector_fired");
    Trace trace;
    while (std::getline(is, line)) {
        if (trim(line).empty())
            continue;
        const auto f = split(line, ',');
        if (f.size() != header.size())
            throw std::runtime_error("read_trace_csv: ragged row in " + path);
        TraceRow r;
        r.frame_index = std::stoll(f[c_frame]);
        r.time_s = std::stod(f[c_time]);
        r.sro_true = std::stod(f[c_true]) * 1e-6;
        r.sro_hat = std::stod(f[c_hat]) * 1e-6;
        r.tau_delta_hat = std::stod(f[c_tau]);
        r.valid = f[c_valid] == "1";
        r.peak_quality = std::stod(f[c_q]);
        r.mode = f[c_mode] == "HOLD" ? ControlMode::Hold : ControlMode::Feedback;
        r.eps_op = std::stod(f[c_op]) * 1e-6;
        r.eps_imc = std::stod(f[c_imc]) * 1e-6;
        r.eps_total = std::stod(f[c_tot]) * 1e-6;
        r.residual = std::stod(f[c_res]) * 1e-6;
        r.detector_fired = f[c_fired] == "1";
        trace.push_back(r);
    }
    return trace;
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << "seed,sro_true_ppm,rmse_ppm,bias_ppm,settling_s,rtf,rtf_wo_sinc\n";
    os << std::setprecision(8);
    for (const auto& r : rows) {
        os << r.seed << ',' << r.sro_true_ppm << ',' << r.metrics.final_rmse_ppm << ','
           << r.metrics.steady_state_bias_ppm << ',';
        if (r.metrics.settled)
            os << r.metrics.settling_time_s;
        else
            os << "unsettled";
        os << ',' << r.metrics.rtf << ',' << r.metrics.rtf_without_resampler << '\n';
    }
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("read_key_value_file: cannot open " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParameterError(path + ":" + std::to_string(lineno) + ": expected key = value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

void apply_settings(const std::map<std::string, std::string>& settings, PipelineConfig& pipeline,
                    ScenarioConfig& scenario) {
    std::optional<double> step_time, step_sro;
    for (const auto& [key, value] : settings) {
        if (key == "mode") {
            if (value == "open-loop")
                pipeline.mode = PipelineMode::OpenLoop;
            else if (value == "closed-loop")
                pipeline.mode = PipelineMode::ClosedLoop;
            else if (value == "multi-stage")
                pipeline.mode = PipelineMode::MultiStage;
            else
                throw ParameterError("setting 'mode': expected open-loop, closed-loop or multi-stage");
        } else if (key == "fft_size") {
            pipeline.stft.fft_size = to_int(key, value);
            pipeline.stft.window = periodic_hann(pipeline.stft.fft_size);
        } else if (key == "frame_shift") {
            pipeline.stft.frame_shift = to_int(key, value);
        } else if (key == "sample_rate") {
            pipeline.stft.sample_rate = scenario.sample_rate = to_double(key, value);
        } else if (key == "alpha1") {
            pipeline.dxcp.alpha1 = to_double(key, value);
        } else if (key == "alpha2") {
            pipeline.dxcp.alpha2 = to_double(key, value);
        } else if (key == "buffer_frames") {
            pipeline.dxcp.buffer_frames = to_int(key, value);
        } else if (key == "settle_frames") {
            pipeline.dxcp.settle_frames = to_int(key, value);
        } else if (key == "max_lag") {
            pipeline.dxcp.max_lag = to_int(key, value);
        } else if (key == "filter_order") {
            pipeline.controller.order = to_int(key, value);
        } else if (key == "filter_time_constant") {
            pipeline.controller.time_constant_s = to_double(key, value);
        } else if (key == "resampler_length") {
            pipeline.resampler.window_length = to_int(key, value);
        } else if (key == "resampler_headroom") {
            pipeline.resampler_headroom = to_int(key, value);
        } else if (key == "stages") {
            pipeline.stages = to_int(key, value);
        } else if (key == "metrics_window") {
            pipeline.metrics_window_s = to_double(key, value);
        } else if (key == "duration") {
            scenario.duration_s = to_double(key, value);
        } else if (key == "seed") {
            scenario.seed = std::uint64_t(to_double(key, value));
        } else if (key == "source") {
            if (value == "noise") {
                scenario.source = ScenarioConfig::Source::WhiteNoise;
            } else {
                scenario.source = ScenarioConfig::Source::WavFile;
                scenario.wav_path = value;
            }
        } else if (key == "self_noise_snr") {
            scenario.self_noise_snr_db = value == "inf" ? ScenarioConfig::kNoNoise : to_double(key, value);
        } else if (key == "interferer_snr") {
            scenario.interferer_snr_db = value == "inf" ? ScenarioConfig::kNoNoise : to_double(key, value);
        } else if (key == "sto") {
            scenario.sto_samples = to_int(key, value);
        } else if (key == "imposition_length") {
            scenario.imposition_kernel.window_length = to_int(key, value);
        } else if (key == "echoes") {
            // "delay:gain,delay:gain"; the direct path (0:1) is implied.
            std::vector<EchoTap> taps{{0, 1.0}};
            if (value != "none") {
                for (const auto& item : split(value, ',')) {
                    const auto parts = split(item, ':');
                    if (parts.size() != 2)
                        throw ParameterError("setting 'echoes': expected delay:gain pairs");
                    taps.push_back({to_int(key, parts[0]), to_double(key, parts[1])});
                }
            }
            scenario.channel2_fir = taps;
        } else if (key == "sro_ppm") {
            scenario.sro_profile = SroProfile(to_double(key, value) * 1e-6);
        } else if (key == "step_time") {
            step_time = to_double(key, value);
        } else if (key == "step_sro_ppm") {
            step_sro = to_double(key, value) * 1e-6;
        } else {
            throw ParameterError("unknown setting '" + key + "'");
        }
    }
    if (step_time.has_value() != step_sro.has_value())
        throw ParameterError("settings 'step_time' and 'step_sro_ppm' must be given together");
    if (step_time)
        scenario.sro_profile = SroProfile::step(*step_time, scenario.sro_profile.segments().front().sro, *step_sro);
}

} // namespace sroloop
