// Command-line front end: scenario synthesis, the three pipelines, model
// analysis and metric recomputation.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sroloop/harness.hpp"
#include "sroloop/lti.hpp"
#include "sroloop/wav.hpp"

namespace fs = std::filesystem;
using namespace sroloop;

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<double> sro_ppm;
    std::optional<double> duration;
    std::uint64_t seed = 1;
    int trials = 1;
    int jobs = 1;
    std::string out_dir = ".";
    bool trace = false;
    bool no_resample_timing = false;
    std::string z1_path, z2_path;
    std::optional<double> step_time;
    std::optional<double> step_sro_ppm;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--sro", o.sro_ppm, "true SRO in ppm (repeatable)");
    app->add_option("--duration", o.duration, "signal duration in seconds");
    app->add_option("--seed", o.seed, "first scenario seed");
    app->add_option("--trials", o.trials, "number of consecutive seeds per SRO")->check(CLI::PositiveNumber);
    app->add_option("--jobs", o.jobs, "trials run concurrently")->check(CLI::PositiveNumber);
    app->add_option("--out", o.out_dir, "output directory");
    app->add_flag("--trace", o.trace, "write a per-frame trace CSV per trial");
    app->add_flag("--no-resample-timing", o.no_resample_timing, "do not time the resampler separately");
    app->add_option("--step-time", o.step_time, "time of an SRO step in seconds");
    app->add_option("--step-sro", o.step_sro_ppm, "SRO after the step in ppm");
}

struct Setup {
    PipelineConfig pipeline;
    ScenarioConfig scenario;
};

Setup make_setup(const CommonOptions& o) {
    Setup s;
    if (!o.config_path.empty())
        apply_settings(read_key_value_file(o.config_path), s.pipeline, s.scenario);
    if (o.duration)
        s.scenario.duration_s = *o.duration;
    s.pipeline.time_resampler = !o.no_resample_timing;
    if (o.step_time.has_value() != o.step_sro_ppm.has_value())
        throw ParameterError("--step-time and --step-sro must be given together");
    return s;
}

std::string tag(double sro_ppm, std::uint64_t seed) {
    std::ostringstream os;
    os << "sro" << sro_ppm << "_seed" << seed;
    return os.str();
}

ScenarioConfig scenario_for(const Setup& s, const CommonOptions& o, double sro_ppm, std::uint64_t seed) {
    ScenarioConfig sc = s.scenario;
    sc.seed = seed;
    if (o.step_time)
        sc.sro_profile = SroProfile::step(*o.step_time, sro_ppm * 1e-6, *o.step_sro_ppm * 1e-6);
    else
        sc.sro_profile = SroProfile(sro_ppm * 1e-6);
    return sc;
}

std::vector<double> sro_list(const Setup& s, const CommonOptions& o) {
    if (!o.sro_ppm.empty())
        return o.sro_ppm;
    return {s.scenario.sro_profile.segments().front().sro * 1e6};
}

int cmd_simulate(const CommonOptions& o, const std::string& format) {
    const Setup s = make_setup(o);
    fs::create_directories(o.out_dir);
    const WavFormat fmt = format == "pcm16" ? WavFormat::Pcm16 : WavFormat::Float32;
    for (double sro : sro_list(s, o)) {
        for (int t = 0; t < o.trials; ++t) {
            const std::uint64_t seed = o.seed + std::uint64_t(t);
            const Scenario sc = generate_scenario(scenario_for(s, o, sro, seed));
            // PCM16 needs headroom; the noise source has unit variance.
            const double gain = fmt == WavFormat::Pcm16 ? 0.1 : 1.0;
            const std::string base = (fs::path(o.out_dir) / tag(sro, seed)).string();
            write_wav(base + "_z1.wav", sc.z1 * gain, sc.sample_rate, fmt);
            write_wav(base + "_z2.wav", sc.z2 * gain, sc.sample_rate, fmt);
            std::cout << base << "_z{1,2}.wav\n";
        }
    }
    return 0;
}

int cmd_run(const CommonOptions& o, PipelineMode mode) {
    Setup s = make_setup(o);
    s.pipeline.mode = mode;
    fs::create_directories(o.out_dir);

    struct Trial {
        SummaryRow row;
        std::vector<StageResult> stages;
        std::string name;
    };

    auto run_one = [&](double sro, std::uint64_t seed) {
        Scenario sc;
        if (!o.z1_path.empty()) {
            const WavData a = read_wav(o.z1_path), b = read_wav(o.z2_path);
            sc.z1 = a.samples;
            sc.z2 = b.samples;
            sc.sample_rate = a.sample_rate;
            sc.truth = SroProfile(sro * 1e-6);
        } else {
            sc = generate_scenario(scenario_for(s, o, sro, seed));
        }
        Trial trial;
        trial.name = tag(sro, seed);
        trial.row.seed = seed;
        trial.row.sro_true_ppm = sro;
        RunResult run;
        if (mode == PipelineMode::OpenLoop) {
            run = run_open_loop(sc, s.pipeline);
        } else if (mode == PipelineMode::ClosedLoop) {
            run = run_closed_loop(sc, s.pipeline);
        } else {
            MultiStageResult ms = run_multi_stage(sc, s.pipeline);
            trial.stages = ms.stages;
            run = std::move(ms.last_stage);
        }
        trial.row.metrics = run.metrics;
        if (o.trace)
            write_trace_csv((fs::path(o.out_dir) / (trial.name + "_trace.csv")).string(), run.trace);
        return trial;
    };

    std::vector<std::pair<double, std::uint64_t>> work;
    for (double sro : sro_list(s, o))
        for (int t = 0; t < o.trials; ++t)
            work.emplace_back(sro, o.seed + std::uint64_t(t));

    std::vector<Trial> trials;
    for (std::size_t i = 0; i < work.size(); i += std::size_t(o.jobs)) {
        std::vector<std::future<Trial>> batch;
        for (std::size_t j = i; j < std::min(work.size(), i + std::size_t(o.jobs)); ++j)
            batch.push_back(std::async(std::launch::async, run_one, work[j].first, work[j].second));
        for (auto& f : batch)
            trials.push_back(f.get());
    }

    std::vector<SummaryRow> rows;
    for (const auto& t : trials) {
        rows.push_back(t.row);
        for (const auto& st : t.stages)
            std::cout << t.name << " stage " << st.stage << ": stage_estimate " << st.stage_estimate * 1e6
                      << " ppm, total " << st.total_estimate * 1e6 << " ppm, error " << st.error * 1e6
                      << " ppm\n";
    }
    write_summary_csv(std::cout, rows);
    std::ofstream summary(fs::path(o.out_dir) / "summary.csv");
    write_summary_csv(summary, rows);
    return 0;
}

int cmd_analyze(const std::string& config_path, const std::string& out_dir, int grid_points) {
    PipelineConfig p;
    ScenarioConfig unused;
    if (!config_path.empty())
        apply_settings(read_key_value_file(config_path), p, unused);
    const int ns = p.stft.frame_shift, lb = p.dxcp.buffer_frames;
    const double beta = pole_from_time_constant(p.stft.frame_period(), p.controller.time_constant_s);

    const RationalFilterd g = build_gdxcp(ns, lb, p.dxcp.alpha1, p.dxcp.alpha2);
    const RationalFilterd g_hat = build_gdxcp_hat(p.dxcp.alpha2);
    const RationalFilterd f = build_f(beta, p.controller.order);
    const RationalFilterd g_imc = build_g_imc(p.dxcp.alpha2, beta, p.controller.order);

    auto print = [](const char* name, const RationalFilterd& h) {
        std::cout << name << "\n  num:";
        for (double c : h.numerator())
            std::cout << ' ' << c;
        std::cout << "\n  den:";
        for (double c : h.denominator())
            std::cout << ' ' << c;
        std::cout << "\n  dc gain: " << h.dc_gain() << '\n';
    };
    std::cout << std::setprecision(10);
    print("G_DXCP", g);
    print("G_DXCP_hat", g_hat);
    print("F", f);
    print("G_IMC", g_imc);

    const FrequencyGrid grid = make_frequency_grid(grid_points);
    const Eigen::VectorXd delta = model_uncertainty(g, g_hat, grid);
    const Eigen::VectorXcd fr = eval_frequency_response(f, grid);
    std::cout << "beta: " << beta << '\n'
              << "step threshold: " << step_threshold(ns, lb) * 1e6 << " ppm\n"
              << "T_dxcp: " << dxcp_time_constant(p.stft.frame_period(), p.dxcp.alpha2) << " s ("
              << hold_frames(p.dxcp.alpha2) << " frames)\n"
              << "stability margin max|F|·|dG_M|: " << stability_margin(f, grid, delta) << '\n';

    fs::create_directories(out_dir);
    const fs::path csv = fs::path(out_dir) / "model_response.csv";
    std::ofstream os(csv);
    os << "omega_over_pi,abs_F,abs_dGM,abs_F_dGM\n" << std::setprecision(10);
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        os << grid.omega(i) / M_PI << ',' << std::abs(fr(i)) << ',' << delta(i) << ',' << std::abs(fr(i)) * delta(i)
           << '\n';
    std::cout << "wrote " << csv.string() << '\n';
    return 0;
}

int cmd_metrics(const std::string& trace_path, double window, std::optional<double> duration) {
    const Trace trace = read_trace_csv(trace_path);
    if (trace.empty())
        throw ParameterError("metrics: empty trace");
    // Truth is piecewise constant per frame in the trace.
    std::vector<SroProfile::Segment> segs{{0.0, trace.front().sro_true}};
    for (const auto& r : trace)
        if (r.sro_true != segs.back().sro)
            segs.push_back({r.time_s, r.sro_true});
    const double dur = duration.value_or(trace.back().time_s);
    const MetricsReport m = compute_metrics(trace, SroProfile(segs), window, dur);
    std::cout << "rmse_ppm," << m.final_rmse_ppm << "\nbias_ppm," << m.steady_state_bias_ppm << "\nsettling_s,"
              << (m.settled ? std::to_string(m.settling_time_s) : std::string("unsettled")) << "\nwindow_frames,"
              << m.window_frames << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sampling-rate offset estimation and closed-loop compensation"};
    app.require_subcommand(1);

    CommonOptions sim_o, ol_o, cl_o, ms_o;
    std::string format = "float";
    auto* sim = app.add_subcommand("simulate", "write scenario WAV pairs");
    add_common(sim, sim_o);
    sim->add_option("--format", format, "pcm16 or float")->check(CLI::IsMember({"pcm16", "float"}));

    auto* ol = app.add_subcommand("run-openloop", "online estimator with feedforward resampling");
    auto* cl = app.add_subcommand("run-closedloop", "online estimator inside the IMC loop");
    auto* ms = app.add_subcommand("run-multistage", "offline estimate-and-resample iterations");
    add_common(ol, ol_o);
    add_common(cl, cl_o);
    add_common(ms, ms_o);
    for (auto [cmd, o] : {std::pair{ol, &ol_o}, {cl, &cl_o}, {ms, &ms_o}}) {
        auto* a = cmd->add_option("--z1", o->z1_path, "reference channel WAV instead of a simulated scenario");
        auto* b = cmd->add_option("--z2", o->z2_path, "asynchronous channel WAV");
        a->needs(b);
        b->needs(a);
    }

    std::string an_config, an_out = ".";
    int grid_points = 1 << 16;
    auto* an = app.add_subcommand("analyze-model", "print model coefficients and the robustness margin");
    an->add_option("--config", an_config)->check(CLI::ExistingFile);
    an->add_option("--out", an_out, "directory for model_response.csv");
    an->add_option("--grid", grid_points, "unit-circle grid points")->check(CLI::PositiveNumber);

    std::string trace_path;
    double window = 30.0;
    std::optional<double> duration;
    auto* me = app.add_subcommand("metrics", "recompute metrics from a trace CSV");
    me->add_option("trace", trace_path)->required()->check(CLI::ExistingFile);
    me->add_option("--window", window, "final window in seconds");
    me->add_option("--duration", duration, "signal duration in seconds (default: last frame time)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim)
            return cmd_simulate(sim_o, format);
        if (*ol)
            return cmd_run(ol_o, PipelineMode::OpenLoop);
        if (*cl)
            return cmd_run(cl_o, PipelineMode::ClosedLoop);
        if (*ms)
            return cmd_run(ms_o, PipelineMode::MultiStage);
        if (*an)
            return cmd_analyze(an_config, an_out, grid_points);
        if (*me)
            return cmd_metrics(trace_path, window, duration);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
