#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sroloop/asrc.hpp"
#include "sroloop/dxcp.hpp"
#include "sroloop/imc.hpp"
#include "sroloop/scenario.hpp"

namespace sroloop {

enum class PipelineMode { OpenLoop, ClosedLoop, MultiStage };

struct PipelineConfig {
    PipelineMode mode = PipelineMode::ClosedLoop;
    StftConfig stft{};
    DxcpConfig dxcp{};
    ControllerConfig controller{};
    SincKernel resampler{17};
    /// Extra streaming delay so negative actuations do not starve the resampler.
    int resampler_headroom = 64;
    int stages = 3;
    double metrics_window_s = 30.0;
    /// Closed loop aborts when |ε̂| exceeds this.
    double divergence_limit = 1e-3;
    /// Time the resampler separately to report the estimation-only RTF.
    bool time_resampler = true;
    /// Keep the synchronized channel-2 stream in the result.
    bool keep_output = false;

    void validate(double duration_s) const;
};

/// One frame tick. SRO fields are dimensionless; CSV output converts to ppm.
struct TraceRow {
    std::int64_t frame_index = 0;
    double time_s = 0.0;
    double sro_true = 0.0;
    double sro_hat = 0.0;
    double tau_delta_hat = 0.0;
    bool valid = false;
    double peak_quality = 0.0;
    ControlMode mode = ControlMode::Feedback;
    double eps_op = 0.0;
    double eps_imc = 0.0;
    double eps_total = 0.0;
    double residual = 0.0;
    bool detector_fired = false;
};

using Trace = std::vector<TraceRow>;

struct Timing {
    double total_s = 0.0;
    double without_resampler_s = 0.0;
    bool resampler_timed = true;
};

struct MetricsReport {
    double final_rmse_ppm = 0.0;
    double steady_state_bias_ppm = 0.0;
    double settling_time_s = 0.0;
    bool settled = false;
    double rtf = 0.0;
    double rtf_without_resampler = 0.0;
    std::size_t window_frames = 0;
};

struct RunResult {
    Trace trace;
    MetricsReport metrics;
    Eigen::VectorXd synchronized;
};

struct StageResult {
    int stage = 0;
    double stage_estimate = 0.0;  // residual SRO seen by this stage
    double total_estimate = 0.0;  // composed estimate after this stage
    double error = 0.0;           // total_estimate - truth
};

struct MultiStageResult {
    std::vector<StageResult> stages;
    RunResult last_stage;
    double total_estimate = 0.0;
};

/// Online estimator on the raw channels, feeding the resampler forward.
RunResult run_open_loop(const Scenario& scenario, const PipelineConfig& config);

/**
 * Online closed loop. Tick order per frame ℓ: the resampler emits N_s samples
 * of channel 2 using ε̂(ℓ-1); the estimator measures the residual SRO between
 * channel 1 and the resampled stream; the supervisor produces ε̂(ℓ).
 */
RunResult run_closed_loop(const Scenario& scenario, const PipelineConfig& config);

/// Offline estimate-then-resample iterations over the whole signal.
MultiStageResult run_multi_stage(const Scenario& scenario, const PipelineConfig& config);

/// RMSE and bias of eps_total - truth over the final window on valid frames.
/// A frame counts as settled once every later valid frame is within 1 ppm.
MetricsReport compute_metrics(const Trace& trace, const SroProfile& truth, double window_s,
                              double duration_s, const Timing& timing = {});

double median(std::vector<double> values);

// CSV / configuration plumbing

void write_trace_csv(std::ostream& os, const Trace& trace);
void write_trace_csv(const std::string& path, const Trace& trace);
Trace read_trace_csv(const std::string& path);

struct SummaryRow {
    std::uint64_t seed = 0;
    double sro_true_ppm = 0.0;
    MetricsReport metrics;
};

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

/// Flat `key = value` file; '#' starts a comment.
std::map<std::string, std::string> read_key_value_file(const std::string& path);

/// Applies recognised keys; unknown keys throw ParameterError.
void apply_settings(const std::map<std::string, std::string>& settings, PipelineConfig& pipeline,
                    ScenarioConfig& scenario);

} // namespace sroloop
