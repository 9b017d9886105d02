#pragma once

#include <cstdint>

#include "sroloop/dxcp.hpp"
#include "sroloop/lti.hpp"

namespace sroloop {

struct ControllerConfig {
    int order = 2;                 // n_f
    double time_constant_s = 8.0;  // T_f
};

/// Linear working-range limit of the estimator, 1/(N_s·L_b).
double step_threshold(int frame_shift, int buffer_frames);

/// Dominant estimator time constant T_A/ln(1/α2) in seconds.
double dxcp_time_constant(double frame_period_s, double alpha2);

/// Feedback detach duration in frames, ceil(T_dxcp/T_A).
int hold_frames(double alpha2);

/**
 * Internal model controller around the first-order estimator model Ĝ.
 *
 * Per tick the model prediction Ĝ{u} (past actuations only) is added to the
 * measured residual, and the sum drives F/Ĝ. With a perfect plant model the
 * residual SRO follows (1 - F)·ε.
 */
class ImcController {
public:
    ImcController(double alpha2, double beta, int order);

    /// Consumes the residual estimate of this frame, returns the actuation.
    double update(double residual);
    double actuation() const noexcept { return u_; }
    void reset();

    /// Set once a non-finite residual was seen; the actuation is frozen then.
    bool fault() const noexcept { return fault_; }

    const RationalFilterd& controller_filter() const noexcept { return controller_; }
    const RationalFilterd& model_filter() const noexcept { return model_; }

private:
    RationalFilterd controller_;
    RationalFilterd model_;
    double u_ = 0.0;
    bool fault_ = false;
};

enum class ControlMode { Feedback, Hold };

const char* to_string(ControlMode mode);

struct SupervisorConfig {
    double threshold = 0.0;
    int hold_frames = 0;
    double alpha2 = 0.99;
    double beta = 0.0;
    int order = 2;
};

SupervisorConfig make_supervisor_config(const StftConfig& stft, const DxcpConfig& dxcp,
                                        const ControllerConfig& controller);

struct SupervisorOutput {
    double eps_total = 0.0;
    double eps_op = 0.0;
    double eps_imc = 0.0;
    double residual = 0.0;
    ControlMode mode = ControlMode::Feedback;
    bool detector_fired = false;
};

/**
 * Hybrid feedback/feedforward actuation: IMC feedback for small residuals, and
 * a sample-sum-and-hold jump of the operating point when a residual above the
 * linear-range threshold shows up. The feedback path stays detached for
 * hold_frames frames after a jump.
 */
class Supervisor {
public:
    explicit Supervisor(const SupervisorConfig& config);

    SupervisorOutput update(const DxcpEstimate& estimate);
    bool detect_step(double residual) const noexcept;
    void reset();

    ControlMode mode() const noexcept { return mode_; }
    double eps_op() const noexcept { return eps_op_; }
    double eps_total() const noexcept;
    int hold_counter() const noexcept { return hold_counter_; }
    const SupervisorConfig& config() const noexcept { return cfg_; }
    const ImcController& imc() const noexcept { return imc_; }

private:
    SupervisorConfig cfg_;
    ImcController imc_;
    ControlMode mode_ = ControlMode::Feedback;
    double eps_op_ = 0.0;
    int hold_counter_ = 0;
};

} // namespace sroloop
