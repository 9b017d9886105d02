#include "sroloop/imc.hpp"

#include <cmath>

namespace sroloop {

double step_threshold(int frame_shift, int buffer_frames) {
    if (frame_shift < 1 || buffer_frames < 1)
        throw ParameterError("step_threshold: frame shift and buffer distance must be >= 1");
    return 1.0 / (double(frame_shift) * double(buffer_frames));
}

double dxcp_time_constant(double frame_period_s, double alpha2) {
    if (!(alpha2 > 0.0 && alpha2 < 1.0))
        throw ParameterError("dxcp_time_constant: alpha2 must lie in (0, 1)");
    return frame_period_s / std::log(1.0 / alpha2);
}

int hold_frames(double alpha2) {
    // T_dxcp/T_A does not depend on the frame period.
    return int(std::ceil(dxcp_time_constant(1.0, alpha2)));
}

ImcController::ImcController(double alpha2, double beta, int order)
    : controller_(scaled(build_g_imc(alpha2, beta, order), -1.0)), model_(build_gdxcp_hat(alpha2)) {}

double ImcController::update(double residual) {
    if (!std::isfinite(residual)) {
        fault_ = true;
        return u_;
    }
    const double e = residual + model_.peek();
    u_ = controller_.step(e);
    model_.step(u_);
    return u_;
}

void ImcController::reset() {
    controller_.reset();
    model_.reset();
    u_ = 0.0;
}

const char* to_string(ControlMode mode) {
    return mode == ControlMode::Hold ? "HOLD" : "FEEDBACK";
}

SupervisorConfig make_supervisor_config(const StftConfig& stft, const DxcpConfig& dxcp,
                                        const ControllerConfig& controller) {
    SupervisorConfig cfg;
    cfg.threshold = step_threshold(stft.frame_shift, dxcp.buffer_frames);
    cfg.hold_frames = hold_frames(dxcp.alpha2);
    cfg.alpha2 = dxcp.alpha2;
    cfg.beta = pole_from_time_constant(stft.frame_period(), controller.time_constant_s);
    cfg.order = controller.order;
    return cfg;
}

Supervisor::Supervisor(const SupervisorConfig& config)
    : cfg_(config), imc_(config.alpha2, config.beta, config.order) {
    if (!(cfg_.threshold > 0.0))
        throw ParameterError("Supervisor: threshold must be positive");
    if (cfg_.hold_frames < 1)
        throw ParameterError("Supervisor: hold_frames must be >= 1");
}

bool Supervisor::detect_step(double residual) const noexcept {
    return mode_ == ControlMode::Feedback && std::abs(residual) > cfg_.threshold;
}

double Supervisor::eps_total() const noexcept {
    return mode_ == ControlMode::Hold ? eps_op_ : eps_op_ + imc_.actuation();
}

SupervisorOutput Supervisor::update(const DxcpEstimate& estimate) {
    SupervisorOutput out;
    out.residual = estimate.sro_hat;

    if (mode_ == ControlMode::Hold) {
        if (--hold_counter_ == 0) {
            imc_.reset();
            mode_ = ControlMode::Feedback;
        }
    } else if (estimate.valid) {
        if (detect_step(estimate.sro_hat)) {
            eps_op_ += imc_.actuation() + estimate.sro_hat;
            imc_.reset();
            mode_ = ControlMode::Hold;
            hold_counter_ = cfg_.hold_frames;
            out.detector_fired = true;
        } else {
            imc_.update(estimate.sro_hat);
        }
    }

    out.mode = mode_;
    out.eps_op = eps_op_;
    out.eps_imc = mode_ == ControlMode::Hold ? 0.0 : imc_.actuation();
    out.eps_total = eps_total();
    return out;
}

void Supervisor::reset() {
    imc_.reset();
    mode_ = ControlMode::Feedback;
    eps_op_ = 0.0;
    hold_counter_ = 0;
}

} // namespace sroloop
