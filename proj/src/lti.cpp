#include "sroloop/lti.hpp"

#include <numbers>

namespace sroloop {

namespace {

void check_open_unit(double v, const char* what) {
    if (!(v > 0.0 && v < 1.0))
        throw ParameterError(std::string(what) + " must lie in (0, 1)");
}

// (1 - p z^-1)
Eigen::VectorXd first_order_den(double p) { return Eigen::Vector2d(1.0, -p); }

} // namespace

FrequencyGrid make_frequency_grid(Eigen::Index num_points, bool include_dc) {
    if (num_points < 1)
        throw ParameterError("make_frequency_grid: need at least one point");
    FrequencyGrid grid;
    grid.omega.resize(num_points);
    grid.points.resize(num_points);
    const double pi = std::numbers::pi;
    for (Eigen::Index i = 0; i < num_points; ++i) {
        const double w = include_dc ? (num_points == 1 ? 0.0 : pi * double(i) / double(num_points - 1))
                                    : pi * double(i + 1) / double(num_points);
        grid.omega(i) = w;
        grid.points(i) = std::polar(1.0, w);
    }
    return grid;
}

Eigen::VectorXd model_uncertainty(const RationalFilterd& g_full, const RationalFilterd& g_hat,
                                  const FrequencyGrid& grid) {
    if (grid.size() == 0)
        throw ParameterError("model_uncertainty: empty grid");
    Eigen::VectorXd out(grid.size());
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const auto z = grid.points(i);
        // Both models are DC-normalized, so the limit at z = 1 is zero.
        if (std::abs(z - 1.0) < 1e-15) {
            out(i) = 0.0;
            continue;
        }
        const auto full = g_full.response(z);
        const auto hat = g_hat.response(z);
        if (is_infinite(full) || is_infinite(hat) || std::abs(hat) == 0.0)
            out(i) = inf;
        else
            out(i) = std::abs(full / hat - 1.0);
    }
    return out;
}

double stability_margin(const RationalFilterd& f, const FrequencyGrid& grid,
                        const Eigen::Ref<const Eigen::VectorXd>& delta_gm) {
    if (grid.size() == 0)
        throw ParameterError("stability_margin: empty grid");
    if (delta_gm.size() != grid.size())
        throw ParameterError("stability_margin: uncertainty and grid sizes differ");
    const Eigen::VectorXcd h = eval_frequency_response(f, grid);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double mag = is_infinite(h(i)) ? std::numeric_limits<double>::infinity() : std::abs(h(i));
        // 0·inf counts as 0: a zero of F masks a model singularity.
        if (mag == 0.0 || delta_gm(i) == 0.0)
            continue;
        worst = std::max(worst, mag * delta_gm(i));
    }
    return worst;
}

RationalFilterd build_g1(int frame_shift, double alpha1) {
    if (frame_shift < 1)
        throw ParameterError("build_g1: frame shift must be >= 1");
    check_open_unit(alpha1, "alpha1");
    Eigen::VectorXd num(1);
    num << frame_shift * (1.0 - alpha1);
    return {num, poly_mul(first_order_den(1.0), first_order_den(alpha1))};
}

RationalFilterd build_g2(int frame_shift, int buffer_frames, double alpha2) {
    if (frame_shift < 1)
        throw ParameterError("build_g2: frame shift must be >= 1");
    if (buffer_frames < 1)
        throw ParameterError("build_g2: buffer distance must be >= 1");
    check_open_unit(alpha2, "alpha2");
    const double gain = (1.0 - alpha2) / (double(frame_shift) * buffer_frames);
    Eigen::VectorXd num = Eigen::VectorXd::Zero(buffer_frames + 1);
    num(0) = gain;
    num(buffer_frames) = -gain;
    return {num, first_order_den(alpha2)};
}

RationalFilterd build_gdxcp(int frame_shift, int buffer_frames, double alpha1, double alpha2) {
    if (frame_shift < 1)
        throw ParameterError("build_gdxcp: frame shift must be >= 1");
    if (buffer_frames < 1)
        throw ParameterError("build_gdxcp: buffer distance must be >= 1");
    check_open_unit(alpha1, "alpha1");
    check_open_unit(alpha2, "alpha2");
    // (1 - z^-Lb)/(1 - z^-1) = 1 + z^-1 + ... + z^-(Lb-1)
    const double gain = (1.0 - alpha1) * (1.0 - alpha2) / buffer_frames;
    Eigen::VectorXd num = Eigen::VectorXd::Constant(buffer_frames, gain);
    return {num, poly_mul(first_order_den(alpha1), first_order_den(alpha2))};
}

RationalFilterd build_gdxcp_hat(double alpha2) {
    check_open_unit(alpha2, "alpha2");
    return {Eigen::Vector2d(0.0, 1.0 - alpha2), first_order_den(alpha2)};
}

RationalFilterd build_f(double beta, int order) {
    check_open_unit(beta, "beta");
    if (order < 1)
        throw ParameterError("build_f: order must be >= 1");
    Eigen::VectorXd num = Eigen::VectorXd::Zero(order + 1);
    num(order) = std::pow(1.0 - beta, order);
    Eigen::VectorXd den = Eigen::VectorXd::Ones(1);
    for (int i = 0; i < order; ++i)
        den = poly_mul(den, first_order_den(beta));
    return {num, den};
}

RationalFilterd build_g_imc(double alpha2, double beta, int order) {
    check_open_unit(alpha2, "alpha2");
    check_open_unit(beta, "beta");
    if (order < 2)
        throw ParameterError("build_g_imc: order must be >= 2 for a strictly proper controller");
    // -F/Ĝ = -c z^-(n-1) (1 - α2 z^-1) / (1 - β z^-1)^n
    const double c = std::pow(1.0 - beta, order) / (1.0 - alpha2);
    Eigen::VectorXd num = Eigen::VectorXd::Zero(order + 1);
    num(order - 1) = -c;
    num(order) = c * alpha2;
    Eigen::VectorXd den = Eigen::VectorXd::Ones(1);
    for (int i = 0; i < order; ++i)
        den = poly_mul(den, first_order_den(beta));
    return {num, den};
}

double pole_from_time_constant(double frame_period_s, double time_constant_s) {
    if (!(frame_period_s > 0.0) || !(time_constant_s > 0.0))
        throw ParameterError("pole_from_time_constant: periods must be positive");
    return std::exp(-frame_period_s / time_constant_s);
}

} // namespace sroloop
