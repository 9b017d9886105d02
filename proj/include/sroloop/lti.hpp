#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>

#include "sroloop/errors.hpp"

namespace sroloop {

/**
 * Discrete-time rational transfer function
 *
 *          b0 + b1 z^-1 + ... + bM z^-M
 *   H(z) = ----------------------------
 *          1  + a1 z^-1 + ... + aN z^-N
 *
 * realized as a transposed direct-form II difference equation. Coefficients
 * are stored in ascending powers of z^-1 and the denominator is normalized so
 * that a0 = 1. Any such filter is causal, so step() is always well defined.
 */
template <typename Scalar = double>
class RationalFilter {
public:
    using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using ComplexType = std::complex<Scalar>;

    RationalFilter() : RationalFilter(VectorType::Ones(1), VectorType::Ones(1)) {}

    RationalFilter(VectorType numerator, VectorType denominator)
        : num_(std::move(numerator)), den_(std::move(denominator)) {
        if (num_.size() == 0 || den_.size() == 0)
            throw ParameterError("RationalFilter: empty coefficient vector");
        if (den_(0) == Scalar(0))
            throw ParameterError("RationalFilter: leading denominator coefficient is zero");
        if (!num_.allFinite() || !den_.allFinite())
            throw ParameterError("RationalFilter: non-finite coefficient");
        const Scalar a0 = den_(0);
        num_ /= a0;
        den_ /= a0;
        den_(0) = Scalar(1);

        const Eigen::Index len = std::max(num_.size(), den_.size());
        b_ = VectorType::Zero(len);
        a_ = VectorType::Zero(len);
        b_.head(num_.size()) = num_;
        a_.head(den_.size()) = den_;
        state_ = VectorType::Zero(len - 1);
    }

    static RationalFilter identity() { return RationalFilter(); }

    /// Pure delay z^-k.
    static RationalFilter delay(Eigen::Index k) {
        VectorType b = VectorType::Zero(k + 1);
        b(k) = Scalar(1);
        return RationalFilter(b, VectorType::Ones(1));
    }

    const VectorType& numerator() const noexcept { return num_; }
    const VectorType& denominator() const noexcept { return den_; }
    const VectorType& state() const noexcept { return state_; }

    /// Number of delay elements in the realization.
    Eigen::Index order() const noexcept { return state_.size(); }

    bool strictly_proper() const noexcept { return b_(0) == Scalar(0); }

    /// Output the filter would produce this tick for a zero input. For a
    /// strictly proper filter this is the actual output, available before the
    /// input is known.
    Scalar peek() const noexcept { return state_.size() ? state_(0) : Scalar(0); }

    Scalar step(Scalar x) noexcept {
        const Eigen::Index n = state_.size();
        const Scalar y = b_(0) * x + (n ? state_(0) : Scalar(0));
        for (Eigen::Index i = 0; i + 1 < n; ++i)
            state_(i) = state_(i + 1) + b_(i + 1) * x - a_(i + 1) * y;
        if (n)
            state_(n - 1) = b_(n) * x - a_(n) * y;
        return y;
    }

    void reset() noexcept { state_.setZero(); }

    /// H(z) by direct polynomial evaluation. At a pole the result is an
    /// infinity marker (real part +inf), see is_infinite().
    ComplexType response(const ComplexType& z) const {
        const ComplexType w = ComplexType(1) / z;
        const ComplexType n = horner(num_, w);
        const ComplexType d = horner(den_, w);
        Scalar scale = 0;
        Scalar wk = 1;
        for (Eigen::Index i = 0; i < den_.size(); ++i, wk *= std::abs(w))
            scale += std::abs(den_(i)) * wk;
        if (std::abs(d) <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale)
            return ComplexType(std::numeric_limits<Scalar>::infinity(), Scalar(0));
        return n / d;
    }

    Scalar dc_gain() const { return response(ComplexType(1)).real(); }

private:
    static ComplexType horner(const VectorType& p, const ComplexType& w) {
        ComplexType acc(0);
        for (Eigen::Index i = p.size() - 1; i >= 0; --i)
            acc = acc * w + p(i);
        return acc;
    }

    VectorType num_, den_;
    VectorType b_, a_;
    VectorType state_;
};

using RationalFilterd = RationalFilter<double>;

template <typename Scalar>
bool is_infinite(const std::complex<Scalar>& h) {
    return std::isinf(h.real()) || std::isinf(h.imag());
}

/// Coefficient convolution; polynomial product in z^-1.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1>
poly_mul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out =
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(a.size() + b.size() - 1);
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i, b.size()) += a(i) * b;
    return out;
}

/**
 * Divides p(w) by (1 - root*w), w = z^-1, i.e. removes a pole or zero located
 * at z = root. Throws if the remainder is not negligible.
 */
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>
deflate(const Eigen::MatrixBase<Derived>& p, typename Derived::Scalar root,
        typename Derived::Scalar tol = 1e-9) {
    using Scalar = typename Derived::Scalar;
    if (p.size() < 2)
        throw ParameterError("deflate: polynomial has no root to remove");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> q(p.size() - 1);
    q(0) = p(0);
    for (Eigen::Index i = 1; i < q.size(); ++i)
        q(i) = p(i) + root * q(i - 1);
    const Scalar remainder = p(p.size() - 1) + root * q(q.size() - 1);
    if (std::abs(remainder) > tol * p.cwiseAbs().maxCoeff())
        throw ParameterError("deflate: root is not a factor of the polynomial");
    return q;
}

/// Series connection a·b.
template <typename Scalar>
RationalFilter<Scalar> cascade(const RationalFilter<Scalar>& a, const RationalFilter<Scalar>& b) {
    return {poly_mul(a.numerator(), b.numerator()), poly_mul(a.denominator(), b.denominator())};
}

template <typename Scalar>
RationalFilter<Scalar> scaled(const RationalFilter<Scalar>& f, Scalar gain) {
    return {f.numerator() * gain, f.denominator()};
}

/// Removes a common factor (z - root) from numerator and denominator.
template <typename Scalar>
RationalFilter<Scalar> cancel_common_root(const RationalFilter<Scalar>& f, Scalar root) {
    return {deflate(f.numerator(), root), deflate(f.denominator(), root)};
}

/// Runs a fresh copy of the filter over the input sequence.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1>
simulate(RationalFilter<Scalar> f, const Eigen::MatrixBase<Derived>& input) {
    f.reset();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(input.size());
    for (Eigen::Index i = 0; i < input.size(); ++i)
        out(i) = f.step(input(i));
    return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> impulse_response(const RationalFilter<Scalar>& f,
                                                          Eigen::Index n) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
    if (n > 0)
        x(0) = Scalar(1);
    return simulate(f, x);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> step_response(const RationalFilter<Scalar>& f,
                                                       Eigen::Index n) {
    return simulate(f, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(n));
}

// ---------------------------------------------------------------------------
// Frequency-domain analysis

/// Points z = e^{jω} with ω uniform on (0, π] (or [0, π] with include_dc).
struct FrequencyGrid {
    Eigen::VectorXd omega;
    Eigen::VectorXcd points;

    Eigen::Index size() const noexcept { return points.size(); }
};

FrequencyGrid make_frequency_grid(Eigen::Index num_points, bool include_dc = false);

template <typename Scalar>
Eigen::VectorXcd eval_frequency_response(const RationalFilter<Scalar>& f, const FrequencyGrid& grid) {
    if (grid.size() == 0)
        throw ParameterError("eval_frequency_response: empty grid");
    Eigen::VectorXcd h(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        h(i) = f.response(grid.points(i));
    return h;
}

/// |G_full/G_hat - 1| per grid point (multiplicative model error).
Eigen::VectorXd model_uncertainty(const RationalFilterd& g_full, const RationalFilterd& g_hat,
                                  const FrequencyGrid& grid);

/// max_i |F(z_i)|·|δG(z_i)|; the IMC loop is robustly stable when this is < 1.
double stability_margin(const RationalFilterd& f, const FrequencyGrid& grid,
                        const Eigen::Ref<const Eigen::VectorXd>& delta_gm);

// ---------------------------------------------------------------------------
// Linear model of the online estimator and the IMC filters

/// Tracking model from SRO to the filtered time drift, Ns·z/(z-1)·(1-α1)z/(z-α1).
/// Marginally stable (integrator); not meant to be stepped inside a loop.
RationalFilterd build_g1(int frame_shift, double alpha1);

/// Differentiator plus secondary smoothing, 1/(Ns·Lb)·(z^Lb-1)/z^Lb·(1-α2)z/(z-α2).
RationalFilterd build_g2(int frame_shift, int buffer_frames, double alpha2);

/// Full estimator model with the integrator pole cancelled against the
/// differentiator zero; unit DC gain, stable.
RationalFilterd build_gdxcp(int frame_shift, int buffer_frames, double alpha1, double alpha2);

/// Reduced first-order model (1-α2)/(z-α2).
RationalFilterd build_gdxcp_hat(double alpha2);

/// PT_n lag ((1-β)/(z-β))^n.
RationalFilterd build_f(double beta, int order);

/// IMC controller -F/Ĝ. order >= 2 keeps it strictly proper.
RationalFilterd build_g_imc(double alpha2, double beta, int order);

/// β = exp(-T_A/T_f).
double pole_from_time_constant(double frame_period_s, double time_constant_s);

} // namespace sroloop
