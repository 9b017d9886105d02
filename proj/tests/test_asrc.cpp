#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sroloop/asrc.hpp"
#include "sroloop/scenario.hpp"

using namespace sroloop;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFs = 16000.0;

// Periodic noise with a flat spectrum up to f_max and nothing above.
Eigen::VectorXd bandlimited_noise(int n, double f_max, std::uint64_t seed) {
    Eigen::FFT<double> fft;
    std::vector<double> x(static_cast<std::size_t>(n));
    Eigen::Map<Eigen::VectorXd>(x.data(), n) = white_noise(n, seed);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, x);
    for (int k = 0; k < n; ++k) {
        const int kk = std::min(k, n - k);
        if (double(kk) * kFs / n > f_max)
            spec[std::size_t(k)] = 0.0;
    }
    fft.inv(x, spec);
    return Eigen::Map<Eigen::VectorXd>(x.data(), n);
}

// Exact circular delay by d samples of a periodic band-limited signal.
Eigen::VectorXd circular_delay(const Eigen::VectorXd& x, double d) {
    const int n = int(x.size());
    Eigen::FFT<double> fft;
    std::vector<double> in(x.data(), x.data() + n), out;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, in);
    for (int k = 0; k < n; ++k) {
        const int kk = k <= n / 2 ? k : k - n;
        spec[std::size_t(k)] *= std::polar(1.0, -2.0 * kPi * kk * d / n);
    }
    fft.inv(out, spec);
    return Eigen::Map<Eigen::VectorXd>(out.data(), n);
}

double snr_db(double signal, double error) { return 10.0 * std::log10(signal / error); }

// Delay of a low-frequency tone cos(ωn) in y over [start, start + len), by complex demodulation.
double tone_delay(const Eigen::VectorXd& y, double omega, Eigen::Index start, Eigen::Index len) {
    std::complex<double> acc = 0.0;
    for (Eigen::Index n = start; n < start + len; ++n)
        acc += y(n) * std::polar(1.0, -omega * double(n));
    return -std::arg(acc) / omega;
}

// Integer-plus-parabolic cross-correlation lag of b relative to a around position m.
double xcorr_lag(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::Index m, int block, int lo,
                 int hi) {
    std::vector<double> c;
    for (int d = lo; d <= hi; ++d) {
        double acc = 0.0;
        for (int i = 0; i < block; ++i)
            acc += b(m + i) * a(m + i - d);
        c.push_back(acc);
    }
    std::size_t best = 1;
    for (std::size_t i = 1; i + 1 < c.size(); ++i)
        if (c[i] > c[best])
            best = i;
    const double l = c[best - 1], mid = c[best], r = c[best + 1];
    return lo + double(best) + 0.5 * (l - r) / (l - 2.0 * mid + r);
}

} // namespace

TEST_SUITE("profile") {

TEST_CASE("piecewise-constant lookup") {
    auto p = SroProfile::step(60.0, 0.0, 40e-6);
    CHECK(p.at(0.0) == 0.0);
    CHECK(p.at(59.999) == 0.0);
    CHECK(p.at(60.0) == 40e-6);
    CHECK(p.at(1e6) == 40e-6);
    CHECK(p.max_abs() == 40e-6);
    CHECK(SroProfile(-5e-6).at(3.0) == -5e-6);
}

TEST_CASE("validation") {
    using S = SroProfile::Segment;
    CHECK_THROWS_AS(SroProfile(std::vector<S>{}), ParameterError);
    CHECK_THROWS_AS(SroProfile(std::vector<S>{{1.0, 0.0}}), ParameterError);
    CHECK_THROWS_AS(SroProfile(std::vector<S>{{0.0, 0.0}, {5.0, 0.0}, {5.0, 1e-6}}), ParameterError);
    CHECK_THROWS_AS(SroProfile(2e-3), ParameterError);
}

} // TEST_SUITE

TEST_SUITE("interpolation") {

TEST_CASE("kernel validation") {
    CHECK_THROWS_AS(SincKernel{16}.validate(), ParameterError);
    CHECK_THROWS_AS(SincKernel{1}.validate(), ParameterError);
    CHECK(SincKernel{17}.half_width() == 8);
    CHECK(SincKernel{513}.half_width() == 256);
}

TEST_CASE("zero fraction picks the centre sample") {
    std::vector<double> w(17);
    for (int i = 0; i < 17; ++i)
        w[std::size_t(i)] = std::sin(0.37 * i) + i;
    CHECK(interpolate_at(w, 0.0, {17}) == w[8]);
}

TEST_CASE("tap sum at half-sample offset") {
    const int nw = 17, h = 8;
    const double f = 0.5;
    double oracle = 0.0;
    for (int i = -h; i <= h; ++i) {
        const double t = i - f;
        oracle += std::sin(kPi * t) / (kPi * t) * 0.5 * (1.0 + std::cos(2.0 * kPi * t / nw));
    }
    std::vector<double> ones(17, 1.0);
    const double y = interpolate_at(ones, f, {nw});
    CHECK(y == doctest::Approx(oracle).epsilon(1e-13));
    CHECK(std::abs(y - 0.9999) <= 1e-3);
}

TEST_CASE("taps agree with the direct formula for arbitrary offsets") {
    for (int nw : {3, 17, 513}) {
        const SincKernel k{nw};
        const int h = k.half_width();
        std::vector<double> taps(static_cast<std::size_t>(nw));
        for (double f : {1e-9, 0.1, 0.5, 0.77, 0.999999}) {
            sinc_taps(f, k, taps);
            double worst = 0.0;
            for (int i = -h; i <= h; ++i) {
                const long double t = (long double)i - f;
                const long double pi = std::numbers::pi_v<long double>;
                const long double ref =
                    std::abs(t) >= nw / 2.0L ? 0.0L
                                             : std::sin(pi * t) / (pi * t) * 0.5L * (1.0L + std::cos(2.0L * pi * t / nw));
                worst = std::max(worst, double(std::abs(taps[std::size_t(i + h)] - ref)));
            }
            INFO("N_w " << nw << " frac " << f);
            CHECK(worst < 1e-12);
        }
    }
}

TEST_CASE("1 kHz sinusoid at quarter-sample offset") {
    const double w = 2.0 * kPi * 1000.0 / kFs;
    std::vector<double> win(17);
    const int centre = 100;
    for (int i = -8; i <= 8; ++i)
        win[std::size_t(i + 8)] = std::sin(w * (centre + i));
    CHECK(std::abs(interpolate_at(win, 0.25, {17}) - std::sin(w * (centre + 0.25))) < 1e-4);
}

TEST_CASE("argument errors") {
    std::vector<double> w(16, 1.0);
    try {
        interpolate_at(w, 0.3, {17});
        FAIL("expected underrun");
    } catch (const UnderrunError& e) {
        CHECK(e.missing_samples() == 1);
    }
    std::vector<double> ok(17, 1.0);
    CHECK_THROWS_AS(interpolate_at(ok, 1.0, {17}), ParameterError);
    CHECK_THROWS_AS(interpolate_at(ok, -0.1, {17}), ParameterError);
}

} // TEST_SUITE

TEST_SUITE("stream") {

TEST_CASE("zero rate deviation is a pure delay") {
    Eigen::VectorXd x = white_noise(5000, 3);
    for (int extra : {0, 64}) {
        StreamResampler rs({17}, extra);
        Eigen::VectorXd out(4000);
        Eigen::Index pushed = 0, produced = 0;
        while (produced < 4000) {
            rs.push({x.data() + pushed, 500});
            pushed += 500;
            const int n = std::min<Eigen::Index>(4000 - produced, 400);
            out.segment(produced, n) = rs.produce(0.0, n);
            produced += n;
        }
        const int d = 8 + extra;
        CHECK(out.head(d).cwiseAbs().maxCoeff() == 0.0);
        CHECK((out.segment(d, 3000) - x.head(3000)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("underrun is reported without consuming state") {
    StreamResampler rs({17}, 0);
    std::vector<double> x(100, 1.0);
    rs.push(x);
    const double p0 = rs.read_position();
    try {
        rs.produce(0.0, 200);
        FAIL("expected underrun");
    } catch (const UnderrunError& e) {
        CHECK(e.missing_samples() == 100);
    }
    CHECK(rs.read_position() == p0);
    CHECK(rs.output_count() == 0);
    rs.push(x);
    CHECK_NOTHROW(rs.produce(0.0, 192));
    CHECK_THROWS_AS(rs.produce(0.02, 1), ParameterError);
    CHECK_THROWS_AS(rs.produce(NAN, 1), ParameterError);
}

TEST_CASE("read position is monotonic and output count follows the rate") {
    for (double eps : {-300e-6, 0.0, 100e-6, 2e-3}) {
        StreamResampler rs({17}, 0);
        const Eigen::Index len = 50000;
        Eigen::VectorXd x = white_noise(len, 1);
        rs.push({x.data(), std::size_t(len)});
        double last = rs.read_position();
        Eigen::Index count = 0;
        for (;;) {
            try {
                rs.produce(eps, 1);
            } catch (const UnderrunError&) {
                break;
            }
            ++count;
            CHECK(rs.read_position() > last);
            last = rs.read_position();
        }
        const double expected = std::floor(double(len) * (1.0 + eps));
        CHECK(std::abs(double(count) - expected) <= 1.0);
    }
}

TEST_CASE("tone frequency scales with the rate deviation") {
    const Eigen::Index n = 1 << 18;
    const double eps = 100e-6, f0 = 1000.0;
    Eigen::VectorXd x(n + 1000);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x(i) = std::sin(2.0 * kPi * f0 * double(i) / kFs);
    StreamResampler rs({17}, 0);
    rs.push({x.data(), std::size_t(x.size())});
    Eigen::VectorXd y = rs.produce(eps, int(n)).tail(n - 64).eval();
    y.conservativeResize(1 << 17);
    const Eigen::Index m = y.size();

    Eigen::VectorXd win(m);
    for (Eigen::Index i = 0; i < m; ++i)
        win(i) = y(i) * (0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(m)));
    Eigen::FFT<double> fft;
    std::vector<double> in(win.data(), win.data() + m);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, in);
    std::size_t k = 1;
    for (std::size_t i = 1; i < std::size_t(m / 2); ++i)
        if (std::abs(spec[i]) > std::abs(spec[k]))
            k = i;
    // Gaussian interpolation on log magnitude.
    const double a = std::log(std::abs(spec[k - 1])), b = std::log(std::abs(spec[k])),
                 c = std::log(std::abs(spec[k + 1]));
    const double bin = double(k) + 0.5 * (a - c) / (a - 2.0 * b + c);
    const double ratio = bin * kFs / double(m) / f0;
    CHECK(std::abs(ratio - (1.0 - 1e-4)) < 1e-5);
}

TEST_CASE("matched compensation removes an imposed drift") {
    const double eps = 100e-6, w = 2.0 * kPi * 20.0 / kFs;
    const Eigen::Index n = Eigen::Index(61 * kFs);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x(i) = std::cos(w * double(i));
    Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
    StreamResampler rs({17}, 64);
    rs.push({y.data(), std::size_t(y.size())});
    Eigen::VectorXd z = rs.produce(eps, int(y.size() - 200));
    const Eigen::Index win = Eigen::Index(kFs);
    const double d_start = tone_delay(z, w, Eigen::Index(2 * kFs), win);
    const double d_end = tone_delay(z, w, Eigen::Index(58 * kFs), win);
    CHECK(std::abs(d_end - d_start) < 0.02);
}

} // TEST_SUITE

TEST_SUITE("imposition") {

TEST_CASE("empty input and argument errors") {
    CHECK(impose_sro(Eigen::VectorXd(), SroProfile(1e-5), kFs).size() == 0);
    CHECK_THROWS_AS(impose_sro(Eigen::VectorXd::Ones(10), SroProfile(), 0.0), ParameterError);
    CHECK_THROWS_AS(compensate_sro(Eigen::VectorXd::Ones(10), 0.5), ParameterError);
}

TEST_CASE("zero offset delays by the kernel half width") {
    Eigen::VectorXd x = white_noise(4000, 8);
    Eigen::VectorXd y = impose_sro(x, SroProfile(0.0), kFs, {513});
    REQUIRE(y.size() == x.size());
    CHECK(y.head(256).cwiseAbs().maxCoeff() == 0.0);
    CHECK((y.tail(4000 - 256) - x.head(4000 - 256)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("accumulated drift after 60 s at 100 ppm") {
    const double eps = 100e-6, w = 2.0 * kPi * 20.0 / kFs;
    const Eigen::Index n = Eigen::Index(64 * kFs);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x(i) = std::cos(w * double(i));
    Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
    // One-second windows centred 60 s apart, clear of the zero-padded start.
    const Eigen::Index win = 16000;
    const double d0 = tone_delay(y, w, Eigen::Index(1.5 * kFs), win);
    const double d1 = tone_delay(y, w, Eigen::Index(61.5 * kFs), win);
    CHECK(std::abs((d0 - d1) - 96.0) < 0.1);
    CHECK(d0 == doctest::Approx(256.0 - 2.0 * kFs * eps).epsilon(1e-4));
}

TEST_CASE("drift slope follows a step profile") {
    const double w = 2.0 * kPi * 20.0 / kFs;
    const Eigen::Index n = Eigen::Index(100 * kFs);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i)
        x(i) = std::cos(w * double(i));
    Eigen::VectorXd y = impose_sro(x, SroProfile::step(60.0, 0.0, 40e-6), kFs, {513});
    const Eigen::Index win = 16000;
    auto delay_at = [&](double t) { return tone_delay(y, w, Eigen::Index(t * kFs) - win / 2, win); };
    CHECK(std::abs(delay_at(55.0) - delay_at(20.0)) / 35.0 < 1e-4);
    CHECK((delay_at(60.0 + 30.0) - delay_at(60.0 + 5.0)) / 25.0 == doctest::Approx(-0.64).epsilon(1e-3));
}

TEST_CASE("drift law: correlation lag grows by N_s times the offset per frame") {
    const double eps = 100e-6;
    const Eigen::Index n = Eigen::Index(60 * kFs);
    Eigen::VectorXd x = white_noise(n, 21);
    Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
    const int frames = int(y.size() / 2048);
    std::vector<double> t, lag;
    for (int f = 10; f < frames - 10; f += 20) {
        t.push_back(f);
        // y(m) ≈ x(m - lag), so a lag decreasing by N_s·ε per frame.
        lag.push_back(xcorr_lag(x, y, Eigen::Index(f) * 2048, 4096, 100, 300));
    }
    const double tm = std::accumulate(t.begin(), t.end(), 0.0) / double(t.size());
    const double lm = std::accumulate(lag.begin(), lag.end(), 0.0) / double(lag.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sxy += (t[i] - tm) * (lag[i] - lm);
        sxx += (t[i] - tm) * (t[i] - tm);
    }
    const double slope = -sxy / sxx;
    const double expected = 2048.0 * eps;
    CHECK(std::abs(slope - expected) / expected < 0.01);
}

TEST_CASE("inverse property on band-limited noise") {
    const Eigen::VectorXd x = bandlimited_noise(1 << 17, 6000.0, 17);
    for (double eps : {40e-6, -100e-6}) {
        const Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
        for (int nw : {17, 513}) {
            const SincKernel k{nw};
            const int extra = 64;
            StreamResampler rs(k, extra);
            rs.push({y.data(), std::size_t(y.size())});
            const int n_out = int(y.size() - 600);
            const Eigen::VectorXd z = rs.produce(eps, n_out);
            // z(m) = y(m/(1+ε) - D) and y(m) = x(m(1+ε) - 256): a constant total delay.
            const Eigen::VectorXd ref = circular_delay(x, 256.0 + (k.half_width() + extra) * (1.0 + eps));
            const Eigen::Index lo = 2000, len = n_out - 4000;
            const double snr = snr_db(ref.segment(lo, len).squaredNorm(),
                                      (z.segment(lo, len) - ref.segment(lo, len)).squaredNorm());
            MESSAGE("eps " << eps * 1e6 << " ppm, N_w " << nw << ": " << snr << " dB");
            CHECK(snr > (nw == 17 ? 55.0 : 90.0));
        }
    }
}

TEST_CASE("offline compensation aligns to the imposed delay") {
    const Eigen::VectorXd x = bandlimited_noise(1 << 16, 6000.0, 5);
    const double eps = 60e-6;
    const Eigen::VectorXd y = impose_sro(x, SroProfile(eps), kFs, {513});
    const Eigen::VectorXd c = compensate_sro(y, eps, {17});
    CHECK(c.size() == y.size());
    const Eigen::Index lo = 2000, len = c.size() - 4000;
    const Eigen::VectorXd ref = x.segment(lo - 256, len);
    CHECK(snr_db(ref.squaredNorm(), (c.segment(lo, len) - ref).squaredNorm()) > 55.0);
}

} // TEST_SUITE
