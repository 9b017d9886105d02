#pragma once

#include <utility>
#include <vector>

#include "sroloop/errors.hpp"

namespace sroloop {

/// Piecewise-constant true SRO over time (seconds, dimensionless values).
class SroProfile {
public:
    struct Segment {
        double start_s;
        double sro;
    };

    SroProfile() : SroProfile(0.0) {}
    explicit SroProfile(double constant_sro);
    explicit SroProfile(std::vector<Segment> segments);

    static SroProfile step(double step_time_s, double before, double after);

    double at(double t_s) const noexcept;
    const std::vector<Segment>& segments() const noexcept { return segments_; }
    double max_abs() const noexcept;

    static constexpr double kMaxAbsSro = 1e-3;

private:
    std::vector<Segment> segments_;
};

} // namespace sroloop
