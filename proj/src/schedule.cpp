#include "maskdiff/schedule.hpp"

#include <algorithm>

namespace maskdiff {

StepSchedule build_schedule(double T, double delta, double kappa, ScheduleKind kind) {
    if (!(T > delta) || delta < 0.0) {
        throw std::invalid_argument("build_schedule: need T > delta >= 0");
    }
    if (!(kappa > 0.0) || kappa >= 1.0) {
        throw std::invalid_argument("build_schedule: kappa must lie in (0,1)");
    }
    if (kind == ScheduleKind::Decaying && delta == 0.0) {
        throw std::invalid_argument("build_schedule: decaying schedule needs delta > 0 (grid would be infinite)");
    }

    const double end = T - delta;
    // Treat steps that would land within this slack of the end as the final step,
    // so exact multiples do not produce a zero-length tail step.
    const double slack = 1e-12 * std::max(1.0, T);

    StepSchedule s;
    s.T = T;
    s.delta = delta;
    s.kappa = kappa;
    s.kind = kind;
    s.grid.push_back(0.0);

    const long max_steps = 10'000'000;
    while (true) {
        const double t = s.grid.back();
        const double eta = (kind == ScheduleKind::Constant) ? kappa : kappa * std::min(1.0, T - t);
        if (t + eta >= end - slack) break;
        s.grid.push_back(t + eta);
        if (static_cast<long>(s.grid.size()) > max_steps) {
            throw std::runtime_error("build_schedule: grid exceeds step cap");
        }
    }
    s.grid.push_back(end);
    return s;
}

}  // namespace maskdiff
