#include "stldecomp/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace stldecomp {

const char* to_string(temporal_op op) {
    return op == temporal_op::always ? "always" : "eventually";
}

void validate(const time_interval& iv) {
    require(std::isfinite(iv.a) && std::isfinite(iv.b) && iv.a >= 0.0 && iv.a <= iv.b,
            error_code::contract_violation, "time interval must satisfy 0 <= a <= b");
}

std::optional<time_interval> intersect(std::span<const time_interval> ivs) {
    require(!ivs.empty(), error_code::contract_violation, "intersect: no intervals");
    time_interval out{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (const auto& iv : ivs) {
        out.a = std::max(out.a, iv.a);
        out.b = std::min(out.b, iv.b);
    }
    if (out.a > out.b + time_tol) return std::nullopt;
    if (out.a > out.b) out.b = out.a;
    return out;
}

bool union_covers(std::span<const time_interval> parts, const time_interval& target) {
    if (parts.empty()) return false;
    for (const auto& p : parts)
        if (!p.overlaps(target)) return false;
    std::vector<time_interval> v(parts.begin(), parts.end());
    std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
    double reach = target.a;
    for (const auto& p : v) {
        if (p.a > reach + time_tol) break;
        reach = std::max(reach, p.b);
    }
    return reach >= target.b - time_tol;
}

polytope task::effective_set() const {
    if (!parametric) return truth_set;
    require(eta.has_value(), error_code::contract_violation, "parametric task without parameter");
    return truth_set.scaled(*eta);
}

similarity task::parameter() const {
    if (parametric) {
        require(eta.has_value(), error_code::contract_violation, "parametric task without parameter");
        return *eta;
    }
    return {truth_set.c(), 1.0};
}

task reversed(const task& t) {
    task r = t;
    r.on = {t.on.j, t.on.i};
    r.truth_set = t.truth_set.reflected();
    if (t.eta) r.eta = similarity{-t.eta->center, t.eta->scale};
    return r;
}

void state_signal::validate() const {
    require(!times.empty() && times.size() == states.size(), error_code::contract_violation,
            "signal: times and states must be non-empty and of equal length");
    for (std::size_t k = 1; k < times.size(); ++k)
        require(times[k] > times[k - 1], error_code::contract_violation, "signal: times must increase strictly");
    const auto dim = static_cast<Eigen::Index>(agent_ids.size()) * state_dim;
    for (const auto& s : states)
        require(s.size() == dim, error_code::dimension_mismatch, "signal: state dimension differs from N*n");
}

vec state_signal::agent_state(int agent, double t) const {
    const auto it = std::find(agent_ids.begin(), agent_ids.end(), agent);
    if (it == agent_ids.end()) fail(error_code::dangling_reference, "signal: unknown agent " + std::to_string(agent));
    const int slot = static_cast<int>(it - agent_ids.begin());
    if (t < times.front() - time_tol || t > times.back() + time_tol) {
        std::ostringstream os;
        os << "signal: time " << t << " outside horizon [" << times.front() << ", " << times.back() << "]";
        fail(error_code::horizon, os.str());
    }
    const auto hi = std::upper_bound(times.begin(), times.end(), t);
    if (hi == times.begin()) return states.front().segment(slot * state_dim, state_dim);
    if (hi == times.end()) return states.back().segment(slot * state_dim, state_dim);
    const std::size_t k = static_cast<std::size_t>(hi - times.begin());
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return (1.0 - w) * states[k - 1].segment(slot * state_dim, state_dim) +
           w * states[k].segment(slot * state_dim, state_dim);
}

vec state_signal::bound_state(const binding& b, double t) const {
    if (b.independent()) return agent_state(b.i, t);
    return agent_state(b.j, t) - agent_state(b.i, t);
}

std::vector<double> sample_times(const state_signal& sig, const time_interval& iv, int refinement) {
    std::vector<double> ts{iv.a, iv.b};
    for (double t : sig.times)
        if (t > iv.a && t < iv.b) ts.push_back(t);
    if (iv.b > iv.a)
        for (int k = 1; k < refinement; ++k) ts.push_back(iv.a + iv.length() * k / refinement);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    return ts;
}

namespace {

time_interval shifted(const state_signal& sig, const task& t, double t0) {
    validate(t.interval);
    sig.validate();
    const time_interval iv{t.interval.a + t0, t.interval.b + t0};
    if (iv.a < sig.horizon_begin() - time_tol || iv.b > sig.horizon_end() + time_tol) {
        std::ostringstream os;
        os << "task " << t.id << ": interval [" << iv.a << ", " << iv.b << "] exceeds state_signal horizon";
        fail(error_code::horizon, os.str());
    }
    return iv;
}

} // namespace

double robustness(const state_signal& sig, const task& t, double t0, const robustness_options& opts) {
    const auto iv = shifted(sig, t, t0);
    const polytope set = t.effective_set();
    const bool ev = t.op == temporal_op::eventually;
    double r = ev ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    for (double tau : sample_times(sig, iv, opts.refinement)) {
        const double h = h_value(set, sig.bound_state(t.on, tau));
        r = ev ? std::max(r, h) : std::min(r, h);
    }
    return r;
}

double robustness_conjunction(const state_signal& sig, std::span<const task> tasks, double t0,
                              const robustness_options& opts) {
    require(!tasks.empty(), error_code::contract_violation, "robustness_conjunction: empty conjunction");
    double r = std::numeric_limits<double>::infinity();
    for (const auto& t : tasks) r = std::min(r, robustness(sig, t, t0, opts));
    return r;
}

bool satisfies(const state_signal& sig, const task& t, double t0, const robustness_options& opts) {
    const auto iv = shifted(sig, t, t0);
    const polytope set = t.effective_set();
    const auto ts = sample_times(sig, iv, opts.refinement);
    auto inside = [&](double tau) {
        const vec e = sig.bound_state(t.on, tau);
        const vec lhs = set.A() * (e - set.c());
        for (int k = 0; k < lhs.size(); ++k)
            if (lhs[k] > set.z()[k]) return false;
        return true;
    };
    if (t.op == temporal_op::always) return std::all_of(ts.begin(), ts.end(), inside);
    return std::any_of(ts.begin(), ts.end(), inside);
}

bool satisfies_all(const state_signal& sig, std::span<const task> tasks, double t0, const robustness_options& opts) {
    return std::all_of(tasks.begin(), tasks.end(), [&](const task& t) { return satisfies(sig, t, t0, opts); });
}

std::vector<task> rewrite_until(const std::string& id, const binding& on, const polytope& hold,
                                const polytope& reach, const time_interval& iv, double tau) {
    validate(iv);
    require(iv.contains(tau, 0.0), error_code::contract_violation, "until: switching time outside interval");
    task g;
    g.id = id + ".hold";
    g.op = temporal_op::always;
    g.interval = {iv.a, tau};
    g.on = on;
    g.truth_set = hold;
    task f;
    f.id = id + ".reach";
    f.op = temporal_op::eventually;
    f.interval = {tau, tau};
    f.on = on;
    f.truth_set = reach;
    return {g, f};
}

std::vector<task> unroll_recurrent(const task& pattern, double period, double horizon) {
    validate(pattern.interval);
    require(period > 0.0, error_code::contract_violation, "recurrent task: period must be positive");
    std::vector<task> out;
    for (int k = 0;; ++k) {
        const double shift = k * period;
        if (pattern.interval.b + shift > horizon + time_tol) break;
        task t = pattern;
        t.id = pattern.id + "#" + std::to_string(k);
        t.interval = {pattern.interval.a + shift, pattern.interval.b + shift};
        out.push_back(std::move(t));
    }
    require(!out.empty(), error_code::horizon, "recurrent task " + pattern.id + ": no occurrence fits the horizon");
    return out;
}

} // namespace stldecomp
