#pragma once
// Noise schedules, forward noising, training targets, and sampler steps for
// the two backbone families: ddpm-linear (discrete steps 1..T, epsilon
// objective) and flow-linear (continuous time in [0,1], velocity objective).
// Coefficients are computed and stored in double; tensor arithmetic runs in
// the tensor's own precision so float sampling stays bit-reproducible.

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

enum class ScheduleKind { DdpmLinear, FlowLinear };
enum class Objective { Epsilon, Velocity };

inline std::string schedule_kind_str(ScheduleKind k) {
    return k == ScheduleKind::DdpmLinear ? "ddpm-linear" : "flow-linear";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "ddpm-linear") return ScheduleKind::DdpmLinear;
    if (s == "flow-linear") return ScheduleKind::FlowLinear;
    throw ConfigError("unknown schedule kind: " + s);
}

inline std::string objective_str(Objective o) {
    return o == Objective::Epsilon ? "epsilon-prediction" : "velocity-flow";
}

inline Objective parse_objective(const std::string& s) {
    if (s == "epsilon-prediction") return Objective::Epsilon;
    if (s == "velocity-flow") return Objective::Velocity;
    throw ConfigError("unknown objective: " + s);
}

inline constexpr double kDdpmBetaFirst = 1e-4;
inline constexpr double kDdpmBetaLast = 0.02;

struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::DdpmLinear;
    int T = 0;
    // ddpm arrays, indexed by step-1. base_t keeps the label the model is
    // conditioned on, so a respaced chain still queries original timesteps.
    std::vector<double> betas;
    std::vector<double> alpha_bars;
    std::vector<int> base_t;
    // flow grid, T+1 strictly increasing points spanning [0,1].
    std::vector<double> times;

    double beta(int t) const {
        if (t < 1 || t > T) throw ContractError("beta index out of range");
        return betas[static_cast<size_t>(t - 1)];
    }
    // alpha_bar(0) is defined as 1 so posterior formulas need no special case.
    double alpha_bar(int t) const {
        if (t < 0 || t > T) throw ContractError("alpha_bar index out of range");
        return t == 0 ? 1.0 : alpha_bars[static_cast<size_t>(t - 1)];
    }
    double time(int i) const {
        if (i < 0 || i > T) throw ContractError("time index out of range");
        return times[static_cast<size_t>(i)];
    }
};

inline NoiseSchedule build_schedule(ScheduleKind kind, int T) {
    if (T < 1) throw ContractError("schedule needs at least one step");
    NoiseSchedule s;
    s.kind = kind;
    s.T = T;
    if (kind == ScheduleKind::DdpmLinear) {
        s.betas.resize(static_cast<size_t>(T));
        s.alpha_bars.resize(static_cast<size_t>(T));
        s.base_t.resize(static_cast<size_t>(T));
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            double b = T == 1 ? kDdpmBetaFirst
                              : kDdpmBetaFirst + (kDdpmBetaLast - kDdpmBetaFirst) *
                                                     static_cast<double>(t - 1) /
                                                     static_cast<double>(T - 1);
            prod *= 1.0 - b;
            s.betas[static_cast<size_t>(t - 1)] = b;
            s.alpha_bars[static_cast<size_t>(t - 1)] = prod;
            s.base_t[static_cast<size_t>(t - 1)] = t;
        }
    } else {
        s.times.resize(static_cast<size_t>(T) + 1);
        for (int i = 0; i <= T; ++i)
            s.times[static_cast<size_t>(i)] = static_cast<double>(i) / static_cast<double>(T);
    }
    return s;
}

// Subsample a trained ddpm chain to a shorter sampling chain. Step i of the
// result reuses alpha_bar from source step base_t[i]; betas are rebuilt from
// consecutive alpha_bar ratios so the ancestral posterior stays consistent.
// Respacing a flow schedule is just a coarser uniform grid.
inline NoiseSchedule respace(const NoiseSchedule& src, int steps) {
    if (steps < 1 || steps > src.T)
        throw ContractError("respace steps must lie in [1, T]");
    if (src.kind == ScheduleKind::FlowLinear) return build_schedule(src.kind, steps);
    NoiseSchedule s;
    s.kind = src.kind;
    s.T = steps;
    s.betas.resize(static_cast<size_t>(steps));
    s.alpha_bars.resize(static_cast<size_t>(steps));
    s.base_t.resize(static_cast<size_t>(steps));
    double prev = 1.0;
    for (int i = 1; i <= steps; ++i) {
        int sel = static_cast<int>(static_cast<long long>(i) * src.T / steps);
        double abar = src.alpha_bars[static_cast<size_t>(sel - 1)];
        s.betas[static_cast<size_t>(i - 1)] = 1.0 - abar / prev;
        s.alpha_bars[static_cast<size_t>(i - 1)] = abar;
        s.base_t[static_cast<size_t>(i - 1)] = src.base_t[static_cast<size_t>(sel - 1)];
        prev = abar;
    }
    return s;
}

// Forward noising. ddpm: x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps, t an
// integer step in [1,T]. flow: x_t = (1-t) x0 + t eps, t in [0,1].
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, double t, const Tensor<T>& eps,
                   const NoiseSchedule& sched) {
    if (x0.shape() != eps.shape())
        throw ShapeError("q_sample shapes differ: " + shape_str(x0.shape()) + " vs " +
                         shape_str(eps.shape()));
    double a, b;
    if (sched.kind == ScheduleKind::DdpmLinear) {
        if (t != std::floor(t) || t < 1 || t > sched.T)
            throw ContractError("ddpm step must be an integer in [1, T]");
        double abar = sched.alpha_bar(static_cast<int>(t));
        a = std::sqrt(abar);
        b = std::sqrt(1.0 - abar);
    } else {
        if (t < 0.0 || t > 1.0) throw ContractError("flow time must lie in [0, 1]");
        a = 1.0 - t;
        b = t;
    }
    auto out = Tensor<T>::zeros(x0.shape());
    const T ca = static_cast<T>(a), cb = static_cast<T>(b);
    const T* p0 = x0.data();
    const T* pe = eps.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = ca * p0[i] + cb * pe[i];
    return out;
}

// Regression target the model is trained toward at noising level t.
template <typename T>
Tensor<T> training_target(const Tensor<T>& x0, const Tensor<T>& eps, double t,
                          Objective objective) {
    (void)t;  // both supported objectives are level-independent
    if (x0.shape() != eps.shape())
        throw ShapeError("training_target shapes differ: " + shape_str(x0.shape()) +
                         " vs " + shape_str(eps.shape()));
    if (objective == Objective::Epsilon) return eps.clone();
    auto out = Tensor<T>::zeros(x0.shape());
    const T* p0 = x0.data();
    const T* pe = eps.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pe[i] - p0[i];
    return out;
}

// One ancestral denoising step: posterior mean given the predicted noise,
// plus sqrt(beta_tilde_t) gaussian noise. The final step (t=1) is
// deterministic.
template <typename T>
Tensor<T> ddpm_ancestral_step(const Tensor<T>& x_t, const Tensor<T>& model_eps, int t,
                              const NoiseSchedule& sched, Rng& rng) {
    if (sched.kind != ScheduleKind::DdpmLinear)
        throw ContractError("ancestral step needs a ddpm schedule");
    if (t < 1 || t > sched.T) throw ContractError("ancestral step t out of range");
    if (x_t.shape() != model_eps.shape())
        throw ShapeError("ancestral step shapes differ: " + shape_str(x_t.shape()) +
                         " vs " + shape_str(model_eps.shape()));
    double beta = sched.beta(t);
    double abar = sched.alpha_bar(t);
    double abar_prev = sched.alpha_bar(t - 1);
    double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    double eps_coef = beta / std::sqrt(1.0 - abar);
    auto out = Tensor<T>::zeros(x_t.shape());
    const T cm = static_cast<T>(inv_sqrt_alpha), ce = static_cast<T>(eps_coef);
    const T* px = x_t.data();
    const T* pe = model_eps.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = cm * (px[i] - ce * pe[i]);
    if (t > 1) {
        double sigma = std::sqrt(beta * (1.0 - abar_prev) / (1.0 - abar));
        std::vector<T> z(out.numel());
        rng.fill_normal(z.data(), z.size(), 1.0);
        const T cs = static_cast<T>(sigma);
        for (size_t i = 0; i < out.numel(); ++i) po[i] += cs * z[i];
    }
    return out;
}

// One explicit Euler step along the learned velocity field, integrating
// backward in time from t to t-dt.
template <typename T>
Tensor<T> flow_euler_step(const Tensor<T>& x_t, const Tensor<T>& model_v, double t,
                          double dt) {
    if (!(dt > 0.0) || dt > t) throw ContractError("euler step needs 0 < dt <= t");
    if (x_t.shape() != model_v.shape())
        throw ShapeError("euler step shapes differ: " + shape_str(x_t.shape()) + " vs " +
                         shape_str(model_v.shape()));
    auto out = Tensor<T>::zeros(x_t.shape());
    const T cd = static_cast<T>(dt);
    const T* px = x_t.data();
    const T* pv = model_v.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = px[i] - cd * pv[i];
    return out;
}

inline std::string schedule_dump(const NoiseSchedule& s) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "kind\t" << schedule_kind_str(s.kind) << "\n";
    os << "steps\t" << s.T << "\n";
    if (s.kind == ScheduleKind::DdpmLinear) {
        os << "step\tbase_t\tbeta\talpha_bar\n";
        for (int t = 1; t <= s.T; ++t)
            os << t << "\t" << s.base_t[static_cast<size_t>(t - 1)] << "\t" << s.beta(t)
               << "\t" << s.alpha_bar(t) << "\n";
    } else {
        os << "index\ttime\n";
        for (int i = 0; i <= s.T; ++i) os << i << "\t" << s.time(i) << "\n";
    }
    return os.str();
}

}  // namespace gdt
