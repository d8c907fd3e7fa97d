#include <optional>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "quoka/eval.hpp"

namespace quoka {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

template <typename F>
double seconds_of(F&& f)
{
    const auto t0 = Clock::now();
    f();
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

LinearFit fit_loglog_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw ValidationError("fit_loglog_slope: need at least two (x, y) pairs");
    }
    const double n = static_cast<double>(x.size());
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw ValidationError("fit_loglog_slope: values must be positive");
        }
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0) {
        throw ValidationError("fit_loglog_slope: x values must not all be equal");
    }
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

double clock_granularity()
{
    double best = INFINITY;
    for (int i = 0; i < 200; ++i) {
        const auto t0 = Clock::now();
        auto t1 = Clock::now();
        while (t1 == t0) {
            t1 = Clock::now();
        }
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

ProbeResult complexity_probe(std::span<const std::size_t> T_list, const ProbeConfig& cfg)
{
    if (T_list.size() < 4) {
        throw ValidationError("complexity_probe: T_list needs at least 4 entries");
    }
    for (std::size_t i = 1; i < T_list.size(); ++i) {
        if (T_list[i] <= T_list[i - 1]) {
            throw ValidationError("complexity_probe: T_list must be strictly ascending");
        }
    }
    if (T_list.front() < 1) {
        throw ValidationError("complexity_probe: T must be >= 1");
    }
    if (cfg.repeats < 3) {
        throw ValidationError("complexity_probe: repeats must be >= 3");
    }
    if (!cfg.whole_prefill && !cfg.per_step) {
        throw ValidationError("complexity_probe: nothing to measure");
    }
    PrefillConfig pcfg;
    pcfg.B_CP = cfg.B_CP;
    pcfg.selector = cfg.selector;
    pcfg.layers = 1;
    pcfg.layout = cfg.layout;
    pcfg.seed = cfg.seed;
    pcfg.validate();

    ProbeResult result;
    result.selector = selector_name(cfg.selector);
    result.clock_granularity_s = clock_granularity();
    const double floor_s = 10.0 * result.clock_granularity_s;
    auto check = [&](double median_s, const char* what, std::size_t T) {
        if (median_s < floor_s) {
            throw MeasurementError(std::string("complexity_probe: ") + what + " median at T=" + std::to_string(T) +
                                   " is below 10x the clock granularity");
        }
    };

    // Inputs for every T are built first; each repeat round then visits every T
    // in turn.
    struct Inputs {
        std::optional<KVCache> cache;
        std::vector<QkvChunk> step;
        std::optional<TensorQkvStream> stream;
        std::vector<double> step_times;
        std::vector<double> prefill_times;
    };
    std::vector<Inputs> inputs(T_list.size());
    for (std::size_t i = 0; i < T_list.size(); ++i) {
        const std::size_t T = T_list[i];
        if (cfg.per_step) {
            const auto data = gen_random_qkv(cfg.layout, T + cfg.B_CP, mix_seed(cfg.seed, T, 1));
            inputs[i].cache.emplace(1, cfg.layout.n_kv, cfg.layout.d);
            inputs[i].cache->layer(0).append(slice_positions(data.k, 0, T), slice_positions(data.v, 0, T));
            inputs[i].step = {{slice_positions(data.q, T, cfg.B_CP), slice_positions(data.k, T, cfg.B_CP),
                               slice_positions(data.v, T, cfg.B_CP)}};
        }
        if (cfg.whole_prefill) {
            inputs[i].stream.emplace(gen_random_stream(cfg.layout, T, 1, mix_seed(cfg.seed, T, 2)));
        }
        result.points.push_back(ProbePoint{});
        result.points[i].T = T;
    }
    for (std::size_t r = 0; r < cfg.warmup + cfg.repeats; ++r) {
        for (std::size_t i = 0; i < T_list.size(); ++i) {
            Inputs& in = inputs[i];
            ProbePoint& point = result.points[i];
            if (cfg.per_step) {
                KVCache working = *in.cache;
                StepResult out;
                const double s = seconds_of([&] { out = prefill_step(in.step, working, pcfg); });
                if (r >= cfg.warmup) {
                    in.step_times.push_back(s);
                }
                point.step_scoring_ops = out.stats.scoring_ops;
                point.step_predicted_ops = out.stats.predicted_ops;
            }
            if (cfg.whole_prefill) {
                const double s = seconds_of([&] { (void)prefill(*in.stream, pcfg); });
                if (r >= cfg.warmup) {
                    in.prefill_times.push_back(s);
                }
            }
        }
    }
    for (std::size_t i = 0; i < T_list.size(); ++i) {
        if (cfg.per_step) {
            result.points[i].step_median_s = median(inputs[i].step_times);
            check(result.points[i].step_median_s, "per-step", T_list[i]);
        }
        if (cfg.whole_prefill) {
            result.points[i].prefill_median_s = median(inputs[i].prefill_times);
            check(result.points[i].prefill_median_s, "whole-prefill", T_list[i]);
        }
    }

    const std::size_t from = T_list.size() / 2;
    std::vector<double> xs;
    std::vector<double> step_ys;
    std::vector<double> prefill_ys;
    for (std::size_t i = from; i < result.points.size(); ++i) {
        xs.push_back(static_cast<double>(result.points[i].T));
        step_ys.push_back(result.points[i].step_median_s);
        prefill_ys.push_back(result.points[i].prefill_median_s);
    }
    if (cfg.per_step) {
        result.step_slope = fit_loglog_slope(xs, step_ys).slope;
        double lo = INFINITY;
        double hi = 0.0;
        for (const auto& p : result.points) {
            if (p.step_predicted_ops > 0.0) {
                const double ratio = static_cast<double>(p.step_scoring_ops) / p.step_predicted_ops;
                lo = std::min(lo, ratio);
                hi = std::max(hi, ratio);
            }
        }
        result.ops_ratio_spread = hi > 0.0 ? hi / lo : 0.0;
    }
    if (cfg.whole_prefill) {
        result.prefill_slope = fit_loglog_slope(xs, prefill_ys).slope;
    }
    return result;
}

} // namespace quoka
