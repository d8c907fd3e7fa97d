#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "quoka/cli.hpp"
#include "quoka/fixture.hpp"
#include "quoka/invariants.hpp"
#include "quoka/parallel.hpp"

namespace quoka {

namespace {

using ojson = nlohmann::ordered_json;

std::string fmt(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << text;
}

ojson environment(std::size_t threads, std::size_t measured_threads)
{
    ojson env;
    env["threads"] = threads;
    env["measured_path_threads"] = measured_threads;
    env["dtype"] = "float32";
    env["oracle_dtype"] = "float64";
    return env;
}

ojson run_report(const char* command, const json& config, const ojson& fixtures, const ojson& metrics,
                 const ojson& env)
{
    ojson r;
    r["schema"] = kReportSchema;
    r["command"] = command;
    r["config"] = ojson::parse(config.dump());
    r["fixtures"] = fixtures;
    r["metrics"] = metrics;
    r["environment"] = env;
    return r;
}

// Maps exceptions to exit codes and prints a diagnostic.
template <typename F>
int guarded(std::ostream& err, const char* command, F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        err << command << ": config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const SpecError& e) {
        err << command << ": config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const json::exception& e) {
        err << command << ": config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const MeasurementError& e) {
        err << command << ": measurement error: " << e.what() << "\n";
        return kExitMeasurementError;
    } catch (const Error& e) {
        err << command << ": " << e.what() << "\n";
        return kExitPropertyFailure;
    }
}

std::filesystem::path resolve_relative(const std::string& p, const CommandOptions& opts)
{
    std::filesystem::path path(p);
    if (path.is_relative() && opts.config && opts.config->has_parent_path()) {
        return opts.config->parent_path() / path;
    }
    return path;
}

ojson fixture_hashes(const std::filesystem::path& manifest)
{
    ojson out = ojson::array();
    out.push_back({{"path", manifest.generic_string()}, {"sha1", file_content_hash(manifest)}});
    std::ifstream in(manifest);
    const json j = json::parse(in);
    for (const auto& entry : j.at("tensors")) {
        for (const char* key : {"q", "k", "v"}) {
            const auto path = manifest.parent_path() / entry.at(key).get<std::string>();
            out.push_back({{"path", path.generic_string()}, {"sha1", file_content_hash(path)}});
        }
    }
    return out;
}

std::size_t max_queries_of(const SelectorSpec& spec)
{
    if (const auto* q = std::get_if<QuokaSelector>(&spec)) {
        return q->config.N_Q;
    }
    if (const auto* l = std::get_if<LessIsMoreSelector>(&spec)) {
        return l->inner.N_Q;
    }
    return 0;
}

} // namespace

int cmd_verify(const CommandOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, "verify", [&] {
        const json config = resolve_config(default_verify_config(), opts);
        const VerifyConfig cfg = verify_config_from_json(config);
        const std::size_t threads = resolve_threads(opts.threads);
        std::ostream& human = opts.jsonl ? err : out;

        std::vector<InvariantResult> results;
        results.push_back(check_chunked_equals_dense(cfg.instances, cfg.seed, cfg.tolerance, threads));
        results.push_back(check_dense_matches_oracle(cfg.instances, cfg.seed, cfg.tolerance, threads));
        results.push_back(check_full_budget_identity(cfg.instances, cfg.seed, cfg.tolerance, threads));
        results.push_back(check_preaggregation_linearity(cfg.linearity_draws, cfg.seed, cfg.linearity_tolerance));
        results.push_back(check_oracle_equivalence(cfg.oracle_instances, cfg.seed, threads));
        results.push_back(check_selection_scale_invariance(cfg.scale_instances, cfg.seed, threads));
        results.push_back(check_theorem(cfg.theorem_trials, cfg.theorem_dims, cfg.seed, cfg.theorem_tolerance));

        ojson fixtures = ojson::array();
        for (const auto& f : cfg.fixtures) {
            const auto manifest = resolve_relative(f, opts);
            try {
                for (auto& h : fixture_hashes(manifest)) {
                    fixtures.push_back(h);
                }
                results.push_back(check_fixture(manifest, cfg.tolerance));
            } catch (const StreamError& e) {
                throw ConfigError(std::string("fixture ") + manifest.string() + ": " + e.what());
            } catch (const FormatError& e) {
                throw ConfigError(std::string("fixture ") + manifest.string() + ": " + e.what());
            }
        }

        ojson metrics = ojson::array();
        bool all_passed = true;
        for (const auto& r : results) {
            ojson row;
            row["schema"] = "quoka.verify.v1";
            row["invariant"] = r.name;
            row["checks"] = r.checks;
            row["failures"] = r.failures;
            row["worst"] = r.worst;
            row["failing_seed"] = r.failing_seed ? ojson(*r.failing_seed) : ojson(nullptr);
            if (r.name == "theorem_bound") {
                row["theorem_violations"] = r.failures;
            }
            row["passed"] = r.passed();
            metrics.push_back(row);
            if (opts.jsonl) {
                out << row.dump() << "\n";
            }
            all_passed = all_passed && r.passed();
            if (r.passed()) {
                human << "PASS " << r.name << " (" << r.checks << " checks, worst " << fmt(r.worst) << ")\n";
            } else {
                human << "FAIL " << r.name << ": " << r.failures << " of " << r.checks << " checks violated, worst "
                      << fmt(r.worst);
                if (r.failing_seed) {
                    human << ", reproduce with instance seed " << *r.failing_seed;
                }
                if (!r.detail.empty()) {
                    human << " [" << r.detail << "]";
                }
                human << "\n";
            }
        }
        const ojson report = run_report("verify", config, fixtures, metrics, environment(threads, threads));
        if (opts.out) {
            write_file(*opts.out, report.dump(2) + "\n");
        }
        if (opts.report) {
            write_file(*opts.report, report.dump(2) + "\n");
        }
        human << (all_passed ? "verify: all invariants hold\n" : "verify: invariant failures\n");
        return all_passed ? kExitOk : kExitPropertyFailure;
    });
}

int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, "ablate", [&] {
        const json config = resolve_config(default_ablate_config(), opts);
        const AblateSettings settings = ablate_settings_from_json(config);
        const AblationConfig& a = settings.ablation;
        const std::size_t threads = resolve_threads(opts.threads);
        const std::vector<Metrics> rows = run_ablation(a, threads);

        std::string csv = metrics_csv_header();
        for (const auto& m : rows) {
            csv += metrics_csv_row(m);
        }
        const bool csv_on_stdout = !opts.out && !opts.jsonl;
        std::ostream& human = (csv_on_stdout || opts.jsonl) ? err : out;
        if (opts.out) {
            write_file(*opts.out, csv);
        } else if (csv_on_stdout) {
            out << csv;
        }
        ojson metrics = ojson::array();
        for (const auto& m : rows) {
            const std::string line = metrics_json_line(m, a.record_timings);
            if (opts.jsonl) {
                out << line << "\n";
            }
            metrics.push_back(ojson::parse(line));
        }

        // Means per arm, in arm order.
        struct Summary {
            double error = 0.0;
            double kv = 0.0;
            double needle = 0.0;
            std::size_t n = 0;
        };
        std::vector<Summary> summary(a.arms.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto& s = summary[i % a.arms.size()];
            s.error += rows[i].output_l2_error;
            s.kv += rows[i].kv_recall;
            s.needle += rows[i].needle_recall.value_or(0.0);
            ++s.n;
        }
        human << "ablate: " << rows.size() << " rows (" << a.arms.size() << " arms x " << a.B_SA_grid.size()
              << " B_SA x " << a.N_Q_grid.size() << " N_Q x " << a.seeds << " seeds)\n";
        for (std::size_t k = 0; k < a.arms.size(); ++k) {
            const auto& s = summary[k];
            const double n = static_cast<double>(s.n);
            human << "  " << a.arms[k].name << ": mean error " << fmt(s.error / n) << ", kv_recall "
                  << fmt(s.kv / n);
            if (a.workload == "needle" && a.needles > 0) {
                human << ", needle_recall " << fmt(s.needle / n);
            }
            human << "\n";
        }

        bool ok = true;
        const bool have_needles = a.workload == "needle" && a.needles > 0;
        const auto canonical = std::find_if(a.arms.begin(), a.arms.end(), [](const AblationArm& arm) {
            const auto* q = std::get_if<QuokaSelector>(&arm.selector);
            return q != nullptr && q->config.is_canonical();
        });
        const std::size_t ci = static_cast<std::size_t>(canonical - a.arms.begin());
        if ((settings.checks.ordering || settings.checks.nq_monotonic) && (!have_needles || canonical == a.arms.end())) {
            throw ConfigError("ablate checks need the needle workload and a canonical quoka arm");
        }
        if (settings.checks.ordering && a.arms.size() > 1) {
            std::size_t wins = 0;
            std::size_t groups = 0;
            for (std::size_t base = 0; base < rows.size(); base += a.arms.size()) {
                const double mine = *rows[base + ci].needle_recall;
                bool win = true;
                for (std::size_t k = 0; k < a.arms.size(); ++k) {
                    win = win && mine >= *rows[base + k].needle_recall;
                }
                wins += win ? 1 : 0;
                ++groups;
            }
            const double rate = static_cast<double>(wins) / static_cast<double>(groups);
            bool best = true;
            for (std::size_t k = 0; k < a.arms.size(); ++k) {
                if (k != ci && !(summary[ci].needle > summary[k].needle)) {
                    best = false;
                }
            }
            const bool pass = best && rate >= settings.checks.min_win_rate;
            human << (pass ? "PASS" : "FAIL") << " ordering: " << a.arms[ci].name
                  << (best ? " has" : " does not have") << " the highest mean needle recall, win rate " << fmt(rate)
                  << " (need >= " << fmt(settings.checks.min_win_rate) << ")\n";
            ok = ok && pass;
        }
        if (settings.checks.nq_monotonic && a.N_Q_grid.size() > 1) {
            std::size_t steps = 0;
            std::size_t violations = 0;
            const std::size_t per_seed = a.B_SA_grid.size() * a.N_Q_grid.size() * a.arms.size();
            for (std::size_t s = 0; s < a.seeds; ++s) {
                for (std::size_t b = 0; b < a.B_SA_grid.size(); ++b) {
                    for (std::size_t n = 1; n < a.N_Q_grid.size(); ++n) {
                        const auto at = [&](std::size_t nq) {
                            return *rows[s * per_seed + (b * a.N_Q_grid.size() + nq) * a.arms.size() + ci].needle_recall;
                        };
                        ++steps;
                        violations += at(n) < at(n - 1) ? 1 : 0;
                    }
                }
            }
            const double frac = static_cast<double>(violations) / static_cast<double>(steps);
            const bool pass = frac <= settings.checks.max_nq_violations;
            human << (pass ? "PASS" : "FAIL") << " nq_monotonic: " << violations << " of " << steps
                  << " N_Q steps decrease needle recall\n";
            ok = ok && pass;
        }
        if (opts.report) {
            write_file(*opts.report, run_report("ablate", config, ojson::array(), metrics, environment(threads, threads))
                                             .dump(2) +
                                         "\n");
        }
        return ok ? kExitOk : kExitPropertyFailure;
    });
}

int cmd_bench(const CommandOptions& opts, std::ostream& out, std::ostream& err)
{
    return guarded(err, "bench", [&] {
        const json config = resolve_config(default_bench_config(), opts);
        const BenchSettings settings = bench_settings_from_json(config);
        const std::size_t threads = resolve_threads(opts.threads);
        // The measured path runs on the calling thread only.
        constexpr std::size_t kMeasuredThreads = 1;
        std::ostream& human = opts.out ? out : err;

        std::vector<ProbeResult> results;
        for (const auto& arm : settings.arms) {
            ProbeConfig p = settings.probe;
            p.selector = arm.selector;
            human << "bench: timing " << arm.name << "\n" << std::flush;
            results.push_back(complexity_probe(settings.T, p));
            results.back().selector = arm.name;
        }

        std::string csv = std::string("# schema: ") + kBenchSchema + "\n";
        csv += "mode,selector,T,B_CP,B_SA,N_Q,median_ms,slope\n";
        ojson metrics = ojson::array();
        for (std::size_t k = 0; k < results.size(); ++k) {
            const auto& r = results[k];
            const auto& spec = settings.arms[k].selector;
            for (const char* mode : {"step", "prefill"}) {
                const bool step = std::string(mode) == "step";
                if ((step && !settings.probe.per_step) || (!step && !settings.probe.whole_prefill)) {
                    continue;
                }
                for (const auto& p : r.points) {
                    const double ms = 1000.0 * (step ? p.step_median_s : p.prefill_median_s);
                    const double slope = step ? r.step_slope : r.prefill_slope;
                    csv += std::string(mode) + "," + r.selector + "," + std::to_string(p.T) + "," +
                           std::to_string(settings.probe.B_CP) + "," + std::to_string(selector_budget(spec)) + "," +
                           std::to_string(max_queries_of(spec)) + "," + fmt(ms) + "," + fmt(slope) + "\n";
                    ojson row;
                    row["schema"] = kBenchSchema;
                    row["mode"] = mode;
                    row["selector"] = r.selector;
                    row["T"] = p.T;
                    row["median_ms"] = ms;
                    row["slope"] = slope;
                    if (step && p.step_predicted_ops > 0.0) {
                        row["scoring_ops"] = p.step_scoring_ops;
                        row["predicted_ops"] = p.step_predicted_ops;
                    }
                    metrics.push_back(row);
                    if (opts.jsonl) {
                        out << row.dump() << "\n";
                    }
                }
            }
        }
        if (opts.out) {
            write_file(*opts.out, csv);
        } else if (!opts.jsonl) {
            out << csv;
        }

        const ProbeResult& dense = results[0];
        const ProbeResult& primary = results[1];
        bool ok = true;
        human << "bench: measured path threads " << kMeasuredThreads << ", clock granularity "
              << fmt(dense.clock_granularity_s) << " s\n";
        for (const auto& r : results) {
            human << "  " << r.selector << ": step slope " << fmt(r.step_slope) << ", prefill slope "
                  << fmt(r.prefill_slope);
            if (r.ops_ratio_spread > 0.0) {
                human << ", scoring ops measured/predicted spread " << fmt(r.ops_ratio_spread);
            }
            human << "\n";
        }
        const bool use_prefill = settings.probe.whole_prefill;
        const auto& dl = dense.points.back();
        const auto& ql = primary.points.back();
        const double speedup = use_prefill ? dl.prefill_median_s / ql.prefill_median_s : dl.step_median_s / ql.step_median_s;
        human << "bench: " << primary.selector << " speedup over dense at T=" << dl.T << " ("
              << (use_prefill ? "whole prefill" : "per step") << "): " << fmt(speedup) << "x\n";

        auto check_range = [&](const char* what, double value, const std::optional<std::pair<double, double>>& range) {
            if (!range) {
                return;
            }
            const bool pass = value >= range->first && value <= range->second;
            human << (pass ? "PASS " : "FAIL ") << what << " " << fmt(value) << " in [" << fmt(range->first) << ", "
                  << fmt(range->second) << "]\n";
            ok = ok && pass;
        };
        check_range("dense prefill slope", dense.prefill_slope, settings.expect.dense_prefill_slope);
        check_range("quoka prefill slope", primary.prefill_slope, settings.expect.quoka_prefill_slope);
        if (settings.expect.min_speedup) {
            const bool pass = speedup >= *settings.expect.min_speedup;
            human << (pass ? "PASS " : "FAIL ") << "speedup " << fmt(speedup) << " >= "
                  << fmt(*settings.expect.min_speedup) << "\n";
            ok = ok && pass;
        }
        if (settings.expect.max_ops_ratio_spread && settings.probe.per_step) {
            const bool pass = primary.ops_ratio_spread > 0.0 && primary.ops_ratio_spread <= *settings.expect.max_ops_ratio_spread;
            human << (pass ? "PASS " : "FAIL ") << "scoring ops ratio spread " << fmt(primary.ops_ratio_spread)
                  << " <= " << fmt(*settings.expect.max_ops_ratio_spread) << "\n";
            ok = ok && pass;
        }
        if (opts.report) {
            ojson env = environment(threads, kMeasuredThreads);
            env["clock_granularity_s"] = dense.clock_granularity_s;
            write_file(*opts.report, run_report("bench", config, ojson::array(), metrics, env).dump(2) + "\n");
        }
        return ok ? kExitOk : kExitPropertyFailure;
    });
}

} // namespace quoka
