#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "quoka/cli.hpp"

namespace {

struct Sub {
    explicit Sub(CLI::App* a) : app(a) {}
    CLI::App* app;
    quoka::CommandOptions opts;
    std::string config;
    std::string out;
    std::string report;
    std::size_t threads = 0;
    std::uint64_t seed = 0;
};

void add_options(Sub& s)
{
    s.app->add_option("--config", s.config, "JSON config file")->check(CLI::ExistingFile);
    s.app->add_option("--set", s.opts.overrides, "override a config key, KEY=VALUE (dotted keys)");
    s.app->add_option("--out", s.out, "primary output file");
    s.app->add_option("--report", s.report, "write a JSON run report");
    s.app->add_option("--threads", s.threads, "worker threads (default QUOKA_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    s.app->add_option("--seed", s.seed, "override the config seed");
    s.app->add_flag("--jsonl", s.opts.jsonl, "emit JSON lines on stdout");
}

quoka::CommandOptions finish(Sub& s)
{
    quoka::CommandOptions o = s.opts;
    if (!s.config.empty()) o.config = s.config;
    if (!s.out.empty()) o.out = s.out;
    if (!s.report.empty()) o.report = s.report;
    if (s.app->count("--threads") > 0) o.threads = s.threads;
    if (s.app->count("--seed") > 0) o.seed = s.seed;
    return o;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"QuoKA sparse attention for chunked prefill"};
    app.require_subcommand(1);
    Sub verify(app.add_subcommand("verify", "check correctness invariants"));
    Sub ablate(app.add_subcommand("ablate", "run the selector ablation grid"));
    Sub bench(app.add_subcommand("bench", "time dense and sparse prefill"));
    for (Sub* s : {&verify, &ablate, &bench}) {
        add_options(*s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? quoka::kExitOk : quoka::kExitConfigError;
    }
    if (*verify.app) return quoka::cmd_verify(finish(verify), std::cout, std::cerr);
    if (*ablate.app) return quoka::cmd_ablate(finish(ablate), std::cout, std::cerr);
    return quoka::cmd_bench(finish(bench), std::cout, std::cerr);
}
