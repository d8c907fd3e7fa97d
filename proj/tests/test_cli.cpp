#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "quoka/cli.hpp"
#include "quoka/errors.hpp"
#include "quoka/invariants.hpp"

using namespace quoka;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

template <typename F>
Run run(F&& cmd, const CommandOptions& opts)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = cmd(opts, out, err);
    return {code, out.str(), err.str()};
}

CommandOptions small_verify()
{
    CommandOptions o;
    o.threads = 2;
    o.overrides = {"instances=6", "oracle_instances=20", "scale_instances=10", "linearity_draws=50",
                   "theorem_trials=200"};
    return o;
}

CommandOptions small_ablate()
{
    CommandOptions o;
    o.threads = 2;
    o.overrides = {"layout={\"n_Q\":4,\"n_KV\":2,\"d\":32}", "T=256", "B_CP=32", "selector.B_SA=28", "seeds=4",
                   "needles=3"};
    return o;
}

std::filesystem::path temp_dir(const char* name)
{
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("overrides follow dotted keys and parse JSON")
{
    json c = {{"a", 1}, {"b", {{"c", 2}}}};
    apply_override(c, "b.c=5");
    apply_override(c, "b.d=[1,2]");
    apply_override(c, "e=cosine");
    apply_override(c, "f=true");
    CHECK(c.at("b").at("c") == 5);
    CHECK(c.at("b").at("d") == json::array({1, 2}));
    CHECK(c.at("e") == "cosine");
    CHECK(c.at("f") == true);
    CHECK_THROWS_AS(apply_override(c, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "=3"), ConfigError);
}

TEST_CASE("config sources apply in order")
{
    const auto dir = temp_dir("quoka_cli_order");
    std::ofstream(dir / "c.json") << R"({"seed": 4, "tolerance": 1e-3, "instances": 9})";
    CommandOptions o;
    o.config = dir / "c.json";
    o.overrides = {"instances=11"};
    const json c = resolve_config(default_verify_config(), o);
    CHECK(c.at("seed") == 4);
    CHECK(c.at("tolerance") == 1e-3);
    CHECK(c.at("instances") == 11);
    o.seed = 8;
    CHECK(resolve_config(default_verify_config(), o).at("seed") == 8);

    std::ofstream(dir / "broken.json") << "{ not json";
    o.config = dir / "broken.json";
    CHECK_THROWS_AS(resolve_config(default_verify_config(), o), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("typed configs are strict")
{
    json v = default_verify_config();
    CHECK(verify_config_from_json(v).theorem_dims == std::vector<std::size_t>{2, 8, 64});
    v["tolerances"] = 1;
    CHECK_THROWS_AS(verify_config_from_json(v), ConfigError);
    json neg = default_verify_config();
    neg["tolerance"] = -1;
    CHECK_THROWS_AS(verify_config_from_json(neg), ConfigError);

    const AblateSettings a = ablate_settings_from_json(default_ablate_config());
    CHECK(a.ablation.arms.size() == 4);
    CHECK(a.ablation.arms[0].name == "quoka");
    CHECK(a.ablation.B_SA_grid == std::vector<std::size_t>{112});
    json extra = default_ablate_config();
    extra["arms"] = json::array({{{"variant", "sparq"}, {"d_l", 16}, {"B_SA", 112}}});
    CHECK(ablate_settings_from_json(extra).ablation.arms.size() == 5);
    json grid = default_ablate_config();
    grid["B_SA"] = json::array();
    CHECK_THROWS_AS(ablate_settings_from_json(grid), ConfigError);

    const BenchSettings b = bench_settings_from_json(default_bench_config());
    CHECK(b.T == std::vector<std::size_t>{2048, 4096, 8192, 16384, 32768});
    CHECK(b.arms.size() == 2);
    CHECK(b.arms[0].name == "dense");
    json shortgrid = default_bench_config();
    shortgrid["T"] = json::array({64, 128});
    CHECK_THROWS_AS(bench_settings_from_json(shortgrid), ConfigError);
    json unsorted = default_bench_config();
    unsorted["T"] = json::array({64, 256, 128, 512});
    CHECK_THROWS_AS(bench_settings_from_json(unsorted), ConfigError);
    json badarm = default_bench_config();
    badarm["arms"] = json::array({{{"variant", "sparq"}, {"d_l", 64}}});
    CHECK_THROWS_AS(bench_settings_from_json(badarm), ConfigError);
}

TEST_CASE("verify passes, reports and fails with a seed")
{
    const Run ok = run(cmd_verify, small_verify());
    CHECK(ok.code == kExitOk);
    CHECK(ok.out.find("PASS chunked_equals_dense") != std::string::npos);
    CHECK(ok.out.find("PASS theorem_bound") != std::string::npos);
    CHECK(ok.out.find("FAIL") == std::string::npos);

    CommandOptions strict = small_verify();
    strict.overrides.push_back("tolerance=0");
    const Run bad = run(cmd_verify, strict);
    CHECK(bad.code == kExitPropertyFailure);
    CHECK(bad.out.find("FAIL dense_matches_oracle") != std::string::npos);
    CHECK(bad.out.find("reproduce with instance seed") != std::string::npos);

    CommandOptions jl = small_verify();
    jl.jsonl = true;
    const auto dir = temp_dir("quoka_cli_verify");
    jl.report = dir / "report.json";
    const Run lines = run(cmd_verify, jl);
    CHECK(lines.code == kExitOk);
    std::istringstream in(lines.out);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const json j = json::parse(line);
        CHECK(j.at("schema") == "quoka.verify.v1");
        CHECK(j.at("passed") == true);
        ++n;
    }
    CHECK(n == 7);
    const json report = json::parse(slurp(dir / "report.json"));
    CHECK(report.at("schema") == kReportSchema);
    CHECK(report.at("environment").at("dtype") == "float32");
    CHECK(report.at("config").at("instances") == 6);
    std::filesystem::remove_all(dir);
}

TEST_CASE("verify config errors exit 2")
{
    CommandOptions o = small_verify();
    o.overrides.push_back("theorem_dims=[]");
    CHECK(run(cmd_verify, o).code == kExitConfigError);
    CommandOptions missing;
    missing.config = "/nonexistent/verify.json";
    CHECK(run(cmd_verify, missing).code == kExitConfigError);
    CommandOptions fixture = small_verify();
    fixture.overrides.push_back("fixtures=[\"/nonexistent/manifest.json\"]");
    CHECK(run(cmd_verify, fixture).code == kExitConfigError);
}

TEST_CASE("verify checks fixture streams")
{
    const auto dir = temp_dir("quoka_cli_fixture");
    save_fixture_stream(dir / "stream", gen_random_stream({4, 2, 8}, 40, 2, 3));
    std::ofstream(dir / "verify.json") << R"({"fixtures": ["stream/manifest.json"]})";
    CommandOptions o = small_verify();
    o.config = dir / "verify.json";
    o.report = dir / "report.json";
    const Run r = run(cmd_verify, o);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("PASS fixture") != std::string::npos);
    const json report = json::parse(slurp(dir / "report.json"));
    CHECK(report.at("fixtures").size() == 7);
    CHECK(report.at("fixtures")[0].at("sha1").get<std::string>().size() == 40);
    std::filesystem::remove_all(dir);
}

TEST_CASE("ablate writes deterministic csv and applies checks")
{
    const Run a = run(cmd_ablate, small_ablate());
    const Run b = run(cmd_ablate, small_ablate());
    CHECK(a.code == kExitOk);
    CHECK(a.out == b.out);
    CHECK(a.out.rfind("# schema: quoka.metrics.v1\n", 0) == 0);
    CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 2 + 4 * 4);

    CommandOptions checked = small_ablate();
    checked.overrides.push_back("checks.ordering=true");
    checked.overrides.push_back("checks.min_win_rate=1.01");
    const Run c = run(cmd_ablate, checked);
    CHECK(c.code == kExitPropertyFailure);
    CHECK(c.err.find("FAIL ordering") != std::string::npos);

    CommandOptions random = small_ablate();
    random.overrides.push_back("workload=random");
    random.overrides.push_back("checks.ordering=true");
    CHECK(run(cmd_ablate, random).code == kExitConfigError);

    CommandOptions empty = small_ablate();
    empty.overrides.push_back("N_Q=[]");
    CHECK(run(cmd_ablate, empty).code == kExitConfigError);
    CommandOptions unknown = small_ablate();
    unknown.overrides.push_back("workload=haystack");
    CHECK(run(cmd_ablate, unknown).code == kExitConfigError);
}

TEST_CASE("bench runs a small grid")
{
    CommandOptions o;
    o.overrides = {"T=[256,512,1024,2048]", "B_CP=32", "selector.B_SA=64", "selector.N_Q=8",
                   "layout={\"n_Q\":2,\"n_KV\":1,\"d\":16}"};
    const Run r = run(cmd_bench, o);
    CHECK(r.code == kExitOk);
    CHECK(r.out.rfind("# schema: quoka.bench.v1\nmode,selector,T,B_CP,B_SA,N_Q,median_ms,slope\n", 0) == 0);
    CHECK(r.err.find("speedup over dense at T=2048") != std::string::npos);

    CommandOptions hopeless = o;
    hopeless.overrides.push_back("expect.min_speedup=1e9");
    const Run h = run(cmd_bench, hopeless);
    CHECK(h.code == kExitPropertyFailure);
    CHECK(h.err.find("FAIL speedup") != std::string::npos);

    CommandOptions bad = o;
    bad.overrides.push_back("repeats=1");
    CHECK(run(cmd_bench, bad).code == kExitConfigError);
}
