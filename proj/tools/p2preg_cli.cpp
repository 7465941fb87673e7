// p2preg command-line driver: gen / register / eval / bench.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "p2preg/experiment.hpp"

namespace {

constexpr const char* kConfigEnv = "P2PREG_CONFIG";
constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 1;
constexpr int kExitConfigError = 2;

struct CliOptions {
    std::string config;
    std::string method;
    std::string sample;
    bool all = false;
    int workers = 0;        // 0 = keep config value
    long long seed = -1;    // -1 = keep config value
    std::string out;
    bool dry_run = false;
};

p2preg::ExperimentConfig resolve_config(const CliOptions& opts) {
    p2preg::ExperimentConfig config;
    std::string path = opts.config;
    if (path.empty()) {
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    }
    if (!path.empty()) {
        config = p2preg::load_experiment_config(path);
    } else {
        config = p2preg::default_experiment_config();
    }
    if (opts.workers > 0) config.workers = opts.workers;
    if (opts.seed >= 0) config.suite.seed = static_cast<uint64_t>(opts.seed);
    if (!opts.out.empty()) config.out = opts.out;
    return config;
}

int cmd_gen(const CliOptions& opts) {
    p2preg::ExperimentConfig config = resolve_config(opts);
    p2preg::generate_suite(config.suite, opts.dry_run);
    std::cout << "suite: " << config.suite.dir << " ("
              << p2preg::plan_suite(config.suite).size() << " samples"
              << (opts.dry_run ? ", dry run" : "") << ")\n";
    return kExitOk;
}

int cmd_register(const CliOptions& opts) {
    p2preg::ExperimentConfig config = resolve_config(opts);
    if (opts.sample.empty() && !opts.all)
        throw CLI::ValidationError("register needs --sample <id> or --all");
    int failures = p2preg::run_registrations(config, opts.method, opts.sample);
    if (failures > 0) {
        std::cout << failures << " sample(s) recorded as failed\n";
        return kExitPartialFailure;
    }
    return kExitOk;
}

int cmd_eval(const CliOptions& opts) {
    p2preg::ExperimentConfig config = resolve_config(opts);
    std::vector<p2preg::EvalRecord> records = p2preg::evaluate_results(config);
    int failures = 0;
    for (const p2preg::EvalRecord& r : records)
        if (r.failed) ++failures;
    std::cout << "evaluated " << records.size() << " records -> " << config.out << "\n";
    return failures > 0 ? kExitPartialFailure : kExitOk;
}

int cmd_bench(const CliOptions& opts) {
    p2preg::ExperimentConfig config = resolve_config(opts);
    p2preg::generate_suite(config.suite, false);
    int failures = p2preg::run_registrations(config, opts.method, "");
    p2preg::evaluate_results(config);
    std::cout << "bench complete -> " << config.out << "\n";
    return failures > 0 ? kExitPartialFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Complete-to-partial rigid point-cloud registration toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // shared flags may follow the subcommand

    CliOptions opts;
    app.add_option("--config", opts.config,
                   std::string("experiment config JSON (default: $") + kConfigEnv + ")");
    app.add_option("--workers", opts.workers, "worker thread count");
    app.add_option("--seed", opts.seed, "override suite seed");
    app.add_option("--out", opts.out, "override output directory");

    CLI::App* gen = app.add_subcommand("gen", "generate the synthetic suite");
    gen->add_flag("--dry-run", opts.dry_run, "write the manifest only");

    CLI::App* reg = app.add_subcommand("register", "run registration methods over the suite");
    reg->add_option("--method", opts.method, "restrict to one configured method");
    reg->add_option("--sample", opts.sample, "run a single sample id");
    reg->add_flag("--all", opts.all, "run every sample");

    CLI::App* eval = app.add_subcommand("eval", "evaluate results and write reports");

    CLI::App* bench = app.add_subcommand("bench", "gen + register + eval");
    bench->add_option("--method", opts.method, "restrict to one configured method");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(opts);
        if (reg->parsed()) return cmd_register(opts);
        if (eval->parsed()) return cmd_eval(opts);
        if (bench->parsed()) return cmd_bench(opts);
    } catch (const p2preg::ParameterError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartialFailure;
    }
    return kExitConfigError;
}
