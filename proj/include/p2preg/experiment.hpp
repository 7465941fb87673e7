#pragma once

#include <array>
#include <string>
#include <vector>

#include "p2preg/eval.hpp"
#include "p2preg/pipeline.hpp"

namespace p2preg {

struct SuiteConfig {
    std::string dir = "suite";
    int shapes = 11;
    int deformations = 10;
    int crops = 5;
    std::array<double, 2> visibility_range{0.2, 1.0};
    std::vector<double> noise_levels_mm{0.0};
    DeformationSpec deformation;
    uint64_t seed = 1;
};

/// Deterministic sample plan: shapes x deformations x crops x noise levels,
/// every per-sample seed derived from the suite seed.
std::vector<SampleSpec> plan_suite(const SuiteConfig& config);

/// Builds and writes the suite. dry_run emits the manifest only.
void generate_suite(const SuiteConfig& config, bool dry_run = false);

struct SuiteEntry {
    std::string id;
    std::string dir;
    double visibility = 0.0;
    double noise_level_mm = 0.0;
    double deformation_rms_mm = 0.0;
};
std::vector<SuiteEntry> load_suite_index(const std::string& dir);

struct ExperimentConfig {
    SuiteConfig suite;
    double voxel_size = 0.04;
    std::vector<MethodConfig> methods;
    std::string out = "results";
    int workers = 1;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig default_experiment_config();

/// Registers `methods` over the suite on disk, one result JSON per
/// (method, sample) under out/<method>/. Returns the count of failed runs.
int run_registrations(const ExperimentConfig& config, const std::string& method_filter,
                      const std::string& sample_filter);

/// Reads results + suite, computes RMS-TRE (plus the Procrustes reference as
/// its own method), and writes the report files into `out`.
std::vector<EvalRecord> evaluate_results(const ExperimentConfig& config);

}  // namespace p2preg
