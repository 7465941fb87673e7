#pragma once

#include <string>

#include "p2preg/baselines.hpp"
#include "p2preg/benchgen.hpp"
#include "p2preg/features.hpp"
#include "p2preg/p2p.hpp"

namespace p2preg {

/// Normalized (source-centered, unit-sphere) and voxel-downsampled cloud
/// pair, with back-pointers from each processed point to the nearest raw
/// point of its cloud.
struct PreprocessedPair {
    PointCloud source;
    PointCloud target;
    NormalizationInfo info;
    std::vector<int> source_origin;  // processed source index -> raw source index
    std::vector<int> target_origin;  // processed target index -> raw target index
};

PreprocessedPair preprocess(const PointCloud& source_mm, const PointCloud& target_mm,
                            double voxel_size);

/// Oracle features for the processed clouds: source rows keyed by the raw
/// source index each processed point descends from, target rows from the
/// ground-truth correspondence of their raw target point.
OracleFeatures oracle_features_for(const BenchmarkSample& sample,
                                   const PreprocessedPair& pair,
                                   const OracleNoiseSpec& spec);

struct DescriptorConfig {
    std::string type = "oracle";  // "oracle" | "fpfh"
    // oracle
    int dim = 64;
    double sigma = 0.3;
    double correlation = 0.3;  // feature-field length scale, normalized units; 0 = iid
    /// Descriptor degradation per mm of sensor noise: the effective feature
    /// corruption is sigma + noise_sensitivity * sample noise level. Models
    /// descriptors computed from noisy geometry; 0 decouples them.
    double noise_sensitivity = 0.05;
    uint64_t seed = 0;
    // fpfh
    double radius = 0.15;  // normalized units
    int normal_k = 12;
};

struct MethodConfig {
    std::string name = "p2p";
    std::string type = "p2p";  // "baseline" | "p2p" | "icp" | "ransac"
    DescriptorConfig descriptor;
    double temperature = 0.0;
    P2PConfig p2p;
    IcpConfig icp;
    bool icp_init_ground_truth = false;
    RansacConfig ransac;
};

struct RunResult {
    RigidTransform transform_mm;
    RigidTransform transform_normalized;
    bool failed = false;
    std::string error;
    double wall_time_s = 0.0;
    RegistrationResult registration;  // candidate diagnostics where applicable
    int source_points = 0;            // processed counts
    int target_points = 0;
};

/// Preprocesses the sample, builds features as configured, and runs one
/// registration method. Degenerate failures are recorded, not thrown.
RunResult run_method(const BenchmarkSample& sample, const MethodConfig& method,
                     double voxel_size);

void write_result_json(const std::string& path, const std::string& sample_id,
                       const std::string& method_name, const RunResult& result);

struct LoadedResult {
    std::string sample_id;
    std::string method;
    RigidTransform transform_mm;
    bool failed = false;
    double wall_time_s = 0.0;
};
LoadedResult read_result_json(const std::string& path);

}  // namespace p2preg
