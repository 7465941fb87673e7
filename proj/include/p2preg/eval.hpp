#pragma once

#include <string>
#include <vector>

#include "p2preg/types.hpp"

namespace p2preg {

/// Root-mean-square target registration error, in the units of the inputs:
/// sqrt( sum |y_i - (R x_i + t)|^2 / n ).
double rms_tre(const RigidTransform& t, const std::vector<Vec3>& source_fiducials,
               const std::vector<Vec3>& target_fiducials);

/// Unweighted Procrustes fit on ground-truth fiducial pairs; the returned
/// error is the floor any rigid registrar can reach on the sample.
struct ProcrustesReference {
    RigidTransform transform;
    double rms_tre = 0.0;
};
ProcrustesReference procrustes_reference(const std::vector<Vec3>& source_fiducials,
                                         const std::vector<Vec3>& target_fiducials);

/// Percentage of errors strictly below tau.
double success_rate(const std::vector<double>& errors, double tau);

struct EvalRecord {
    std::string sample_id;
    std::string method;
    double rms_tre_mm = 0.0;
    double runtime_s = 0.0;
    bool failed = false;
    double visibility = 1.0;
    double noise_level_mm = 0.0;
    double deformation_rms_mm = 0.0;
};

struct BinRow {
    std::string method;
    double lo = 0.0, hi = 0.0;
    int count = 0;     // successful records in the bin
    int failures = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double mean_runtime = 0.0;
};

/// Per (method, visibility bin) mean ± std RMS-TRE. Failed records count in
/// the failure column and are excluded from the statistics. The last bin is
/// closed on the right.
std::vector<BinRow> bin_report(const std::vector<EvalRecord>& records,
                               const std::vector<double>& edges);

std::vector<double> default_visibility_edges();  // {0.2, 0.3, ..., 1.0}

void write_bin_report_csv(const std::string& path, const std::vector<BinRow>& rows);
void write_bin_report_json(const std::string& path, const std::vector<BinRow>& rows);

/// Success-rate curves over a tau grid, one row per (method, tau).
void write_success_rate_csv(const std::string& path, const std::vector<EvalRecord>& records,
                            const std::vector<double>& tau_grid_mm);

/// One row per sample with each method's error side by side.
void write_paired_csv(const std::string& path, const std::vector<EvalRecord>& records);

void write_records_json(const std::string& path, const std::vector<EvalRecord>& records);

}  // namespace p2preg
