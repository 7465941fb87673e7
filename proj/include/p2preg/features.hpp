#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "p2preg/cloud.hpp"

namespace p2preg {

/// Row-per-point descriptor matrix. Rows are unit L2 norm so that inner
/// products between rows are cosine similarities.
struct FeatureMatrix {
    Eigen::MatrixXd values;  // rows x dim, row-major association with points

    int rows() const { return static_cast<int>(values.rows()); }
    int dim() const { return static_cast<int>(values.cols()); }

    /// Normalizes each row to unit length (zero rows become uniform vectors).
    static FeatureMatrix from_rows(Eigen::MatrixXd m);

    /// Throws ParameterError when a row is non-finite or not unit norm.
    void validate() const;

    /// Rows `indices` gathered into a new matrix.
    FeatureMatrix slice(const std::vector<int>& indices) const;
};

/// Binary feature cache: one JSON header line {rows, dim, layout}, then
/// row-major little-endian doubles.
void save_features(const std::string& path, const FeatureMatrix& f);
FeatureMatrix load_features(const std::string& path);

/// Per-point normals from the smallest-eigenvalue eigenvector of the local
/// covariance over k nearest neighbors, oriented away from the local
/// centroid. Degenerate (rank < 2) neighborhoods fall back to +z and are
/// reported in `degenerate` when given.
PointCloud estimate_normals(const PointCloud& cloud, int k,
                            std::vector<int>* degenerate = nullptr);

/// Simplified fast-point-feature-histogram descriptor: per point, histograms
/// of the three Darboux-frame angles between its normal and each radius
/// neighbor, concatenated and L2-normalized. dim must be divisible by 3.
FeatureMatrix compute_local_descriptor(const PointCloud& cloud, double radius, int dim = 33,
                                       std::vector<int>* isolated = nullptr);

struct OracleNoiseSpec {
    int feature_dim = 32;
    double corruption_sigma = 0.0;
    uint64_t seed = 0;
    /// > 0 makes the source feature field spatially correlated with this
    /// length scale (same units as the positions it is evaluated at);
    /// 0 assigns an independent random vector per source index.
    double correlation_length = 0.0;
};

/// The fixed random unit vector assigned to a source location.
Eigen::RowVectorXd oracle_unit_vector(uint64_t seed, uint64_t index, int dim);

/// Smooth random unit-feature field (random Fourier features): nearby
/// positions receive similar rows, with cosine similarity decaying roughly
/// as a Gaussian kernel of width `correlation_length`. Mimics the locality
/// of learned point-wise features.
struct OracleField {
    Eigen::MatrixXd frequencies;  // dim x 3
    Eigen::VectorXd phases;       // dim

    Eigen::RowVectorXd row(const Vec3& position) const;
};
OracleField make_oracle_field(uint64_t seed, int dim, double correlation_length);

/// Features for controlled experiments: each source point gets a fixed
/// random unit vector keyed by (seed, index); target point j gets the
/// feature of its ground-truth source index plus isotropic Gaussian noise of
/// scale corruption_sigma, re-normalized.
struct OracleFeatures {
    FeatureMatrix source;
    FeatureMatrix target;
};
OracleFeatures oracle_descriptor(int source_count, const std::vector<int>& target_to_source,
                                 const OracleNoiseSpec& spec);

}  // namespace p2preg
