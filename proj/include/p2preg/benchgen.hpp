#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "p2preg/cloud.hpp"
#include "p2preg/types.hpp"

namespace p2preg {

/// Closed triangulated surface with interior fiducial points, in mm.
struct SyntheticMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> fiducials;

    PointCloud surface_cloud(CloudRole role = CloudRole::Source) const {
        PointCloud c;
        c.points = vertices;
        c.role = role;
        return c;
    }
};

/// Smooth star-convex blob: an ellipsoid with a low-order spherical-harmonic
/// radial perturbation, triangulated as a subdivided icosahedron (watertight
/// by construction). Largest extent 120-200 mm, >= 100 interior fiducials.
SyntheticMesh generate_shape(uint64_t seed);

/// Per-axis scale factors drawn uniform [0.5, 1]; fiducials scale identically.
SyntheticMesh apply_scaling_augmentation(const SyntheticMesh& mesh, uint64_t seed);

struct DeformationSpec {
    int control_points = 6;
    double kernel_width_mm = 60.0;  // Gaussian RBF sigma
    double amplitude_mm = 9.0;      // control weights drawn in a ball of this radius
    uint64_t seed = 0;
};

/// Smooth displacement field u(x) = sum_c w_c exp(-|x - c|^2 / 2 sigma^2).
struct DisplacementField {
    std::vector<Vec3> centers;
    std::vector<Vec3> weights;
    double sigma = 1.0;

    Vec3 evaluate(const Vec3& x) const;

    /// Upper bound on |grad u|; the field is invertible while this is < 1.
    double gradient_bound() const;
};

/// Applies a random RBF displacement field to vertices and fiducials.
/// Rejects specs whose gradient bound reaches 1 (non-invertible).
SyntheticMesh deform(const SyntheticMesh& mesh, const DeformationSpec& spec,
                     DisplacementField* field_out = nullptr);

struct RigidRemovalResult {
    SyntheticMesh mesh;       // deformed model re-aligned onto the undeformed one
    double residual_rms = 0;  // fiducial RMS after alignment, mm
    RigidTransform removed;   // the rigid component that was taken out
};

/// Procrustes-aligns the deformed model back onto the undeformed fiducials so
/// that only the non-rigid component remains.
RigidRemovalResult remove_rigid_component(const std::vector<Vec3>& undeformed_fiducials,
                                          const SyntheticMesh& deformed);

struct CropResult {
    PointCloud target;
    std::vector<int> source_indices;  // target point -> source surface index
    double achieved_ratio = 0;
};

/// Ball crop: a uniformly chosen seed surface point and its ceil(ratio * N)
/// nearest surface points form the target.
CropResult crop_visibility(const PointCloud& surface, double ratio, uint64_t seed);

/// Euler XYZ angles uniform [0, 2pi], translation uniform [-100, 100] mm.
RigidTransform random_rigid(uint64_t seed);

/// Per-coordinate perturbation uniform [-0.5, 0.5] * level, in mm.
PointCloud add_noise(const PointCloud& cloud, double level_mm, uint64_t seed);

/// Everything needed to rebuild a sample bit-exactly.
struct SampleSpec {
    std::string id;
    uint64_t shape_seed = 0;
    uint64_t scale_seed = 0;
    DeformationSpec deformation;
    double visibility_ratio = 1.0;
    double noise_level_mm = 0.0;
    uint64_t crop_seed = 0;
    uint64_t rigid_seed = 0;
};

/// One registration problem, in mm. The source is the undeformed surface;
/// the target is a cropped, noised, rigidly moved view of the deformed one.
struct BenchmarkSample {
    PointCloud source;
    std::vector<Vec3> source_fiducials;
    PointCloud target;
    std::vector<Vec3> target_fiducials;
    RigidTransform ground_truth;        // maps source frame -> target frame
    std::vector<int> correspondence;    // target index -> source surface index
    double visibility_ratio = 1.0;
    double deformation_rms = 0.0;       // post-rigid-removal fiducial RMS, mm
    double noise_level_mm = 0.0;
    SampleSpec spec;
};

BenchmarkSample build_sample(const SampleSpec& spec);

/// Per-sample directory: source/target PLYs, fiducial CSVs, ground-truth
/// transform JSON, correspondence CSV, and a sample.json manifest.
void save_sample(const BenchmarkSample& sample, const std::string& dir);
BenchmarkSample load_sample(const std::string& dir);

SampleSpec read_sample_spec(const std::string& json_path);

}  // namespace p2preg
