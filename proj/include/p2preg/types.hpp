#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>
#include <string>

namespace p2preg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Invalid argument to an operation (bad sizes, non-positive parameters, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation invoked on an object in an unusable state (e.g. empty index).
class StateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rigid estimation failed because the correspondence configuration is
/// rank-deficient (fewer than 3 pairs, collinear points, ...).
class DegenerateConfigurationError : public std::runtime_error {
public:
    DegenerateConfigurationError(const std::string& what, int covariance_rank)
        : std::runtime_error(what), rank(covariance_rank) {}
    int rank;
};

/// Proper rigid motion: x -> rotation * x + translation.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    /// this ∘ other, i.e. apply `other` first, then `this`.
    RigidTransform compose(const RigidTransform& other) const {
        return {rotation * other.rotation, rotation * other.translation + translation};
    }

    RigidTransform inverse() const {
        Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }

    bool is_valid(double tol = 1e-9) const {
        Mat3 rtr = rotation.transpose() * rotation;
        return (rtr - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
               std::abs(rotation.determinant() - 1.0) <= tol &&
               translation.allFinite();
    }

    static RigidTransform identity() { return {}; }
};

/// Centering/scaling applied to a cloud pair before matching.
/// normalized = (mm - centroid) / scale.
struct NormalizationInfo {
    Vec3 centroid = Vec3::Zero();
    double scale = 1.0;  // mm per normalized unit

    Vec3 to_normalized(const Vec3& mm) const { return (mm - centroid) / scale; }
    Vec3 to_mm(const Vec3& n) const { return n * scale + centroid; }

    /// Conjugates a transform estimated in normalized coordinates back to mm.
    RigidTransform transform_to_mm(const RigidTransform& tn) const {
        RigidTransform t;
        t.rotation = tn.rotation;
        t.translation = scale * tn.translation + centroid - tn.rotation * centroid;
        return t;
    }

    RigidTransform transform_to_normalized(const RigidTransform& tmm) const {
        RigidTransform t;
        t.rotation = tmm.rotation;
        t.translation = (tmm.rotation * centroid + tmm.translation - centroid) / scale;
        return t;
    }
};

}  // namespace p2preg
