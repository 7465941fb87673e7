#pragma once

#include <string>

#include "p2preg/cloud.hpp"
#include "p2preg/types.hpp"

namespace p2preg {

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Reads a PLY vertex cloud (x,y,z and optional nx,ny,nz; float or double).
/// Non-vertex elements and extra scalar properties are skipped.
PointCloud read_ply(const std::string& path);
void write_ply(const std::string& path, const PointCloud& cloud,
               PlyFormat format = PlyFormat::BinaryLittleEndian);

/// Whitespace-separated "x y z [nx ny nz]", one point per line.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

/// Dispatches on extension (.ply / .xyz).
PointCloud read_cloud(const std::string& path);

/// Row-major 3x4 matrix under key "matrix".
RigidTransform read_transform_json(const std::string& path);
void write_transform_json(const std::string& path, const RigidTransform& t);

}  // namespace p2preg
