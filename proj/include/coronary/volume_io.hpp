#pragma once

#include <filesystem>

#include "coronary/geometry.hpp"
#include "coronary/volume.hpp"

namespace coronary {

// `.vol` layout (little-endian): "MPRV", u32 version = 1, u32 x3 dims,
// f32 x3 spacing, f32 x3 origin, u8 dtype (0 = f32), then the x-fastest payload.
void write_volume(const Volume3D& vol, const std::filesystem::path& path);
Volume3D read_volume(const std::filesystem::path& path);

// Rounds a spacing or origin to the f32 precision of the header.
Vec3 header_precision(const Vec3& v);

// Plain text, one "x y z" triple in mm per line; '#' starts a comment.
void write_centerline(const Centerline& c, const std::filesystem::path& path);
Centerline read_centerline(const std::filesystem::path& path);

}  // namespace coronary
