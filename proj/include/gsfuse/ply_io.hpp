#pragma once

#include <filesystem>
#include <iosfwd>

#include "gsfuse/gs_model.hpp"

namespace gsfuse {

/// Reads a binary little-endian 3D-GS PLY. Properties may appear in any order and as
/// float or double; unknown properties are skipped and normals are discarded.
/// Stored values are rounded to float32 so that a reload of a saved model is bit-exact.
GaussianModel load_ply(const std::filesystem::path& path);
GaussianModel read_ply(std::istream& in, const std::string& source_name = "<stream>");

/// Writes the standard layout: x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3.
void save_ply(const GaussianModel& model, const std::filesystem::path& path);
void write_ply(const GaussianModel& model, std::ostream& out);

}  // namespace gsfuse
