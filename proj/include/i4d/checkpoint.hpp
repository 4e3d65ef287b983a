#pragma once

// Binary checkpoint: 32-byte header followed by fixed 41-byte records, all
// little endian. Layout is documented in docs/formats.md.

#include "i4d/gaussian4d.hpp"
#include "i4d/io.hpp"

#include <string>

namespace i4d {

inline constexpr char kCheckpointMagic[4] = {'I', '4', 'D', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 32;
inline constexpr std::size_t kCheckpointRecordBytes = 41;

std::string encode_checkpoint(const GaussianModel<float>& model);
GaussianModel<float> decode_checkpoint(const std::string& bytes, const std::string& name = "<memory>");

void save_checkpoint(const GaussianModel<float>& model, const std::string& path);
GaussianModel<float> load_checkpoint(const std::string& path);

/// Activated values (x, y, z, t, scale, scale_t, opacity, red, green, blue)
/// for third-party inspection.
PlyTable model_ply_table(const GaussianModel<float>& model);

}  // namespace i4d
