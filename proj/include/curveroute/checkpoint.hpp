#pragma once

#include "curveroute/predictors.hpp"

#include <filesystem>

namespace curveroute {

inline constexpr const char* kCheckpointFormat = "rrmodel/1";

// Layout: the line "rrmodel/1\n", a little-endian u64 header length, a JSON
// header (pool, grid, levels, shapes, training metadata), then each head's
// parameters as little-endian float64 in head order. Within a head, every
// layer is a row-major (out x in) weight block followed by its bias.
void save_checkpoint(const RouterModel& model, const std::filesystem::path& path);
RouterModel load_checkpoint(const std::filesystem::path& path);

}  // namespace curveroute
