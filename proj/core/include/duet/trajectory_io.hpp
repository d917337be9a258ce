#pragma once

#include <span>
#include <string>
#include <vector>

#include "duet/geometry.hpp"

namespace duet {

/// TUM trajectory format: one pose per line,
/// "timestamp tx ty tz qx qy qz qw", 9 significant digits, unit quaternion
/// with non-negative w.
void write_tum(const std::string& path, std::span<const StampedPose> trajectory);

/// Throws std::runtime_error naming the offending line on malformed input.
std::vector<StampedPose> read_tum(const std::string& path);

std::string format_tum_line(const StampedPose& p);

}  // namespace duet
