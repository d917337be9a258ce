#include "duet/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace duet {

std::string format_tum_line(const StampedPose& p) {
  const Vec4 q = rotation_to_quaternion(p.pose.R);
  char line[256];
  std::snprintf(line, sizeof(line), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                p.timestamp, p.pose.t.x(), p.pose.t.y(), p.pose.t.z(), q(0),
                q(1), q(2), q(3));
  return line;
}

void write_tum(const std::string& path, std::span<const StampedPose> trajectory) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trajectory file: " + path);
  for (const auto& p : trajectory) os << format_tum_line(p);
}

std::vector<StampedPose> read_tum(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open trajectory file: " + path);
  std::vector<StampedPose> out;
  std::string line;
  int line_number = 0;
  while (std::getline(is, line)) {
    ++line_number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double ts = 0.0;
    Vec3 t;
    Vec4 q;
    ss >> ts >> t.x() >> t.y() >> t.z() >> q(0) >> q(1) >> q(2) >> q(3);
    if (!ss) {
      throw std::runtime_error(path + ": malformed trajectory line " +
                               std::to_string(line_number));
    }
    out.push_back({ts, Pose{quaternion_to_rotation(q), t}});
  }
  return out;
}

}  // namespace duet
