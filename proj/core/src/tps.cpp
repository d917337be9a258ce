#include "duet/tps.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace duet {

Vec3 TpsModel::apply(const Vec3& x) const {
  Vec3 out = affine * x + translation;
  for (size_t i = 0; i < control_points.size(); ++i) {
    out += weights[i] * (x - control_points[i]).norm();
  }
  return out;
}

bool TpsModel::is_identity(double tol) const {
  if ((affine - Mat3::Identity()).norm() > tol) return false;
  if (translation.norm() > tol) return false;
  for (const auto& w : weights) {
    if (w.norm() > tol) return false;
  }
  return true;
}

namespace {

TpsModel fit_rigid(std::span<const Vec3> sources, std::span<const Vec3> targets) {
  TpsModel model;
  model.rigid_only = true;
  const size_t n = sources.size();
  if (n == 0) return model;

  Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_s += sources[i];
    mu_t += targets[i];
  }
  mu_s /= static_cast<double>(n);
  mu_t /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    cov += (targets[i] - mu_t) * (sources[i] - mu_s).transpose();
  }
  Mat3 r = Mat3::Identity();
  if (cov.norm() > 1e-12) {
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
      d(2, 2) = -1.0;
    }
    r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  model.affine = r;
  model.translation = mu_t - r * mu_s;
  return model;
}

TpsModel fit_affine(std::span<const Vec3> sources, std::span<const Vec3> targets) {
  TpsModel model;
  model.affine_fallback = true;
  const auto n = static_cast<Eigen::Index>(sources.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::MatrixXd rhs(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    design.row(i) << 1.0, sources[i].x(), sources[i].y(), sources[i].z();
    rhs.row(i) = targets[i].transpose();
  }
  const Eigen::MatrixXd sol = design.colPivHouseholderQr().solve(rhs);  // 4x3
  model.translation = sol.row(0).transpose();
  model.affine = sol.bottomRows(3).transpose();
  return model;
}

}  // namespace

TpsModel fit_tps(std::span<const Vec3> sources, std::span<const Vec3> targets,
                 double lambda) {
  if (sources.size() != targets.size()) {
    throw std::invalid_argument("fit_tps: source/target size mismatch");
  }
  const auto n = static_cast<Eigen::Index>(sources.size());
  if (n < 4) return fit_rigid(sources, targets);

  // Normalize for conditioning: same shift and isotropic scale on both
  // sides, with the stiffness rescaled so the solved system matches the
  // original-space (K + lambda I) exactly.
  Vec3 mu = Vec3::Zero();
  for (const auto& p : sources) mu += p;
  mu /= static_cast<double>(n);
  double rms = 0.0;
  for (const auto& p : sources) rms += (p - mu).squaredNorm();
  rms = std::sqrt(rms / static_cast<double>(n));
  if (rms < 1e-12) return fit_rigid(sources, targets);
  const double scale = 1.0 / rms;

  std::vector<Vec3> q(sources.size());
  for (size_t i = 0; i < sources.size(); ++i) q[i] = (sources[i] - mu) * scale;

  // Coplanarity check on the normalized controls.
  {
    Eigen::MatrixXd centered(3, n);
    for (Eigen::Index i = 0; i < n; ++i) centered.col(i) = q[i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    if (svd.singularValues()(2) < 1e-9 * svd.singularValues()(0)) {
      return fit_affine(sources, targets);
    }
  }

  const Eigen::Index dim = n + 4;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = (q[i] - q[j]).norm();
    }
    m(i, i) += lambda * scale;  // lambda acts in original units
    m(i, n) = 1.0;
    m(i, n + 1) = q[i].x();
    m(i, n + 2) = q[i].y();
    m(i, n + 3) = q[i].z();
    m(n, i) = 1.0;
    m(n + 1, i) = q[i].x();
    m(n + 2, i) = q[i].y();
    m(n + 3, i) = q[i].z();
    rhs.row(i) = ((targets[static_cast<size_t>(i)] - mu) * scale).transpose();
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const Eigen::MatrixXd sol = lu.solve(rhs);
  if (!sol.allFinite() || (m * sol - rhs).norm() > 1e-6 * (rhs.norm() + 1.0)) {
    return fit_affine(sources, targets);
  }

  TpsModel model;
  model.lambda = lambda;
  model.control_points.assign(sources.begin(), sources.end());
  model.weights.resize(sources.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    model.weights[static_cast<size_t>(i)] = sol.row(i).transpose();
  }
  // Fold the normalization back: weights are invariant, the affine part
  // conjugates through x -> (x - mu) * scale.
  const Vec3 t_hat = sol.row(n).transpose();
  Mat3 a_hat;
  a_hat.col(0) = sol.row(n + 1).transpose();
  a_hat.col(1) = sol.row(n + 2).transpose();
  a_hat.col(2) = sol.row(n + 3).transpose();
  model.affine = a_hat;
  model.translation = mu + t_hat / scale - a_hat * mu;
  return model;
}

PointCloud backproject_submap(const Submap& s, double tau_conf,
                              std::span<const int> frame_ids) {
  PointCloud cloud;
  std::vector<int> frames(frame_ids.begin(), frame_ids.end());
  if (frames.empty()) frames = s.primary_frame_ids;
  for (int fid : frames) {
    const SubmapFrame* f = s.find(fid, CameraId::Primary);
    if (!f) continue;
    for (int y = 0; y < f->depth.height; ++y) {
      for (int x = 0; x < f->depth.width; ++x) {
        const double conf = f->confidence.at(x, y);
        const double depth = f->depth.at(x, y);
        if (conf <= tau_conf || depth <= 0.0) continue;
        cloud.points.push_back(
            f->local_pose.apply(s.k_est.back_project(Vec2(x, y), depth)));
        cloud.confidence.push_back(conf);
      }
    }
  }
  return cloud;
}

PointCloud deform_submap(const Submap& s, const TpsModel& model,
                         const Pose& world_from_local, double tau_conf,
                         std::span<const int> frame_ids) {
  PointCloud cloud = backproject_submap(s, tau_conf, frame_ids);
  for (auto& p : cloud.points) {
    p = world_from_local.apply(model.apply(p));
  }
  return cloud;
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open cloud file: " + path);
  os << "# duet point cloud v1\n";
  os << cloud.points.size() << "\n";
  char line[160];
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g\n",
                  cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z(),
                  i < cloud.confidence.size() ? cloud.confidence[i] : 1.0);
    os << line;
  }
}

PointCloud read_cloud(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open cloud file: " + path);
  std::string line;
  std::getline(is, line);  // header comment
  size_t count = 0;
  is >> count;
  PointCloud cloud;
  cloud.points.reserve(count);
  cloud.confidence.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Vec3 p;
    double c;
    is >> p.x() >> p.y() >> p.z() >> c;
    if (!is) throw std::runtime_error("cloud file truncated: " + path);
    cloud.points.push_back(p);
    cloud.confidence.push_back(c);
  }
  return cloud;
}

}  // namespace duet
