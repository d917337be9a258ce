#include "duet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/SVD>

namespace duet {

AlignmentResult umeyama_alignment(std::span<const Vec3> est,
                                  std::span<const Vec3> gt, bool with_scale) {
  if (est.size() != gt.size() || est.size() < 2) {
    throw std::invalid_argument("umeyama_alignment: need >= 2 correspondences");
  }
  const double n = static_cast<double>(est.size());
  Vec3 mu_e = Vec3::Zero(), mu_g = Vec3::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    mu_e += est[i];
    mu_g += gt[i];
  }
  mu_e /= n;
  mu_g /= n;

  Mat3 cov = Mat3::Zero();
  double var_e = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    cov += (gt[i] - mu_g) * (est[i] - mu_e).transpose();
    var_e += (est[i] - mu_e).squaredNorm();
  }
  cov /= n;
  var_e /= n;

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }

  AlignmentResult out;
  out.R = svd.matrixU() * d * svd.matrixV().transpose();
  if (with_scale && var_e > 1e-30) {
    out.scale = (svd.singularValues().asDiagonal().toDenseMatrix() * d).trace() / var_e;
  }
  out.t = mu_g - out.scale * (out.R * mu_e);
  return out;
}

double ate(std::span<const Vec3> estimated, std::span<const Vec3> ground_truth,
           Alignment alignment) {
  if (estimated.size() != ground_truth.size() || estimated.size() < 2) {
    throw std::invalid_argument("ate: need >= 2 associated poses");
  }
  AlignmentResult a;
  if (alignment != Alignment::None) {
    a = umeyama_alignment(estimated, ground_truth, alignment == Alignment::Sim3);
  }
  double sum = 0.0;
  for (size_t i = 0; i < estimated.size(); ++i) {
    sum += (a.apply(estimated[i]) - ground_truth[i]).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(estimated.size()));
}

ScaleDriftResult scale_drift_windows(std::span<const Vec3> estimated,
                                     std::span<const Vec3> ground_truth,
                                     int window, int stride) {
  if (estimated.size() != ground_truth.size()) {
    throw std::invalid_argument("scale_drift_windows: size mismatch");
  }
  if (static_cast<int>(estimated.size()) < window) {
    throw std::invalid_argument("scale_drift_windows: trajectory shorter than one window");
  }
  ScaleDriftResult out;
  for (size_t start = 0; start + window <= estimated.size();
       start += static_cast<size_t>(stride)) {
    const auto fit = umeyama_alignment(estimated.subspan(start, window),
                                       ground_truth.subspan(start, window), true);
    out.normalized.push_back(fit.scale);
  }
  const double first = out.normalized.front();
  for (auto& s : out.normalized) s /= first;

  const double n = static_cast<double>(out.normalized.size());
  for (double s : out.normalized) {
    out.mean += s;
    out.mean_abs_error += std::abs(s - 1.0);
  }
  out.mean /= n;
  out.mean_abs_error /= n;
  double var = 0.0;
  for (double s : out.normalized) var += (s - out.mean) * (s - out.mean);
  out.stddev = std::sqrt(var / n);
  return out;
}

KdTree3::KdTree3(std::span<const Vec3> points)
    : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(0, static_cast<int>(points_.size()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     return points_[a](axis) < points_[b](axis);
                   });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({order_[mid], -1, -1, axis});
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid + 1, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree3::search(int node, const Vec3& query, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  best = std::min(best, (p - query).squaredNorm());
  const double diff = query(n.axis) - p(n.axis);
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, query, best);
  if (diff * diff <= best) search(far, query, best);
}

double KdTree3::nearest_squared(const Vec3& query) const {
  if (root_ < 0) throw std::invalid_argument("KdTree3: empty point set");
  double best = std::numeric_limits<double>::infinity();
  search(root_, query, best);
  return best;
}

CloudMetrics cloud_metrics(std::span<const Vec3> estimate,
                           std::span<const Vec3> truth) {
  if (estimate.empty() || truth.empty()) {
    throw std::invalid_argument("cloud_metrics: empty cloud");
  }
  const KdTree3 truth_tree(truth);
  const KdTree3 est_tree(estimate);
  CloudMetrics m;
  for (const auto& p : estimate) m.accuracy += std::sqrt(truth_tree.nearest_squared(p));
  m.accuracy /= static_cast<double>(estimate.size());
  for (const auto& p : truth) m.completeness += std::sqrt(est_tree.nearest_squared(p));
  m.completeness /= static_cast<double>(truth.size());
  m.chamfer = 0.5 * (m.accuracy + m.completeness);
  return m;
}

}  // namespace duet
