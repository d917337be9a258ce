#include "duet/pgo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace duet {

Vec6 residual_between(const Pose& meas, const Pose& a, const Pose& b) {
  return se3_log(meas.inverse() * b.inverse() * a);
}

void FactorGraph::note_pose(int i) {
  if (i < 0) throw std::invalid_argument("factor references a negative pose index");
  max_pose_index_ = std::max(max_pose_index_, i);
}

void FactorGraph::add_primary_odometry(std::span<const Pose> trajectory,
                                       int window, const NoiseModel& noise) {
  const int n = static_cast<int>(trajectory.size());
  for (int i = 1; i < n; ++i) {
    for (int k = 1; k <= std::min(window, i); ++k) {
      const int j = i - k;
      add_odometry_factor(i, j, trajectory[j].inverse() * trajectory[i], noise);
    }
  }
}

void FactorGraph::add_odometry_factor(int i, int j, const Pose& meas,
                                      const NoiseModel& noise) {
  note_pose(i);
  note_pose(j);
  factors_.push_back({FactorKind::PrimaryOdometry, i, j, meas, noise});
}

void FactorGraph::add_assistant_factor(int i, int j, const Pose& meas,
                                       const NoiseModel& noise) {
  if (i == j) throw std::invalid_argument("assistant factor with i == j");
  note_pose(i);
  note_pose(j);
  has_extrinsic_ = true;
  factors_.push_back({FactorKind::Assistant, i, j, meas, noise});
}

void FactorGraph::add_extrinsic_prior(const Pose& prior, const NoiseModel& noise) {
  has_extrinsic_ = true;
  factors_.push_back({FactorKind::ExtrinsicPrior, -1, -1, prior, noise});
}

void FactorGraph::add_loop_factor(int current, int historical, const Pose& t_loop,
                                  const NoiseModel& noise) {
  note_pose(current);
  note_pose(historical);
  factors_.push_back({FactorKind::Loop, current, historical, t_loop, noise});
}

FactorLinearization linearize_factor(const Factor& f, const GraphValues& values) {
  FactorLinearization lin;
  switch (f.kind) {
    case FactorKind::PrimaryOdometry:
    case FactorKind::Loop: {
      const Pose& a = values.poses.at(f.a);
      const Pose& b = values.poses.at(f.b);
      lin.residual = residual_between(f.measurement, a, b);
      const Mat6 jr_inv = se3_right_jacobian_inverse(lin.residual);
      lin.j_a = jr_inv;
      lin.j_b = -jr_inv * se3_adjoint(a.inverse() * b);
      lin.uses_a = lin.uses_b = true;
      break;
    }
    case FactorKind::Assistant: {
      const Pose& ti = values.poses.at(f.a);
      const Pose& tj = values.poses.at(f.b);
      const Pose& ext = values.extrinsic;
      const Pose x = f.measurement.inverse() * (tj * ext).inverse() * (ti * ext);
      lin.residual = se3_log(x);
      const Mat6 jr_inv = se3_right_jacobian_inverse(lin.residual);
      lin.j_a = jr_inv * se3_adjoint(ext.inverse());
      lin.j_b = -jr_inv * se3_adjoint(ext.inverse() * ti.inverse() * tj);
      const Pose v_inv = ext.inverse() * ti.inverse() * tj * ext;
      lin.j_ext = jr_inv * (Mat6::Identity() - se3_adjoint(v_inv));
      lin.uses_a = lin.uses_b = lin.uses_ext = true;
      break;
    }
    case FactorKind::ExtrinsicPrior: {
      lin.residual = se3_log(f.measurement.inverse() * values.extrinsic);
      lin.j_ext = se3_right_jacobian_inverse(lin.residual);
      lin.uses_ext = true;
      break;
    }
  }
  return lin;
}

namespace {

// Huber on the whitened norm; rho(s) with s the squared norm.
double robust_cost(double squared_norm, bool robust, double delta) {
  if (!robust) return squared_norm;
  const double norm = std::sqrt(squared_norm);
  if (norm <= delta) return squared_norm;
  return 2.0 * delta * norm - delta * delta;
}

double robust_weight(double squared_norm, bool robust, double delta) {
  if (!robust) return 1.0;
  const double norm = std::sqrt(squared_norm);
  if (norm <= delta) return 1.0;
  return delta / norm;
}

double total_cost(const FactorGraph& graph, const GraphValues& values,
                  double loop_huber) {
  double cost = 0.0;
  for (const auto& f : graph.factors()) {
    const FactorLinearization lin = linearize_factor(f, values);
    const Vec6 w = lin.residual.cwiseQuotient(f.noise.sigmas());
    cost += robust_cost(w.squaredNorm(), f.kind == FactorKind::Loop, loop_huber);
  }
  return cost;
}

GraphValues retract(const GraphValues& values, const Eigen::VectorXd& delta,
                    int n_poses, bool has_ext) {
  GraphValues out = values;
  for (int i = 1; i < n_poses; ++i) {
    out.poses[i] = values.poses[i] * se3_exp(delta.segment<6>((i - 1) * 6));
  }
  if (has_ext) {
    out.extrinsic = values.extrinsic * se3_exp(delta.segment<6>((n_poses - 1) * 6));
  }
  return out;
}

}  // namespace

double graph_cost(const FactorGraph& graph, const GraphValues& values,
                  double loop_huber) {
  return total_cost(graph, values, loop_huber);
}

OptimizeResult optimize(const FactorGraph& graph, const GraphValues& initial,
                        const OptimizeOptions& opts) {
  const int n_poses = static_cast<int>(initial.poses.size());
  if (graph.max_pose_index() >= n_poses) {
    throw std::invalid_argument("optimize: factor references a missing pose");
  }
  const bool has_ext = graph.has_extrinsic();
  const int dim = std::max(0, (n_poses - 1) * 6) + (has_ext ? 6 : 0);

  OptimizeResult result;
  result.values = initial;
  result.initial_cost = total_cost(graph, initial, opts.loop_huber);
  result.final_cost = result.initial_cost;
  if (dim == 0) {
    result.converged = true;
    return result;
  }

  // Parameter layout: pose i > 0 at (i-1)*6, extrinsic last. Pose 0 is the
  // gauge and never updated.
  auto param_index = [&](int pose) { return (pose - 1) * 6; };
  const int ext_index = (n_poses - 1) * 6;

  double lambda = opts.lambda_init;
  GraphValues current = initial;
  double current_cost = result.initial_cost;
  result.accepted_costs.push_back(current_cost);

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    // Assemble the normal equations from whitened, robust-weighted blocks.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(graph.factors().size() * 144);

    auto add_block = [&](int row, int col, const Mat6& m) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          if (m(r, c) != 0.0) triplets.emplace_back(row + r, col + c, m(r, c));
        }
      }
    };

    for (const auto& f : graph.factors()) {
      const FactorLinearization lin = linearize_factor(f, current);
      const Vec6 inv_sigma = f.noise.sigmas().cwiseInverse();
      const Vec6 rw = lin.residual.cwiseProduct(inv_sigma);
      const double weight =
          robust_weight(rw.squaredNorm(), f.kind == FactorKind::Loop, opts.loop_huber);

      struct BlockRef {
        bool used;
        int index;
        const Mat6* jac;
      };
      const BlockRef blocks[3] = {
          {lin.uses_a && f.a > 0, lin.uses_a && f.a > 0 ? param_index(f.a) : 0, &lin.j_a},
          {lin.uses_b && f.b > 0, lin.uses_b && f.b > 0 ? param_index(f.b) : 0, &lin.j_b},
          {lin.uses_ext, ext_index, &lin.j_ext}};

      for (const auto& bi : blocks) {
        if (!bi.used) continue;
        const Mat6 jw = inv_sigma.asDiagonal() * (*bi.jac);
        g.segment<6>(bi.index) += weight * jw.transpose() * rw;
        for (const auto& bj : blocks) {
          if (!bj.used) continue;
          const Mat6 jw2 = inv_sigma.asDiagonal() * (*bj.jac);
          add_block(bi.index, bj.index, weight * jw.transpose() * jw2);
        }
      }
    }

    const double gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (iter == 0) result.initial_gradient_norm = gradient_norm;
    if (gradient_norm < opts.gradient_tol) {
      result.converged = true;
      break;
    }

    Eigen::SparseMatrix<double> h(dim, dim);
    h.setFromTriplets(triplets.begin(), triplets.end());

    bool accepted = false;
    while (!accepted) {
      Eigen::SparseMatrix<double> damped = h;
      for (int d = 0; d < dim; ++d) damped.coeffRef(d, d) += lambda;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      bool ok = solver.info() == Eigen::Success;
      Eigen::VectorXd delta;
      if (ok) {
        delta = solver.solve(-g);
        ok = solver.info() == Eigen::Success && delta.allFinite();
      }
      if (ok) {
        const GraphValues candidate = retract(current, delta, n_poses, has_ext);
        const double candidate_cost = total_cost(graph, candidate, opts.loop_huber);
        if (candidate_cost <= current_cost) {
          const double decrease =
              (current_cost - candidate_cost) / std::max(current_cost, 1e-300);
          current = candidate;
          current_cost = candidate_cost;
          result.accepted_costs.push_back(current_cost);
          lambda = std::max(lambda / 10.0, opts.lambda_min);
          accepted = true;
          ++result.iterations;
          if (decrease < opts.relative_cost_tol) {
            result.converged = true;
            iter = opts.max_iterations;  // leave the outer loop
          }
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > opts.lambda_max) {
        if (!ok) {
          throw std::runtime_error(
              "optimize: singular normal equations at maximum damping");
        }
        result.converged = true;  // no descent direction left
        iter = opts.max_iterations;
        accepted = true;
      }
    }
  }

  result.values = current;
  result.final_cost = current_cost;
  return result;
}

// ---------------------------------------------------------------------------

namespace {

const char* kind_token(FactorKind k) {
  switch (k) {
    case FactorKind::PrimaryOdometry: return "odom";
    case FactorKind::Assistant: return "assistant";
    case FactorKind::ExtrinsicPrior: return "prior";
    case FactorKind::Loop: return "loop";
  }
  return "?";
}

}  // namespace

void FactorGraph::write(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open graph file: " + path);
  os << "# duet factor graph v1\n";
  os << "# kind a b tx ty tz qx qy qz qw sig_rx sig_ry sig_rz sig_tx sig_ty sig_tz\n";
  char line[512];
  for (const auto& f : factors_) {
    const Vec4 q = rotation_to_quaternion(f.measurement.R);
    const Vec6 s = f.noise.sigmas();
    std::snprintf(line, sizeof(line),
                  "%s %d %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                  "%.17g %.17g %.17g %.17g %.17g %.17g\n",
                  kind_token(f.kind), f.a, f.b, f.measurement.t.x(),
                  f.measurement.t.y(), f.measurement.t.z(), q(0), q(1), q(2),
                  q(3), s(0), s(1), s(2), s(3), s(4), s(5));
    os << line;
  }
}

FactorGraph FactorGraph::read(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open graph file: " + path);
  FactorGraph g;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    int a = 0, b = 0;
    Vec3 t;
    Vec4 q;
    Vec6 s;
    ss >> kind >> a >> b >> t.x() >> t.y() >> t.z() >> q(0) >> q(1) >> q(2) >>
        q(3) >> s(0) >> s(1) >> s(2) >> s(3) >> s(4) >> s(5);
    if (!ss) throw std::runtime_error("malformed graph line: " + line);
    const Pose meas{quaternion_to_rotation(q), t};
    const NoiseModel noise{s(0), s(3)};
    if (kind == "odom") {
      g.add_odometry_factor(a, b, meas, noise);
    } else if (kind == "assistant") {
      g.add_assistant_factor(a, b, meas, noise);
    } else if (kind == "prior") {
      g.add_extrinsic_prior(meas, noise);
    } else if (kind == "loop") {
      g.add_loop_factor(a, b, meas, noise);
    } else {
      throw std::runtime_error("unknown factor kind: " + kind);
    }
  }
  return g;
}

}  // namespace duet
