#include "duet/intrinsic_search.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace duet {

double score(const Intrinsics& k, const Mat3& f) {
  const Mat3 e = essential_from_f(f, k);
  Eigen::JacobiSVD<Mat3> svd(e);
  const Vec3 sv = svd.singularValues();
  if (sv(0) <= 1e-300) {
    throw std::runtime_error("score: essential matrix is numerically zero");
  }
  return (sv(0) - sv(1)) / sv(0) + sv(2) / sv(0);
}

TestBank::TestBank(const BankConfig& cfg, const Intrinsics& initial)
    : cfg_(cfg), k_global_(initial) {
  candidates_.push_back(initial);
}

double TestBank::bank_score(const Intrinsics& k) const {
  if (groups_.empty()) throw std::runtime_error("bank_score: empty bank");
  double sum = 0.0;
  int count = 0;
  for (const auto& g : groups_) {
    for (const auto& f : g.fundamentals) {
      sum += score(k, f);
      ++count;
    }
  }
  return sum / count;
}

bool TestBank::try_add_group(std::span<const std::pair<Mat3, int>> pairs) {
  TestGroup group;
  for (const auto& [f, matches] : pairs) {
    if (matches > cfg_.n_feature) {
      group.fundamentals.push_back(f);
      group.match_counts.push_back(matches);
    }
  }
  if (static_cast<int>(group.fundamentals.size()) < cfg_.n_pair) {
    return false;
  }
  if (static_cast<int>(groups_.size()) >= cfg_.n_group) {
    total_ -= static_cast<int>(groups_.front().fundamentals.size());
    groups_.pop_front();
  }
  total_ += static_cast<int>(group.fundamentals.size());
  groups_.push_back(std::move(group));
  reselect();
  return true;
}

void TestBank::reselect() {
  if (groups_.empty()) return;
  double best = bank_score(k_global_);
  Intrinsics best_k = k_global_;
  for (const auto& k : candidates_) {
    const double s = bank_score(k);
    if (s < best) {  // strict: ties keep the incumbent
      best = s;
      best_k = k;
    }
  }
  if (!(best_k == k_global_)) {
    k_global_ = best_k;
    ++version_;
  }
}

bool TestBank::propose_candidate(const Intrinsics& k) {
  if (std::find(candidates_.begin(), candidates_.end(), k) == candidates_.end()) {
    candidates_.push_back(k);
  }
  if (groups_.empty()) return false;
  if (bank_score(k) < bank_score(k_global_)) {
    k_global_ = k;
    ++version_;
    return true;
  }
  return false;
}

double TestBank::damping_factor() const {
  const long denom =
      static_cast<long>(cfg_.n_group) * cfg_.n_pair * cfg_.n_feature;
  if (denom <= 0) return 0.0;
  const long tenths = std::min(10L * total_ / denom, 10L);
  return static_cast<double>(tenths) / 10.0;
}

void TestBank::dump_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open bank dump: " + path);
  char line[256];
  os << "section,index,fx,fy,cx,cy,score,matrices\n";
  for (size_t gi = 0; gi < groups_.size(); ++gi) {
    double sum = 0.0;
    for (const auto& f : groups_[gi].fundamentals) sum += score(k_global_, f);
    std::snprintf(line, sizeof(line), "group,%zu,,,,,%.9g,%zu\n", gi,
                  sum / groups_[gi].fundamentals.size(),
                  groups_[gi].fundamentals.size());
    os << line;
  }
  for (size_t ci = 0; ci < candidates_.size(); ++ci) {
    const auto& k = candidates_[ci];
    if (groups_.empty()) {
      std::snprintf(line, sizeof(line), "candidate,%zu,%.9g,%.9g,%.9g,%.9g,,\n",
                    ci, k.fx, k.fy, k.cx, k.cy);
    } else {
      std::snprintf(line, sizeof(line),
                    "candidate,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,\n", ci, k.fx,
                    k.fy, k.cx, k.cy, bank_score(k));
    }
    os << line;
  }
}

}  // namespace duet
