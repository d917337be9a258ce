#pragma once

#include <deque>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "duet/geometry.hpp"

namespace duet {

struct BankConfig {
  int n_feature = 10;  // matches a pair must exceed to qualify
  int n_pair = 10;     // qualified pairs a group needs
  int n_group = 5;     // bank capacity
};

/// |s1 - s2|/s1 + |s3|/s1 over the singular values of E = K^T F K.
/// Lower is better; 0 for an ideal essential matrix. Throws
/// std::runtime_error when E is numerically zero.
double score(const Intrinsics& k, const Mat3& f);

struct TestGroup {
  std::vector<Mat3> fundamentals;
  std::vector<int> match_counts;
};

/// Bounded bank of fundamental-matrix groups used to rank intrinsic
/// candidates. K_global always minimizes the mean score over the candidate
/// history; FIFO eviction at capacity; ties keep the incumbent.
class TestBank {
 public:
  TestBank(const BankConfig& cfg, const Intrinsics& initial);

  /// Mean score over every fundamental matrix in every group.
  /// Throws std::runtime_error when the bank is empty.
  double bank_score(const Intrinsics& k) const;

  /// Candidate pairs as (F, match count). Qualified pairs share more than
  /// n_feature matches; the group is instantiated only with at least n_pair
  /// of them. Re-evaluates the whole candidate history on success.
  bool try_add_group(std::span<const std::pair<Mat3, int>> pairs);

  /// Records the candidate and adopts it iff it strictly lowers the bank
  /// score. Returns true when K_global changed.
  bool propose_candidate(const Intrinsics& k);

  const Intrinsics& k_global() const { return k_global_; }

  /// Bumped every time k_global changes; pipelines key re-rectification
  /// and PGO triggers off this.
  int version() const { return version_; }

  /// lambda = clamp(floor_0.1(nbar / (n_pair n_feature)), 0, 1) with
  /// nbar = N_total / n_group. Exact in integer arithmetic.
  double damping_factor() const;

  int total_fundamentals() const { return total_; }
  bool empty() const { return groups_.empty(); }
  size_t group_count() const { return groups_.size(); }
  std::span<const Intrinsics> candidates() const { return candidates_; }

  void dump_csv(const std::string& path) const;

 private:
  void reselect();

  BankConfig cfg_;
  Intrinsics k_global_;
  std::deque<TestGroup> groups_;
  std::vector<Intrinsics> candidates_;
  int total_ = 0;
  int version_ = 0;
};

}  // namespace duet
