#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dstream {

/// Partition of the ranks 0..P-1 into named, disjoint, non-empty groups,
/// plus a mapping that assigns every named operation to exactly one group.
class GroupLayout {
 public:
  GroupLayout() = default;
  GroupLayout(int total_ranks,
              std::vector<std::pair<std::string, std::vector<int>>> groups,
              std::map<std::string, std::string> op_map = {});

  int total_ranks() const noexcept { return total_ranks_; }
  const std::vector<std::pair<std::string, std::vector<int>>>& groups() const noexcept {
    return groups_;
  }

  bool has_group(std::string_view id) const;
  /// Ordered member ranks of a group. Throws UsageError for unknown ids.
  const std::vector<int>& members(std::string_view id) const;
  /// Group containing `rank`, if any.
  std::optional<std::string> group_of(int rank) const;
  bool contains(std::string_view id, int rank) const;

  /// Fraction of all ranks held by `id` (the group-share knob of the model).
  double fraction(std::string_view id) const;

  const std::map<std::string, std::string>& op_map() const noexcept { return op_map_; }
  /// Group assigned to an operation name. Throws UsageError for unknown ops.
  const std::string& group_for_op(std::string_view op) const;

  /// All ranks in one group.
  static GroupLayout single_group(int total_ranks, std::string id = "all");
  /// Ranks [0, P-n) in `first`, [P-n, P) in `second`.
  static GroupLayout split_tail(int total_ranks, std::string first, std::string second,
                                int second_size);

 private:
  void validate() const;

  int total_ranks_ = 0;
  std::vector<std::pair<std::string, std::vector<int>>> groups_;
  std::map<std::string, std::string> op_map_;
};

}  // namespace dstream
