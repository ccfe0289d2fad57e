#include "dstream/group.hpp"

#include <algorithm>

#include "dstream/errors.hpp"

namespace dstream {

GroupLayout::GroupLayout(int total_ranks,
                         std::vector<std::pair<std::string, std::vector<int>>> groups,
                         std::map<std::string, std::string> op_map)
    : total_ranks_(total_ranks), groups_(std::move(groups)), op_map_(std::move(op_map)) {
  validate();
}

void GroupLayout::validate() const {
  if (total_ranks_ <= 0) throw ValidationError("GroupLayout: total_ranks must be positive");
  std::vector<char> seen(static_cast<std::size_t>(total_ranks_), 0);
  for (const auto& [id, ranks] : groups_) {
    if (id.empty()) throw ValidationError("GroupLayout: empty group id");
    if (ranks.empty()) throw ValidationError("GroupLayout: group '" + id + "' is empty");
    for (int r : ranks) {
      if (r < 0 || r >= total_ranks_)
        throw ValidationError("GroupLayout: rank " + std::to_string(r) + " in group '" + id +
                              "' is out of range for P=" + std::to_string(total_ranks_));
      if (seen[static_cast<std::size_t>(r)]++)
        throw ValidationError("GroupLayout: rank " + std::to_string(r) +
                              " appears in more than one group");
    }
  }
  for (int r = 0; r < total_ranks_; ++r)
    if (!seen[static_cast<std::size_t>(r)])
      throw ValidationError("GroupLayout: rank " + std::to_string(r) +
                            " is not assigned to any group");
  for (std::size_t i = 0; i < groups_.size(); ++i)
    for (std::size_t j = i + 1; j < groups_.size(); ++j)
      if (groups_[i].first == groups_[j].first)
        throw ValidationError("GroupLayout: duplicate group id '" + groups_[i].first + "'");
  for (const auto& [op, gid] : op_map_)
    if (!has_group(gid))
      throw ValidationError("GroupLayout: operation '" + op + "' mapped to unknown group '" +
                            gid + "'");
}

bool GroupLayout::has_group(std::string_view id) const {
  return std::any_of(groups_.begin(), groups_.end(),
                     [&](const auto& g) { return g.first == id; });
}

const std::vector<int>& GroupLayout::members(std::string_view id) const {
  for (const auto& [gid, ranks] : groups_)
    if (gid == id) return ranks;
  throw UsageError("GroupLayout: unknown group '" + std::string(id) + "'");
}

std::optional<std::string> GroupLayout::group_of(int rank) const {
  for (const auto& [gid, ranks] : groups_)
    if (std::find(ranks.begin(), ranks.end(), rank) != ranks.end()) return gid;
  return std::nullopt;
}

bool GroupLayout::contains(std::string_view id, int rank) const {
  const auto& m = members(id);
  return std::find(m.begin(), m.end(), rank) != m.end();
}

double GroupLayout::fraction(std::string_view id) const {
  return static_cast<double>(members(id).size()) / static_cast<double>(total_ranks_);
}

const std::string& GroupLayout::group_for_op(std::string_view op) const {
  auto it = op_map_.find(std::string(op));
  if (it == op_map_.end())
    throw UsageError("GroupLayout: no group mapped for operation '" + std::string(op) + "'");
  return it->second;
}

GroupLayout GroupLayout::single_group(int total_ranks, std::string id) {
  std::vector<int> ranks(static_cast<std::size_t>(total_ranks));
  for (int r = 0; r < total_ranks; ++r) ranks[static_cast<std::size_t>(r)] = r;
  return GroupLayout(total_ranks, {{std::move(id), std::move(ranks)}});
}

GroupLayout GroupLayout::split_tail(int total_ranks, std::string first, std::string second,
                                    int second_size) {
  if (second_size <= 0 || second_size >= total_ranks)
    throw ValidationError("GroupLayout::split_tail: second_size must be in (0, P)");
  std::vector<int> a, b;
  for (int r = 0; r < total_ranks - second_size; ++r) a.push_back(r);
  for (int r = total_ranks - second_size; r < total_ranks; ++r) b.push_back(r);
  return GroupLayout(total_ranks, {{std::move(first), std::move(a)}, {std::move(second), std::move(b)}});
}

}  // namespace dstream
