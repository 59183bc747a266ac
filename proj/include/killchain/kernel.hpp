#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "killchain/catalog.hpp"
#include "killchain/embedding_store.hpp"

namespace killchain {

inline constexpr double kDefaultAlpha = 4.0;

/// Phase-local transition kernel P(t'|t): every non-terminal technique has a
/// distribution over the techniques of the following phase.
class TransitionKernel {
 public:
  struct Row {
    std::vector<std::size_t> successors;  // catalog indices, catalog order
    std::vector<double> probs;
  };

  /// `rows[i]` belongs to catalog technique i; objectives rows stay empty.
  /// Throws ValidationError if a row is not a distribution over the next phase.
  TransitionKernel(const Catalog& catalog, double alpha, std::vector<Row> rows);

  double alpha() const noexcept { return alpha_; }
  std::size_t size() const noexcept { return rows_.size(); }

  /// Row of catalog technique `i`; empty for terminal techniques.
  const Row& row(std::size_t i) const { return rows_.at(i); }
  const Row& row(std::string_view id) const { return rows_[checked_index(id)]; }

  /// Throws ValidationError when `to` is not a legal successor of `from`.
  double probability(std::string_view from, std::string_view to) const;

  std::string_view id(std::size_t i) const { return ids_.at(i); }
  std::size_t checked_index(std::string_view id) const;

  Json to_json() const;

  friend bool operator==(const TransitionKernel& a, const TransitionKernel& b);

 private:
  double alpha_;
  std::vector<std::string> ids_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<Row> rows_;
};

/// Row of technique `i`: softmax over next-phase u of alpha * cos(v_t, v_u).
TransitionKernel::Row kernel_row(const Catalog& catalog, const EmbeddingStore& store, std::size_t i, double alpha);

/// OpenMP-parallel over rows.
TransitionKernel build_kernel(const Catalog& catalog, const EmbeddingStore& store, double alpha = kDefaultAlpha);

/// Rebuilds a kernel from its JSON export, validated against `catalog`.
TransitionKernel kernel_from_json(const Json& j, const Catalog& catalog);

namespace reference {
/// Serial row loop; must agree bitwise with killchain::build_kernel.
TransitionKernel build_kernel(const Catalog& catalog, const EmbeddingStore& store, double alpha = kDefaultAlpha);
}  // namespace reference

}  // namespace killchain
