#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "killchain/io.hpp"
#include "killchain/phase.hpp"

namespace killchain {

/// Score used when a catalog entry omits a detection/mitigation field.
inline constexpr double kDefaultScore = 0.5;

struct Technique {
  std::string id;
  std::string name;
  Phase phase = Phase::recon;
  std::string description;
  double detection_score = kDefaultScore;     // argument of the logistic in Stealth
  double mitigation_score = kDefaultScore;    // M(t)
  double detection_coverage = kDefaultScore;  // D(t)

  friend bool operator==(const Technique&, const Technique&) = default;
};

/// True for `T1234` and `T1234.567`.
bool is_valid_technique_id(std::string_view id);

/// Immutable, validated technique catalog indexed by id and by phase.
///
/// Every phase holds at least one technique and every id is unique. Catalog
/// order is preserved both globally and within each phase.
class Catalog {
 public:
  /// Validates and indexes. Throws ValidationError on any contract violation.
  explicit Catalog(std::vector<Technique> techniques);

  std::span<const Technique> techniques() const noexcept { return techniques_; }
  std::size_t size() const noexcept { return techniques_.size(); }
  const Technique& operator[](std::size_t i) const { return techniques_[i]; }

  /// Catalog indices of the techniques in `p`, in catalog order.
  std::span<const std::size_t> phase_indices(Phase p) const noexcept {
    return by_phase_[static_cast<std::size_t>(ordinal(p))];
  }

  std::optional<std::size_t> index_of(std::string_view id) const;

  /// Throws ValidationError naming the id when it is not catalogued.
  const Technique& at(std::string_view id) const;
  std::size_t checked_index(std::string_view id) const;

  bool contains(std::string_view id) const { return index_of(id).has_value(); }

  friend bool operator==(const Catalog& a, const Catalog& b) { return a.techniques_ == b.techniques_; }

 private:
  std::vector<Technique> techniques_;
  std::array<std::vector<std::size_t>, kNumPhases> by_phase_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// All and only the techniques of `phase`, in catalog order.
std::vector<Technique> techniques_in_phase(const Catalog& catalog, Phase phase);

/// Ids of the techniques of `phase`, in catalog order.
std::vector<std::string> ids_in_phase(const Catalog& catalog, Phase phase);

Catalog parse_catalog(std::string_view text, const std::string& source = "<catalog>");
Catalog load_catalog(const std::filesystem::path& path);

Json catalog_to_json(const Catalog& catalog);
void save_catalog(const Catalog& catalog, const std::filesystem::path& path);

}  // namespace killchain
