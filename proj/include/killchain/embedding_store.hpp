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

#include "killchain/catalog.hpp"

namespace killchain {

/// Reserved id of the report context vector in embedding files.
inline constexpr std::string_view kContextId = "__context__";

struct Embedding {
  std::string id;
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
};

/// Unit-normalized copy. Throws ValidationError for a zero or non-finite vector.
std::vector<double> normalized(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);

/// Dot product of unit vectors clamped to [-1,1]. Throws on dimension mismatch.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const Embedding& a, const Embedding& b);

/// Unit-normalized technique vectors plus an optional report context vector.
class EmbeddingStore {
 public:
  /// Normalizes every vector. Throws ValidationError on dimension mismatch,
  /// zero vectors or duplicate ids.
  EmbeddingStore(std::vector<Embedding> techniques, std::optional<Embedding> context = std::nullopt);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  std::span<const Embedding> embeddings() const noexcept { return vectors_; }

  bool has_context() const noexcept { return context_.has_value(); }
  /// Throws ValidationError when no context vector was loaded.
  const Embedding& context() const;

  const Embedding* find(std::string_view id) const;
  /// Throws ValidationError naming the id when it has no embedding.
  const Embedding& at(std::string_view id) const;

  /// Checks that every technique of `catalog` is embedded.
  void require_catalog(const Catalog& catalog) const;

 private:
  std::size_t dim_ = 0;
  std::vector<Embedding> vectors_;
  std::optional<Embedding> context_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

EmbeddingStore parse_embeddings(std::string_view text, const std::string& source = "<embeddings>",
                                std::optional<std::size_t> expected_dim = std::nullopt);
EmbeddingStore load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim = std::nullopt);

/// JSON Lines export, values rounded to 32-bit floats. Context row last.
std::string embeddings_to_jsonl(const EmbeddingStore& store);

/// Per-phase probability distributions over that phase's techniques.
class PhasePriors {
 public:
  using Distribution = std::map<std::string, double, std::less<>>;

  PhasePriors() = default;
  /// Throws ValidationError unless every phase is a probability distribution.
  explicit PhasePriors(std::array<Distribution, kNumPhases> per_phase);

  const Distribution& phase(Phase p) const noexcept { return per_phase_[static_cast<std::size_t>(ordinal(p))]; }

  /// Throws ValidationError when `id` has no prior in `p`.
  double prior(Phase p, std::string_view id) const;

  Json to_json() const;

 private:
  std::array<Distribution, kNumPhases> per_phase_;
};

inline constexpr double kDefaultPriorTemperature = 5.0;

/// prior(t) = softmax over t in phase of (temperature * cos(context, v_t)).
PhasePriors compute_phase_priors(const EmbeddingStore& store, const Catalog& catalog,
                                 double temperature = kDefaultPriorTemperature);

/// Externally produced weights, renormalized per phase. Techniques a phase
/// omits get prior 0.
PhasePriors parse_prior_override(std::string_view text, const Catalog& catalog,
                                 const std::string& source = "<priors>");
PhasePriors load_prior_override(const std::filesystem::path& path, const Catalog& catalog);

/// Max-subtracted softmax of `scale * x`.
std::vector<double> softmax(std::span<const double> x, double scale = 1.0);

}  // namespace killchain
