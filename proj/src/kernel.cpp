#include "killchain/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "killchain/error.hpp"

namespace killchain {

TransitionKernel::TransitionKernel(const Catalog& catalog, double alpha, std::vector<Row> rows)
    : alpha_(alpha), rows_(std::move(rows)) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("kernel alpha must be finite and nonnegative");
  if (rows_.size() != catalog.size()) throw ValidationError("kernel does not cover the catalog");
  ids_.reserve(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const Technique& t = catalog[i];
    ids_.push_back(t.id);
    index_.emplace(t.id, i);
    const Row& r = rows_[i];
    auto next = next_phase(t.phase);
    if (!next) {
      if (!r.successors.empty()) throw ValidationError("terminal technique " + t.id + " has a kernel row");
      continue;
    }
    auto expected = catalog.phase_indices(*next);
    if (r.successors.size() != expected.size() || r.probs.size() != expected.size() ||
        !std::equal(expected.begin(), expected.end(), r.successors.begin()))
      throw ValidationError("kernel row of " + t.id + " must cover exactly the next phase");
    double sum = 0.0;
    for (double p : r.probs) {
      if (!(p >= 0.0)) throw ValidationError("kernel row of " + t.id + " has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("kernel row of " + t.id + " does not sum to 1");
  }
}

std::size_t TransitionKernel::checked_index(std::string_view id) const {
  auto it = index_.find(id);
  if (it != index_.end()) return it->second;
  throw ValidationError("kernel has no technique " + std::string(id));
}

double TransitionKernel::probability(std::string_view from, std::string_view to) const {
  const Row& r = row(from);
  for (std::size_t k = 0; k < r.successors.size(); ++k)
    if (ids_[r.successors[k]] == to) return r.probs[k];
  throw ValidationError("missing kernel entry " + std::string(from) + " -> " + std::string(to));
}

Json TransitionKernel::to_json() const {
  Json rows = Json::object();
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].successors.empty()) continue;
    Json row = Json::object();
    for (std::size_t k = 0; k < rows_[i].successors.size(); ++k) row[ids_[rows_[i].successors[k]]] = rows_[i].probs[k];
    rows[ids_[i]] = row;
  }
  return {{"alpha", alpha_}, {"rows", rows}};
}

bool operator==(const TransitionKernel& a, const TransitionKernel& b) {
  if (a.alpha_ != b.alpha_ || a.ids_ != b.ids_ || a.rows_.size() != b.rows_.size()) return false;
  for (std::size_t i = 0; i < a.rows_.size(); ++i)
    if (a.rows_[i].successors != b.rows_[i].successors || a.rows_[i].probs != b.rows_[i].probs) return false;
  return true;
}

TransitionKernel::Row kernel_row(const Catalog& catalog, const EmbeddingStore& store, std::size_t i, double alpha) {
  TransitionKernel::Row row;
  auto next = next_phase(catalog[i].phase);
  if (!next) return row;
  const Embedding& from = store.at(catalog[i].id);
  auto succ = catalog.phase_indices(*next);
  row.successors.assign(succ.begin(), succ.end());
  std::vector<double> sims(succ.size());
  for (std::size_t k = 0; k < succ.size(); ++k) sims[k] = cosine(from, store.at(catalog[succ[k]].id));
  row.probs = softmax(sims, alpha);
  return row;
}

TransitionKernel build_kernel(const Catalog& catalog, const EmbeddingStore& store, double alpha) {
  store.require_catalog(catalog);
  std::vector<TransitionKernel::Row> rows(catalog.size());
  const auto n = static_cast<std::ptrdiff_t>(catalog.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = kernel_row(catalog, store, static_cast<std::size_t>(i), alpha);
  return TransitionKernel(catalog, alpha, std::move(rows));
}

namespace reference {

TransitionKernel build_kernel(const Catalog& catalog, const EmbeddingStore& store, double alpha) {
  store.require_catalog(catalog);
  std::vector<TransitionKernel::Row> rows;
  rows.reserve(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) rows.push_back(kernel_row(catalog, store, i, alpha));
  return TransitionKernel(catalog, alpha, std::move(rows));
}

}  // namespace reference

TransitionKernel kernel_from_json(const Json& j, const Catalog& catalog) {
  if (!j.is_object() || !j.contains("alpha") || !j.contains("rows") || !j["alpha"].is_number() || !j["rows"].is_object())
    throw ValidationError("kernel JSON must be {\"alpha\": a, \"rows\": {...}}");
  std::vector<TransitionKernel::Row> rows(catalog.size());
  for (auto it = j["rows"].begin(); it != j["rows"].end(); ++it) {
    std::size_t i = catalog.checked_index(it.key());
    auto next = next_phase(catalog[i].phase);
    if (!next) throw ValidationError("terminal technique " + it.key() + " has a kernel row");
    for (std::size_t s : catalog.phase_indices(*next)) {
      auto p = it->find(catalog[s].id);
      if (p == it->end() || !p->is_number())
        throw ValidationError("kernel row " + it.key() + " lacks successor " + catalog[s].id);
      rows[i].successors.push_back(s);
      rows[i].probs.push_back(p->get<double>());
    }
    if (it->size() != rows[i].successors.size())
      throw ValidationError("kernel row " + it.key() + " lists techniques outside the next phase");
  }
  for (std::size_t i = 0; i < catalog.size(); ++i)
    if (next_phase(catalog[i].phase) && rows[i].successors.empty())
      throw ValidationError("kernel lacks a row for " + catalog[i].id);
  return TransitionKernel(catalog, j["alpha"].get<double>(), std::move(rows));
}

}  // namespace killchain
