#include "killchain/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "killchain/error.hpp"

namespace killchain {

std::vector<double> normalized(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ValidationError("cannot normalize a zero or non-finite vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) { return std::clamp(dot(a, b), -1.0, 1.0); }

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim())
    throw ValidationError("dimension mismatch between '" + a.id + "' and '" + b.id + "'");
  return cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

std::vector<double> softmax(std::span<const double> x, double scale) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * x[i];
  double hi = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& z : out) sum += z = std::exp(z - hi);
  for (double& p : out) p /= sum;
  return out;
}

EmbeddingStore::EmbeddingStore(std::vector<Embedding> techniques, std::optional<Embedding> context)
    : vectors_(std::move(techniques)), context_(std::move(context)) {
  auto adopt = [this](Embedding& e) {
    if (e.dim() == 0) throw ValidationError("embedding '" + e.id + "' is empty");
    if (dim_ == 0) dim_ = e.dim();
    if (e.dim() != dim_)
      throw ValidationError("embedding '" + e.id + "' has dimension " + std::to_string(e.dim()) + ", expected " +
                            std::to_string(dim_));
    try {
      e.values = normalized(e.values);
    } catch (const ValidationError&) {
      throw ValidationError("embedding '" + e.id + "' has zero norm");
    }
  };
  for (std::size_t i = 0; i < vectors_.size(); ++i) {
    adopt(vectors_[i]);
    if (!index_.emplace(vectors_[i].id, i).second) throw ValidationError("duplicate embedding id '" + vectors_[i].id + "'");
  }
  if (context_) {
    context_->id = std::string(kContextId);
    adopt(*context_);
  }
  if (dim_ == 0) throw ValidationError("embedding store is empty");
}

const Embedding& EmbeddingStore::context() const {
  if (!context_) throw ValidationError("no context embedding ('" + std::string(kContextId) + "') loaded");
  return *context_;
}

const Embedding* EmbeddingStore::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &vectors_[it->second];
}

const Embedding& EmbeddingStore::at(std::string_view id) const {
  const Embedding* e = find(id);
  if (!e) throw ValidationError("missing embedding for technique " + std::string(id));
  return *e;
}

void EmbeddingStore::require_catalog(const Catalog& catalog) const {
  for (const Technique& t : catalog.techniques()) at(t.id);
}

EmbeddingStore parse_embeddings(std::string_view text, const std::string& source,
                                std::optional<std::size_t> expected_dim) {
  std::vector<Embedding> rows;
  std::optional<Embedding> context;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    Json row;
    try {
      row = Json::parse(line.begin(), line.end());
    } catch (const Json::parse_error&) {
      throw ParseError(source, line_no, "malformed JSON line");
    }
    auto id = row.find("id");
    auto vec = row.find("vec");
    if (!row.is_object() || id == row.end() || !id->is_string() || vec == row.end() || !vec->is_array())
      throw ParseError(source, line_no, "expected {\"id\": <string>, \"vec\": [<numbers>]}");
    Embedding e{id->get<std::string>(), {}};
    e.values.reserve(vec->size());
    for (const Json& x : *vec) {
      if (!x.is_number()) throw ParseError(source, line_no, "non-numeric vector entry");
      e.values.push_back(x.get<double>());
    }
    if (expected_dim && e.dim() != *expected_dim)
      throw ValidationError(source + ": embedding '" + e.id + "' has dimension " + std::to_string(e.dim()) +
                            ", expected " + std::to_string(*expected_dim));
    if (e.id == kContextId) {
      if (context) throw ParseError(source, line_no, "context embedding given twice");
      context = std::move(e);
    } else {
      rows.push_back(std::move(e));
    }
    if (end == text.size()) break;
  }
  try {
    return EmbeddingStore(std::move(rows), std::move(context));
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

EmbeddingStore load_embeddings(const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
  return parse_embeddings(read_text_file(path), path.string(), expected_dim);
}

std::string embeddings_to_jsonl(const EmbeddingStore& store) {
  std::ostringstream out;
  auto emit = [&out](const Embedding& e) {
    Json vec = Json::array();
    for (double x : e.values) vec.push_back(static_cast<float>(x));
    out << Json{{"id", e.id}, {"vec", vec}}.dump() << '\n';
  };
  for (const Embedding& e : store.embeddings()) emit(e);
  if (store.has_context()) emit(store.context());
  return out.str();
}

PhasePriors::PhasePriors(std::array<Distribution, kNumPhases> per_phase) : per_phase_(std::move(per_phase)) {
  for (Phase p : kAllPhases) {
    const Distribution& d = phase(p);
    if (d.empty()) throw ValidationError("no priors for phase " + std::string(phase_name(p)));
    double sum = 0.0;
    for (const auto& [id, w] : d) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("prior for " + id + " is negative or non-finite");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ValidationError("priors for phase " + std::string(phase_name(p)) + " sum to " + std::to_string(sum));
  }
}

double PhasePriors::prior(Phase p, std::string_view id) const {
  const Distribution& d = phase(p);
  auto it = d.find(id);
  if (it == d.end())
    throw ValidationError("missing prior for " + std::string(id) + " in phase " + std::string(phase_name(p)));
  return it->second;
}

Json PhasePriors::to_json() const {
  Json out = Json::object();
  for (Phase p : kAllPhases) {
    Json row = Json::object();
    for (const auto& [id, w] : phase(p)) row[id] = w;
    out[std::string(phase_name(p))] = row;
  }
  return out;
}

PhasePriors compute_phase_priors(const EmbeddingStore& store, const Catalog& catalog, double temperature) {
  if (!(temperature >= 0.0)) throw ValidationError("prior temperature must be nonnegative");
  const Embedding& ctx = store.context();
  std::array<PhasePriors::Distribution, kNumPhases> out;
  for (Phase p : kAllPhases) {
    auto idx = catalog.phase_indices(p);
    std::vector<double> cos(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) cos[k] = cosine(ctx, store.at(catalog[idx[k]].id));
    std::vector<double> prob = softmax(cos, temperature);
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<std::size_t>(ordinal(p))][catalog[idx[k]].id] = prob[k];
  }
  return PhasePriors(std::move(out));
}

PhasePriors parse_prior_override(std::string_view text, const Catalog& catalog, const std::string& source) {
  Json doc = parse_json(text, source);
  if (!doc.is_object()) throw ValidationError(source + ": prior override must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!parse_phase(it.key())) throw ValidationError(source + ": unknown phase '" + it.key() + "'");

  std::array<PhasePriors::Distribution, kNumPhases> out;
  for (Phase p : kAllPhases) {
    std::string name(phase_name(p));
    auto row = doc.find(name);
    if (row == doc.end() || !row->is_object()) throw ValidationError(source + ": missing weights for phase " + name);
    PhasePriors::Distribution& d = out[static_cast<std::size_t>(ordinal(p))];
    for (std::size_t i : catalog.phase_indices(p)) d[catalog[i].id] = 0.0;
    double sum = 0.0;
    for (auto it = row->begin(); it != row->end(); ++it) {
      auto idx = catalog.index_of(it.key());
      if (!idx) throw ValidationError(source + ": unknown technique id " + it.key());
      if (catalog[*idx].phase != p)
        throw ValidationError(source + ": technique " + it.key() + " does not belong to phase " + name);
      if (!it->is_number() || !(it->get<double>() >= 0.0))
        throw ValidationError(source + ": weight for " + it.key() + " must be a nonnegative number");
      d[it.key()] = it->get<double>();
      sum += it->get<double>();
    }
    if (!(sum > 0.0)) throw ValidationError(source + ": all weights are zero in phase " + name);
    for (auto& [id, w] : d) w /= sum;
  }
  return PhasePriors(std::move(out));
}

PhasePriors load_prior_override(const std::filesystem::path& path, const Catalog& catalog) {
  return parse_prior_override(read_text_file(path), catalog, path.string());
}

}  // namespace killchain
