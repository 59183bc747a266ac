#include "killchain/catalog.hpp"

#include <algorithm>
#include <regex>

#include "killchain/error.hpp"

namespace killchain {

bool is_valid_technique_id(std::string_view id) {
  static const std::regex pattern(R"(T\d{4}(\.\d{3})?)");
  return std::regex_match(id.begin(), id.end(), pattern);
}

Catalog::Catalog(std::vector<Technique> techniques) : techniques_(std::move(techniques)) {
  for (std::size_t i = 0; i < techniques_.size(); ++i) {
    const Technique& t = techniques_[i];
    if (!is_valid_technique_id(t.id))
      throw ValidationError("technique id '" + t.id + "' does not match T####[.###]");
    for (double s : {t.detection_score, t.mitigation_score, t.detection_coverage})
      if (!(s >= 0.0 && s <= 1.0))
        throw ValidationError("technique " + t.id + ": scores must lie in [0,1]");
    if (!index_.emplace(t.id, i).second) throw ValidationError("duplicate technique id " + t.id);
    by_phase_[static_cast<std::size_t>(ordinal(t.phase))].push_back(i);
  }
  for (Phase p : kAllPhases)
    if (phase_indices(p).empty())
      throw ValidationError("phase '" + std::string(phase_name(p)) + "' has no techniques");
}

std::optional<std::size_t> Catalog::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Catalog::checked_index(std::string_view id) const {
  auto i = index_of(id);
  if (!i) throw ValidationError("unknown technique id " + std::string(id));
  return *i;
}

const Technique& Catalog::at(std::string_view id) const { return techniques_[checked_index(id)]; }

std::vector<Technique> techniques_in_phase(const Catalog& catalog, Phase phase) {
  std::vector<Technique> out;
  for (std::size_t i : catalog.phase_indices(phase)) out.push_back(catalog[i]);
  return out;
}

std::vector<std::string> ids_in_phase(const Catalog& catalog, Phase phase) {
  std::vector<std::string> out;
  for (std::size_t i : catalog.phase_indices(phase)) out.push_back(catalog[i].id);
  return out;
}

namespace {

Technique technique_from_json(const Json& entry, std::size_t index, const std::string& source) {
  auto fail = [&](const std::string& what) {
    return ValidationError(source + ": entry " + std::to_string(index) + ": " + what);
  };
  if (!entry.is_object()) throw fail("expected an object");
  for (auto it = entry.begin(); it != entry.end(); ++it) {
    static const std::array<std::string_view, 7> known = {
        "id", "name", "phase", "description", "detection_score", "mitigation_score", "detection_coverage"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) throw fail("unknown key '" + it.key() + "'");
  }
  auto text = [&](const char* key) {
    auto it = entry.find(key);
    if (it == entry.end() || !it->is_string()) throw fail(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
  };
  auto score = [&](const char* key) {
    auto it = entry.find(key);
    if (it == entry.end() || it->is_null()) return kDefaultScore;
    if (!it->is_number()) throw fail(std::string("field '") + key + "' must be a number");
    return it->get<double>();
  };

  Technique t;
  t.id = text("id");
  t.name = text("name");
  std::string phase = text("phase");
  auto p = parse_phase(phase);
  if (!p) throw fail("unknown phase '" + phase + "'");
  t.phase = *p;
  t.description = text("description");
  t.detection_score = score("detection_score");
  t.mitigation_score = score("mitigation_score");
  t.detection_coverage = score("detection_coverage");
  return t;
}

}  // namespace

Catalog parse_catalog(std::string_view text, const std::string& source) {
  Json doc = parse_json(text, source);
  if (!doc.is_array()) throw ValidationError(source + ": catalog must be a JSON array");
  std::vector<Technique> techniques;
  techniques.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) techniques.push_back(technique_from_json(doc[i], i, source));
  try {
    return Catalog(std::move(techniques));
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

Catalog load_catalog(const std::filesystem::path& path) {
  return parse_catalog(read_text_file(path), path.string());
}

Json catalog_to_json(const Catalog& catalog) {
  Json out = Json::array();
  for (const Technique& t : catalog.techniques()) {
    out.push_back({{"id", t.id},
                   {"name", t.name},
                   {"phase", std::string(phase_name(t.phase))},
                   {"description", t.description},
                   {"detection_score", t.detection_score},
                   {"mitigation_score", t.mitigation_score},
                   {"detection_coverage", t.detection_coverage}});
  }
  return out;
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path) {
  write_text_file(path, dump_json(catalog_to_json(catalog)));
}

}  // namespace killchain
