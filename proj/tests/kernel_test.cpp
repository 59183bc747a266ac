#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "killchain/error.hpp"
#include "killchain/kernel.hpp"
#include "support/fixtures.hpp"

using namespace killchain;
using killchain::testing::make_technique;
using killchain::testing::random_instance;

namespace {

double row_sum(const TransitionKernel::Row& r) {
  double s = 0.0;
  for (double p : r.probs) s += p;
  return s;
}

}  // namespace

TEST_CASE("rows are distributions over the next phase") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto inst = random_instance(seed, 2, 6, 8);
    TransitionKernel k = build_kernel(inst.catalog, inst.store);
    for (std::size_t i = 0; i < inst.catalog.size(); ++i) {
      const auto& row = k.row(i);
      auto next = next_phase(inst.catalog[i].phase);
      if (!next) {
        CHECK(row.successors.empty());
        continue;
      }
      auto expected = inst.catalog.phase_indices(*next);
      CHECK(std::equal(row.successors.begin(), row.successors.end(), expected.begin(), expected.end()));
      CHECK(std::abs(row_sum(row) - 1.0) <= 1e-6);
      for (double p : row.probs) CHECK(p >= 0.0);
    }
  }
}

TEST_CASE("rows match a hand softmax of scaled cosines") {
  auto inst = random_instance(21, 2, 5, 6);
  const double alpha = 3.0;
  TransitionKernel k = build_kernel(inst.catalog, inst.store, alpha);
  for (std::size_t i = 0; i < inst.catalog.size(); ++i) {
    const auto& row = k.row(i);
    double z = 0.0;
    std::vector<double> w;
    for (std::size_t j : row.successors) {
      w.push_back(std::exp(alpha * cosine(inst.store.at(inst.catalog[i].id), inst.store.at(inst.catalog[j].id))));
      z += w.back();
    }
    for (std::size_t k2 = 0; k2 < w.size(); ++k2) CHECK(row.probs[k2] == doctest::Approx(w[k2] / z).epsilon(1e-12));
  }
}

TEST_CASE("two successors with cosines 1 and 0") {
  Catalog c{std::vector<Technique>{
      make_technique("T1000", Phase::recon), make_technique("T1100", Phase::weapon),
      make_technique("T1101", Phase::weapon), make_technique("T1200", Phase::delivery),
      make_technique("T1300", Phase::exploit), make_technique("T1400", Phase::install),
      make_technique("T1500", Phase::c2), make_technique("T1600", Phase::objectives)}};
  EmbeddingStore s({{"T1000", {1, 0}}, {"T1100", {1, 0}}, {"T1101", {0, 1}}, {"T1200", {1, 1}},
                    {"T1300", {1, 1}}, {"T1400", {1, 1}}, {"T1500", {1, 1}}, {"T1600", {1, 1}}});
  TransitionKernel k = build_kernel(c, s, 1.0);
  const double e = std::exp(1.0);
  CHECK(k.probability("T1000", "T1100") == doctest::Approx(e / (e + 1)).epsilon(1e-12));
  CHECK(k.probability("T1000", "T1101") == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
  CHECK(k.probability("T1000", "T1100") == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(k.probability("T1100", "T1200") == 1.0);
  CHECK_THROWS_AS(k.probability("T1000", "T1200"), ValidationError);
  CHECK_THROWS_AS(k.probability("T1600", "T1000"), ValidationError);
}

TEST_CASE("alpha limits") {
  auto inst = random_instance(4, 2, 6, 8);
  SUBCASE("alpha 0 is uniform") {
    TransitionKernel k = build_kernel(inst.catalog, inst.store, 0.0);
    for (std::size_t i = 0; i < k.size(); ++i)
      for (double p : k.row(i).probs) CHECK(std::abs(p - 1.0 / static_cast<double>(k.row(i).probs.size())) <= 1e-9);
  }
  SUBCASE("small alpha approaches uniform") {
    TransitionKernel k = build_kernel(inst.catalog, inst.store, 1e-8);
    for (std::size_t i = 0; i < k.size(); ++i) {
      const auto& r = k.row(i);
      if (r.probs.empty()) continue;
      CHECK(std::abs(*std::max_element(r.probs.begin(), r.probs.end()) - 1.0 / static_cast<double>(r.probs.size())) <=
            1e-6);
    }
  }
  SUBCASE("alpha 50 concentrates on the most similar successor") {
    // successors one radian apart
    std::vector<Technique> ts;
    std::vector<Embedding> es;
    for (Phase p : kAllPhases) {
      for (int j = 0; j < 3; ++j) {
        std::string id = killchain::testing::synthetic_id(ordinal(p), j);
        ts.push_back(make_technique(id, p));
        double a = 1.0 * j + 0.05 * ordinal(p);
        es.push_back({id, {std::cos(a), std::sin(a)}});
      }
    }
    Catalog c(ts);
    EmbeddingStore s(es);
    TransitionKernel k = build_kernel(c, s, 50.0);
    for (std::size_t i = 0; i < k.size(); ++i) {
      const auto& r = k.row(i);
      if (r.probs.empty()) continue;
      std::size_t best = 0;
      for (std::size_t j = 1; j < r.successors.size(); ++j)
        if (cosine(s.at(c[i].id), s.at(c[r.successors[j]].id)) > cosine(s.at(c[i].id), s.at(c[r.successors[best]].id)))
          best = j;
      CHECK(r.probs[best] >= 0.999);
    }
  }
}

TEST_CASE("softmax monotonicity within rows") {
  auto inst = random_instance(9, 3, 6, 5);
  TransitionKernel k = build_kernel(inst.catalog, inst.store, 2.5);
  for (std::size_t i = 0; i < k.size(); ++i) {
    const auto& r = k.row(i);
    for (std::size_t a = 0; a < r.successors.size(); ++a)
      for (std::size_t b = 0; b < r.successors.size(); ++b) {
        double ca = cosine(inst.store.at(inst.catalog[i].id), inst.store.at(inst.catalog[r.successors[a]].id));
        double cb = cosine(inst.store.at(inst.catalog[i].id), inst.store.at(inst.catalog[r.successors[b]].id));
        if (ca > cb) CHECK(r.probs[a] > r.probs[b]);
      }
  }
}

TEST_CASE("parallel build matches the serial reference bitwise") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = random_instance(seed, 2, 6, 16);
    CHECK(build_kernel(inst.catalog, inst.store) == reference::build_kernel(inst.catalog, inst.store));
  }
}

TEST_CASE("kernel JSON round trip and validation") {
  auto inst = random_instance(2, 2, 4, 4);
  TransitionKernel k = build_kernel(inst.catalog, inst.store, 4.0);
  Json j = k.to_json();
  CHECK(j["alpha"] == 4.0);
  TransitionKernel back = kernel_from_json(parse_json(dump_json(j), "kernel.json"), inst.catalog);
  CHECK(back == k);

  std::vector<TransitionKernel::Row> rows(inst.catalog.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = k.row(i);
  SUBCASE("row not summing to one") {
    rows[0].probs[0] += 0.01;
    CHECK_THROWS_AS(TransitionKernel(inst.catalog, 4.0, rows), ValidationError);
  }
  SUBCASE("successor in the wrong phase") {
    rows[0].successors[0] = 0;
    CHECK_THROWS_AS(TransitionKernel(inst.catalog, 4.0, rows), ValidationError);
  }
  SUBCASE("terminal row present") {
    std::size_t last = inst.catalog.size() - 1;
    rows[last] = rows[0];
    CHECK_THROWS_AS(TransitionKernel(inst.catalog, 4.0, rows), ValidationError);
  }
  SUBCASE("missing embedding") {
    EmbeddingStore partial({{inst.catalog[0].id, {1, 0, 0, 0}}});
    CHECK_THROWS_AS(build_kernel(inst.catalog, partial), ValidationError);
  }
}
