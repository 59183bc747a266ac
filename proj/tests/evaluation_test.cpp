#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "killchain/error.hpp"
#include "killchain/evaluation.hpp"
#include "support/fixtures.hpp"
#include "support/geometry_oracle.hpp"

using namespace killchain;
using killchain::testing::data_path;
using killchain::testing::gaussian;
using killchain::testing::brute_hull;
using killchain::testing::jacobi_eigen;
using killchain::testing::random_instance;
using killchain::testing::random_vector;

TEST_CASE("nnba values") {
  EmbeddingStore s({{"T1000", {1, 0}}, {"T1001", {0.9, std::sqrt(1 - 0.81)}}, {"T1002", {0, 1}}, {"T1003", {-1, 0}}});
  std::vector<std::string> p{"T1000"}, h{"T1001"};
  CHECK(nnba(p, h, s) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(nnba(h, h, s) == doctest::Approx(0.0).epsilon(1e-15));

  std::vector<std::string> p2{"T1000", "T1002"}, h2{"T1000", "T1003"};
  CHECK(nnba(p2, h2, s) == doctest::Approx(0.5).epsilon(1e-12));
  std::vector<std::string> opposite{"T1003"};
  CHECK(nnba(p, opposite, s) == doctest::Approx(2.0).epsilon(1e-12));
  // nearest of cosines 0.9 and 0.5
  EmbeddingStore s2({{"T1000", {1, 0}}, {"T1001", {0.9, std::sqrt(1 - 0.81)}}, {"T1002", {0.5, -std::sqrt(0.75)}}});
  std::vector<std::string> both{"T1001", "T1002"};
  CHECK(std::abs(nnba(p, both, s2) - 0.1) <= 1e-9);

  // duplicates count once
  std::vector<std::string> dup{"T1000", "T1000", "T1002"};
  CHECK(nnba(dup, h2, s) == nnba(p2, h2, s));

  std::vector<std::string> none;
  CHECK_THROWS_AS(nnba(none, h, s), ValidationError);
  CHECK_THROWS_AS(nnba(p, none, s), ValidationError);
  std::vector<std::string> unknown{"T9999"};
  CHECK_THROWS_AS(nnba(unknown, h, s), ValidationError);
}

TEST_CASE("nnba properties") {
  auto inst = random_instance(31, 3, 6, 8);
  std::vector<std::string> all;
  for (std::size_t i = 0; i < inst.catalog.size(); ++i) all.push_back(inst.catalog[i].id);
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> p, h;
    for (const auto& id : all) {
      if (uniform01(rng) < 0.3) p.push_back(id);
      if (uniform01(rng) < 0.3) h.push_back(id);
    }
    if (p.empty() || h.empty()) continue;
    double d = nnba(p, h, inst.store);
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    CHECK(d == reference::nnba(p, h, inst.store));

    // adding history never increases the distance
    std::vector<std::string> more = h;
    more.push_back(all[static_cast<std::size_t>(trial) % all.size()]);
    CHECK(nnba(p, more, inst.store) <= d + 1e-15);

    std::vector<std::string> shuffled = p;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(nnba(shuffled, h, inst.store) == d);

    // brute-force oracle
    std::set<std::string> ps(p.begin(), p.end());
    double sum = 0.0;
    for (const auto& a : ps) {
      double best = 2.0;
      for (const auto& b : h) best = std::min(best, 1.0 - cosine(inst.store.at(a), inst.store.at(b)));
      sum += best;
    }
    CHECK(d == doctest::Approx(sum / static_cast<double>(ps.size())).epsilon(1e-12));
  }
}

TEST_CASE("actor history files") {
  ActorHistory h = load_actor_history(data_path("fin6_history.json"));
  CHECK(h.actor == "FIN6");
  CHECK(h.technique_ids.size() == 12);
  CHECK_THROWS_AS(parse_actor_history(R"({"actor":"X","techniques":[]})"), ValidationError);
  CHECK_THROWS_AS(parse_actor_history(R"({"techniques":["T1000"]})"), ValidationError);
  CHECK_THROWS_AS(parse_actor_history("[1,"), ParseError);
  CHECK_THROWS_AS(load_actor_history("/nonexistent/history.json"), IoError);
}

TEST_CASE("pca matches a Jacobi eigensolver") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int dim = 3 + trial % 4;
    const int n = 8 + trial;
    std::vector<std::vector<double>> xs;
    for (int i = 0; i < n; ++i) {
      auto v = random_vector(rng, dim);
      v[0] *= 3.0;  // separate the leading eigenvalues
      v[1] *= 2.0;
      xs.push_back(v);
    }
    PcaProjection pca = pca_project(xs);

    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (const auto& x : xs)
      for (int a = 0; a < dim; ++a) mean[static_cast<std::size_t>(a)] += x[static_cast<std::size_t>(a)] / n;
    std::vector<std::vector<double>> cov(static_cast<std::size_t>(dim), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    for (const auto& x : xs)
      for (std::size_t a = 0; a < cov.size(); ++a)
        for (std::size_t b = 0; b < cov.size(); ++b) cov[a][b] += (x[a] - mean[a]) * (x[b] - mean[b]) / (n - 1);
    auto eig = jacobi_eigen(cov);
    double total = 0.0;
    for (const auto& e : eig) total += e.first;

    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> c = eig[k].second;
      auto first = std::find_if(c.begin(), c.end(), [](double x) { return std::abs(x) > 1e-12; });
      if (*first < 0)
        for (double& x : c) x = -x;
      for (std::size_t a = 0; a < c.size(); ++a) CHECK(std::abs(pca.components[k][a] - c[a]) <= 1e-8);
      CHECK(std::abs(pca.explained_variance_ratio[k] - eig[k].first / total) <= 1e-8);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double proj = 0.0;
        for (std::size_t a = 0; a < c.size(); ++a) proj += (xs[i][a] - mean[a]) * c[a];
        CHECK(std::abs((k == 0 ? pca.points[i].x : pca.points[i].y) - proj) <= 1e-8);
      }
    }
    for (std::size_t a = 0; a < mean.size(); ++a) CHECK(std::abs(pca.mean[a] - mean[a]) <= 1e-12);
  }
}

TEST_CASE("pca edge cases") {
  SUBCASE("planar data keeps distances") {
    std::vector<std::vector<double>> xs{{0, 0, 5}, {2, 0, 5}, {0, 1, 5}, {2, 1, 5}};
    PcaProjection pca = pca_project(xs);
    CHECK(pca.explained_variance_ratio[0] + pca.explained_variance_ratio[1] == doctest::Approx(1.0).epsilon(1e-12));
    auto dist = [](Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); };
    CHECK(dist(pca.points[0], pca.points[3]) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
    CHECK(std::abs(pca.components[0][0]) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("collinear data has a zero second axis") {
    std::vector<std::vector<double>> xs{{0, 0}, {1, 1}, {3, 3}, {-2, -2}};
    PcaProjection pca = pca_project(xs);
    CHECK(pca.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (const Point2& p : pca.points) CHECK(std::abs(p.y) <= 1e-12);
  }
  SUBCASE("errors") {
    std::vector<std::vector<double>> two{{0, 1}, {1, 0}};
    CHECK_THROWS_AS(pca_project(two), ValidationError);
    std::vector<std::vector<double>> same{{1, 1}, {1, 1}, {1, 1}};
    CHECK_THROWS_AS(pca_project(same), ValidationError);
    std::vector<std::vector<double>> ragged{{1, 1}, {1, 2}, {1}};
    CHECK_THROWS_AS(pca_project(ragged), ValidationError);
    std::vector<std::vector<double>> scalar{{1}, {2}, {3}};
    CHECK_THROWS_AS(pca_project(scalar), ValidationError);
  }
}

TEST_CASE("convex hull agrees with brute force") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Point2> pts;
    const int n = 3 + trial % 30;
    for (int i = 0; i < n; ++i) pts.push_back({gaussian(rng), gaussian(rng)});
    auto hull = convex_hull_2d(pts);
    CHECK(std::set<std::size_t>(hull.begin(), hull.end()) == brute_hull(pts));
    // counterclockwise
    double area = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
      Point2 a = pts[hull[i]], b = pts[hull[(i + 1) % hull.size()]];
      area += a.x * b.y - b.x * a.y;
    }
    CHECK(area > 0.0);
    std::vector<Point2> poly;
    for (std::size_t i : hull) poly.push_back(pts[i]);
    for (const Point2& p : pts) CHECK(point_in_convex_polygon(poly, p));
  }
}

TEST_CASE("convex hull small cases") {
  std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  auto h = convex_hull_2d(square);
  CHECK(std::set<std::size_t>(h.begin(), h.end()) == std::set<std::size_t>{0, 1, 2, 3});

  std::vector<Point2> tri{{0, 0}, {2, 0}, {1, 3}};
  CHECK(convex_hull_2d(tri).size() == 3);

  std::vector<Point2> edge_mid{{0, 0}, {2, 0}, {1, 0}, {1, 2}};
  CHECK(convex_hull_2d(edge_mid).size() == 3);

  std::vector<Point2> dupes{{0, 0}, {0, 0}, {1, 0}, {0, 1}, {1, 0}};
  CHECK(convex_hull_2d(dupes).size() == 3);

  std::vector<Point2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(convex_hull_2d(line), ValidationError);
  std::vector<Point2> two{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(convex_hull_2d(two), ValidationError);
}

TEST_CASE("point in polygon") {
  std::vector<Point2> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(point_in_convex_polygon(sq, {0.5, 0.5}));
  CHECK(point_in_convex_polygon(sq, {1.0, 0.5}));
  CHECK(point_in_convex_polygon(sq, {0.0, 0.0}));
  CHECK_FALSE(point_in_convex_polygon(sq, {1.01, 0.5}));
  CHECK_FALSE(point_in_convex_polygon(sq, {-0.5, -0.5}));
}

TEST_CASE("envelope report") {
  EmbeddingStore store = load_embeddings(data_path("fin6_embeddings.jsonl"));
  ActorHistory h = load_actor_history(data_path("fin6_history.json"));

  SUBCASE("history only") {
    EnvelopeReport r = envelope_report(h, {}, store);
    std::set<std::string> uniq(h.technique_ids.begin(), h.technique_ids.end());
    CHECK(r.points.size() == uniq.size() + 1);
    CHECK(r.points.back().tag == "centroid");
    std::vector<Point2> poly;
    for (std::size_t i : r.hull_indices) poly.push_back(r.points[i].xy);
    for (const auto& p : r.points) CHECK(point_in_convex_polygon(poly, p.xy));
    CHECK(std::abs(r.points.back().xy.x) <= 1e-12);  // centroid of the fit set
    CHECK(std::abs(r.points.back().xy.y) <= 1e-12);
  }
  SUBCASE("predictions that repeat history land on the history points") {
    std::vector<std::string> repeat(h.technique_ids.begin(), h.technique_ids.begin() + 3);
    EnvelopeReport r = envelope_report(h, {{"mcts", repeat}}, store);
    std::map<std::string, Point2> hist;
    for (const auto& p : r.points)
      if (p.tag == "history") hist[p.id] = p.xy;
    int predicted = 0;
    for (const auto& p : r.points)
      if (p.tag == "predicted") {
        ++predicted;
        CHECK(p.source == "mcts");
        CHECK(p.xy.x == hist.at(p.id).x);
        CHECK(p.xy.y == hist.at(p.id).y);
      }
    CHECK(predicted == 3);
  }
  SUBCASE("csv and json") {
    std::vector<std::string> pred{"T1190", "T1486"};
    EnvelopeReport r = envelope_report(h, {{"mcts", pred}, {"baseline", {"T1570"}}}, store);
    std::string csv = r.to_csv();
    CHECK(csv.rfind("id,tag,x,y\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.points.size() + 1);
    Json j = r.to_json();
    CHECK(j["actor"] == "FIN6");
    CHECK(j["points"].size() == r.points.size());
    CHECK(j["hull_indices"].size() >= 3);
    CHECK(r.explained_variance_ratio[0] >= r.explained_variance_ratio[1]);
  }
  SUBCASE("unknown prediction") {
    std::vector<std::string> bad{"T9999"};
    CHECK_THROWS_AS(envelope_report(h, {{"x", bad}}, store), ValidationError);
  }
}
