#include "killchain/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>

#include <Eigen/Dense>

#include "killchain/error.hpp"

namespace killchain {

ActorHistory parse_actor_history(std::string_view text, const std::string& source) {
  Json doc = parse_json(text, source);
  ActorHistory h;
  try {
    h.actor = doc.at("actor").get<std::string>();
    h.technique_ids = doc.at("techniques").get<std::vector<std::string>>();
  } catch (const Json::exception&) {
    throw ValidationError(source + ": history must be {\"actor\": <string>, \"techniques\": [<ids>]}");
  }
  if (h.technique_ids.empty()) throw ValidationError(source + ": history for " + h.actor + " is empty");
  return h;
}

ActorHistory load_actor_history(const std::filesystem::path& path) {
  return parse_actor_history(read_text_file(path), path.string());
}

namespace {

// Sorted, duplicate-free ids so that results do not depend on input order.
std::vector<std::string> as_set(std::span<const std::string> ids, const char* what) {
  if (ids.empty()) throw ValidationError(std::string("NNBA needs a nonempty ") + what + " set");
  std::set<std::string> s(ids.begin(), ids.end());
  return {s.begin(), s.end()};
}

double nearest_distance(const Embedding& p, const std::vector<const Embedding*>& history) {
  double best = 2.0;
  for (const Embedding* h : history) best = std::min(best, 1.0 - cosine(p, *h));
  return best;
}

std::vector<const Embedding*> resolve(const std::vector<std::string>& ids, const EmbeddingStore& store) {
  std::vector<const Embedding*> out;
  for (const std::string& id : ids) out.push_back(&store.at(id));
  return out;
}

double ordered_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

}  // namespace

double nnba(std::span<const std::string> predicted, std::span<const std::string> history,
            const EmbeddingStore& store) {
  std::vector<const Embedding*> p = resolve(as_set(predicted, "predicted"), store);
  std::vector<const Embedding*> h = resolve(as_set(history, "history"), store);
  std::vector<double> dist(p.size());
  const auto n = static_cast<std::ptrdiff_t>(p.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = nearest_distance(*p[static_cast<std::size_t>(i)], h);
  return ordered_mean(dist);
}

double nnba(std::span<const std::string> predicted, const ActorHistory& history, const EmbeddingStore& store) {
  return nnba(predicted, history.technique_ids, store);
}

namespace reference {

double nnba(std::span<const std::string> predicted, std::span<const std::string> history,
            const EmbeddingStore& store) {
  std::vector<const Embedding*> p = resolve(as_set(predicted, "predicted"), store);
  std::vector<const Embedding*> h = resolve(as_set(history, "history"), store);
  std::vector<double> dist;
  for (const Embedding* e : p) dist.push_back(nearest_distance(*e, h));
  return ordered_mean(dist);
}

}  // namespace reference

PcaProjection pca_project(std::span<const std::vector<double>> vectors) {
  if (vectors.size() < 3) throw ValidationError("PCA needs at least 3 vectors");
  const auto dim = static_cast<Eigen::Index>(vectors.front().size());
  if (dim < 2) throw ValidationError("PCA needs vectors of dimension >= 2");
  const auto n = static_cast<Eigen::Index>(vectors.size());
  Eigen::MatrixXd X(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = vectors[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(v.size()) != dim) throw ValidationError("PCA input dimensions differ");
    X.row(i) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), dim);
  }
  Eigen::RowVectorXd mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw ValidationError("PCA eigen-decomposition failed");
  Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);  // ascending
  double total = values.sum();
  if (!(total > 1e-300) || values[dim - 1] <= 1e-14 * std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff()))
    throw ValidationError("PCA input is degenerate (rank 0)");

  PcaProjection out;
  out.mean.assign(mean.data(), mean.data() + dim);
  Eigen::MatrixXd basis(dim, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd c = eig.eigenvectors().col(dim - 1 - k);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (std::abs(c[i]) > 1e-12) {
        if (c[i] < 0) c = -c;
        break;
      }
    }
    basis.col(k) = c;
    out.components[static_cast<std::size_t>(k)].assign(c.data(), c.data() + dim);
    out.explained_variance_ratio[static_cast<std::size_t>(k)] = values[dim - 1 - k] / total;
  }
  Eigen::MatrixXd proj = centered * basis;
  out.points.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.points.push_back({proj(i, 0), proj(i, 1)});
  return out;
}

namespace {

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

}  // namespace

std::vector<std::size_t> convex_hull_2d(std::span<const Point2> points) {
  if (points.size() < 3) throw ValidationError("convex hull needs at least 3 points");
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].x != points[b].x) return points[a].x < points[b].x;
    if (points[a].y != points[b].y) return points[a].y < points[b].y;
    return a < b;
  });
  // drop exact duplicates, keeping the lowest index
  order.erase(std::unique(order.begin(), order.end(),
                          [&](std::size_t a, std::size_t b) {
                            return points[a].x == points[b].x && points[a].y == points[b].y;
                          }),
              order.end());

  std::vector<std::size_t> hull(2 * order.size());
  std::size_t k = 0;
  for (std::size_t i : order) {
    while (k >= 2 && cross(points[hull[k - 2]], points[hull[k - 1]], points[i]) <= 0) --k;
    hull[k++] = i;
  }
  for (std::size_t j = order.size() - 1, lower = k + 1; j-- > 0;) {
    std::size_t i = order[j];
    while (k >= lower && cross(points[hull[k - 2]], points[hull[k - 1]], points[i]) <= 0) --k;
    hull[k++] = i;
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw ValidationError("convex hull input is degenerate (all points collinear)");
  return hull;
}

bool point_in_convex_polygon(std::span<const Point2> hull, Point2 p, double tolerance) {
  for (std::size_t i = 0; i < hull.size(); ++i) {
    Point2 a = hull[i];
    Point2 b = hull[(i + 1) % hull.size()];
    double len = std::hypot(b.x - a.x, b.y - a.y);
    if (cross(a, b, p) < -tolerance * std::max(1.0, len)) return false;
  }
  return true;
}

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

std::string EnvelopeReport::to_csv() const {
  std::string out = "id,tag,x,y\n";
  for (const EnvelopePoint& p : points) out += p.id + "," + p.tag + "," + fmt_double(p.xy.x) + "," + fmt_double(p.xy.y) + "\n";
  return out;
}

Json EnvelopeReport::to_json() const {
  Json pts = Json::array();
  for (const EnvelopePoint& p : points)
    pts.push_back({{"id", p.id}, {"tag", p.tag}, {"source", p.source}, {"x", p.xy.x}, {"y", p.xy.y}});
  return {{"actor", actor},
          {"points", pts},
          {"hull_indices", hull_indices},
          {"explained_variance_ratio", {explained_variance_ratio[0], explained_variance_ratio[1]}}};
}

EnvelopeReport envelope_report(const ActorHistory& history,
                               const std::map<std::string, std::vector<std::string>>& predicted_by_source,
                               const EmbeddingStore& store) {
  std::vector<std::string> hist = as_set(history.technique_ids, "history");

  // fit set: history then every prediction not already present, first-seen order
  std::vector<std::string> fit_ids = hist;
  std::set<std::string> seen(hist.begin(), hist.end());
  for (const auto& [source, ids] : predicted_by_source)
    for (const std::string& id : ids)
      if (seen.insert(id).second) fit_ids.push_back(id);
  std::vector<std::vector<double>> vectors;
  for (const std::string& id : fit_ids) vectors.push_back(store.at(id).values);

  PcaProjection pca = pca_project(vectors);
  std::map<std::string, Point2, std::less<>> xy;
  for (std::size_t i = 0; i < fit_ids.size(); ++i) xy[fit_ids[i]] = pca.points[i];

  EnvelopeReport r;
  r.actor = history.actor;
  r.explained_variance_ratio = pca.explained_variance_ratio;
  std::vector<Point2> hist_xy;
  Point2 centroid;
  for (const std::string& id : hist) {
    Point2 p = xy.at(id);
    hist_xy.push_back(p);
    centroid.x += p.x;
    centroid.y += p.y;
    r.points.push_back({id, "history", history.actor, p});
  }
  centroid.x /= static_cast<double>(hist.size());
  centroid.y /= static_cast<double>(hist.size());
  r.hull_indices = convex_hull_2d(hist_xy);
  for (const auto& [source, ids] : predicted_by_source)
    for (const std::string& id : ids) r.points.push_back({id, "predicted", source, xy.at(id)});
  r.points.push_back({"centroid", "centroid", history.actor, centroid});
  return r;
}

}  // namespace killchain
