#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "killchain/embedding_store.hpp"

namespace killchain {

struct ActorHistory {
  std::string actor;
  std::vector<std::string> technique_ids;
};

ActorHistory parse_actor_history(std::string_view text, const std::string& source = "<history>");
ActorHistory load_actor_history(const std::filesystem::path& path);

/// d_NN(P,H) = mean over p in P of min over h in H of (1 - cos(e_p, e_h)).
/// Duplicate ids count once. Throws on empty sets or missing embeddings.
double nnba(std::span<const std::string> predicted, std::span<const std::string> history,
            const EmbeddingStore& store);
double nnba(std::span<const std::string> predicted, const ActorHistory& history, const EmbeddingStore& store);

namespace reference {
double nnba(std::span<const std::string> predicted, std::span<const std::string> history,
            const EmbeddingStore& store);
}  // namespace reference

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct PcaProjection {
  std::vector<Point2> points;
  std::array<double, 2> explained_variance_ratio{};
  std::array<std::vector<double>, 2> components;  // unit loadings
  std::vector<double> mean;
};

/// Mean-centered projection on the top two eigenvectors of the sample
/// covariance. Each component's first nonzero loading is positive.
PcaProjection pca_project(std::span<const std::vector<double>> vectors);

/// Counterclockwise monotone-chain hull; collinear boundary points dropped.
/// Throws ValidationError for fewer than 3 points or an all-collinear set.
std::vector<std::size_t> convex_hull_2d(std::span<const Point2> points);

/// True when `p` lies inside or on the counterclockwise polygon `hull`.
bool point_in_convex_polygon(std::span<const Point2> hull, Point2 p, double tolerance = 1e-9);

struct EnvelopePoint {
  std::string id;
  std::string tag;     // history, predicted or centroid
  std::string source;  // prediction source; actor name for history
  Point2 xy;
};

struct EnvelopeReport {
  std::string actor;
  std::vector<EnvelopePoint> points;
  std::vector<std::size_t> hull_indices;  // into `points`, counterclockwise
  std::array<double, 2> explained_variance_ratio{};

  std::string to_csv() const;
  Json to_json() const;
};

/// PCA fit on history and predictions together; hull and centroid over the
/// projected history.
EnvelopeReport envelope_report(const ActorHistory& history,
                               const std::map<std::string, std::vector<std::string>>& predicted_by_source,
                               const EmbeddingStore& store);

}  // namespace killchain
