#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tweetlm::project {

// 2D projection model: mean-centering plus the top-k covariance
// eigenvectors, deterministic sign (largest-magnitude entry positive).
struct PcaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // k rows, each of length dim
  std::vector<double> explained_variance;       // matching eigenvalues, non-increasing
};

// Dense symmetric eigendecomposition (cyclic Jacobi) of the sample
// covariance. Errors: fewer than 2 rows, zero total variance, k > dim.
PcaModel pca_fit(const std::vector<std::vector<double>>& x, int64_t k = 2);

std::vector<std::vector<double>> pca_transform(const PcaModel& model,
                                               const std::vector<std::vector<double>>& x);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
  std::string kind;  // claim | hoax-center | author | tweet
};

// CSV (header x,y,label,kind) plus a standalone SVG where hoax-center points
// render as crosses and everything else as dots, hue keyed by label.
void emit_scatter(const std::vector<ScatterPoint>& points, const std::string& csv_path,
                  const std::string& svg_path);

std::vector<ScatterPoint> read_scatter_csv(const std::string& path);

// Projection settings kept from the original visualization recipe. There is
// no UMAP backend in this build; these are recorded so one can slot in
// without a config change, and PCA is used for every projection meanwhile.
struct UmapConfig {
  int64_t components = 2;
  int64_t neighbors = 500;
  double min_dist = 0.25;
  std::string metric = "cosine";
  bool implemented = false;
};

}  // namespace tweetlm::project
