#include "tweetlm/project.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tweetlm/errors.hpp"

namespace tweetlm::project {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. a is destroyed;
// eigenvectors end up in the columns of v.
void jacobi_eigen(std::vector<std::vector<double>>& a, std::vector<std::vector<double>>& v,
                  std::vector<double>& eigenvalues) {
  const size_t n = a.size();
  v.assign(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-26) break;

    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = a[p][p], aqq = a[q][q], apq = a[p][q];
        a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a[p][q] = 0.0;
        a[q][p] = 0.0;
        for (size_t i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[p][i] = a[i][p];
          a[i][q] = s * aip + c * aiq;
          a[q][i] = a[i][q];
        }
        for (size_t i = 0; i < n; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  eigenvalues.resize(n);
  for (size_t i = 0; i < n; ++i) eigenvalues[i] = a[i][i];
}

}  // namespace

PcaModel pca_fit(const std::vector<std::vector<double>>& x, int64_t k) {
  const auto n = static_cast<int64_t>(x.size());
  if (n < 2) throw ValidationError("pca_fit: need at least 2 rows");
  const auto dim = static_cast<int64_t>(x[0].size());
  if (k < 1 || k > dim) throw ValidationError("pca_fit: k outside [1, dim]");
  for (const auto& row : x) {
    if (static_cast<int64_t>(row.size()) != dim) throw ValidationError("pca_fit: ragged rows");
    for (const double v : row) {
      if (!std::isfinite(v)) throw ValidationError("pca_fit: non-finite input");
    }
  }

  PcaModel model;
  model.mean.assign(static_cast<size_t>(dim), 0.0);
  for (const auto& row : x) {
    for (int64_t j = 0; j < dim; ++j) model.mean[static_cast<size_t>(j)] += row[static_cast<size_t>(j)];
  }
  for (double& m : model.mean) m /= static_cast<double>(n);

  // sample covariance
  std::vector<std::vector<double>> cov(static_cast<size_t>(dim),
                                       std::vector<double>(static_cast<size_t>(dim), 0.0));
  for (const auto& row : x) {
    for (int64_t i = 0; i < dim; ++i) {
      const double di = row[static_cast<size_t>(i)] - model.mean[static_cast<size_t>(i)];
      for (int64_t j = i; j < dim; ++j) {
        const double dj = row[static_cast<size_t>(j)] - model.mean[static_cast<size_t>(j)];
        cov[static_cast<size_t>(i)][static_cast<size_t>(j)] += di * dj;
      }
    }
  }
  double total_var = 0.0;
  for (int64_t i = 0; i < dim; ++i) {
    for (int64_t j = i; j < dim; ++j) {
      cov[static_cast<size_t>(i)][static_cast<size_t>(j)] /= static_cast<double>(n - 1);
      cov[static_cast<size_t>(j)][static_cast<size_t>(i)] =
          cov[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    total_var += cov[static_cast<size_t>(i)][static_cast<size_t>(i)];
  }
  if (total_var <= 1e-300) throw ValidationError("pca_fit: zero-variance data");

  std::vector<std::vector<double>> vecs;
  std::vector<double> vals;
  jacobi_eigen(cov, vecs, vals);

  std::vector<size_t> order(static_cast<size_t>(dim));
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return vals[a] > vals[b]; });

  for (int64_t c = 0; c < k; ++c) {
    const size_t col = order[static_cast<size_t>(c)];
    std::vector<double> comp(static_cast<size_t>(dim));
    for (int64_t i = 0; i < dim; ++i) comp[static_cast<size_t>(i)] = vecs[static_cast<size_t>(i)][col];
    // sign convention: largest-magnitude entry positive
    size_t arg = 0;
    for (size_t i = 1; i < comp.size(); ++i) {
      if (std::fabs(comp[i]) > std::fabs(comp[arg])) arg = i;
    }
    if (comp[arg] < 0.0) {
      for (double& v : comp) v = -v;
    }
    model.components.push_back(std::move(comp));
    model.explained_variance.push_back(std::max(0.0, vals[col]));
  }
  return model;
}

std::vector<std::vector<double>> pca_transform(const PcaModel& model,
                                               const std::vector<std::vector<double>>& x) {
  if (model.components.empty()) throw ValidationError("pca_transform: unfitted model");
  const size_t dim = model.mean.size();
  std::vector<std::vector<double>> out;
  out.reserve(x.size());
  for (const auto& row : x) {
    if (row.size() != dim) {
      throw ValidationError("pca_transform: row has " + std::to_string(row.size()) +
                            " columns, model expects " + std::to_string(dim));
    }
    std::vector<double> proj(model.components.size(), 0.0);
    for (size_t c = 0; c < model.components.size(); ++c) {
      double acc = 0.0;
      for (size_t j = 0; j < dim; ++j) {
        acc += (row[j] - model.mean[j]) * model.components[c][j];
      }
      proj[c] = acc;
    }
    out.push_back(std::move(proj));
  }
  return out;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// stable label -> hue
int label_hue(const std::string& label) {
  uint32_t h = 2166136261u;
  for (const char c : label) {
    h ^= static_cast<uint8_t>(c);
    h *= 16777619u;
  }
  return static_cast<int>(h % 360u);
}

}  // namespace

void emit_scatter(const std::vector<ScatterPoint>& points, const std::string& csv_path,
                  const std::string& svg_path) {
  if (points.empty()) throw ValidationError("emit_scatter: no points");

  {
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot write " + csv_path);
    f << "x,y,label,kind\n" << std::setprecision(17);
    for (const ScatterPoint& p : points) {
      f << p.x << ',' << p.y << ',' << csv_escape(p.label) << ',' << csv_escape(p.kind) << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + csv_path);
  }

  double min_x = points[0].x, max_x = points[0].x;
  double min_y = points[0].y, max_y = points[0].y;
  for (const ScatterPoint& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
  const double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
  const double w = 640, h = 480, margin = 30;
  auto sx = [&](double x) { return margin + (x - min_x) / span_x * (w - 2 * margin); };
  auto sy = [&](double y) { return h - margin - (y - min_y) / span_y * (h - 2 * margin); };

  std::ofstream f(svg_path);
  if (!f) throw std::runtime_error("cannot write " + svg_path);
  f << std::setprecision(6);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  f << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const ScatterPoint& p : points) {
    const int hue = label_hue(p.label);
    const double cx = sx(p.x), cy = sy(p.y);
    if (p.kind == "hoax-center") {
      const double r = 6;
      f << "  <path class=\"hoax-center\" stroke=\"hsl(" << hue
        << ",70%,40%)\" stroke-width=\"2.5\" fill=\"none\" d=\"M" << cx - r << ' ' << cy - r
        << " L" << cx + r << ' ' << cy + r << " M" << cx - r << ' ' << cy + r << " L" << cx + r
        << ' ' << cy - r << "\"/>\n";
    } else {
      f << "  <circle class=\"" << p.kind << "\" cx=\"" << cx << "\" cy=\"" << cy
        << "\" r=\"3\" fill=\"hsl(" << hue << ",70%,55%)\" fill-opacity=\"0.7\"/>\n";
    }
  }
  f << "</svg>\n";
  if (!f) throw std::runtime_error("write failed: " + svg_path);
}

std::vector<ScatterPoint> read_scatter_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<ScatterPoint> points;
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    // fields: x,y,label,kind (label/kind may be quoted)
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size()) {
        fields.push_back(field);
        break;
      }
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          field += c;
        }
      } else if (c == '"' && field.empty()) {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(field);
        field.clear();
      } else {
        field += c;
      }
    }
    if (fields.size() != 4) throw ParseError(path + ": expected 4 fields per row");
    ScatterPoint p;
    p.x = std::stod(fields[0]);
    p.y = std::stod(fields[1]);
    p.label = fields[2];
    p.kind = fields[3];
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace tweetlm::project
