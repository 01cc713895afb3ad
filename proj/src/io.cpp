#include "otpoisson/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace otp::io {

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  return in;
}

std::vector<double> split_numbers(const std::string& line, const fs::path& path, std::size_t lineno) {
  std::vector<double> vals;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(cell, &used));
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": '" + cell + "' is not a number");
    }
  }
  return vals;
}

// Rows of numbers after the header; every row must have `width` columns.
std::vector<std::vector<double>> read_table(const fs::path& path, const std::string& header, std::size_t width) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw ParseError(path.string() + ": expected header '" + header + "'");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto vals = split_numbers(line, path, lineno);
    if (vals.size() != width) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " columns");
    }
    rows.push_back(std::move(vals));
  }
  return rows;
}

}  // namespace

void write_measure_csv(const fs::path& path, const PointSet<double>& points, const VectorX<double>& weights) {
  auto out = open_out(path);
  out << "x,y,w\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) out << points(i, 0) << ',' << points(i, 1) << ',' << weights(i) << '\n';
}

DiscreteMeasure<double> read_measure_csv(const fs::path& path) {
  const auto rows = read_table(path, "x,y,w", 3);
  PointSet<double> pts(static_cast<Eigen::Index>(rows.size()), 2);
  VectorX<double> w(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r][2] < 0) {
      throw ParseError(path.string() + ":" + std::to_string(r + 2) + ": negative weight (prior weights must be >= 0)");
    }
    pts(static_cast<Eigen::Index>(r), 0) = rows[r][0];
    pts(static_cast<Eigen::Index>(r), 1) = rows[r][1];
    w(static_cast<Eigen::Index>(r)) = rows[r][2];
  }
  return DiscreteMeasure<double>(pts, w);
}

void write_plan_csv(const fs::path& path, const TransportPlan<double>& plan, const PointSet<double>& sources,
                    const PointSet<double>& targets) {
  auto out = open_out(path);
  out << "i,j,weight,x_i,y_i,x_j,y_j\n";
  for (Eigen::Index i = 0; i < plan.weights.outerSize(); ++i) {
    for (SparsePlan<double>::InnerIterator it(plan.weights, i); it; ++it) {
      const Eigen::Index j = it.col();
      out << i << ',' << j << ',' << it.value() << ',' << sources(i, 0) << ',' << sources(i, 1) << ',' << targets(j, 0)
          << ',' << targets(j, 1) << '\n';
    }
  }
}

TransportPlan<double> read_plan_csv(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  const auto table = read_table(path, "i,j,weight,x_i,y_i,x_j,y_j", 7);
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& r : table) {
    const auto i = static_cast<Eigen::Index>(r[0]), j = static_cast<Eigen::Index>(r[1]);
    if (i < 0 || j < 0 || i >= rows || j >= cols) throw ParseError(path.string() + ": plan index out of range");
    trips.emplace_back(i, j, r[2]);
  }
  return TransportPlan<double>::from_triplets(rows, cols, trips);
}

void write_field_csv(const fs::path& path, const ScalarField<double>& field) {
  auto out = open_out(path);
  out << "x,y,value\n";
  const auto& g = *field.grid;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const auto p = g.node(k);
    if (!g.domain.contains(p)) continue;
    out << p.x() << ',' << p.y() << ',' << field.values(k) << '\n';
  }
}

ScalarField<double> read_field_csv(const fs::path& path, std::shared_ptr<const Grid<double>> grid) {
  const auto rows = read_table(path, "x,y,value", 3);
  ScalarField<double> f{grid, VectorX<double>::Zero(grid->size()), false};
  for (const auto& r : rows) {
    const Point2<double> p(r[0], r[1]);
    const Eigen::Index k = grid->nearest(p);
    if ((grid->node(k) - p).norm() > 1e-9 * std::max(1.0, grid->h)) {
      throw ParseError(path.string() + ": point (" + std::to_string(r[0]) + ", " + std::to_string(r[1]) +
                       ") is not a grid node");
    }
    f.values(k) = r[2];
  }
  return f;
}

}  // namespace otp::io
