#pragma once

#include <filesystem>
#include <string>

#include "otpoisson/measures.hpp"
#include "otpoisson/pde.hpp"
#include "otpoisson/transport.hpp"

namespace otp::io {

namespace fs = std::filesystem;

// Atoms as "x,y,w" rows.
void write_measure_csv(const fs::path& path, const PointSet<double>& points, const VectorX<double>& weights);
DiscreteMeasure<double> read_measure_csv(const fs::path& path);

// Sparse triplets "i,j,weight,x_i,y_i,x_j,y_j".
void write_plan_csv(const fs::path& path, const TransportPlan<double>& plan, const PointSet<double>& sources,
                    const PointSet<double>& targets);
TransportPlan<double> read_plan_csv(const fs::path& path, Eigen::Index rows, Eigen::Index cols);

// Nodal values "x,y,value" at the nodes of the closed domain.
void write_field_csv(const fs::path& path, const ScalarField<double>& field);

// Node-aligned values from a "x,y,value" file; missing nodes stay zero.
ScalarField<double> read_field_csv(const fs::path& path, std::shared_ptr<const Grid<double>> grid);

}  // namespace otp::io
