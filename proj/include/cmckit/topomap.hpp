#pragma once

#include "cmckit/types.hpp"

#include <string>
#include <vector>

namespace cmckit {

// Spherical-spline interpolator over unit-sphere electrode positions.
// Kernel g(cos t) = (1/4pi) * sum_{n=1..N} (2n+1) / (n (n+1))^m * P_n(cos t);
// the fit solves the kernel system with a unit-sum constraint so constants
// are reproduced exactly.
struct SplineModel {
  Eigen::Matrix3Xd electrode_dirs;  // unit vectors, one column per electrode
  Eigen::VectorXd weights;          // kernel weights, sum to zero
  double offset = 0.0;              // constant term
  int order_m = 4;
  int n_terms = 20;
  double lambda = 0.0;
};

SplineModel spline_fit(const std::vector<Eigen::Vector3d>& positions,
                       const Eigen::VectorXd& values, int order_m = 4, int n_terms = 20,
                       double lambda = 1e-5);

double spline_eval(const SplineModel& model, const Eigen::Vector3d& direction);

// Upper hemisphere on an azimuthal-equidistant projection from the vertex:
// pixel coordinates are (gx, gy) in [-pi/2, pi/2], radius = polar angle,
// +y anterior (top of the image), +x right.
struct ScalpField {
  int resolution = 0;
  Eigen::MatrixXd values;                        // row 0 = anterior edge
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // inside-head flags
  std::vector<Eigen::Vector2d> electrodes_xy;    // projected electrode positions

  Eigen::Vector2d pixel_center(Eigen::Index row, Eigen::Index col) const;
};

ScalpField evaluate_field(const SplineModel& model, int resolution);

struct ColorScale {
  double min = 0.0;
  double max = 1.0;
};

// Deterministic binary portable pixmap with a linear blue-white-red map,
// clamped at the scale ends; electrode markers drawn in black.
void render_map(const ScalpField& field, const std::string& out_path, ColorScale scale);

// R rows x R columns, masked cells left empty.
void write_field_csv(const ScalpField& field, const std::string& path);

}  // namespace cmckit
