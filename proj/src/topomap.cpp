#include "cmckit/topomap.hpp"

#include "cmckit/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace cmckit {

namespace {

using std::numbers::pi;

// Kernel series evaluated with the Legendre recurrence. With m = 4 the
// term magnitude at n = 20 is below 1.4e-9, so the truncation is beyond
// the 1e-6 interpolation tolerance.
double spline_kernel(double cos_angle, int order_m, int n_terms) {
  const double x = std::clamp(cos_angle, -1.0, 1.0);
  double p_prev = 1.0;  // P_0
  double p = x;         // P_1
  double sum = 0.0;
  for (int n = 1; n <= n_terms; ++n) {
    const double dn = static_cast<double>(n);
    sum += (2.0 * dn + 1.0) / std::pow(dn * (dn + 1.0), order_m) * p;
    const double p_next = ((2.0 * dn + 1.0) * x * p - dn * p_prev) / (dn + 1.0);
    p_prev = p;
    p = p_next;
  }
  return sum / (4.0 * pi);
}

}  // namespace

SplineModel spline_fit(const std::vector<Eigen::Vector3d>& positions,
                       const Eigen::VectorXd& values, int order_m, int n_terms,
                       double lambda) {
  const auto n = static_cast<Eigen::Index>(positions.size());
  if (n < 3) throw ArgumentError("spline fit needs at least 3 electrodes");
  if (values.size() != n) throw ArgumentError("one value per electrode required");
  if (order_m < 2) throw ArgumentError("spline order must be at least 2");
  if (n_terms < 1) throw ArgumentError("kernel needs at least one term");
  if (lambda < 0.0) throw ArgumentError("regularization must be nonnegative");

  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(positions[static_cast<size_t>(i)].norm() - 1.0) > 1e-6) {
      throw ArgumentError("electrode position " + std::to_string(i) +
                          " is not on the unit sphere");
    }
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if ((positions[static_cast<size_t>(i)] - positions[static_cast<size_t>(j)]).norm() <
          1e-9) {
        throw DataError("duplicate electrode positions make the spline system singular");
      }
    }
  }

  SplineModel model;
  model.order_m = order_m;
  model.n_terms = n_terms;
  model.lambda = lambda;
  model.electrode_dirs.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    model.electrode_dirs.col(i) = positions[static_cast<size_t>(i)].normalized();
  }

  // [ G + lambda*I   1 ] [w]   [v]
  // [ 1^T            0 ] [c] = [0]
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double cos_angle = model.electrode_dirs.col(i).dot(model.electrode_dirs.col(j));
      system(i, j) = spline_kernel(cos_angle, order_m, n_terms);
    }
    system(i, i) += lambda;
    system(i, n) = 1.0;
    system(n, i) = 1.0;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs.head(n) = values;

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) {
    throw DataError("singular spline system");
  }
  const Eigen::VectorXd solution = lu.solve(rhs);
  model.weights = solution.head(n);
  model.offset = solution[n];
  return model;
}

double spline_eval(const SplineModel& model, const Eigen::Vector3d& direction) {
  const Eigen::Vector3d d = direction.normalized();
  double acc = model.offset;
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
    acc += model.weights[i] *
           spline_kernel(d.dot(model.electrode_dirs.col(i)), model.order_m, model.n_terms);
  }
  return acc;
}

Eigen::Vector2d ScalpField::pixel_center(Eigen::Index row, Eigen::Index col) const {
  const double span = pi;  // [-pi/2, pi/2]
  const double step = span / static_cast<double>(resolution - 1);
  return {-pi / 2.0 + static_cast<double>(col) * step,
          pi / 2.0 - static_cast<double>(row) * step};
}

ScalpField evaluate_field(const SplineModel& model, int resolution) {
  if (resolution < 16) throw ArgumentError("field resolution must be at least 16");

  ScalpField field;
  field.resolution = resolution;
  field.values = Eigen::MatrixXd::Zero(resolution, resolution);
  field.mask.setConstant(resolution, resolution, false);

  for (Eigen::Index r = 0; r < resolution; ++r) {
    for (Eigen::Index c = 0; c < resolution; ++c) {
      const Eigen::Vector2d g = field.pixel_center(r, c);
      const double rho = g.norm();
      if (rho > pi / 2.0 + 1e-12) continue;
      Eigen::Vector3d dir(0.0, 0.0, 1.0);
      if (rho > 0.0) {
        const double s = std::sin(rho) / rho;
        dir = Eigen::Vector3d(s * g.x(), s * g.y(), std::cos(rho));
      }
      field.mask(r, c) = true;
      field.values(r, c) = spline_eval(model, dir);
    }
  }

  for (Eigen::Index i = 0; i < model.electrode_dirs.cols(); ++i) {
    const Eigen::Vector3d& e = model.electrode_dirs.col(i);
    const double rho = std::acos(std::clamp(e.z(), -1.0, 1.0));
    const double planar = std::hypot(e.x(), e.y());
    if (planar < 1e-12) {
      field.electrodes_xy.emplace_back(0.0, 0.0);
    } else {
      field.electrodes_xy.emplace_back(rho * e.x() / planar, rho * e.y() / planar);
    }
  }
  return field;
}

namespace {

void heat_color(double t, unsigned char* rgb) {
  t = std::clamp(t, 0.0, 1.0);
  // blue -> white -> red
  double r, g, b;
  if (t < 0.5) {
    const double u = t * 2.0;
    r = u;
    g = u;
    b = 1.0;
  } else {
    const double u = (t - 0.5) * 2.0;
    r = 1.0;
    g = 1.0 - u;
    b = 1.0 - u;
  }
  rgb[0] = static_cast<unsigned char>(std::lround(255.0 * r));
  rgb[1] = static_cast<unsigned char>(std::lround(255.0 * g));
  rgb[2] = static_cast<unsigned char>(std::lround(255.0 * b));
}

}  // namespace

void render_map(const ScalpField& field, const std::string& out_path, ColorScale scale) {
  if (!(scale.min < scale.max)) throw ArgumentError("color scale needs min < max");
  if (field.resolution < 1) throw ArgumentError("empty field");

  const int res = field.resolution;
  std::vector<unsigned char> pixels(static_cast<size_t>(res) * res * 3);
  auto at = [&](Eigen::Index r, Eigen::Index c) {
    return &pixels[(static_cast<size_t>(r) * res + static_cast<size_t>(c)) * 3];
  };

  for (Eigen::Index r = 0; r < res; ++r) {
    for (Eigen::Index c = 0; c < res; ++c) {
      unsigned char* px = at(r, c);
      if (!field.mask(r, c)) {
        px[0] = px[1] = px[2] = 230;
        continue;
      }
      heat_color((field.values(r, c) - scale.min) / (scale.max - scale.min), px);
    }
  }

  // Electrode markers.
  const auto radius = std::max<Eigen::Index>(1, res / 64);
  const double step = std::numbers::pi / static_cast<double>(res - 1);
  for (const auto& e : field.electrodes_xy) {
    const auto col = static_cast<Eigen::Index>(std::lround((e.x() + std::numbers::pi / 2.0) / step));
    const auto row = static_cast<Eigen::Index>(std::lround((std::numbers::pi / 2.0 - e.y()) / step));
    for (Eigen::Index dr = -radius; dr <= radius; ++dr) {
      for (Eigen::Index dc = -radius; dc <= radius; ++dc) {
        if (dr * dr + dc * dc > radius * radius) continue;
        const Eigen::Index rr = row + dr;
        const Eigen::Index cc = col + dc;
        if (rr < 0 || rr >= res || cc < 0 || cc >= res) continue;
        unsigned char* px = at(rr, cc);
        px[0] = px[1] = px[2] = 16;
      }
    }
  }

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + out_path + "' for writing");
  out << "P6\n" << res << ' ' << res << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write to '" + out_path + "' failed");
}

void write_field_csv(const ScalpField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (Eigen::Index r = 0; r < field.resolution; ++r) {
    for (Eigen::Index c = 0; c < field.resolution; ++c) {
      if (c) out << ',';
      if (field.mask(r, c)) out << format_double(field.values(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace cmckit
