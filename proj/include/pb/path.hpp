#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pb/parallel.hpp"

namespace pb {

// continuous paths interpolate linearly between samples; stepped paths are
// right-continuous piecewise-constant (left-anchored) with their own value
// at the terminal time
enum class PathKind { continuous, stepped };

// A sampled path on [0, t] with values in R^n.
//
// Samples are (time, value) pairs on a strictly increasing time grid
// starting at 0. A terminal offset, when set, shifts the value at exactly
// the terminal time without touching the recorded samples; it is the
// device behind vertical bumps, so quadrature-style functionals can give
// the bump zero weight while point evaluation at the horizon sees it.
class Path {
 public:
  Path() = default;
  Path(int dim, std::vector<double> times, std::vector<double> values,
       PathKind kind = PathKind::continuous);

  // constant-zero path sampled on a uniform grid with `steps`+1 samples
  static Path zero(int dim, double horizon, std::size_t steps);
  // 1-d path sampled from a function on a uniform grid
  static Path sampled(double horizon, std::size_t steps,
                      const std::function<double(double)>& f);
  // n-d path; f fills `out` (size dim) for each grid time
  static Path sampled(int dim, double horizon, std::size_t steps,
                      const std::function<void(double, double*)>& f);

  int dim() const { return dim_; }
  std::size_t samples() const { return times_.size(); }
  double horizon() const { return times_.empty() ? 0.0 : times_.back(); }
  PathKind kind() const { return kind_; }
  void set_kind(PathKind k) { kind_ = k; }

  double time(std::size_t k) const { return times_[k]; }
  std::span<const double> times() const { return times_; }
  std::span<const double> raw_values() const { return values_; }

  // recorded sample k (terminal offset not applied)
  const double* sample(std::size_t k) const { return values_.data() + k * dim_; }
  // sample k with the terminal offset applied at the last index
  void point(std::size_t k, double* out) const;
  Eigen::VectorXd point_vec(std::size_t k) const;
  Eigen::VectorXd terminal() const { return point_vec(times_.size() - 1); }

  bool has_terminal_offset() const;
  std::span<const double> terminal_offset() const { return offset_; }
  void add_terminal_offset(std::span<const double> x);

  // evaluate at s in [0, horizon]; continuous kind interpolates, stepped
  // kind is left-anchored; s == horizon returns the terminal point value
  void value_at(double s, double* out) const;
  Eigen::VectorXd value_at(double s) const;

  // membership validator for the space of paths vanishing at time zero
  bool vanishes_at_zero(double tol = 0.0) const;

  // mutation used by simulation/evaluation workspaces
  void append(double t, const double* value);
  void truncate_to(std::size_t n_samples);
  void assign(int dim, std::span<const double> times,
              std::span<const double> values, PathKind kind);
  void reserve(std::size_t n_samples);

  bool operator==(const Path& other) const;

 private:
  int dim_ = 1;
  std::vector<double> times_;
  std::vector<double> values_;   // row-major, samples() x dim
  std::vector<double> offset_;   // empty or size dim
  PathKind kind_ = PathKind::continuous;

  std::size_t locate(double s) const;  // greatest k with times_[k] <= s
};

struct HolderParams {
  double alpha = 0.25;  // exponent in (0, 1]
  double mu = 1.0;      // modulus bound > 0
  HolderParams() = default;
  HolderParams(double a, double m);
};

struct CylinderSpec {
  Path center;
  double kappa = 0.0;  // radius > 0
  double iota = 0.0;   // time depth > 0
  CylinderSpec(Path c, double k, double i, double total_horizon);
};

// sup over samples of the Euclidean norm
double sup_norm(const Path& a);

// parabolic distance: sqrt(|t - tbar|) + sup over the union grid of the
// distance between the flat-extended shorter path and the longer one
double dp_metric(const Path& a, const Path& b);

// extend by the terminal value up to t_new; grid spacing follows the
// path's last spacing; a terminal offset is resolved into the extension
Path flat_extend(const Path& a, double t_new);

// shift the value at exactly the terminal time by x
Path vertical_bump(const Path& a, std::span<const double> x);
Path vertical_bump(const Path& a, const Eigen::VectorXd& x);

// prefix on [0, t), then the suffix increments re-anchored at the prefix
// terminal value
Path concat(const Path& prefix, const Path& suffix);

// exact alpha-Holder modulus over all sample pairs (stride subsamples the
// left index for very long grids; stride 1 is exact)
double holder_modulus(const Path& a, double alpha, std::size_t stride = 1,
                      Exec exec = Exec::parallel);

// modulus over a raw contiguous 1-d sample block on a uniform grid with
// spacing dt (kernel shared with the batch statistics)
double holder_modulus_uniform_1d(std::span<const double> values, double dt,
                                 double alpha);

bool in_holder_ball(const Path& a, const HolderParams& hp);

// piecewise-constant projection onto the m-segment grid of [0, total_horizon]
Path truncate_pm(const Path& a, int m, double total_horizon);

// largest increment between interior samples closer than delta
double oscillation(const Path& a, double delta);

// radial shrink of the samples toward the terminal value so the modulus
// gains slack eps; two-branch rule applied samplewise
Path perturb(const Path& a, const HolderParams& hp, double eps);

bool in_cylinder(const Path& a, const CylinderSpec& c);

// first sample time at which the running modulus exceeds hp.mu
std::optional<double> exit_time_holder(const Path& a, const HolderParams& hp);

// path CSV round trip: `# kind=...` metadata line, `time,x1,...,xn` header
void write_path_csv(const Path& a, const std::string& file);
Path read_path_csv(const std::string& file);

namespace ref {
// naive all-pairs reference for the modulus kernel
double holder_modulus(const Path& a, double alpha);
}  // namespace ref

}  // namespace pb
