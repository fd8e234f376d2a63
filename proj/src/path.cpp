#include "pb/path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pb {

namespace {

constexpr double kTimeTol = 1e-12;

double pair_norm(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int c = 0; c < dim; ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return std::sqrt(s);
}

double vec_norm(const double* a, int dim) {
  double s = 0.0;
  for (int c = 0; c < dim; ++c) s += a[c] * a[c];
  return std::sqrt(s);
}

}  // namespace

Path::Path(int dim, std::vector<double> times, std::vector<double> values,
           PathKind kind)
    : dim_(dim), times_(std::move(times)), values_(std::move(values)), kind_(kind) {
  if (dim_ < 1) throw std::invalid_argument("Path: dim must be positive");
  if (times_.empty()) throw std::invalid_argument("Path: needs at least one sample");
  if (values_.size() != times_.size() * static_cast<std::size_t>(dim_))
    throw std::invalid_argument("Path: times/values length mismatch");
  if (std::abs(times_.front()) > kTimeTol)
    throw std::invalid_argument("Path: time grid must start at 0");
  times_.front() = 0.0;
  for (std::size_t k = 1; k < times_.size(); ++k)
    if (!(times_[k] > times_[k - 1]))
      throw std::invalid_argument("Path: times must be strictly increasing");
}

Path Path::zero(int dim, double horizon, std::size_t steps) {
  return sampled(dim, horizon, steps, [](double, double* out) { (void)out; });
}

Path Path::sampled(double horizon, std::size_t steps,
                   const std::function<double(double)>& f) {
  return sampled(1, horizon, steps,
                 [&f](double t, double* out) { out[0] = f(t); });
}

Path Path::sampled(int dim, double horizon, std::size_t steps,
                   const std::function<void(double, double*)>& f) {
  if (horizon < 0.0) throw std::invalid_argument("Path: negative horizon");
  if (horizon == 0.0 || steps == 0) {
    std::vector<double> v(dim, 0.0);
    f(0.0, v.data());
    return Path(dim, {0.0}, std::move(v));
  }
  std::vector<double> times(steps + 1), values((steps + 1) * dim, 0.0);
  for (std::size_t k = 0; k <= steps; ++k) {
    times[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    f(times[k], values.data() + k * dim);
  }
  times.back() = horizon;
  return Path(dim, std::move(times), std::move(values));
}

void Path::point(std::size_t k, double* out) const {
  const double* s = sample(k);
  std::memcpy(out, s, sizeof(double) * dim_);
  if (k + 1 == times_.size() && !offset_.empty())
    for (int c = 0; c < dim_; ++c) out[c] += offset_[c];
}

Eigen::VectorXd Path::point_vec(std::size_t k) const {
  Eigen::VectorXd v(dim_);
  point(k, v.data());
  return v;
}

bool Path::has_terminal_offset() const {
  for (double o : offset_)
    if (o != 0.0) return true;
  return false;
}

void Path::add_terminal_offset(std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(dim_))
    throw std::invalid_argument("Path: bump dimension mismatch");
  if (offset_.empty()) offset_.assign(dim_, 0.0);
  for (int c = 0; c < dim_; ++c) offset_[c] += x[c];
}

std::size_t Path::locate(double s) const {
  // greatest k with times_[k] <= s
  auto it = std::upper_bound(times_.begin(), times_.end(), s);
  if (it == times_.begin()) return 0;
  return static_cast<std::size_t>(it - times_.begin()) - 1;
}

void Path::value_at(double s, double* out) const {
  const double t = horizon();
  if (s < -kTimeTol || s > t + kTimeTol)
    throw std::invalid_argument("Path: evaluation outside [0, horizon]");
  s = std::clamp(s, 0.0, t);
  if (s >= t) {
    point(times_.size() - 1, out);
    return;
  }
  const std::size_t k = locate(s);
  if (kind_ == PathKind::stepped || k + 1 == times_.size() ||
      times_[k] == s) {
    std::memcpy(out, sample(k), sizeof(double) * dim_);
    return;
  }
  const double t0 = times_[k], t1 = times_[k + 1];
  const double w = (s - t0) / (t1 - t0);
  const double* a = sample(k);
  const double* b = sample(k + 1);
  for (int c = 0; c < dim_; ++c) out[c] = (1.0 - w) * a[c] + w * b[c];
}

Eigen::VectorXd Path::value_at(double s) const {
  Eigen::VectorXd v(dim_);
  value_at(s, v.data());
  return v;
}

bool Path::vanishes_at_zero(double tol) const {
  for (int c = 0; c < dim_; ++c)
    if (std::abs(values_[c]) > tol) return false;
  return true;
}

void Path::append(double t, const double* value) {
  if (!times_.empty() && !(t > times_.back()))
    throw std::invalid_argument("Path::append: time not increasing");
  if (has_terminal_offset())
    throw std::logic_error("Path::append: cannot grow a bumped path");
  times_.push_back(t);
  values_.insert(values_.end(), value, value + dim_);
}

void Path::truncate_to(std::size_t n_samples) {
  if (n_samples == 0 || n_samples > times_.size())
    throw std::invalid_argument("Path::truncate_to: bad sample count");
  times_.resize(n_samples);
  values_.resize(n_samples * dim_);
  offset_.clear();
}

void Path::assign(int dim, std::span<const double> times,
                  std::span<const double> values, PathKind kind) {
  dim_ = dim;
  kind_ = kind;
  times_.assign(times.begin(), times.end());
  values_.assign(values.begin(), values.end());
  offset_.clear();
}

void Path::reserve(std::size_t n_samples) {
  times_.reserve(n_samples);
  values_.reserve(n_samples * dim_);
}

bool Path::operator==(const Path& other) const {
  if (dim_ != other.dim_ || kind_ != other.kind_ || times_ != other.times_ ||
      values_ != other.values_)
    return false;
  const std::size_t n = static_cast<std::size_t>(dim_);
  for (std::size_t c = 0; c < n; ++c) {
    const double a = c < offset_.size() ? offset_[c] : 0.0;
    const double b = c < other.offset_.size() ? other.offset_[c] : 0.0;
    if (a != b) return false;
  }
  return true;
}

HolderParams::HolderParams(double a, double m) : alpha(a), mu(m) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("HolderParams: alpha must lie in (0,1]");
  if (!(mu > 0.0)) throw std::invalid_argument("HolderParams: mu must be positive");
}

CylinderSpec::CylinderSpec(Path c, double k, double i, double total_horizon)
    : center(std::move(c)), kappa(k), iota(i) {
  if (!(kappa > 0.0)) throw std::invalid_argument("CylinderSpec: kappa must be positive");
  if (!(iota > 0.0)) throw std::invalid_argument("CylinderSpec: iota must be positive");
  if (center.horizon() + iota > total_horizon + kTimeTol)
    throw std::invalid_argument("CylinderSpec: horizon + iota exceeds total horizon");
}

double sup_norm(const Path& a) {
  const int n = a.dim();
  double best = 0.0;
  std::vector<double> buf(n);
  for (std::size_t k = 0; k < a.samples(); ++k) {
    a.point(k, buf.data());
    best = std::max(best, vec_norm(buf.data(), n));
  }
  return best;
}

namespace {

// flat-extension evaluation used by dp_metric / in_cylinder
void eval_flat(const Path& p, double s, double* out) {
  p.value_at(std::min(s, p.horizon()), out);
}

}  // namespace

double dp_metric(const Path& a, const Path& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("dp_metric: dimension mismatch");
  const Path& lo = a.horizon() <= b.horizon() ? a : b;
  const Path& hi = a.horizon() <= b.horizon() ? b : a;
  const int n = a.dim();
  std::vector<double> va(n), vb(n);
  double sup = 0.0;
  auto visit = [&](double s) {
    eval_flat(lo, s, va.data());
    eval_flat(hi, s, vb.data());
    sup = std::max(sup, pair_norm(va.data(), vb.data(), n));
  };
  for (double s : lo.times()) visit(s);
  for (double s : hi.times()) visit(s);
  return std::sqrt(hi.horizon() - lo.horizon()) + sup;
}

Path flat_extend(const Path& a, double t_new) {
  const double t = a.horizon();
  if (t_new < t - kTimeTol)
    throw std::invalid_argument("flat_extend: target before horizon");
  if (t_new <= t + kTimeTol) return a;
  const int n = a.dim();
  std::vector<double> times(a.times().begin(), a.times().end());
  std::vector<double> values(a.raw_values().begin(), a.raw_values().end());
  std::vector<double> term(n);
  a.point(a.samples() - 1, term.data());
  // the extension carries the terminal point value, bump included
  std::copy(term.begin(), term.end(), values.end() - n);
  double dt = a.samples() > 1 ? t - a.time(a.samples() - 2) : t_new - t;
  const std::size_t add = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround((t_new - t) / dt)));
  for (std::size_t j = 1; j <= add; ++j) {
    times.push_back(t + (t_new - t) * static_cast<double>(j) /
                            static_cast<double>(add));
    values.insert(values.end(), term.begin(), term.end());
  }
  times.back() = t_new;
  return Path(n, std::move(times), std::move(values), a.kind());
}

Path vertical_bump(const Path& a, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(a.dim()))
    throw std::invalid_argument("vertical_bump: dimension mismatch");
  Path out = a;
  out.add_terminal_offset(x);
  return out;
}

Path vertical_bump(const Path& a, const Eigen::VectorXd& x) {
  return vertical_bump(a, std::span<const double>(x.data(), x.size()));
}

Path concat(const Path& prefix, const Path& suffix) {
  if (prefix.dim() != suffix.dim())
    throw std::invalid_argument("concat: dimension mismatch");
  if (suffix.horizon() < prefix.horizon() - kTimeTol)
    throw std::invalid_argument("concat: suffix horizon before prefix horizon");
  const int n = prefix.dim();
  const double t = prefix.horizon();
  std::vector<double> times, values;
  times.reserve(prefix.samples() + suffix.samples());
  values.reserve((prefix.samples() + suffix.samples()) * n);
  for (std::size_t k = 0; k + 1 < prefix.samples(); ++k) {
    times.push_back(prefix.time(k));
    const double* s = prefix.sample(k);
    values.insert(values.end(), s, s + n);
  }
  std::vector<double> anchor(n), at_t(n), buf(n);
  prefix.point(prefix.samples() - 1, anchor.data());
  suffix.value_at(std::min(t, suffix.horizon()), at_t.data());
  times.push_back(t);
  values.insert(values.end(), anchor.begin(), anchor.end());
  for (std::size_t k = 0; k < suffix.samples(); ++k) {
    if (suffix.time(k) <= t + kTimeTol) continue;
    suffix.point(k, buf.data());
    times.push_back(suffix.time(k));
    for (int c = 0; c < n; ++c)
      values.push_back(buf[c] - at_t[c] + anchor[c]);
  }
  const PathKind kind = (prefix.kind() == PathKind::continuous &&
                         suffix.kind() == PathKind::continuous)
                            ? PathKind::continuous
                            : PathKind::stepped;
  return Path(n, std::move(times), std::move(values), kind);
}

double holder_modulus_uniform_1d(std::span<const double> values, double dt,
                                 double alpha) {
  const std::size_t k = values.size();
  if (k < 2) return 0.0;
  double best = 0.0;
  for (std::size_t lag = 1; lag < k; ++lag) {
    double m = 0.0;
    const double* x = values.data();
    for (std::size_t s = 0; s + lag < k; ++s)
      m = std::max(m, std::abs(x[s + lag] - x[s]));
    const double q = m / std::pow(static_cast<double>(lag) * dt, alpha);
    best = std::max(best, q);
  }
  return best;
}

namespace {

bool uniform_grid(std::span<const double> times, double& dt) {
  if (times.size() < 2) return false;
  dt = times[1] - times[0];
  for (std::size_t k = 1; k + 1 < times.size(); ++k) {
    const double d = times[k + 1] - times[k];
    if (std::abs(d - dt) > 1e-9 * std::max(dt, d)) return false;
  }
  return true;
}

}  // namespace

double holder_modulus(const Path& a, double alpha, std::size_t stride,
                      Exec exec) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("holder_modulus: alpha must lie in (0,1]");
  const std::size_t k = a.samples();
  if (k < 2) return 0.0;
  if (stride == 0) stride = 1;
  const int n = a.dim();

  std::vector<double> pts(k * n);
  for (std::size_t s = 0; s < k; ++s) a.point(s, pts.data() + s * n);

  double grid_dt = 0.0;
  if (n == 1 && stride == 1 && uniform_grid(a.times(), grid_dt))
    return holder_modulus_uniform_1d(pts, grid_dt, alpha);

  const std::size_t n_left = (k - 1 + stride - 1) / stride;
  std::vector<double> partial(n_left, 0.0);
  parallel_for(static_cast<std::int64_t>(n_left), exec, [&](std::int64_t w) {
    const std::size_t i = static_cast<std::size_t>(w) * stride;
    double best = 0.0;
    for (std::size_t j = i + stride; j < k; j += stride) {
      const double d = pair_norm(pts.data() + i * n, pts.data() + j * n, n);
      best = std::max(best, d / std::pow(a.time(j) - a.time(i), alpha));
    }
    // keep the terminal sample in every scan so stride never drops it
    if ((k - 1 - i) % stride != 0) {
      const double d =
          pair_norm(pts.data() + i * n, pts.data() + (k - 1) * n, n);
      best = std::max(best, d / std::pow(a.time(k - 1) - a.time(i), alpha));
    }
    partial[w] = best;
  });
  double best = 0.0;
  for (double p : partial) best = std::max(best, p);
  return best;
}

namespace ref {

double holder_modulus(const Path& a, double alpha) {
  const std::size_t k = a.samples();
  const int n = a.dim();
  std::vector<double> pi(n), pj(n);
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    a.point(i, pi.data());
    for (std::size_t j = i + 1; j < k; ++j) {
      a.point(j, pj.data());
      const double d = pair_norm(pi.data(), pj.data(), n);
      best = std::max(best, d / std::pow(a.time(j) - a.time(i), alpha));
    }
  }
  return best;
}

}  // namespace ref

bool in_holder_ball(const Path& a, const HolderParams& hp) {
  return holder_modulus(a, hp.alpha) <= hp.mu;
}

Path truncate_pm(const Path& a, int m, double total_horizon) {
  if (m < 1) throw std::invalid_argument("truncate_pm: m must be positive");
  if (a.kind() != PathKind::continuous)
    throw std::invalid_argument("truncate_pm: input must be continuous");
  if (total_horizon < a.horizon() - kTimeTol)
    throw std::invalid_argument("truncate_pm: horizon exceeds total horizon");
  const double t = a.horizon();
  const double seg = total_horizon / static_cast<double>(m);
  int k = static_cast<int>(std::ceil(t / seg - kTimeTol));
  k = std::max(k, 1);
  const int n = a.dim();
  std::vector<double> times, values;
  std::vector<double> buf(n);
  for (int i = 0; i < k; ++i) {
    const double ti = seg * static_cast<double>(i);
    if (ti >= t - kTimeTol) break;
    a.value_at(ti, buf.data());
    times.push_back(ti);
    values.insert(values.end(), buf.begin(), buf.end());
  }
  a.point(a.samples() - 1, buf.data());
  times.push_back(t);
  values.insert(values.end(), buf.begin(), buf.end());
  return Path(n, std::move(times), std::move(values), PathKind::stepped);
}

double oscillation(const Path& a, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("oscillation: delta must be positive");
  const std::size_t k = a.samples();
  const double t = a.horizon();
  const int n = a.dim();
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(a.time(i) > 0.0)) continue;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (!(a.time(j) < t)) break;
      if (!(a.time(j) - a.time(i) < delta)) break;
      best = std::max(best, pair_norm(a.sample(i), a.sample(j), n));
    }
  }
  return best;
}

Path perturb(const Path& a, const HolderParams& hp, double eps) {
  if (!(eps > 0.0) || !(eps < hp.mu))
    throw std::invalid_argument("perturb: eps must lie in (0, mu)");
  if (!in_holder_ball(a, hp))
    throw std::invalid_argument("perturb: path outside the Holder ball");
  const int n = a.dim();
  const double t = a.horizon();
  const double slack = hp.mu - eps;
  std::vector<double> term(n);
  a.point(a.samples() - 1, term.data());
  std::vector<double> times(a.times().begin(), a.times().end());
  std::vector<double> values(a.samples() * n);
  std::vector<double> buf(n);
  for (std::size_t k = 0; k < a.samples(); ++k) {
    a.point(k, buf.data());
    double* out = values.data() + k * n;
    const double d = pair_norm(buf.data(), term.data(), n);
    const double bound = slack * std::pow(t - a.time(k), hp.alpha);
    if (d <= bound) {
      std::copy(buf.begin(), buf.end(), out);
    } else {
      for (int c = 0; c < n; ++c)
        out[c] = term[c] + bound * (buf[c] - term[c]) / d;
    }
  }
  return Path(n, std::move(times), std::move(values), a.kind());
}

bool in_cylinder(const Path& a, const CylinderSpec& c) {
  if (a.dim() != c.center.dim())
    throw std::invalid_argument("in_cylinder: dimension mismatch");
  const double tc = c.center.horizon();
  if (a.horizon() < tc - kTimeTol || a.horizon() > tc + c.iota + kTimeTol)
    return false;
  const int n = a.dim();
  std::vector<double> va(n), vb(n);
  double sup = 0.0;
  auto visit = [&](double s) {
    if (s > a.horizon() + kTimeTol) return;
    eval_flat(c.center, std::min(s, a.horizon()), va.data());
    a.value_at(std::min(s, a.horizon()), vb.data());
    sup = std::max(sup, pair_norm(va.data(), vb.data(), n));
  };
  for (double s : c.center.times()) visit(s);
  for (double s : a.times()) visit(s);
  return sup < c.kappa;
}

std::optional<double> exit_time_holder(const Path& a, const HolderParams& hp) {
  const std::size_t k = a.samples();
  const int n = a.dim();
  std::vector<double> pts(k * n);
  for (std::size_t s = 0; s < k; ++s) a.point(s, pts.data() + s * n);
  double running = 0.0;
  for (std::size_t j = 1; j < k; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const double d = pair_norm(pts.data() + i * n, pts.data() + j * n, n);
      running = std::max(
          running, d / std::pow(a.time(j) - a.time(i), hp.alpha));
    }
    if (running > hp.mu) return a.time(j);
  }
  return std::nullopt;
}

void write_path_csv(const Path& a, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_path_csv: cannot open " + file);
  out << "# kind=" << (a.kind() == PathKind::continuous ? "continuous" : "stepped")
      << "\n";
  out << "time";
  for (int c = 1; c <= a.dim(); ++c) out << ",x" << c;
  out << "\n";
  char buf[64];
  std::vector<double> v(a.dim());
  for (std::size_t k = 0; k < a.samples(); ++k) {
    a.point(k, v.data());
    std::snprintf(buf, sizeof(buf), "%.17g", a.time(k));
    out << buf;
    for (int c = 0; c < a.dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[c]);
      out << ',' << buf;
    }
    out << "\n";
  }
}

Path read_path_csv(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("read_path_csv: cannot open " + file);
  std::string line;
  PathKind kind = PathKind::continuous;
  std::vector<double> times, values;
  int dim = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("kind=stepped") != std::string::npos) kind = PathKind::stepped;
      continue;
    }
    if (line.rfind("time", 0) == 0) continue;  // header
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 2) throw std::runtime_error("read_path_csv: bad row");
    if (dim < 0) dim = static_cast<int>(row.size()) - 1;
    if (static_cast<int>(row.size()) - 1 != dim)
      throw std::runtime_error("read_path_csv: inconsistent row width");
    times.push_back(row[0]);
    values.insert(values.end(), row.begin() + 1, row.end());
  }
  if (times.empty()) throw std::runtime_error("read_path_csv: no samples");
  return Path(dim, std::move(times), std::move(values), kind);
}

}  // namespace pb
