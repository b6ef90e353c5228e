#include "otcg/ot_oracle.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "otcg/errors.hpp"

namespace otcg::ot {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double euclidean(const Point& a, const Point& b) { return (a - b).norm(); }

DiscretePointSet DiscretePointSet::uniform(std::vector<Point> pts) {
  DiscretePointSet s;
  const double w = 1.0 / static_cast<double>(pts.size());
  s.weights.assign(pts.size(), w);
  s.points = std::move(pts);
  return s;
}

DiscretePointSet DiscretePointSet::dirac(Point p) { return uniform({std::move(p)}); }

void DiscretePointSet::validate() const {
  if (points.empty()) throw InstanceError("point set is empty");
  if (points.size() != weights.size()) throw InstanceError("point/weight count mismatch");
  const Index d = dim();
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) throw InstanceError("points have inconsistent dimension");
    if (!points[i].allFinite()) throw InstanceError("non-finite point");
    if (!(weights[i] >= 0.0)) throw InstanceError("negative weight");
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InstanceError("weights sum to " + std::to_string(total) + ", not 1");
}

DiscretePointSet DiscretePointSet::pushforward(const PointMap& t) const {
  DiscretePointSet out;
  out.weights = weights;
  out.points.reserve(points.size());
  for (const auto& p : points) out.points.push_back(t(p));
  return out;
}

DiscreteOTInstance DiscreteOTInstance::from_metric(DiscretePointSet mu, DiscretePointSet nu, const Metric& m) {
  DiscreteOTInstance inst;
  inst.cost.resize(static_cast<Index>(mu.size()), static_cast<Index>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j)
      inst.cost(static_cast<Index>(i), static_cast<Index>(j)) = m(mu.points[i], nu.points[j]);
  inst.mu = std::move(mu);
  inst.nu = std::move(nu);
  return inst;
}

void DiscreteOTInstance::validate() const {
  mu.validate();
  nu.validate();
  if (cost.rows() != static_cast<Index>(mu.size()) || cost.cols() != static_cast<Index>(nu.size()))
    throw InstanceError("cost matrix shape does not match supports");
  if (!cost.allFinite()) throw InstanceError("non-finite cost entry");
}

std::string DiscreteOTInstance::dump() const {
  std::ostringstream os;
  os.precision(17);
  auto put = [&](const char* name, const DiscretePointSet& s) {
    os << name << ":\n";
    for (std::size_t i = 0; i < s.size(); ++i) os << "  w=" << s.weights[i] << " x=" << s.points[i].transpose() << "\n";
  };
  put("mu", mu);
  put("nu", nu);
  os << "cost:\n" << cost << "\n";
  return os.str();
}

namespace {

lp::Result run(const lp::Solver& solver, const lp::Problem& p, const std::string& what, const std::string& context) {
  lp::Result r = solver.solve(p);
  if (r.status != lp::Status::optimal)
    throw OracleError(what + ": LP " + lp::to_string(r.status) + "\n" + context + lp::dump(p));
  return r;
}

}  // namespace

TransportPlan solve_primal(const DiscreteOTInstance& inst, const lp::Solver& solver) {
  inst.validate();
  const Index n = inst.cost.rows(), m = inst.cost.cols();
  lp::Problem p;
  p.c.resize(n * m);
  p.a_eq = MatrixXd::Zero(n + m, n * m);
  p.b_eq.resize(n + m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      const Index k = i * m + j;
      p.c(k) = inst.cost(i, j);
      p.a_eq(i, k) = 1.0;
      p.a_eq(n + j, k) = 1.0;
    }
  for (Index i = 0; i < n; ++i) p.b_eq(i) = inst.mu.weights[static_cast<std::size_t>(i)];
  for (Index j = 0; j < m; ++j) p.b_eq(n + j) = inst.nu.weights[static_cast<std::size_t>(j)];

  const lp::Result r = run(solver, p, "solve_primal", inst.dump());
  TransportPlan out;
  out.plan.resize(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) out.plan(i, j) = std::max(0.0, r.x(i * m + j));
  out.value = r.value;
  return out;
}

DualSolution solve_dual(const DiscreteOTInstance& inst, const lp::Solver& solver) {
  inst.validate();
  const Index n = inst.cost.rows(), m = inst.cost.cols();
  lp::Problem p;
  p.c.resize(n + m);
  for (Index i = 0; i < n; ++i) p.c(i) = -inst.mu.weights[static_cast<std::size_t>(i)];
  for (Index j = 0; j < m; ++j) p.c(n + j) = -inst.nu.weights[static_cast<std::size_t>(j)];
  p.a_ub = MatrixXd::Zero(n * m, n + m);
  p.b_ub.resize(n * m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      p.a_ub(i * m + j, i) = 1.0;
      p.a_ub(i * m + j, n + j) = 1.0;
      p.b_ub(i * m + j) = inst.cost(i, j);
    }
  p.free.assign(static_cast<std::size_t>(n + m), true);
  const lp::Result r = run(solver, p, "solve_dual", inst.dump());
  return {r.x.head(n), r.x.tail(m), -r.value};
}

double wasserstein1(const DiscretePointSet& mu, const DiscretePointSet& nu, const Metric& metric,
                    const lp::Solver& solver) {
  mu.validate();
  nu.validate();
  if (mu.dim() != nu.dim()) throw InstanceError("wasserstein1: dimension mismatch");
  std::vector<const Point*> atoms;
  for (const auto& p : mu.points) atoms.push_back(&p);
  for (const auto& p : nu.points) atoms.push_back(&p);
  const Index n = static_cast<Index>(mu.size());
  const Index total = static_cast<Index>(atoms.size());

  // max sum_i a_i f(x_i) - sum_j b_j f(y_j)  s.t.  f(p) - f(q) <= d(p, q).
  lp::Problem p;
  p.c = VectorXd::Zero(total);
  for (Index i = 0; i < n; ++i) p.c(i) -= mu.weights[static_cast<std::size_t>(i)];
  for (Index j = n; j < total; ++j) p.c(j) += nu.weights[static_cast<std::size_t>(j - n)];
  const Index rows = total * (total - 1);
  p.a_ub = MatrixXd::Zero(rows, total);
  p.b_ub.resize(rows);
  Index r = 0;
  for (Index a = 0; a < total; ++a)
    for (Index b = 0; b < total; ++b) {
      if (a == b) continue;
      p.a_ub(r, a) = 1.0;
      p.a_ub(r, b) = -1.0;
      p.b_ub(r) = metric(*atoms[static_cast<std::size_t>(a)], *atoms[static_cast<std::size_t>(b)]);
      ++r;
    }
  p.free.assign(static_cast<std::size_t>(total), true);
  if (rows == 0) return 0.0;  // single shared atom
  return -run(solver, p, "wasserstein1", "").value;
}

double wasserstein1_primal(const DiscretePointSet& mu, const DiscretePointSet& nu, const Metric& metric,
                           const lp::Solver& solver) {
  if (mu.dim() != nu.dim()) throw InstanceError("wasserstein1: dimension mismatch");
  return solve_primal(DiscreteOTInstance::from_metric(mu, nu, metric), solver).value;
}

VectorXd c_transform(const VectorXd& phi, const DiscreteOTInstance& inst) {
  if (phi.size() != inst.cost.rows()) throw DimensionError("c_transform: phi size mismatch");
  return (inst.cost.colwise() - phi).colwise().minCoeff().transpose();
}

VectorXd cbar_transform(const VectorXd& psi, const DiscreteOTInstance& inst) {
  if (psi.size() != inst.cost.cols()) throw DimensionError("cbar_transform: psi size mismatch");
  return (inst.cost.rowwise() - psi.transpose()).rowwise().minCoeff();
}

double dual_objective(const VectorXd& phi, const VectorXd& psi, const DiscreteOTInstance& inst) {
  const VectorXd a = Eigen::Map<const VectorXd>(inst.mu.weights.data(), static_cast<Index>(inst.mu.size()));
  const VectorXd b = Eigen::Map<const VectorXd>(inst.nu.weights.data(), static_cast<Index>(inst.nu.size()));
  return a.dot(phi) + b.dot(psi);
}

BoundCertificate certify_prop1(const DiscretePointSet& mu, const DiscretePointSet& nu, const PointMap& G,
                               const PointMap& H, double eps, const lp::Solver& solver) {
  mu.validate();
  nu.validate();
  const DiscretePointSet h_mu = mu.pushforward(H);  // lives in Y
  const DiscretePointSet g_nu = nu.pushforward(G);  // lives in X
  if (h_mu.dim() != nu.dim() || g_nu.dim() != mu.dim()) throw InstanceError("certify_prop1: map dimensions");

  DiscreteOTInstance inst;
  inst.mu = mu;
  inst.nu = nu;
  inst.cost.resize(static_cast<Index>(mu.size()), static_cast<Index>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j)
      inst.cost(static_cast<Index>(i), static_cast<Index>(j)) =
          (nu.points[j] - h_mu.points[i]).norm() + (g_nu.points[j] - mu.points[i]).norm();

  BoundCertificate c;
  c.K = solve_primal(inst, solver).value;

  double cyc_x = 0.0, cyc_y = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) cyc_x += mu.weights[i] * (mu.points[i] - G(h_mu.points[i])).norm();
  for (std::size_t j = 0; j < nu.size(); ++j) cyc_y += nu.weights[j] * (nu.points[j] - H(g_nu.points[j])).norm();
  c.ell_cycle = 0.5 * (cyc_x + cyc_y);
  c.ell_OT_prime = 0.5 * (wasserstein1(mu, g_nu, euclidean, solver) + wasserstein1(nu, h_mu, euclidean, solver));
  c.D = c.ell_OT_prime + c.ell_cycle / 2.0;

  c.lower_ok = c.ell_OT_prime - eps <= c.K;
  c.upper_ok = c.K <= c.ell_OT_prime + c.ell_cycle + eps;
  c.sandwich_ok = c.lower_ok && c.upper_ok;
  c.gap_ok = std::abs(c.K - c.D) <= 0.5 * c.ell_cycle + eps;
  return c;
}

bool pushforward_check(const PointMap& T, const DiscretePointSet& mu, const DiscretePointSet& nu, double tol) {
  // Aggregate both measures over coincident atoms, then compare atom by atom.
  auto aggregate = [tol](const std::vector<Point>& pts, const std::vector<double>& w) {
    std::vector<std::pair<Point, double>> atoms;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool merged = false;
      for (auto& [p, m] : atoms)
        if (p.size() == pts[i].size() && (p - pts[i]).lpNorm<Eigen::Infinity>() <= tol) {
          m += w[i];
          merged = true;
          break;
        }
      if (!merged) atoms.emplace_back(pts[i], w[i]);
    }
    return atoms;
  };
  const DiscretePointSet image = mu.pushforward(T);
  const auto a = aggregate(image.points, image.weights);
  const auto b = aggregate(nu.points, nu.weights);
  if (a.size() != b.size()) return false;
  for (const auto& [p, m] : a) {
    bool found = false;
    for (const auto& [q, n] : b)
      if (p.size() == q.size() && (p - q).lpNorm<Eigen::Infinity>() <= tol) {
        if (std::abs(m - n) > tol) return false;
        found = true;
        break;
      }
    if (!found) return false;
  }
  return true;
}

AffineMap AffineMap::inverse() const {
  const MatrixXd inv = a.inverse();
  return {inv, -inv * b};
}

CertificationCase random_case(Rng& rng, int max_points, int max_dim) {
  if (max_points < 1 || max_dim < 1) throw ConfigError("random_case: max_points and max_dim must be >= 1");
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> npts(1, max_points), ndim(1, max_dim);
  std::uniform_real_distribution<double> uw(1e-3, 1.0);
  const int d = ndim(rng);
  auto cloud = [&](int n) {
    DiscretePointSet s;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      Point p(d);
      for (int k = 0; k < d; ++k) p(k) = normal(rng);
      s.points.push_back(p);
      s.weights.push_back(uw(rng));
      total += s.weights.back();
    }
    for (auto& w : s.weights) w /= total;
    // Renormalise the last weight so the sum is 1 to rounding.
    const double rest = std::accumulate(s.weights.begin(), s.weights.end() - 1, 0.0);
    s.weights.back() = 1.0 - rest;
    return s;
  };
  auto affine = [&] {
    AffineMap m{MatrixXd(d, d), VectorXd(d)};
    for (int r = 0; r < d; ++r) {
      m.b(r) = normal(rng);
      for (int k = 0; k < d; ++k) m.a(r, k) = normal(rng);
    }
    return m;
  };
  CertificationCase c;
  c.mu = cloud(npts(rng));
  c.nu = cloud(npts(rng));
  c.G = affine();
  c.H = affine();
  return c;
}

}  // namespace otcg::ot
