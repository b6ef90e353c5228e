#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "otcg/lp.hpp"
#include "otcg/rng.hpp"

namespace otcg::ot {

using Point = Eigen::VectorXd;
using PointMap = std::function<Point(const Point&)>;
using Metric = std::function<double(const Point&, const Point&)>;

double euclidean(const Point& a, const Point& b);

struct DiscretePointSet {
  std::vector<Point> points;
  std::vector<double> weights;

  static DiscretePointSet uniform(std::vector<Point> pts);
  static DiscretePointSet dirac(Point p);

  std::size_t size() const { return points.size(); }
  Eigen::Index dim() const { return points.empty() ? 0 : points.front().size(); }
  /// Throws InstanceError on negative/non-normalized weights, ragged or
  /// non-finite points.
  void validate() const;
  DiscretePointSet pushforward(const PointMap& t) const;
};

struct DiscreteOTInstance {
  DiscretePointSet mu;
  DiscretePointSet nu;
  Eigen::MatrixXd cost;  // cost(i, j) = c(x_i, y_j)

  static DiscreteOTInstance from_metric(DiscretePointSet mu, DiscretePointSet nu, const Metric& m = euclidean);
  void validate() const;
  std::string dump() const;
};

struct TransportPlan {
  Eigen::MatrixXd plan;
  double value = 0.0;
};

/// Kantorovich potentials (phi on mu's atoms, psi on nu's atoms).
struct DualSolution {
  Eigen::VectorXd phi;
  Eigen::VectorXd psi;
  double value = 0.0;
};

TransportPlan solve_primal(const DiscreteOTInstance& inst, const lp::Solver& solver = lp::default_solver());
/// Independent LP over (phi, psi) with phi_i + psi_j <= C_ij.
DualSolution solve_dual(const DiscreteOTInstance& inst, const lp::Solver& solver = lp::default_solver());

/// W1 through the 1-Lipschitz potential LP on the union of supports.
double wasserstein1(const DiscretePointSet& mu, const DiscretePointSet& nu, const Metric& metric = euclidean,
                    const lp::Solver& solver = lp::default_solver());
/// W1 through the transport LP; kept separate so the two routes can be compared.
double wasserstein1_primal(const DiscretePointSet& mu, const DiscretePointSet& nu, const Metric& metric = euclidean,
                           const lp::Solver& solver = lp::default_solver());

/// phi^c(y_j) = min_i C_ij - phi_i
Eigen::VectorXd c_transform(const Eigen::VectorXd& phi, const DiscreteOTInstance& inst);
/// psi^cbar(x_i) = min_j C_ij - psi_j
Eigen::VectorXd cbar_transform(const Eigen::VectorXd& psi, const DiscreteOTInstance& inst);
double dual_objective(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi, const DiscreteOTInstance& inst);

struct BoundCertificate {
  double K = 0.0;
  double ell_OT_prime = 0.0;
  double ell_cycle = 0.0;
  double D = 0.0;
  bool lower_ok = false;  // ell_OT' - eps <= K, the half that holds unconditionally
  bool upper_ok = false;  // K <= ell_OT' + ell_cycle + eps
  bool sandwich_ok = false;
  bool gap_ok = false;
};

inline constexpr double kCertifyEps = 1e-8;

BoundCertificate certify_prop1(const DiscretePointSet& mu, const DiscretePointSet& nu, const PointMap& G,
                               const PointMap& H, double eps = kCertifyEps,
                               const lp::Solver& solver = lp::default_solver());

/// True iff T#mu == nu as atomic measures (atoms and weights within tol).
bool pushforward_check(const PointMap& T, const DiscretePointSet& mu, const DiscretePointSet& nu, double tol = 1e-12);

struct AffineMap {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Point operator()(const Point& x) const { return a * x + b; }
  AffineMap inverse() const;
};

/// Random certification case: Gaussian atoms, random simplex weights and
/// Gaussian affine maps G, H. Sizes uniform in [1, max_points], dimension
/// uniform in [1, max_dim].
struct CertificationCase {
  DiscretePointSet mu;
  DiscretePointSet nu;
  AffineMap G;
  AffineMap H;
};
CertificationCase random_case(Rng& rng, int max_points, int max_dim);

}  // namespace otcg::ot
