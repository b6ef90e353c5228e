#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace otcg::lp {

/// minimize c^T x  subject to  a_eq x = b_eq,  a_ub x <= b_ub,
/// x_j >= 0 unless free[j].
struct Problem {
  Eigen::VectorXd c;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd a_ub;
  Eigen::VectorXd b_ub;
  std::vector<bool> free;  // empty = all nonnegative

  Eigen::Index variables() const { return c.size(); }
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Result {
  Status status = Status::iteration_limit;
  double value = 0.0;
  Eigen::VectorXd x;
  int iterations = 0;
};

class Solver {
 public:
  virtual ~Solver() = default;
  virtual Result solve(const Problem& p) const = 0;
};

/// Two-phase dense tableau simplex. Dantzig pricing, falling back to
/// Bland's rule after a run of degenerate pivots so it cannot cycle.
class DenseSimplex : public Solver {
 public:
  explicit DenseSimplex(double tolerance = 1e-11, int max_iterations = 100000)
      : tol_(tolerance), max_iter_(max_iterations) {}
  Result solve(const Problem& p) const override;

 private:
  double tol_;
  int max_iter_;
};

const Solver& default_solver();
std::string to_string(Status s);
/// Human-readable dump used in oracle error messages.
std::string dump(const Problem& p);

}  // namespace otcg::lp
