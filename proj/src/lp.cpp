#include "otcg/lp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "otcg/errors.hpp"

namespace otcg::lp {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Tableau: rows 0..m-1 are constraints, last column is the RHS.
class Tableau {
 public:
  Tableau(MatrixXd t, std::vector<Index> basis, double tol, int max_iter)
      : t_(std::move(t)), basis_(std::move(basis)), tol_(tol), max_iter_(max_iter) {}

  Index rows() const { return t_.rows(); }
  Index rhs() const { return t_.cols() - 1; }
  MatrixXd& table() { return t_; }
  std::vector<Index>& basis() { return basis_; }
  int iterations() const { return iterations_; }

  void pivot(Index r, Index col) {
    t_.row(r) /= t_(r, col);
    for (Index i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, col);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[r] = col;
  }

  // Minimizes cost^T z over columns [0, ncols) with the current basis.
  Status optimize(const VectorXd& cost, Index ncols) {
    int degenerate_run = 0;
    while (true) {
      if (iterations_ >= max_iter_) return Status::iteration_limit;
      // Reduced costs: cost_j - cost_B^T T_j.
      VectorXd cb(rows());
      for (Index i = 0; i < rows(); ++i) cb(i) = basis_[i] < cost.size() ? cost(basis_[i]) : 0.0;
      const bool bland = degenerate_run > 50;
      Index enter = -1;
      double best = -tol_;
      for (Index j = 0; j < ncols; ++j) {
        const double rc = cost(j) - cb.dot(t_.col(j).head(rows()));
        if (rc < best) {
          enter = j;
          if (bland) break;
          best = rc;
        }
      }
      if (enter < 0) return Status::optimal;

      Index leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < rows(); ++i) {
        const double a = t_(i, enter);
        if (a <= tol_) continue;
        const double q = t_(i, rhs()) / a;
        if (q < ratio - 1e-15 || (std::abs(q - ratio) <= 1e-15 && leave >= 0 && basis_[i] < basis_[leave])) {
          ratio = q;
          leave = i;
        }
      }
      if (leave < 0) return Status::unbounded;
      degenerate_run = ratio <= tol_ ? degenerate_run + 1 : 0;
      pivot(leave, enter);
      ++iterations_;
    }
  }

 private:
  MatrixXd t_;
  std::vector<Index> basis_;
  double tol_;
  int max_iter_;
  int iterations_ = 0;
};

}  // namespace

Result DenseSimplex::solve(const Problem& p) const {
  const Index n = p.variables();
  const Index meq = p.a_eq.rows(), mub = p.a_ub.rows();
  if ((meq > 0 && (p.a_eq.cols() != n || p.b_eq.size() != meq)) ||
      (mub > 0 && (p.a_ub.cols() != n || p.b_ub.size() != mub)) ||
      (!p.free.empty() && static_cast<Index>(p.free.size()) != n))
    throw DimensionError("lp: inconsistent problem dimensions");

  // Column layout: split variables (free ones as pos/neg pairs), slacks, artificials.
  std::vector<Index> pos(n), negc(n, -1);
  Index cols = 0;
  for (Index j = 0; j < n; ++j) {
    pos[j] = cols++;
    if (!p.free.empty() && p.free[j]) negc[j] = cols++;
  }
  const Index slack0 = cols;
  cols += mub;
  const Index m = meq + mub;

  MatrixXd a = MatrixXd::Zero(m, cols);
  VectorXd b(m);
  for (Index i = 0; i < meq; ++i) {
    for (Index j = 0; j < n; ++j) {
      a(i, pos[j]) = p.a_eq(i, j);
      if (negc[j] >= 0) a(i, negc[j]) = -p.a_eq(i, j);
    }
    b(i) = p.b_eq(i);
  }
  for (Index i = 0; i < mub; ++i) {
    const Index r = meq + i;
    for (Index j = 0; j < n; ++j) {
      a(r, pos[j]) = p.a_ub(i, j);
      if (negc[j] >= 0) a(r, negc[j]) = -p.a_ub(i, j);
    }
    a(r, slack0 + i) = 1.0;
    b(r) = p.b_ub(i);
  }

  std::vector<Index> basis(m, -1);
  std::vector<Index> art_rows;
  for (Index i = 0; i < m; ++i) {
    if (b(i) < 0) {
      a.row(i) *= -1.0;
      b(i) = -b(i);
    }
    if (i >= meq && a(i, slack0 + (i - meq)) > 0)
      basis[i] = slack0 + (i - meq);
    else
      art_rows.push_back(i);
  }
  const Index art0 = cols;
  const Index total = cols + static_cast<Index>(art_rows.size());
  MatrixXd t = MatrixXd::Zero(m, total + 1);
  t.leftCols(cols) = a;
  t.col(total) = b;
  for (std::size_t k = 0; k < art_rows.size(); ++k) {
    t(art_rows[k], art0 + static_cast<Index>(k)) = 1.0;
    basis[art_rows[k]] = art0 + static_cast<Index>(k);
  }

  Tableau tab(std::move(t), std::move(basis), tol_, max_iter_);
  Result res;

  if (!art_rows.empty()) {
    VectorXd phase1 = VectorXd::Zero(total);
    phase1.tail(total - art0).setOnes();
    const Status s = tab.optimize(phase1, total);
    res.iterations = tab.iterations();
    if (s == Status::iteration_limit) {
      res.status = s;
      return res;
    }
    double infeas = 0.0;
    for (Index i = 0; i < m; ++i)
      if (tab.basis()[i] >= art0) infeas += tab.table()(i, total);
    if (infeas > 1e-9 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) {
      res.status = Status::infeasible;
      return res;
    }
    // Drive zero-level artificials out; rows with no candidate are redundant.
    for (Index i = 0; i < m; ++i) {
      if (tab.basis()[i] < art0) continue;
      for (Index j = 0; j < art0; ++j)
        if (std::abs(tab.table()(i, j)) > 1e-9) {
          tab.pivot(i, j);
          break;
        }
    }
  }

  // Phase 2 never lets artificials enter (ncols = art0); redundant rows keep
  // their artificial basic at zero.
  VectorXd cost = VectorXd::Zero(total);
  for (Index j = 0; j < n; ++j) {
    cost(pos[j]) = p.c(j);
    if (negc[j] >= 0) cost(negc[j]) = -p.c(j);
  }
  res.status = tab.optimize(cost, art0);
  res.iterations = tab.iterations();
  if (res.status != Status::optimal) return res;

  VectorXd z = VectorXd::Zero(total);
  for (Index i = 0; i < m; ++i) z(tab.basis()[i]) = tab.table()(i, total);
  res.x.resize(n);
  for (Index j = 0; j < n; ++j) res.x(j) = z(pos[j]) - (negc[j] >= 0 ? z(negc[j]) : 0.0);
  res.value = p.c.dot(res.x);
  return res;
}

const Solver& default_solver() {
  static const DenseSimplex solver;
  return solver;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

std::string dump(const Problem& p) {
  std::ostringstream os;
  os.precision(17);
  const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, ", ", "\n", "[", "]");
  os << "c = " << p.c.transpose().format(fmt) << "\n";
  if (p.a_eq.rows()) os << "A_eq =\n" << p.a_eq.format(fmt) << "\nb_eq = " << p.b_eq.transpose().format(fmt) << "\n";
  if (p.a_ub.rows()) os << "A_ub =\n" << p.a_ub.format(fmt) << "\nb_ub = " << p.b_ub.transpose().format(fmt) << "\n";
  return os.str();
}

}  // namespace otcg::lp
