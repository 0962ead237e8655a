#ifndef LAGO_COST_HPP
#define LAGO_COST_HPP

#include <vector>

#include "lago/model.hpp"

namespace lago {

struct CostTerm {
  int component = 0;
  int degree = 0;
  double coeff = 0.0;
};

// Separable polynomial cost: sum over components of a polynomial of degree
// at most 3 in that component, plus a constant. Degree-0 terms all land in
// the constant regardless of their component index.
class CostFunction {
 public:
  CostFunction() = default;
  CostFunction(int components, const std::vector<CostTerm>& terms);

  // coeffs(p, d) multiplies x_p^d, d = 1..3
  static CostFunction from_coefficients(const Mat& coeffs, double offset);

  int components() const { return static_cast<int>(coef_.rows()); }
  double offset() const { return offset_; }
  const Mat& coefficients() const { return coef_; }
  std::vector<CostTerm> terms() const;

  double evaluate(const VecRef& x) const;
  double component_cost(int p, double xp) const;
  double marginal(const VecRef& x, int p) const;
  double marginal_at(int p, double xp) const;
  double curvature_at(int p, double xp) const;

  // All cost terms of degree <= 1.
  bool is_linear() const;
  Vec linear_coefficients() const { return coef_.col(0); }

 private:
  Mat coef_;  // P x 3
  double offset_ = 0.0;
};

}  // namespace lago

#endif
