#include "lago/cost.hpp"

#include <cmath>

#include "lago/errors.hpp"

namespace lago {

CostFunction::CostFunction(int components, const std::vector<CostTerm>& terms) {
  if (components < 1) throw ValidationError("cost: need at least one component");
  coef_ = Mat::Zero(components, 3);
  for (const auto& t : terms) {
    if (!std::isfinite(t.coeff)) throw ValidationError("cost: non-finite coefficient");
    if (t.degree < 0 || t.degree > 3) throw ValidationError("cost: degree must be 0..3");
    if (t.degree == 0) {
      offset_ += t.coeff;
      continue;
    }
    if (t.component < 0 || t.component >= components)
      throw ValidationError("cost: component index out of range");
    coef_(t.component, t.degree - 1) += t.coeff;
  }
}

CostFunction CostFunction::from_coefficients(const Mat& coeffs, double offset) {
  if (coeffs.cols() != 3 || coeffs.rows() < 1) throw ValidationError("cost: coefficient matrix must be P x 3");
  CostFunction c;
  c.coef_ = coeffs;
  c.offset_ = offset;
  return c;
}

std::vector<CostTerm> CostFunction::terms() const {
  std::vector<CostTerm> out;
  if (offset_ != 0.0) out.push_back({0, 0, offset_});
  for (int p = 0; p < coef_.rows(); ++p)
    for (int d = 1; d <= 3; ++d)
      if (coef_(p, d - 1) != 0.0) out.push_back({p, d, coef_(p, d - 1)});
  return out;
}

double CostFunction::component_cost(int p, double xp) const {
  return ((coef_(p, 2) * xp + coef_(p, 1)) * xp + coef_(p, 0)) * xp;
}

double CostFunction::evaluate(const VecRef& x) const {
  if (x.size() != coef_.rows()) throw ValidationError("cost: package length mismatch");
  double c = offset_;
  for (int p = 0; p < coef_.rows(); ++p) c += component_cost(p, x(p));
  return c;
}

double CostFunction::marginal_at(int p, double xp) const {
  return (3.0 * coef_(p, 2) * xp + 2.0 * coef_(p, 1)) * xp + coef_(p, 0);
}

double CostFunction::curvature_at(int p, double xp) const { return 6.0 * coef_(p, 2) * xp + 2.0 * coef_(p, 1); }

double CostFunction::marginal(const VecRef& x, int p) const {
  if (p < 0 || p >= coef_.rows()) throw ValidationError("cost: component index out of range");
  return marginal_at(p, x(p));
}

bool CostFunction::is_linear() const { return (coef_.rightCols(2).array() == 0.0).all(); }

}  // namespace lago
