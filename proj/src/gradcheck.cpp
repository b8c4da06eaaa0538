#include "pn/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace pn {

namespace {
double eval_scalar(const ScalarFn& f, const std::vector<NamedMatrix>& params,
                   const std::string& probe_name) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
  Value out = f(tape, leaves);
  const Matrix& v = out.val();
  if (v.rows() != 1 || v.cols() != 1)
    throw std::invalid_argument("grad_check: function must return a 1x1 value, got " +
                                v.shape_str());
  if (!std::isfinite(v(0, 0)))
    throw std::runtime_error("grad_check: non-finite value while probing parameter " +
                             probe_name);
  return v(0, 0);
}
}  // namespace

double grad_check(const ScalarFn& f, const std::vector<NamedMatrix>& params, double h) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");

  // Analytic pass.
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
  Value loss = f(tape, leaves);
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("grad_check: function must return a 1x1 value, got " +
                                loss.val().shape_str());
  tape.backward(loss);

  double worst = 0.0;
  std::vector<NamedMatrix> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix& analytic = tape.grad(leaves[p]);
    for (int r = 0; r < params[p].value.rows(); ++r) {
      for (int c = 0; c < params[p].value.cols(); ++c) {
        const double orig = params[p].value(r, c);
        probe[p].value(r, c) = orig + h;
        const double fp = eval_scalar(f, probe, params[p].name);
        probe[p].value(r, c) = orig - h;
        const double fm = eval_scalar(f, probe, params[p].name);
        probe[p].value(r, c) = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic(r, c);
        if (!std::isfinite(a))
          throw std::runtime_error("grad_check: non-finite analytic gradient for parameter " +
                                   params[p].name);
        const double rel = std::fabs(a - numeric) / std::max(1.0, std::fabs(numeric));
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

}  // namespace pn
