#pragma once

#include <Eigen/Dense>

#include <complex>
#include <random>
#include <stdexcept>
#include <string>

namespace hadcal {

using Cplx = std::complex<double>;
using Mat  = Eigen::MatrixXcd;
using Vec  = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr Cplx kI{0.0, 1.0};
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Error carrying the pipeline stage that failed; the CLI maps it to exit 3.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

using Rng = std::mt19937_64;

inline Cplx randn_cplx(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  double re = g(rng);
  double im = g(rng);
  return {re, im};
}

inline double sq(double x) { return x * x; }

}  // namespace hadcal
