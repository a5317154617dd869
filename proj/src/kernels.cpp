#include "rdcm/kernels.hpp"

#include "rdcm/errors.hpp"

#include <cmath>
#include <string>

namespace rdcm {

void KernelSpec::validate() const {
  if (sigmas.empty()) throw ConfigError("KernelSpec: empty bandwidth list");
  for (double s : sigmas) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("KernelSpec: bandwidths must be positive");
  }
}

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    d2 += diff * diff;
  }
  return d2;
}

void check_dims(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

double mean_gaussian(double d2, const KernelSpec& spec) {
  double sum = 0.0;
  for (double s : spec.sigmas) sum += std::exp(-d2 / (2.0 * s * s));
  return sum / static_cast<double>(spec.sigmas.size());
}

}  // namespace

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
  check_dims(x.size(), y.size(), "gaussian_kernel");
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be positive");
  return std::exp(-squared_distance(x, y) / (2.0 * sigma * sigma));
}

double multi_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec) {
  spec.validate();
  check_dims(x.size(), y.size(), "multi_kernel");
  return mean_gaussian(squared_distance(x, y), spec);
}

Tensor kernel_matrix(const Tensor& a, const Tensor& b, const KernelSpec& spec) {
  spec.validate();
  require_rank(a, 2, "kernel_matrix");
  require_rank(b, 2, "kernel_matrix");
  check_dims(a.cols(), b.cols(), "kernel_matrix");
  Tensor k({a.rows(), b.rows()});
  for (std::size_t p = 0; p < a.rows(); ++p) {
    for (std::size_t q = 0; q < b.rows(); ++q) k(p, q) = mean_gaussian(squared_distance(a.row(p), b.row(q)), spec);
  }
  return k;
}

Var kernel_matrix(Var a, Var b, const KernelSpec& spec) {
  Tensor k = kernel_matrix(a.value(), b.value(), spec);
  return a.tape->record(std::move(k), {a, b}, [a, b, spec](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    const std::size_t n = av.rows();
    const std::size_t m = bv.rows();
    const double inv_count = 1.0 / static_cast<double>(spec.sigmas.size());
    // c(p,q) = g(p,q) * mean_s K_s(p,q) / sigma_s^2
    RowMatrix c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q < m; ++q) {
        const double d2 = squared_distance(av.row(p), bv.row(q));
        double w = 0.0;
        for (double s : spec.sigmas) w += std::exp(-d2 / (2.0 * s * s)) / (s * s);
        c(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = g(p, q) * w * inv_count;
      }
    }
    // dK/da_p = -sum_q c_pq (a_p - b_q);  dK/db_q = sum_p c_pq (a_p - b_q).
    if (tp.requires_grad(a)) {
      auto ga = tp.grad_slot(a).mat();
      const Eigen::VectorXd rs = c.rowwise().sum();
      ga.noalias() += c * bv.mat();
      ga -= rs.asDiagonal() * av.mat();
    }
    if (tp.requires_grad(b)) {
      auto gb = tp.grad_slot(b).mat();
      const Eigen::VectorXd cs = c.colwise().sum().transpose();
      gb.noalias() += c.transpose() * av.mat();
      gb -= cs.asDiagonal() * bv.mat();
    }
  });
}

}  // namespace rdcm
