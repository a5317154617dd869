#pragma once

#include "rdcm/autograd.hpp"
#include "rdcm/tensor.hpp"

#include <span>
#include <vector>

namespace rdcm {

/// Gaussian bandwidths for one modality. Kernel values use exp(-|x-y|^2 / (2 sigma^2))
/// and a multi-bandwidth kernel is the unweighted mean over the list.
struct KernelSpec {
  std::vector<double> sigmas{2.0, 4.0, 8.0, 16.0};

  void validate() const;
};

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma);
double multi_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec);

/// Entry (p, q) is multi_kernel(a.row(p), b.row(q)).
Tensor kernel_matrix(const Tensor& a, const Tensor& b, const KernelSpec& spec);

/// Differentiable kernel matrix; gradients flow to both operands (which may be the same node).
Var kernel_matrix(Var a, Var b, const KernelSpec& spec);

}  // namespace rdcm
