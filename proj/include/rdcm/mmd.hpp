#pragma once

#include "rdcm/autograd.hpp"
#include "rdcm/kernels.hpp"
#include "rdcm/tensor.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rdcm {

/// Per-domain text (n x d_t) and visual (n x d_v) features.
struct DomainFeatures {
  std::string id;
  Tensor text;
  Tensor vis;

  void validate() const;
  std::size_t size() const { return text.rows(); }
};

/// Distribution being aligned between two domains.
enum class MmdVariant {
  Joint,   // product kernel k_t * k_v over paired samples
  Fusion,  // single kernel over concatenated [text | vis] rows
  Vision,  // visual marginal only
  Text,    // textual marginal only
};

MmdVariant parse_mmd_variant(std::string_view name);
std::string to_string(MmdVariant v);

struct KernelSpecs {
  KernelSpec text;
  KernelSpec vis;
};

/// Biased (V-statistic) estimate mean(Kxx) + mean(Kyy) - 2 mean(Kxy).
double mmd_biased(const Tensor& kxx, const Tensor& kyy, const Tensor& kxy);

double joint_mmd(const DomainFeatures& a, const DomainFeatures& b, const KernelSpecs& specs);
double marginal_mmd(const DomainFeatures& a, const DomainFeatures& b, const KernelSpecs& specs,
                    MmdVariant variant);
// Sum of the two marginal discrepancies (text + visual).
double marginal_mmd_sum(const DomainFeatures& a, const DomainFeatures& b, const KernelSpecs& specs);

/// Mean discrepancy over all unordered pairs of source domains (M >= 2).
double inter_loss_dg(std::span<const DomainFeatures> sources, const KernelSpecs& specs, MmdVariant variant);
/// inter_loss_dg plus the mean discrepancy between each source and the target.
double inter_loss_da(std::span<const DomainFeatures> sources, const DomainFeatures& target,
                     const KernelSpecs& specs, MmdVariant variant);

// Differentiable forms over encoded features recorded on a tape.
struct DomainVars {
  Var text;
  Var vis;
};

Var mmd_biased(Var kxx, Var kyy, Var kxy);
Var domain_mmd(const DomainVars& a, const DomainVars& b, const KernelSpecs& specs, MmdVariant variant);
Var inter_loss_dg(std::span<const DomainVars> sources, const KernelSpecs& specs, MmdVariant variant);
Var inter_loss_da(std::span<const DomainVars> sources, const DomainVars& target, const KernelSpecs& specs,
                  MmdVariant variant);

}  // namespace rdcm
