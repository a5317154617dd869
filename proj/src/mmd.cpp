#include "rdcm/mmd.hpp"

#include "rdcm/errors.hpp"

#include <algorithm>
#include <cctype>

namespace rdcm {

void DomainFeatures::validate() const {
  require_rank(text, 2, "DomainFeatures.text");
  require_rank(vis, 2, "DomainFeatures.vis");
  if (text.rows() != vis.rows()) {
    throw DimensionError("DomainFeatures '" + id + "': text and visual row counts differ");
  }
  if (text.rows() < 1) throw DimensionError("DomainFeatures '" + id + "': no samples");
}

MmdVariant parse_mmd_variant(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "joint") return MmdVariant::Joint;
  if (s == "fusion") return MmdVariant::Fusion;
  if (s == "vision") return MmdVariant::Vision;
  if (s == "text") return MmdVariant::Text;
  throw ConfigError("unknown MMD variant: " + std::string(name));
}

std::string to_string(MmdVariant v) {
  switch (v) {
    case MmdVariant::Joint: return "joint";
    case MmdVariant::Fusion: return "fusion";
    case MmdVariant::Vision: return "vision";
    case MmdVariant::Text: return "text";
  }
  throw ConfigError("unknown MMD variant");
}

namespace {

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / static_cast<double>(t.size());
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), a.cols() + b.cols()});
  out.mat().leftCols(static_cast<Eigen::Index>(a.cols())) = a.mat();
  out.mat().rightCols(static_cast<Eigen::Index>(b.cols())) = b.mat();
  return out;
}

void check_pair(const DomainFeatures& a, const DomainFeatures& b) {
  a.validate();
  b.validate();
  if (a.text.cols() != b.text.cols() || a.vis.cols() != b.vis.cols()) {
    throw DimensionError("MMD between '" + a.id + "' and '" + b.id + "': feature dimensions differ");
  }
}

double single_kernel_mmd(const Tensor& x, const Tensor& y, const KernelSpec& spec) {
  return mmd_biased(kernel_matrix(x, x, spec), kernel_matrix(y, y, spec), kernel_matrix(x, y, spec));
}

}  // namespace

double mmd_biased(const Tensor& kxx, const Tensor& kyy, const Tensor& kxy) {
  require_rank(kxx, 2, "mmd_biased");
  require_rank(kyy, 2, "mmd_biased");
  require_rank(kxy, 2, "mmd_biased");
  if (kxx.rows() != kxx.cols() || kyy.rows() != kyy.cols() || kxy.rows() != kxx.rows() ||
      kxy.cols() != kyy.rows() || kxx.empty() || kyy.empty()) {
    throw DimensionError("mmd_biased: inconsistent kernel matrix shapes " + kxx.shape_string() + ", " +
                         kyy.shape_string() + ", " + kxy.shape_string());
  }
  return mean_of(kxx) + mean_of(kyy) - 2.0 * mean_of(kxy);
}

double joint_mmd(const DomainFeatures& a, const DomainFeatures& b, const KernelSpecs& specs) {
  check_pair(a, b);
  const Tensor kxx = hadamard(kernel_matrix(a.vis, a.vis, specs.vis), kernel_matrix(a.text, a.text, specs.text));
  const Tensor kyy = hadamard(kernel_matrix(b.vis, b.vis, specs.vis), kernel_matrix(b.text, b.text, specs.text));
  const Tensor kxy = hadamard(kernel_matrix(a.vis, b.vis, specs.vis), kernel_matrix(a.text, b.text, specs.text));
  return mmd_biased(kxx, kyy, kxy);
}

double marginal_mmd(const DomainFeatures& a, const DomainFeatures& b, const KernelSpecs& specs,
                    MmdVariant variant) {
  check_pair(a, b);
  switch (variant) {
    case MmdVariant::Joint: return joint_mmd(a, b, specs);
    case MmdVariant::Text: return single_kernel_mmd(a.text, b.text, specs.text);
    case MmdVariant::Vision: return single_kernel_mmd(a.vis, b.vis, specs.vis);
    case MmdVariant::Fusion: return single_kernel_mmd(concat(a.text, a.vis), concat(b.text, b.vis), specs.text);
  }
  throw ConfigError("unknown MMD variant");
}

double marginal_mmd_sum(const DomainFeatures& a, const DomainFeatures& b, const KernelSpecs& specs) {
  return marginal_mmd(a, b, specs, MmdVariant::Text) + marginal_mmd(a, b, specs, MmdVariant::Vision);
}

double inter_loss_dg(std::span<const DomainFeatures> sources, const KernelSpecs& specs, MmdVariant variant) {
  if (sources.size() < 2) throw ConfigError("inter-domain loss needs at least two source domains");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i + 1 < sources.size(); ++i) {
    for (std::size_t j = i + 1; j < sources.size(); ++j) {
      sum += marginal_mmd(sources[i], sources[j], specs, variant);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

double inter_loss_da(std::span<const DomainFeatures> sources, const DomainFeatures& target,
                     const KernelSpecs& specs, MmdVariant variant) {
  if (target.text.empty() || target.text.rank() != 2 || target.text.rows() == 0) {
    throw ConfigError("adaptation loss needs a non-empty target domain");
  }
  const double dg = inter_loss_dg(sources, specs, variant);
  double sum = 0.0;
  for (const auto& s : sources) sum += marginal_mmd(s, target, specs, variant);
  return dg + sum / static_cast<double>(sources.size());
}

Var mmd_biased(Var kxx, Var kyy, Var kxy) {
  mmd_biased(kxx.value(), kyy.value(), kxy.value());  // shape validation
  return ag::sub(ag::add(ag::mean_all(kxx), ag::mean_all(kyy)), ag::scale(ag::mean_all(kxy), 2.0));
}

Var domain_mmd(const DomainVars& a, const DomainVars& b, const KernelSpecs& specs, MmdVariant variant) {
  switch (variant) {
    case MmdVariant::Joint: {
      Var kxx = ag::hadamard(kernel_matrix(a.vis, a.vis, specs.vis), kernel_matrix(a.text, a.text, specs.text));
      Var kyy = ag::hadamard(kernel_matrix(b.vis, b.vis, specs.vis), kernel_matrix(b.text, b.text, specs.text));
      Var kxy = ag::hadamard(kernel_matrix(a.vis, b.vis, specs.vis), kernel_matrix(a.text, b.text, specs.text));
      return mmd_biased(kxx, kyy, kxy);
    }
    case MmdVariant::Text:
      return mmd_biased(kernel_matrix(a.text, a.text, specs.text), kernel_matrix(b.text, b.text, specs.text),
                        kernel_matrix(a.text, b.text, specs.text));
    case MmdVariant::Vision:
      return mmd_biased(kernel_matrix(a.vis, a.vis, specs.vis), kernel_matrix(b.vis, b.vis, specs.vis),
                        kernel_matrix(a.vis, b.vis, specs.vis));
    case MmdVariant::Fusion: {
      Var fa = ag::concat_cols(a.text, a.vis);
      Var fb = ag::concat_cols(b.text, b.vis);
      return mmd_biased(kernel_matrix(fa, fa, specs.text), kernel_matrix(fb, fb, specs.text),
                        kernel_matrix(fa, fb, specs.text));
    }
  }
  throw ConfigError("unknown MMD variant");
}

Var inter_loss_dg(std::span<const DomainVars> sources, const KernelSpecs& specs, MmdVariant variant) {
  if (sources.size() < 2) throw ConfigError("inter-domain loss needs at least two source domains");
  Var sum;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i + 1 < sources.size(); ++i) {
    for (std::size_t j = i + 1; j < sources.size(); ++j) {
      Var d = domain_mmd(sources[i], sources[j], specs, variant);
      sum = pairs == 0 ? d : ag::add(sum, d);
      ++pairs;
    }
  }
  return ag::scale(sum, 1.0 / static_cast<double>(pairs));
}

Var inter_loss_da(std::span<const DomainVars> sources, const DomainVars& target, const KernelSpecs& specs,
                  MmdVariant variant) {
  if (target.text.value().rows() == 0) throw ConfigError("adaptation loss needs a non-empty target domain");
  Var dg = inter_loss_dg(sources, specs, variant);
  Var sum;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Var d = domain_mmd(sources[i], target, specs, variant);
    sum = i == 0 ? d : ag::add(sum, d);
  }
  return ag::add(dg, ag::scale(sum, 1.0 / static_cast<double>(sources.size())));
}

}  // namespace rdcm
