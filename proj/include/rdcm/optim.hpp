#pragma once

#include "rdcm/params.hpp"

namespace rdcm {

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Weight decay is added to the gradient as an L2 term before the moment updates.
void adam_step(ParamSet& params, const AdamOptions& opts);

}  // namespace rdcm
