#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucp/bundle.hpp"
#include "ucp/network.hpp"
#include "ucp/trainer.hpp"

namespace ucp {

struct GradCheckOptions {
  int samples_per_param = 6;  // entries probed per tensor (all when smaller)
  double eps = 1e-6;
  std::uint64_t seed = 0;
  LossVariant loss = LossVariant::SoftmaxCe;
  Mode mode = Mode::Train;
};

struct ParamGradError {
  std::string name;
  int checked = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0;
  std::string worst;  // parameter with the largest relative error
};

class GradCheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// |a - n| / max(|a| + |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares analytic gradients of the batch-mean loss against central
/// differences in double precision, on a sample of entries of every
/// trainable tensor. Throws GradCheckError naming the first layer whose
/// output is non-finite.
GradCheckReport gradcheck(const Graph& g, const ParamStore& params, const Tensor4d& x,
                          const std::vector<int>& labels, const GradCheckOptions& opts = {});

}  // namespace ucp
