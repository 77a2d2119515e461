#include "ucp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ucp {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
}

namespace {

double eval_loss(Network<double>& net, const Tensor4d& x, const std::vector<int>& labels,
                 const GradCheckOptions& opts, GradTape<double>* tape) {
  GradTape<double> local;
  GradTape<double>& t = tape ? *tape : local;
  const Tensor4d p = net.forward(x, opts.mode, &t);
  const double l = data_loss(p, labels, opts.loss);
  if (!std::isfinite(l)) {
    for (std::size_t i = 0; i < t.activations.size(); ++i)
      if (!t.activations[i].all_finite())
        throw GradCheckError("non-finite output at layer '" + net.graph().nodes[i].id + "'");
    throw GradCheckError("non-finite loss");
  }
  return l;
}

}  // namespace

GradCheckReport gradcheck(const Graph& g, const ParamStore& params, const Tensor4d& x,
                          const std::vector<int>& labels, const GradCheckOptions& opts) {
  Network<double> net(g, params);
  const std::map<std::string, Tensor4d> original = net.params();
  auto restore = [&] { net.params() = original; };

  GradTape<double> tape;
  net.zero_grads(tape);
  const Tensor4d p = net.forward(x, opts.mode, &tape);
  if (!std::isfinite(data_loss(p, labels, opts.loss))) eval_loss(net, x, labels, opts, nullptr);
  net.backward(tape, loss_grad_probs(p, labels, opts.loss));
  const auto analytic = tape.grads;

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  for (const auto& name : net.trainable()) {
    const std::size_t size = original.at(name).size();
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(size, static_cast<std::size_t>(opts.samples_per_param)));

    ParamGradError e;
    e.name = name;
    for (std::size_t i : idx) {
      restore();
      const double w = original.at(name)[i];
      net.params().at(name)[i] = w + opts.eps;
      const double up = eval_loss(net, x, labels, opts, nullptr);
      net.params().at(name)[i] = w - opts.eps;
      const double down = eval_loss(net, x, labels, opts, nullptr);
      const double numeric = (up - down) / (2 * opts.eps);
      const double a = analytic.at(name)[i];
      e.max_rel_error = std::max(e.max_rel_error, relative_error(a, numeric));
      e.max_abs_error = std::max(e.max_abs_error, std::abs(a - numeric));
      ++e.checked;
    }
    if (e.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = e.max_rel_error;
      report.worst = name;
    }
    report.params.push_back(e);
  }
  restore();
  return report;
}

}  // namespace ucp
