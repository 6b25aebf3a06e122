#include "hsde/model.hpp"

#include "hsde/linalg.hpp"

namespace hsde {

InitialPrior InitialPrior::standard(int dim) {
  return {Vector::Zero(dim), Vector::Ones(dim), Vector::Zero(dim), Vector::Ones(dim)};
}

double InitialPrior::log_pdf(const Vector& x0, const Vector& y0) const {
  return diag_normal_log_pdf(x0, x_mean, x_std.array().square()) +
         diag_normal_log_pdf(y0, y_mean, y_std.array().square());
}

void ModelParams::validate() const {
  noise.validate();
  const int d = dim();
  if (latent_dim(obs) != d) throw std::invalid_argument("observation model latent dimension mismatch");
  if (marks.dim() != d) throw std::invalid_argument("mark model dimension mismatch");
  priors.validate(d);
  if (initial.x_mean.size() != d || initial.x_std.size() != d || initial.y_mean.size() != d ||
      initial.y_std.size() != d) {
    throw std::invalid_argument("initial prior dimension mismatch");
  }
  if ((initial.x_std.array() < 0).any() || (initial.y_std.array() < 0).any()) {
    throw std::invalid_argument("initial prior std must be >= 0");
  }
}

double spike_loading_log_prior(const PointProcessObsModel& model) {
  const double var = kSpikeLoadingPriorStd * kSpikeLoadingPriorStd;
  const double n = static_cast<double>(model.W().size());
  return -0.5 * (n * (kLog2Pi + std::log(var)) + model.W().squaredNorm() / var);
}

}  // namespace hsde
