#include "oeasd/losses.hpp"

#include <cmath>
#include <string>

#include "oeasd/error.hpp"

namespace oeasd {

const char* to_string(IdLossKind k) noexcept {
  return k == IdLossKind::bce ? "bce" : "cross_entropy";
}

IdLossKind parse_id_loss_kind(const std::string& name) {
  if (name == "bce") return IdLossKind::bce;
  if (name == "cross_entropy") return IdLossKind::cross_entropy;
  fail(ErrorKind::config, "unknown id loss kind: " + name);
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) fail(ErrorKind::config, "alpha must be non-negative");
  if (!(eps > 0.0 && eps < 0.5)) fail(ErrorKind::config, "eps must lie in (0, 0.5)");
}

void LossGradient::resize_like(const Eigen::MatrixXd& f, const HeadParams& heads) {
  features = Eigen::MatrixXd::Zero(f.rows(), f.cols());
  type_weight = 0.0;
  type_bias = 0.0;
  id_weight = Eigen::MatrixXd::Zero(heads.id_weight.rows(), heads.id_weight.cols());
  id_bias = Eigen::VectorXd::Zero(heads.id_bias.size());
}

namespace {

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void check_heads(const Eigen::MatrixXd& features, const HeadParams& heads) {
  if (heads.id_weight.cols() != features.rows() || heads.id_bias.size() != heads.id_weight.rows()) {
    fail(ErrorKind::shape, "id head does not match the feature dimension");
  }
}

}  // namespace

double clamped_bce(double logit, double target, double eps, double* d_logit) {
  const double p = sigmoid(logit);
  const double q = sigmoid(-logit);  // 1 - p without cancellation
  double loss = 0.0, d = 0.0;
  if (target != 0.0) {
    if (p > eps) {
      loss -= target * std::log(p);
      d -= target * q;
    } else {
      loss -= target * std::log(eps);
    }
  }
  if (target != 1.0) {
    if (q > eps) {
      loss -= (1.0 - target) * std::log(q);
      d += (1.0 - target) * p;
    } else {
      loss -= (1.0 - target) * std::log(eps);
    }
  }
  if (d_logit != nullptr) *d_logit = d;
  return loss;
}

double loss_type(const Eigen::MatrixXd& features, const Eigen::VectorXd& Y, const HeadParams& heads,
                 double eps, LossGradient* grad) {
  const Eigen::Index B = features.cols();
  if (Y.size() != B) fail(ErrorKind::shape, "loss_type: label count differs from batch size");
  if (B == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double norm2 = features.col(i).squaredNorm();
    const double z = heads.type_weight * norm2 + heads.type_bias;
    double dz = 0.0;
    total += clamped_bce(z, Y[i], eps, grad ? &dz : nullptr);
    if (grad != nullptr) {
      dz /= static_cast<double>(B);
      grad->type_weight += dz * norm2;
      grad->type_bias += dz;
      grad->features.col(i) += (2.0 * dz * heads.type_weight) * features.col(i);
    }
  }
  return total / static_cast<double>(B);
}

Eigen::MatrixXd mask_targets(const Eigen::VectorXd& Y, const Eigen::MatrixXd& T) {
  if (T.cols() != Y.size()) fail(ErrorKind::shape, "mask_targets: label count differs from batch size");
  return T * Y.asDiagonal();
}

double loss_id_bce(const Eigen::MatrixXd& features, const Eigen::VectorXd& Y,
                   const Eigen::MatrixXd& Tp, const HeadParams& heads, double eps, LossGradient* grad) {
  check_heads(features, heads);
  const Eigen::Index B = features.cols();
  const Eigen::Index C = heads.id_weight.rows();
  if (Y.size() != B || Tp.cols() != B || Tp.rows() != C) fail(ErrorKind::shape, "loss_id: shape mismatch");
  const double mass = Y.sum();
  if (mass <= 0.0) return 0.0;
  const double scale = 1.0 / (static_cast<double>(C) * mass);

  const Eigen::MatrixXd logits = (heads.id_weight * features).colwise() + heads.id_bias;
  Eigen::MatrixXd d_logits(C, B);
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index c = 0; c < C; ++c) {
      double d = 0.0;
      total += clamped_bce(logits(c, i), Tp(c, i), eps, &d);
      d_logits(c, i) = d * scale;
    }
  }
  if (grad != nullptr) {
    grad->id_weight += d_logits * features.transpose();
    grad->id_bias += d_logits.rowwise().sum();
    grad->features += heads.id_weight.transpose() * d_logits;
  }
  return total * scale;
}

double loss_id_cross_entropy(const Eigen::MatrixXd& features, const Eigen::MatrixXd& Tp,
                             const HeadParams& heads, LossGradient* grad) {
  check_heads(features, heads);
  const Eigen::Index B = features.cols();
  const Eigen::Index C = heads.id_weight.rows();
  if (Tp.cols() != B || Tp.rows() != C) fail(ErrorKind::shape, "loss_id: shape mismatch");

  const Eigen::MatrixXd logits = (heads.id_weight * features).colwise() + heads.id_bias;
  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(C, B);
  int rows = 0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double mass = Tp.col(i).sum();
    if (mass <= 0.0) continue;
    ++rows;
    const double top = logits.col(i).maxCoeff();
    const Eigen::VectorXd shifted = logits.col(i).array() - top;
    const double log_z = std::log(shifted.array().exp().sum());
    const Eigen::VectorXd target = Tp.col(i) / mass;
    total -= target.dot(shifted) - log_z;  // sum_c q_c = 1
    d_logits.col(i) = (shifted.array() - log_z).exp().matrix() - target;
  }
  if (rows == 0) return 0.0;
  d_logits /= static_cast<double>(rows);
  if (grad != nullptr) {
    grad->id_weight += d_logits * features.transpose();
    grad->id_bias += d_logits.rowwise().sum();
    grad->features += heads.id_weight.transpose() * d_logits;
  }
  return total / rows;
}

LossValue total_loss(const Eigen::MatrixXd& features, const Eigen::VectorXd& Y,
                     const Eigen::MatrixXd& Tp, const HeadParams& heads, const LossConfig& config,
                     LossGradient* grad) {
  LossValue v;
  if (grad != nullptr) grad->resize_like(features, heads);
  if (config.type_loss_enabled) v.type = loss_type(features, Y, heads, config.eps, grad);

  if (config.alpha > 0.0) {
    LossGradient id_grad;
    LossGradient* g = nullptr;
    if (grad != nullptr) {
      id_grad.resize_like(features, heads);
      g = &id_grad;
    }
    v.id = config.id_loss == IdLossKind::bce ? loss_id_bce(features, Y, Tp, heads, config.eps, g)
                                             : loss_id_cross_entropy(features, Tp, heads, g);
    if (grad != nullptr) {
      grad->features += config.alpha * id_grad.features;
      grad->id_weight += config.alpha * id_grad.id_weight;
      grad->id_bias += config.alpha * id_grad.id_bias;
    }
  }
  v.total = v.type + config.alpha * v.id;
  return v;
}

}  // namespace oeasd
