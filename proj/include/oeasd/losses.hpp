#pragma once

#include <string>

#include <Eigen/Dense>

namespace oeasd {

enum class IdLossKind { bce, cross_entropy };

const char* to_string(IdLossKind k) noexcept;
IdLossKind parse_id_loss_kind(const std::string& name);

struct LossConfig {
  double alpha = 10.0;
  IdLossKind id_loss = IdLossKind::bce;
  bool type_loss_enabled = true;
  double eps = 1e-7;  // lower clamp on log arguments

  void validate() const;
};

/// Head parameters. g_type maps ||f||^2 through an affine map and a sigmoid;
/// g_id maps f through an affine map to C logits.
struct HeadParams {
  double type_weight = 1.0;
  double type_bias = 0.0;
  Eigen::MatrixXd id_weight;  // [C x D]
  Eigen::VectorXd id_bias;    // [C]
};

/// Gradients with respect to the features and heads.
struct LossGradient {
  Eigen::MatrixXd features;  // [D x B]
  double type_weight = 0.0;
  double type_bias = 0.0;
  Eigen::MatrixXd id_weight;
  Eigen::VectorXd id_bias;

  void resize_like(const Eigen::MatrixXd& features, const HeadParams& heads);
};

struct LossValue {
  double type = 0.0;
  double id = 0.0;
  double total = 0.0;
};

/// Binary cross-entropy of sigmoid(z) against a soft target with both log
/// arguments clamped below at eps. Returns the loss; d_logit receives the
/// exact derivative of that clamped expression.
double clamped_bce(double logit, double target, double eps, double* d_logit);

/// Mean over the batch of BCE(sigmoid(w * ||f_i||^2 + b), y_i).
/// Features are columns of `features` [D x B].
double loss_type(const Eigen::MatrixXd& features, const Eigen::VectorXd& Y, const HeadParams& heads,
                 double eps, LossGradient* grad = nullptr);

/// t'_{i,c} = y_i * t_{i,c}; T is [C x B].
Eigen::MatrixXd mask_targets(const Eigen::VectorXd& Y, const Eigen::MatrixXd& T);

/// Element-wise BCE between sigmoid(W f + b) and Tp, summed over all B x C
/// entries and divided by C * sum(Y). Zero when sum(Y) == 0.
double loss_id_bce(const Eigen::MatrixXd& features, const Eigen::VectorXd& Y,
                   const Eigen::MatrixXd& Tp, const HeadParams& heads, double eps,
                   LossGradient* grad = nullptr);

/// Softmax cross-entropy against Tp rows normalized to sum 1, averaged over
/// rows with a positive target mass. Rows without one are skipped.
double loss_id_cross_entropy(const Eigen::MatrixXd& features, const Eigen::MatrixXd& Tp,
                             const HeadParams& heads, LossGradient* grad = nullptr);

/// L = L_type + alpha * L_id, with the type term dropped when disabled.
/// `grad`, when given, is overwritten with the full gradient.
LossValue total_loss(const Eigen::MatrixXd& features, const Eigen::VectorXd& Y,
                     const Eigen::MatrixXd& Tp, const HeadParams& heads, const LossConfig& config,
                     LossGradient* grad = nullptr);

}  // namespace oeasd
