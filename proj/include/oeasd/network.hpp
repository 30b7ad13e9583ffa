#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oeasd/losses.hpp"
#include "oeasd/rng.hpp"

namespace oeasd {

struct ConvStage {
  int channels = 8;
  int kernel = 3;
  int stride = 1;

  bool operator==(const ConvStage&) const = default;
};

/// Feature extractor f: a stack of SiLU convolutions over the (frame, mel)
/// plane, pooling over the frame axis (mean, optionally also standard
/// deviation), one hidden SiLU affine layer and a final affine layer producing
/// the D-dimensional embedding.
struct ExtractorConfig {
  int embedding_dim = 128;
  std::vector<ConvStage> conv_stack = {{8, 4, 4}, {16, 3, 2}};
  int hidden_dim = 128;
  /// Extra factor on the init range of the embedding layer, keeping ||f||^2
  /// small enough at the start that g_type is not saturated.
  double output_init_gain = 0.1;
  /// Append the per-(channel, mel) standard deviation over frames to the mean.
  bool std_pooling = true;

  void validate() const;
};

struct InputShape {
  int frames = 0;
  int mels = 0;
};

class Extractor {
 public:
  /// One named, column-major parameter block inside the flat vector.
  struct Block {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  };

  /// Intermediate values kept for the backward pass.
  struct Activations {
    std::vector<Eigen::MatrixXd> pre;   // conv pre-activations [C x B*H*W]
    std::vector<Eigen::MatrixXd> post;  // after SiLU
    Eigen::MatrixXd pooled;             // [C*W x B], or [2*C*W x B] with std pooling
    Eigen::MatrixXd hidden_pre;         // [hidden x B]
    Eigen::MatrixXd hidden;
    Eigen::MatrixXd features;           // [D x B]
    Eigen::Index batch = 0;
  };

  Extractor() = default;
  Extractor(const ExtractorConfig& config, InputShape input, int n_classes);

  /// Fan-in scaled uniform weights, zero biases, g_type = (1, 0).
  void initialize(Rng& rng);

  const ExtractorConfig& config() const { return config_; }
  InputShape input_shape() const { return input_; }
  int n_classes() const { return n_classes_; }
  int embedding_dim() const { return config_.embedding_dim; }
  std::size_t input_dim() const { return static_cast<std::size_t>(input_.frames) * input_.mels; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<Block>& layout() const { return blocks_; }
  const Block& block(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> view(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> view(const std::string& name) const;

  HeadParams heads() const;

  /// inputs: [frames*mels x B], each column a row-major (frame, mel) chunk.
  Activations forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd embed(const Eigen::MatrixXd& inputs) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(features).
  void backward(const Eigen::MatrixXd& inputs, const Activations& acts,
                const Eigen::MatrixXd& d_features, std::span<double> grad) const;

  /// Forward pass, loss and the full gradient (network and heads), which
  /// overwrites `grad` when given.
  LossValue loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& Y,
                              const Eigen::MatrixXd& Tp, const LossConfig& loss,
                              std::vector<double>* grad) const;

 private:
  struct StageGeometry {
    int in_channels, height, width, out_height, out_width;
  };

  ExtractorConfig config_;
  InputShape input_;
  int n_classes_ = 0;
  std::vector<StageGeometry> geometry_;
  std::vector<Block> blocks_;
  std::vector<double> params_;
};

}  // namespace oeasd
