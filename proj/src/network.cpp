#include "oeasd/network.hpp"

#include <cmath>

#include "oeasd/error.hpp"

namespace oeasd {

using Eigen::Index;
using Eigen::MatrixXd;

void ExtractorConfig::validate() const {
  if (embedding_dim < 2) fail(ErrorKind::config, "embedding dimension must be at least 2");
  if (conv_stack.empty()) fail(ErrorKind::config, "the extractor needs at least one conv stage");
  for (const ConvStage& s : conv_stack) {
    if (s.channels < 1 || s.kernel < 1 || s.stride < 1) {
      fail(ErrorKind::config, "conv stages need positive channels, kernel and stride");
    }
  }
  if (hidden_dim < 1) fail(ErrorKind::config, "hidden dimension must be positive");
  if (!(output_init_gain > 0.0)) fail(ErrorKind::config, "output_init_gain must be positive");
}

namespace {

constexpr double kPoolVarianceFloor = 1e-6;

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void silu_inplace(const MatrixXd& pre, MatrixXd& post) {
  post.resize(pre.rows(), pre.cols());
  const double* src = pre.data();
  double* dst = post.data();
  for (Index i = 0; i < pre.size(); ++i) dst[i] = src[i] * sigmoid(src[i]);
}

// d_out = d_post * silu'(pre), in place on d_post.
void silu_backward(const MatrixXd& pre, MatrixXd& d) {
  const double* z = pre.data();
  double* g = d.data();
  for (Index i = 0; i < pre.size(); ++i) {
    const double s = sigmoid(z[i]);
    g[i] *= s * (1.0 + z[i] * (1.0 - s));
  }
}

// Activation layout: [C x B*H*W], column index (b*H + h)*W + w.
// Column layout of the patch matrix: rows (c*k + kh)*k + kw, columns (b*Ho + ho)*Wo + wo.
void im2col(const double* a, int C, Index B, int H, int W, int k, int s, int Ho, int Wo, MatrixXd& cols) {
  const Index rows = static_cast<Index>(C) * k * k;
  cols.resize(rows, B * Ho * Wo);
  for (Index b = 0; b < B; ++b) {
    for (int ho = 0; ho < Ho; ++ho) {
      for (int wo = 0; wo < Wo; ++wo) {
        double* dst = cols.data() + ((b * Ho + ho) * Wo + wo) * rows;
        for (int c = 0; c < C; ++c) {
          for (int kh = 0; kh < k; ++kh) {
            const Index base = ((b * H + ho * s + kh) * W + wo * s) * C + c;
            for (int kw = 0; kw < k; ++kw) *dst++ = a[base + static_cast<Index>(kw) * C];
          }
        }
      }
    }
  }
}

void col2im(const MatrixXd& cols, int C, Index B, int H, int W, int k, int s, int Ho, int Wo, double* a) {
  const Index rows = cols.rows();
  for (Index b = 0; b < B; ++b) {
    for (int ho = 0; ho < Ho; ++ho) {
      for (int wo = 0; wo < Wo; ++wo) {
        const double* src = cols.data() + ((b * Ho + ho) * Wo + wo) * rows;
        for (int c = 0; c < C; ++c) {
          for (int kh = 0; kh < k; ++kh) {
            const Index base = ((b * H + ho * s + kh) * W + wo * s) * C + c;
            for (int kw = 0; kw < k; ++kw) a[base + static_cast<Index>(kw) * C] += *src++;
          }
        }
      }
    }
  }
}

void check_finite(const MatrixXd& m, const std::string& layer) {
  if (!m.allFinite()) fail(ErrorKind::numeric, "non-finite activation at layer " + layer);
}

}  // namespace

Extractor::Extractor(const ExtractorConfig& config, InputShape input, int n_classes)
    : config_(config), input_(input), n_classes_(n_classes) {
  config_.validate();
  if (input.frames < 1 || input.mels < 1) fail(ErrorKind::config, "input shape must be positive");
  if (n_classes < 1) fail(ErrorKind::config, "the id head needs at least one class");

  auto add = [&](std::string name, Index rows, Index cols) {
    const std::size_t offset = blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size();
    blocks_.push_back({std::move(name), rows, cols, offset});
  };

  int channels = 1, height = input.frames, width = input.mels;
  for (std::size_t s = 0; s < config_.conv_stack.size(); ++s) {
    const ConvStage& st = config_.conv_stack[s];
    if (height < st.kernel || width < st.kernel) {
      fail(ErrorKind::config, "conv stage " + std::to_string(s) + " kernel exceeds its input (" +
                                  std::to_string(height) + "x" + std::to_string(width) + ")");
    }
    const int oh = (height - st.kernel) / st.stride + 1;
    const int ow = (width - st.kernel) / st.stride + 1;
    geometry_.push_back({channels, height, width, oh, ow});
    add("conv" + std::to_string(s) + ".weight", st.channels,
        static_cast<Index>(channels) * st.kernel * st.kernel);
    add("conv" + std::to_string(s) + ".bias", st.channels, 1);
    channels = st.channels;
    height = oh;
    width = ow;
  }
  const Index pooled = static_cast<Index>(channels) * width * (config_.std_pooling ? 2 : 1);
  add("hidden.weight", config_.hidden_dim, pooled);
  add("hidden.bias", config_.hidden_dim, 1);
  add("embed.weight", config_.embedding_dim, config_.hidden_dim);
  add("embed.bias", config_.embedding_dim, 1);
  add("type_head.weight", 1, 1);
  add("type_head.bias", 1, 1);
  add("id_head.weight", n_classes_, config_.embedding_dim);
  add("id_head.bias", n_classes_, 1);
  params_.assign(blocks_.back().offset + blocks_.back().size(), 0.0);
}

const Extractor::Block& Extractor::block(const std::string& name) const {
  for (const Block& b : blocks_) {
    if (b.name == name) return b;
  }
  fail(ErrorKind::validation, "unknown parameter block: " + name);
}

Eigen::Map<MatrixXd> Extractor::view(const std::string& name) {
  const Block& b = block(name);
  return {params_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const MatrixXd> Extractor::view(const std::string& name) const {
  const Block& b = block(name);
  return {params_.data() + b.offset, b.rows, b.cols};
}

void Extractor::initialize(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const Block& b : blocks_) {
    const bool is_weight = b.name.ends_with(".weight") && !b.name.starts_with("type_head");
    if (!is_weight) continue;
    double bound = 1.0 / std::sqrt(static_cast<double>(b.cols));
    if (b.name == "embed.weight") bound *= config_.output_init_gain;
    for (std::size_t i = 0; i < b.size(); ++i) params_[b.offset + i] = rng.uniform(-bound, bound);
  }
  params_[block("type_head.weight").offset] = 1.0;
  params_[block("type_head.bias").offset] = 0.0;
}

HeadParams Extractor::heads() const {
  HeadParams h;
  h.type_weight = params_[block("type_head.weight").offset];
  h.type_bias = params_[block("type_head.bias").offset];
  h.id_weight = view("id_head.weight");
  h.id_bias = view("id_head.bias");
  return h;
}

Extractor::Activations Extractor::forward(const MatrixXd& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    fail(ErrorKind::shape, "extractor input has " + std::to_string(inputs.rows()) +
                               " rows, expected " + std::to_string(input_dim()));
  }
  Activations acts;
  const Index B = inputs.cols();
  acts.batch = B;
  const std::size_t n_stages = config_.conv_stack.size();
  acts.pre.resize(n_stages);
  acts.post.resize(n_stages);

  MatrixXd cols;
  const double* a = inputs.data();
  for (std::size_t s = 0; s < n_stages; ++s) {
    const ConvStage& st = config_.conv_stack[s];
    const StageGeometry& g = geometry_[s];
    im2col(a, g.in_channels, B, g.height, g.width, st.kernel, st.stride, g.out_height, g.out_width, cols);
    const auto w = view("conv" + std::to_string(s) + ".weight");
    const auto bias = view("conv" + std::to_string(s) + ".bias");
    acts.pre[s].noalias() = w * cols;
    acts.pre[s].colwise() += bias.col(0);
    silu_inplace(acts.pre[s], acts.post[s]);
    check_finite(acts.post[s], "conv" + std::to_string(s));
    a = acts.post[s].data();
  }

  // Pooling over the frame axis only keeps the mel position of each channel.
  const StageGeometry& last = geometry_.back();
  const int C = config_.conv_stack.back().channels;
  const int H = last.out_height, W = last.out_width;
  const Index CW = static_cast<Index>(C) * W;
  acts.pooled.setZero(config_.std_pooling ? 2 * CW : CW, B);
  const MatrixXd& top = acts.post.back();
  for (Index b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        const Index col = (b * H + h) * W + w;
        for (int c = 0; c < C; ++c) acts.pooled(static_cast<Index>(c) * W + w, b) += top(c, col);
      }
    }
  }
  acts.pooled.topRows(CW) /= static_cast<double>(H);
  if (config_.std_pooling) {
    for (Index b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          const Index col = (b * H + h) * W + w;
          for (int c = 0; c < C; ++c) {
            const Index r = static_cast<Index>(c) * W + w;
            const double d = top(c, col) - acts.pooled(r, b);
            acts.pooled(CW + r, b) += d * d;
          }
        }
      }
    }
    acts.pooled.bottomRows(CW) =
        (acts.pooled.bottomRows(CW).array() / static_cast<double>(H) + kPoolVarianceFloor).sqrt().matrix();
  }

  acts.hidden_pre.noalias() = view("hidden.weight") * acts.pooled;
  acts.hidden_pre.colwise() += view("hidden.bias").col(0);
  silu_inplace(acts.hidden_pre, acts.hidden);
  check_finite(acts.hidden, "hidden");
  acts.features.noalias() = view("embed.weight") * acts.hidden;
  acts.features.colwise() += view("embed.bias").col(0);
  check_finite(acts.features, "embed");
  return acts;
}

MatrixXd Extractor::embed(const MatrixXd& inputs) const { return forward(inputs).features; }

void Extractor::backward(const MatrixXd& inputs, const Activations& acts, const MatrixXd& d_features,
                         std::span<double> grad) const {
  if (grad.size() != params_.size()) fail(ErrorKind::shape, "gradient buffer has the wrong size");
  auto gview = [&](const std::string& name) {
    const Block& b = block(name);
    return Eigen::Map<MatrixXd>(grad.data() + b.offset, b.rows, b.cols);
  };
  const Index B = acts.batch;

  gview("embed.weight").noalias() += d_features * acts.hidden.transpose();
  gview("embed.bias").col(0) += d_features.rowwise().sum();
  MatrixXd d_hidden = view("embed.weight").transpose() * d_features;
  silu_backward(acts.hidden_pre, d_hidden);
  gview("hidden.weight").noalias() += d_hidden * acts.pooled.transpose();
  gview("hidden.bias").col(0) += d_hidden.rowwise().sum();
  const MatrixXd d_pooled = view("hidden.weight").transpose() * d_hidden;

  const StageGeometry& last = geometry_.back();
  const int C = config_.conv_stack.back().channels;
  const int H = last.out_height, W = last.out_width;
  const Index CW = static_cast<Index>(C) * W;
  const MatrixXd& top = acts.post.back();
  MatrixXd d_act(C, B * H * W);
  const double inv_h = 1.0 / H;
  for (Index b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        const Index col = (b * H + h) * W + w;
        for (int c = 0; c < C; ++c) {
          const Index r = static_cast<Index>(c) * W + w;
          double g = d_pooled(r, b) * inv_h;
          // d std / d a_h = (a_h - mean) / (H * std); the mean's own
          // dependence cancels because the deviations sum to zero.
          if (config_.std_pooling) {
            g += d_pooled(CW + r, b) * (top(c, col) - acts.pooled(r, b)) * inv_h / acts.pooled(CW + r, b);
          }
          d_act(c, col) = g;
        }
      }
    }
  }

  MatrixXd cols;
  for (std::size_t si = config_.conv_stack.size(); si-- > 0;) {
    const ConvStage& st = config_.conv_stack[si];
    const StageGeometry& g = geometry_[si];
    silu_backward(acts.pre[si], d_act);
    const double* a = si == 0 ? inputs.data() : acts.post[si - 1].data();
    im2col(a, g.in_channels, B, g.height, g.width, st.kernel, st.stride, g.out_height, g.out_width, cols);
    const std::string name = "conv" + std::to_string(si);
    gview(name + ".weight").noalias() += d_act * cols.transpose();
    gview(name + ".bias").col(0) += d_act.rowwise().sum();
    if (si == 0) break;
    const MatrixXd d_cols = view(name + ".weight").transpose() * d_act;
    MatrixXd d_in = MatrixXd::Zero(g.in_channels, B * g.height * g.width);
    col2im(d_cols, g.in_channels, B, g.height, g.width, st.kernel, st.stride, g.out_height, g.out_width,
           d_in.data());
    d_act = std::move(d_in);
  }
}

LossValue Extractor::loss_and_gradient(const MatrixXd& inputs, const Eigen::VectorXd& Y,
                                       const MatrixXd& Tp, const LossConfig& loss,
                                       std::vector<double>* grad) const {
  const Activations acts = forward(inputs);
  const HeadParams h = heads();
  if (grad == nullptr) return total_loss(acts.features, Y, Tp, h, loss, nullptr);

  LossGradient lg;
  const LossValue v = total_loss(acts.features, Y, Tp, h, loss, &lg);
  grad->assign(params_.size(), 0.0);
  (*grad)[block("type_head.weight").offset] = lg.type_weight;
  (*grad)[block("type_head.bias").offset] = lg.type_bias;
  const Block& iw = block("id_head.weight");
  Eigen::Map<MatrixXd>(grad->data() + iw.offset, iw.rows, iw.cols) = lg.id_weight;
  const Block& ib = block("id_head.bias");
  Eigen::Map<Eigen::VectorXd>(grad->data() + ib.offset, ib.rows) = lg.id_bias;
  backward(inputs, acts, lg.features, *grad);
  for (double g : *grad) {
    if (!std::isfinite(g)) fail(ErrorKind::numeric, "non-finite gradient");
  }
  return v;
}

}  // namespace oeasd
