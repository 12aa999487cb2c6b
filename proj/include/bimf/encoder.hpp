#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimf/common.hpp"
#include "bimf/image.hpp"
#include "bimf/rng.hpp"

namespace bimf {

enum class LayerType { conv, relu, maxpool, flatten, dense };

struct LayerSpec {
    LayerType type = LayerType::relu;
    int kernel = 0;   // conv: square kernel side
    int channels = 0; // conv: output channels
    int stride = 1;   // conv
    int window = 0;   // maxpool: square window, stride = window
    int out_dim = 0;  // dense

    static LayerSpec conv(int kernel, int channels, int stride = 1) {
        return {LayerType::conv, kernel, channels, stride, 0, 0};
    }
    static LayerSpec relu() { return {LayerType::relu}; }
    static LayerSpec maxpool(int window) { return {LayerType::maxpool, 0, 0, 1, window, 0}; }
    static LayerSpec flatten() { return {LayerType::flatten}; }
    static LayerSpec dense(int out_dim) { return {LayerType::dense, 0, 0, 1, 0, out_dim}; }
};

/// conv(5,16) relu pool2 conv(5,32) relu pool2 conv(3,64) relu pool2 flatten dense(128):
/// maps a 60x60x3 image to a 128-dim feature vector.
std::vector<LayerSpec> default_encoder_layers();

/// Weights of one parameterized layer. Conv: weights is C_out x (k*k*C_in)
/// with column index (c_in*k + dy)*k + dx; dense: out x in.
struct ParamBlock {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;

    double squared_norm() const { return weights.squaredNorm() + bias.squaredNorm(); }
    void set_zero() {
        weights.setZero();
        bias.setZero();
    }
};

struct TensorShape {
    int c = 0, h = 0, w = 0;
    bool flat = false;
    int flat_len = 0;
    int len() const { return flat ? flat_len : c * h * w; }
};

/// The shared per-image convolutional stack (one instance per side; the user
/// and item networks do not share weights with each other).
class EncoderParams {
public:
    EncoderParams() = default;
    /// Infers and checks shapes through the stack; weights start at zero.
    EncoderParams(std::vector<LayerSpec> specs, int in_h, int in_w, int in_c);

    void init_gaussian(double stddev, Rng& rng); // weights ~ N(0, std^2), biases zero

    const std::vector<LayerSpec>& specs() const { return specs_; }
    std::vector<ParamBlock>& blocks() { return blocks_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    const std::vector<TensorShape>& shapes() const { return shapes_; } // shapes_[l] = input shape of layer l
    int feature_dim() const { return shapes_.back().len(); }
    int input_h() const { return in_h_; }
    int input_w() const { return in_w_; }
    int input_c() const { return in_c_; }
    double squared_norm() const;

private:
    std::vector<LayerSpec> specs_;
    std::vector<ParamBlock> blocks_; // one per conv/dense layer, in spec order
    std::vector<TensorShape> shapes_; // size specs_.size() + 1
    int in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

/// Linear map from the concatenated per-image features to the latent space:
/// weights is latent_dim x (images_per_set * feature_dim).
struct LatentHead {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;

    double squared_norm() const { return weights.squaredNorm() + bias.squaredNorm(); }
};

/// A set of images feeding one latent vector. The item-side network is the
/// images_per_set == 1 case (no concatenation stage).
using ImageSet = std::vector<const ImageTensor*>;

struct ImageEncoder {
    EncoderParams stack;
    LatentHead head;
    int images_per_set = 1;

    int latent_dim() const { return static_cast<int>(head.bias.size()); }
    int feature_dim() const { return stack.feature_dim(); }
    double squared_param_norm() const { return stack.squared_norm() + head.squared_norm(); }

    /// Per-image feature vector (length feature_dim).
    Eigen::VectorXd forward_features(const ImageTensor& img) const;
    /// Shared stack over each image, concatenated in order, then the head.
    Eigen::VectorXd forward(std::span<const ImageTensor* const> images) const;
    Eigen::VectorXd forward(const ImageTensor& img) const;
};

ImageEncoder make_encoder(std::vector<LayerSpec> specs, int image_size, int image_channels,
                          int images_per_set, int latent_dim);

/// Gradients in the same shapes as the model parameters.
struct EncoderGradients {
    std::vector<ParamBlock> stack;
    ParamBlock head;

    void set_zero();
    void add(const EncoderGradients& other);
    /// this += c * (model parameters); realizes the Gaussian-prior term.
    void add_scaled_params(const ImageEncoder& model, double c);
};

EncoderGradients zeros_like(const ImageEncoder& model);

/// (lambda_target/2) sum_i ||target_i - f(x_i)||^2
/// + (lambda_weight/2) (||stack||^2 + ||head||^2), biases included.
double regression_loss(const ImageEncoder& model, std::span<const ImageSet> inputs,
                       const Eigen::MatrixXd& targets, double lambda_target, double lambda_weight);

/// Exact gradient of regression_loss over the given batch.
EncoderGradients encoder_backward(const ImageEncoder& model, std::span<const ImageSet> inputs,
                                  const Eigen::MatrixXd& targets, double lambda_target,
                                  double lambda_weight, int threads = 0);

/// Fit-term gradients only (no weight prior); used by minibatch SGD, which
/// scales the prior by batch/total.
EncoderGradients fit_gradients(const ImageEncoder& model, std::span<const ImageSet> inputs,
                               const Eigen::MatrixXd& targets, double lambda_target, int threads = 0);

struct SgdOptions {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

/// Minibatch SGD with momentum on regression_loss; returns the full-dataset
/// loss after each epoch. Deterministic for a fixed seed and thread-count
/// independent (per-sample gradients are reduced in sample order).
std::vector<double> train_epochs(ImageEncoder& model, std::span<const ImageSet> inputs,
                                 const Eigen::MatrixXd& targets, double lambda_target,
                                 double lambda_weight, const SgdOptions& opt, int epochs,
                                 int threads = 0);

/// Central-difference check of encoder_backward on one sample: max relative
/// error over up to per_block_samples seeded weights per parameter array.
/// Near-zero gradient pairs score 0 (guarded denominator).
double grad_check(const ImageEncoder& model, const ImageSet& input, const Eigen::VectorXd& target,
                  double lambda_target, double lambda_weight, int per_block_samples = 100,
                  double step = 1e-4, std::uint64_t seed = 0);

/// Same comparison against caller-provided analytic gradients; lets tests run
/// deliberately corrupted gradients as a negative control.
double max_relative_gradient_error(const ImageEncoder& model, const EncoderGradients& analytic,
                                   const ImageSet& input, const Eigen::VectorXd& target,
                                   double lambda_target, double lambda_weight,
                                   int per_block_samples = 100, double step = 1e-4,
                                   std::uint64_t seed = 0);

} // namespace bimf
