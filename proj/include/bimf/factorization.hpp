#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimf/encoder.hpp"
#include "bimf/image.hpp"
#include "bimf/ratings.hpp"

namespace bimf {

/// pmf: zero prior means on both sides. isfmf_item: item-side encoder prior
/// only. bi_isfmf: encoders on both sides.
enum class ModelKind { pmf, isfmf_item, bi_isfmf };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);
inline bool uses_item_encoder(ModelKind k) { return k != ModelKind::pmf; }
inline bool uses_user_encoder(ModelKind k) { return k == ModelKind::bi_isfmf; }

/// Only the noise-to-prior variance ratios enter the objective, so the
/// lambdas are the native parameters; no individual sigmas exist here.
struct Hyperparams {
    int k = 50;
    double lambda_u = 0.1;
    double lambda_v = 0.1;
    double lambda_w_user = 0.01;
    double lambda_w_item = 0.01;
    int outer_max_iters = 30;
    double rel_tol = 1e-4;
    int cnn_epochs_per_iter = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EncoderConfig {
    std::vector<LayerSpec> layers; // empty = default_encoder_layers()
    int image_size = 60;
    int image_channels = 3;
    int feature_dim = 128; // must match what the layers produce
    int bundle_size = 3;   // P, images per user set
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 16;
    double init_std = 0.05;

    std::vector<LayerSpec> effective_layers() const;
    void validate() const;
};

struct TrainOptions {
    bool freeze_encoders = false; // keep encoder weights at their init; diagnostic switch
    int threads = 0;              // 0 = library default
    bool verbose = false;
};

struct IterationStats {
    double loss_start = 0.0;   // after refreshing prior means with current weights
    double loss_after_u = 0.0;
    double loss_after_v = 0.0;
    double loss_end = 0.0;     // after this iteration's encoder training
    std::vector<double> user_epoch_losses;
    std::vector<double> item_epoch_losses;
    std::uint64_t u_hash = 0; // FNV over U bytes after the V update
    std::uint64_t v_hash = 0;
};

struct TrainReport {
    double initial_loss = 0.0;
    std::vector<IterationStats> iterations;
    std::string stop_reason;
    bool diverged = false;
    double wall_seconds = 0.0;
};

/// Everything needed to predict: factors, encoders, and training metadata.
struct Checkpoint {
    ModelKind kind = ModelKind::pmf;
    int k = 0;
    std::uint32_t num_users = 0;
    std::uint32_t num_items = 0;
    Eigen::MatrixXd user_factors; // k x N
    Eigen::MatrixXd item_factors; // k x M
    std::optional<ImageEncoder> user_encoder;
    std::optional<ImageEncoder> item_encoder;
    Hyperparams hyper;
    EncoderConfig encoder_cfg;
    std::vector<std::uint32_t> user_train_counts; // train ratings per user
    std::vector<std::uint32_t> item_train_counts;
    double train_mean_rating = 0.0;
    RatingScale scale;
};

/// sum_ij (I_ij/2)(r_ij - u_i.v_j)^2 + (lu/2)||U||_F^2 + (lv/2)||V||_F^2.
double pmf_loss(const Eigen::MatrixXd& user_factors, const Eigen::MatrixXd& item_factors,
                const SparseRatings& train, double lambda_u, double lambda_v);

/// Full MAP objective with the prior means already evaluated:
/// fit + (lu/2)||U - Mu||^2 + (lv/2)||V - Mv||^2
///     + (lwu/2)*user_weight_sqnorm + (lwi/2)*item_weight_sqnorm.
double joint_loss(const Eigen::MatrixXd& user_factors, const Eigen::MatrixXd& item_factors,
                  const SparseRatings& train, const Eigen::MatrixXd& user_means,
                  const Eigen::MatrixXd& item_means, const Hyperparams& hp,
                  double user_weight_sqnorm, double item_weight_sqnorm);

/// Convenience overload that runs the checkpoint's encoders to get the means.
double joint_loss(const Checkpoint& ckpt, const SparseRatings& train, const ImageStore* images,
                  const std::vector<UserImageBundle>& bundles);

/// Exact per-column minimizer: u_i = (V_i V_i^T + lu I)^-1 (V_i r_i + lu m_i),
/// solved per user by Cholesky. Users with no ratings get m_i verbatim.
void update_user_factors(Eigen::MatrixXd& user_factors, const Eigen::MatrixXd& item_factors,
                         const SparseRatings& train, const Eigen::MatrixXd& user_means,
                         double lambda_u, int threads = 0);

/// Mirror image of update_user_factors with user/item roles swapped.
void update_item_factors(Eigen::MatrixXd& item_factors, const Eigen::MatrixXd& user_factors,
                         const SparseRatings& train, const Eigen::MatrixXd& item_means,
                         double lambda_v, int threads = 0);

/// Alternating optimization: refresh prior means, update U, update V, then
/// train each attached encoder toward the current factors. Stops when the
/// relative joint-loss decrease falls under rel_tol or at outer_max_iters.
std::pair<Checkpoint, TrainReport> train(ModelKind kind, const RatingsDataset& train_data,
                                         const ImageStore* images, const Hyperparams& hp,
                                         const EncoderConfig& enc_cfg, const TrainOptions& opts = {});

/// Warm prediction u_i.v_j from the stored factors.
double predict(const Checkpoint& ckpt, std::uint32_t user, std::uint32_t item, bool clamp = false);

/// Cold entities outside (or unseen in) the training data, scored through the
/// final encoder weights.
double predict_cold_item(const Checkpoint& ckpt, std::uint32_t user, const ImageTensor& item_image,
                         bool clamp = false);
double predict_cold_user(const Checkpoint& ckpt, const std::vector<const ImageTensor*>& bundle,
                         std::uint32_t item, bool clamp = false);

} // namespace bimf
