#pragma once

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

#include "bimf/image.hpp"
#include "bimf/ratings.hpp"

namespace bimf {

struct SyntheticConfig {
    std::uint32_t num_users = 60;
    std::uint32_t num_items = 80;
    int k_true = 4;
    double observed_fraction = 0.08; // per-pair Bernoulli rate
    double noise_sigma = 0.05;
    RatingScale scale{1.0, 5.0};
    int image_size = 60;
    std::uint32_t min_ratings_per_user = 2;
    int max_row_retries = 50;

    void validate() const;
};

/// Planted factors and the affine map from dot products to the rating scale:
/// rating = clamp(offset + slope * dot + noise).
struct GroundTruth {
    Eigen::MatrixXd user_factors; // k_true x N
    Eigen::MatrixXd item_factors; // k_true x M
    double slope = 0.0;
    double offset = 0.0;
    double noise_sigma = 0.0;
};

struct SyntheticData {
    RatingsDataset ratings;
    ImageStore images;
    GroundTruth truth;
};

/// Renders a factor vector (entries in [-1, 1]) as filled rectangles on a
/// fixed grid: coordinate c colors channel c%3 of cell c/3 with intensity
/// (v_c+1)/2. The encoding is invertible up to 8-bit pixel quantization.
ImageTensor render_item_image(const Eigen::VectorXd& factors, int size);

/// Inverse of render_item_image (mean cell intensity back to [-1, 1]).
Eigen::VectorXd decode_item_image(const ImageTensor& img, int k_true);

/// Plants factors, renders item images through the 8-bit pipeline, and samples
/// observed ratings. Users falling under min_ratings_per_user are resampled up
/// to max_row_retries, then rejected.
SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

/// Low-rank diagnostic instance: ratings are exact dot products of Gaussian
/// factors (plus optional noise), unclamped; scale is set to the observed
/// range. No images.
RatingsDataset plant_low_rank(std::uint32_t num_users, std::uint32_t num_items, int rank,
                              double observed_fraction, double noise_sigma, std::uint64_t seed);

void write_ground_truth_json(const std::filesystem::path& path, const GroundTruth& truth);

} // namespace bimf
