#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bimf/common.hpp"

namespace bimf {

struct Rating {
    std::uint32_t user = 0;
    std::uint32_t item = 0;
    double value = 0.0;
};

/// Sparse user-item ratings with contiguous 0-based indices.
/// user_ids/item_ids map indices back to the original file ids; empty for
/// datasets built in memory.
struct RatingsDataset {
    std::uint32_t num_users = 0;
    std::uint32_t num_items = 0;
    std::vector<Rating> triplets;
    RatingScale scale;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;

    double density() const;
    double mean_rating() const;
    bool empty() const { return triplets.empty(); }

    /// Checks index bounds, scale bounds and pair uniqueness; throws InputError.
    void validate() const;
};

/// Compressed row (by user) and column (by item) views over one triplet set.
/// Row i's slice yields the observed items and ratings of user i; column j's
/// slice the users and ratings of item j.
struct SparseRatings {
    std::vector<std::uint32_t> user_offsets; // size N+1
    std::vector<std::uint32_t> user_items;
    std::vector<double> user_values;

    std::vector<std::uint32_t> item_offsets; // size M+1
    std::vector<std::uint32_t> item_users;
    std::vector<double> item_values;

    static SparseRatings build(const RatingsDataset& ds);

    std::uint32_t num_users() const { return static_cast<std::uint32_t>(user_offsets.size() - 1); }
    std::uint32_t num_items() const { return static_cast<std::uint32_t>(item_offsets.size() - 1); }
    std::size_t count() const { return user_items.size(); }

    std::size_t user_degree(std::uint32_t i) const { return user_offsets[i + 1] - user_offsets[i]; }
    std::size_t item_degree(std::uint32_t j) const { return item_offsets[j + 1] - item_offsets[j]; }

    std::span<const std::uint32_t> items_of(std::uint32_t i) const {
        return {user_items.data() + user_offsets[i], user_degree(i)};
    }
    std::span<const double> ratings_of_user(std::uint32_t i) const {
        return {user_values.data() + user_offsets[i], user_degree(i)};
    }
    std::span<const std::uint32_t> users_of(std::uint32_t j) const {
        return {item_users.data() + item_offsets[j], item_degree(j)};
    }
    std::span<const double> ratings_of_item(std::uint32_t j) const {
        return {item_values.data() + item_offsets[j], item_degree(j)};
    }
};

struct SplitSpec {
    double train_fraction = 0.8;
    double validation_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const; // non-negative, sum to 1 within 1e-12
};

struct SplitResult {
    RatingsDataset train;
    RatingsDataset validation;
    RatingsDataset test;
    std::vector<std::string> warnings;
};

/// Loads a headered `user_id,item_id,rating` CSV. Indices are assigned in
/// first-appearance order. Errors report the offending line number.
RatingsDataset load_ratings(const std::filesystem::path& path, RatingScale scale);

/// Removes items without an image and users with fewer than min_ratings
/// ratings, iterating to a fixed point (items first, then users), then
/// re-compacts indices. item_has_image is indexed by the input item index.
RatingsDataset filter_dataset(const RatingsDataset& ds, const std::vector<bool>& item_has_image,
                              std::uint32_t min_ratings);

/// Random disjoint partition of the triplets; all three parts share the input
/// index space. Exact sizes via largest-remainder apportionment.
SplitResult split_dataset(const RatingsDataset& ds, const SplitSpec& spec);

// Packed binary dataset (magic "BIDS") plus an id-map sidecar JSON at
// <path>.index.json.
void save_dataset(const std::filesystem::path& path, const RatingsDataset& ds);
RatingsDataset load_dataset(const std::filesystem::path& path);

} // namespace bimf
