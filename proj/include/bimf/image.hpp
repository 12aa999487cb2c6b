#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bimf/common.hpp"
#include "bimf/ratings.hpp"

namespace bimf {

/// Planar image tensor, values in [0, 1]. Layout: pixels[(c*height + y)*width + x].
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0.0) {}

    double at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool empty() const { return pixels.empty(); }
    std::size_t size() const { return pixels.size(); }
};

/// 8-bit interleaved RGB, the on-disk representation.
struct Rgb8Image {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> data; // y-major, 3 bytes per pixel
};

Rgb8Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgb8Image& img);

ImageTensor to_tensor(const Rgb8Image& img);
Rgb8Image to_rgb8(const ImageTensor& t); // round(x*255), clamped

/// Corner-aligned bilinear resampling: output corners map exactly onto input
/// corners. Identity when sizes match.
ImageTensor resize_bilinear(const ImageTensor& in, int out_h, int out_w);

/// Item-indexed image tensors. Slots may be empty (missing image).
class ImageStore {
public:
    ImageStore() = default;
    explicit ImageStore(std::vector<ImageTensor> per_item) : images_(std::move(per_item)) {}

    bool has(std::uint32_t item) const { return item < images_.size() && !images_[item].empty(); }
    const ImageTensor& get(std::uint32_t item) const;
    std::uint32_t num_items() const { return static_cast<std::uint32_t>(images_.size()); }

private:
    std::vector<ImageTensor> images_;
};

/// Which items of ds have a `<dir>/<item_id>.png` on disk.
std::vector<bool> scan_item_images(const std::filesystem::path& dir, const RatingsDataset& ds);

/// Loads one PNG per item id, resized to (out_h, out_w). Every item in ds must
/// have a decodable image.
ImageStore load_images(const std::filesystem::path& dir, const RatingsDataset& ds, int out_h, int out_w);

/// filter_dataset against an index-aligned store (mask = store.has).
RatingsDataset filter_dataset(const RatingsDataset& ds, const ImageStore& images, std::uint32_t min_ratings);

/// Fixed-length set of item-image references for one user's encoder input.
/// Padded slots repeat the user's own sampled items; real[] marks them.
struct UserImageBundle {
    std::uint32_t user = 0;
    std::vector<std::uint32_t> items; // length P
    std::vector<bool> real;           // padding mask, true = distinct sampled item
};

/// One bundle per user that has at least one train rating: up to P distinct
/// imaged train items sampled per user (seeded), padded by repetition.
/// A train-rated user with no imaged item is a hard error.
std::vector<UserImageBundle> build_user_bundles(const RatingsDataset& train, const ImageStore& images,
                                                int bundle_size, std::uint64_t seed);

} // namespace bimf
