#include "bimf/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include <png.h>

#include "bimf/rng.hpp"

namespace bimf {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Rgb8Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw InputError("cannot open image: " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw InputError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("failed to decode PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // Normalize any color type / bit depth to 8-bit RGB.
    png_set_expand(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    Rgb8Image img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);

    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const Rgb8Image& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw InputError("cannot write image: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw InputError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("failed to encode PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_const_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_write_rows(png, const_cast<png_bytepp>(const_cast<png_const_bytepp>(rows.data())),
                   static_cast<png_uint_32>(rows.size()));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

ImageTensor to_tensor(const Rgb8Image& img) {
    ImageTensor t(img.height, img.width, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(c, y, x) = img.data[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0;
    return t;
}

Rgb8Image to_rgb8(const ImageTensor& t) {
    if (t.channels != 3) throw InputError("to_rgb8 expects a 3-channel tensor");
    Rgb8Image img;
    img.width = t.width;
    img.height = t.height;
    img.data.resize(static_cast<std::size_t>(t.width) * t.height * 3);
    for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(t.at(c, y, x), 0.0, 1.0);
                img.data[(static_cast<std::size_t>(y) * t.width + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    return img;
}

ImageTensor resize_bilinear(const ImageTensor& in, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InputError("resize target must be positive");
    ImageTensor out(out_h, out_w, in.channels);
    const double sy = out_h > 1 ? static_cast<double>(in.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(in.width - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), in.height - 1);
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), in.width - 1);
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < in.channels; ++c) {
                const double top = (1.0 - wx) * in.at(c, y0, x0) + wx * in.at(c, y0, x1);
                const double bot = (1.0 - wx) * in.at(c, y1, x0) + wx * in.at(c, y1, x1);
                out.at(c, y, x) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

const ImageTensor& ImageStore::get(std::uint32_t item) const {
    if (!has(item)) throw InputError("no image for item index " + std::to_string(item));
    return images_[item];
}

std::vector<bool> scan_item_images(const std::filesystem::path& dir, const RatingsDataset& ds) {
    std::vector<bool> mask(ds.num_items, false);
    for (std::uint32_t j = 0; j < ds.num_items; ++j) {
        const std::string id = ds.item_ids.empty() ? std::to_string(j) : ds.item_ids[j];
        mask[j] = std::filesystem::exists(dir / (id + ".png"));
    }
    return mask;
}

ImageStore load_images(const std::filesystem::path& dir, const RatingsDataset& ds, int out_h, int out_w) {
    if (!std::filesystem::is_directory(dir)) throw InputError("image directory not found: " + dir.string());
    std::vector<ImageTensor> images(ds.num_items);
    for (std::uint32_t j = 0; j < ds.num_items; ++j) {
        const std::string id = ds.item_ids.empty() ? std::to_string(j) : ds.item_ids[j];
        const auto path = dir / (id + ".png");
        if (!std::filesystem::exists(path))
            throw InputError("missing image for item '" + id + "': " + path.string());
        ImageTensor t = to_tensor(read_png(path));
        if (t.height != out_h || t.width != out_w) t = resize_bilinear(t, out_h, out_w);
        images[j] = std::move(t);
    }
    return ImageStore(std::move(images));
}

RatingsDataset filter_dataset(const RatingsDataset& ds, const ImageStore& images, std::uint32_t min_ratings) {
    std::vector<bool> mask(ds.num_items, false);
    for (std::uint32_t j = 0; j < ds.num_items; ++j) mask[j] = images.has(j);
    return filter_dataset(ds, mask, min_ratings);
}

std::vector<UserImageBundle> build_user_bundles(const RatingsDataset& train, const ImageStore& images,
                                                int bundle_size, std::uint64_t seed) {
    if (bundle_size < 1) throw InputError("bundle size must be >= 1");
    const SparseRatings sparse = SparseRatings::build(train);
    Rng rng(seed);

    std::vector<UserImageBundle> bundles;
    for (std::uint32_t i = 0; i < train.num_users; ++i) {
        if (sparse.user_degree(i) == 0) continue; // not a train user
        std::vector<std::uint32_t> candidates;
        for (const auto j : sparse.items_of(i))
            if (images.has(j)) candidates.push_back(j);
        if (candidates.empty()) {
            const std::string id = train.user_ids.empty() ? std::to_string(i) : train.user_ids[i];
            throw InputError("user '" + id + "' has no imaged train item; run the image filter first");
        }
        rng.shuffle(candidates);

        UserImageBundle b;
        b.user = i;
        const std::size_t real_count = std::min<std::size_t>(candidates.size(), bundle_size);
        for (int p = 0; p < bundle_size; ++p) {
            b.items.push_back(candidates[p % real_count]);
            b.real.push_back(static_cast<std::size_t>(p) < real_count);
        }
        bundles.push_back(std::move(b));
    }
    return bundles;
}

} // namespace bimf
