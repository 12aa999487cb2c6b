#include "bimf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bimf/rng.hpp"

namespace bimf {

void SyntheticConfig::validate() const {
    if (num_users < 1 || num_items < 1) throw InputError("synthetic: need at least one user and item");
    if (k_true < 1) throw InputError("synthetic: k_true must be >= 1");
    if (k_true > 3 * image_size * image_size)
        throw InputError("synthetic: k_true too large for the image size");
    if (observed_fraction <= 0.0 || observed_fraction > 1.0)
        throw InputError("synthetic: observed_fraction must be in (0, 1]");
    if (noise_sigma < 0.0) throw InputError("synthetic: noise_sigma must be >= 0");
    if (scale.min >= scale.max) throw InputError("synthetic: rating scale min must be < max");
    if (image_size < 1) throw InputError("synthetic: image_size must be >= 1");
    if (num_items < min_ratings_per_user)
        throw InputError("synthetic: fewer items than min_ratings_per_user");
}

namespace {

struct CellLayout {
    int grid = 1;  // cells per side
    int ncells = 1;
};

CellLayout cell_layout(int k_true) {
    CellLayout l;
    l.ncells = (k_true + 2) / 3; // 3 channels per cell
    l.grid = 1;
    while (l.grid * l.grid < l.ncells) ++l.grid;
    return l;
}

} // namespace

ImageTensor render_item_image(const Eigen::VectorXd& factors, int size) {
    const int k = static_cast<int>(factors.size());
    const auto layout = cell_layout(k);
    ImageTensor img(size, size, 3);
    for (int c = 0; c < k; ++c) {
        const int cell = c / 3;
        const int channel = c % 3;
        const int row = cell / layout.grid;
        const int col = cell % layout.grid;
        const int y0 = row * size / layout.grid;
        const int y1 = (row + 1) * size / layout.grid;
        const int x0 = col * size / layout.grid;
        const int x1 = (col + 1) * size / layout.grid;
        const double intensity = std::clamp(0.5 * (factors[c] + 1.0), 0.0, 1.0);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                img.at(channel, y, x) = intensity;
    }
    return img;
}

Eigen::VectorXd decode_item_image(const ImageTensor& img, int k_true) {
    const auto layout = cell_layout(k_true);
    Eigen::VectorXd v(k_true);
    for (int c = 0; c < k_true; ++c) {
        const int cell = c / 3;
        const int channel = c % 3;
        const int row = cell / layout.grid;
        const int col = cell % layout.grid;
        const int y0 = row * img.height / layout.grid;
        const int y1 = (row + 1) * img.height / layout.grid;
        const int x0 = col * img.width / layout.grid;
        const int x1 = (col + 1) * img.width / layout.grid;
        double sum = 0.0;
        int n = 0;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x, ++n)
                sum += img.at(channel, y, x);
        v[c] = 2.0 * (sum / std::max(n, 1)) - 1.0;
    }
    return v;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng root(seed);
    Rng factor_rng = root.stream(1);
    Rng obs_rng = root.stream(2);
    Rng noise_rng = root.stream(3);

    const std::uint32_t n = cfg.num_users, m = cfg.num_items;
    const int k = cfg.k_true;

    GroundTruth truth;
    truth.noise_sigma = cfg.noise_sigma;
    truth.user_factors.resize(k, n);
    truth.item_factors.resize(k, m);
    for (std::uint32_t i = 0; i < n; ++i)
        for (int d = 0; d < k; ++d) truth.user_factors(d, i) = factor_rng.uniform(-1.0, 1.0);
    for (std::uint32_t j = 0; j < m; ++j)
        for (int d = 0; d < k; ++d) truth.item_factors(d, j) = factor_rng.uniform(-1.0, 1.0);

    // Dot products live in [-k, k]; the affine map sends that interval onto
    // the full scale, so noiseless ratings never clamp.
    truth.offset = cfg.scale.mid();
    truth.slope = (cfg.scale.max - cfg.scale.min) / (2.0 * k);

    // Item images go through the 8-bit file format so the dataset matches what
    // a CSV+PNG round trip would produce.
    std::vector<ImageTensor> images(m);
    for (std::uint32_t j = 0; j < m; ++j)
        images[j] = to_tensor(to_rgb8(render_item_image(truth.item_factors.col(j), cfg.image_size)));

    RatingsDataset ds;
    ds.num_users = n;
    ds.num_items = m;
    ds.scale = cfg.scale;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<std::uint32_t> row;
        bool ok = false;
        for (int attempt = 0; attempt <= cfg.max_row_retries && !ok; ++attempt) {
            row.clear();
            for (std::uint32_t j = 0; j < m; ++j)
                if (obs_rng.uniform01() < cfg.observed_fraction) row.push_back(j);
            ok = row.size() >= cfg.min_ratings_per_user;
        }
        if (!ok)
            throw InputError("synthetic: user " + std::to_string(i) + " got fewer than " +
                             std::to_string(cfg.min_ratings_per_user) + " ratings after " +
                             std::to_string(cfg.max_row_retries) + " retries; raise observed_fraction");
        for (const auto j : row) {
            const double dot = truth.user_factors.col(i).dot(truth.item_factors.col(j));
            double r = truth.offset + truth.slope * dot;
            if (cfg.noise_sigma > 0.0) r += cfg.noise_sigma * noise_rng.gaussian();
            ds.triplets.push_back({i, j, cfg.scale.clamp(r)});
        }
    }

    SyntheticData out;
    out.ratings = std::move(ds);
    out.images = ImageStore(std::move(images));
    out.truth = std::move(truth);
    return out;
}

RatingsDataset plant_low_rank(std::uint32_t num_users, std::uint32_t num_items, int rank,
                              double observed_fraction, double noise_sigma, std::uint64_t seed) {
    Rng root(seed);
    Rng factor_rng = root.stream(1);
    Rng obs_rng = root.stream(2);
    Rng noise_rng = root.stream(3);

    const double entry_std = 1.0 / std::sqrt(static_cast<double>(rank));
    Eigen::MatrixXd u(rank, num_users), v(rank, num_items);
    for (std::uint32_t i = 0; i < num_users; ++i)
        for (int d = 0; d < rank; ++d) u(d, i) = entry_std * factor_rng.gaussian();
    for (std::uint32_t j = 0; j < num_items; ++j)
        for (int d = 0; d < rank; ++d) v(d, j) = entry_std * factor_rng.gaussian();

    RatingsDataset ds;
    ds.num_users = num_users;
    ds.num_items = num_items;
    double lo = 0.0, hi = 0.0;
    for (std::uint32_t i = 0; i < num_users; ++i)
        for (std::uint32_t j = 0; j < num_items; ++j) {
            if (obs_rng.uniform01() >= observed_fraction) continue;
            double r = u.col(i).dot(v.col(j));
            if (noise_sigma > 0.0) r += noise_sigma * noise_rng.gaussian();
            lo = std::min(lo, r);
            hi = std::max(hi, r);
            ds.triplets.push_back({i, j, r});
        }
    ds.scale = {lo, hi};
    return ds;
}

void write_ground_truth_json(const std::filesystem::path& path, const GroundTruth& truth) {
    nlohmann::json j;
    auto matrix_to_json = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["user_factors"] = matrix_to_json(truth.user_factors);
    j["item_factors"] = matrix_to_json(truth.item_factors);
    j["slope"] = truth.slope;
    j["offset"] = truth.offset;
    j["noise_sigma"] = truth.noise_sigma;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write ground truth: " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace bimf
