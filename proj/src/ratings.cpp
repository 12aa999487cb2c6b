#include "bimf/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "bimf/rng.hpp"

namespace bimf {

double RatingsDataset::density() const {
    if (num_users == 0 || num_items == 0) return 0.0;
    return static_cast<double>(triplets.size()) /
           (static_cast<double>(num_users) * static_cast<double>(num_items));
}

double RatingsDataset::mean_rating() const {
    if (triplets.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : triplets) s += t.value;
    return s / static_cast<double>(triplets.size());
}

void RatingsDataset::validate() const {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(triplets.size());
    for (const auto& t : triplets) {
        if (t.user >= num_users || t.item >= num_items)
            throw InputError("rating index out of range: user " + std::to_string(t.user) +
                             ", item " + std::to_string(t.item));
        if (!scale.contains(t.value))
            throw InputError("rating " + std::to_string(t.value) + " outside scale [" +
                             std::to_string(scale.min) + ", " + std::to_string(scale.max) + "]");
        const std::uint64_t key = (static_cast<std::uint64_t>(t.user) << 32) | t.item;
        if (!seen.insert(key).second)
            throw InputError("duplicate (user, item) pair: (" + std::to_string(t.user) + ", " +
                             std::to_string(t.item) + ")");
    }
}

SparseRatings SparseRatings::build(const RatingsDataset& ds) {
    SparseRatings s;
    const std::size_t nnz = ds.triplets.size();
    s.user_offsets.assign(ds.num_users + 1, 0);
    s.item_offsets.assign(ds.num_items + 1, 0);
    for (const auto& t : ds.triplets) {
        ++s.user_offsets[t.user + 1];
        ++s.item_offsets[t.item + 1];
    }
    std::partial_sum(s.user_offsets.begin(), s.user_offsets.end(), s.user_offsets.begin());
    std::partial_sum(s.item_offsets.begin(), s.item_offsets.end(), s.item_offsets.begin());

    s.user_items.resize(nnz);
    s.user_values.resize(nnz);
    s.item_users.resize(nnz);
    s.item_values.resize(nnz);
    std::vector<std::uint32_t> ucur(s.user_offsets.begin(), s.user_offsets.end() - 1);
    std::vector<std::uint32_t> icur(s.item_offsets.begin(), s.item_offsets.end() - 1);
    for (const auto& t : ds.triplets) {
        const auto up = ucur[t.user]++;
        s.user_items[up] = t.item;
        s.user_values[up] = t.value;
        const auto ip = icur[t.item]++;
        s.item_users[ip] = t.user;
        s.item_values[ip] = t.value;
    }
    return s;
}

void SplitSpec::validate() const {
    if (train_fraction < 0 || validation_fraction < 0 || test_fraction < 0)
        throw InputError("split fractions must be non-negative");
    const double sum = train_fraction + validation_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-12)
        throw InputError("split fractions must sum to 1, got " + std::to_string(sum));
}

namespace {

// Strips surrounding whitespace and an optional UTF-8 BOM.
std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    if (out.size() >= 3 && out.compare(0, 3, "\xEF\xBB\xBF") == 0) out = out.substr(3);
    return out;
}

bool split3(const std::string& line, std::string& a, std::string& b, std::string& c) {
    const auto p1 = line.find(',');
    if (p1 == std::string::npos) return false;
    const auto p2 = line.find(',', p1 + 1);
    if (p2 == std::string::npos) return false;
    if (line.find(',', p2 + 1) != std::string::npos) return false;
    a = trim(line.substr(0, p1));
    b = trim(line.substr(p1 + 1, p2 - p1 - 1));
    c = trim(line.substr(p2 + 1));
    return !a.empty() && !b.empty() && !c.empty();
}

} // namespace

RatingsDataset load_ratings(const std::filesystem::path& path, RatingScale scale) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open ratings file: " + path.string());

    RatingsDataset ds;
    ds.scale = scale;
    std::unordered_map<std::string, std::uint32_t> user_index, item_index;
    std::unordered_set<std::uint64_t> seen;

    std::string line;
    if (!std::getline(in, line)) throw InputError(path.string() + ": empty file, expected a header line");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string us, is, rs;
        if (!split3(line, us, is, rs))
            throw InputError(path.string() + ":" + std::to_string(line_no) +
                             ": malformed row, expected user_id,item_id,rating");
        double r = 0.0;
        try {
            std::size_t pos = 0;
            r = std::stod(rs, &pos);
            if (pos != rs.size()) throw std::invalid_argument(rs);
        } catch (const std::exception&) {
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad rating value '" + rs + "'");
        }
        if (!scale.contains(r))
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": rating " + rs +
                             " outside scale [" + std::to_string(scale.min) + ", " +
                             std::to_string(scale.max) + "]");

        auto [uit, unew] = user_index.emplace(us, static_cast<std::uint32_t>(ds.user_ids.size()));
        if (unew) ds.user_ids.push_back(us);
        auto [iit, inew] = item_index.emplace(is, static_cast<std::uint32_t>(ds.item_ids.size()));
        if (inew) ds.item_ids.push_back(is);

        const std::uint32_t u = uit->second, j = iit->second;
        const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | j;
        if (!seen.insert(key).second)
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": duplicate pair (" + us +
                             ", " + is + ")");
        ds.triplets.push_back({u, j, r});
    }
    if (ds.triplets.empty()) throw InputError(path.string() + ": no ratings (header only)");

    ds.num_users = static_cast<std::uint32_t>(ds.user_ids.size());
    ds.num_items = static_cast<std::uint32_t>(ds.item_ids.size());
    return ds;
}

RatingsDataset filter_dataset(const RatingsDataset& ds, const std::vector<bool>& item_has_image,
                              std::uint32_t min_ratings) {
    if (min_ratings < 1) throw InputError("min_ratings must be >= 1");
    if (item_has_image.size() != ds.num_items)
        throw InputError("item_has_image size does not match num_items");

    std::vector<bool> user_alive(ds.num_users, true);
    std::vector<bool> item_alive(item_has_image);

    // Items first, then users, until neither pass removes anything.
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::uint32_t> user_count(ds.num_users, 0);
        for (const auto& t : ds.triplets)
            if (user_alive[t.user] && item_alive[t.item]) ++user_count[t.user];
        for (std::uint32_t i = 0; i < ds.num_users; ++i) {
            if (user_alive[i] && user_count[i] < min_ratings) {
                user_alive[i] = false;
                changed = true;
            }
        }
        // Dropping users cannot orphan an imaged item (items have no rating
        // threshold), but items may have lost all raters; keep them only if
        // still rated so indices stay meaningful.
    }

    std::vector<std::uint32_t> item_count(ds.num_items, 0);
    for (const auto& t : ds.triplets)
        if (user_alive[t.user] && item_alive[t.item]) ++item_count[t.item];
    for (std::uint32_t j = 0; j < ds.num_items; ++j)
        if (item_count[j] == 0) item_alive[j] = false;

    RatingsDataset out;
    out.scale = ds.scale;
    std::vector<std::uint32_t> user_map(ds.num_users, UINT32_MAX), item_map(ds.num_items, UINT32_MAX);
    for (std::uint32_t i = 0; i < ds.num_users; ++i) {
        if (user_alive[i]) {
            user_map[i] = out.num_users++;
            if (!ds.user_ids.empty()) out.user_ids.push_back(ds.user_ids[i]);
        }
    }
    for (std::uint32_t j = 0; j < ds.num_items; ++j) {
        if (item_alive[j]) {
            item_map[j] = out.num_items++;
            if (!ds.item_ids.empty()) out.item_ids.push_back(ds.item_ids[j]);
        }
    }
    for (const auto& t : ds.triplets)
        if (user_alive[t.user] && item_alive[t.item])
            out.triplets.push_back({user_map[t.user], item_map[t.item], t.value});

    if (out.triplets.empty())
        throw InputError("filtering removed every rating (min_ratings=" + std::to_string(min_ratings) + ")");
    return out;
}

SplitResult split_dataset(const RatingsDataset& ds, const SplitSpec& spec) {
    spec.validate();
    if (ds.empty()) throw InputError("cannot split an empty dataset");

    const std::size_t n = ds.triplets.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(order);

    // Largest-remainder apportionment so the three counts sum to n exactly.
    const double fr[3] = {spec.train_fraction, spec.validation_fraction, spec.test_fraction};
    std::size_t cnt[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double exact = fr[s] * static_cast<double>(n);
        cnt[s] = static_cast<std::size_t>(std::floor(exact));
        rem[s] = exact - std::floor(exact);
        assigned += cnt[s];
    }
    int by_rem[3] = {0, 1, 2};
    std::stable_sort(by_rem, by_rem + 3, [&](int a, int b) { return rem[a] > rem[b]; });
    for (int s = 0; assigned < n; ++s, ++assigned) ++cnt[by_rem[s % 3]];

    SplitResult out;
    RatingsDataset* parts[3] = {&out.train, &out.validation, &out.test};
    const char* names[3] = {"train", "validation", "test"};
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
        RatingsDataset& part = *parts[s];
        part.num_users = ds.num_users;
        part.num_items = ds.num_items;
        part.scale = ds.scale;
        part.user_ids = ds.user_ids;
        part.item_ids = ds.item_ids;
        part.triplets.reserve(cnt[s]);
        for (std::size_t t = 0; t < cnt[s]; ++t) part.triplets.push_back(ds.triplets[order[pos++]]);
        if (cnt[s] == 0 && fr[s] > 0.0)
            out.warnings.push_back(std::string(names[s]) + " split received zero triplets (fraction " +
                                   std::to_string(fr[s]) + " of " + std::to_string(n) + ")");
    }
    return out;
}

namespace {

constexpr char kDatasetMagic[4] = {'B', 'I', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw InputError("truncated dataset file");
    return v;
}

} // namespace

void save_dataset(const std::filesystem::path& path, const RatingsDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write dataset file: " + path.string());
    out.write(kDatasetMagic, 4);
    put(out, kDatasetVersion);
    put(out, ds.num_users);
    put(out, ds.num_items);
    put(out, ds.scale.min);
    put(out, ds.scale.max);
    put(out, static_cast<std::uint64_t>(ds.triplets.size()));
    for (const auto& t : ds.triplets) {
        put(out, t.user);
        put(out, t.item);
        put(out, t.value);
    }
    if (!out) throw InputError("failed writing dataset file: " + path.string());
    out.close();

    nlohmann::json sidecar;
    sidecar["user_ids"] = ds.user_ids;
    sidecar["item_ids"] = ds.item_ids;
    std::ofstream side(path.string() + ".index.json");
    if (!side) throw InputError("cannot write index sidecar for " + path.string());
    side << sidecar.dump(2) << '\n';
}

RatingsDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open dataset file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw InputError(path.string() + ": not a packed dataset (bad magic)");
    const auto version = get<std::uint32_t>(in);
    if (version != kDatasetVersion)
        throw InputError(path.string() + ": unsupported dataset version " + std::to_string(version));

    RatingsDataset ds;
    ds.num_users = get<std::uint32_t>(in);
    ds.num_items = get<std::uint32_t>(in);
    ds.scale.min = get<double>(in);
    ds.scale.max = get<double>(in);
    const auto count = get<std::uint64_t>(in);
    ds.triplets.reserve(count);
    for (std::uint64_t t = 0; t < count; ++t) {
        Rating r;
        r.user = get<std::uint32_t>(in);
        r.item = get<std::uint32_t>(in);
        r.value = get<double>(in);
        ds.triplets.push_back(r);
    }

    const std::filesystem::path side = path.string() + ".index.json";
    if (std::filesystem::exists(side)) {
        std::ifstream sin(side);
        nlohmann::json j;
        sin >> j;
        ds.user_ids = j.at("user_ids").get<std::vector<std::string>>();
        ds.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    }
    ds.validate();
    return ds;
}

} // namespace bimf
