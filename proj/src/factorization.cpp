#include "bimf/factorization.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bimf/rng.hpp"

namespace bimf {

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::pmf: return "pmf";
    case ModelKind::isfmf_item: return "isfmf_item";
    case ModelKind::bi_isfmf: return "bi_isfmf";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "pmf") return ModelKind::pmf;
    if (s == "isfmf_item") return ModelKind::isfmf_item;
    if (s == "bi_isfmf") return ModelKind::bi_isfmf;
    throw InputError("unknown model kind '" + s + "' (expected pmf | isfmf_item | bi_isfmf)");
}

void Hyperparams::validate() const {
    if (k < 1) throw InputError("k must be >= 1");
    if (lambda_u <= 0 || lambda_v <= 0 || lambda_w_user <= 0 || lambda_w_item <= 0)
        throw InputError("all lambdas must be > 0");
    if (outer_max_iters < 1) throw InputError("outer_max_iters must be >= 1");
    if (!(rel_tol > 0)) throw InputError("rel_tol must be > 0");
    if (cnn_epochs_per_iter < 1) throw InputError("cnn_epochs_per_iter must be >= 1");
}

std::vector<LayerSpec> EncoderConfig::effective_layers() const {
    return layers.empty() ? default_encoder_layers() : layers;
}

void EncoderConfig::validate() const {
    if (image_size < 1 || image_channels < 1) throw InputError("encoder: bad image dims");
    if (bundle_size < 1) throw InputError("encoder: bundle_size must be >= 1");
    if (learning_rate < 0) throw InputError("encoder: negative learning rate");
    if (momentum < 0 || momentum >= 1) throw InputError("encoder: momentum must be in [0, 1)");
    if (batch_size < 1) throw InputError("encoder: batch_size must be >= 1");
    if (init_std < 0) throw InputError("encoder: negative init_std");
    // Shape-check the stack and pin feature_dim to what it actually produces.
    EncoderParams probe(effective_layers(), image_size, image_size, image_channels);
    if (probe.feature_dim() != feature_dim)
        throw InputError("encoder: layers produce a " + std::to_string(probe.feature_dim()) +
                         "-dim feature vector but feature_dim is " + std::to_string(feature_dim));
}

double pmf_loss(const Eigen::MatrixXd& user_factors, const Eigen::MatrixXd& item_factors,
                const SparseRatings& train, double lambda_u, double lambda_v) {
    double fit = 0.0;
    for (std::uint32_t i = 0; i < train.num_users(); ++i) {
        const auto items = train.items_of(i);
        const auto vals = train.ratings_of_user(i);
        for (std::size_t t = 0; t < items.size(); ++t) {
            const double e = vals[t] - user_factors.col(i).dot(item_factors.col(items[t]));
            fit += e * e;
        }
    }
    return 0.5 * fit + 0.5 * lambda_u * user_factors.squaredNorm() +
           0.5 * lambda_v * item_factors.squaredNorm();
}

double joint_loss(const Eigen::MatrixXd& user_factors, const Eigen::MatrixXd& item_factors,
                  const SparseRatings& train, const Eigen::MatrixXd& user_means,
                  const Eigen::MatrixXd& item_means, const Hyperparams& hp,
                  double user_weight_sqnorm, double item_weight_sqnorm) {
    double fit = 0.0;
    for (std::uint32_t i = 0; i < train.num_users(); ++i) {
        const auto items = train.items_of(i);
        const auto vals = train.ratings_of_user(i);
        for (std::size_t t = 0; t < items.size(); ++t) {
            const double e = vals[t] - user_factors.col(i).dot(item_factors.col(items[t]));
            fit += e * e;
        }
    }
    const double loss = 0.5 * fit + 0.5 * hp.lambda_u * (user_factors - user_means).squaredNorm() +
                        0.5 * hp.lambda_v * (item_factors - item_means).squaredNorm() +
                        0.5 * hp.lambda_w_user * user_weight_sqnorm +
                        0.5 * hp.lambda_w_item * item_weight_sqnorm;
    if (!std::isfinite(loss)) throw NumericError("joint loss is not finite");
    return loss;
}

namespace {

#ifdef _OPENMP
int resolve_threads(int threads) { return threads > 0 ? threads : omp_get_max_threads(); }
#endif

// Runs fn(i) for i in [0, n), optionally in parallel. Exceptions are captured
// and rethrown after the loop (they must not cross an OpenMP region).
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    std::exception_ptr error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
    for (int i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(bimf_parallel_error)
#endif
            {
                if (!error) error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);
}

// Prior-mean matrices (k x N / k x M) from the current encoder weights; zero
// columns where a side has no encoder or a user has no bundle.
struct PriorMeans {
    Eigen::MatrixXd user; // k x N
    Eigen::MatrixXd item; // k x M
};

PriorMeans compute_means(int k, std::uint32_t n_users, std::uint32_t n_items,
                         const std::optional<ImageEncoder>& user_enc,
                         const std::optional<ImageEncoder>& item_enc, const ImageStore* images,
                         const std::vector<UserImageBundle>& bundles, int threads) {
    PriorMeans m;
    m.user.setZero(k, n_users);
    m.item.setZero(k, n_items);
    if (user_enc) {
        parallel_for(static_cast<int>(bundles.size()), threads, [&](int b) {
            ImageSet set;
            for (const auto j : bundles[b].items) set.push_back(&images->get(j));
            m.user.col(bundles[b].user) = user_enc->forward(set);
        });
    }
    if (item_enc) {
        parallel_for(static_cast<int>(n_items), threads, [&](int j) {
            if (images->has(static_cast<std::uint32_t>(j)))
                m.item.col(j) = item_enc->forward(images->get(static_cast<std::uint32_t>(j)));
        });
    }
    return m;
}

void solve_block(Eigen::MatrixXd& factors, const Eigen::MatrixXd& opposite, const SparseRatings& train,
                 bool user_side, const Eigen::MatrixXd& means, double lambda, int threads) {
    const int k = static_cast<int>(factors.rows());
    parallel_for(static_cast<int>(factors.cols()), threads, [&](int c) {
        const auto idx = user_side ? train.items_of(static_cast<std::uint32_t>(c))
                                   : train.users_of(static_cast<std::uint32_t>(c));
        const auto val = user_side ? train.ratings_of_user(static_cast<std::uint32_t>(c))
                                   : train.ratings_of_item(static_cast<std::uint32_t>(c));
        if (idx.empty()) {
            factors.col(c) = means.col(c); // cold column: exactly the prior mean
            return;
        }
        Eigen::MatrixXd a = lambda * Eigen::MatrixXd::Identity(k, k);
        Eigen::VectorXd b = lambda * means.col(c);
        for (std::size_t t = 0; t < idx.size(); ++t) {
            const auto& col = opposite.col(idx[t]);
            a.noalias() += col * col.transpose();
            b.noalias() += val[t] * col;
        }
        const Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success)
            throw NumericError("Cholesky factorization failed (non-finite factors?)");
        factors.col(c) = llt.solve(b);
    });
}

} // namespace

void update_user_factors(Eigen::MatrixXd& user_factors, const Eigen::MatrixXd& item_factors,
                         const SparseRatings& train, const Eigen::MatrixXd& user_means,
                         double lambda_u, int threads) {
    if (lambda_u <= 0) throw InputError("lambda_u must be > 0");
    solve_block(user_factors, item_factors, train, true, user_means, lambda_u, threads);
}

void update_item_factors(Eigen::MatrixXd& item_factors, const Eigen::MatrixXd& user_factors,
                         const SparseRatings& train, const Eigen::MatrixXd& item_means,
                         double lambda_v, int threads) {
    if (lambda_v <= 0) throw InputError("lambda_v must be > 0");
    solve_block(item_factors, user_factors, train, false, item_means, lambda_v, threads);
}

double joint_loss(const Checkpoint& ckpt, const SparseRatings& train, const ImageStore* images,
                  const std::vector<UserImageBundle>& bundles) {
    const PriorMeans m = compute_means(ckpt.k, ckpt.num_users, ckpt.num_items, ckpt.user_encoder,
                                       ckpt.item_encoder, images, bundles, 0);
    return joint_loss(ckpt.user_factors, ckpt.item_factors, train, m.user, m.item, ckpt.hyper,
                      ckpt.user_encoder ? ckpt.user_encoder->squared_param_norm() : 0.0,
                      ckpt.item_encoder ? ckpt.item_encoder->squared_param_norm() : 0.0);
}

std::pair<Checkpoint, TrainReport> train(ModelKind kind, const RatingsDataset& train_data,
                                         const ImageStore* images, const Hyperparams& hp,
                                         const EncoderConfig& enc_cfg, const TrainOptions& opts) {
    hp.validate();
    if (train_data.empty()) throw InputError("training data is empty");
    if ((uses_item_encoder(kind) || uses_user_encoder(kind)) && images == nullptr)
        throw InputError(to_string(kind) + " requires an image store");
    if (uses_item_encoder(kind)) enc_cfg.validate();

    const auto t0 = std::chrono::steady_clock::now();
    const SparseRatings sparse = SparseRatings::build(train_data);
    const std::uint32_t n_users = train_data.num_users, n_items = train_data.num_items;

    Checkpoint ckpt;
    ckpt.kind = kind;
    ckpt.k = hp.k;
    ckpt.num_users = n_users;
    ckpt.num_items = n_items;
    ckpt.hyper = hp;
    ckpt.encoder_cfg = enc_cfg;
    ckpt.scale = train_data.scale;
    ckpt.train_mean_rating = train_data.mean_rating();
    ckpt.user_train_counts.resize(n_users);
    ckpt.item_train_counts.resize(n_items);
    for (std::uint32_t i = 0; i < n_users; ++i)
        ckpt.user_train_counts[i] = static_cast<std::uint32_t>(sparse.user_degree(i));
    for (std::uint32_t j = 0; j < n_items; ++j)
        ckpt.item_train_counts[j] = static_cast<std::uint32_t>(sparse.item_degree(j));

    // Seed substreams are tagged so that every model kind draws identical
    // factor initializations; encoder draws come from separate streams.
    Rng root(hp.seed);
    Rng factor_rng = root.stream(0x0fac);
    ckpt.user_factors.resize(hp.k, n_users);
    ckpt.item_factors.resize(hp.k, n_items);
    for (std::uint32_t i = 0; i < n_users; ++i)
        for (int d = 0; d < hp.k; ++d) ckpt.user_factors(d, i) = 0.1 * factor_rng.gaussian();
    for (std::uint32_t j = 0; j < n_items; ++j)
        for (int d = 0; d < hp.k; ++d) ckpt.item_factors(d, j) = 0.1 * factor_rng.gaussian();

    std::vector<UserImageBundle> bundles;
    std::vector<ImageSet> user_inputs;
    std::vector<ImageSet> item_inputs;
    std::vector<std::uint32_t> item_index; // items with images, aligned with item_inputs
    if (uses_user_encoder(kind)) {
        bundles = build_user_bundles(train_data, *images, enc_cfg.bundle_size, mix_seed(hp.seed, 0x0bd1));
        ImageEncoder enc = make_encoder(enc_cfg.effective_layers(), enc_cfg.image_size,
                                        enc_cfg.image_channels, enc_cfg.bundle_size, hp.k);
        Rng enc_rng = root.stream(0x0e0c);
        enc.stack.init_gaussian(enc_cfg.init_std, enc_rng);
        for (Eigen::Index i = 0; i < enc.head.weights.size(); ++i)
            enc.head.weights.data()[i] = enc_cfg.init_std * enc_rng.gaussian();
        ckpt.user_encoder = std::move(enc);
        for (const auto& b : bundles) {
            ImageSet set;
            for (const auto j : b.items) set.push_back(&images->get(j));
            user_inputs.push_back(std::move(set));
        }
    }
    if (uses_item_encoder(kind)) {
        ImageEncoder enc = make_encoder(enc_cfg.effective_layers(), enc_cfg.image_size,
                                        enc_cfg.image_channels, 1, hp.k);
        Rng enc_rng = root.stream(0x1e0c);
        enc.stack.init_gaussian(enc_cfg.init_std, enc_rng);
        for (Eigen::Index i = 0; i < enc.head.weights.size(); ++i)
            enc.head.weights.data()[i] = enc_cfg.init_std * enc_rng.gaussian();
        ckpt.item_encoder = std::move(enc);
        for (std::uint32_t j = 0; j < n_items; ++j) {
            if (images->has(j)) {
                item_inputs.push_back({&images->get(j)});
                item_index.push_back(j);
            }
        }
    }

    TrainReport report;
    const auto weight_norms = [&] {
        return std::pair<double, double>{
            ckpt.user_encoder ? ckpt.user_encoder->squared_param_norm() : 0.0,
            ckpt.item_encoder ? ckpt.item_encoder->squared_param_norm() : 0.0};
    };

    PriorMeans means = compute_means(hp.k, n_users, n_items, ckpt.user_encoder, ckpt.item_encoder,
                                     images, bundles, opts.threads);
    auto [wu, wi] = weight_norms();
    report.initial_loss = joint_loss(ckpt.user_factors, ckpt.item_factors, sparse, means.user,
                                     means.item, hp, wu, wi);

    Checkpoint last_good = ckpt;
    double prev_loss = report.initial_loss;
    try {
        for (int iter = 0; iter < hp.outer_max_iters; ++iter) {
            IterationStats st;
            st.loss_start = prev_loss;

            update_user_factors(ckpt.user_factors, ckpt.item_factors, sparse, means.user, hp.lambda_u,
                                opts.threads);
            st.loss_after_u = joint_loss(ckpt.user_factors, ckpt.item_factors, sparse, means.user,
                                         means.item, hp, wu, wi);

            update_item_factors(ckpt.item_factors, ckpt.user_factors, sparse, means.item, hp.lambda_v,
                                opts.threads);
            st.loss_after_v = joint_loss(ckpt.user_factors, ckpt.item_factors, sparse, means.user,
                                         means.item, hp, wu, wi);

            st.u_hash = hash_bytes(ckpt.user_factors.data(),
                                   sizeof(double) * static_cast<std::size_t>(ckpt.user_factors.size()));
            st.v_hash = hash_bytes(ckpt.item_factors.data(),
                                   sizeof(double) * static_cast<std::size_t>(ckpt.item_factors.size()));

            if (!opts.freeze_encoders) {
                const SgdOptions sgd_user{enc_cfg.learning_rate, enc_cfg.momentum, enc_cfg.batch_size,
                                          mix_seed(hp.seed, 0x5d00 + static_cast<std::uint64_t>(iter))};
                const SgdOptions sgd_item{enc_cfg.learning_rate, enc_cfg.momentum, enc_cfg.batch_size,
                                          mix_seed(hp.seed, 0x5d10 + static_cast<std::uint64_t>(iter))};
                if (ckpt.user_encoder) {
                    Eigen::MatrixXd targets(hp.k, static_cast<Eigen::Index>(bundles.size()));
                    for (std::size_t b = 0; b < bundles.size(); ++b)
                        targets.col(static_cast<Eigen::Index>(b)) = ckpt.user_factors.col(bundles[b].user);
                    st.user_epoch_losses =
                        train_epochs(*ckpt.user_encoder, user_inputs, targets, hp.lambda_u,
                                     hp.lambda_w_user, sgd_user, hp.cnn_epochs_per_iter, opts.threads);
                }
                if (ckpt.item_encoder) {
                    Eigen::MatrixXd targets(hp.k, static_cast<Eigen::Index>(item_inputs.size()));
                    for (std::size_t t = 0; t < item_inputs.size(); ++t)
                        targets.col(static_cast<Eigen::Index>(t)) = ckpt.item_factors.col(item_index[t]);
                    st.item_epoch_losses =
                        train_epochs(*ckpt.item_encoder, item_inputs, targets, hp.lambda_v,
                                     hp.lambda_w_item, sgd_item, hp.cnn_epochs_per_iter, opts.threads);
                }
                means = compute_means(hp.k, n_users, n_items, ckpt.user_encoder, ckpt.item_encoder,
                                      images, bundles, opts.threads);
                std::tie(wu, wi) = weight_norms();
            }
            st.loss_end = joint_loss(ckpt.user_factors, ckpt.item_factors, sparse, means.user,
                                     means.item, hp, wu, wi);

            report.iterations.push_back(std::move(st));
            last_good = ckpt;

            const double cur = report.iterations.back().loss_end;
            const double rel = (prev_loss - cur) / std::max(std::abs(prev_loss), 1e-300);
            prev_loss = cur;
            if (rel < hp.rel_tol) {
                report.stop_reason = "converged (relative decrease " + std::to_string(rel) +
                                     " < rel_tol after " + std::to_string(iter + 1) + " iterations)";
                break;
            }
        }
    } catch (const NumericError& e) {
        report.diverged = true;
        report.stop_reason = std::string("diverged: ") + e.what();
        ckpt = last_good;
    }
    if (report.stop_reason.empty()) report.stop_reason = "reached outer_max_iters";

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(ckpt), std::move(report)};
}

double predict(const Checkpoint& ckpt, std::uint32_t user, std::uint32_t item, bool clamp) {
    if (user >= ckpt.num_users || item >= ckpt.num_items)
        throw InputError("predict: index out of range (user " + std::to_string(user) + ", item " +
                         std::to_string(item) + ")");
    const double r = ckpt.user_factors.col(user).dot(ckpt.item_factors.col(item));
    return clamp ? ckpt.scale.clamp(r) : r;
}

double predict_cold_item(const Checkpoint& ckpt, std::uint32_t user, const ImageTensor& item_image,
                         bool clamp) {
    if (user >= ckpt.num_users) throw InputError("predict: user index out of range");
    if (!ckpt.item_encoder) throw InputError("model has no item encoder; cold item not predictable");
    const double r = ckpt.user_factors.col(user).dot(ckpt.item_encoder->forward(item_image));
    return clamp ? ckpt.scale.clamp(r) : r;
}

double predict_cold_user(const Checkpoint& ckpt, const std::vector<const ImageTensor*>& bundle,
                         std::uint32_t item, bool clamp) {
    if (item >= ckpt.num_items) throw InputError("predict: item index out of range");
    if (!ckpt.user_encoder) throw InputError("model has no user encoder; cold user not predictable");
    const double r = ckpt.user_encoder->forward(bundle).dot(ckpt.item_factors.col(item));
    return clamp ? ckpt.scale.clamp(r) : r;
}

} // namespace bimf
