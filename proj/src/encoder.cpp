#include "bimf/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bimf {

std::vector<LayerSpec> default_encoder_layers() {
    return {LayerSpec::conv(5, 16), LayerSpec::relu(),    LayerSpec::maxpool(2),
            LayerSpec::conv(5, 32), LayerSpec::relu(),    LayerSpec::maxpool(2),
            LayerSpec::conv(3, 64), LayerSpec::relu(),    LayerSpec::maxpool(2),
            LayerSpec::flatten(),   LayerSpec::dense(128)};
}

EncoderParams::EncoderParams(std::vector<LayerSpec> specs, int in_h, int in_w, int in_c)
    : specs_(std::move(specs)), in_h_(in_h), in_w_(in_w), in_c_(in_c) {
    if (in_h < 1 || in_w < 1 || in_c < 1) throw InputError("encoder: bad input dimensions");
    TensorShape s{in_c, in_h, in_w, false, 0};
    shapes_.push_back(s);
    for (const auto& sp : specs_) {
        switch (sp.type) {
        case LayerType::conv: {
            if (s.flat) throw InputError("encoder: conv after flatten");
            if (sp.kernel < 1 || sp.channels < 1 || sp.stride < 1)
                throw InputError("encoder: bad conv spec");
            if (sp.kernel > s.h || sp.kernel > s.w)
                throw InputError("encoder: conv kernel larger than its input");
            ParamBlock pb;
            pb.weights.setZero(sp.channels, sp.kernel * sp.kernel * s.c);
            pb.bias.setZero(sp.channels);
            blocks_.push_back(std::move(pb));
            s.h = (s.h - sp.kernel) / sp.stride + 1;
            s.w = (s.w - sp.kernel) / sp.stride + 1;
            s.c = sp.channels;
            break;
        }
        case LayerType::relu:
            break;
        case LayerType::maxpool: {
            if (s.flat) throw InputError("encoder: maxpool after flatten");
            if (sp.window < 1) throw InputError("encoder: bad maxpool window");
            s.h /= sp.window;
            s.w /= sp.window;
            if (s.h < 1 || s.w < 1) throw InputError("encoder: maxpool collapses the feature map");
            break;
        }
        case LayerType::flatten:
            if (s.flat) throw InputError("encoder: repeated flatten");
            s.flat_len = s.c * s.h * s.w;
            s.flat = true;
            break;
        case LayerType::dense: {
            if (!s.flat) throw InputError("encoder: dense requires a flatten first");
            if (sp.out_dim < 1) throw InputError("encoder: bad dense width");
            ParamBlock pb;
            pb.weights.setZero(sp.out_dim, s.flat_len);
            pb.bias.setZero(sp.out_dim);
            blocks_.push_back(std::move(pb));
            s.flat_len = sp.out_dim;
            break;
        }
        }
        shapes_.push_back(s);
    }
    if (!shapes_.back().flat)
        throw InputError("encoder: stack must end in a flat feature vector (flatten or dense)");
}

void EncoderParams::init_gaussian(double stddev, Rng& rng) {
    for (auto& b : blocks_) {
        for (Eigen::Index i = 0; i < b.weights.size(); ++i) b.weights.data()[i] = stddev * rng.gaussian();
        b.bias.setZero();
    }
}

double EncoderParams::squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.squared_norm();
    return s;
}

namespace {

// Feature map between spatial layers: channels x (h*w), column index y*w + x.
struct FeatureMap {
    int h = 0, w = 0;
    Eigen::MatrixXd data;
};

FeatureMap tensor_to_map(const ImageTensor& img) {
    FeatureMap m;
    m.h = img.height;
    m.w = img.width;
    m.data.resize(img.channels, img.height * img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) m.data(c, y * img.width + x) = img.at(c, y, x);
    return m;
}

// Patch matrix for valid convolution: rows (c*k + dy)*k + dx, one column per
// output position.
Eigen::MatrixXd im2col(const FeatureMap& in, int kernel, int stride, int out_h, int out_w) {
    const int cin = static_cast<int>(in.data.rows());
    Eigen::MatrixXd patches(cin * kernel * kernel, out_h * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const int col = oy * out_w + ox;
            for (int c = 0; c < cin; ++c)
                for (int dy = 0; dy < kernel; ++dy)
                    for (int dx = 0; dx < kernel; ++dx)
                        patches((c * kernel + dy) * kernel + dx, col) =
                            in.data(c, (oy * stride + dy) * in.w + (ox * stride + dx));
        }
    }
    return patches;
}

void col2im_add(FeatureMap& grad_in, const Eigen::MatrixXd& dpatches, int kernel, int stride,
                int out_h, int out_w) {
    const int cin = static_cast<int>(grad_in.data.rows());
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const int col = oy * out_w + ox;
            for (int c = 0; c < cin; ++c)
                for (int dy = 0; dy < kernel; ++dy)
                    for (int dx = 0; dx < kernel; ++dx)
                        grad_in.data(c, (oy * stride + dy) * grad_in.w + (ox * stride + dx)) +=
                            dpatches((c * kernel + dy) * kernel + dx, col);
        }
    }
}

// Activations of every layer for one image, kept for the backward pass.
struct StackTrace {
    std::vector<FeatureMap> maps;                // maps[l] = input of layer l; maps.back() = output
    std::vector<std::vector<int>> pool_argmax;   // per maxpool layer: source column per (c, out position)
};

Eigen::VectorXd map_as_vector(const FeatureMap& m) {
    // Column-major storage of (C x HW) gives flat index yx*C + c.
    return Eigen::Map<const Eigen::VectorXd>(m.data.data(), m.data.size());
}

Eigen::VectorXd stack_forward(const EncoderParams& p, const ImageTensor& img, StackTrace* trace) {
    if (img.height != p.input_h() || img.width != p.input_w() || img.channels != p.input_c())
        throw InputError("encoder: image dims " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + "x" + std::to_string(img.channels) +
                         " do not match input spec " + std::to_string(p.input_h()) + "x" +
                         std::to_string(p.input_w()) + "x" + std::to_string(p.input_c()));

    FeatureMap cur = tensor_to_map(img);
    if (trace) trace->maps.push_back(cur);
    std::size_t block = 0;
    for (std::size_t l = 0; l < p.specs().size(); ++l) {
        const auto& sp = p.specs()[l];
        const auto& out_shape = p.shapes()[l + 1];
        switch (sp.type) {
        case LayerType::conv: {
            const auto& pb = p.blocks()[block++];
            FeatureMap out;
            out.h = out_shape.h;
            out.w = out_shape.w;
            const Eigen::MatrixXd patches = im2col(cur, sp.kernel, sp.stride, out.h, out.w);
            out.data.noalias() = pb.weights * patches;
            out.data.colwise() += pb.bias;
            cur = std::move(out);
            break;
        }
        case LayerType::relu:
            cur.data = cur.data.cwiseMax(0.0);
            break;
        case LayerType::maxpool: {
            FeatureMap out;
            out.h = out_shape.h;
            out.w = out_shape.w;
            out.data.resize(cur.data.rows(), out.h * out.w);
            std::vector<int> argmax(cur.data.rows() * out.h * out.w);
            for (int c = 0; c < cur.data.rows(); ++c) {
                for (int oy = 0; oy < out.h; ++oy) {
                    for (int ox = 0; ox < out.w; ++ox) {
                        double best = -std::numeric_limits<double>::infinity();
                        int best_col = -1;
                        // row-major scan; strict > keeps the first maximum
                        for (int dy = 0; dy < sp.window; ++dy) {
                            for (int dx = 0; dx < sp.window; ++dx) {
                                const int col = (oy * sp.window + dy) * cur.w + (ox * sp.window + dx);
                                if (cur.data(c, col) > best) {
                                    best = cur.data(c, col);
                                    best_col = col;
                                }
                            }
                        }
                        out.data(c, oy * out.w + ox) = best;
                        argmax[c * out.h * out.w + oy * out.w + ox] = best_col;
                    }
                }
            }
            if (trace) trace->pool_argmax.push_back(std::move(argmax));
            cur = std::move(out);
            break;
        }
        case LayerType::flatten: {
            FeatureMap out;
            out.h = 1;
            out.w = 1;
            out.data = Eigen::Map<const Eigen::MatrixXd>(cur.data.data(), cur.data.size(), 1);
            cur = std::move(out);
            break;
        }
        case LayerType::dense: {
            const auto& pb = p.blocks()[block++];
            FeatureMap out;
            out.h = 1;
            out.w = 1;
            out.data.noalias() = pb.weights * cur.data;
            out.data.col(0) += pb.bias;
            cur = std::move(out);
            break;
        }
        }
        if (trace) trace->maps.push_back(cur);
    }
    return map_as_vector(cur);
}

// Backpropagates d(loss)/d(feature) through the stack, accumulating into grads.
void stack_backward(const EncoderParams& p, const StackTrace& trace, const Eigen::VectorXd& dfeature,
                    std::vector<ParamBlock>& grads) {
    FeatureMap dcur;
    dcur.h = trace.maps.back().h;
    dcur.w = trace.maps.back().w;
    dcur.data = Eigen::Map<const Eigen::MatrixXd>(dfeature.data(), trace.maps.back().data.rows(),
                                                  trace.maps.back().data.cols());

    int block = static_cast<int>(p.blocks().size());
    int pool = static_cast<int>(trace.pool_argmax.size());
    for (int l = static_cast<int>(p.specs().size()) - 1; l >= 0; --l) {
        const auto& sp = p.specs()[l];
        const FeatureMap& in = trace.maps[l];
        switch (sp.type) {
        case LayerType::conv: {
            --block;
            const auto& pb = p.blocks()[block];
            auto& g = grads[block];
            const int out_h = trace.maps[l + 1].h, out_w = trace.maps[l + 1].w;
            const Eigen::MatrixXd patches = im2col(in, sp.kernel, sp.stride, out_h, out_w);
            g.weights.noalias() += dcur.data * patches.transpose();
            g.bias.noalias() += dcur.data.rowwise().sum();
            const Eigen::MatrixXd dpatches = pb.weights.transpose() * dcur.data;
            FeatureMap din;
            din.h = in.h;
            din.w = in.w;
            din.data.setZero(in.data.rows(), in.data.cols());
            col2im_add(din, dpatches, sp.kernel, sp.stride, out_h, out_w);
            dcur = std::move(din);
            break;
        }
        case LayerType::relu:
            dcur.data = (in.data.array() > 0.0).select(dcur.data, 0.0);
            dcur.h = in.h;
            dcur.w = in.w;
            break;
        case LayerType::maxpool: {
            --pool;
            const auto& argmax = trace.pool_argmax[pool];
            FeatureMap din;
            din.h = in.h;
            din.w = in.w;
            din.data.setZero(in.data.rows(), in.data.cols());
            const int out_hw = trace.maps[l + 1].h * trace.maps[l + 1].w;
            for (int c = 0; c < in.data.rows(); ++c)
                for (int o = 0; o < out_hw; ++o)
                    din.data(c, argmax[c * out_hw + o]) += dcur.data(c, o);
            dcur = std::move(din);
            break;
        }
        case LayerType::flatten: {
            FeatureMap din;
            din.h = in.h;
            din.w = in.w;
            din.data = Eigen::Map<const Eigen::MatrixXd>(dcur.data.data(), in.data.rows(), in.data.cols());
            dcur = std::move(din);
            break;
        }
        case LayerType::dense: {
            --block;
            const auto& pb = p.blocks()[block];
            auto& g = grads[block];
            g.weights.noalias() += dcur.data.col(0) * in.data.col(0).transpose();
            g.bias.noalias() += dcur.data.col(0);
            FeatureMap din;
            din.h = 1;
            din.w = 1;
            din.data.noalias() = pb.weights.transpose() * dcur.data;
            dcur = std::move(din);
            break;
        }
        }
    }
}

void check_set(const ImageEncoder& model, const ImageSet& set) {
    if (static_cast<int>(set.size()) != model.images_per_set)
        throw InputError("encoder: image set has " + std::to_string(set.size()) + " images, expected " +
                         std::to_string(model.images_per_set));
}

// Gradient of (lambda_target/2)||t - f(x)||^2 for one set, accumulated into grads.
void sample_fit_gradient(const ImageEncoder& model, const ImageSet& set, const Eigen::VectorXd& target,
                         double lambda_target, EncoderGradients& grads) {
    const int fdim = model.feature_dim();
    std::vector<StackTrace> traces(set.size());
    Eigen::VectorXd concat(model.images_per_set * fdim);
    for (std::size_t i = 0; i < set.size(); ++i)
        concat.segment(static_cast<Eigen::Index>(i) * fdim, fdim) =
            stack_forward(model.stack, *set[i], &traces[i]);

    Eigen::VectorXd out = model.head.weights * concat + model.head.bias;
    const Eigen::VectorXd dout = lambda_target * (out - target);
    grads.head.weights.noalias() += dout * concat.transpose();
    grads.head.bias.noalias() += dout;
    const Eigen::VectorXd dconcat = model.head.weights.transpose() * dout;
    for (std::size_t i = 0; i < set.size(); ++i)
        stack_backward(model.stack, traces[i],
                       dconcat.segment(static_cast<Eigen::Index>(i) * fdim, fdim), grads.stack);
}

} // namespace

Eigen::VectorXd ImageEncoder::forward_features(const ImageTensor& img) const {
    return stack_forward(stack, img, nullptr);
}

Eigen::VectorXd ImageEncoder::forward(std::span<const ImageTensor* const> images) const {
    if (static_cast<int>(images.size()) != images_per_set)
        throw InputError("encoder: image set has " + std::to_string(images.size()) + " images, expected " +
                         std::to_string(images_per_set));
    const int fdim = feature_dim();
    Eigen::VectorXd concat(images_per_set * fdim);
    for (std::size_t i = 0; i < images.size(); ++i)
        concat.segment(static_cast<Eigen::Index>(i) * fdim, fdim) = forward_features(*images[i]);
    return head.weights * concat + head.bias;
}

Eigen::VectorXd ImageEncoder::forward(const ImageTensor& img) const {
    const ImageTensor* p = &img;
    return forward(std::span<const ImageTensor* const>(&p, 1));
}

ImageEncoder make_encoder(std::vector<LayerSpec> specs, int image_size, int image_channels,
                          int images_per_set, int latent_dim) {
    if (images_per_set < 1) throw InputError("encoder: images_per_set must be >= 1");
    if (latent_dim < 1) throw InputError("encoder: latent_dim must be >= 1");
    ImageEncoder m;
    m.stack = EncoderParams(std::move(specs), image_size, image_size, image_channels);
    m.images_per_set = images_per_set;
    m.head.weights.setZero(latent_dim, images_per_set * m.stack.feature_dim());
    m.head.bias.setZero(latent_dim);
    return m;
}

void EncoderGradients::set_zero() {
    for (auto& b : stack) b.set_zero();
    head.set_zero();
}

void EncoderGradients::add(const EncoderGradients& other) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
        stack[i].weights += other.stack[i].weights;
        stack[i].bias += other.stack[i].bias;
    }
    head.weights += other.head.weights;
    head.bias += other.head.bias;
}

void EncoderGradients::add_scaled_params(const ImageEncoder& model, double c) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
        stack[i].weights += c * model.stack.blocks()[i].weights;
        stack[i].bias += c * model.stack.blocks()[i].bias;
    }
    head.weights += c * model.head.weights;
    head.bias += c * model.head.bias;
}

EncoderGradients zeros_like(const ImageEncoder& model) {
    EncoderGradients g;
    for (const auto& b : model.stack.blocks()) {
        ParamBlock z;
        z.weights.setZero(b.weights.rows(), b.weights.cols());
        z.bias.setZero(b.bias.size());
        g.stack.push_back(std::move(z));
    }
    g.head.weights.setZero(model.head.weights.rows(), model.head.weights.cols());
    g.head.bias.setZero(model.head.bias.size());
    return g;
}

double regression_loss(const ImageEncoder& model, std::span<const ImageSet> inputs,
                       const Eigen::MatrixXd& targets, double lambda_target, double lambda_weight) {
    if (static_cast<Eigen::Index>(inputs.size()) != targets.cols())
        throw InputError("encoder: inputs and targets disagree in length");
    double fit = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        check_set(model, inputs[s]);
        fit += (targets.col(static_cast<Eigen::Index>(s)) - model.forward(inputs[s])).squaredNorm();
    }
    return 0.5 * lambda_target * fit + 0.5 * lambda_weight * model.squared_param_norm();
}

EncoderGradients fit_gradients(const ImageEncoder& model, std::span<const ImageSet> inputs,
                               const Eigen::MatrixXd& targets, double lambda_target, int threads) {
    if (static_cast<Eigen::Index>(inputs.size()) != targets.cols())
        throw InputError("encoder: inputs and targets disagree in length");
    for (const auto& set : inputs) check_set(model, set);

    const int n = static_cast<int>(inputs.size());
    std::vector<EncoderGradients> per_sample(n);

    std::exception_ptr error;
#ifdef _OPENMP
    const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
#endif
    for (int s = 0; s < n; ++s) {
        try {
            per_sample[s] = zeros_like(model);
            sample_fit_gradient(model, inputs[s], targets.col(s), lambda_target, per_sample[s]);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(bimf_encoder_error)
#endif
            {
                if (!error) error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);

    // Fixed sample-order reduction keeps results independent of thread count.
    EncoderGradients total = zeros_like(model);
    for (int s = 0; s < n; ++s) total.add(per_sample[s]);
    return total;
}

EncoderGradients encoder_backward(const ImageEncoder& model, std::span<const ImageSet> inputs,
                                  const Eigen::MatrixXd& targets, double lambda_target,
                                  double lambda_weight, int threads) {
    EncoderGradients g = fit_gradients(model, inputs, targets, lambda_target, threads);
    g.add_scaled_params(model, lambda_weight);
    return g;
}

std::vector<double> train_epochs(ImageEncoder& model, std::span<const ImageSet> inputs,
                                 const Eigen::MatrixXd& targets, double lambda_target,
                                 double lambda_weight, const SgdOptions& opt, int epochs, int threads) {
    if (epochs < 1) throw InputError("encoder: epochs must be >= 1");
    if (opt.learning_rate < 0.0) throw InputError("encoder: negative learning rate");
    if (opt.batch_size < 1) throw InputError("encoder: batch_size must be >= 1");

    const std::size_t n = inputs.size();
    EncoderGradients velocity = zeros_like(model);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(opt.seed);

    std::vector<double> trace;
    std::vector<ImageSet> batch;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += opt.batch_size) {
            const std::size_t stop = std::min(n, start + opt.batch_size);
            batch.clear();
            Eigen::MatrixXd bt(targets.rows(), stop - start);
            for (std::size_t s = start; s < stop; ++s) {
                batch.push_back(inputs[order[s]]);
                bt.col(static_cast<Eigen::Index>(s - start)) = targets.col(static_cast<Eigen::Index>(order[s]));
            }
            EncoderGradients g = fit_gradients(model, batch, bt, lambda_target, threads);
            // Spread the weight prior across the epoch's batches.
            g.add_scaled_params(model, lambda_weight * static_cast<double>(stop - start) / static_cast<double>(n));

            for (std::size_t b = 0; b < velocity.stack.size(); ++b) {
                velocity.stack[b].weights = opt.momentum * velocity.stack[b].weights - opt.learning_rate * g.stack[b].weights;
                velocity.stack[b].bias = opt.momentum * velocity.stack[b].bias - opt.learning_rate * g.stack[b].bias;
                model.stack.blocks()[b].weights += velocity.stack[b].weights;
                model.stack.blocks()[b].bias += velocity.stack[b].bias;
            }
            velocity.head.weights = opt.momentum * velocity.head.weights - opt.learning_rate * g.head.weights;
            velocity.head.bias = opt.momentum * velocity.head.bias - opt.learning_rate * g.head.bias;
            model.head.weights += velocity.head.weights;
            model.head.bias += velocity.head.bias;
        }
        const double loss = regression_loss(model, inputs, targets, lambda_target, lambda_weight);
        if (!std::isfinite(loss))
            throw NumericError("encoder training diverged (non-finite loss at epoch " +
                               std::to_string(e + 1) + "); lower the learning rate");
        trace.push_back(loss);
    }
    return trace;
}

namespace {

// Mutable views over every parameter array, in serialization order:
// stack blocks (weights, bias) then head (weights, bias).
std::vector<std::span<double>> param_views(ImageEncoder& model) {
    std::vector<std::span<double>> v;
    for (auto& b : model.stack.blocks()) {
        v.emplace_back(b.weights.data(), static_cast<std::size_t>(b.weights.size()));
        v.emplace_back(b.bias.data(), static_cast<std::size_t>(b.bias.size()));
    }
    v.emplace_back(model.head.weights.data(), static_cast<std::size_t>(model.head.weights.size()));
    v.emplace_back(model.head.bias.data(), static_cast<std::size_t>(model.head.bias.size()));
    return v;
}

std::vector<std::span<const double>> gradient_views(const EncoderGradients& g) {
    std::vector<std::span<const double>> v;
    for (const auto& b : g.stack) {
        v.emplace_back(b.weights.data(), static_cast<std::size_t>(b.weights.size()));
        v.emplace_back(b.bias.data(), static_cast<std::size_t>(b.bias.size()));
    }
    v.emplace_back(g.head.weights.data(), static_cast<std::size_t>(g.head.weights.size()));
    v.emplace_back(g.head.bias.data(), static_cast<std::size_t>(g.head.bias.size()));
    return v;
}

} // namespace

double max_relative_gradient_error(const ImageEncoder& model, const EncoderGradients& analytic,
                                   const ImageSet& input, const Eigen::VectorXd& target,
                                   double lambda_target, double lambda_weight, int per_block_samples,
                                   double step, std::uint64_t seed) {
    ImageEncoder probe = model; // perturbed copy
    auto params = param_views(probe);
    auto grads = gradient_views(analytic);

    const ImageSet sets[1] = {input};
    Eigen::MatrixXd t(target.size(), 1);
    t.col(0) = target;
    const auto loss = [&] {
        return regression_loss(probe, std::span<const ImageSet>(sets, 1), t, lambda_target, lambda_weight);
    };

    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t a = 0; a < params.size(); ++a) {
        auto& arr = params[a];
        if (arr.empty()) continue;
        const std::size_t count = std::min<std::size_t>(per_block_samples, arr.size());
        // sample distinct indices; sweep everything when the array is small
        std::vector<std::size_t> idx;
        if (count == arr.size()) {
            for (std::size_t i = 0; i < arr.size(); ++i) idx.push_back(i);
        } else {
            std::vector<std::size_t> all(arr.size());
            for (std::size_t i = 0; i < arr.size(); ++i) all[i] = i;
            for (std::size_t i = 0; i < count; ++i)
                std::swap(all[i], all[i + rng.index(arr.size() - i)]);
            idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
        }
        for (const auto i : idx) {
            const double saved = arr[i];
            arr[i] = saved + step;
            const double up = loss();
            arr[i] = saved - step;
            const double down = loss();
            arr[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double exact = grads[a][i];
            const double denom = std::max(std::abs(exact) + std::abs(numeric), 1e-4);
            worst = std::max(worst, std::abs(exact - numeric) / denom);
        }
    }
    return worst;
}

double grad_check(const ImageEncoder& model, const ImageSet& input, const Eigen::VectorXd& target,
                  double lambda_target, double lambda_weight, int per_block_samples, double step,
                  std::uint64_t seed) {
    const ImageSet sets[1] = {input};
    Eigen::MatrixXd t(target.size(), 1);
    t.col(0) = target;
    const EncoderGradients g =
        encoder_backward(model, std::span<const ImageSet>(sets, 1), t, lambda_target, lambda_weight);
    return max_relative_gradient_error(model, g, input, target, lambda_target, lambda_weight,
                                       per_block_samples, step, seed);
}

} // namespace bimf
