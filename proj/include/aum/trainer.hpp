#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aum/data.hpp"
#include "aum/detail/text.hpp"
#include "aum/errors.hpp"
#include "aum/logit_log.hpp"
#include "aum/rng.hpp"

namespace aum {

/// Full training schedule length used when none is given.
inline constexpr int kDefaultEpochs = 100;
/// Batch size for full (cleaning / retraining) runs.
inline constexpr std::size_t kDefaultBatchSize = 256;
/// Identification runs use a quarter of the full-run batch size.
inline constexpr std::size_t kDefaultIdentificationBatchSize = kDefaultBatchSize / 4;

struct TrainConfig {
    std::size_t hidden_width = 128;
    int epochs_total = kDefaultEpochs;
    std::vector<int> lr_drop_epochs = {kDefaultEpochs / 2, kDefaultEpochs * 3 / 4};
    double lr_initial = 0.1;
    double lr_drop_factor = 10.0;
    double momentum = 0.9;  // Nesterov
    double weight_decay = 1e-4;
    std::size_t batch_size = kDefaultBatchSize;
    std::uint64_t seed = 0;
    bool stop_at_first_drop = false;

    /// Full schedule with drops at 50% and 75% of `epochs`.
    static TrainConfig full(int epochs, std::size_t batch_size, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.epochs_total = epochs;
        cfg.lr_drop_epochs.clear();
        for (int drop : {epochs / 2, epochs * 3 / 4})
            if (drop >= 1 && drop < epochs && (cfg.lr_drop_epochs.empty() || drop > cfg.lr_drop_epochs.back()))
                cfg.lr_drop_epochs.push_back(drop);
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        return cfg;
    }

    /// Same schedule, stopped at the first learning-rate drop.
    static TrainConfig identification(int epochs, std::size_t batch_size, std::uint64_t seed) {
        TrainConfig cfg = full(epochs, batch_size, seed);
        cfg.stop_at_first_drop = true;
        return cfg;
    }

    void validate() const {
        if (hidden_width < 1) throw std::invalid_argument("train config: hidden_width must be >= 1");
        if (epochs_total < 1) throw std::invalid_argument("train config: epochs_total must be >= 1");
        for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
            if (lr_drop_epochs[i] < 1 || lr_drop_epochs[i] >= epochs_total)
                throw std::invalid_argument("train config: drop epochs must lie in [1, epochs_total)");
            if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
                throw std::invalid_argument("train config: drop epochs must be strictly increasing");
        }
        if (stop_at_first_drop && lr_drop_epochs.empty())
            throw std::invalid_argument("train config: stop_at_first_drop needs at least one drop epoch");
        if (!(lr_initial > 0.0)) throw std::invalid_argument("train config: lr_initial must be positive");
        if (!(lr_drop_factor > 0.0)) throw std::invalid_argument("train config: lr_drop_factor must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum must be in [0, 1)");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    }

    /// Number of epochs actually trained and logged.
    int epochs_to_run() const { return stop_at_first_drop ? lr_drop_epochs.front() : epochs_total; }

    std::string canonical() const {
        std::string out = "hidden_width=" + std::to_string(hidden_width) + ";epochs_total=" + std::to_string(epochs_total) +
                          ";lr_drop_epochs=";
        for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i)
            out += (i ? "," : "") + std::to_string(lr_drop_epochs[i]);
        out += ";lr_initial=" + detail::format_double(lr_initial);
        out += ";lr_drop_factor=" + detail::format_double(lr_drop_factor);
        out += ";momentum=" + detail::format_double(momentum);
        out += ";weight_decay=" + detail::format_double(weight_decay);
        out += ";batch_size=" + std::to_string(batch_size);
        out += ";seed=" + std::to_string(seed);
        out += std::string(";stop_at_first_drop=") + (stop_at_first_drop ? "1" : "0");
        return out;
    }

    std::string digest() const {
        detail::Fnv1a h;
        h.update(canonical());
        return h.hex();
    }
};

inline std::string dataset_digest(const Dataset& ds) {
    detail::Fnv1a h;
    h.update(to_csv(ds));
    return h.hex();
}

/// One-hidden-layer ReLU network. All parameters live in one flat vector,
/// laid out as [W1 (hidden x input), b1, W2 (outputs x hidden), b2], row-major.
class Model {
public:
    Model(std::size_t input_dim, std::size_t hidden_width, std::size_t outputs)
        : input_(input_dim), hidden_(hidden_width), outputs_(outputs), params_(parameter_count(), 0.0) {}

    std::size_t input_dim() const { return input_; }
    std::size_t hidden_width() const { return hidden_; }
    std::size_t outputs() const { return outputs_; }
    std::size_t parameter_count() const { return hidden_ * input_ + hidden_ + outputs_ * hidden_ + outputs_; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    std::span<double> w1() { return {params_.data() + w1_offset(), hidden_ * input_}; }
    std::span<double> b1() { return {params_.data() + b1_offset(), hidden_}; }
    std::span<double> w2() { return {params_.data() + w2_offset(), outputs_ * hidden_}; }
    std::span<double> b2() { return {params_.data() + b2_offset(), outputs_}; }
    std::span<const double> w1() const { return {params_.data() + w1_offset(), hidden_ * input_}; }
    std::span<const double> b1() const { return {params_.data() + b1_offset(), hidden_}; }
    std::span<const double> w2() const { return {params_.data() + w2_offset(), outputs_ * hidden_}; }
    std::span<const double> b2() const { return {params_.data() + b2_offset(), outputs_}; }

    std::size_t w1_offset() const { return 0; }
    std::size_t b1_offset() const { return hidden_ * input_; }
    std::size_t w2_offset() const { return b1_offset() + hidden_; }
    std::size_t b2_offset() const { return w2_offset() + outputs_ * hidden_; }

    /// Writes post-ReLU activations into `hidden` and logits into `logits`.
    void forward(std::span<const double> x, std::span<double> hidden, std::span<double> logits) const {
        const double* w1p = params_.data() + w1_offset();
        const double* b1p = params_.data() + b1_offset();
        for (std::size_t h = 0; h < hidden_; ++h) {
            const double* row = w1p + h * input_;
            double acc = b1p[h];
            for (std::size_t j = 0; j < input_; ++j) acc += row[j] * x[j];
            hidden[h] = acc > 0.0 ? acc : 0.0;
        }
        const double* w2p = params_.data() + w2_offset();
        const double* b2p = params_.data() + b2_offset();
        for (std::size_t o = 0; o < outputs_; ++o) {
            const double* row = w2p + o * hidden_;
            double acc = b2p[o];
            for (std::size_t h = 0; h < hidden_; ++h) acc += row[h] * hidden[h];
            logits[o] = acc;
        }
    }

    std::vector<double> logits(std::span<const double> x) const {
        std::vector<double> hidden(hidden_), out(outputs_);
        forward(x, hidden, out);
        return out;
    }

    friend bool operator==(const Model&, const Model&) = default;

private:
    std::size_t input_;
    std::size_t hidden_;
    std::size_t outputs_;
    std::vector<double> params_;
};

/// He-style initialisation: weights ~ N(0, 2 / fan_in), biases zero.
inline Model init_model(std::size_t input_dim, int outputs, const TrainConfig& cfg) {
    if (input_dim < 1) throw std::invalid_argument("init_model: input dimension must be >= 1");
    if (outputs < 2) throw std::invalid_argument("init_model: need at least two outputs");
    if (cfg.hidden_width < 1) throw std::invalid_argument("init_model: hidden width must be >= 1");
    Model model(input_dim, cfg.hidden_width, static_cast<std::size_t>(outputs));
    Rng rng(derive_seed(cfg.seed, 0));
    const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
    for (double& w : model.w1()) w = s1 * rng.normal();
    const double s2 = std::sqrt(2.0 / static_cast<double>(cfg.hidden_width));
    for (double& w : model.w2()) w = s2 * rng.normal();
    return model;
}

/// Cross-entropy on a minibatch: computes scale * mean_i CE(softmax(z_i), y_i)
/// and *adds* its gradient to `grad` (same layout as the parameters).
/// `on_logits(sample, logits)` sees every sample's logits from this forward pass.
template <class OnLogits>
double accumulate_loss_gradient(const Model& model, std::span<const Sample* const> batch, std::span<double> grad,
                                double scale, OnLogits&& on_logits) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    if (grad.size() != model.parameter_count()) throw std::invalid_argument("loss: gradient buffer has wrong size");
    const std::size_t d = model.input_dim(), H = model.hidden_width(), C = model.outputs();
    std::vector<double> hidden(H), logits(C), dlogits(C), dhidden(H);
    const auto params = model.parameters();
    const double* w2p = params.data() + model.w2_offset();
    double* gw1 = grad.data() + model.w1_offset();
    double* gb1 = grad.data() + model.b1_offset();
    double* gw2 = grad.data() + model.w2_offset();
    double* gb2 = grad.data() + model.b2_offset();
    const double per_sample = scale / static_cast<double>(batch.size());

    double loss = 0.0;
    for (const Sample* s : batch) {
        if (s->features.size() != d) throw std::invalid_argument("loss: feature dimension mismatch");
        if (s->assigned_label < 0 || static_cast<std::size_t>(s->assigned_label) >= C)
            throw std::invalid_argument("loss: label outside model outputs");
        model.forward(s->features, hidden, logits);
        on_logits(*s, std::span<const double>(logits));

        const double zmax = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (std::size_t o = 0; o < C; ++o) {
            dlogits[o] = std::exp(logits[o] - zmax);
            denom += dlogits[o];
        }
        const auto y = static_cast<std::size_t>(s->assigned_label);
        loss += (std::log(denom) + zmax - logits[y]) * per_sample;
        for (std::size_t o = 0; o < C; ++o) dlogits[o] = (dlogits[o] / denom - (o == y ? 1.0 : 0.0)) * per_sample;

        std::fill(dhidden.begin(), dhidden.end(), 0.0);
        for (std::size_t o = 0; o < C; ++o) {
            const double g = dlogits[o];
            gb2[o] += g;
            double* grow = gw2 + o * H;
            const double* wrow = w2p + o * H;
            for (std::size_t h = 0; h < H; ++h) {
                grow[h] += g * hidden[h];
                dhidden[h] += g * wrow[h];
            }
        }
        const double* x = s->features.data();
        for (std::size_t h = 0; h < H; ++h) {
            if (hidden[h] <= 0.0) continue;  // ReLU gate
            const double g = dhidden[h];
            gb1[h] += g;
            double* grow = gw1 + h * d;
            for (std::size_t j = 0; j < d; ++j) grow[j] += g * x[j];
        }
    }
    return loss;
}

/// Loss and a freshly allocated gradient for `batch`.
inline double loss_and_gradient(const Model& model, std::span<const Sample> batch, std::vector<double>& grad,
                                double scale = 1.0) {
    std::vector<const Sample*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& s : batch) ptrs.push_back(&s);
    grad.assign(model.parameter_count(), 0.0);
    return accumulate_loss_gradient(model, ptrs, grad, scale, [](const Sample&, std::span<const double>) {});
}

inline double batch_loss(const Model& model, std::span<const Sample> batch, double scale = 1.0) {
    std::vector<double> grad;
    return loss_and_gradient(model, batch, grad, scale);
}

/// SGD with Nesterov momentum and L2 weight decay added to the gradient.
/// Every epoch is one pass over a fresh shuffle, last partial batch included.
/// Each sample's logits from its minibatch forward pass (before that batch's
/// update) go to `sink` once per epoch. The learning rate is divided by
/// `lr_drop_factor` after each drop epoch; with `stop_at_first_drop` the run
/// ends after epoch `lr_drop_epochs[0]`.
template <LogitSink Sink>
Model train(Model model, const Dataset& ds, const TrainConfig& cfg, Sink& sink) {
    cfg.validate();
    if (model.outputs() != static_cast<std::size_t>(ds.num_classes()))
        throw std::invalid_argument("train: model has " + std::to_string(model.outputs()) + " outputs but dataset has " +
                                    std::to_string(ds.num_classes()) + " classes");
    if (model.input_dim() != ds.feature_dim()) throw std::invalid_argument("train: feature dimension mismatch");

    const auto& samples = ds.samples();
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, 1));

    auto params = model.parameters();
    std::vector<double> grad(params.size()), velocity(params.size(), 0.0);
    std::vector<const Sample*> batch;
    batch.reserve(cfg.batch_size);
    double lr = cfg.lr_initial;
    const int epochs = cfg.epochs_to_run();

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&samples[order[i]]);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double loss = accumulate_loss_gradient(
                model, batch, grad, 1.0, [&](const Sample& s, std::span<const double> logits) {
                    sink.record(epoch, s.id, s.assigned_label, logits);
                });
            if (!std::isfinite(loss)) throw diverged_error(epoch, lr);
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = grad[i] + cfg.weight_decay * params[i];
                velocity[i] = cfg.momentum * velocity[i] + g;
                params[i] -= lr * (g + cfg.momentum * velocity[i]);
            }
        }
        if (!cfg.stop_at_first_drop &&
            std::find(cfg.lr_drop_epochs.begin(), cfg.lr_drop_epochs.end(), epoch) != cfg.lr_drop_epochs.end())
            lr /= cfg.lr_drop_factor;
    }
    return model;
}

inline Model train(Model model, const Dataset& ds, const TrainConfig& cfg) {
    NullLogitSink sink;
    return train(std::move(model), ds, cfg, sink);
}

/// Header describing a training run's logit log.
inline LogitLogHeader log_header_for(const Dataset& ds, const TrainConfig& cfg) {
    LogitLogHeader h;
    h.num_classes = ds.num_classes();
    h.epochs_logged = cfg.epochs_to_run();
    h.seed = cfg.seed;
    h.dataset_digest = dataset_digest(ds);
    h.config_digest = cfg.digest();
    h.provenance = ds.provenance();
    return h;
}

/// Fresh model trained on `ds`, with its complete logit log.
struct LoggedRun {
    Model model;
    LogitLog log;
};

inline LoggedRun train_logged(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    LogitLog log(log_header_for(ds, cfg));
    Model model = train(init_model(ds.feature_dim(), ds.num_classes(), cfg), ds, cfg, log);
    return {std::move(model), std::move(log)};
}

/// Index of the largest logit, lowest index on ties.
inline int predict(const Model& model, std::span<const double> features) {
    const auto z = model.logits(features);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

/// Fraction of samples whose predicted class differs from the assigned label.
/// A model with one extra output (the threshold class) may score a dataset
/// without it; that output can win the argmax but is never correct.
inline double evaluate(const Model& model, const Dataset& ds) {
    const auto c = static_cast<std::size_t>(ds.num_classes());
    if (model.outputs() != c && model.outputs() != c + 1)
        throw std::invalid_argument("evaluate: model has " + std::to_string(model.outputs()) +
                                    " outputs, dataset has " + std::to_string(c) + " classes");
    if (model.input_dim() != ds.feature_dim()) throw std::invalid_argument("evaluate: feature dimension mismatch");
    std::vector<double> hidden(model.hidden_width()), logits(model.outputs());
    std::size_t wrong = 0;
    for (const auto& s : ds.samples()) {
        model.forward(s.features, hidden, logits);
        const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
        if (best != s.assigned_label) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(ds.size());
}

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t parameters_checked = 0;
    bool passed = false;  // max_relative_error < tolerance
};

/// Compares backprop gradients with central differences (step 1e-5) on a
/// seeded sample of parameters: at least 200, or all of them if fewer, with
/// every parameter block represented. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline GradientCheckResult gradient_check(const Model& model, std::span<const Sample> batch, double tolerance,
                                          std::uint64_t seed = 0, std::size_t min_parameters = 256) {
    constexpr double kStep = 1e-5;
    std::vector<double> analytic;
    loss_and_gradient(model, batch, analytic);

    const std::size_t total = model.parameter_count();
    std::vector<std::size_t> chosen;
    if (total <= std::max<std::size_t>(min_parameters, 200)) {
        chosen.resize(total);
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    } else {
        Rng rng(seed);
        std::vector<std::size_t> all(total);
        std::iota(all.begin(), all.end(), std::size_t{0});
        rng.shuffle(all);
        chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(min_parameters, 200)));
        // One entry from each block regardless of the draw.
        for (std::size_t first : {model.w1_offset(), model.b1_offset(), model.w2_offset(), model.b2_offset()})
            chosen.push_back(first);
        std::sort(chosen.begin(), chosen.end());
        chosen.erase(std::unique(chosen.begin(), chosen.end()), chosen.end());
    }

    Model probe = model;
    auto p = probe.parameters();
    GradientCheckResult result;
    for (std::size_t i : chosen) {
        const double saved = p[i];
        p[i] = saved + kStep;
        const double up = batch_loss(probe, batch);
        p[i] = saved - kStep;
        const double down = batch_loss(probe, batch);
        p[i] = saved;
        const double numeric = (up - down) / (2.0 * kStep);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
    }
    result.parameters_checked = chosen.size();
    result.passed = result.max_relative_error < tolerance;
    return result;
}

}  // namespace aum
