#include "dfq/training.hpp"

#include <cmath>
#include <string>

#include "dfq/errors.hpp"

namespace dfq {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (micro_batch == 0) throw ConfigError("micro batch must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(eps_adam > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (!(width > 0.0 && width <= 1.0)) throw ConfigError("width must lie in (0, 1]");
    augment.validate();
}

AdamState AdamState::zeros_like(const ParameterSet<float>& params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.shape());
        s.v.emplace_back(p.shape());
    }
    return s;
}

void adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state,
               const TrainConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: parameter, gradient and moment sets differ in length");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape() ||
            state.v[i].shape() != params[i].shape()) {
            throw ShapeError("adam_step: tensor " + std::to_string(i) + " shape mismatch");
        }
    }
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* p = params[i].data();
        const float* g = grads[i].data();
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        const std::size_t n = params[i].size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (1.0f - b1) * g[j];
            v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] = static_cast<float>(p[j] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps_adam));
        }
    }
}

nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},           {"train_loss", r.train_loss}, {"train_acc", r.train_accuracy},
            {"val_loss", r.val_loss},     {"val_acc", r.val_accuracy},  {"train_confusion", r.train_confusion.counts},
            {"val_confusion", r.val_confusion.counts}};
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
    for (const auto& r : history) out << to_json(r).dump() << "\n";
}

TrainState TrainState::fresh(Network net) {
    TrainState s;
    s.adam = AdamState::zeros_like(net.parameters());
    s.net = std::move(net);
    return s;
}

EvalResult evaluate(const Network& net, const Dataset& ds, std::size_t batch_size) {
    if (ds.empty()) throw DataError(std::string("cannot evaluate an empty ") + std::string(split_name(ds.split())) + " dataset");
    BatchIterator it(ds, batch_size, 0, 0, AugmentConfig::disabled(), false);
    EvalResult r;
    r.predictions.resize(ds.size());
    double loss_sum = 0.0;
    Batch batch;
    while (it.next(batch)) {
        const Tensor probs = net.predict(batch.images);
        const auto pred = argmax_rows(probs);
        const std::size_t n = batch.indices.size();
        for (std::size_t b = 0; b < n; ++b) {
            const auto truth = static_cast<std::size_t>(ds.label(batch.indices[b]));
            loss_sum -= std::log(static_cast<double>(probs[b * kNumClasses + truth]) + kLogEpsilon);
            r.confusion.add(truth, pred[b]);
            r.predictions[batch.indices[b]] = pred[b];
        }
    }
    r.loss = loss_sum / static_cast<double>(ds.size());
    return r;
}

std::vector<EpochRecord> train(TrainState& state, const Dataset& train_ds, const Dataset& val_ds,
                               const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (static_cast<float>(state.net.width()) != static_cast<float>(cfg.width)) {
        throw ConfigError("network width " + std::to_string(state.net.width()) + " does not match config width " +
                          std::to_string(cfg.width));
    }
    if (state.adam.m.size() != state.net.parameters().size()) {
        state.adam = AdamState::zeros_like(state.net.parameters());
    }
    std::vector<EpochRecord> history;
    if (state.epochs_completed >= cfg.epochs) return history;
    if (train_ds.empty()) throw DataError("training dataset is empty");
    if (val_ds.empty()) throw DataError("validation dataset is empty");

    auto grads = state.net.zero_gradients();
    for (std::size_t epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
        BatchIterator it(train_ds, cfg.batch_size, cfg.seed, epoch, cfg.augment);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < it.batch_count(); ++b) {
            const Batch batch = it.batch(b);
            const std::size_t n = batch.indices.size();
            const float scale = 1.0f / static_cast<float>(n);
            for (auto& g : grads) g.fill(0.0f);
            Rng dropout_rng(Rng::derive(cfg.seed, {epoch, b, 1}));
            double batch_loss = 0.0;
            const std::size_t per = batch.images.size() / n;
            for (std::size_t start = 0; start < n; start += cfg.micro_batch) {
                const std::size_t m = std::min(cfg.micro_batch, n - start);
                Tensor x(batch.images.shape().tail().with_leading(m),
                         std::vector<float>(batch.images.data() + start * per, batch.images.data() + (start + m) * per));
                Tensor y(Shape{m, kNumClasses}, std::vector<float>(batch.targets.data() + start * kNumClasses,
                                                                   batch.targets.data() + (start + m) * kNumClasses));
                ForwardCache<float> cache;
                const Tensor probs = state.net.forward(x, Mode::Train, dropout_rng, &cache);
                batch_loss += static_cast<double>(batch_cross_entropy(probs, y)) * static_cast<double>(m);
                state.net.accumulate_gradients(cache, y, scale, grads);
            }
            batch_loss /= static_cast<double>(n);
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError("loss diverged (" + std::to_string(batch_loss) + ") at epoch " +
                                      std::to_string(epoch + 1) + ", batch " + std::to_string(b + 1));
            }
            loss_sum += batch_loss;
            adam_step(state.net.parameters(), grads, state.adam, cfg);
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = loss_sum / static_cast<double>(it.batch_count());
        const EvalResult tr = evaluate(state.net, train_ds, cfg.batch_size);
        const EvalResult va = evaluate(state.net, val_ds, cfg.batch_size);
        rec.train_accuracy = tr.confusion.accuracy();
        rec.train_confusion = tr.confusion;
        rec.val_loss = va.loss;
        rec.val_accuracy = va.confusion.accuracy();
        rec.val_confusion = va.confusion;
        state.epochs_completed = epoch + 1;
        history.push_back(rec);
        if (on_epoch) on_epoch(rec, state);
    }
    return history;
}

std::optional<HistorySummary> summarize(const std::vector<EpochRecord>& history) {
    if (history.empty()) return std::nullopt;
    HistorySummary s;
    s.final_val_accuracy = history.back().val_accuracy;
    s.final_train_accuracy = history.back().train_accuracy;
    s.best_val_accuracy = -1.0;
    for (const auto& r : history) {
        if (r.val_accuracy > s.best_val_accuracy) {
            s.best_val_accuracy = r.val_accuracy;
            s.best_epoch = r.epoch;
        }
    }
    return s;
}

}  // namespace dfq
