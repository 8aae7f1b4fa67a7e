#ifndef DFQ_TRAINING_HPP
#define DFQ_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "dfq/data.hpp"
#include "dfq/metrics.hpp"
#include "dfq/network.hpp"

namespace dfq {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;  // total, including epochs already completed on resume
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-7;
    std::uint64_t seed = 0;
    double width = 1.0;
    AugmentConfig augment;
    /// Samples per forward/backward chunk inside a batch; bounds cache memory
    /// without changing the result.
    std::size_t micro_batch = 8;

    void validate() const;
};

struct AdamState {
    ParameterSet<float> m;
    ParameterSet<float> v;
    std::uint64_t t = 0;

    static AdamState zeros_like(const ParameterSet<float>& params);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One Adam update; t is incremented before the bias corrections.
void adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;  // mean of the epoch's training-batch losses
    double train_accuracy = 0;
    double val_loss = 0;
    double val_accuracy = 0;
    ConfusionMatrix train_confusion;
    ConfusionMatrix val_confusion;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

nlohmann::json to_json(const EpochRecord& r);
/// Appends one JSON object per line.
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);

struct TrainState {
    Network net;
    AdamState adam;
    std::size_t epochs_completed = 0;

    static TrainState fresh(Network net);
    friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct EvalResult {
    double loss = 0;
    ConfusionMatrix confusion;
    std::vector<std::size_t> predictions;  // per sample, dataset order
};

/// Infer-mode pass over ds in dataset order. Throws DataError if ds is empty.
EvalResult evaluate(const Network& net, const Dataset& ds, std::size_t batch_size = 32);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Runs epochs state.epochs_completed .. cfg.epochs - 1. Each epoch's shuffle,
/// dropout and augmentation streams derive from (cfg.seed, epoch, batch), so a
/// resumed run matches an uninterrupted one. Throws DivergenceError on a
/// non-finite batch loss.
std::vector<EpochRecord> train(TrainState& state, const Dataset& train_ds, const Dataset& val_ds,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct HistorySummary {
    double final_val_accuracy = 0;
    double best_val_accuracy = 0;
    std::size_t best_epoch = 0;
    double final_train_accuracy = 0;
};

std::optional<HistorySummary> summarize(const std::vector<EpochRecord>& history);

}  // namespace dfq

#endif  // DFQ_TRAINING_HPP
