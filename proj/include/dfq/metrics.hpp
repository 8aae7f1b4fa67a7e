#ifndef DFQ_METRICS_HPP
#define DFQ_METRICS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfq/network.hpp"

namespace dfq {

/// counts[truth][predicted], ClassLabel order.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t truth) const;
    void add(std::size_t truth, std::size_t predicted) { ++counts.at(truth).at(predicted); }
    /// trace / total, 0 for an empty matrix.
    double accuracy() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Throws ConfigError on a length mismatch or empty input.
ConfusionMatrix confusion_matrix(const std::vector<ClassLabel>& truths, const std::vector<ClassLabel>& preds);

struct OneVsRest {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    friend bool operator==(const OneVsRest&, const OneVsRest&) = default;
};

OneVsRest one_vs_rest(const ConfusionMatrix& cm, ClassLabel c);

struct ClassMetrics {
    OneVsRest counts;
    double precision = 0, recall = 0, f1 = 0;
};

struct ClassReport {
    std::array<ClassMetrics, kNumClasses> classes;
    double accuracy = 0;
    double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
    std::uint64_t total = 0;
};

/// One-vs-rest per class, unweighted macro averages, 0/0 taken as 0.
/// Throws ConfigError on an empty matrix.
ClassReport compute_report(const ConfusionMatrix& cm);

/// Fixed-width text: confusion matrix followed by the per-class table.
std::string render_text(const ConfusionMatrix& cm, const ClassReport& report);
nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const ClassReport& report);

}  // namespace dfq

#endif  // DFQ_METRICS_HPP
