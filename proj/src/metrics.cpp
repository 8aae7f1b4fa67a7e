#include "dfq/metrics.hpp"

#include <cstdio>

#include "dfq/errors.hpp"

namespace dfq {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto v : row) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::uint64_t t = 0;
    for (auto v : counts.at(truth)) t += v;
    return t;
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

ConfusionMatrix confusion_matrix(const std::vector<ClassLabel>& truths, const std::vector<ClassLabel>& preds) {
    if (truths.size() != preds.size()) {
        throw ConfigError("confusion_matrix: " + std::to_string(truths.size()) + " truths vs " +
                          std::to_string(preds.size()) + " predictions");
    }
    if (truths.empty()) throw ConfigError("confusion_matrix: no samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        cm.add(static_cast<std::size_t>(truths[i]), static_cast<std::size_t>(preds[i]));
    }
    return cm;
}

OneVsRest one_vs_rest(const ConfusionMatrix& cm, ClassLabel label) {
    const auto c = static_cast<std::size_t>(label);
    OneVsRest r;
    r.tp = cm.counts[c][c];
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (k == c) continue;
        r.fp += cm.counts[k][c];
        r.fn += cm.counts[c][k];
    }
    r.tn = cm.total() - r.tp - r.fp - r.fn;
    return r;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassReport compute_report(const ConfusionMatrix& cm) {
    ClassReport r;
    r.total = cm.total();
    if (r.total == 0) throw ConfigError("compute_report: empty confusion matrix");
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.total);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        ClassMetrics& m = r.classes[c];
        m.counts = one_vs_rest(cm, label_from_index(c));
        m.precision = ratio(m.counts.tp, m.counts.tp + m.counts.fp);
        m.recall = ratio(m.counts.tp, m.counts.tp + m.counts.fn);
        const double pr = m.precision + m.recall;
        m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
    }
    r.macro_precision /= kNumClasses;
    r.macro_recall /= kNumClasses;
    r.macro_f1 /= kNumClasses;
    return r;
}

std::string render_text(const ConfusionMatrix& cm, const ClassReport& report) {
    std::string out;
    char line[160];
    out += "confusion matrix (rows = true, columns = predicted)\n";
    std::snprintf(line, sizeof(line), "%-10s", "");
    out += line;
    for (auto name : kClassNames) {
        std::snprintf(line, sizeof(line), " %9s", std::string(name).c_str());
        out += line;
    }
    out += "\n";
    for (std::size_t t = 0; t < kNumClasses; ++t) {
        std::snprintf(line, sizeof(line), "%-10s", std::string(kClassNames[t]).c_str());
        out += line;
        for (std::size_t p = 0; p < kNumClasses; ++p) {
            std::snprintf(line, sizeof(line), " %9llu", static_cast<unsigned long long>(cm.counts[t][p]));
            out += line;
        }
        out += "\n";
    }
    out += "\n";
    std::snprintf(line, sizeof(line), "%-10s %7s %7s %7s %7s %9s %9s %9s\n", "class", "tp", "fp", "fn", "tn",
                  "precision", "recall", "f1");
    out += line;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& m = report.classes[c];
        std::snprintf(line, sizeof(line), "%-10s %7llu %7llu %7llu %7llu %9.4f %9.4f %9.4f\n",
                      std::string(kClassNames[c]).c_str(), static_cast<unsigned long long>(m.counts.tp),
                      static_cast<unsigned long long>(m.counts.fp), static_cast<unsigned long long>(m.counts.fn),
                      static_cast<unsigned long long>(m.counts.tn), m.precision, m.recall, m.f1);
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-10s %31s %9.4f %9.4f %9.4f\n", "macro", "", report.macro_precision,
                  report.macro_recall, report.macro_f1);
    out += line;
    std::snprintf(line, sizeof(line), "accuracy %.4f (%llu/%llu)\n", report.accuracy,
                  static_cast<unsigned long long>(cm.trace()), static_cast<unsigned long long>(report.total));
    out += line;
    return out;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : cm.counts) rows.push_back(row);
    return {{"labels", kClassNames}, {"counts", rows}};
}

nlohmann::json to_json(const ClassReport& report) {
    nlohmann::json classes = nlohmann::json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& m = report.classes[c];
        classes[std::string(kClassNames[c])] = {{"tp", m.counts.tp},        {"fp", m.counts.fp},
                                                {"fn", m.counts.fn},        {"tn", m.counts.tn},
                                                {"precision", m.precision}, {"recall", m.recall},
                                                {"f1", m.f1}};
    }
    return {{"accuracy", report.accuracy},
            {"macro_precision", report.macro_precision},
            {"macro_recall", report.macro_recall},
            {"macro_f1", report.macro_f1},
            {"total", report.total},
            {"classes", classes}};
}

}  // namespace dfq
