#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ligram/error.hpp"

namespace ligram {

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
    std::size_t epoch = 0;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["accuracy"] = accuracy;
        j["macro_f1"] = macro_f1;
        j["per_class"] = nlohmann::ordered_json::array();
        for (const auto& c : per_class) {
            j["per_class"].push_back({{"class", c.name},
                                      {"precision", c.precision},
                                      {"recall", c.recall},
                                      {"f1", c.f1},
                                      {"support", c.support}});
        }
        j["confusion"] = confusion;
        j["epoch"] = epoch;
        j["seed"] = seed;
        return j;
    }
};

/// Accuracy, per-class precision/recall/F1 and their unweighted mean over all
/// classes. F1 is 0 when precision + recall is 0.
inline MetricsReport compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                                     const std::vector<std::string>& class_names) {
    if (truth.size() != predicted.size()) throw Error("truth and prediction counts differ");
    if (truth.empty()) throw Error("cannot evaluate an empty split");
    const std::size_t c = class_names.size();
    MetricsReport r;
    r.confusion.assign(c, std::vector<std::size_t>(c, 0));
    std::size_t correct = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (truth[k] >= c || predicted[k] >= c) throw Error("class index out of range");
        ++r.confusion[truth[k]][predicted[k]];
        if (truth[k] == predicted[k]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    double f1_total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t predicted_k = 0, support = 0;
        for (std::size_t o = 0; o < c; ++o) {
            predicted_k += r.confusion[o][k];
            support += r.confusion[k][o];
        }
        const double tp = static_cast<double>(r.confusion[k][k]);
        ClassMetrics m;
        m.name = class_names[k];
        m.support = support;
        m.precision = predicted_k ? tp / static_cast<double>(predicted_k) : 0.0;
        m.recall = support ? tp / static_cast<double>(support) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        f1_total += m.f1;
        r.per_class.push_back(m);
    }
    r.macro_f1 = c ? f1_total / static_cast<double>(c) : 0.0;
    return r;
}

} // namespace ligram
