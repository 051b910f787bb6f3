#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "ligram/model.hpp"

namespace ligram {

struct AblationVariant {
    std::string name;
    ModelConfig config;
};

/// The eight rows of the ablation table: single graphs, pairs, no SemCon, full.
inline std::vector<AblationVariant> ablation_variants(const ModelConfig& base) {
    auto with = [&](bool m, bool p, bool e, bool semcon) {
        ModelConfig c = base;
        c.use_morpheme = m;
        c.use_pos = p;
        c.use_entity = e;
        c.use_semcon = semcon;
        return c;
    };
    return {
        {"morpheme", with(true, false, false, true)},
        {"pos", with(false, true, false, true)},
        {"entity", with(false, false, true, true)},
        {"morpheme/pos", with(true, true, false, true)},
        {"morpheme/entity", with(true, false, true, true)},
        {"pos/entity", with(false, true, true, true)},
        {"w/o SemCon", with(true, true, true, false)},
        {"LIGRAM", with(true, true, true, true)},
    };
}

struct AblationRow {
    std::string name;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracy;
    std::vector<double> macro_f1;
};

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// sample standard deviation; 0 for fewer than two values
inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline nlohmann::ordered_json ablation_json(const std::string& dataset, const std::vector<AblationRow>& rows) {
    nlohmann::ordered_json j;
    j["dataset"] = dataset;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        j["rows"].push_back({{"config", r.name},
                             {"seeds", r.seeds},
                             {"accuracy", r.accuracy},
                             {"macro_f1", r.macro_f1},
                             {"accuracy_mean", mean_of(r.accuracy)},
                             {"accuracy_std", stddev_of(r.accuracy)},
                             {"macro_f1_mean", mean_of(r.macro_f1)},
                             {"macro_f1_std", stddev_of(r.macro_f1)}});
    }
    return j;
}

/// Rows are configurations, columns ACC and F1 (percent, mean ± std over seeds).
inline std::string ablation_markdown(const std::string& dataset, const std::vector<AblationRow>& rows) {
    std::string out = "| Model | " + dataset + " ACC | " + dataset + " F1 |\n|---|---|---|\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "| %s | %.2f ± %.2f | %.2f ± %.2f |\n", r.name.c_str(), 100.0 * mean_of(r.accuracy),
                      100.0 * stddev_of(r.accuracy), 100.0 * mean_of(r.macro_f1), 100.0 * stddev_of(r.macro_f1));
        out += buf;
    }
    return out;
}

} // namespace ligram
