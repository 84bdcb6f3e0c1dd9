#pragma once

// Shared fixtures for the unit tests.

#include "navar/common.hpp"
#include "navar/model.hpp"
#include "navar/panel.hpp"

#include <string>
#include <vector>

namespace navar::testing {

inline PanelDataset random_panel(std::size_t units, std::size_t times, std::size_t vars,
                                 std::uint64_t seed, int first_label = 1) {
    rng::Stream s(seed);
    std::vector<std::string> unit_names;
    for (std::size_t u = 0; u < units; ++u) unit_names.push_back("c" + std::to_string(u));
    std::vector<std::string> var_names;
    for (std::size_t v = 0; v < vars; ++v) var_names.push_back("x" + std::to_string(v));
    std::vector<int> labels;
    for (std::size_t t = 0; t < times; ++t) labels.push_back(first_label + static_cast<int>(t));
    std::vector<double> values(units * times * vars);
    for (double& v : values) v = s.normal();
    return PanelDataset(unit_names, var_names, labels, values);
}

inline std::vector<std::string> var_names(std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t k = 0; k < n; ++k) v.push_back("x" + std::to_string(k));
    return v;
}

/// Model with every parameter drawn from U(-scale, scale).
inline NavarModel random_model(std::size_t n, std::size_t lags, std::size_t hidden, std::uint64_t seed,
                               double scale = 1.0) {
    NavarModel m(n, lags, hidden, var_names(n), NormalizationStats::identity(var_names(n)));
    rng::Stream s(seed);
    auto& p = m.params();
    for (std::size_t k = 0; k < p.size(); ++k) p.flat(k) = s.uniform(-scale, scale);
    return m;
}

inline NavarModel zero_model(std::size_t n, std::size_t lags, std::size_t hidden) {
    return NavarModel(n, lags, hidden, var_names(n), NormalizationStats::identity(var_names(n)));
}

inline std::vector<LagWindow> all_windows(const PanelDataset& d, std::size_t lags) {
    return enumerate_windows(d, lags, {d.time_labels().front(), d.time_labels().back()}).windows;
}

}  // namespace navar::testing
