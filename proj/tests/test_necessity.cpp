#include "support.hpp"

#include "navar/necessity.hpp"
#include "navar/pipeline.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace navar;
using namespace navar::testing;

namespace {

using Blocks = std::vector<std::vector<double>>;

// Long-run variance of the mean by summing every within-block pair directly.
double brute_force_hac(const Blocks& blocks, std::size_t bw) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& b : blocks) {
        for (double v : b) sum += v;
        n += b.size();
    }
    const double mean = sum / static_cast<double>(n);
    double acc = 0.0;
    for (const auto& b : blocks) {
        for (std::size_t s = 0; s < b.size(); ++s) {
            for (std::size_t t = 0; t < b.size(); ++t) {
                const std::size_t lag = s > t ? s - t : t - s;
                if (lag > bw) continue;
                const double w = 1.0 - static_cast<double>(lag) / static_cast<double>(bw + 1);
                acc += w * (b[s] - mean) * (b[t] - mean);
            }
        }
    }
    return acc / (static_cast<double>(n) * static_cast<double>(n));
}

Blocks random_blocks(rng::Stream& s, std::size_t units, std::size_t min_len, std::size_t max_len) {
    Blocks out(units);
    for (auto& b : out) {
        const std::size_t len = min_len + s.below(max_len - min_len + 1);
        double prev = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            prev = 0.5 * prev + s.normal();
            b.push_back(prev + 0.2);
        }
    }
    return out;
}

// Adjusted p by the definition: min over ranks at or above, computed O(m^2).
std::vector<double> bh_oracle(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double best = 1.0;
        for (std::size_t k = 0; k < m; ++k) {
            if (sorted[k] >= p[i]) {
                // the largest rank holding this value gives the smallest ratio
                std::size_t rank = k + 1;
                while (rank < m && sorted[rank] == sorted[k]) ++rank;
                best = std::min(best, static_cast<double>(m) * sorted[k] / static_cast<double>(rank));
            }
        }
        out[i] = best;
    }
    return out;
}

std::vector<double> bonferroni_oracle(const std::vector<double>& p) {
    std::vector<double> out;
    for (double v : p) out.push_back(std::min(1.0, v * static_cast<double>(p.size())));
    return out;
}

ForecastLosses single_block(std::vector<double> losses, std::size_t unit = 0, int first = 1) {
    ForecastLosses f;
    UnitLosses u;
    u.unit = unit;
    for (std::size_t t = 0; t < losses.size(); ++t) u.times.push_back(first + static_cast<int>(t));
    u.losses = std::move(losses);
    f.blocks.push_back(std::move(u));
    return f;
}

}  // namespace

TEST_CASE("hac of {2,0,2,0} with bandwidth 0 is 0.25") {
    const Blocks b{{2, 0, 2, 0}};
    CHECK(hac_variance_of_mean(b, 0) == 0.25);
}

TEST_CASE("hac matches a brute-force double loop") {
    rng::Stream s(4);
    for (int trial = 0; trial < 30; ++trial) {
        const auto blocks = random_blocks(s, 1 + s.below(8), 2, 12);
        for (std::size_t bw = 0; bw <= 4; ++bw) {
            const double got = hac_variance_of_mean(blocks, bw);
            const double want = brute_force_hac(blocks, bw);
            CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
        }
        std::size_t shortest = 1000;
        for (const auto& b : blocks) shortest = std::min(shortest, b.size());
        const std::size_t bw = resolve_bandwidth(std::nullopt, shortest);
        CHECK(hac_variance_of_mean(blocks) == hac_variance_of_mean(blocks, bw));
    }
}

TEST_CASE("automatic bandwidth") {
    CHECK(resolve_bandwidth(std::nullopt, 5) == 2);
    CHECK(resolve_bandwidth(std::nullopt, 100) == 4);
    CHECK(resolve_bandwidth(std::nullopt, 500) == 5);
    CHECK(resolve_bandwidth(std::nullopt, 2) == 1);
    CHECK(resolve_bandwidth(std::nullopt, 1) == 0);
    CHECK(resolve_bandwidth(7, 5) == 7);
}

TEST_CASE("constant series gives zero variance and a degenerate test") {
    const Blocks c{{0.3, 0.3, 0.3}, {0.3, 0.3}};
    CHECK(hac_variance_of_mean(c) == 0.0);
    const Blocks z{{0, 0, 0, 0}, {0, 0}};
    const auto r = dm_test(z);
    CHECK(r.degenerate);
    CHECK_FALSE(r.necessary);
    CHECK_FALSE(r.dm_stat.has_value());
    CHECK_FALSE(r.p_value.has_value());
    CHECK(r.mean_diff == 0.0);
    CHECK_THROWS_AS((void)hac_variance_of_mean(Blocks{{1.0}}), std::invalid_argument);
}

TEST_CASE("dm on {2,0,2,0} with bandwidth 0") {
    const Blocks b{{2, 0, 2, 0}};
    const auto r = dm_test(b, 0.05, 0);
    CHECK(r.mean_diff == 1.0);
    CHECK(r.hac_variance_of_mean == 0.25);
    REQUIRE(r.dm_stat.has_value());
    CHECK(*r.dm_stat == 2.0);
    CHECK(*r.p_value == doctest::Approx(0.02275013194817921).epsilon(1e-12));
    CHECK(r.necessary);
    CHECK(r.n_obs == 4);
    CHECK(r.warning == kNestedModelWarning);
}

TEST_CASE("published DM rows render with the expected verdicts") {
    // Two rows of the case-study table, used as threshold fixtures.
    const double p1 = normal_upper_tail(5.5377072);
    const double p2 = normal_upper_tail(1.0179710);
    CHECK(p1 > 1.4e-8);
    CHECK(p1 < 1.6e-8);
    CHECK(p2 == doctest::Approx(0.1543458).epsilon(1e-6));

    EdgeScreenRow a, b;
    a.edge = {0, 1};
    a.navar_score = 0.0061;
    a.mean_loss_full = 0.5767;
    a.mean_loss_masked = 0.6;
    a.test.dm_stat = 5.5377072;
    a.test.p_value = p1;
    a.adjusted_p = p1;
    a.necessary = p1 < 0.05;
    b.edge = {0, 2};
    b.test.dm_stat = 1.0179710;
    b.test.p_value = p2;
    b.adjusted_p = p2;
    b.necessary = p2 < 0.05;
    CHECK(std::string(verdict_label(a.necessary)) == "Yes");
    CHECK(std::string(verdict_label(b.necessary)) == "No");

    const std::vector<EdgeScreenRow> rows{a, b};
    const std::string table = render_measure_table(rows, {"suffrage", "s1", "s2"});
    for (const char* label : {"Measure", "Target", "NAVAR Score", "Mean Loss Full", "Mean Loss Masked",
                              "Mean Diff.", "DM stat", "p-value", "Forecast-necessary?"}) {
        CHECK(table.find(label) != std::string::npos);
    }
    CHECK(table.find("5.5377072") != std::string::npos);
    CHECK(table.find("1.54e-01") != std::string::npos);
    CHECK(table.find("1.53e-08") != std::string::npos);
}

TEST_CASE("dm statistic is scale invariant") {
    rng::Stream s(8);
    const auto blocks = random_blocks(s, 6, 5, 5);
    Blocks scaled = blocks;
    for (auto& b : scaled)
        for (double& v : b) v *= 3.7;
    const auto r1 = dm_test(blocks);
    const auto r2 = dm_test(scaled);
    CHECK(*r2.dm_stat == doctest::Approx(*r1.dm_stat).epsilon(1e-12));
    CHECK(*r2.p_value == doctest::Approx(*r1.p_value).epsilon(1e-10));
}

TEST_CASE("permuting unit blocks changes the variance by < 1e-12") {
    rng::Stream s(12);
    auto blocks = random_blocks(s, 9, 3, 7);
    const double before = hac_variance_of_mean(blocks, 2);
    std::reverse(blocks.begin(), blocks.end());
    std::swap(blocks[1], blocks[5]);
    CHECK(std::fabs(hac_variance_of_mean(blocks, 2) - before) < 1e-12);
}

TEST_CASE("calibration under the null, panel-shaped and single-series") {
    for (std::size_t units : {100u, 1u}) {
        CAPTURE(units);
        const std::size_t len = 500 / units;
        rng::Stream s(2024 + units);
        int rejections = 0;
        for (int rep = 0; rep < 2000; ++rep) {
            Blocks b(units, std::vector<double>(len));
            for (auto& blk : b)
                for (double& v : blk) v = s.normal();
            rejections += dm_test(b, 0.05).necessary ? 1 : 0;
        }
        const double rate = rejections / 2000.0;
        MESSAGE("rejection rate " << rate);
        CHECK(rate >= 0.03);
        CHECK(rate <= 0.07);
    }
}

TEST_CASE("p-value adjustment hand cases") {
    const std::vector<double> a{0.01, 0.02, 0.03};
    const auto bonf = adjust_pvalues(a, Correction::Bonferroni);
    CHECK(bonf[0] == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(bonf[1] == doctest::Approx(0.06).epsilon(1e-15));
    CHECK(bonf[2] == doctest::Approx(0.09).epsilon(1e-15));

    // Standard step-up: ranks (1, 3, 2) give 0.03, min(0.04, 0.045) = 0.04, 0.04.
    const auto bh = adjust_pvalues(std::vector<double>{0.01, 0.04, 0.03}, Correction::BenjaminiHochberg);
    CHECK(bh[0] == doctest::Approx(0.03).epsilon(1e-15));
    CHECK(bh[1] == doctest::Approx(0.04).epsilon(1e-15));
    CHECK(bh[2] == doctest::Approx(0.04).epsilon(1e-15));

    for (auto method : {Correction::Bonferroni, Correction::BenjaminiHochberg, Correction::None}) {
        CHECK(adjust_pvalues(std::vector<double>{0.0123}, method)[0] == 0.0123);
    }
    std::vector<double> many(240, 0.5);
    many[17] = 1e-4;
    CHECK(adjust_pvalues(many, Correction::Bonferroni)[17] == doctest::Approx(0.024).epsilon(1e-14));
    CHECK_THROWS_AS((void)adjust_pvalues(std::vector<double>{0.5, 1.2}, Correction::BenjaminiHochberg),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)adjust_pvalues(std::vector<double>{NAN}, Correction::Bonferroni),
                    std::invalid_argument);
    CHECK(parse_correction("bh") == Correction::BenjaminiHochberg);
    CHECK(parse_correction("bonferroni") == Correction::Bonferroni);
}

TEST_CASE("adjustment matches independent oracles on random vectors") {
    rng::Stream s(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + s.below(60);
        std::vector<double> p(m);
        for (double& v : p) {
            v = s.uniform();
            if (s.below(5) == 0) v = v * 1e-4;
            if (s.below(10) == 0 && m > 1) v = p[0];  // ties
        }
        const auto bh = adjust_pvalues(p, Correction::BenjaminiHochberg);
        const auto bf = adjust_pvalues(p, Correction::Bonferroni);
        const auto bh_ref = bh_oracle(p);
        const auto bf_ref = bonferroni_oracle(p);
        for (std::size_t k = 0; k < m; ++k) {
            CHECK(std::fabs(bh[k] - bh_ref[k]) <= 1e-15);
            CHECK(std::fabs(bf[k] - bf_ref[k]) <= 1e-15);
            CHECK(bh[k] <= bf[k]);
            CHECK(bh[k] >= p[k]);
        }
        // Monotone in raw-p order.
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](auto x, auto y) { return p[x] < p[y]; });
        for (std::size_t k = 1; k < m; ++k) CHECK(bh[order[k]] >= bh[order[k - 1]]);
    }
}

TEST_CASE("build_differential") {
    const auto full = single_block({0.5, 0.25, 1.0});
    SUBCASE("identical inputs give zeros") {
        const auto d = build_differential(full, full, {0, 1});
        for (double v : d.blocks[0].diff) CHECK(v == 0.0);
    }
    SUBCASE("shifted losses give a constant differential") {
        const auto masked = single_block({0.6, 0.35, 1.1});
        const auto d = build_differential(full, masked, {0, 1});
        for (double v : d.blocks[0].diff) CHECK(std::fabs(v - 0.1) < 1e-12);
        CHECK(d.count() == 3);
    }
    SUBCASE("index mismatch") {
        CHECK_THROWS_AS((void)build_differential(full, single_block({1, 2, 3}, 0, 2), {0, 1}), DataError);
        CHECK_THROWS_AS((void)build_differential(full, single_block({1, 2}), {0, 1}), DataError);
        CHECK_THROWS_AS((void)build_differential(full, single_block({1, 2, 3}, 4), {0, 1}), DataError);
    }
    SUBCASE("random pair equals direct subtraction") {
        rng::Stream s(3);
        ForecastLosses a, b;
        for (std::size_t u = 0; u < 4; ++u) {
            UnitLosses x{u, {}, {}}, y{u, {}, {}};
            for (int t = 0; t < 5; ++t) {
                x.times.push_back(30 + t);
                y.times.push_back(30 + t);
                x.losses.push_back(s.uniform());
                y.losses.push_back(s.uniform());
            }
            a.blocks.push_back(x);
            b.blocks.push_back(y);
        }
        const auto d = build_differential(a, b, {1, 0});
        for (std::size_t u = 0; u < 4; ++u)
            for (std::size_t t = 0; t < 5; ++t)
                CHECK(d.blocks[u].diff[t] == b.blocks[u].losses[t] - a.blocks[u].losses[t]);
    }
}

TEST_CASE("forecast losses") {
    // y0_t = y1_{t-1}; f_01 is the identity built from two ReLU units.
    const std::size_t T = 12;
    rng::Stream s(6);
    std::vector<double> values;
    for (std::size_t u = 0; u < 3; ++u) {
        std::vector<double> y1(T);
        for (double& v : y1) v = s.normal();
        for (std::size_t t = 0; t < T; ++t) {
            values.push_back(t == 0 ? 0.0 : y1[t - 1]);
            values.push_back(y1[t]);
        }
    }
    std::vector<int> labels(T);
    std::iota(labels.begin(), labels.end(), 1);
    const PanelDataset d({"a", "b", "c"}, {"x0", "x1"}, labels, values);
    const SplitSpec split{{1, 8}, {9, 12}};

    auto m = zero_model(2, 1, 2);
    const std::size_t net = m.net_index(0, 1, 1);
    m.params().w1[net * 2] = 1.0;
    m.params().w1[net * 2 + 1] = -1.0;
    m.params().w2[net * 2] = 1.0;
    m.params().w2[net * 2 + 1] = -1.0;

    const auto perfect = forecast_losses(m, d, split, 0);
    CHECK(perfect.count() == 12);
    REQUIRE(perfect.blocks.size() == 3);
    for (const auto& b : perfect.blocks) {
        CHECK(b.times == std::vector<int>{9, 10, 11, 12});
        for (double v : b.losses) CHECK(v == 0.0);
    }

    const auto zero_edge = forecast_losses(m, d, split, 0, EdgeMask{0, 0});
    for (std::size_t u = 0; u < 3; ++u) CHECK(zero_edge.blocks[u].losses == perfect.blocks[u].losses);
    const auto series = build_differential(perfect, zero_edge, {0, 0});
    const auto r = dm_test(series);
    CHECK(r.degenerate);
    CHECK(r.mean_diff == 0.0);

    const auto rm = random_model(2, 1, 4, 3);
    const auto windows = enumerate_windows(d, 1, split.validation).windows;
    const auto masked = forecast_losses(rm, d, split, 1, EdgeMask{1, 0});
    std::size_t k = 0;
    for (const auto& b : masked.blocks) {
        for (double loss : b.losses) {
            const double e = windows[k].target[1] - predict(rm, windows[k], EdgeMask{1, 0})[1];
            CHECK(std::fabs(loss - e * e) < 1e-12);
            ++k;
        }
    }
    CHECK_THROWS_AS((void)forecast_losses(m, d, SplitSpec{{1, 8}, {20, 24}}, 0), DataError);
}

TEST_CASE("edge screen") {
    const auto d = random_panel(8, 20, 4, 15);
    const auto split = tail_split(d, 5);
    auto m = random_model(4, 2, 6, 11, 0.6);
    // Edge 2 -> 1 has all-zero nets and must come out degenerate.
    for (std::size_t l = 1; l <= 2; ++l) {
        const std::size_t net = m.net_index(1, 2, l);
        for (std::size_t k = 0; k < 6; ++k) m.params().w2[net * 6 + k] = 0.0;
        m.params().b2[net] = 0.0;
    }
    const auto scores = score_model(m, d, split);
    ScreenOptions opts;

    const auto report = screen_all_edges(m, d, split, scores, opts);
    REQUIRE(report.rows.size() == 12);
    CHECK(report.bandwidth == 2);
    for (std::size_t k = 1; k < 12; ++k) {
        const auto& a = report.rows[k - 1];
        const auto& b = report.rows[k];
        const bool ordered = a.adjusted_p < b.adjusted_p ||
                             (a.adjusted_p == b.adjusted_p &&
                              (a.edge.target < b.edge.target ||
                               (a.edge.target == b.edge.target && a.edge.source < b.edge.source)));
        CHECK(ordered);
    }
    bool found = false;
    for (const auto& r : report.rows) {
        CHECK(r.edge.target != r.edge.source);
        CHECK(r.navar_score == scores.at(r.edge.target, r.edge.source));
        if (r.edge.target == 1 && r.edge.source == 2) {
            found = true;
            CHECK(r.test.degenerate);
            CHECK_FALSE(r.necessary);
            CHECK(r.raw_p == 1.0);
        }
        CHECK(r.test.n_obs == 40);
    }
    CHECK(found);

    const std::string csv = report_to_csv(report);
    CHECK(csv.rfind(std::string(kReportColumns) + "\n", 0) == 0);
    CHECK(csv.find("x1,x2,0,") != std::string::npos);
    CHECK(csv.find(",,,1.000000000e+00,false,true,") != std::string::npos);

    const auto serial = screen_all_edges_serial(m, d, split, scores, opts);
    CHECK(report_to_csv(serial) == csv);
    CHECK(report_to_csv(screen_all_edges(m, d, split, scores, opts)) == csv);

    const auto back = report_from_json(report_to_json(report));
    CHECK(report_to_json(back) == report_to_json(report));

    SUBCASE("two variables give two rows") {
        const auto d2 = random_panel(3, 15, 2, 1);
        const auto m2 = random_model(2, 2, 3, 2);
        const auto s2 = score_model(m2, d2, tail_split(d2, 4));
        CHECK(screen_all_edges(m2, d2, tail_split(d2, 4), s2, opts).rows.size() == 2);
    }
    SUBCASE("raw units rescale loss columns only") {
        auto scaled = m;
        scaled.set_norm_stats({var_names(4), {0, 0, 0, 0}, {2.0, 3.0, 0.5, 1.0}});
        ScreenOptions raw = opts;
        raw.raw_units = true;
        const auto a = screen_all_edges(scaled, d, split, scores, opts);
        const auto b = screen_all_edges(scaled, d, split, scores, raw);
        for (std::size_t k = 0; k < a.rows.size(); ++k) {
            const double s = scaled.norm_stats().std[a.rows[k].edge.target];
            CHECK(b.rows[k].mean_loss_full == doctest::Approx(a.rows[k].mean_loss_full * s * s).epsilon(1e-14));
            CHECK(b.rows[k].adjusted_p == a.rows[k].adjusted_p);
        }
    }
    SUBCASE("edge subset") {
        ScreenOptions one = opts;
        one.edges = {{0, 3}};
        const auto r = screen_all_edges(m, d, split, scores, one);
        REQUIRE(r.rows.size() == 1);
        CHECK(r.rows[0].adjusted_p == r.rows[0].raw_p);
    }
}
