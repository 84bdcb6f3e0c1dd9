#include "support.hpp"

#include "navar/model.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

using namespace navar;
using namespace navar::testing;

namespace {

LagWindow make_window(std::size_t n, std::size_t lags, std::vector<double> lagged,
                      std::vector<double> target = {}) {
    LagWindow w;
    w.num_vars = n;
    w.lags = lags;
    w.lagged = std::move(lagged);
    w.target = target.empty() ? std::vector<double>(n, 0.0) : std::move(target);
    return w;
}

// Straight-line re-evaluation in reverse hidden order.
double naive_eval(const NetView& net, double x) {
    double out = net.b2;
    for (std::size_t k = net.w1.size(); k-- > 0;) {
        out += net.w2[k] * std::max(0.0, net.w1[k] * x + net.b1[k]);
    }
    return out;
}

void set_net(NavarModel& m, std::size_t net, std::vector<double> w1, std::vector<double> b1,
             std::vector<double> w2, double b2) {
    auto& p = m.params();
    const std::size_t h = m.hidden();
    for (std::size_t k = 0; k < h; ++k) {
        p.w1[net * h + k] = w1[k];
        p.b1[net * h + k] = b1[k];
        p.w2[net * h + k] = w2[k];
    }
    p.b2[net] = b2;
}

}  // namespace

TEST_CASE("eval_contribution hand cases") {
    ContributionNet zero{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, 0.0};
    CHECK(eval_contribution(zero.view(), 3.7) == 0.0);
    CHECK(eval_contribution(zero.view(), -12.0) == 0.0);

    ContributionNet one{{1.0}, {0.0}, {2.0}, 0.5};
    CHECK(eval_contribution(one.view(), 3.0) == 6.5);
    CHECK(eval_contribution(one.view(), -3.0) == 0.5);

    CHECK_THROWS_AS((void)eval_contribution(one.view(), NAN), std::invalid_argument);
    CHECK_THROWS_AS((void)eval_contribution(one.view(), INFINITY), std::invalid_argument);
}

TEST_CASE("eval_contribution matches an independent re-evaluation to 1e-12") {
    rng::Stream s(17);
    for (int trial = 0; trial < 200; ++trial) {
        ContributionNet net;
        for (int k = 0; k < 32; ++k) {
            net.w1.push_back(s.uniform(-2, 2));
            net.b1.push_back(s.uniform(-2, 2));
            net.w2.push_back(s.uniform(-2, 2));
        }
        net.b2 = s.uniform(-1, 1);
        const double x = s.uniform(-4, 4);
        CHECK(std::fabs(eval_contribution(net.view(), x) - naive_eval(net.view(), x)) < 1e-12);
    }
}

TEST_CASE("zero nets predict the target biases") {
    auto m = zero_model(3, 2, 4);
    m.params().target_bias = {0.25, -1.5, 3.0};
    const auto w = make_window(3, 2, {1, 2, 3, 4, 5, 6});
    CHECK(predict(m, w) == std::vector<double>{0.25, -1.5, 3.0});
}

TEST_CASE("N=2, p=1 hand-built model") {
    auto m = zero_model(2, 1, 2);
    // f_00(x) = relu(x) - relu(-x) = x, f_01(x) = 0.5 relu(2x - 1), f_10(x) = relu(x) + 1, f_11 = -0.25
    set_net(m, m.net_index(0, 0, 1), {1, -1}, {0, 0}, {1, -1}, 0.0);
    set_net(m, m.net_index(0, 1, 1), {2, 0}, {-1, 0}, {0.5, 0}, 0.0);
    set_net(m, m.net_index(1, 0, 1), {1, 0}, {0, 0}, {1, 0}, 1.0);
    set_net(m, m.net_index(1, 1, 1), {0, 0}, {0, 0}, {0, 0}, -0.25);
    m.params().target_bias = {0.1, -0.2};

    const auto w = make_window(2, 1, {-0.75, 2.0});
    const auto y = predict(m, w);
    CHECK(std::fabs(y[0] - (0.1 + -0.75 + 0.5 * 3.0)) < 1e-12);
    CHECK(std::fabs(y[1] - (-0.2 + 0.0 + 1.0 - 0.25)) < 1e-12);

    const auto masked = predict(m, w, EdgeMask{0, 1});
    CHECK(std::fabs(masked[0] - (0.1 - 0.75)) < 1e-12);
    CHECK(masked[1] == y[1]);
}

TEST_CASE("property: mask linearity and additivity on random models") {
    rng::Stream s(5);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 2 + s.below(4);
        const std::size_t lags = 1 + s.below(4);
        const auto m = random_model(n, lags, 8, 300 + trial);
        std::vector<double> lagged(n * lags);
        for (double& v : lagged) v = s.normal();
        const auto w = make_window(n, lags, lagged);
        const auto full = predict(m, w);
        const std::size_t ti = s.below(n);
        const std::size_t sj = s.below(n);
        const auto masked = predict(m, w, EdgeMask{ti, sj});
        for (std::size_t i = 0; i < n; ++i) {
            if (i != ti) {
                CHECK(masked[i] == full[i]);
                continue;
            }
            double removed = 0.0;
            for (std::size_t l = 1; l <= lags; ++l) removed += eval_contribution(m.net(ti, sj, l), w.input(sj, l));
            CHECK(std::fabs(masked[i] - (full[i] - removed)) < 1e-12);
        }
        for (std::size_t i = 0; i < n; ++i) CHECK(predict_target(m, w, i) == full[i]);
    }
}

TEST_CASE("contribution_series decomposes predict exactly") {
    const auto d = random_panel(3, 12, 3, 21);
    const auto windows = all_windows(d, 2);

    SUBCASE("zero model gives an all-zero table") {
        const auto t = contribution_series(zero_model(3, 2, 4), windows, 1);
        CHECK(t.num_windows() == windows.size());
        for (double v : t.values) CHECK(v == 0.0);
    }
    SUBCASE("row sums plus bias reproduce predict to 1e-10") {
        const auto m = random_model(3, 2, 6, 2);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto t = contribution_series(m, windows, i);
            CHECK(t.bias == m.params().target_bias[i]);
            for (std::size_t w = 0; w < windows.size(); ++w) {
                double y = t.bias;
                for (std::size_t j = 0; j < 3; ++j)
                    for (std::size_t l = 1; l <= 2; ++l) y += t.at(w, j, l);
                CHECK(std::fabs(y - predict_target(m, windows[w], i)) < 1e-10);
            }
        }
    }
    SUBCASE("source ranking by table variance matches the score ranking") {
        const auto m = random_model(3, 2, 6, 9);
        const auto scores = causal_scores(m, windows);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto t = contribution_series(m, windows, i);
            std::vector<double> amp(3, 0.0);
            for (std::size_t j = 0; j < 3; ++j) {
                for (std::size_t l = 1; l <= 2; ++l) {
                    double mean = 0.0;
                    for (std::size_t w = 0; w < t.num_windows(); ++w) mean += t.at(w, j, l);
                    mean /= static_cast<double>(t.num_windows());
                    double v = 0.0;
                    for (std::size_t w = 0; w < t.num_windows(); ++w) v += (t.at(w, j, l) - mean) * (t.at(w, j, l) - mean);
                    amp[j] += v / static_cast<double>(t.num_windows());
                }
            }
            std::vector<std::size_t> a{0, 1, 2}, b{0, 1, 2};
            std::sort(a.begin(), a.end(), [&](auto x, auto y) { return amp[x] > amp[y]; });
            std::sort(b.begin(), b.end(), [&](auto x, auto y) { return scores.at(i, x) > scores.at(i, y); });
            CHECK(a == b);
        }
    }
}

TEST_CASE("causal score hand cases") {
    auto m = zero_model(2, 1, 1);
    // f_01(x) = relu(x), f_10 constant 3.
    set_net(m, m.net_index(0, 1, 1), {1}, {0}, {1}, 0.0);
    set_net(m, m.net_index(1, 0, 1), {0}, {0}, {0}, 3.0);
    std::vector<LagWindow> windows{make_window(2, 1, {5.0, 0.0}), make_window(2, 1, {-4.0, 2.0})};

    const auto var = causal_scores(m, windows, ScoreStatistic::Variance);
    CHECK(var.at(0, 1) == 1.0);
    CHECK(var.at(1, 0) == 0.0);
    const auto sd = causal_scores(m, windows, ScoreStatistic::Std);
    CHECK(sd.at(0, 1) == 1.0);

    CHECK_THROWS_AS((void)causal_scores(m, std::span<const LagWindow>(windows).first(1)), std::invalid_argument);
}

TEST_CASE("causal scores match a Welford oracle, N=3, p=2, T=50") {
    const auto d = random_panel(1, 50, 3, 77);
    const auto windows = all_windows(d, 2);
    const auto m = random_model(3, 2, 8, 4);
    const auto var = causal_scores(m, windows, ScoreStatistic::Variance);
    const auto sd = causal_scores(m, windows, ScoreStatistic::Std);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s_var = 0.0, s_sd = 0.0;
            for (std::size_t l = 1; l <= 2; ++l) {
                double mean = 0.0, m2 = 0.0;
                std::size_t n = 0;
                for (const auto& w : windows) {
                    const double f = naive_eval(m.net(i, j, l), w.input(j, l));
                    ++n;
                    const double delta = f - mean;
                    mean += delta / static_cast<double>(n);
                    m2 += delta * (f - mean);
                }
                s_var += m2 / static_cast<double>(n);
                s_sd += std::sqrt(m2 / static_cast<double>(n));
            }
            CHECK(std::fabs(var.at(i, j) - s_var) < 1e-10);
            CHECK(std::fabs(sd.at(i, j) - s_sd) < 1e-10);
            CHECK(var.at(i, j) >= 0.0);
        }
    }
}

TEST_CASE("std on a single-lag model is the square root of variance") {
    const auto d = random_panel(2, 20, 3, 8);
    const auto windows = all_windows(d, 1);
    const auto m = random_model(3, 1, 5, 12);
    const auto var = causal_scores(m, windows, ScoreStatistic::Variance);
    const auto sd = causal_scores(m, windows, ScoreStatistic::Std);
    for (std::size_t k = 0; k < 9; ++k) CHECK(sd.scores[k] == doctest::Approx(std::sqrt(var.scores[k])).epsilon(1e-14));
}

TEST_CASE("window order does not change scores beyond 1e-12") {
    const auto d = random_panel(4, 15, 3, 31);
    auto windows = all_windows(d, 3);
    const auto m = random_model(3, 3, 8, 6);
    const auto before = causal_scores(m, windows);
    rng::Stream s(3);
    for (std::size_t k = windows.size(); k > 1; --k) std::swap(windows[k - 1], windows[s.below(k)]);
    const auto after = causal_scores(m, windows);
    for (std::size_t k = 0; k < 9; ++k) CHECK(std::fabs(before.scores[k] - after.scores[k]) < 1e-12);
}

TEST_CASE("zeroed diagonal policy") {
    const auto d = random_panel(2, 15, 3, 1);
    const auto windows = all_windows(d, 2);
    const auto m = random_model(3, 2, 4, 2);
    const auto raw = causal_scores(m, windows, ScoreStatistic::Variance, DiagonalPolicy::Raw);
    const auto zeroed = causal_scores(m, windows, ScoreStatistic::Variance, DiagonalPolicy::Zeroed);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(raw.at(i, i) > 0.0);
        CHECK(zeroed.at(i, i) == 0.0);
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) CHECK(zeroed.at(i, j) == raw.at(i, j));
    }
    CHECK(parse_diagonal_policy("zeroed") == DiagonalPolicy::Zeroed);
    CHECK(parse_score_statistic("std") == ScoreStatistic::Std);
    CHECK_THROWS_AS((void)parse_score_statistic("mad"), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    auto m = random_model(4, 3, 8, 42, 3.0);
    m.params().flat(5) = 0.1 + 0.2;  // not representable in 15 digits
    m.params().flat(6) = 1e-300;
    m.params().flat(7) = -0.0;
    NormalizationStats stats{var_names(4), {0.5, -1.0, 2.0, 1e-7}, {1.0 / 3.0, 2.0, 0.7, 5.5}};
    m.set_norm_stats(stats);
    const std::string text = serialize_model(m);
    const auto back = model_from_json(nlohmann::json::parse(text));
    CHECK(back == m);
    CHECK(std::signbit(back.params().flat(7)));
    CHECK(serialize_model(back) == text);

    auto j = nlohmann::json::parse(text);
    j["version"] = 99;
    CHECK_THROWS_AS((void)model_from_json(j), DataError);
    CHECK_THROWS_AS((void)load_model("/nonexistent/ckpt.json"), DataError);
}

TEST_CASE("score matrix export has variable names as header row and column") {
    CausalScoreMatrix s{2, ScoreStatistic::Variance, DiagonalPolicy::Raw, {0.5, 0.25, 0.125, 1.0}};
    const std::string csv = scores_to_csv(s, {"a", "b"});
    CHECK(csv == "target,a,b\na,0.5,0.25\nb,0.125,1\n");
    const auto j = scores_to_json(s, {"a", "b"});
    CHECK(j["variables"] == nlohmann::json::array({"a", "b"}));
    CHECK(j["scores"][1][0].get<double>() == 0.125);
}
