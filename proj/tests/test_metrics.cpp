#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "qbcat/metrics.hpp"
#include "qbcat/rng.hpp"

using namespace qbcat;

namespace {

// O(n^2) pair-counting oracle: P(pos above neg) + half ties.
double auroc_bruteforce(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            ++pairs;
            if (s[i] > s[j])
                num += 1.0;
            else if (s[i] == s[j])
                num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

// Integration of the precision-recall steps over the stably ranked list.
double ap_bruteforce(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    double n_pos = 0;
    for (int v : y) n_pos += v;
    double ap = 0.0, tp = 0.0, prev_recall = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (y[order[r]]) tp += 1.0;
        double recall = tp / n_pos;
        double precision = tp / static_cast<double>(r + 1);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

std::pair<std::vector<double>, std::vector<int>> random_instance(Rng& rng, std::size_t max_n,
                                                                 bool with_ties) {
    std::size_t n = 2 + rng.below(max_n - 1);
    std::vector<double> s(n);
    std::vector<int> y(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = with_ties ? static_cast<double>(rng.below(5)) : rng.normal();
        y[i] = rng.below(2) ? 1 : 0;
        (y[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos) y[0] = 1;
    if (!has_neg) y[n - 1] = 0;
    return {s, y};
}

}  // namespace

TEST_CASE("auroc_micro fixed cases") {
    CHECK(*auroc_micro({0.9, 0.1}, {1, 0}) == doctest::Approx(1.0));
    CHECK(*auroc_micro({0.9, 0.1}, {0, 1}) == doctest::Approx(0.0));
    CHECK(*auroc_micro({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5));
    CHECK_FALSE(auroc_micro({0.5, 0.4}, {1, 1}).has_value());
    CHECK_FALSE(auroc_micro({0.5, 0.4}, {0, 0}).has_value());
}

TEST_CASE("auroc_micro matches the pair-counting oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        auto [s, y] = random_instance(rng, 50, trial % 2 == 0);
        CHECK(std::abs(*auroc_micro(s, y) - auroc_bruteforce(s, y)) < 1e-9);
    }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
    Rng rng(43);
    auto [s, y] = random_instance(rng, 40, false);
    double base = *auroc_micro(s, y);
    std::vector<double> exp_s(s.size()), affine_s(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        exp_s[i] = std::exp(s[i]);
        affine_s[i] = 2.0 * s[i] + 3.0;
    }
    CHECK(*auroc_micro(exp_s, y) == doctest::Approx(base).epsilon(1e-12));
    CHECK(*auroc_micro(affine_s, y) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("auroc_samplewise averages evaluable questions and skips the rest") {
    std::vector<ScoredSet> qs;
    qs.push_back({{0.9, 0.2, 0.1}, {1, 0, 0}});  // answer first -> 1.0
    qs.push_back({{0.3, 0.8}, {1, 0}});          // answer second of two -> 0.0
    qs.push_back({{0.5}, {1}});                  // skipped: single candidate
    qs.push_back({{0.5, 0.1}, {1, 1}});          // skipped: two positives
    auto r = auroc_samplewise(qs);
    REQUIRE(r.has_value());
    CHECK(r->evaluated == 2);
    CHECK(r->skipped == 2);
    CHECK(r->value == doctest::Approx(0.5));

    std::vector<ScoredSet> none = {{{0.5}, {1}}};
    CHECK_FALSE(auroc_samplewise(none).has_value());
}

TEST_CASE("samplewise mean matches per-question brute force") {
    Rng rng(44);
    std::vector<ScoredSet> qs;
    double want = 0.0;
    int n_eval = 0;
    for (int i = 0; i < 40; ++i) {
        std::size_t n = 2 + rng.below(8);
        ScoredSet q;
        q.scores.resize(n);
        q.labels.assign(n, 0);
        for (auto& v : q.scores) v = rng.normal();
        q.labels[rng.below(n)] = 1;
        std::vector<int> y = q.labels;
        want += auroc_bruteforce(q.scores, y);
        ++n_eval;
        qs.push_back(std::move(q));
    }
    auto r = auroc_samplewise(qs);
    CHECK(r->value == doctest::Approx(want / n_eval).epsilon(1e-12));
}

TEST_CASE("ap fixed cases") {
    std::vector<double> s10(10);
    std::vector<int> y10(10, 0);
    for (int i = 0; i < 10; ++i) s10[i] = 1.0 - 0.1 * i;
    y10[0] = 1;
    CHECK(*ap_micro(s10, y10) == doctest::Approx(1.0));

    CHECK(*ap_micro({0.9, 0.1}, {0, 1}) == doctest::Approx(0.5));
    CHECK_FALSE(ap_micro({0.9, 0.1}, {0, 0}).has_value());
}

TEST_CASE("ap matches the precision-recall integration oracle") {
    Rng rng(45);
    for (int trial = 0; trial < 300; ++trial) {
        auto [s, y] = random_instance(rng, 50, trial % 2 == 0);
        CHECK(std::abs(*ap_micro(s, y) - ap_bruteforce(s, y)) < 1e-9);
    }
}

TEST_CASE("metric values stay inside [0, 1]") {
    Rng rng(46);
    for (int trial = 0; trial < 100; ++trial) {
        auto [s, y] = random_instance(rng, 30, true);
        double a = *auroc_micro(s, y);
        double p = *ap_micro(s, y);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("micro equals sample-wise for a single question") {
    Rng rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 2 + rng.below(10);
        ScoredSet q;
        q.scores.resize(n);
        q.labels.assign(n, 0);
        for (auto& v : q.scores) v = rng.normal();
        q.labels[rng.below(n)] = 1;
        CHECK(*auroc_micro(q.scores, q.labels) ==
              doctest::Approx(auroc_samplewise({q})->value).epsilon(1e-12));
        CHECK(*ap_micro(q.scores, q.labels) ==
              doctest::Approx(ap_samplewise({q})->value).epsilon(1e-12));
    }
}

TEST_CASE("omega formula") {
    CHECK(omega({0.8, 0.9}, 0.9) == doctest::Approx(0.95));
    CHECK(omega({0.7, 0.7, 0.7}, 0.7) == doctest::Approx(1.0));
    CHECK(omega({0.8, 0.8}, 0.7) == doctest::Approx(1.1));
    CHECK_THROWS(omega({}, 0.5));
}

TEST_CASE("omega is unbounded above on synthetic sequences") {
    Rng rng(48);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> g(5);
        for (auto& v : g) v = rng.real01() * 3.0;
        double off = rng.real01();
        double expect = 0.0;
        for (double v : g) expect += 1.0 - (off - v);
        CHECK(omega(g, off) == doctest::Approx(expect / 5.0).epsilon(1e-12));
    }
}

TEST_CASE("metric csv round-trips") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "qbcat_metrics_csv";
    fs::create_directories(dir);
    std::vector<MetricRow> rows;
    MetricRow r;
    r.seed = 3;
    r.sampler = "Random";
    r.increment = 2;
    r.question_type = "SPAA";
    r.split = SplitKind::Tail;
    r.metric = MetricKind::MAP;
    r.value = 0.123456789;
    rows.push_back(r);
    write_metrics_csv((dir / "m.csv").string(), rows);
    auto back = read_metrics_csv((dir / "m.csv").string());
    REQUIRE(back.size() == 1);
    CHECK(back[0].seed == 3);
    CHECK(back[0].sampler == "Random");
    CHECK(back[0].increment == 2);
    CHECK(back[0].split == SplitKind::Tail);
    CHECK(back[0].metric == MetricKind::MAP);
    CHECK(back[0].value == doctest::Approx(0.123456789).epsilon(1e-9));
    fs::remove_all(dir);
}
