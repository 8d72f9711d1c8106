#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "analysis.hpp"
#include "errors.hpp"
#include "evaluate.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "transfer_lab.hpp"

using namespace nastl;
namespace fs = std::filesystem;

namespace {

TrainingCurve curve(const std::vector<std::pair<int64_t, double>>& pts) {
    TrainingCurve c;
    for (auto [s, v] : pts) {
        c.points.push_back({s, s / 100.0, v});
    }
    return c;
}

TrainingCurve ramp(int n, int64_t dstep, double slope, double offset = 0.0) {
    TrainingCurve c;
    for (int i = 0; i < n; ++i) {
        const int64_t s = i * dstep;
        c.points.push_back({s, 0.5 * i, offset + slope * s});
    }
    return c;
}

std::vector<double> randn(std::mt19937_64& g, size_t n, double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> d(mean, sd);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = d(g);
    }
    return v;
}

}  // namespace

TEST_CASE("kendall tau matches the quadratic oracle") {
    std::mt19937_64 g(11);
    std::uniform_int_distribution<int> small(0, 6);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> x(50), y(50);
        for (size_t i = 0; i < x.size(); ++i) {
            // many ties on half the repetitions
            x[i] = rep % 2 ? small(g) : std::normal_distribution<double>()(g);
            y[i] = rep % 2 ? small(g) + 0.5 * x[i] : x[i] + std::normal_distribution<double>()(g);
        }
        CHECK(kendall_tau(x, y) == doctest::Approx(oracles::kendall_tau_b(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("kendall tau identities") {
    std::mt19937_64 g(3);
    const auto x = randn(g, 200);
    auto rev = x;
    for (auto& v : rev) {
        v = -v;
    }
    const auto y = randn(g, 200);
    CHECK(kendall_tau(x, x) == doctest::Approx(1.0));
    CHECK(kendall_tau(x, rev) == doctest::Approx(-1.0));
    CHECK(kendall_tau(x, y) == doctest::Approx(kendall_tau(y, x)));
    CHECK(kendall_tau(x, rev) == doctest::Approx(-kendall_tau(x, x)));
    const std::vector<double> a{1, 2, 3}, b{3, 1, 2};
    CHECK(kendall_tau(a, b) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("moving average") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    CHECK(moving_average(v, 2) == std::vector<double>{1.5, 2.5, 3.5, 4.5});
    CHECK(moving_average(v, 5) == std::vector<double>{3.0});
    CHECK(moving_average(v, 1) == v);
    CHECK_THROWS_AS(moving_average(v, 6), Error);
    CHECK_THROWS_AS(moving_average(v, 0), Error);
    std::mt19937_64 g(8);
    const auto r = randn(g, 300);
    const auto got = moving_average(r);
    const auto want = oracles::moving_average(r, 16);
    REQUIRE(got.size() == 285);
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("bootstrap interval") {
    const std::vector<double> same(10, 0.25);
    const auto iv = bootstrap_ci(same);
    CHECK(iv.mean == 0.25);
    CHECK(iv.ci_low == 0.25);
    CHECK(iv.ci_high == 0.25);

    std::mt19937_64 g(21);
    const auto v = randn(g, 400, 1.0, 2.0);
    const auto a = bootstrap_ci(v, 0.95, 10000, 4);
    const auto b = bootstrap_ci(v, 0.95, 10000, 4);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
    CHECK(a.ci_low < a.mean);
    CHECK(a.mean < a.ci_high);
    const double half = 1.96 * sample_std(v) / std::sqrt(double(v.size()));
    CHECK((a.ci_high - a.ci_low) / 2 == doctest::Approx(half).epsilon(0.15));
    CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{1.0}), Error);
    CHECK_THROWS_AS(bootstrap_ci(v, 1.0), Error);
}

TEST_CASE("crossover: worked examples") {
    const auto c = curve({{100, 0.2}, {200, 0.4}, {300, 0.6}});
    const auto hit = crossover_point(c, 0.4, 1);
    REQUIRE(hit.has_value());
    CHECK(hit->step == 200);
    CHECK(hit->walltime_s == doctest::Approx(2.0));
    CHECK_FALSE(crossover_point(c, 0.7, 1).has_value());
    // smoothed over 2: 0.3 @200, 0.5 @300
    CHECK(crossover_point(c, 0.4, 2)->step == 300);
    // shorter than the kernel: never observable
    CHECK_FALSE(crossover_point(c, 0.0, 4).has_value());
}

TEST_CASE("crossover: planted ramp against a direct scan") {
    const auto c = ramp(100, 50, 1e-4);
    for (double level : {0.0, 0.05, 0.1, 0.2, 0.3, 0.4}) {
        std::vector<double> vals;
        for (const auto& p : c.points) {
            vals.push_back(p.value);
        }
        const auto sm = oracles::moving_average(vals, 16);
        std::optional<int64_t> want;
        for (size_t i = 0; i < sm.size(); ++i) {
            if (sm[i] >= level) {
                want = c.points[i + 15].step;
                break;
            }
        }
        const auto got = crossover_point(c, level);
        REQUIRE(got.has_value() == want.has_value());
        if (want) {
            CHECK(got->step == *want);
        }
    }
}

TEST_CASE("crossover is monotone in the reference level") {
    std::mt19937_64 g(4);
    TrainingCurve c;
    double v = 0.0;
    for (int i = 0; i < 200; ++i) {
        v += std::normal_distribution<double>(0.01, 0.05)(g);
        c.points.push_back({i * 10, i * 0.1, v});
    }
    int64_t prev = -1;
    for (double level = -0.5; level < 3.0; level += 0.05) {
        const auto x = crossover_point(c, level);
        if (!x) {
            prev = INT64_MAX;
            continue;
        }
        CHECK(x->step >= prev);
        prev = x->step;
    }
}

TEST_CASE("time to equivalence") {
    const std::vector<TrainingCurve> transfer{ramp(60, 100, 1e-3, 0.1), ramp(60, 100, 1e-3, 0.2)};
    const std::vector<TrainingCurve> reference{ramp(60, 100, 5e-4), ramp(60, 100, 8e-4)};
    const auto rep = time_to_equivalence(transfer, reference);
    CHECK(rep.pair_count == 4);
    CHECK(rep.pairs.size() == 4);
    CHECK(rep.crossed_count == 4);
    for (size_t i = 0; i < 4; ++i) {
        const double level = reference_level(reference[i % 2], ReferenceMode::final_value);
        CHECK(rep.pairs[i]->step == crossover_point(transfer[i / 2], level)->step);
    }
    CHECK(rep.steps.ci_low <= rep.steps.mean);
    CHECK(rep.steps.mean <= rep.steps.ci_high);

    // an identical curve reaches its own final smoothed value at the last step
    const auto self = time_to_equivalence({reference[0]}, {reference[0]});
    CHECK(self.crossed_count == 1);
    CHECK(self.pairs[0]->step == reference[0].points.back().step);

    const auto never = time_to_equivalence({ramp(60, 100, 0.0)}, {reference[1]});
    CHECK(never.crossed_count == 0);
    CHECK(std::isnan(never.steps.mean));

    const auto hump = curve({{0, 0.0}, {1, 1.0}, {2, 0.5}});
    CHECK(reference_level(hump, ReferenceMode::best_value, 1) == 1.0);
    CHECK(reference_level(hump, ReferenceMode::final_value, 1) == 0.5);
}

TEST_CASE("curve from events") {
    std::vector<RunEvent> ev{{"config", 0, 0.0, {}},
                             {"eval", 0, 0.1, {{"mean", 0.3}}},
                             {"train", 10, 0.2, {{"loss", 1.0}}},
                             {"eval", 10, 0.4, {{"mean", 0.5}}}};
    const auto c = curve_from_events(ev);
    REQUIRE(c.points.size() == 2);
    CHECK(c.points[1].step == 10);
    CHECK(c.points[1].walltime_s == 0.4);
    CHECK(c.points[1].value == 0.5);
}

TEST_CASE("task correlation matrix") {
    const auto bench = testing::default_bench(2);
    const std::vector<std::string> tasks{"class_object", "room_layout", "autoencoder", "segmentsemantic"};
    const auto m = task_correlation_matrix(*bench, tasks);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(m[i][i] == doctest::Approx(1.0));
        for (size_t j = 0; j < 4; ++j) {
            CHECK(m[i][j] == doctest::Approx(m[j][i]));
        }
    }
    CHECK(std::abs(m[0][1] - 0.5) < 0.05);
    CHECK(std::abs(m[0][2] - 0.3) < 0.05);
    CHECK(std::abs(m[0][3] - 0.4) < 0.05);
}

TEST_CASE("performance matrix, CSV and gaps") {
    testing::TempDir d("matrix");
    const fs::path root = d.path();
    Manifest m;
    m.plan = {{"tasks", {"a", "b"}}};
    auto put = [&](uint64_t seed, const std::string& s, const std::string& t, const std::string& regime,
                   double mean) {
        ManifestCell c;
        c.seed = seed;
        c.source = s;
        c.target = t;
        c.regime = regime;
        c.status = "complete";
        c.dir = cell_dir(seed, s, t, regime).generic_string();
        c.eval = c.dir + "/eval.json";
        c.runlog = c.dir + "/runlog.jsonl";
        fs::create_directories(root / c.dir);
        EvalReport r = summarize({mean, mean}, 0);
        std::ofstream(root / c.eval) << r.to_json().dump();
        m.cells.push_back(c);
    };
    put(1, "a", "a", "pretrain", 0.5);
    put(2, "a", "a", "pretrain", 0.7);
    put(1, "b", "b", "pretrain", 0.4);
    put(1, "a", "b", "retrain", 0.45);
    put(2, "a", "b", "retrain", 0.55);
    put(1, "b", "a", "retrain", 0.6);
    std::ofstream(root / "manifest.json") << m.to_json().dump();

    const auto rep = performance_matrix(root, "retrain", 3);
    CHECK(rep.tasks == std::vector<std::string>{"a", "b"});
    REQUIRE(rep.cells.size() == 4);
    CHECK(rep.at("a", "a").n == 2);
    CHECK(rep.at("a", "a").mean == doctest::Approx(0.6));
    CHECK(rep.at("a", "a").std == doctest::Approx(std::sqrt(0.02)));
    CHECK(rep.at("b", "a").n == 1);
    CHECK(rep.at("b", "a").std == 0.0);
    CHECK(rep.at("b", "a").ci_low == rep.at("b", "a").ci_high);
    CHECK(rep.at("a", "b").mean == doctest::Approx(0.5));
    // seed 2 never trained b from scratch, nor b -> a
    CHECK(rep.missing.size() == 2);
    CHECK_THROWS_AS(rep.at("a", "c"), Error);

    const auto csv = matrix_to_csv(rep);
    CHECK(csv.rfind("source,target,mean,std,ci_low,ci_high,n\n", 0) == 0);
    const auto back = matrix_from_csv(csv);
    CHECK(matrix_to_csv(back) == csv);
    REQUIRE(back.cells.size() == rep.cells.size());
    for (size_t i = 0; i < rep.cells.size(); ++i) {
        CHECK(back.cells[i].mean == rep.cells[i].mean);
        CHECK(back.cells[i].ci_high == rep.cells[i].ci_high);
    }
    CHECK_THROWS_AS(matrix_from_csv("a,b\n"), Error);
    CHECK_THROWS_AS(matrix_from_csv("source,target,mean,std,ci_low,ci_high,n\na,b,x,0,0,0,1\n"), Error);

    const auto svg = matrix_to_svg(rep, "retrain");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("missing") == std::string::npos);

    const auto cross = crossover_csv(root, "retrain");
    CHECK(cross.find("missing runs") != std::string::npos);
    CHECK_THROWS_AS(performance_matrix(root, "bogus"), Error);
}
