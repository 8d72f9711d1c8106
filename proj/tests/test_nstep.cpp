#include <doctest.h>

#include "errors.hpp"
#include "nstep_cases.hpp"
#include "oracles.hpp"

using namespace nastl;
using nstep_cases::obs_tag;
using nstep_cases::step;
using nstep_cases::table;

namespace {

double one_target(const QFunction& online, const QFunction& target, const NStepSample& s, double discount) {
    const NStepSample* p = &s;
    return compute_targets(online, target, std::span<const NStepSample* const>(&p, 1), discount)[0];
}

}  // namespace

TEST_CASE("worked examples are exact") {
    for (const auto& w : nstep_cases::worked_examples()) {
        INFO(w.name);
        CHECK(w.got == w.expected);
    }
    CHECK(nstep_cases::worked_examples()[0].got == doctest::Approx(2.71).epsilon(1e-15));
    CHECK(nstep_cases::worked_examples()[1].got == doctest::Approx(4.168).epsilon(1e-15));
}

TEST_CASE("full window fields") {
    std::vector<Transition> tr{step(0, 1, false, false, 7), step(1, 1, false, false, 8), step(2, 1, false, false, 9)};
    tr[0].action = 1;
    const auto s = accumulate_nstep(tr, 3, 0.9);
    REQUIRE(s.size() == 1);
    CHECK(s[0].m == 3);
    CHECK(s[0].bootstrap_needed);
    CHECK(s[0].action == 1);
    CHECK(s[0].bootstrap_obs == obs_tag(9, 2));
}

TEST_CASE("agent termination truncates without bootstrap") {
    std::vector<Transition> tr{step(0, 0.5, true, false)};
    const auto s = accumulate_nstep(tr, 3, 0.9);
    REQUIRE(s.size() == 1);
    CHECK(s[0].return_n == 0.5);
    CHECK(s[0].m == 1);
    CHECK_FALSE(s[0].bootstrap_needed);
    const auto q = table({{1, {100.0, 100.0}}});
    CHECK(one_target(q, q, s[0], 0.9) == 0.5);
}

TEST_CASE("timeout truncates and still bootstraps") {
    std::vector<Transition> tr{step(0, 0.2, false, false), step(1, 0.3, true, true)};
    const auto s = accumulate_nstep(tr, 3, 1.0);
    REQUIRE(s.size() == 2);
    CHECK(s[0].return_n == 0.5);
    CHECK(s[0].m == 2);
    CHECK(s[0].bootstrap_needed);
    CHECK(s[1].return_n == 0.3);
    CHECK(s[1].m == 1);
    CHECK(s[1].bootstrap_needed);
}

TEST_CASE("sliding windows over a longer episode") {
    const double r[] = {0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<Transition> tr;
    for (int t = 0; t < 5; ++t) tr.push_back(step(t, r[t], t == 4, false));
    const auto s = accumulate_nstep(tr, 3, 0.5);
    REQUIRE(s.size() == 5);
    const int m[] = {3, 3, 3, 2, 1};
    for (int i = 0; i < 5; ++i) {
        double ret = 0, pw = 1;
        for (int k = 0; k < m[i]; ++k) {
            ret += pw * r[i + k];
            pw *= 0.5;
        }
        CHECK(s[i].m == m[i]);
        CHECK(s[i].return_n == ret);
        CHECK(s[i].bootstrap_needed == (i + m[i] < 5));
    }
}

TEST_CASE("out-of-order streams are rejected") {
    NStepAccumulator acc(3, 0.9);
    acc.push(step(0, 1, false, false));
    CHECK_THROWS_AS(acc.push(step(2, 1, false, false)), Error);
    NStepAccumulator acc2(3, 0.9);
    CHECK_THROWS_AS(acc2.push(step(0, 1, false, true)), Error);
    CHECK_THROWS_AS(NStepAccumulator(0, 0.9), Error);
    CHECK_THROWS_AS(NStepAccumulator(3, 0.0), Error);
}

TEST_CASE("double Q: online selects, target evaluates") {
    std::vector<Transition> tr{step(0, 0.0, false, false), step(1, 0.0, false, false), step(2, 0.0, false, false)};
    const auto s = accumulate_nstep(tr, 3, 1.0);
    const auto online = table({{1, {1.0, 2.0}}});
    const auto target = table({{1, {5.0, 0.0}}});
    CHECK(one_target(online, target, s[0], 1.0) == 0.0);
    CHECK(one_target(target, online, s[0], 1.0) == 1.0);
}

TEST_CASE("masked actions are excluded from the argmax") {
    std::vector<Transition> tr{step(0, 0.0, false, false)};
    tr[0].next_obs = obs_tag(1, 3);
    tr[0].next_obs.mask = {1, 0, 1};
    const auto s = accumulate_nstep(std::span(tr).first(1), 1, 1.0);
    const auto q = table({{1, {1.0, 9.0, 3.0}}});
    CHECK(one_target(q, q, s[0], 1.0) == 3.0);
}

TEST_CASE("online equal to target reduces to the n-step max-Q target") {
    const auto desc = SearchSpaceDescriptor::micro_cell();
    const ObservationEncoder enc(desc, 8, 6);
    Rng rng(12);
    auto p = init_params(oracles::tiny_net(enc.input_dim()), rng).cast<double>();
    const QFunction net = [&](std::span<const Observation* const> obs) { return forward(p, enc.batch(obs)).q; };
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<NStepSample> batch(16);
        std::vector<const NStepSample*> ptrs;
        for (auto& s : batch) {
            const auto a = random_arch(rng, desc);
            auto n = neighbors(a, desc);
            n.resize(1 + uniform_index(rng, 6));
            s.bootstrap_obs = enc.make_observation(a, n, rng);
            s.return_n = uniform01(rng);
            s.m = 1 + static_cast<int>(uniform_index(rng, 3));
            s.bootstrap_needed = uniform01(rng) < 0.7;
            ptrs.push_back(&s);
        }
        const auto y = compute_targets(net, net, ptrs, 0.99);
        for (size_t i = 0; i < batch.size(); ++i) {
            const auto& s = batch[i];
            double expect = s.return_n;
            if (s.bootstrap_needed) {
                const auto q = forward(p, enc.batch(s.bootstrap_obs)).q;
                double mx = -INFINITY;
                for (int a = 0; a < s.bootstrap_obs.valid_count(); ++a) mx = std::max(mx, q(0, a));
                expect += std::pow(0.99, s.m) * mx;
            }
            CHECK(y[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("n = 1 without bootstrap is regression on immediate rewards") {
    std::vector<Transition> tr;
    const double r[] = {0.3, 0.8, 0.1, 0.6};
    for (int t = 0; t < 4; ++t) tr.push_back(step(0, r[t], true, false));
    std::vector<NStepSample> all;
    for (const auto& t : tr) {
        auto s = accumulate_nstep(std::span(&t, 1), 1, 0.37);
        all.insert(all.end(), s.begin(), s.end());
    }
    std::vector<const NStepSample*> ptrs;
    for (const auto& s : all) ptrs.push_back(&s);
    const auto q = table({{1, {50.0, 50.0}}});
    const auto y = compute_targets(q, q, ptrs, 0.37);
    for (int i = 0; i < 4; ++i) CHECK(y[i] == r[i]);
}

TEST_CASE("worker TD error uses the worker-side estimates") {
    NStepSample s;
    s.return_n = 1.0;
    s.m = 2;
    s.q_taken = 0.5;
    s.bootstrap_value = 2.0;
    CHECK(worker_td_error(s, 0.5) == doctest::Approx(1.0 + 0.25 * 2.0 - 0.5));
    s.bootstrap_needed = false;
    CHECK(worker_td_error(s, 0.5) == doctest::Approx(0.5));
}
