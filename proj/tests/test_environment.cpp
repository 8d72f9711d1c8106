#include <doctest.h>

#include <array>

#include "environment.hpp"
#include "errors.hpp"
#include "helpers.hpp"

using namespace nastl;

namespace {

EnvConfig cfg_for(const std::string& task, uint64_t seed) {
    EnvConfig c;
    c.task = task;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("reset is deterministic and exposes current plus 18 neighbors") {
    auto b = testing::default_bench();
    Environment a(b, cfg_for("class_object", 11));
    Environment c(b, cfg_for("class_object", 11));
    const auto oa = a.reset();
    const auto oc = c.reset();
    CHECK(oa == oc);
    CHECK(oa.valid_count() == 19);
    CHECK(oa.mask.size() == 51);
    int on = 0;
    for (auto m : oa.mask) on += m;
    CHECK(on == 19);
    CHECK(oa.mask[0] == 1);
    CHECK(oa.candidates[0] == a.current());
    CHECK(oa.candidates[1] == neighbors(a.current(), b->descriptor())[0]);

    const auto batch = a.encoder().batch(oa);
    const auto d0 = a.encoder().decode_token(batch.token(0, 0));
    CHECK(d0.arch == a.current());
    CHECK(d0.is_current);
    CHECK(d0.offset == oa.offsets[0]);
    CHECK_FALSE(a.encoder().decode_token(batch.token(0, 5)).is_current);
}

TEST_CASE("terminate keeps the architecture and pays its metric") {
    auto b = testing::default_bench();
    Environment e(b, cfg_for("room_layout", 3));
    e.reset();
    const auto start = e.current();
    const auto r = e.step(0);
    CHECK(r.terminal);
    CHECK_FALSE(r.timeout);
    CHECK(e.current() == start);
    CHECK(r.reward == b->normalized_metric(start, b->task_index("room_layout"), Split::valid));
    CHECK_THROWS_AS(e.step(0), Error);
}

TEST_CASE("episode cap raises the timeout flag on the capping step") {
    auto b = testing::default_bench();
    Environment e(b, cfg_for("class_object", 5));
    e.reset();
    for (int i = 1; i <= 50; ++i) {
        const auto r = e.step(1 + (i % 18));
        REQUIRE(r.terminal == (i == 50));
        REQUIRE(r.timeout == (i == 50));
        if (r.timeout) CHECK(e.step_count() == 50);
    }
}

TEST_CASE("moving onto the planted optimum pays 1") {
    SyntheticSpec s;
    SyntheticTaskSpec t;
    t.name = "smooth";
    t.band_lo = 0.1;
    t.band_hi = 0.9;
    s.tasks = {t};
    const auto sb = generate_synthetic_with_optima(8, s);
    auto b = std::make_shared<const Benchmark>(sb.bench);
    const auto opt = sb.planted_optima[0];
    Environment e(b, cfg_for("smooth", 1));
    e.reset();
    // walk greedily toward the optimum by fixing one differing edge at a time
    StepResult last;
    while (e.current() != opt) {
        const auto& obs = e.observation();
        int pick = -1;
        for (int k = 1; k < obs.valid_count() && pick < 0; ++k) {
            if (hamming_distance(obs.candidates[k], opt) < hamming_distance(e.current(), opt)) pick = k;
        }
        REQUIRE(pick > 0);
        last = e.step(pick);
    }
    CHECK(last.reward == 1.0);
}

TEST_CASE("masked and out-of-range actions are contract errors") {
    auto b = testing::default_bench();
    Environment e(b, cfg_for("class_object", 1));
    e.reset();
    try {
        e.step(30);
        FAIL("expected contract error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::contract);
    }
    CHECK_THROWS_AS(e.step(-1), Error);
    CHECK_THROWS_AS(e.step(51), Error);
}

TEST_CASE("config validation") {
    const auto d = SearchSpaceDescriptor::micro_cell();
    EnvConfig c;
    c.task = "x";
    c.max_candidates = 0;
    CHECK_THROWS_AS(c.validate(d), Error);
    c.max_candidates = 50;
    c.pad_nodes = 3;
    CHECK_THROWS_AS(c.validate(d), Error);
    c.pad_nodes = 8;
    c.episode_cap = 0;
    CHECK_THROWS_AS(c.validate(d), Error);
    auto b = testing::default_bench();
    CHECK_THROWS_AS(Environment(b, cfg_for("nope", 1)), Error);
}

TEST_CASE("token layout and padding") {
    const auto d = SearchSpaceDescriptor::micro_cell();
    const ObservationEncoder enc(d, 8, 50);
    CHECK(enc.input_dim() == 64 + 28 * 5 + 1);
    CHECK(enc.slots() == 51);

    SUBCASE("pad 4 forces offset 0") {
        const ObservationEncoder e4(d, 4, 50);
        Rng rng(1);
        for (int i = 0; i < 50; ++i) {
            const auto o = e4.make_observation(arch_from_rank(i, d), neighbors(arch_from_rank(i, d), d), rng);
            for (int off : o.offsets) REQUIRE(off == 0);
        }
    }
    SUBCASE("pad 8 offsets cover 0..4 uniformly") {
        Rng rng(2);
        std::array<int, 5> counts{};
        const auto a = arch_from_rank(77, d);
        const int calls = 100000;
        for (int i = 0; i < calls; ++i) {
            const auto o = enc.make_observation(a, {}, rng);
            REQUIRE(o.offsets.size() == 1);
            ++counts[o.offsets[0]];
        }
        for (int c : counts) CHECK(std::abs(c / double(calls) - 0.2) < 0.01);
    }
    SUBCASE("everything outside the embedded block is zero and ops are one-hot") {
        std::vector<float> tok(enc.input_dim());
        const CellArch a{{0, 3, 1, 2, 0, 3}};
        for (int off = 0; off <= 4; ++off) {
            enc.encode_token(a, off, false, tok);
            for (int r = 0; r < 8; ++r) {
                for (int c = 0; c < 8; ++c) {
                    const bool inside = r >= off && r < off + 4 && c >= off && c < off + 4 && c > r;
                    REQUIRE(tok[r * 8 + c] == (inside ? 1.0f : 0.0f));
                }
            }
            for (int p = 0; p < 28; ++p) {
                float sum = 0;
                for (int k = 0; k < 5; ++k) sum += tok[64 + p * 5 + k];
                REQUIRE(sum == 1.0f);
            }
            CHECK(tok.back() == 0.0f);
            const auto dec = enc.decode_token(tok);
            CHECK(dec.arch == a);
            CHECK(dec.offset == off);
        }
    }
    SUBCASE("batch zeroes masked slots") {
        Rng rng(5);
        const auto a = arch_from_rank(1, d);
        const auto o = enc.make_observation(a, neighbors(a, d), rng);
        const auto b = enc.batch(o);
        for (int s = 19; s < 51; ++s) {
            CHECK(b.mask[s] == 0);
            for (float x : b.token(0, s)) REQUIRE(x == 0.0f);
        }
    }
}

TEST_CASE("rewards stay in [0, 1] with and without shaping") {
    auto b = testing::default_bench();
    for (bool shaped : {false, true}) {
        auto c = cfg_for("segmentsemantic", 9);
        if (shaped) c.shaping = ShapingConfig{0.478};
        Environment e(b, c);
        Rng act(4);
        e.reset();
        for (int i = 0; i < 2000; ++i) {
            if (e.done()) e.reset();
            const int a = static_cast<int>(uniform_index(act, e.observation().valid_count()));
            const auto r = e.step(a);
            REQUIRE(r.reward >= 0.0);
            REQUIRE(r.reward <= 1.0);
            if (r.timeout) REQUIRE(e.step_count() == 50);
        }
    }
}

TEST_CASE("shaped reward is the transform of the raw one") {
    auto b = testing::default_bench();
    auto raw_cfg = cfg_for("segmentsemantic", 2);
    auto shaped_cfg = raw_cfg;
    shaped_cfg.shaping = ShapingConfig{0.478};
    Environment raw(b, raw_cfg), shaped(b, shaped_cfg);
    raw.reset();
    shaped.reset();
    REQUIRE(raw.current() == shaped.current());
    for (int i = 0; i < 10; ++i) {
        const auto r1 = raw.step(3);
        const auto r2 = shaped.step(3);
        CHECK(r2.reward == doctest::Approx(gamma_transform(r1.reward, 0.478)).epsilon(1e-12));
    }
}

TEST_CASE("a fixed action script is reproducible bit for bit") {
    auto b = testing::default_bench();
    auto run = [&] {
        Environment e(b, cfg_for("autoencoder", 21));
        std::vector<double> rewards;
        std::vector<Observation> obs;
        e.reset();
        for (int i = 0; i < 120; ++i) {
            if (e.done()) obs.push_back(e.reset());
            const auto r = e.step(i % 7 == 6 ? 0 : 1 + (i * 5) % 18);
            rewards.push_back(r.reward);
            obs.push_back(r.obs);
        }
        return std::make_pair(rewards, obs);
    };
    CHECK(run() == run());
}

TEST_CASE("vectorized stepping") {
    auto b = testing::default_bench();
    const auto base = cfg_for("class_object", 0);

    SUBCASE("32 terminate actions give 32 terminals and fresh observations") {
        std::vector<uint64_t> seeds;
        for (uint64_t i = 0; i < 32; ++i) seeds.push_back(100 + i);
        VectorEnv v(b, base, seeds);
        v.reset();
        const std::vector<int> zeros(32, 0);
        const auto s = v.step(zeros);
        for (size_t i = 0; i < 32; ++i) {
            CHECK(s.terminal[i]);
            CHECK_FALSE(s.timeout[i]);
            CHECK(v.at(i).step_count() == 0);
            CHECK_FALSE(v.at(i).done());
            CHECK(s.obs[i].candidates[0] == v.at(i).current());
        }
    }
    SUBCASE("width 1 matches a scalar environment") {
        auto c = base;
        c.seed = 55;
        Environment e(b, c);
        VectorEnv v(b, base, {55});
        CHECK(e.reset() == v.reset()[0]);
        for (int i = 0; i < 80; ++i) {
            const int a = (i % 9 == 8) ? 0 : 1 + i % 18;
            const auto r = e.step(a);
            const std::vector<int> acts{a};
            const auto s = v.step(acts);
            REQUIRE(r.reward == s.rewards[0]);
            REQUIRE(r.terminal == bool(s.terminal[0]));
            REQUIRE(r.obs == s.final_obs[0]);
            if (r.terminal) {
                REQUIRE(e.reset() == s.obs[0]);
            }
        }
    }
    SUBCASE("trajectories do not depend on vector width") {
        std::vector<uint64_t> seeds{7, 8, 9, 10, 11, 12, 13, 14};
        VectorEnv wide(b, base, seeds);
        std::vector<VectorEnv> narrow;
        for (auto s : seeds) narrow.emplace_back(b, base, std::vector<uint64_t>{s});
        wide.reset();
        for (auto& n : narrow) n.reset();
        for (int t = 0; t < 100; ++t) {
            std::vector<int> acts;
            for (int i = 0; i < 8; ++i) acts.push_back((t + i) % 11 == 0 ? 0 : 1 + (t * 3 + i) % 18);
            const auto w = wide.step(acts);
            for (int i = 0; i < 8; ++i) {
                const std::vector<int> one{acts[i]};
                const auto s = narrow[i].step(one);
                REQUIRE(s.rewards[0] == w.rewards[i]);
                REQUIRE(s.obs[0] == w.obs[i]);
            }
        }
    }
    SUBCASE("errors carry the sub-environment index") {
        VectorEnv v(b, base, {1, 2, 3});
        v.reset();
        const std::vector<int> acts{0, 45, 0};
        try {
            v.step(acts);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("sub-environment 1") != std::string::npos);
        }
    }
}

TEST_CASE("subsampling honors max_candidates") {
    auto b = testing::default_bench();
    auto c = cfg_for("class_object", 3);
    c.max_candidates = 5;
    Environment e(b, c);
    const auto o = e.reset();
    CHECK(o.valid_count() == 6);
    CHECK(o.mask.size() == 6);
    const auto all = neighbors(e.current(), b->descriptor());
    for (int k = 1; k < 6; ++k) {
        CHECK(std::find(all.begin(), all.end(), o.candidates[k]) != all.end());
    }
}
