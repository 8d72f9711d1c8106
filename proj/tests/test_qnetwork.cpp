#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adam.hpp"
#include "errors.hpp"
#include "oracles.hpp"

using namespace nastl;

namespace {

struct Fixture {
    SearchSpaceDescriptor desc = SearchSpaceDescriptor::micro_cell();
    ObservationEncoder enc{desc, 8, 6};
    NetConfig cfg = oracles::tiny_net(enc.input_dim());
    Params params;

    Fixture() {
        Rng rng(17);
        params = init_params(cfg, rng);
    }

    Observation obs(uint64_t seed, int k) const {
        Rng rng(seed);
        const auto a = random_arch(rng, desc);
        auto n = neighbors(a, desc);
        n.resize(k);
        return enc.make_observation(a, n, rng);
    }
};

}  // namespace

TEST_CASE("init is deterministic with zero biases and unit gains") {
    const NetConfig cfg = oracles::tiny_net(205);
    Rng a(1), b(1), c(2);
    const auto pa = init_params(cfg, a);
    const auto pb = init_params(cfg, b);
    const auto pc = init_params(cfg, c);
    CHECK(pa.checksum() == pb.checksum());
    CHECK(pa.checksum() != pc.checksum());
    for (size_t i = 0; i < pa.layout->tensors.size(); ++i) {
        const auto& t = pa.layout->tensors[i];
        const auto v = pa.tensor(static_cast<int>(i));
        if (t.name.ends_with(".b")) {
            CHECK(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; }));
        } else if (t.name.ends_with(".g")) {
            CHECK(std::all_of(v.begin(), v.end(), [](float x) { return x == 1.0f; }));
        } else {
            const float bound = 1.0f / std::sqrt(static_cast<float>(t.rows));
            CHECK(std::all_of(v.begin(), v.end(), [&](float x) { return std::abs(x) <= bound; }));
        }
    }
}

TEST_CASE("layout follows the configured depths") {
    NetConfig cfg;
    cfg.input_dim = 205;
    const auto L = ParamLayout::build(cfg);
    CHECK(L->embed.size() == 3);
    CHECK(L->blocks.size() == 2);
    CHECK(L->adv.size() == 3);
    CHECK(L->val.size() == 3);
    CHECK(L->tensors[L->embed[0].w].rows == 205);
    CHECK(L->tensors[L->embed[0].w].cols == 256);
    CHECK(L->tensors[L->blocks[0].ff1.w].cols == 1024);
    CHECK(L->tensors[L->adv[2].w].cols == 1);
    cfg.n_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), Error);
    NetConfig zero;
    CHECK_THROWS_AS(zero.validate(), Error);
}

TEST_CASE("net config JSON round trip") {
    NetConfig c = oracles::tiny_net(205);
    CHECK(NetConfig::from_json(c.to_json()) == c);
    CHECK_THROWS_AS(NetConfig::from_json("{\"d_model\": 4}"), Error);
}

TEST_CASE("dueling identities") {
    Fixture f;
    SUBCASE("single valid token gives Q0 = V") {
        const auto o = f.obs(3, 0);
        const auto out = forward(f.params, f.enc.batch(o));
        CHECK(out.q(0, 0) == doctest::Approx(out.value(0)).epsilon(1e-6));
        for (int s = 1; s < f.enc.slots(); ++s) CHECK(std::isinf(out.q(0, s)));
    }
    SUBCASE("centered advantages sum to zero over valid slots") {
        for (uint64_t seed = 0; seed < 10; ++seed) {
            const auto o = f.obs(seed, 1 + static_cast<int>(seed % 6));
            const auto out = forward(f.params.cast<double>(), f.enc.batch(o));
            double sum = 0;
            for (int s = 0; s < o.valid_count(); ++s) sum += out.q(0, s) - out.value(0);
            CHECK(std::abs(sum) < 1e-12);
            for (int s = o.valid_count(); s < f.enc.slots(); ++s) {
                CHECK(out.q(0, s) == -std::numeric_limits<double>::infinity());
            }
        }
    }
}

TEST_CASE("permuting neighbor tokens permutes their Q-values") {
    Fixture f;
    const auto dp = f.params.cast<double>();
    auto o = f.obs(9, 6);
    const auto base = forward(dp, f.enc.batch(o)).q;
    const std::vector<int> perm{0, 4, 1, 6, 2, 5, 3};
    Observation p = o;
    for (int s = 0; s < 7; ++s) {
        p.candidates[s] = o.candidates[perm[s]];
        p.offsets[s] = o.offsets[perm[s]];
    }
    const auto q = forward(dp, f.enc.batch(p)).q;
    for (int s = 0; s < 7; ++s) {
        CHECK(q(0, s) == doctest::Approx(base(0, perm[s])).epsilon(1e-12));
    }
}

TEST_CASE("masked slot contents have no effect on any Q-value") {
    Fixture f;
    const auto o = f.obs(4, 3);
    auto b = f.enc.batch(o);
    const auto q1 = forward(f.params, b).q;
    Rng r(1);
    for (int s = 4; s < b.slots; ++s) {
        for (int k = 0; k < b.input_dim; ++k) {
            b.features[static_cast<size_t>(s) * b.input_dim + k] = static_cast<float>(uniform01(r) * 5);
        }
    }
    const auto q2 = forward(f.params, b).q;
    for (int s = 0; s < 4; ++s) CHECK(q1(0, s) == q2(0, s));
}

TEST_CASE("forward is bit-deterministic and batch rows are independent") {
    Fixture f;
    const auto o1 = f.obs(1, 6), o2 = f.obs(2, 3);
    const Observation* both[] = {&o1, &o2};
    const auto b = f.enc.batch(std::span<const Observation* const>(both, 2));
    const auto a = forward(f.params, b).q;
    const auto c = forward(f.params, b).q;
    CHECK(a == c);
    const auto single = forward(f.params, f.enc.batch(o2)).q;
    for (int s = 0; s < 4; ++s) CHECK(single(0, s) == doctest::Approx(a(1, s)).epsilon(1e-5));
}

TEST_CASE("non-finite parameters raise a numeric fault naming the layer") {
    Fixture f;
    auto p = f.params;
    p.data[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        forward(p, f.enc.batch(f.obs(1, 2)));
        FAIL("expected numeric fault");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
        CHECK(std::string(e.what()).find("embed") != std::string::npos);
    }
}

TEST_CASE("finite-difference gradient check at 64-bit precision") {
    const auto sc = oracles::first_smooth_case(5);
    REQUIRE(sc.rejected < 20);
    const auto& c = sc.c;
    const auto r = oracles::finite_difference_check(c);
    INFO("seed " << sc.seed << " worst tensor: " << r.worst_tensor);
    CHECK(r.checked == c.params.data.size());
    CHECK(r.max_rel_error < 1e-4);
    for (const char* kind : {"embed", "attention", "layer_norm", "feed_forward", "advantage_head", "value_head"}) {
        INFO(kind);
        REQUIRE(r.per_kind.count(kind) == 1);
        CHECK(r.per_kind.at(kind) < 1e-4);
    }
}

TEST_CASE("the kink probe flags a point the plain check fails on") {
    // seed 8 has a ReLU input within 1e-4 of zero in the embedding stack
    const auto c = oracles::grad_check_case(8);
    CHECK_FALSE(oracles::smooth_at(c));
    CHECK(oracles::finite_difference_check(c).max_rel_error > 1e-4);
}

TEST_CASE("loss and gradient properties") {
    const auto c = oracles::grad_check_case(8);
    const auto q = forward(c.params, c.batch).q;

    SUBCASE("targets equal to current Q give zero loss and zero gradients") {
        const std::vector<double> t{q(0, c.actions[0]), q(1, c.actions[1])};
        const auto r = loss_and_grads(c.params, c.batch, c.actions, t, c.weights);
        CHECK(r.loss == 0.0);
        CHECK(std::all_of(r.grads.begin(), r.grads.end(), [](double g) { return g == 0.0; }));
        CHECK(r.td_errors == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("doubling importance weights doubles loss and gradients") {
        const auto r1 = loss_and_grads(c.params, c.batch, c.actions, c.targets, c.weights);
        std::vector<double> w2{c.weights[0] * 2, c.weights[1] * 2};
        const auto r2 = loss_and_grads(c.params, c.batch, c.actions, c.targets, w2);
        CHECK(r2.loss == doctest::Approx(2 * r1.loss).epsilon(1e-12));
        for (size_t i = 0; i < r1.grads.size(); ++i) {
            REQUIRE(std::abs(r2.grads[i] - 2 * r1.grads[i]) <= 1e-12 * (1 + std::abs(r1.grads[i])));
        }
    }
    SUBCASE("Huber value and td errors") {
        const auto r = loss_and_grads(c.params, c.batch, c.actions, c.targets, c.weights);
        CHECK(r.td_errors[0] == doctest::Approx(0.4));
        CHECK(r.td_errors[1] == doctest::Approx(-2.5));
        const double expect = (0.7 * 0.5 * 0.16 + 1.3 * (2.5 - 0.5)) / 2;
        CHECK(r.loss == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("shape and mask errors") {
        const std::vector<int> masked{3, 4};
        CHECK_THROWS_AS(loss_and_grads(c.params, c.batch, masked, c.targets, c.weights), Error);
        const std::vector<double> short_t{1.0};
        CHECK_THROWS_AS(loss_and_grads(c.params, c.batch, c.actions, short_t, c.weights), Error);
    }
}

TEST_CASE("global norm clipping") {
    std::vector<double> g{12.0, 16.0};  // norm 20
    CHECK(clip_global_norm<double>(g, 40.0) == doctest::Approx(20.0));
    CHECK(g == std::vector<double>{12.0, 16.0});
    std::vector<double> h{48.0, 64.0};  // norm 80
    CHECK(clip_global_norm<double>(h, 40.0) == doctest::Approx(80.0));
    CHECK(h[0] == doctest::Approx(24.0));
    CHECK(h[1] == doctest::Approx(32.0));
    CHECK(std::abs(global_norm<double>(h) - 40.0) < 1e-9);
    std::vector<double> z(5, 0.0);
    clip_global_norm<double>(z, 40.0);
    CHECK(z == std::vector<double>(5, 0.0));
    std::vector<double> bad{1.0, std::nan("")};
    CHECK_THROWS_AS(clip_global_norm<double>(bad, 40.0), Error);
}

TEST_CASE("Adam") {
    SUBCASE("zero gradients leave params and advance the step") {
        std::vector<float> p{0.5f, -1.0f};
        const std::vector<float> g{0.0f, 0.0f};
        auto s = AdamState::zeros(2);
        adam_step(p, g, s);
        CHECK(p == std::vector<float>{0.5f, -1.0f});
        CHECK(s.step == 1);
    }
    SUBCASE("first step moves by about lr against the gradient") {
        std::vector<float> p{1.0f};
        const std::vector<float> g{1.0f};
        auto s = AdamState::zeros(1);
        adam_step(p, g, s);
        // m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
        CHECK(p[0] == doctest::Approx(1.0 - 5e-5 / (1 + 1e-8)).epsilon(1e-7));
    }
    SUBCASE("two runs are identical") {
        auto run = [] {
            std::vector<float> p{0.1f, 0.2f, 0.3f};
            auto s = AdamState::zeros(3, AdamHyper{1e-3});
            for (int i = 0; i < 20; ++i) {
                const std::vector<float> g{float(i), -0.5f, 0.25f * i};
                adam_step(p, g, s);
            }
            return p;
        };
        CHECK(run() == run());
    }
    SUBCASE("size mismatch is rejected") {
        std::vector<float> p{1.0f};
        const std::vector<float> g{1.0f, 2.0f};
        auto s = AdamState::zeros(1);
        CHECK_THROWS_AS(adam_step(p, g, s), Error);
    }
}
