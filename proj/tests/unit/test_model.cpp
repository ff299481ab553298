#include <doctest.h>

#include <cmath>

#include "gaf/model.hpp"
#include "test_support.hpp"

using namespace gaf;
using gaf::test::Gen;

namespace {

GafConfig small(std::size_t classes, bool zero_heads = true, bool conditioning = true) {
    GafConfig c;
    c.trunk_width = 16;
    c.trunk_depth = 2;
    c.time_embed = 8;
    c.num_classes = classes;
    c.zero_init_heads = zero_heads;
    c.class_conditioning = conditioning;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("configuration validation and parameter count") {
    GafConfig c = small(3);
    CHECK(parameter_count(c) == GafModel<float>(c).parameters().element_count());
    c.trunk_width = 0;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c = small(0);
    CHECK_THROWS_AS(c.validate(), ValueError);
    c = small(2);
    c.head_layers = 3;
    CHECK_THROWS_AS(c.validate(), ValueError);
}

TEST_CASE("initialization is deterministic and seed dependent") {
    const GafModel<float> a(small(2)), b(small(2));
    CHECK(a.parameters() == b.parameters());
    auto c2 = small(2);
    c2.seed = 4;
    CHECK_FALSE(GafModel<float>(c2).parameters() == a.parameters());
}

TEST_CASE("zero-initialized heads anchor the twins on the bridge point") {
    const GafModel<double> m(small(2));
    Gen g(1);
    for (int k = 0; k < 10; ++k) {
        const auto x = g.array(Shape{2});
        const double t = g.uniform();
        const auto out = twin_forward(m, x, t, k % 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(out.j_res[i] == 0.0);
            CHECK(out.k_res[i] == 0.0);
            CHECK(out.j[i] == (1 - t) * x[i]);
            CHECK(out.k[i] == t * x[i]);
        }
    }
}

TEST_CASE("emergent velocity decomposes as (2t - 1) x + (K_res - J_res)") {
    const GafModel<double> m(small(3, false));
    Gen g(2);
    for (int k = 0; k < 50; ++k) {
        const auto x = g.array(Shape{2});
        const double t = g.uniform();
        const std::size_t c = g.below(3);
        const auto out = twin_forward(m, x, t, c);
        const auto v = velocity(m, x, t, VelocityQuery::single(c, 3));
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(std::abs(v[i] - (out.k[i] - out.j[i])) < 1e-12);
            CHECK(std::abs(v[i] - ((2 * t - 1) * x[i] + out.k_res[i] - out.j_res[i])) < 1e-12);
        }
    }
}

TEST_CASE("batched twins agree with per-point evaluation") {
    const GafModel<double> m(small(3, false));
    Gen g(3);
    const auto x = g.array(Shape{7, 2});
    std::vector<double> times;
    std::vector<std::size_t> classes;
    for (int r = 0; r < 7; ++r) {
        times.push_back(g.uniform());
        classes.push_back(g.below(3));
    }
    const auto batch = twin_forward_batch(m, x, std::span<const double>(times), std::span<const std::size_t>(classes));
    for (std::size_t r = 0; r < 7; ++r) {
        const auto one = twin_forward(m, Array<double>(Shape{2}, std::vector<double>(x.row(r).begin(), x.row(r).end())),
                                      times[r], classes[r]);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(std::abs(one.j[k] - batch.j.at(r, k)) < 1e-12);
            CHECK(std::abs(one.k[k] - batch.k.at(r, k)) < 1e-12);
        }
    }
}

TEST_CASE("one-hot blends reproduce single-class velocities bitwise") {
    const GafModel<float> m(small(3, false));
    Gen g(4);
    const auto x = g.array<float>(Shape{5, 2});
    for (std::size_t c = 0; c < 3; ++c) {
        const auto single = velocity(m, x, 0.37, VelocityQuery::single(c, 3));
        std::vector<double> w(3, 0.0);
        w[c] = 1.0;
        CHECK(velocity(m, x, 0.37, VelocityQuery::blend(w)) == single);
        CHECK(velocity(m, x, 0.37, VelocityQuery::pair(c, (c + 1) % 3, 0.0, 3)) == single);
        CHECK(velocity(m, x, 0.37, VelocityQuery::pair((c + 1) % 3, c, 1.0, 3)) == single);
    }
}

TEST_CASE("blended velocity is the weighted sum of per-class components") {
    const GafModel<double> m(small(3, false));
    Gen g(5);
    for (int k = 0; k < 20; ++k) {
        const auto x = g.array(Shape{4, 2});
        const double t = g.uniform();
        std::vector<double> w = {g.uniform(), g.uniform(), g.uniform()};
        const double s = w[0] + w[1] + w[2];
        for (auto& v : w) v /= s;
        const auto q = VelocityQuery::blend(w);
        const auto v = velocity(m, x, t, q);
        const auto parts = velocity_components(m, x, t, q);
        for (std::size_t i = 0; i < v.size(); ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 3; ++c) sum += w[c] * parts[c][i];
            CHECK(std::abs(v[i] - sum) < 1e-12);
        }
    }
}

TEST_CASE("blends are linear in the one-hot velocities") {
    for (const bool conditioning : {false, true}) {
        const GafModel<double> m(small(3, false, conditioning));
        Gen g(6);
        const auto x = g.array(Shape{4, 2});
        const std::vector<double> w = {0.2, 0.5, 0.3};
        const auto v = velocity(m, x, 0.6, VelocityQuery::blend(w));
        for (std::size_t i = 0; i < v.size(); ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 3; ++c) sum += w[c] * velocity(m, x, 0.6, VelocityQuery::single(c, 3))[i];
            CHECK(std::abs(v[i] - sum) < 1e-12);
        }
    }
}

TEST_CASE("evaluation cost of a blended query") {
    const auto x = Array<float>(Shape{6, 2}, 0.25f);
    // Unconditioned trunk: one trunk and one J pass shared by every K head.
    const GafModel<float> shared(small(3, false, false));
    EvalStats stats;
    velocity(shared, x, 0.5, VelocityQuery::blend({0.2, 0.3, 0.5}), &stats);
    CHECK(stats.trunk == 1);
    CHECK(stats.j_head == 1);
    CHECK(stats.k_head == 3);

    // Conditioned trunk: one pass per active class.
    const GafModel<float> conditioned(small(3, false));
    EvalStats blended;
    velocity(conditioned, x, 0.5, VelocityQuery::blend({0.5, 0.0, 0.5}), &blended);
    CHECK(blended.trunk == 2);
    CHECK(blended.j_head == 2);
    CHECK(blended.k_head == 2);
    EvalStats single;
    velocity(conditioned, x, 0.5, VelocityQuery::single(1, 3), &single);
    CHECK(single.trunk == 1);
    CHECK(single.j_head == 1);
    CHECK(single.k_head == 1);
}

TEST_CASE("adding a K head leaves existing classes untouched") {
    GafModel<float> m(small(2, false));
    Gen g(7);
    const auto x = g.array<float>(Shape{5, 2});
    const auto v0 = velocity(m, x, 0.3, VelocityQuery::single(0, 2));
    const auto v1 = velocity(m, x, 0.8, VelocityQuery::single(1, 2));
    CHECK(m.add_class_head() == 2);
    CHECK(m.num_classes() == 3);
    CHECK(velocity(m, x, 0.3, VelocityQuery::single(0, 3)) == v0);
    CHECK(velocity(m, x, 0.8, VelocityQuery::single(1, 3)) == v1);
    // The new head is usable and the layout reloads.
    CHECK(velocity(m, x, 0.5, VelocityQuery::single(2, 3)).all_finite());
    CHECK_NOTHROW(GafModel<float>(m.config(), m.parameters()));
}

TEST_CASE("query and input validation") {
    const GafModel<float> m(small(3));
    const auto x = Array<float>(Shape{2}, 0.1f);
    CHECK_THROWS_AS(velocity(m, x, 0.5, VelocityQuery::blend({})), ValueError);
    CHECK_THROWS_AS(velocity(m, x, 0.5, VelocityQuery::blend({0.5, 0.5})), ValueError);
    CHECK_THROWS_AS(velocity(m, x, 0.5, VelocityQuery::blend({0.5, 0.4, 0.0})), ValueError);
    CHECK_THROWS_AS(velocity(m, x, 0.5, VelocityQuery::blend({0.5, NAN, 0.5})), ValueError);
    CHECK_THROWS_AS(VelocityQuery::single(3, 3), ValueError);
    CHECK_THROWS_AS(VelocityQuery::pair(0, 1, 1.5, 3), ValueError);
    CHECK_THROWS_AS(embed_time(m, 1.5), ValueError);
    CHECK_THROWS_AS(twin_forward(m, Array<float>(Shape{3}, 0.f), 0.5, 0), ShapeError);
    CHECK_THROWS_AS(twin_forward(m, Array<float>(Shape{2}, NAN), 0.5, 0), NonFiniteError);
    CHECK_THROWS_AS(twin_forward(m, x, 0.5, 5), ValueError);
}

TEST_CASE("parameter layout is checked on load") {
    const GafModel<float> m(small(2));
    auto params = m.parameters();
    CHECK_THROWS_AS(GafModel<float>(small(3), params), ShapeError);
    ParameterSet<float> wrong;
    for (std::size_t i = 0; i + 1 < params.size(); ++i) wrong.add(params.name(i), params[i]);
    CHECK_THROWS_AS(GafModel<float>(small(2), wrong), ShapeError);
}

TEST_CASE("sinusoidal time features") {
    const auto f = sinusoidal_features<double>(0.0, 8);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(f[2 * k] == 0.0);
        CHECK(f[2 * k + 1] == 1.0);
    }
    const auto h = sinusoidal_features<double>(0.25, 8);
    CHECK(h[0] == doctest::Approx(std::sin(0.25)));
    CHECK(h[6] == doctest::Approx(std::sin(250.0)));
}

TEST_CASE("float and double models agree after casting") {
    const GafModel<float> m(small(2, false));
    const auto md = m.cast<double>();
    Gen g(8);
    const auto x = g.array<float>(Shape{3, 2});
    const auto vf = velocity(m, x, 0.4, VelocityQuery::single(1, 2));
    const auto vd = velocity(md, x.cast<double>(), 0.4, VelocityQuery::single(1, 2));
    CHECK(max_abs_diff(vf.cast<double>(), vd) < 1e-4);
}
