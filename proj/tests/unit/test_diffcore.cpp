#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gaf/adam.hpp"
#include "gaf/rng.hpp"
#include "gaf/tape.hpp"
#include "test_support.hpp"

using namespace gaf;
using gaf::test::Gen;

TEST_CASE("array shape invariants") {
    CHECK_THROWS_AS(Array<float>(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Array<float>(Shape{}), ShapeError);
    CHECK_THROWS_AS(Array<float>(Shape{2, 2}, std::vector<float>(3)), ShapeError);
    const Array<float> a(Shape{2, 3}, 1.5f);
    CHECK(a.size() == 6);
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    CHECK(a.reshaped(Shape{3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(a.reshaped(Shape{4}), ShapeError);
}

TEST_CASE("primitive examples") {
    Tape<double> tape;
    const Var a = tape.constant(Array<double>::matrix(2, 2, {1, 2, 3, 4}));
    const Var b = tape.constant(Array<double>::matrix(2, 1, {1, 1}));
    const auto& m = tape.value(tape.matmul(a, b));
    CHECK(m.shape() == Shape{2, 1});
    CHECK(m[0] == 3.0);
    CHECK(m[1] == 7.0);

    const Var x = tape.constant(Array<double>::matrix(2, 2, {0.5, -1, 2, 3}));
    const Var z = tape.constant(Array<double>::zeros(Shape{2, 2}));
    CHECK(tape.value(tape.add(x, z)) == tape.value(x));

    const Var zero = tape.constant(Array<double>::vector({0.0}));
    CHECK(tape.value(tape.gelu(zero))[0] == 0.0);

    const Var c = tape.constant(Array<double>::vector({1.0, 2.0}));
    CHECK(tape.value(tape.gelu(c))[0] == doctest::Approx(0.5 * (1 + std::erf(1 / std::numbers::sqrt2))).epsilon(1e-15));
}

TEST_CASE("backward examples") {
    SUBCASE("sum of squares") {
        Tape<double> tape;
        const Var x = tape.parameter(0, Array<double>::vector({3.0}));
        const auto g = tape.backward(tape.sum(tape.square(x)), std::vector<Shape>{Shape{1}});
        CHECK(g[0][0] == 6.0);
    }
    SUBCASE("mean") {
        Tape<double> tape;
        const Var x = tape.parameter(0, Array<double>::vector({1, 2, 3, 4}));
        const auto g = tape.backward(tape.mean(x), std::vector<Shape>{Shape{4}});
        for (double v : g[0].values()) CHECK(v == 0.25);
    }
    SUBCASE("non-participating parameters receive zeros") {
        Tape<double> tape;
        const Var x = tape.parameter(0, Array<double>::vector({2.0}));
        const auto g = tape.backward(tape.sum(x), std::vector<Shape>{Shape{1}, Shape{2, 3}});
        CHECK(g[1] == Array<double>::zeros(Shape{2, 3}));
    }
    SUBCASE("reuse accumulates") {
        Tape<double> tape;
        const Var x = tape.parameter(0, Array<double>::vector({2.0}));
        // x*x + x + x: derivative 2x + 2 = 6
        const Var y = tape.add(tape.add(tape.mul(x, x), x), x);
        const auto g = tape.backward(tape.sum(y), std::vector<Shape>{Shape{1}});
        CHECK(g[0][0] == 6.0);
    }
}

TEST_CASE("backward errors") {
    Tape<double> tape;
    const Var x = tape.parameter(0, Array<double>::vector({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x, std::vector<Shape>{Shape{2}}), ShapeError);
    Tape<double> other;
    const Var y = other.constant(Array<double>::scalar(1.0));
    CHECK_THROWS_AS(tape.backward(y, std::vector<Shape>{Shape{2}}), ValueError);
}

TEST_CASE("shape and finiteness errors") {
    Tape<double> tape;
    const Var a = tape.constant(Array<double>(Shape{2, 3}, 1.0));
    const Var b = tape.constant(Array<double>(Shape{2, 3}, 1.0));
    CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
    const Var c = tape.constant(Array<double>(Shape{3, 3}, 1.0));
    CHECK_THROWS_AS(tape.add(a, c), ShapeError);
    const Var big = tape.constant(Array<double>::vector({1e200}));
    CHECK_THROWS_AS(tape.square(big), NonFiniteError);
}

TEST_CASE("reverse pass visits nodes in reverse recording order") {
    Tape<double> tape;
    const Var x = tape.parameter(0, Array<double>::vector({0.3, -0.2}));
    const Var y = tape.tanh(x);
    const Var z = tape.square(y);
    const Var w = tape.add(z, x);
    const Var loss = tape.sum(w);
    std::vector<std::size_t> order;
    tape.backward(loss, std::vector<Shape>{Shape{2}}, &order);
    REQUIRE(order.size() >= 2);
    for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i] < order[i - 1]);
    CHECK(order.front() == loss.index);
}

// Each primitive against central differences on random inputs.
TEST_CASE("primitive gradients match finite differences") {
    for (std::uint64_t draw = 0; draw < 20; ++draw) {
        Gen g(100 + draw);
        ParameterSet<double> p;
        p.add("a", g.array(Shape{3, 4}));
        p.add("b", g.array(Shape{4, 2}));
        p.add("c", g.array(Shape{3, 4}));
        p.add("r", g.array(Shape{1, 4}));
        const double s = g.uniform(-2, 2);
        auto f = [&](Tape<double>& t, std::vector<Var>& v) {
            const Var mm = t.matmul(t.gelu(v[0]), v[1]);
            const Var e = t.mul(t.tanh(v[2]), v[0]);
            const Var bc = t.sub(t.add(e, v[3]), t.scalar_mul(v[2], s));
            const Var parts[] = {bc, v[0]};
            const Var cat0 = t.concat(parts, 0);
            const Var parts1[] = {mm, v[2]};
            const Var cat1 = t.concat(parts1, 1);
            const Var sl = t.slice_rows(cat0, 2, 5);
            return t.add(t.add(t.mean(t.square(cat1)), t.sum(t.mul(sl, sl))), t.sum(t.square(t.mean(mm))));
        };
        CHECK(test::gradient_check(p, f) < 1e-6);
    }
}

TEST_CASE("backward is linear in the loss") {
    Gen g(7);
    ParameterSet<double> p;
    p.add("x", g.array(Shape{3, 3}));
    const double a = 0.7, b = -1.3;
    auto grads = [&](int which) {
        Tape<double> t;
        const Var x = t.parameter(0, p[0]);
        const Var f = t.sum(t.tanh(t.matmul(x, x)));
        const Var h = t.mean(t.square(x));
        Var loss = f;
        if (which == 1) loss = h;
        if (which == 2) loss = t.add(t.scalar_mul(f, a), t.scalar_mul(h, b));
        return t.backward(loss, p)[0];
    };
    const auto gf = grads(0), gh = grads(1), gc = grads(2);
    for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gh[i])) < 1e-12);
}

TEST_CASE("forward and backward are deterministic") {
    Gen g(9);
    const auto x0 = g.array<float>(Shape{8, 8});
    auto run = [&] {
        Tape<float> t;
        const Var x = t.parameter(0, x0);
        return t.backward(t.mean(t.gelu(t.matmul(x, x))), std::vector<Shape>{x0.shape()})[0];
    };
    CHECK(run() == run());
}

TEST_CASE("generic forward entry point") {
    Tape<double> tape;
    const Var a = tape.constant(Array<double>::vector({1.0, -2.0}));
    const Var s = tape.constant(Array<double>::scalar(3.0));
    const Var in[] = {a, s};
    const auto& out = tape.value(tape.forward(Primitive::scalar_mul, in));
    CHECK(out[0] == 3.0);
    CHECK(out[1] == -6.0);
    CHECK(primitive_name(Primitive::gelu) == "gelu");
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParameterSet<double> p;
        p.add("w", Array<double>::vector({1.0, -2.0}));
        auto st = AdamState<double>::for_parameters(p, AdamHyper{});
        const auto before = p;
        adam_step(st, p, Gradients<double>{Array<double>::zeros(Shape{2})});
        CHECK(p == before);
        CHECK(st.step == 1);
    }
    SUBCASE("one step on theta^2 descends") {
        ParameterSet<double> p;
        p.add("w", Array<double>::vector({1.0}));
        auto st = AdamState<double>::for_parameters(p, AdamHyper{0.1});
        adam_step(st, p, Gradients<double>{Array<double>::vector({2.0})});
        CHECK(p[0][0] < 1.0);
    }
    SUBCASE("quadratic converges") {
        ParameterSet<double> p;
        p.add("w", Array<double>::vector({1.5, -0.8}));
        auto st = AdamState<double>::for_parameters(p, AdamHyper{0.05});
        const double scale[2] = {1.0, 4.0};
        double loss = 0.0;
        for (int k = 0; k < 500; ++k) {
            Gradients<double> g{Array<double>::vector({2 * scale[0] * p[0][0], 2 * scale[1] * p[0][1]})};
            adam_step(st, p, g);
            loss = scale[0] * p[0][0] * p[0][0] + scale[1] * p[0][1] * p[0][1];
        }
        CHECK(loss < 1e-6);
        CHECK(st.step == 500);
    }
    SUBCASE("shape mismatch") {
        ParameterSet<double> p;
        p.add("w", Array<double>::vector({1.0}));
        auto st = AdamState<double>::for_parameters(p, AdamHyper{});
        CHECK_THROWS_AS(adam_step(st, p, Gradients<double>{Array<double>::zeros(Shape{2})}), ShapeError);
        CHECK_THROWS_AS(adam_step(st, p, Gradients<double>{}), ShapeError);
    }
    SUBCASE("matches a hand-written update") {
        ParameterSet<double> p;
        p.add("w", Array<double>::vector({0.5}));
        const AdamHyper h{0.01, 0.9, 0.99, 1e-8, 0.0};
        auto st = AdamState<double>::for_parameters(p, h);
        double theta = 0.5, m = 0, v = 0;
        for (int k = 1; k <= 3; ++k) {
            const double grad = std::sin(theta) + 0.1 * k;
            adam_step(st, p, Gradients<double>{Array<double>::vector({grad})});
            m = 0.9 * m + 0.1 * grad;
            v = 0.99 * v + 0.01 * grad * grad;
            const double mh = m / (1 - std::pow(0.9, k));
            const double vh = v / (1 - std::pow(0.99, k));
            theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(p[0][0] == doctest::Approx(theta).epsilon(1e-14));
        }
    }
}

TEST_CASE("philox known answers") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter rng draws are pure functions of their key") {
    const CounterRng a(42), b(42), c(43);
    CHECK(a.uniform(Stream::latent, 5, 1, 2) == b.uniform(Stream::latent, 5, 1, 2));
    CHECK(a.uniform(Stream::latent, 5, 1, 2) != c.uniform(Stream::latent, 5, 1, 2));
    CHECK(a.uniform(Stream::latent, 5, 1, 2) != a.uniform(Stream::metric, 5, 1, 2));

    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = a.uniform(Stream::dataset, i);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        const double z = a.normal(Stream::dataset, i, 1);
        sum += z;
        sq += z * z;
        CHECK(a.below(7, Stream::dataset, i, 2) < 7);
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.04);
}
