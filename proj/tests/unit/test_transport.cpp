#include <doctest.h>

#include <cmath>

#include "gaf/objective.hpp"
#include "gaf/transport.hpp"
#include "test_support.hpp"

using namespace gaf;
using gaf::test::Gen;

namespace {

// Per-class affine fields v_m(x) = a_m x + b_m, blended linearly in the weights.
class AffineSource final : public FieldSource<double> {
public:
    AffineSource(std::vector<double> a, std::vector<double> b, std::size_t d) : a_(std::move(a)), b_(std::move(b)), d_(d) {}
    std::size_t num_classes() const override { return a_.size(); }
    std::size_t dim() const override { return d_; }
    std::unique_ptr<VelocityField<double>> field(const VelocityQuery& query) const override {
        query.validate(num_classes());
        return std::make_unique<Field>(*this, query.weights);
    }

private:
    struct Field final : VelocityField<double> {
        Field(const AffineSource& s, std::vector<double> w) : src(s), weights(std::move(w)) {}
        std::size_t dim() const override { return src.d_; }
        Array<double> operator()(const Array<double>& x, double) const override {
            Array<double> v(x.shape());
            for (std::size_t m = 0; m < weights.size(); ++m) {
                if (weights[m] == 0.0) continue;
                for (std::size_t i = 0; i < x.size(); ++i) v[i] += weights[m] * (src.a_[m] * x[i] + src.b_[m]);
            }
            return v;
        }
        const AffineSource& src;
        std::vector<double> weights;
    };

    std::vector<double> a_, b_;
    std::size_t d_;
};

GafConfig small_model(std::size_t classes) {
    GafConfig c;
    c.trunk_width = 16;
    c.trunk_depth = 2;
    c.time_embed = 8;
    c.num_classes = classes;
    c.zero_init_heads = false;
    c.seed = 31;
    return c;
}

double norm_diff(const Array<double>& a, const Array<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

SampleOptions steps(std::size_t n, double t_eps = 1e-3) { return SampleOptions{n, Schedule::linear, t_eps}; }

}  // namespace

TEST_CASE("generate follows the exact field to the data endpoint") {
    // A constant field z_x - z_y sends z_y to z_x in a single step with t_eps = 0.
    const AffineSource src({0.0, 0.0}, {2.0, -1.0}, 2);
    const Array<double> z0(Shape{1, 2}, {0.5, -0.5});
    const auto out = generate(src, 0, z0, steps(1, 0.0));
    CHECK(out[0] == 2.5);
    CHECK(out[1] == 1.5);
    CHECK(generate(src, 1, z0, steps(1, 0.0))[0] == -0.5);
}

TEST_CASE("plans chain legs state-continuously") {
    const AffineSource src({-1.0, 0.5}, {0.0, 1.0}, 1);
    const Array<double> z0(Shape{2, 1}, {1.0, -2.0});
    TransportPlan plan;
    plan.legs.push_back({VelocityQuery::single(0, 2), Direction::forward, 5, Schedule::linear, 1e-3});
    plan.legs.push_back({VelocityQuery::single(1, 2), Direction::reverse, 3, Schedule::cosine, 1e-3});
    plan.legs.push_back({VelocityQuery::pair(0, 1, 0.25, 2), Direction::forward, 4, Schedule::linear, 1e-3});
    const auto r = execute_plan(src, z0, plan);
    REQUIRE(r.legs.size() == 3);
    CHECK(r.legs[0].states.front() == z0);
    CHECK(r.legs[1].states.front() == r.legs[0].final_state());
    CHECK(r.legs[2].states.front() == r.legs[1].final_state());
    CHECK(r.legs[1].size() == 4);

    plan.legs[1].steps = 0;
    CHECK_THROWS_AS(execute_plan(src, z0, plan), ValueError);
    CHECK_THROWS_AS(execute_plan(src, z0, TransportPlan{}), ValueError);
}

TEST_CASE("encode-decode round trip on a linear field converges as 1/N") {
    const AffineSource src({-1.0, -1.0}, {0.0, 0.0}, 2);
    Gen g(6);
    const auto x = g.array<double>({10, 2});
    double prev = 0.0;
    for (std::size_t n : {16u, 32u, 64u, 128u}) {
        const auto back = encode_decode(src, x, 0, 0, steps(n));
        const double err = norm_diff(back, x);
        CHECK(err > 0.0);
        if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.1));
        prev = err;
    }
    // The per-step factor is (1 + h)(1 - h), so the round trip is a pure contraction.
    const double h = (1.0 - 2e-3) / 8.0;
    const auto back = encode_decode(src, x, 0, 0, steps(8));
    CHECK(back[0] == doctest::Approx(x[0] * std::pow(1.0 - h * h, 8)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_class_transport(src, x, 1, 1, steps(4)), ValueError);
    CHECK_THROWS_AS(cross_class_transport(src, x, 0, 2, steps(4)), ValueError);
    CHECK(cross_class_transport(src, x, 0, 1, steps(4)) == encode_decode(src, x, 0, 1, steps(4)));
    CHECK_THROWS_AS(encode_decode(src, x, 0, 1, steps(0)), ValueError);
}

TEST_CASE("interpolation endpoints reproduce pure generations bitwise") {
    const GafModel<double> model(small_model(3));
    const ModelSource<double> src(model);
    const auto z0 = sample_latents(16, 2, 3).cast<double>();
    const auto alphas = uniform_alphas(11);
    CHECK(alphas.front() == 0.0);
    CHECK(alphas.back() == 1.0);
    CHECK(alphas[5] == doctest::Approx(0.5).epsilon(1e-15));
    const auto frames = interpolate_pair(src, 0, 2, alphas, z0, steps(20));
    REQUIRE(frames.size() == 11);
    CHECK(frames.front() == generate(src, 0, z0, steps(20)));
    CHECK(frames.back() == generate(src, 2, z0, steps(20)));
    CHECK(frames[5] != frames.front());

    CHECK_THROWS_AS(uniform_alphas(1), ValueError);
    CHECK_THROWS_AS(interpolate_pair(src, 0, 1, {0.0, 1.5}, z0, steps(4)), ValueError);
}

TEST_CASE("shared-latent cycle closes exactly") {
    const GafModel<double> model(small_model(3));
    const ModelSource<double> src(model);
    const auto z0 = sample_latents(32, 2, 4).cast<double>();
    const auto res = cyclic_transport(src, {0, 1, 2, 0}, z0, 5, steps(10));
    CHECK(res.frames.size() == 3 * 5);
    CHECK(res.closure.size() == 32);
    CHECK(res.max_closure() == 0.0);
    CHECK(res.frames.front().sample == generate(src, 0, z0, steps(10)));
    // Adjacent legs meet at the pure generation of the shared class.
    CHECK(res.frames[4].sample == res.frames[5].sample);

    const auto two = cyclic_transport(src, {1, 2, 1}, z0, 4, steps(6));
    REQUIRE(two.frames.size() == 8);
    for (std::size_t f = 0; f < 8; ++f) {
        const auto& a = two.frames[f].query.weights;
        const auto& b = two.frames[7 - f].query.weights;
        for (std::size_t m = 0; m < 3; ++m) CHECK(a[m] == doctest::Approx(b[m]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(cyclic_transport(src, {0, 1}, z0, 4, steps(4)), ValueError);
    CHECK_THROWS_AS(cyclic_transport(src, {0, 1, 2}, z0, 4, steps(4)), ValueError);
    CHECK_THROWS_AS(cyclic_transport(src, {0, 0, 0}, z0, 4, steps(4)), ValueError);
    CHECK_THROWS_AS(cyclic_transport(src, {0, 5, 0}, z0, 4, steps(4)), ValueError);
    CHECK_THROWS_AS(cyclic_transport(src, {0, 1, 0}, z0, 1, steps(4)), ValueError);
}

TEST_CASE("chained cycle error shrinks as 1/N on the linear field") {
    const AffineSource src({-1.0, -1.0, -1.0}, {0.0, 0.0, 0.0}, 2);
    Gen g(2);
    const auto z0 = g.array<double>({20, 2});
    std::vector<double> ns, errs;
    for (std::size_t n : {8u, 16u, 32u, 64u, 128u}) {
        const auto res = chained_cycle(src, {0, 1, 2, 0}, z0, steps(n));
        CHECK(res.frames.size() == 4);
        ns.push_back(std::log(static_cast<double>(n)));
        errs.push_back(std::log(res.max_closure()));
    }
    const double slope = (errs.back() - errs.front()) / (ns.back() - ns.front());
    CHECK(slope == doctest::Approx(-1.0).epsilon(0.05));
}

TEST_CASE("square-to-simplex map") {
    Gen g(8);
    for (int i = 0; i < 1000; ++i) {
        const auto w = square_to_simplex(g.uniform(), g.uniform());
        CHECK(std::abs(w.alpha + w.beta + w.gamma - 1.0) <= 1e-12);
        CHECK(w.alpha >= 0.0);
        CHECK(w.beta >= 0.0);
        CHECK(w.gamma >= 0.0);
    }
    const auto corner = square_to_simplex(1.0, 0.0);
    CHECK(corner.alpha == 1.0);
    CHECK(corner.beta == 0.0);
    CHECK(square_to_simplex(0.0, 0.0).beta == 1.0);
    CHECK(square_to_simplex(0.3, 1.0).gamma == 1.0);
    CHECK(square_to_simplex(0.3, 1.0).alpha == 0.0);
    CHECK_THROWS_AS(square_to_simplex(1.1, 0.0), ValueError);
    CHECK_THROWS_AS(bary_query(0, 0, 1, corner, 3), ValueError);
    CHECK_THROWS_AS(bary_query(0, 1, 3, corner, 3), ValueError);
}

TEST_CASE("barycentric grid corners and edges") {
    const GafModel<double> model(small_model(4));
    const ModelSource<double> src(model);
    const auto z0 = sample_latents(8, 2, 5).cast<double>();
    const auto grid = barycentric_grid(src, 3, 0, 2, 5, z0, steps(10));
    CHECK(grid.cells.size() == 25);
    CHECK(grid.at(4, 0).u == 1.0);
    CHECK(grid.at(4, 0).sample == generate(src, 3, z0, steps(10)));
    CHECK(grid.at(0, 0).sample == generate(src, 0, z0, steps(10)));
    const auto pure_k = generate(src, 2, z0, steps(10));
    for (std::size_t r = 0; r < 5; ++r) CHECK(grid.at(r, 4).sample == pure_k);
    for (const auto& cell : grid.cells) {
        CHECK(std::abs(cell.weights.alpha + cell.weights.beta + cell.weights.gamma - 1.0) <= 1e-12);
    }

    const auto csv = grid_csv(grid, 1);
    CHECK(csv.rfind("row,col,alpha,beta,gamma,x_0,x_1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
    CHECK_THROWS_AS(barycentric_grid(src, 0, 1, 2, 1, z0, steps(4)), ValueError);
    CHECK_THROWS_AS(barycentric_grid(src, 0, 1, 1, 3, z0, steps(4)), ValueError);
}

TEST_CASE("swap-configuration traversal stays on the bridge") {
    Gen g(12);
    const SwapKind kinds[] = {SwapKind::swap, SwapKind::flip, SwapKind::swap_and_flip};
    for (int trial = 0; trial < 200; ++trial) {
        BridgeConfig<double> cfg{g.array<double>({2}), g.array<double>({2}), g.uniform(), 0};
        const auto x_t = bridge_point(cfg);
        const auto x_rev = make_bridge(cfg.z_y, cfg.z_x, 1.0 - cfg.t, 0).x_t;
        bool reversed = false;
        for (int step = 0; step < 12; ++step) {
            const auto kind = kinds[g.below(3)];
            cfg = swap_config(cfg, kind);
            if (kind != SwapKind::swap_and_flip) reversed = !reversed;
            CHECK(cfg.t >= 0.0);
            CHECK(cfg.t <= 1.0);
            CHECK(norm_diff(bridge_point(cfg), reversed ? x_rev : x_t) <= 1e-13);
        }
    }
}

TEST_CASE("exports") {
    const Array<double> pts(Shape{2, 2}, {1.0, 2.0, 3.0, 4.5});
    CHECK(points_csv(pts) == "x_0,x_1\n1,2\n3,4.5\n");
    const AffineSource src({0.0, 0.0}, {1.0, 2.0}, 2);
    const auto res = cyclic_transport(src, {0, 1, 0}, pts, 2, steps(2));
    const auto manifest = frames_manifest(res.frames);
    REQUIRE(manifest.size() == 4);
    CHECK(manifest[1]["leg"] == 0);
    CHECK(manifest[1]["alpha"] == 1.0);
    CHECK(manifest[1]["weights"][1] == 1.0);
}
