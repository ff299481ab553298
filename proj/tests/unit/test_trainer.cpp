#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gaf/checkpoint.hpp"
#include "test_support.hpp"

using namespace gaf;

namespace {

GafConfig small_model(std::size_t classes = 2, std::uint64_t seed = 5) {
    GafConfig c;
    c.trunk_width = 16;
    c.trunk_depth = 2;
    c.time_embed = 8;
    c.num_classes = classes;
    c.seed = seed;
    return c;
}

TrainConfig small_train(std::size_t iterations, std::uint64_t seed = 9) {
    TrainConfig t;
    t.batch_size = 32;
    t.iterations = iterations;
    t.seed = seed;
    t.log_interval = 10;
    return t;
}

LabeledDataset two_gaussians(std::size_t per_class = 200) {
    DatasetSpec s;
    s.num_classes = 2;
    s.per_class = per_class;
    s.seed = 2;
    return make_dataset(s);
}

bool same_parameters(const ParameterSet<float>& a, const ParameterSet<float>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i) || !(a[i] == b[i])) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.t_eps = 0.5;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c = TrainConfig{};
    c.t_eps = 0.0;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c = TrainConfig{};
    c.lambda_swap = -1.0;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ValueError);
    c = TrainConfig{};
    c.lr_final_ratio = 2.0;
    CHECK_THROWS_AS(c.validate(), ValueError);
    CHECK_THROWS_AS(parse_lr_schedule("step"), ValueError);
}

TEST_CASE("learning-rate schedules") {
    TrainConfig c;
    c.iterations = 100;
    c.lr_schedule = LrSchedule::constant;
    CHECK(c.learning_rate_at(0) == c.learning_rate);
    CHECK(c.learning_rate_at(99) == c.learning_rate);
    c.lr_schedule = LrSchedule::cosine;
    c.lr_final_ratio = 0.1;
    CHECK(c.learning_rate_at(0) == doctest::Approx(1e-3));
    CHECK(c.learning_rate_at(50) == doctest::Approx(0.55e-3));
    CHECK(c.learning_rate_at(100) == doctest::Approx(1e-4));
    CHECK(c.learning_rate_at(500) == doctest::Approx(1e-4));
    for (std::uint64_t i = 0; i < 100; ++i) CHECK(c.learning_rate_at(i + 1) <= c.learning_rate_at(i));
}

TEST_CASE("bridges drawn for a minibatch") {
    const auto ds = two_gaussians();
    const CounterRng rng(4);
    Array<float> zx;
    std::vector<std::size_t> classes;
    draw_minibatch(ds, 64, rng, 3, zx, classes);
    CHECK(zx.shape() == Shape{64, 2});
    const auto b = make_training_batch(zx, classes, rng, 3, 1e-3);
    for (std::size_t r = 0; r < 64; ++r) {
        CHECK(b.times[r] >= 1e-3f);
        CHECK(b.times[r] <= 1.0f - 1e-3f);
        for (std::size_t k = 0; k < 2; ++k) {
            const float expect = (1.0f - b.times[r]) * b.z_y.at(r, k) + b.times[r] * b.z_x.at(r, k);
            CHECK(std::abs(b.x_t.at(r, k) - expect) <= 1e-6f);
        }
    }
    // Same counter, same draws; another iteration, different draws.
    const auto again = make_training_batch(zx, classes, rng, 3, 1e-3);
    CHECK(again.z_y == b.z_y);
    CHECK(make_training_batch(zx, classes, rng, 4, 1e-3).z_y != b.z_y);
}

TEST_CASE("first step pair loss of an anchored model matches a loop") {
    const auto ds = two_gaussians();
    GafModel<float> model(small_model());
    auto adam = AdamState<float>::for_parameters(model.parameters(), AdamHyper{});
    const CounterRng rng(1);
    Array<float> zx;
    std::vector<std::size_t> classes;
    draw_minibatch(ds, 48, rng, 0, zx, classes);
    const auto batch = make_training_batch(zx, classes, rng, 0, 1e-3);
    const auto loss = train_step(model, adam, batch, 0.0, 0.0);

    double oracle = 0.0;
    for (std::size_t r = 0; r < 48; ++r) {
        const double t = batch.times[r];
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            const double x = batch.x_t.at(r, k);
            a += std::pow((1.0 - t) * x - batch.z_y.at(r, k), 2);
            b += std::pow(t * x - batch.z_x.at(r, k), 2);
        }
        oracle += (1.0 - t) * a / 2.0 + t * b / 2.0;
    }
    CHECK(std::abs(loss.pair - oracle / 48.0) <= 1e-6);
    CHECK(loss.res == 0.0);
    CHECK(loss.swap == 0.0);
    CHECK(adam.step == 1);
}

TEST_CASE("K heads only receive gradients from their own class") {
    GafConfig c = small_model(3);
    c.zero_init_heads = false;
    const GafModel<double> model(c);
    gaf::test::Gen g(2);
    TrainingBatch<double> batch{g.array<double>({6, 2}), g.array<double>({6, 2}), g.array<double>({6, 2}),
                                std::vector<double>(6, 0.3), std::vector<std::size_t>{0, 2, 0, 2, 2, 0}};
    Tape<double> tape;
    ParamBinder<double> bind(tape, model.parameters());
    const auto vars = build_gaf_loss(model, bind, batch, 0.003, 0.002);
    const auto grads = tape.backward(vars.total, model.parameters());
    bool saw_k0 = false;
    for (std::size_t p = 0; p < grads.size(); ++p) {
        const auto& name = model.parameters().name(p);
        double mag = 0.0;
        for (double v : grads[p].values()) mag += std::abs(v);
        if (name.rfind("head.k1", 0) == 0) CHECK(mag == 0.0);
        if (name.rfind("head.k0", 0) == 0 && mag > 0.0) saw_k0 = true;
    }
    CHECK(saw_k0);
}

TEST_CASE("training is deterministic and zero iterations keep the initialization") {
    const auto ds = two_gaussians();
    const auto zero = train(small_model(), small_train(0), ds);
    CHECK(same_parameters(zero.checkpoint.parameters, GafModel<float>(small_model()).parameters()));
    CHECK(zero.checkpoint.iteration == 0);

    const auto a = train(small_model(), small_train(100), ds);
    const auto b = train(small_model(), small_train(100), ds);
    CHECK(a.checkpoint == b.checkpoint);
    CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
    CHECK(a.log.size() == 11);
    for (const auto& row : a.log) {
        CHECK(std::isfinite(row.loss.total));
        CHECK(row.loss.total == doctest::Approx(row.loss.pair + 0.003 * row.loss.res + 0.002 * row.loss.swap));
    }
    const auto other = train(small_model(), small_train(100, 10), ds);
    CHECK(!same_parameters(other.checkpoint.parameters, a.checkpoint.parameters));

    const auto csv = format_loss_csv(a.log);
    CHECK(csv.rfind("iter,loss_pair,loss_res,loss_swap,loss_total\n1,", 0) == 0);
}

TEST_CASE("resume equals an uninterrupted run") {
    const auto ds = two_gaussians();
    auto cfg = small_train(60);
    cfg.lr_schedule = LrSchedule::cosine;
    cfg.checkpoint_interval = 25;
    std::vector<Checkpoint> saved;
    const auto full = train(small_model(), cfg, ds, [&](const Checkpoint& c) { saved.push_back(c); });
    REQUIRE(saved.size() == 2);
    CHECK(saved[0].iteration == 25);

    const auto restored = decode_checkpoint(encode_checkpoint(saved[0]));
    Trainer resumed(restored, ds);
    resumed.run_until(60);
    CHECK(resumed.checkpoint() == full.checkpoint);
}

TEST_CASE("checkpoint files") {
    const auto ds = two_gaussians();
    const auto ck = train(small_model(3), small_train(5), make_dataset(DatasetSpec{})).checkpoint;
    const auto bytes = encode_checkpoint(ck);
    CHECK(std::memcmp(bytes.data(), "GAFCKPT1", 8) == 0);
    const auto back = decode_checkpoint(bytes);
    CHECK(back == ck);
    CHECK(encode_checkpoint(back) == bytes);

    const auto dir = gaf::test::temp_dir("trainer");
    save_checkpoint(dir / "a.ckpt", ck);
    CHECK(encode_checkpoint(load_checkpoint(dir / "a.ckpt")) == bytes);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    try {
        decode_checkpoint(truncated);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.section().rfind("array 'adam.v/", 0) == 0);
    }
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), ParseError);

    // Bump the format version inside the JSON header.
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    std::string header(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    const auto pos = header.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    header.replace(pos, 11, "\"version\":7");
    auto versioned = bytes;
    std::copy(header.begin(), header.end(), versioned.begin() + 16);
    CHECK_THROWS_AS(decode_checkpoint(versioned), UnsupportedVersionError);

    CHECK_THROWS_AS(Trainer(small_model(3), small_train(1), ds), ValueError);
}

TEST_CASE("strict configuration parsing") {
    const auto c = train_config_from_json({{"batch_size", 8}, {"lr_schedule", "cosine"}});
    CHECK(c.batch_size == 8);
    CHECK(c.lr_schedule == LrSchedule::cosine);
    CHECK(train_config_from_json(to_json(c)) == c);
    CHECK_THROWS_AS(train_config_from_json({{"batchsize", 8}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"batch_size", "eight"}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"lr_schedule", "step"}}), ConfigError);
    const auto m = gaf_config_from_json({{"trunk_width", 7}});
    CHECK(m.trunk_width == 7);
    CHECK(gaf_config_from_json(to_json(m)) == m);
    CHECK_THROWS_AS(gaf_config_from_json({{"width", 7}}), ConfigError);
}

namespace {

struct Windows {
    LossBreakdown first, last;
};

Windows train_windows(std::uint64_t seed, bool zero_heads) {
    const auto ds = two_gaussians(500);
    GafConfig mc = small_model(2, seed);
    mc.zero_init_heads = zero_heads;
    auto cfg = small_train(1500, seed);
    cfg.batch_size = 64;
    cfg.log_interval = 1;
    const auto res = train(mc, cfg, ds);
    auto window = [&](std::size_t from) {
        LossBreakdown m;
        for (std::size_t i = from; i < from + 50; ++i) {
            m.total += res.log[i].loss.total / 50.0;
            m.swap += res.log[i].loss.swap / 50.0;
        }
        return m;
    };
    return {window(0), window(res.log.size() - 50)};
}

}  // namespace

TEST_CASE("training reduces the total loss on two gaussians") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto w = train_windows(seed, true);
        CHECK(w.last.total < w.first.total);
    }
}

// The swap term cannot shrink at the default weights: for pair-optimal twins at
// t = 1/2, J_res + K~_res = E[z_y + z_x | x] - x = x, so the pair loss pulls the
// residuals away from the antisymmetric targets and lambda_swap = 0.002 is too
// weak to resist. Kept as an expected failure so the claim stays visible.
TEST_CASE("swap loss decreases during training" * doctest::should_fail()) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto w = train_windows(seed, false);
        CHECK(w.last.swap < w.first.swap);
    }
}

TEST_CASE("pair-optimal residuals violate the antisymmetric targets at the midpoint") {
    gaf::test::Gen g(6);
    for (int trial = 0; trial < 50; ++trial) {
        const double zy = g.normal(), zx = g.normal(), x = 0.5 * zy + 0.5 * zx;
        // Conditional means given x at t = 1/2 for a point mass: the endpoints themselves.
        const double j_res = zy - 0.5 * x, k_res = zx - 0.5 * x;
        CHECK(std::abs((j_res + k_res) - x) <= 1e-12);
    }
}
