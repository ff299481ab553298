#include "gaf/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "gaf/checkpoint.hpp"
#include "gaf/config.hpp"
#include "gaf/image.hpp"
#include "gaf/io.hpp"
#include "gaf/metrics.hpp"
#include "gaf/transport.hpp"

#ifndef GAF_VERSION
#define GAF_VERSION "0.0.0"
#endif

namespace gaf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string code_version() {
    return GAF_VERSION;
}

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::optional<std::size_t> steps;
    std::string schedule;
};

/// Collects the files a command writes so the manifest can list their digests.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    const fs::path& dir() const { return dir_; }

    void text(const std::string& name, std::string_view content) {
        io::write_text(dir_ / name, content);
        digests_[name] = io::sha256_hex(content);
    }

    void bytes(const std::string& name, std::span<const std::uint8_t> content) {
        io::write_file(dir_ / name, content);
        digests_[name] = io::sha256_hex(content);
    }

    /// Appends a line, writing `header` first when the file is new.
    void append_row(const std::string& name, const std::string& header, const std::string& row) {
        const fs::path p = dir_ / name;
        const bool fresh = !fs::exists(p);
        std::ofstream f(p, std::ios::app | std::ios::binary);
        if (!f) throw IoError("cannot open " + p.string() + " for appending");
        if (fresh) f << header << '\n';
        f << row << '\n';
        if (!f) throw IoError("failed writing " + p.string());
    }

    void manifest(const std::string& command, const ExperimentConfig& cfg, const json& extra) {
        const auto& s = cfg.seeds;
        json m = {
            {"command", command},
            {"code_version", code_version()},
            {"config_digest", config_digest(cfg)},
            {"config", to_json(cfg)},
            {"seeds",
             {{"root", s.root},
              {"data", s.data},
              {"holdout", s.holdout},
              {"model", s.model},
              {"train", s.train},
              {"sample", s.sample},
              {"transport", s.transport},
              {"eval", s.eval}}},
            {"outputs", digests_},
        };
        for (const auto& [k, v] : extra.items()) m[k] = v;
        io::write_text(dir_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    fs::path dir_;
    std::map<std::string, std::string> digests_;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
    json doc = json::object();
    if (!o.config_path.empty()) {
        std::string text;
        try {
            text = io::read_text(o.config_path);
        } catch (const IoError& e) {
            throw ConfigError(std::string("--config: ") + e.what());
        }
        try {
            doc = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError("--config: " + std::string(e.what()));
        }
    }
    for (const auto& s : o.sets) apply_override(doc, s);
    if (o.seed) doc["seed"] = *o.seed;
    if (o.steps) apply_override(doc, "sample.steps=" + std::to_string(*o.steps));
    if (!o.schedule.empty()) apply_override(doc, "sample.schedule=\"" + o.schedule + "\"");
    if (!o.out.empty()) doc["output"] = o.out;
    return parse_config(doc);
}

Checkpoint require_checkpoint(const CommonOptions& o) {
    if (o.checkpoint.empty()) {
        throw ConfigError("--checkpoint: required for this command");
    }
    return load_checkpoint(o.checkpoint);
}

json checkpoint_input(const CommonOptions& o) {
    return json{{"checkpoint", {{"path", o.checkpoint}, {"sha256", io::sha256_hex(io::read_file(o.checkpoint))}}}};
}

void require_dataset_match(const Checkpoint& ck, const ExperimentConfig& cfg) {
    const auto id = cfg.data.spec.identifier();
    if (!ck.train_config.dataset_id.empty() && ck.train_config.dataset_id != id) {
        throw ConfigError("data: checkpoint was trained on '" + ck.train_config.dataset_id + "', config describes '" +
                          id + "'");
    }
}

void check_class_list(const std::vector<std::size_t>& classes, std::size_t n, const char* where) {
    for (auto c : classes) {
        if (c >= n) throw ConfigError(std::string(where) + ": class " + std::to_string(c) + " out of range");
    }
}

std::vector<std::size_t> labels_of(const LabeledDataset& d) {
    return std::vector<std::size_t>(d.labels.begin(), d.labels.end());
}

std::string frame_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frames/frame_%03zu.csv", k);
    return buf;
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    Outputs w(cfg.output);
    const auto data = make_dataset(cfg.data.spec);
    w.bytes("dataset.bin", encode_dataset(data));
    w.bytes("data.ppm", scatter_ppm(data.points, labels_of(data)));

    std::optional<Trainer> trainer;
    json extra = json::object();
    if (!o.checkpoint.empty()) {
        auto ck = load_checkpoint(o.checkpoint);
        TrainConfig stored = ck.train_config;
        stored.iterations = cfg.train.iterations;
        if (ck.model_config != cfg.model || stored != cfg.train) {
            throw ConfigError("--checkpoint: was trained with a different model or train configuration");
        }
        if (ck.iteration > cfg.train.iterations) {
            throw ConfigError("--checkpoint: already past train.iterations");
        }
        extra = checkpoint_input(o);
        ck.train_config = stored;
        trainer.emplace(std::move(ck), data);
    } else {
        trainer.emplace(cfg.model, cfg.train, data);
    }

    std::vector<LogRow> log;
    trainer->run_until(
        cfg.train.iterations, [&](const LogRow& row) { log.push_back(row); },
        [&](const Checkpoint& ck) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoints/step_%08llu.ckpt", static_cast<unsigned long long>(ck.iteration));
            w.bytes(name, encode_checkpoint(ck));
        });
    const auto ck = trainer->checkpoint();
    const auto bytes = encode_checkpoint(ck);
    w.bytes("checkpoint.ckpt", bytes);
    w.text("loss.csv", format_loss_csv(log));
    w.manifest("train", cfg, extra);
    json summary = {{"iterations", ck.iteration}, {"checkpoint", (w.dir() / "checkpoint.ckpt").string()},
                    {"sha256", io::sha256_hex(bytes)}};
    if (!log.empty()) summary["loss_total"] = log.back().loss.total;
    out << summary.dump() << '\n';
    return 0;
}

int cmd_sample(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    const auto ck = require_checkpoint(o);
    const auto model = ck.model();
    Outputs w(cfg.output);
    const auto grid = TimeGrid::make(cfg.sample.steps, cfg.sample.schedule, cfg.train.t_eps);
    std::vector<float> all;
    std::vector<std::size_t> groups;
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
        const auto z0 = sample_latents(cfg.sample.per_class, model.data_dim(), cfg.seeds.sample, c);
        const auto traj = euler_integrate(model, z0, grid, VelocityQuery::single(c, model.num_classes()));
        const auto& x = traj.final_state();
        w.text("samples_class" + std::to_string(c) + ".csv", points_csv(x));
        w.text("trajectory_class" + std::to_string(c) + ".csv", trajectory_csv(traj, 0));
        all.insert(all.end(), x.values().begin(), x.values().end());
        groups.insert(groups.end(), x.rows(), c);
    }
    const Array<float> pts(Shape{groups.size(), model.data_dim()}, std::move(all));
    if (model.data_dim() >= 2) w.bytes("samples.ppm", scatter_ppm(pts, groups));
    w.manifest("sample", cfg, checkpoint_input(o));
    out << json{{"classes", model.num_classes()}, {"per_class", cfg.sample.per_class}, {"steps", cfg.sample.steps}}.dump()
        << '\n';
    return 0;
}

int cmd_interp(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    const auto ck = require_checkpoint(o);
    const auto model = ck.model();
    check_class_list(cfg.transport.pair, model.num_classes(), "transport.pair");
    Outputs w(cfg.output);
    const ModelSource<float> source(model);
    const auto alphas = uniform_alphas(cfg.transport.alpha_steps);
    const auto z0 = sample_latents(cfg.transport.latents, model.data_dim(), cfg.seeds.transport);
    const auto i = cfg.transport.pair[0];
    const auto j = cfg.transport.pair[1];
    const auto frames = interpolate_pair(source, i, j, alphas, z0, cfg.sample_options());
    json list = json::array();
    std::vector<float> all;
    std::vector<std::size_t> groups;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto name = frame_name(k);
        w.text(name, points_csv(frames[k]));
        list.push_back({{"frame", k}, {"leg", 0}, {"alpha", alphas[k]},
                        {"weights", VelocityQuery::pair(i, j, alphas[k], model.num_classes()).weights}, {"file", name}});
        all.insert(all.end(), frames[k].values().begin(), frames[k].values().end());
        groups.insert(groups.end(), frames[k].rows(), k);
    }
    w.text("frames.json", json{{"pair", {i, j}}, {"seed", cfg.seeds.transport}, {"frames", list}}.dump(2) + "\n");
    if (model.data_dim() >= 2) {
        w.bytes("interp.ppm", scatter_ppm(Array<float>(Shape{groups.size(), model.data_dim()}, std::move(all)), groups));
    }
    w.manifest("interp", cfg, checkpoint_input(o));
    out << json{{"frames", frames.size()}, {"latents", z0.rows()}}.dump() << '\n';
    return 0;
}

int cmd_cycle(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    const auto ck = require_checkpoint(o);
    const auto model = ck.model();
    check_class_list(cfg.transport.cycle, model.num_classes(), "transport.cycle");
    Outputs w(cfg.output);
    const ModelSource<float> source(model);
    const auto z0 = sample_latents(cfg.transport.latents, model.data_dim(), cfg.seeds.transport);
    CycleResult<float> shared;
    try {
        shared = cyclic_transport(source, cfg.transport.cycle, z0, cfg.transport.alpha_steps, cfg.sample_options());
    } catch (const ValueError& e) {
        throw ConfigError(std::string("transport.cycle: ") + e.what());
    }
    const auto chained = chained_cycle(source, cfg.transport.cycle, z0, cfg.sample_options());

    auto list = frames_manifest(shared.frames);
    for (std::size_t k = 0; k < shared.frames.size(); ++k) {
        const auto name = frame_name(k);
        w.text(name, points_csv(shared.frames[k].sample));
        list[k]["file"] = name;
    }
    w.text("frames.json", json{{"cycle", cfg.transport.cycle}, {"seed", cfg.seeds.transport}, {"frames", list}}.dump(2) + "\n");

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const json report = {
        {"closure_distance", shared.max_closure()},
        {"mean_closure_distance", mean(shared.closure)},
        {"latents", z0.rows()},
        {"cycle", cfg.transport.cycle},
        {"steps", cfg.sample.steps},
        {"chained", {{"closure_distance", chained.max_closure()}, {"mean_closure_distance", mean(chained.closure)}}},
    };
    w.text("closure.json", report.dump(2) + "\n");
    w.manifest("cycle", cfg, checkpoint_input(o));
    out << report.dump() << '\n';
    return 0;
}

int cmd_bary(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    const auto ck = require_checkpoint(o);
    const auto model = ck.model();
    const auto& cls = cfg.transport.bary_classes;
    check_class_list(cls, model.num_classes(), "transport.bary_classes");
    if (cls[0] == cls[1] || cls[1] == cls[2] || cls[0] == cls[2]) {
        throw ConfigError("transport.bary_classes: classes must be distinct");
    }
    Outputs w(cfg.output);
    const ModelSource<float> source(model);
    const auto z0 = sample_latents(cfg.transport.latents, model.data_dim(), cfg.seeds.transport);
    const auto grid = barycentric_grid(source, cls[0], cls[1], cls[2], cfg.transport.bary_resolution, z0, cfg.sample_options());
    w.text("grid.csv", grid_csv(grid, 0));
    std::vector<float> all;
    std::vector<std::size_t> groups;
    for (const auto& cell : grid.cells) {
        const double ws[3] = {cell.weights.alpha, cell.weights.beta, cell.weights.gamma};
        const std::size_t dominant = static_cast<std::size_t>(std::max_element(ws, ws + 3) - ws);
        all.insert(all.end(), cell.sample.values().begin(), cell.sample.values().end());
        groups.insert(groups.end(), cell.sample.rows(), cls[dominant]);
    }
    if (model.data_dim() >= 2) {
        w.bytes("bary.ppm", scatter_ppm(Array<float>(Shape{groups.size(), model.data_dim()}, std::move(all)), groups));
    }
    w.manifest("bary", cfg, checkpoint_input(o));
    out << json{{"resolution", grid.resolution}, {"cells", grid.cells.size()}, {"latents", z0.rows()}}.dump() << '\n';
    return 0;
}

int cmd_eval(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    const auto ck = require_checkpoint(o);
    require_dataset_match(ck, cfg);
    const auto model = ck.model();
    Outputs w(cfg.output);
    const auto data = make_dataset(cfg.data.spec);
    const auto holdout = make_holdout(data, cfg.data.holdout_per_class, cfg.seeds.holdout);
    const auto report = evaluate(model, data, holdout, cfg.eval_options());
    json j = report.to_json();
    j["checkpoint_iteration"] = ck.iteration;
    w.text("report.json", j.dump(2) + "\n");
    w.append_row("eval.csv", EvalReport::csv_header(model.num_classes()), report.csv_row());
    w.manifest("eval", cfg, checkpoint_input(o));
    out << j.dump() << '\n';
    return 0;
}

int cmd_steps_sweep(const CommonOptions& o, std::ostream& out) {
    const auto cfg = resolve_config(o);
    const auto ck = require_checkpoint(o);
    require_dataset_match(ck, cfg);
    const auto model = ck.model();
    Outputs w(cfg.output);
    const auto data = make_dataset(cfg.data.spec);
    const auto holdout = make_holdout(data, cfg.data.holdout_per_class, cfg.seeds.holdout);
    const ModelSource<float> source(model);
    std::ostringstream csv;
    csv.precision(17);
    csv << "steps";
    for (std::size_t c = 0; c < model.num_classes(); ++c) csv << ",energy_" << c;
    csv << ",energy_mean\n";
    json rows = json::array();
    for (auto n : cfg.sample.sweep) {
        const SampleOptions opts{n, cfg.sample.schedule, cfg.train.t_eps};
        std::vector<double> e;
        for (std::size_t c = 0; c < model.num_classes(); ++c) {
            const auto z0 = sample_latents(cfg.eval.samples_per_class, model.data_dim(), cfg.seeds.eval, c);
            e.push_back(energy_distance(generate(source, c, z0, opts), holdout.class_points(c)));
        }
        double m = 0.0;
        csv << n;
        for (double x : e) {
            csv << ',' << x;
            m += x;
        }
        m /= static_cast<double>(e.size());
        csv << ',' << m << '\n';
        rows.push_back({{"steps", n}, {"energy", e}, {"energy_mean", m}});
    }
    w.text("steps_sweep.csv", csv.str());
    w.manifest("steps-sweep", cfg, checkpoint_input(o));
    out << rows.dump() << '\n';
    return 0;
}

void print_error(std::ostream& err, const char* kind, const std::string& message) {
    err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Generative Anchored Fields: train, sample and transport on synthetic 2D data", "gaf"};
    app.require_subcommand(1);
    app.fallthrough();
    CommonOptions o;
    app.add_option("--config", o.config_path, "Experiment configuration (JSON)");
    app.add_option("--set", o.sets, "Override, e.g. --set train.iterations=500")->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--seed", o.seed, "Top-level seed");
    app.add_option("--checkpoint", o.checkpoint, "Checkpoint to read (train: resume from it)");
    app.add_option("--steps", o.steps, "Sampling steps")->check(CLI::PositiveNumber);
    app.add_option("--schedule", o.schedule, "Time grid")->check(CLI::IsMember({"linear", "cosine"}));

    using Handler = int (*)(const CommonOptions&, std::ostream&);
    const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
        {"train", "Train on a generated dataset; writes checkpoint.ckpt and loss.csv", cmd_train},
        {"sample", "Generate per-class samples from a checkpoint", cmd_sample},
        {"interp", "Pairwise velocity interpolation frames", cmd_interp},
        {"cycle", "Cyclic transport frames and closure report", cmd_cycle},
        {"bary", "Barycentric blending grid over three classes", cmd_bary},
        {"eval", "Distributional and anchoring metrics", cmd_eval},
        {"steps-sweep", "Sample quality versus number of Euler steps", cmd_steps_sweep},
    };
    std::map<const CLI::App*, Handler> handlers;
    for (const auto& [name, help, fn] : commands) {
        handlers[app.add_subcommand(name, help)] = fn;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return exit_config_error;
    }

    try {
        for (const auto* sub : app.get_subcommands()) {
            return handlers.at(sub)(o, out);
        }
        return exit_config_error;
    } catch (const ConfigError& e) {
        print_error(err, "config", e.what());
        return exit_config_error;
    } catch (const std::exception& e) {
        print_error(err, "runtime", e.what());
        return exit_runtime_error;
    }
}

void tune_allocator() {
#ifdef __GLIBC__
    // Batch-sized arrays are allocated and freed every integration step; with
    // the default thresholds each one is mmapped or trimmed back, and page
    // faults dominate the run time.
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace gaf
