#include "gaf/config.hpp"

#include <set>

#include "gaf/checkpoint.hpp"
#include "gaf/io.hpp"
#include "gaf/rng.hpp"

namespace gaf {

using nlohmann::json;

namespace {

enum SeedPurpose : std::uint64_t { p_data = 1, p_holdout, p_model, p_train, p_sample, p_transport, p_eval };

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <class V>
bool read_opt(const json& j, const char* key, V& out, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return false;
    try {
        out = it->get<V>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
    return true;
}

json section(const json& doc, const char* name) {
    const auto it = doc.find(name);
    return it == doc.end() ? json::object() : *it;
}

template <class F>
auto wrap_value_error(const std::string& where, F f) {
    try {
        return f();
    } catch (const ValueError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

}  // namespace

ExperimentConfig default_config() {
    return parse_config(json::object());
}

EvalOptions ExperimentConfig::eval_options() const {
    EvalOptions o;
    o.samples_per_class = eval.samples_per_class;
    o.steps = sample.steps;
    o.schedule = sample.schedule;
    o.projections = eval.projections;
    o.probe_samples = eval.probe_samples;
    o.t_eps = train.t_eps;
    o.seed = seeds.eval;
    return o;
}

SampleOptions ExperimentConfig::sample_options() const {
    return SampleOptions{sample.steps, sample.schedule, train.t_eps};
}

ExperimentConfig parse_config(const json& doc) {
    reject_unknown(doc, {"seed", "model", "train", "data", "sample", "transport", "eval", "output"}, "config");
    ExperimentConfig c;
    read_opt(doc, "seed", c.seeds.root, "config");
    std::string output;
    if (read_opt(doc, "output", output, "config")) c.output = output;
    const auto root = c.seeds.root;

    // data
    {
        const json j = section(doc, "data");
        reject_unknown(j, {"kind", "classes", "per_class", "dim", "seed", "holdout_per_class", "holdout_seed"}, "data");
        std::string kind = "gaussians";
        read_opt(j, "kind", kind, "data");
        c.data.spec.kind = wrap_value_error("data.kind", [&] { return parse_dataset_kind(kind); });
        read_opt(j, "classes", c.data.spec.num_classes, "data");
        read_opt(j, "per_class", c.data.spec.per_class, "data");
        read_opt(j, "dim", c.data.spec.dim, "data");
        read_opt(j, "holdout_per_class", c.data.holdout_per_class, "data");
        c.seeds.data = derive_seed(root, p_data);
        read_opt(j, "seed", c.seeds.data, "data");
        c.seeds.holdout = derive_seed(root, p_holdout);
        read_opt(j, "holdout_seed", c.seeds.holdout, "data");
        c.data.spec.seed = c.seeds.data;
        if (c.data.holdout_per_class == 0) throw ConfigError("data.holdout_per_class: must be positive");
    }

    // model
    {
        json j = section(doc, "model");
        GafConfig defaults;
        defaults.num_classes = c.data.spec.num_classes;
        defaults.data_dim = c.data.spec.dim;
        defaults.seed = derive_seed(root, p_model);
        c.model = gaf_config_from_json(j, defaults);
        if (c.model.num_classes != c.data.spec.num_classes) {
            throw ConfigError("model.num_classes: does not match data.classes");
        }
        if (c.model.data_dim != c.data.spec.dim) {
            throw ConfigError("model.data_dim: does not match data.dim");
        }
        c.seeds.model = c.model.seed;
        wrap_value_error("model", [&] {
            c.model.validate();
            return 0;
        });
    }

    // train
    {
        TrainConfig defaults;
        defaults.seed = derive_seed(root, p_train);
        c.train = train_config_from_json(section(doc, "train"), defaults);
        if (c.train.dataset_id.empty()) c.train.dataset_id = c.data.spec.identifier();
        c.seeds.train = c.train.seed;
        wrap_value_error("train", [&] {
            c.train.validate();
            return 0;
        });
    }

    // sample
    {
        const json j = section(doc, "sample");
        reject_unknown(j, {"steps", "schedule", "per_class", "sweep", "seed"}, "sample");
        read_opt(j, "steps", c.sample.steps, "sample");
        std::string schedule = "linear";
        read_opt(j, "schedule", schedule, "sample");
        c.sample.schedule = wrap_value_error("sample.schedule", [&] { return parse_schedule(schedule); });
        read_opt(j, "per_class", c.sample.per_class, "sample");
        read_opt(j, "sweep", c.sample.sweep, "sample");
        c.seeds.sample = derive_seed(root, p_sample);
        read_opt(j, "seed", c.seeds.sample, "sample");
        if (c.sample.steps == 0) throw ConfigError("sample.steps: must be positive");
        if (c.sample.per_class == 0) throw ConfigError("sample.per_class: must be positive");
        for (auto n : c.sample.sweep) {
            if (n == 0) throw ConfigError("sample.sweep: step counts must be positive");
        }
    }

    // transport
    {
        const json j = section(doc, "transport");
        reject_unknown(j, {"pair", "alpha_steps", "cycle", "bary_classes", "bary_resolution", "latents", "seed"},
                       "transport");
        auto& t = c.transport;
        read_opt(j, "pair", t.pair, "transport");
        read_opt(j, "alpha_steps", t.alpha_steps, "transport");
        read_opt(j, "cycle", t.cycle, "transport");
        read_opt(j, "bary_classes", t.bary_classes, "transport");
        read_opt(j, "bary_resolution", t.bary_resolution, "transport");
        read_opt(j, "latents", t.latents, "transport");
        c.seeds.transport = derive_seed(root, p_transport);
        read_opt(j, "seed", c.seeds.transport, "transport");
        if (t.pair.size() != 2) throw ConfigError("transport.pair: expected two class indices");
        if (t.bary_classes.size() != 3) throw ConfigError("transport.bary_classes: expected three class indices");
        if (t.alpha_steps < 2) throw ConfigError("transport.alpha_steps: must be at least 2");
        if (t.bary_resolution < 2) throw ConfigError("transport.bary_resolution: must be at least 2");
        if (t.latents == 0) throw ConfigError("transport.latents: must be positive");
    }

    // eval
    {
        const json j = section(doc, "eval");
        reject_unknown(j, {"samples_per_class", "projections", "probe_samples", "seed"}, "eval");
        read_opt(j, "samples_per_class", c.eval.samples_per_class, "eval");
        read_opt(j, "projections", c.eval.projections, "eval");
        read_opt(j, "probe_samples", c.eval.probe_samples, "eval");
        c.seeds.eval = derive_seed(root, p_eval);
        read_opt(j, "seed", c.seeds.eval, "eval");
        if (c.eval.samples_per_class == 0 || c.eval.projections == 0 || c.eval.probe_samples == 0) {
            throw ConfigError("eval: sample, projection and probe counts must be positive");
        }
    }
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set: expected section.key=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
        doc[path] = value;
        return;
    }
    const std::string sec = path.substr(0, dot);
    const std::string key = path.substr(dot + 1);
    if (key.empty() || key.find('.') != std::string::npos) {
        throw ConfigError("--set: expected section.key=value, got '" + assignment + "'");
    }
    if (!doc.contains(sec)) doc[sec] = json::object();
    if (!doc[sec].is_object()) throw ConfigError("--set: '" + sec + "' is not a section");
    doc[sec][key] = value;
}

json to_json(const ExperimentConfig& c) {
    return json{
        {"seed", c.seeds.root},
        {"output", c.output.string()},
        {"model", to_json(c.model)},
        {"train", to_json(c.train)},
        {"data",
         {{"kind", to_string(c.data.spec.kind)},
          {"classes", c.data.spec.num_classes},
          {"per_class", c.data.spec.per_class},
          {"dim", c.data.spec.dim},
          {"seed", c.seeds.data},
          {"holdout_per_class", c.data.holdout_per_class},
          {"holdout_seed", c.seeds.holdout}}},
        {"sample",
         {{"steps", c.sample.steps},
          {"schedule", to_string(c.sample.schedule)},
          {"per_class", c.sample.per_class},
          {"sweep", c.sample.sweep},
          {"seed", c.seeds.sample}}},
        {"transport",
         {{"pair", c.transport.pair},
          {"alpha_steps", c.transport.alpha_steps},
          {"cycle", c.transport.cycle},
          {"bary_classes", c.transport.bary_classes},
          {"bary_resolution", c.transport.bary_resolution},
          {"latents", c.transport.latents},
          {"seed", c.seeds.transport}}},
        {"eval",
         {{"samples_per_class", c.eval.samples_per_class},
          {"projections", c.eval.projections},
          {"probe_samples", c.eval.probe_samples},
          {"seed", c.seeds.eval}}},
    };
}

std::string config_digest(const ExperimentConfig& config) {
    json j = to_json(config);
    // Where results land does not change what they are.
    j.erase("output");
    return io::sha256_hex(j.dump());
}

}  // namespace gaf
