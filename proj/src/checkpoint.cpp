#include "gaf/checkpoint.hpp"

#include <set>

namespace gaf {

using nlohmann::json;

namespace {

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
void read_opt(const json& j, const char* key, V& out, const std::string& where) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<V>();
        } catch (const json::exception& e) {
            throw ConfigError(where + "." + key + ": " + e.what());
        }
    }
}

json shape_json(const Shape& s) {
    return json(std::vector<std::size_t>(s.begin(), s.end()));
}

}  // namespace

json to_json(const GafConfig& c) {
    return json{{"data_dim", c.data_dim},
                {"trunk_width", c.trunk_width},
                {"trunk_depth", c.trunk_depth},
                {"time_embed", c.time_embed},
                {"num_classes", c.num_classes},
                {"head_hidden", c.head_hidden},
                {"head_layers", c.head_layers},
                {"class_conditioning", c.class_conditioning},
                {"zero_init_heads", c.zero_init_heads},
                {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"iterations", c.iterations},
                {"learning_rate", c.learning_rate},
                {"lambda_res", c.lambda_res},
                {"lambda_swap", c.lambda_swap},
                {"t_eps", c.t_eps},
                {"seed", c.seed},
                {"checkpoint_interval", c.checkpoint_interval},
                {"log_interval", c.log_interval},
                {"dataset_id", c.dataset_id},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_epsilon", c.adam_epsilon},
                {"weight_decay", c.weight_decay},
                {"lr_schedule", to_string(c.lr_schedule)},
                {"lr_final_ratio", c.lr_final_ratio}};
}

GafConfig gaf_config_from_json(const json& j, const GafConfig& defaults) {
    const std::string where = "model";
    reject_unknown(j, {"data_dim", "trunk_width", "trunk_depth", "time_embed", "num_classes", "head_hidden",
                       "head_layers", "class_conditioning", "zero_init_heads", "seed"},
                   where);
    GafConfig c = defaults;
    read_opt(j, "data_dim", c.data_dim, where);
    read_opt(j, "trunk_width", c.trunk_width, where);
    read_opt(j, "trunk_depth", c.trunk_depth, where);
    read_opt(j, "time_embed", c.time_embed, where);
    read_opt(j, "num_classes", c.num_classes, where);
    read_opt(j, "head_hidden", c.head_hidden, where);
    read_opt(j, "head_layers", c.head_layers, where);
    read_opt(j, "class_conditioning", c.class_conditioning, where);
    read_opt(j, "zero_init_heads", c.zero_init_heads, where);
    read_opt(j, "seed", c.seed, where);
    return c;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
    const std::string where = "train";
    reject_unknown(j, {"batch_size", "iterations", "learning_rate", "lambda_res", "lambda_swap", "t_eps", "seed",
                       "checkpoint_interval", "log_interval", "dataset_id", "beta1", "beta2", "adam_epsilon",
                       "weight_decay", "lr_schedule", "lr_final_ratio"},
                   where);
    TrainConfig c = defaults;
    read_opt(j, "batch_size", c.batch_size, where);
    read_opt(j, "iterations", c.iterations, where);
    read_opt(j, "learning_rate", c.learning_rate, where);
    read_opt(j, "lambda_res", c.lambda_res, where);
    read_opt(j, "lambda_swap", c.lambda_swap, where);
    read_opt(j, "t_eps", c.t_eps, where);
    read_opt(j, "seed", c.seed, where);
    read_opt(j, "checkpoint_interval", c.checkpoint_interval, where);
    read_opt(j, "log_interval", c.log_interval, where);
    read_opt(j, "dataset_id", c.dataset_id, where);
    read_opt(j, "beta1", c.beta1, where);
    read_opt(j, "beta2", c.beta2, where);
    read_opt(j, "adam_epsilon", c.adam_epsilon, where);
    read_opt(j, "weight_decay", c.weight_decay, where);
    read_opt(j, "lr_final_ratio", c.lr_final_ratio, where);
    std::string schedule = to_string(c.lr_schedule);
    read_opt(j, "lr_schedule", schedule, where);
    try {
        c.lr_schedule = parse_lr_schedule(schedule);
    } catch (const ValueError& e) {
        throw ConfigError(where + ".lr_schedule: " + e.what());
    }
    return c;
}

io::Bytes encode_checkpoint(const Checkpoint& ck) {
    const auto& params = ck.parameters;
    if (ck.adam.first_moment.size() != params.size() || ck.adam.second_moment.size() != params.size()) {
        throw ShapeError("checkpoint: Adam state does not match parameters");
    }
    json manifest = json::array();
    std::vector<const Array<float>*> arrays;
    std::uint64_t offset = 0;
    auto add = [&](const std::string& name, const Array<float>& a) {
        manifest.push_back({{"name", name}, {"shape", shape_json(a.shape())}, {"offset", offset}});
        offset += a.size() * sizeof(float);
        arrays.push_back(&a);
    };
    for (std::size_t i = 0; i < params.size(); ++i) add(params.name(i), params[i]);
    for (std::size_t i = 0; i < params.size(); ++i) add("adam.m/" + params.name(i), ck.adam.first_moment[i]);
    for (std::size_t i = 0; i < params.size(); ++i) add("adam.v/" + params.name(i), ck.adam.second_moment[i]);

    const auto& h = ck.adam.hyper;
    const json header = {
        {"format", "gaf-checkpoint"},
        {"version", checkpoint_format_version},
        {"model", to_json(ck.model_config)},
        {"train", to_json(ck.train_config)},
        {"iteration", ck.iteration},
        {"rng", {{"kind", "philox4x32-10"}, {"seed", ck.train_config.seed}, {"next_iteration", ck.iteration}}},
        {"adam",
         {{"step", ck.adam.step},
          {"learning_rate", h.learning_rate},
          {"beta1", h.beta1},
          {"beta2", h.beta2},
          {"epsilon", h.epsilon},
          {"weight_decay", h.weight_decay}}},
        {"parameter_count", params.size()},
        {"arrays", manifest},
    };
    const std::string text = header.dump();
    io::Bytes out;
    io::append_bytes(out, checkpoint_magic);
    io::append_le<std::uint64_t>(out, text.size());
    io::append_bytes(out, text);
    for (const auto* a : arrays) io::append_le_span<float>(out, a->values());
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::Reader reader(bytes);
    const auto magic = reader.take(checkpoint_magic.size(), "magic");
    if (!std::equal(magic.begin(), magic.end(), checkpoint_magic.begin())) {
        throw ParseError("magic", "not a checkpoint file");
    }
    const auto header_len = reader.read<std::uint64_t>("header length");
    const auto header_bytes = reader.take(header_len, "header");
    json header;
    try {
        header = json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const json::exception& e) {
        throw ParseError("header", e.what());
    }

    Checkpoint ck;
    std::vector<std::pair<std::string, Shape>> entries;
    std::size_t count = 0;
    try {
        const auto version = header.at("version").get<std::uint32_t>();
        if (version != checkpoint_format_version) {
            throw UnsupportedVersionError("unsupported checkpoint format version " + std::to_string(version));
        }
        ck.model_config = gaf_config_from_json(header.at("model"));
        ck.train_config = train_config_from_json(header.at("train"));
        ck.iteration = header.at("iteration").get<std::uint64_t>();
        count = header.at("parameter_count").get<std::size_t>();
        const auto& a = header.at("adam");
        ck.adam.step = a.at("step").get<std::uint64_t>();
        ck.adam.hyper = AdamHyper{a.at("learning_rate").get<double>(), a.at("beta1").get<double>(),
                                  a.at("beta2").get<double>(), a.at("epsilon").get<double>(),
                                  a.at("weight_decay").get<double>()};
        std::uint64_t expected_offset = 0;
        for (const auto& e : header.at("arrays")) {
            const auto dims = e.at("shape").get<std::vector<std::size_t>>();
            if (e.at("offset").get<std::uint64_t>() != expected_offset) {
                throw ParseError("header", "array manifest offsets are not contiguous");
            }
            entries.emplace_back(e.at("name").get<std::string>(), Shape(dims.begin(), dims.end()));
            expected_offset += shape_size(entries.back().second) * sizeof(float);
        }
    } catch (const json::exception& e) {
        throw ParseError("header", e.what());
    } catch (const ConfigError& e) {
        throw ParseError("header", e.what());
    }

    if (entries.size() != 3 * count) {
        throw ParseError("header", "array manifest does not list parameters and both Adam moments");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, shape] = entries[i];
        Array<float> arr(shape, reader.read_vector<float>(shape_size(shape), "array '" + name + "'"));
        if (i < count) {
            ck.parameters.add(name, std::move(arr));
        } else if (i < 2 * count) {
            ck.adam.first_moment.push_back(std::move(arr));
        } else {
            ck.adam.second_moment.push_back(std::move(arr));
        }
    }
    if (reader.remaining() != 0) {
        throw ParseError("arrays", "unexpected trailing bytes");
    }
    // Validates names and shapes against the configured layout.
    (void)GafModel<float>(ck.model_config, ck.parameters);
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    io::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace gaf
