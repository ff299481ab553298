#include "gaf/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gaf/rng.hpp"

namespace gaf {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Initial values are keyed by (seed, parameter name, element index), so a
// parameter's values never depend on which other parameters exist.
double init_uniform(std::uint64_t seed, std::string_view name, std::size_t element) {
    const auto h = fnv1a(name);
    return CounterRng(seed).uniform(Stream::init, element, static_cast<std::uint32_t>(h),
                                    static_cast<std::uint32_t>(h >> 32));
}

double init_normal(std::uint64_t seed, std::string_view name, std::size_t element) {
    const auto h = fnv1a(name);
    return CounterRng(seed).normal(Stream::init, element, static_cast<std::uint32_t>(h),
                                   static_cast<std::uint32_t>(h >> 32));
}

std::string k_prefix(std::size_t cls) {
    return "head.k" + std::to_string(cls);
}

std::size_t linear_count(std::size_t fan_in, std::size_t fan_out) {
    return fan_in * fan_out + fan_out;
}

std::size_t head_count(const GafConfig& c) {
    if (c.head_layers == 1) {
        return linear_count(c.trunk_width, c.data_dim);
    }
    const std::size_t h = c.effective_head_hidden();
    return linear_count(c.trunk_width, h) + linear_count(h, c.data_dim);
}

template <class T>
Array<T> broadcast_weights(const VelocityQuery& query, std::size_t rows) {
    Array<T> w(Shape{rows, query.weights.size()});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t m = 0; m < query.weights.size(); ++m) {
            w.at(r, m) = static_cast<T>(query.weights[m]);
        }
    }
    return w;
}

template <class T>
Array<T> as_batch(const Array<T>& x, std::size_t dim) {
    if (x.rank() == 1 && x.size() == dim) {
        return x.reshaped(Shape{1, dim});
    }
    if (x.rank() == 2 && x.cols() == dim) {
        return x;
    }
    throw ShapeError("expected a point of dimension " + std::to_string(dim) + " or a batch (rows x " +
                     std::to_string(dim) + "), got " + shape_string(x.shape()));
}

template <class T>
void require_finite(const Array<T>& x, const char* what) {
    if (!x.all_finite()) {
        throw NonFiniteError(std::string(what) + " contains non-finite values");
    }
}

}  // namespace

// ---------------------------------------------------------------------------

void GafConfig::validate() const {
    if (data_dim < 1) throw ValueError("data_dim must be >= 1");
    if (num_classes < 1) throw ValueError("num_classes must be >= 1");
    if (trunk_depth < 1) throw ValueError("trunk_depth must be >= 1");
    if (trunk_width < 1) throw ValueError("trunk_width must be >= 1");
    if (time_embed < 2) throw ValueError("time_embed must be >= 2");
    if (head_layers != 1 && head_layers != 2) throw ValueError("head_layers must be 1 or 2");
}

std::size_t parameter_count(const GafConfig& c) {
    c.validate();
    const std::size_t e = c.time_embed;
    std::size_t n = linear_count(e, e) * 2;
    if (c.class_conditioning) {
        n += c.num_classes * e;
    }
    n += linear_count(c.data_dim + e, c.trunk_width);
    n += c.trunk_depth * linear_count(c.trunk_width, c.trunk_width);
    n += head_count(c) * (1 + c.num_classes);
    return n;
}

VelocityQuery VelocityQuery::single(std::size_t cls, std::size_t num_classes) {
    if (cls >= num_classes) {
        throw ValueError("class index " + std::to_string(cls) + " out of range for " + std::to_string(num_classes) +
                         " classes");
    }
    VelocityQuery q;
    q.weights.assign(num_classes, 0.0);
    q.weights[cls] = 1.0;
    return q;
}

VelocityQuery VelocityQuery::pair(std::size_t i, std::size_t j, double alpha, std::size_t num_classes) {
    if (i >= num_classes || j >= num_classes) {
        throw ValueError("pair query class index out of range");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ValueError("interpolation weight must lie in [0, 1]");
    }
    VelocityQuery q;
    q.weights.assign(num_classes, 0.0);
    q.weights[i] += 1.0 - alpha;
    q.weights[j] += alpha;
    return q;
}

VelocityQuery VelocityQuery::blend(std::vector<double> weights) {
    return VelocityQuery{std::move(weights)};
}

void VelocityQuery::validate(std::size_t num_classes) const {
    if (weights.empty()) {
        throw ValueError("velocity query is empty");
    }
    if (weights.size() != num_classes) {
        throw ValueError("velocity query has " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(num_classes) + " classes");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w)) {
            throw ValueError("velocity query weight is not finite");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ValueError("velocity query weights sum to " + std::to_string(total) + ", expected 1");
    }
}

std::vector<std::size_t> VelocityQuery::active_classes() const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < weights.size(); ++m) {
        if (weights[m] != 0.0) {
            out.push_back(m);
        }
    }
    return out;
}

template <class T>
Var ParamBinder<T>::operator()(std::size_t index) {
    auto& slot = vars_.at(index);
    if (!slot) {
        slot = tape_.parameter(index, params_[index]);
    }
    return *slot;
}

template <class T>
Array<T> sinusoidal_features(double t, std::size_t size) {
    if (size < 1) {
        throw ValueError("sinusoidal feature size must be positive");
    }
    const std::size_t pairs = (size + 1) / 2;
    Array<T> out(Shape{size});
    for (std::size_t k = 0; k < pairs; ++k) {
        const double freq = pairs > 1 ? std::exp(std::log(1000.0) * static_cast<double>(k) / static_cast<double>(pairs - 1)) : 1.0;
        out[2 * k] = static_cast<T>(std::sin(freq * t));
        if (2 * k + 1 < size) {
            out[2 * k + 1] = static_cast<T>(std::cos(freq * t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// GafModel

template <class T>
GafModel<T>::GafModel(GafConfig config) : config_(config) {
    config_.validate();
    const std::size_t e = config_.time_embed;
    init_linear("time.l1", e, e, false);
    init_linear("time.l2", e, e, false);
    if (config_.class_conditioning) {
        Array<T> table(Shape{config_.num_classes, e});
        for (std::size_t i = 0; i < table.size(); ++i) {
            table[i] = static_cast<T>(init_normal(config_.seed, "class_embed", i));
        }
        params_.add("class_embed", std::move(table));
    }
    init_linear("trunk.in", config_.data_dim + e, config_.trunk_width, false);
    for (std::size_t l = 0; l < config_.trunk_depth; ++l) {
        init_linear("trunk.block" + std::to_string(l), config_.trunk_width, config_.trunk_width, false);
    }
    init_head("head.j");
    for (std::size_t c = 0; c < config_.num_classes; ++c) {
        init_head(k_prefix(c));
    }
}

template <class T>
GafModel<T>::GafModel(GafConfig config, ParameterSet<T> params) : config_(config), params_(std::move(params)) {
    config_.validate();
    validate_parameters();
}

template <class T>
void GafModel<T>::validate_parameters() const {
    const GafModel<T> reference_layout = [&] {
        GafConfig c = config_;
        return GafModel<T>(c);
    }();
    const auto& ref = reference_layout.params_;
    if (ref.size() != params_.size()) {
        throw ShapeError("parameter set has " + std::to_string(params_.size()) + " arrays, configuration needs " +
                         std::to_string(ref.size()));
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (ref.name(i) != params_.name(i) || ref[i].shape() != params_[i].shape()) {
            throw ShapeError("parameter '" + params_.name(i) + "' does not match the configured layout");
        }
    }
}

template <class T>
void GafModel<T>::init_linear(const std::string& prefix, std::size_t fan_in, std::size_t fan_out, bool zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Array<T> w(Shape{fan_in, fan_out});
    Array<T> b(Shape{fan_out});
    if (!zero) {
        const std::string wn = prefix + ".w";
        const std::string bn = prefix + ".b";
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = static_cast<T>(bound * (2.0 * init_uniform(config_.seed, wn, i) - 1.0));
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            b[i] = static_cast<T>(bound * (2.0 * init_uniform(config_.seed, bn, i) - 1.0));
        }
    }
    params_.add(prefix + ".w", std::move(w));
    params_.add(prefix + ".b", std::move(b));
}

template <class T>
void GafModel<T>::init_head(const std::string& prefix) {
    if (config_.head_layers == 1) {
        init_linear(prefix + ".out", config_.trunk_width, config_.data_dim, config_.zero_init_heads);
        return;
    }
    const std::size_t hidden = config_.effective_head_hidden();
    init_linear(prefix + ".hidden", config_.trunk_width, hidden, false);
    init_linear(prefix + ".out", hidden, config_.data_dim, config_.zero_init_heads);
}

template <class T>
std::size_t GafModel<T>::add_class_head() {
    const std::size_t cls = config_.num_classes;
    if (config_.class_conditioning) {
        auto& table = params_["class_embed"];
        const std::size_t e = config_.time_embed;
        std::vector<T> grown(table.storage());
        for (std::size_t i = table.size(); i < table.size() + e; ++i) {
            grown.push_back(static_cast<T>(init_normal(config_.seed, "class_embed", i)));
        }
        table = Array<T>(Shape{cls + 1, e}, std::move(grown));
    }
    config_.num_classes = cls + 1;
    init_head(k_prefix(cls));
    return cls;
}

template <class T>
Var GafModel<T>::time_embedding(ParamBinder<T>& bind, std::span<const T> times) const {
    const std::size_t e = config_.time_embed;
    Array<T> feats(Shape{times.size(), e});
    for (std::size_t r = 0; r < times.size(); ++r) {
        const auto row = sinusoidal_features<T>(static_cast<double>(times[r]), e);
        std::copy(row.data(), row.data() + e, feats.data() + r * e);
    }
    auto& tape = bind.tape();
    Var h = tape.constant(std::move(feats));
    h = tape.gelu(tape.add(tape.matmul(h, bind("time.l1.w")), bind("time.l1.b")));
    return tape.add(tape.matmul(h, bind("time.l2.w")), bind("time.l2.b"));
}

template <class T>
Var GafModel<T>::trunk(ParamBinder<T>& bind, Var x, std::span<const T> times, const Array<T>& class_weights) const {
    auto& tape = bind.tape();
    const auto& xv = tape.value(x);
    if (xv.rank() != 2 || xv.cols() != config_.data_dim || xv.rows() != times.size()) {
        throw ShapeError("trunk: input " + shape_string(xv.shape()) + " does not match " +
                         std::to_string(times.size()) + " rows of dimension " + std::to_string(config_.data_dim));
    }
    Var cond = time_embedding(bind, times);
    if (config_.class_conditioning) {
        if (class_weights.rank() != 2 || class_weights.rows() != times.size() ||
            class_weights.cols() != config_.num_classes) {
            throw ShapeError("trunk: class weights must be rows x num_classes");
        }
        cond = tape.add(cond, tape.matmul(tape.constant(class_weights), bind("class_embed")));
    }
    const Var parts[] = {x, cond};
    Var h = tape.add(tape.matmul(tape.concat(parts, 1), bind("trunk.in.w")), bind("trunk.in.b"));
    for (std::size_t l = 0; l < config_.trunk_depth; ++l) {
        const std::string p = "trunk.block" + std::to_string(l);
        h = tape.add(h, tape.add(tape.matmul(tape.gelu(h), bind(p + ".w")), bind(p + ".b")));
    }
    return h;
}

template <class T>
Var GafModel<T>::head(ParamBinder<T>& bind, const std::string& prefix, Var features) const {
    auto& tape = bind.tape();
    Var h = features;
    if (config_.head_layers == 2) {
        h = tape.gelu(tape.add(tape.matmul(h, bind(prefix + ".hidden.w")), bind(prefix + ".hidden.b")));
    }
    return tape.add(tape.matmul(h, bind(prefix + ".out.w")), bind(prefix + ".out.b"));
}

template <class T>
Var GafModel<T>::head_j(ParamBinder<T>& bind, Var features) const {
    return head(bind, "head.j", features);
}

template <class T>
Var GafModel<T>::head_k(ParamBinder<T>& bind, std::size_t cls, Var features) const {
    if (cls >= config_.num_classes) {
        throw ValueError("class index " + std::to_string(cls) + " out of range for " +
                         std::to_string(config_.num_classes) + " classes");
    }
    return head(bind, k_prefix(cls), features);
}

// ---------------------------------------------------------------------------
// Evaluation

template <class T>
Array<T> embed_time(const GafModel<T>& model, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ValueError("time must lie in [0, 1], got " + std::to_string(t));
    }
    Tape<T> tape;
    ParamBinder<T> bind(tape, model.parameters());
    const T times[] = {static_cast<T>(t)};
    const Var e = model.time_embedding(bind, times);
    return tape.value(e).reshaped(Shape{model.config().time_embed});
}

template <class T>
TwinOutput<T> twin_forward_batch(const GafModel<T>& model, const Array<T>& x, std::span<const T> times,
                                 std::span<const std::size_t> classes, EvalStats* stats) {
    const std::size_t d = model.data_dim();
    const Array<T> batch = as_batch(x, d);
    const std::size_t rows = batch.rows();
    if (times.size() != rows || classes.size() != rows) {
        throw ShapeError("twin_forward_batch: times/classes must have one entry per row");
    }
    require_finite(batch, "bridge point");
    for (std::size_t c : classes) {
        if (c >= model.num_classes()) {
            throw ValueError("class index " + std::to_string(c) + " out of range for " +
                             std::to_string(model.num_classes()) + " classes");
        }
    }

    const std::size_t width = model.config().trunk_width;
    TwinOutput<T> out{Array<T>(Shape{rows, width}), Array<T>(Shape{rows, d}), Array<T>(Shape{rows, d}),
                      Array<T>(Shape{rows, d}), Array<T>(Shape{rows, d})};

    for (std::size_t cls = 0; cls < model.num_classes(); ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t r = 0; r < rows; ++r) {
            if (classes[r] == cls) members.push_back(r);
        }
        if (members.empty()) continue;

        Array<T> xs(Shape{members.size(), d});
        std::vector<T> ts(members.size());
        for (std::size_t i = 0; i < members.size(); ++i) {
            std::copy_n(batch.row(members[i]).begin(), d, xs.row(i).begin());
            ts[i] = times[members[i]];
        }
        const auto weights = broadcast_weights<T>(VelocityQuery::single(cls, model.num_classes()), members.size());

        Tape<T> tape;
        ParamBinder<T> bind(tape, model.parameters());
        const Var f = model.trunk(bind, tape.constant(xs), ts, weights);
        const Var jr = model.head_j(bind, f);
        const Var kr = model.head_k(bind, cls, f);
        if (stats) {
            ++stats->trunk;
            ++stats->j_head;
            ++stats->k_head;
        }
        const auto& fv = tape.value(f);
        const auto& jv = tape.value(jr);
        const auto& kv = tape.value(kr);
        for (std::size_t i = 0; i < members.size(); ++i) {
            const std::size_t r = members[i];
            const T t = ts[i];
            std::copy_n(fv.row(i).begin(), width, out.features.row(r).begin());
            for (std::size_t k = 0; k < d; ++k) {
                const T xv = xs.at(i, k);
                out.j_res.at(r, k) = jv.at(i, k);
                out.k_res.at(r, k) = kv.at(i, k);
                out.j.at(r, k) = (T{1} - t) * xv + jv.at(i, k);
                out.k.at(r, k) = t * xv + kv.at(i, k);
            }
        }
    }
    return out;
}

template <class T>
TwinOutput<T> twin_forward(const GafModel<T>& model, const Array<T>& x_t, double t, std::size_t cls,
                           EvalStats* stats) {
    if (x_t.rank() != 1 || x_t.size() != model.data_dim()) {
        throw ShapeError("twin_forward: expected a point of dimension " + std::to_string(model.data_dim()));
    }
    const T times[] = {static_cast<T>(t)};
    const std::size_t classes[] = {cls};
    auto out = twin_forward_batch(model, x_t, std::span<const T>(times), std::span<const std::size_t>(classes), stats);
    const std::size_t d = model.data_dim();
    return TwinOutput<T>{out.features.reshaped(Shape{model.config().trunk_width}), out.j.reshaped(Shape{d}),
                         out.k.reshaped(Shape{d}), out.j_res.reshaped(Shape{d}), out.k_res.reshaped(Shape{d})};
}

namespace {

template <class T>
struct HeadPass {
    Array<T> batch;
    std::vector<Array<T>> j;       // full J = (1-t)x + J_res per active class; empty otherwise
    std::vector<Array<T>> k;       // full K_m per active class; empty otherwise
};

// A class-conditioned trunk sees the class, so each class's field K_m - J comes
// from its own trunk pass and blends stay linear in the pure fields. Without
// trunk conditioning one pass and one J serve every active head.
template <class T>
HeadPass<T> run_heads(const GafModel<T>& model, const Array<T>& x, double t, const VelocityQuery& query,
                      EvalStats* stats) {
    query.validate(model.num_classes());
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ValueError("time must lie in [0, 1], got " + std::to_string(t));
    }
    const std::size_t d = model.data_dim();
    const std::size_t classes = model.num_classes();
    HeadPass<T> pass;
    pass.batch = as_batch(x, d);
    require_finite(pass.batch, "velocity input");
    const std::size_t rows = pass.batch.rows();
    const T tt = static_cast<T>(t);
    const T one_minus = static_cast<T>(1.0 - t);
    const std::vector<T> times(rows, tt);
    pass.j.resize(classes);
    pass.k.resize(classes);

    auto heads = [&](const VelocityQuery& trunk_query, std::span<const std::size_t> active) {
        Tape<T> tape;
        ParamBinder<T> bind(tape, model.parameters());
        const Var f = model.trunk(bind, tape.constant(pass.batch), times, broadcast_weights<T>(trunk_query, rows));
        Array<T> j = tape.value(model.head_j(bind, f));
        if (stats) {
            ++stats->trunk;
            ++stats->j_head;
        }
        for (std::size_t i = 0; i < j.size(); ++i) {
            j[i] = one_minus * pass.batch[i] + j[i];
        }
        for (std::size_t m : active) {
            Array<T> km = tape.value(model.head_k(bind, m, f));
            if (stats) ++stats->k_head;
            for (std::size_t i = 0; i < km.size(); ++i) {
                km[i] = tt * pass.batch[i] + km[i];
            }
            pass.k[m] = std::move(km);
            pass.j[m] = j;
        }
    };

    const auto active = query.active_classes();
    if (model.config().class_conditioning) {
        for (std::size_t m : active) {
            const std::size_t one[] = {m};
            heads(VelocityQuery::single(m, classes), one);
        }
    } else {
        heads(query, active);
    }
    return pass;
}

}  // namespace

template <class T>
Array<T> velocity(const GafModel<T>& model, const Array<T>& x, double t, const VelocityQuery& query, EvalStats* stats) {
    const auto pass = run_heads(model, x, t, query, stats);
    Array<T> v = Array<T>::zeros_like(pass.batch);
    for (std::size_t m : query.active_classes()) {
        const T w = static_cast<T>(query.weights[m]);
        const auto& km = pass.k[m];
        const auto& jm = pass.j[m];
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] += w * (km[i] - jm[i]);
        }
    }
    return x.rank() == 1 ? v.reshaped(x.shape()) : v;
}

template <class T>
std::vector<Array<T>> velocity_components(const GafModel<T>& model, const Array<T>& x, double t,
                                          const VelocityQuery& query) {
    const auto pass = run_heads(model, x, t, query, nullptr);
    std::vector<Array<T>> out(model.num_classes());
    for (std::size_t m : query.active_classes()) {
        Array<T> vm = pass.k[m];
        for (std::size_t i = 0; i < vm.size(); ++i) {
            vm[i] -= pass.j[m][i];
        }
        out[m] = x.rank() == 1 ? vm.reshaped(x.shape()) : std::move(vm);
    }
    return out;
}

#define GAF_INSTANTIATE_MODEL(T)                                                                                    \
    template class ParamBinder<T>;                                                                                  \
    template class GafModel<T>;                                                                                     \
    template Array<T> sinusoidal_features<T>(double, std::size_t);                                                  \
    template Array<T> embed_time(const GafModel<T>&, double);                                                       \
    template TwinOutput<T> twin_forward(const GafModel<T>&, const Array<T>&, double, std::size_t, EvalStats*);      \
    template TwinOutput<T> twin_forward_batch(const GafModel<T>&, const Array<T>&, std::span<const T>,              \
                                              std::span<const std::size_t>, EvalStats*);                            \
    template Array<T> velocity(const GafModel<T>&, const Array<T>&, double, const VelocityQuery&, EvalStats*);      \
    template std::vector<Array<T>> velocity_components(const GafModel<T>&, const Array<T>&, double,                 \
                                                       const VelocityQuery&);

GAF_INSTANTIATE_MODEL(float)
GAF_INSTANTIATE_MODEL(double)

#undef GAF_INSTANTIATE_MODEL

}  // namespace gaf
