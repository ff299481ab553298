#include "gaf/tape.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numbers>

namespace gaf {

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
ConstMatrixMap<T> as_matrix(const Array<T>& a) {
    return ConstMatrixMap<T>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

template <class T>
MatrixMap<T> as_matrix(Array<T>& a) {
    return MatrixMap<T>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

std::atomic<std::uint64_t> next_tape_id{1};

// Eigen's packet erf/exp keep the float path vectorized. Work goes through
// fixed-size aligned blocks (tail zero-padded) so every element takes the same
// code path whatever the buffer address; a Map would peel for alignment and mix
// scalar and packet results, breaking bitwise reproducibility.
template <class T>
void gelu_forward(const T* in, T* out, T* slope, std::size_t size) {
    constexpr std::size_t block = 64;
    using Block = Eigen::Array<T, block, 1>;
    const T c = T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    for (std::size_t start = 0; start < size; start += block) {
        const std::size_t n = std::min(block, size - start);
        Block x = Block::Zero();
        std::copy(in + start, in + start + n, x.data());
        const Block cdf = T(0.5) * (T(1) + (x * T(std::numbers::sqrt2 / 2)).erf());
        const Block value = x * cdf;
        std::copy(value.data(), value.data() + n, out + start);
        if (slope != nullptr) {
            const Block s = cdf + x * c * (T(-0.5) * x.square()).exp();
            std::copy(s.data(), s.data() + n, slope + start);
        }
    }
}

// Right operand is broadcast when it carries exactly one row's worth of values.
template <class T>
bool broadcasts(const Array<T>& a, const Array<T>& b) {
    return a.shape() != b.shape() && a.rank() == 2 && b.size() == a.cols() && (b.rank() == 1 || b.rows() == 1);
}

}  // namespace

std::string_view primitive_name(Primitive kind) {
    switch (kind) {
        case Primitive::leaf: return "leaf";
        case Primitive::matmul: return "matmul";
        case Primitive::add: return "add";
        case Primitive::sub: return "sub";
        case Primitive::scalar_mul: return "scalar-mul";
        case Primitive::elementwise_mul: return "elementwise-mul";
        case Primitive::tanh: return "tanh";
        case Primitive::gelu: return "gelu";
        case Primitive::sum: return "sum";
        case Primitive::mean: return "mean";
        case Primitive::square: return "square";
        case Primitive::concat: return "concat";
        case Primitive::slice_rows: return "slice-rows";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// ParameterSet

template <class T>
std::size_t ParameterSet<T>::add(std::string name, Array<T> value) {
    if (contains(name)) {
        throw ValueError("duplicate parameter name '" + name + "'");
    }
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
}

template <class T>
std::size_t ParameterSet<T>::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
            return i;
        }
    }
    throw ValueError("no parameter named '" + std::string(name) + "'");
}

template <class T>
bool ParameterSet<T>::contains(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

template <class T>
std::size_t ParameterSet<T>::element_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) {
        n += v.size();
    }
    return n;
}

template <class T>
std::vector<Shape> ParameterSet<T>::shapes() const {
    std::vector<Shape> out;
    out.reserve(values_.size());
    for (const auto& v : values_) {
        out.push_back(v.shape());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tape

template <class T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)) {}

template <class T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (!owns(v)) {
        throw ValueError("variable does not belong to this tape");
    }
    return nodes_[v.index];
}

template <class T>
const Array<T>& Tape<T>::value(Var v) const {
    return node(v).value;
}

template <class T>
Primitive Tape<T>::kind(Var v) const {
    return node(v).kind;
}

template <class T>
Var Tape<T>::push(Node n) {
    if (!n.value.all_finite()) {
        throw NonFiniteError("non-finite output from " + std::string(primitive_name(n.kind)));
    }
    nodes_.push_back(std::move(n));
    return Var{id_, nodes_.size() - 1};
}

template <class T>
bool Tape<T>::any_needs_grad(std::span<const std::size_t> inputs) const {
    return std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
}

template <class T>
Var Tape<T>::constant(Array<T> value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::parameter(std::size_t param_index, Array<T> value) {
    Node n;
    n.value = std::move(value);
    n.param = static_cast<std::ptrdiff_t>(param_index);
    n.needs_grad = true;
    return push(std::move(n));
}

template <class T>
Var Tape<T>::matmul(Var a, Var b) {
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    const bool matrix_rhs = y.rank() == 2;
    if (y.rank() > 2 || x.rank() > 2 || x.cols() != (matrix_rhs ? y.rows() : y.size())) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(x.shape()) + " x " + shape_string(y.shape()));
    }
    const std::size_t out_cols = matrix_rhs ? y.cols() : 1;
    Shape shape = x.rank() == 2 ? Shape{x.rows(), out_cols} : Shape{out_cols};
    Node n;
    n.kind = Primitive::matmul;
    n.inputs = {a.index, b.index};
    n.value = Array<T>(shape);
    MatrixMap<T>(n.value.data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(out_cols)).noalias() =
        as_matrix(x) *
        ConstMatrixMap<T>(y.data(), static_cast<Eigen::Index>(x.cols()), static_cast<Eigen::Index>(out_cols));
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::binary(Primitive kind, Var a, Var b) {
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    const bool bcast = broadcasts(x, y);
    if (x.shape() != y.shape() && !bcast) {
        throw ShapeError(std::string(primitive_name(kind)) + ": incompatible shapes " + shape_string(x.shape()) +
                         " and " + shape_string(y.shape()));
    }
    Node n;
    n.kind = kind;
    n.inputs = {a.index, b.index};
    n.value = Array<T>(x.shape());
    const std::size_t width = bcast ? x.cols() : x.size();
    auto apply = [&](auto op) {
        for (std::size_t r = 0; r < x.size(); r += width) {
            const T* xs = x.data() + r;
            const T* ys = bcast ? y.data() : y.data() + r;
            T* out = n.value.data() + r;
            for (std::size_t i = 0; i < width; ++i) out[i] = op(xs[i], ys[i]);
        }
    };
    switch (kind) {
        case Primitive::add: apply(std::plus<T>{}); break;
        case Primitive::sub: apply(std::minus<T>{}); break;
        default: apply(std::multiplies<T>{}); break;
    }
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
    return binary(Primitive::add, a, b);
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
    return binary(Primitive::sub, a, b);
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
    return binary(Primitive::elementwise_mul, a, b);
}

template <class T>
Var Tape<T>::scalar_mul(Var a, T s) {
    const auto& x = node(a).value;
    Node n;
    n.kind = Primitive::scalar_mul;
    n.inputs = {a.index};
    n.factor = s;
    n.value = Array<T>(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        n.value[i] = s * x[i];
    }
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::unary(Primitive kind, Var a) {
    const auto& x = node(a).value;
    Node n;
    n.kind = kind;
    n.inputs = {a.index};
    n.value = Array<T>(x.shape());
    auto* out = n.value.data();
    const auto* in = x.data();
    const std::size_t size = x.size();
    switch (kind) {
        case Primitive::tanh:
            for (std::size_t i = 0; i < size; ++i) out[i] = std::tanh(in[i]);
            break;
        case Primitive::gelu:
            if (any_needs_grad(n.inputs)) n.saved = Array<T>(x.shape());
            gelu_forward(in, out, n.saved.empty() ? nullptr : n.saved.data(), size);
            break;
        case Primitive::square:
            for (std::size_t i = 0; i < size; ++i) out[i] = in[i] * in[i];
            break;
        default: throw ValueError("not a unary primitive");
    }
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::tanh(Var a) {
    return unary(Primitive::tanh, a);
}

template <class T>
Var Tape<T>::gelu(Var a) {
    return unary(Primitive::gelu, a);
}

template <class T>
Var Tape<T>::square(Var a) {
    return unary(Primitive::square, a);
}

template <class T>
Var Tape<T>::sum(Var a) {
    const auto& x = node(a).value;
    Node n;
    n.kind = Primitive::sum;
    n.inputs = {a.index};
    T total{0};
    for (std::size_t i = 0; i < x.size(); ++i) {
        total += x[i];
    }
    n.value = Array<T>::scalar(total);
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::mean(Var a) {
    const auto& x = node(a).value;
    Node n;
    n.kind = Primitive::mean;
    n.inputs = {a.index};
    T total{0};
    for (std::size_t i = 0; i < x.size(); ++i) {
        total += x[i];
    }
    n.value = Array<T>::scalar(total / static_cast<T>(x.size()));
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) {
        throw ShapeError("concat: no inputs");
    }
    if (axis > 1) {
        throw ShapeError("concat: axis must be 0 or 1");
    }
    Node n;
    n.kind = Primitive::concat;
    n.aux = axis;
    const auto& first = node(parts[0]).value;
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (const auto& p : parts) {
        const auto& v = node(p).value;
        if (axis == 0) {
            if (v.rank() != 2 || v.cols() != first.cols()) {
                throw ShapeError("concat rows: incompatible shape " + shape_string(v.shape()));
            }
            rows += v.rows();
        } else {
            if (v.rank() != first.rank() || v.rows() != first.rows()) {
                throw ShapeError("concat cols: incompatible shape " + shape_string(v.shape()));
            }
            cols += v.cols();
        }
        n.inputs.push_back(p.index);
    }
    if (axis == 0) {
        n.value = Array<T>(Shape{rows, first.cols()});
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const auto& v = node(p).value;
            std::copy(v.data(), v.data() + v.size(), n.value.data() + offset);
            offset += v.size();
        }
    } else {
        rows = first.rows();
        n.value = Array<T>(first.rank() == 2 ? Shape{rows, cols} : Shape{cols});
        std::size_t col0 = 0;
        for (const auto& p : parts) {
            const auto& v = node(p).value;
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy(v.data() + r * v.cols(), v.data() + (r + 1) * v.cols(), n.value.data() + r * cols + col0);
            }
            col0 += v.cols();
        }
    }
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::slice_rows(Var a, std::size_t begin, std::size_t end) {
    const auto& x = node(a).value;
    if (x.rank() != 2 || begin >= end || end > x.rows()) {
        throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_string(x.shape()));
    }
    Node n;
    n.kind = Primitive::slice_rows;
    n.inputs = {a.index};
    n.aux = begin;
    const std::size_t cols = x.cols();
    n.value = Array<T>(Shape{end - begin, cols},
                       std::vector<T>(x.data() + begin * cols, x.data() + end * cols));
    n.needs_grad = any_needs_grad(n.inputs);
    return push(std::move(n));
}

template <class T>
Var Tape<T>::forward(Primitive kind, std::span<const Var> inputs) {
    auto need = [&](std::size_t count) {
        if (inputs.size() != count) {
            throw ShapeError(std::string(primitive_name(kind)) + ": expected " + std::to_string(count) + " inputs");
        }
    };
    switch (kind) {
        case Primitive::matmul: need(2); return matmul(inputs[0], inputs[1]);
        case Primitive::add: need(2); return add(inputs[0], inputs[1]);
        case Primitive::sub: need(2); return sub(inputs[0], inputs[1]);
        case Primitive::elementwise_mul: need(2); return mul(inputs[0], inputs[1]);
        case Primitive::scalar_mul: need(2); return scalar_mul(inputs[0], node(inputs[1]).value.item());
        case Primitive::tanh: need(1); return tanh(inputs[0]);
        case Primitive::gelu: need(1); return gelu(inputs[0]);
        case Primitive::sum: need(1); return sum(inputs[0]);
        case Primitive::mean: need(1); return mean(inputs[0]);
        case Primitive::square: need(1); return square(inputs[0]);
        case Primitive::concat: return concat(inputs, 1);
        case Primitive::slice_rows:
        case Primitive::leaf: break;
    }
    throw ValueError("forward: primitive '" + std::string(primitive_name(kind)) + "' needs its dedicated entry point");
}

template <class T>
Gradients<T> Tape<T>::backward(Var loss, std::span<const Shape> shapes, std::vector<std::size_t>* visit_order) const {
    if (!owns(loss)) {
        throw ValueError("backward: loss is not recorded on this tape");
    }
    if (nodes_[loss.index].value.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_string(nodes_[loss.index].value.shape()));
    }
    Gradients<T> out;
    out.reserve(shapes.size());
    for (const auto& s : shapes) {
        out.emplace_back(s);
    }

    std::vector<Array<T>> grads(loss.index + 1);
    grads[loss.index] = Array<T>::scalar(T{1});

    auto grad_of = [&](std::size_t i) -> Array<T>& {
        if (grads[i].empty()) {
            grads[i] = Array<T>::zeros_like(nodes_[i].value);
        }
        return grads[i];
    };

    for (std::size_t idx = loss.index + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        if (grads[idx].empty() || !n.needs_grad) {
            continue;
        }
        if (visit_order) {
            visit_order->push_back(idx);
        }
        const Array<T>& g = grads[idx];
        switch (n.kind) {
            case Primitive::leaf: {
                if (n.param >= 0) {
                    const auto p = static_cast<std::size_t>(n.param);
                    if (p >= out.size() || out[p].shape() != n.value.shape()) {
                        throw ShapeError("backward: parameter slot " + std::to_string(p) + " shape mismatch");
                    }
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        out[p][i] += g[i];
                    }
                }
                break;
            }
            case Primitive::matmul: {
                const auto& a = nodes_[n.inputs[0]];
                const auto& b = nodes_[n.inputs[1]];
                const auto rows = static_cast<Eigen::Index>(a.value.rows());
                const auto inner = static_cast<Eigen::Index>(a.value.cols());
                const auto cols = static_cast<Eigen::Index>(g.size() / a.value.rows());
                ConstMatrixMap<T> gm(g.data(), rows, cols);
                ConstMatrixMap<T> bm(b.value.data(), inner, cols);
                if (a.needs_grad) {
                    auto& ga = grad_of(n.inputs[0]);
                    MatrixMap<T>(ga.data(), rows, inner).noalias() += gm * bm.transpose();
                }
                if (b.needs_grad) {
                    auto& gb = grad_of(n.inputs[1]);
                    MatrixMap<T>(gb.data(), inner, cols).noalias() += as_matrix(a.value).transpose() * gm;
                }
                break;
            }
            case Primitive::add:
            case Primitive::sub:
            case Primitive::elementwise_mul: {
                const auto& a = nodes_[n.inputs[0]];
                const auto& b = nodes_[n.inputs[1]];
                const bool bcast = broadcasts(a.value, b.value);
                const std::size_t cols = a.value.cols();
                const bool is_mul = n.kind == Primitive::elementwise_mul;
                if (a.needs_grad) {
                    auto& ga = grad_of(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        ga[i] += is_mul ? g[i] * b.value[bcast ? i % cols : i] : g[i];
                    }
                }
                if (b.needs_grad) {
                    auto& gb = grad_of(n.inputs[1]);
                    const T sign = n.kind == Primitive::sub ? T{-1} : T{1};
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const T contrib = is_mul ? g[i] * a.value[i] : sign * g[i];
                        gb[bcast ? i % cols : i] += contrib;
                    }
                }
                break;
            }
            case Primitive::scalar_mul: {
                auto& ga = grad_of(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += n.factor * g[i];
                }
                break;
            }
            case Primitive::tanh: {
                auto& ga = grad_of(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * (T{1} - n.value[i] * n.value[i]);
                }
                break;
            }
            case Primitive::gelu: {
                auto& ga = grad_of(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * n.saved[i];
                }
                break;
            }
            case Primitive::square: {
                const auto& x = nodes_[n.inputs[0]].value;
                auto& ga = grad_of(n.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += T{2} * x[i] * g[i];
                }
                break;
            }
            case Primitive::sum:
            case Primitive::mean: {
                auto& ga = grad_of(n.inputs[0]);
                const T scale = n.kind == Primitive::mean ? g[0] / static_cast<T>(ga.size()) : g[0];
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += scale;
                }
                break;
            }
            case Primitive::concat: {
                const std::size_t out_cols = n.value.cols();
                std::size_t offset = 0;
                for (std::size_t input : n.inputs) {
                    const auto& part = nodes_[input];
                    const std::size_t part_cols = part.value.cols();
                    if (part.needs_grad) {
                        auto& gp = grad_of(input);
                        if (n.aux == 0) {
                            for (std::size_t i = 0; i < gp.size(); ++i) {
                                gp[i] += g[offset + i];
                            }
                        } else {
                            for (std::size_t r = 0; r < part.value.rows(); ++r) {
                                for (std::size_t c = 0; c < part_cols; ++c) {
                                    gp[r * part_cols + c] += g[r * out_cols + offset + c];
                                }
                            }
                        }
                    }
                    offset += n.aux == 0 ? part.value.size() : part_cols;
                }
                break;
            }
            case Primitive::slice_rows: {
                auto& ga = grad_of(n.inputs[0]);
                const std::size_t start = n.aux * n.value.cols();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[start + i] += g[i];
                }
                break;
            }
        }
    }
    return out;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace gaf
