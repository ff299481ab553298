#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gaf/array.hpp"

namespace gaf {

/// Named, ordered collection of trainable arrays.
template <class T>
class ParameterSet {
public:
    std::size_t add(std::string name, Array<T> value);

    std::size_t size() const noexcept { return values_.size(); }
    std::size_t index_of(std::string_view name) const;
    bool contains(std::string_view name) const;

    const std::string& name(std::size_t i) const { return names_.at(i); }
    Array<T>& operator[](std::size_t i) { return values_.at(i); }
    const Array<T>& operator[](std::size_t i) const { return values_.at(i); }
    Array<T>& operator[](std::string_view name) { return values_[index_of(name)]; }
    const Array<T>& operator[](std::string_view name) const { return values_[index_of(name)]; }

    std::size_t element_count() const;
    std::vector<Shape> shapes() const;

    template <class U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (std::size_t i = 0; i < size(); ++i) {
            out.add(names_[i], values_[i].template cast<U>());
        }
        return out;
    }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
        return a.names_ == b.names_ && a.values_ == b.values_;
    }

private:
    std::vector<std::string> names_;
    std::vector<Array<T>> values_;
};

/// One gradient array per entry of the ParameterSet it was computed against.
template <class T>
using Gradients = std::vector<Array<T>>;

enum class Primitive {
    leaf,
    matmul,
    add,
    sub,
    scalar_mul,
    elementwise_mul,
    tanh,
    gelu,
    sum,
    mean,
    square,
    concat,
    slice_rows,
};

std::string_view primitive_name(Primitive kind);

/// Handle to a value recorded on a Tape.
struct Var {
    std::uint64_t tape = 0;
    std::size_t index = 0;
};

/// Reverse-mode computation tape.
///
/// Every primitive evaluates eagerly, stores its output and whatever the
/// reverse pass needs, and returns a handle. Binary elementwise primitives
/// accept either equal shapes or a right operand with one row that is
/// broadcast over the leading (batch) dimension. Outputs are checked for
/// finiteness; a NaN or Inf raises NonFiniteError.
///
/// A tape belongs to one thread.
template <class T>
class Tape {
public:
    Tape();

    Var constant(Array<T> value);
    Var parameter(std::size_t param_index, Array<T> value);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scalar_mul(Var a, T s);
    Var mul(Var a, Var b);
    Var tanh(Var a);
    Var gelu(Var a);
    Var sum(Var a);
    Var mean(Var a);
    Var square(Var a);
    /// axis 0 stacks rows, axis 1 joins columns; inputs must be rank 2 (or rank 1 for axis 1).
    Var concat(std::span<const Var> parts, std::size_t axis);
    Var slice_rows(Var a, std::size_t begin, std::size_t end);

    /// Generic entry point. scalar_mul takes its factor as a one-element second input.
    Var forward(Primitive kind, std::span<const Var> inputs);

    const Array<T>& value(Var v) const;
    Primitive kind(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    bool owns(Var v) const noexcept { return v.tape == id_ && v.index < nodes_.size(); }

    /// Gradient of a scalar `loss` with respect to every parameter slot in `shapes`.
    /// Slots not reached from `loss` receive zeros. When `visit_order` is given, the
    /// indices of the nodes processed are appended in processing order.
    Gradients<T> backward(Var loss, std::span<const Shape> shapes, std::vector<std::size_t>* visit_order = nullptr) const;

    Gradients<T> backward(Var loss, const ParameterSet<T>& params) const {
        const auto shapes = params.shapes();
        return backward(loss, shapes);
    }

private:
    struct Node {
        Primitive kind = Primitive::leaf;
        std::vector<std::size_t> inputs;
        Array<T> value;
        Array<T> saved;  // gelu: local slope, kept only when a gradient flows
        T factor{0};
        std::size_t aux = 0;
        std::ptrdiff_t param = -1;
        bool needs_grad = false;
    };

    const Node& node(Var v) const;
    Var push(Node n);
    bool any_needs_grad(std::span<const std::size_t> inputs) const;
    Var binary(Primitive kind, Var a, Var b);
    Var unary(Primitive kind, Var a);

    std::uint64_t id_;
    std::vector<Node> nodes_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace gaf
