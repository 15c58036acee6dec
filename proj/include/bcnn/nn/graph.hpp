#pragma once

// Tape-based reverse-mode differentiation. Nodes are appended in creation
// order, so every input of a node has a smaller id and a reverse sweep visits
// nodes after all of their consumers.

#include <functional>
#include <string>
#include <vector>

#include "bcnn/error.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn::nn {

template <typename T>
class Graph {
public:
    using Backward = std::function<void(Graph&, int)>;

    struct Node {
        std::string op;
        Tensor4<T> value;
        Tensor4<T> grad;
        std::vector<int> inputs;
        Backward backward;
        bool has_grad = false;
    };

    int add(std::string op, Tensor4<T> value, std::vector<int> inputs = {}, Backward backward = {}) {
        const int id = static_cast<int>(nodes_.size());
        for (int in : inputs) check_input(id, in);
        nodes_.push_back({std::move(op), std::move(value), {}, std::move(inputs), std::move(backward), false});
        return id;
    }

    int size() const noexcept { return static_cast<int>(nodes_.size()); }

    const Node& node(int id) const { return nodes_.at(checked(id)); }
    const Tensor4<T>& value(int id) const { return nodes_[checked(id)].value; }

    /// Gradient buffer of a node, zero-initialized on first access.
    Tensor4<T>& grad(int id) {
        Node& n = nodes_[checked(id)];
        if (!n.has_grad) {
            n.grad = Tensor4<T>(n.value.n, n.value.h, n.value.w, n.value.c);
            n.has_grad = true;
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[checked(id)].has_grad; }

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards.
    void backward(int loss) {
        if (loss < 0 || loss >= size()) throw internal_error("backward from a missing node");
        if (nodes_[static_cast<std::size_t>(loss)].value.size() != 1) {
            throw internal_error("backward needs a scalar loss node");
        }
        grad(loss).data[0] = T(1);
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.has_grad) continue;
            for (int in : n.inputs) check_input(id, in);
            if (n.backward) n.backward(*this, id);
        }
    }

    /// Drops forward values and gradients.
    void clear() { nodes_.clear(); }

private:
    std::size_t checked(int id) const {
        if (id < 0 || id >= size()) throw internal_error("reference to missing node " + std::to_string(id));
        return static_cast<std::size_t>(id);
    }

    static void check_input(int self, int input) {
        if (input < 0) throw internal_error("node " + std::to_string(self) + " references a missing input");
        if (input >= self) {
            throw internal_error("node " + std::to_string(self) + " depends on node " + std::to_string(input) +
                                 " which is not older: graph cycle");
        }
    }

    std::vector<Node> nodes_;
};

} // namespace bcnn::nn
