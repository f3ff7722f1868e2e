#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rat/tensor.hpp"

namespace rat {

// Reverse-mode tape. Ops append one node per recorded operation; recording
// order is a valid evaluation order, so backward() just walks the tape in
// reverse. Gradients accumulate by summation across fan-out and are keyed
// by tensor identity; tensors never reached from the loss get no entry.
//
// A Graph is single-threaded by contract. Distinct graphs are independent.
template <class Real>
class Graph {
public:
    using BackFn = std::function<void(Graph&)>;

    bool wants_grad(const Tensor<Real>& t) const {
        return t.requires_grad() || tracked_.count(t.id()) != 0;
    }

    void record(const Tensor<Real>& out, BackFn back) {
        tracked_.insert(out.id());
        tape_.push_back(Node{out.id(), std::move(back)});
    }

    void backward(const Tensor<Real>& loss) {
        if (loss.numel() != 1)
            throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
        grads_.clear();
        accumulate(loss, Tensor<Real>::full(loss.shape(), Real(1)));
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->back(*this);
    }

    // Adds `g` into the gradient buffer of `t`, creating it zero-filled on
    // first touch. Shapes must agree.
    void accumulate(const Tensor<Real>& t, const Tensor<Real>& g) {
        if (g.shape() != t.shape())
            throw ContractError("gradient shape " + shape_str(g.shape()) +
                                " does not match tensor shape " + shape_str(t.shape()));
        auto it = grads_.find(t.id());
        if (it == grads_.end()) it = grads_.emplace(t.id(), Tensor<Real>::zeros(t.shape())).first;
        Real* dst = it->second.data();
        const Real* src = g.data();
        for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
    }

    const Tensor<Real>* grad(const Tensor<Real>& t) const { return grad_by_id(t.id()); }

    const Tensor<Real>* grad_by_id(std::int64_t id) const {
        auto it = grads_.find(id);
        return it == grads_.end() ? nullptr : &it->second;
    }

    std::size_t num_nodes() const { return tape_.size(); }

private:
    struct Node {
        std::int64_t out;
        BackFn back;
    };

    std::vector<Node> tape_;
    std::unordered_set<std::int64_t> tracked_;
    std::unordered_map<std::int64_t, Tensor<Real>> grads_;
};

}  // namespace rat
