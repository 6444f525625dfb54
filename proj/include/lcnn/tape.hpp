#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lcnn/tensor.hpp"

namespace lcnn {

// Reverse-mode tape. Ops executed while a TapeScope is active append one node
// each, in execution order, so the record is topologically sorted by
// construction. backward() replays it once in reverse; a second call without
// reset() throws. One tape (and its tensors) belongs to one thread; forward
// evaluation with no active tape records nothing and is re-entrant.
class Tape {
public:
    struct Node {
        const char* op;
        std::function<void()> backward;
    };

    void record(const char* op, std::function<void()> fn) {
        nodes_.push_back(Node{op, std::move(fn)});
    }

    // Seeds d(loss)/d(loss) = 1 and propagates to every recorded input.
    void backward(const Tensor& loss);

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }
    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    static Tape* active();

private:
    std::vector<Node> nodes_;
    bool consumed_ = false;

    friend class TapeScope;
};

// RAII activation. Nesting restores the previous tape on scope exit.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Accumulates `delta` into the grad buffer of `impl`, allocating zeros first
// if needed. Grad buffers are always dedicated storage, never aliased views.
void accumulate_grad(const std::shared_ptr<TensorImpl>& impl, const Tensor& delta);

}  // namespace lcnn
