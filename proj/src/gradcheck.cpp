#include "lcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace lcnn {

GradCheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                          std::vector<Tensor> inputs, GradCheckOpts opts) {
    for (auto& t : inputs) {
        if (t.dtype() != DType::F64)
            throw DomainError("gradcheck: inputs must be f64");
        t.set_requires_grad(true);
        t.zero_grad();
    }

    bool prev_armed = KinkMonitor::armed();
    double prev_tol = KinkMonitor::tol();
    KinkMonitor::armed() = true;
    KinkMonitor::tol() = std::max(1e-4, 100.0 * opts.eps);
    KinkMonitor::hit() = false;

    // Analytic gradients: one taped forward/backward pass.
    std::vector<Tensor> analytic;
    {
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = f(inputs);
        }
        if (!loss.defined() || loss.numel() != 1)
            throw DomainError("gradcheck: f must return a scalar");
        tape.backward(loss);
        for (auto& t : inputs)
            analytic.push_back(t.grad().defined() ? t.grad().clone()
                                                  : Tensor::zeros(t.shape(), DType::F64));
    }

    GradCheckResult res;
    Rng rng(opts.seed);
    auto eval = [&]() { return f(inputs).item(); };

    for (size_t i = 0; i < inputs.size(); ++i) {
        Tensor& x = inputs[i];
        int64_t n = x.numel();
        std::vector<int64_t> coords;
        if (opts.max_coords_per_input > 0 && n > opts.max_coords_per_input) {
            std::unordered_set<int64_t> picked;
            while (static_cast<int64_t>(picked.size()) < opts.max_coords_per_input)
                picked.insert(rng.integer(0, n - 1));
            coords.assign(picked.begin(), picked.end());
            std::sort(coords.begin(), coords.end());
        } else {
            coords.resize(static_cast<size_t>(n));
            for (int64_t c = 0; c < n; ++c) coords[static_cast<size_t>(c)] = c;
        }
        for (int64_t c : coords) {
            double orig = x.at(c);
            x.set(c, orig + opts.eps);
            double fp = eval();
            x.set(c, orig - opts.eps);
            double fm = eval();
            x.set(c, orig);
            double num = (fp - fm) / (2.0 * opts.eps);
            double ana = analytic[i].at(c);
            double err = std::abs(num - ana);
            // Unit floor in the denominator: coords with near-zero gradient are
            // judged on absolute error instead of a 0/0 ratio.
            double rel = err / std::max({std::abs(num), std::abs(ana), 1.0});
            if (err > res.max_abs_err) res.max_abs_err = err;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                if (rel > opts.tol)
                    res.worst = "input" + std::to_string(i) + "[" + std::to_string(c) + "]";
            }
            if (rel > opts.tol) res.ok = false;
        }
    }

    res.kink_hit = KinkMonitor::hit();
    KinkMonitor::armed() = prev_armed;
    KinkMonitor::tol() = prev_tol;
    return res;
}

}  // namespace lcnn
