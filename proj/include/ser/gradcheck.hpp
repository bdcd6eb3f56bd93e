#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ser {

// One named parameter tensor exposed to the checker. `values` is perturbed in
// place; `gradient` is read after an evaluation with with_gradient == true.
struct GradcheckSlot {
    std::string name;
    std::span<double> values;
    std::span<const double> gradient;
};

// Result of one objective evaluation at the current parameter values.
// `pattern` fingerprints the piecewise-linear regime (ReLU masks, max-pool
// winners); 0 means the objective is smooth everywhere. The loss is carried
// in extended precision so that differences of nearby probes keep their digits.
struct Probe {
    long double loss = 0.0L;
    std::uint64_t pattern = 0;
};

// Evaluates the loss at the values currently stored behind the slots. When
// with_gradient is set it must also write the analytic gradient into the
// buffers the slots' `gradient` spans refer to.
using Objective = std::function<Probe(bool with_gradient)>;

// Loss at the current parameter values, evaluated on the smooth piece that
// the base point (the first gradient evaluation) lies on.
using FrozenObjective = std::function<long double()>;

struct GradcheckOptions {
    double eps = 1e-5;
    // Maximum number of coordinates checked per tensor.
    std::size_t subsample = 20;
    std::uint64_t seed = 0;
    // A coordinate whose +/-eps probes land in a different piecewise regime
    // than the base point is re-probed on the base point's piece when a
    // frozen objective is available, and otherwise replaced by another draw,
    // up to this many attempts per tensor.
    std::size_t max_attempts_factor = 20;
};

struct TensorGradcheck {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    // Of `checked`, coordinates whose probes crossed a kink and were
    // re-probed with the base regime frozen.
    std::size_t frozen = 0;
};

struct GradcheckReport {
    std::vector<TensorGradcheck> tensors;

    double worst() const;
    bool passed(double threshold) const;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares the analytic gradient against central differences
// (f(x + eps) - f(x - eps)) / (2 eps) on up to `subsample` coordinates per
// slot. Throws std::invalid_argument if the objective is not deterministic.
GradcheckReport finite_difference_gradcheck(const Objective& objective, const std::vector<GradcheckSlot>& slots,
                                            const GradcheckOptions& options = {},
                                            const FrozenObjective& frozen = {});

} // namespace ser
