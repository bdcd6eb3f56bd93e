#include "ser/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ser/rng.hpp"

namespace ser {

double GradcheckReport::worst() const
{
    double worst = 0.0;
    for (const auto& tensor : tensors) {
        worst = std::max(worst, tensor.max_relative_error);
    }
    return worst;
}

bool GradcheckReport::passed(double threshold) const
{
    return std::all_of(tensors.begin(), tensors.end(),
                       [threshold](const TensorGradcheck& t) { return t.max_relative_error < threshold; });
}

double relative_error(double analytic, double numeric)
{
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / scale;
}

GradcheckReport finite_difference_gradcheck(const Objective& objective, const std::vector<GradcheckSlot>& slots,
                                            const GradcheckOptions& options, const FrozenObjective& frozen)
{
    const Probe base = objective(true);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(slots.size());
    for (const auto& slot : slots) {
        analytic.emplace_back(slot.gradient.begin(), slot.gradient.end());
    }

    const Probe again = objective(false);
    if (again.loss != base.loss || again.pattern != base.pattern) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "gradcheck: objective is not deterministic (" << base.loss << " vs " << again.loss
            << " at identical parameters); disable dropout and fix inputs";
        throw std::invalid_argument(msg.str());
    }
    if (frozen && frozen() != base.loss) {
        throw std::invalid_argument("gradcheck: the frozen-regime objective disagrees with the objective at the base point");
    }

    GradcheckReport report;
    Rng rng(options.seed, {0x67726164ULL});
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const auto& slot = slots[s];
        TensorGradcheck result;
        result.name = slot.name;

        const std::size_t n = slot.values.size();
        const std::size_t wanted = std::min(options.subsample, n);
        const std::size_t max_attempts = std::max<std::size_t>(wanted * options.max_attempts_factor, wanted);
        std::unordered_set<std::size_t> tried;
        std::size_t attempts = 0;

        while (result.checked < wanted && attempts < max_attempts && tried.size() < n) {
            ++attempts;
            std::size_t index = 0;
            if (wanted == n) {
                // Small tensors: walk every coordinate in order.
                index = tried.size();
            } else {
                do {
                    index = rng.index(n);
                } while (tried.count(index) != 0);
            }
            tried.insert(index);

            double& value = slot.values[index];
            const double original = value;
            value = original + options.eps;
            Probe plus = objective(false);
            value = original - options.eps;
            Probe minus = objective(false);
            value = original;

            if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
                if (!frozen) {
                    ++result.skipped_kinks;
                    continue;
                }
                value = original + options.eps;
                plus.loss = frozen();
                value = original - options.eps;
                minus.loss = frozen();
                value = original;
                ++result.frozen;
            }

            const auto numeric =
                static_cast<double>((plus.loss - minus.loss) / (2.0L * static_cast<long double>(options.eps)));
            const double err = relative_error(analytic[s][index], numeric);
            ++result.checked;
            if (err >= result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_index = index;
                result.worst_analytic = analytic[s][index];
                result.worst_numeric = numeric;
            }
        }
        if (result.checked == 0 && wanted > 0) {
            // Every draw straddled a kink: report it as a failure rather than a vacuous pass.
            result.max_relative_error = std::numeric_limits<double>::infinity();
        }
        report.tensors.push_back(std::move(result));
    }
    return report;
}

} // namespace ser
