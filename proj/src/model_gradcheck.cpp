#include "ser/model_gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ser {

namespace {

constexpr std::uint64_t kInputStream = 0x67636b696eULL;

} // namespace

GradcheckReport model_gradcheck(const ModelConfig& model, const MtlLossConfig& loss,
                                const ModelGradcheckOptions& options)
{
    model.validate();
    loss.validate(model.tasks.size());
    if (options.segments < 1 || options.segments > kMaxGradcheckSegments) {
        throw ConfigError("gradcheck runs on 1.." + std::to_string(kMaxGradcheckSegments) + " segments, got " +
                          std::to_string(options.segments));
    }

    ModelParams<double> params = build_model<double>(model);
    ModelParams<double> grads = params.zeros_like();

    Rng rng(model.seed, {kInputStream});
    TensorD segments({options.segments, kWindowSamples});
    for (double& x : segments.values()) {
        x = rng.normal();
    }
    LabelTriple labels;
    for (Task t : kAllTasks) {
        labels[t] = static_cast<int>(rng.index(kNumClasses));
    }
    const auto targets = targets_for(labels, model.tasks);

    std::vector<GradcheckSlot> slots;
    std::vector<BasicTensor<double>*> grad_tensors;
    grads.for_each([&grad_tensors](const std::string&, BasicTensor<double>& g, bool) { grad_tensors.push_back(&g); });
    std::size_t i = 0;
    std::optional<std::size_t> corrupt;
    params.for_each([&](const std::string& name, BasicTensor<double>& t, bool) {
        if (options.corrupt_tensor && *options.corrupt_tensor == name) {
            corrupt = i;
        }
        slots.push_back(GradcheckSlot{name, t.span(), grad_tensors[i]->span()});
        ++i;
    });
    if (options.corrupt_tensor && !corrupt) {
        throw ConfigError("unknown tensor name '" + *options.corrupt_tensor + "'");
    }

    // The probe value is the same objective as mtl_loss, re-reduced from the
    // head logits in long double: at eps = 1e-5 the rounding of a double loss
    // near 3 would otherwise swamp gradients below ~1e-7.
    auto extended_loss = [&](const ForwardOutput<double>& out) {
        long double total = 0.0L;
        for (std::size_t b = 0; b < out.tasks.size(); ++b) {
            const auto& head = params.branches[b].head;
            const auto& r = out.cache.pooled[b];
            std::vector<long double> logits(head.b.size());
            long double peak = -std::numeric_limits<long double>::infinity();
            for (std::size_t k = 0; k < logits.size(); ++k) {
                long double s = head.b[k];
                for (std::size_t j = 0; j < r.size(); ++j) {
                    s += static_cast<long double>(head.W(k, j)) * r[j];
                }
                logits[k] = s;
                peak = std::max(peak, s);
            }
            long double z = 0.0L;
            for (long double s : logits) {
                z += std::exp(s - peak);
            }
            const auto target = static_cast<std::size_t>(targets[b].level);
            total += static_cast<long double>(loss.task_weights[b]) * (peak + std::log(z) - logits[target]);
        }
        if (loss.lambda != 0.0) {
            long double penalty = 0.0L;
            params.for_each([&penalty](const std::string&, const BasicTensor<double>& t, bool is_bias) {
                if (!is_bias) {
                    for (double v : t.values()) {
                        penalty += static_cast<long double>(v) * v;
                    }
                }
            });
            total += static_cast<long double>(loss.lambda) * penalty;
        }
        return total;
    };

    const ForwardOptions opts{nn::Mode::Eval, true, true};
    Regime base_regime;
    auto objective = [&](bool with_gradient) {
        const auto out = forward(params, segments, opts);
        if (with_gradient) {
            const auto value = mtl_loss(out.tasks, out.probs, targets, loss, params);
            grads.for_each([](const std::string&, BasicTensor<double>& g, bool) { g.fill(0.0); });
            backward(params, out, value.grad_probs, grads);
            add_l2_gradient(params, loss.lambda, grads);
            if (corrupt) {
                for (double& g : grad_tensors[*corrupt]->values()) {
                    g = g * 1.1 + 1e-3;
                }
            }
        }
        if (with_gradient) {
            base_regime = regime_of(out.cache);
        }
        return Probe{extended_loss(out), out.pattern};
    };
    // Central differences across a ReLU or max-pool switch measure a mix of
    // two pieces; such coordinates are re-probed on the base point's piece,
    // which is the one backpropagation differentiates.
    auto frozen = [&]() {
        ForwardOptions frozen_opts{nn::Mode::Eval, true, false};
        frozen_opts.frozen = &base_regime;
        return extended_loss(forward(params, segments, frozen_opts));
    };
    return finite_difference_gradcheck(objective, slots, options.check, frozen);
}

} // namespace ser
