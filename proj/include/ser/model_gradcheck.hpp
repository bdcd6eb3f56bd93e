#pragma once

#include <optional>
#include <string>

#include "ser/gradcheck.hpp"
#include "ser/model.hpp"
#include "ser/training.hpp"

namespace ser {

struct ModelGradcheckOptions {
    std::size_t segments = 3;
    GradcheckOptions check;
    // Fault injection: perturbs the analytic gradient of this tensor.
    std::optional<std::string> corrupt_tensor;
};

inline constexpr std::size_t kMaxGradcheckSegments = 3;
inline constexpr double kGradcheckThreshold = 1e-4;

// Double-precision check of the full model objective (data loss plus L2) with
// dropout off, on random standardized input and random labels drawn from the
// model seed. Throws ConfigError for more than kMaxGradcheckSegments segments
// or an unknown corrupt_tensor name.
GradcheckReport model_gradcheck(const ModelConfig& model, const MtlLossConfig& loss,
                                const ModelGradcheckOptions& options);

} // namespace ser
