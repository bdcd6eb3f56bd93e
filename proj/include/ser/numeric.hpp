#pragma once

#include <span>
#include <vector>

namespace ser {

// Probability floor inside the log of cross_entropy.
inline constexpr double kProbabilityFloor = 1e-12;

// Softmax with max-subtraction. Throws std::invalid_argument on an empty
// input or a non-finite score (the message names the offending index).
template <typename T>
std::vector<T> softmax_stable(std::span<const T> scores);

// Backward of softmax: given the forward output and dL/dprobs, returns dL/dscores.
template <typename T>
std::vector<T> softmax_backward(std::span<const T> probs, std::span<const T> dprobs);

// -log(probs[target] + kProbabilityFloor).
template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t target);

// dL/dprobs for cross_entropy: zero everywhere except the target entry.
template <typename T>
std::vector<T> cross_entropy_grad(std::span<const T> probs, std::size_t target, T scale = T{1});

std::size_t argmax(std::span<const float> values);
std::size_t argmax(std::span<const double> values);

} // namespace ser
