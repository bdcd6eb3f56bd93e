#include "ser/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ser {

template <typename T>
std::vector<T> softmax_stable(std::span<const T> scores)
{
    if (scores.empty()) {
        throw std::invalid_argument("softmax: empty score vector");
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw std::invalid_argument("softmax: non-finite score at index " + std::to_string(i));
        }
    }
    const T peak = *std::max_element(scores.begin(), scores.end());
    std::vector<T> out(scores.size());
    T total = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - peak);
        total += out[i];
    }
    for (T& value : out) {
        value /= total;
    }
    return out;
}

template <typename T>
std::vector<T> softmax_backward(std::span<const T> probs, std::span<const T> dprobs)
{
    T dot = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        dot += probs[i] * dprobs[i];
    }
    std::vector<T> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out[i] = probs[i] * (dprobs[i] - dot);
    }
    return out;
}

template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t target)
{
    if (target >= probs.size()) {
        throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " outside " +
                                std::to_string(probs.size()) + " classes");
    }
    return -std::log(probs[target] + static_cast<T>(kProbabilityFloor));
}

template <typename T>
std::vector<T> cross_entropy_grad(std::span<const T> probs, std::size_t target, T scale)
{
    if (target >= probs.size()) {
        throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " outside " +
                                std::to_string(probs.size()) + " classes");
    }
    std::vector<T> grad(probs.size(), T{0});
    grad[target] = -scale / (probs[target] + static_cast<T>(kProbabilityFloor));
    return grad;
}

namespace {

template <typename T>
std::size_t argmax_impl(std::span<const T> values)
{
    // Ties resolve to the lowest index.
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

} // namespace

std::size_t argmax(std::span<const float> values) { return argmax_impl(values); }
std::size_t argmax(std::span<const double> values) { return argmax_impl(values); }

template std::vector<float> softmax_stable(std::span<const float>);
template std::vector<double> softmax_stable(std::span<const double>);
template std::vector<float> softmax_backward(std::span<const float>, std::span<const float>);
template std::vector<double> softmax_backward(std::span<const double>, std::span<const double>);
template float cross_entropy(std::span<const float>, std::size_t);
template double cross_entropy(std::span<const double>, std::size_t);
template std::vector<float> cross_entropy_grad(std::span<const float>, std::size_t, float);
template std::vector<double> cross_entropy_grad(std::span<const double>, std::size_t, double);

} // namespace ser
