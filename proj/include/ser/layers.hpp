#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ser/rng.hpp"
#include "ser/tensor.hpp"

// Differentiable building blocks. Every op is a pure function of its inputs;
// backward functions accumulate (+=) parameter gradients into a caller-owned
// gradient struct of the same shape as the parameters and return the gradient
// with respect to the op's input.
namespace ser::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// 1-D convolution, stride 1, "same" zero padding: (K - 1) / 2 frames on the
// left, the rest on the right, so the output length equals the input length.

template <typename T>
struct Conv1DParams {
    BasicTensor<T> kernels; // out_channels x in_channels x width
    BasicTensor<T> bias;    // out_channels

    static Conv1DParams zeros(std::size_t out_channels, std::size_t in_channels, std::size_t width)
    {
        return {BasicTensor<T>({out_channels, in_channels, width}), BasicTensor<T>({out_channels})};
    }
    std::size_t out_channels() const { return kernels.dim(0); }
    std::size_t in_channels() const { return kernels.dim(1); }
    std::size_t width() const { return kernels.dim(2); }
};

// input: in_channels x T -> out_channels x T
template <typename T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& input, const Conv1DParams<T>& params);

// Returns dL/dinput when want_input_grad is set, an empty tensor otherwise.
template <typename T>
BasicTensor<T> conv1d_backward(const BasicTensor<T>& input, const Conv1DParams<T>& params,
                               const BasicTensor<T>& grad_output, Conv1DParams<T>& grads,
                               bool want_input_grad = true);

// ---------------------------------------------------------------------------
// ReLU. The derivative at exactly 0 is 0.

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output);

// 1 where x > 0: the on/off pattern of a ReLU.
template <typename T>
std::vector<std::uint8_t> relu_mask(const BasicTensor<T>& x);

// ReLU with a fixed on/off pattern instead of the sign of x.
template <typename T>
BasicTensor<T> relu_frozen(const BasicTensor<T>& x, const std::vector<std::uint8_t>& on);

// ---------------------------------------------------------------------------
// Max pooling. `winners` holds, for each output cell, the flat index of the
// input cell it was taken from; padding cells are encoded as kPadWinner.
// Ties go to the earliest index.

inline constexpr std::uint32_t kPadWinner = 0xffffffffu;

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    std::vector<std::uint32_t> winners;
};

// C x T -> C x ceil(T / 2); an odd T is padded with one zero frame.
template <typename T>
PoolResult<T> maxpool_time_forward(const BasicTensor<T>& input);

// C x T -> (C / pool) x T, max over consecutive channel groups.
template <typename T>
PoolResult<T> maxpool_channels_forward(const BasicTensor<T>& input, std::size_t pool);

// Either pool with the winners fixed in advance: output[i] = input[winners[i]].
template <typename T>
BasicTensor<T> maxpool_gather(const BasicTensor<T>& input, const std::vector<std::uint32_t>& winners,
                              const Shape& output_shape);

// Shared by both pools: scatters grad_output back onto the winning cells.
template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& grad_output, const std::vector<std::uint32_t>& winners,
                                const Shape& input_shape);

// ---------------------------------------------------------------------------

// Row-major concatenation into a vector: element (g, t) lands at g * T + t.
template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& input)
{
    return input.reshaped({input.size()});
}

// ---------------------------------------------------------------------------
// Inverted dropout.

enum class Mode { Train, Eval };

template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    std::vector<T> mask; // 0 or 1/keep_prob per entry; empty means identity
};

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double keep_prob, Mode mode, Rng& rng);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_output, const std::vector<T>& mask);

// ---------------------------------------------------------------------------
// GRU (reset gate applied before the recurrent matmul):
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * c

template <typename T>
struct GRUParams {
    BasicTensor<T> W_z, W_r, W_h; // hidden x input
    BasicTensor<T> U_z, U_r, U_h; // hidden x hidden
    BasicTensor<T> b_z, b_r, b_h; // hidden

    static GRUParams zeros(std::size_t input, std::size_t hidden)
    {
        GRUParams p;
        for (auto* w : {&p.W_z, &p.W_r, &p.W_h}) {
            *w = BasicTensor<T>({hidden, input});
        }
        for (auto* u : {&p.U_z, &p.U_r, &p.U_h}) {
            *u = BasicTensor<T>({hidden, hidden});
        }
        for (auto* b : {&p.b_z, &p.b_r, &p.b_h}) {
            *b = BasicTensor<T>({hidden});
        }
        return p;
    }
    std::size_t input_size() const { return W_z.dim(1); }
    std::size_t hidden_size() const { return W_z.dim(0); }
};

template <typename T>
struct GRUCache {
    BasicTensor<T> states; // (L + 1) x H, row 0 is the zero initial state
    BasicTensor<T> update; // z, L x H
    BasicTensor<T> reset;  // r, L x H
    BasicTensor<T> candidate; // c, L x H

    // h_1 .. h_L as an L x H tensor.
    BasicTensor<T> outputs() const;
};

// inputs: L x D
template <typename T>
GRUCache<T> gru_forward(const BasicTensor<T>& inputs, const GRUParams<T>& params);

// grad_outputs: L x H (dL/dh_t). Returns dL/dinputs (L x D).
template <typename T>
BasicTensor<T> gru_backward(const BasicTensor<T>& inputs, const GRUParams<T>& params, const GRUCache<T>& cache,
                            const BasicTensor<T>& grad_outputs, GRUParams<T>& grads);

// ---------------------------------------------------------------------------
// Attention pooling: alpha = softmax_i(w . h_i), r = sum_i alpha_i h_i.

template <typename T>
struct AttentionParams {
    BasicTensor<T> w; // H
};

template <typename T>
struct AttentionResult {
    BasicTensor<T> pooled; // H
    std::vector<T> alphas; // L
};

template <typename T>
AttentionResult<T> attention_pool_forward(const BasicTensor<T>& h, const AttentionParams<T>& params);

template <typename T>
BasicTensor<T> attention_pool_backward(const BasicTensor<T>& h, const AttentionParams<T>& params,
                                       const std::vector<T>& alphas, const BasicTensor<T>& grad_pooled,
                                       AttentionParams<T>& grads);

// h_L of an L x H sequence.
template <typename T>
BasicTensor<T> last_pool_forward(const BasicTensor<T>& h);

template <typename T>
BasicTensor<T> last_pool_backward(const BasicTensor<T>& grad_pooled, std::size_t length);

// ---------------------------------------------------------------------------
// Fully connected layer followed by softmax.

template <typename T>
struct HeadParams {
    BasicTensor<T> W; // classes x H
    BasicTensor<T> b; // classes
};

template <typename T>
std::vector<T> dense_softmax_forward(const BasicTensor<T>& r, const HeadParams<T>& params);

// grad_probs: dL/dprobs. Returns dL/dr.
template <typename T>
BasicTensor<T> dense_softmax_backward(const BasicTensor<T>& r, const HeadParams<T>& params,
                                      const std::vector<T>& probs, const std::vector<T>& grad_probs,
                                      HeadParams<T>& grads);

// ---------------------------------------------------------------------------

// Uniform in +/- sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(BasicTensor<T>& tensor, std::size_t fan_in, std::size_t fan_out, Rng& rng);

} // namespace ser::nn
