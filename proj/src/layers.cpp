#include "ser/layers.hpp"

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "ser/numeric.hpp"

namespace ser::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
Eigen::Map<RowMat<T>> as_matrix(BasicTensor<T>& t, std::size_t rows, std::size_t cols)
{
    return Eigen::Map<RowMat<T>>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
Eigen::Map<const RowMat<T>> as_matrix(const BasicTensor<T>& t, std::size_t rows, std::size_t cols)
{
    return Eigen::Map<const RowMat<T>>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
Eigen::Map<const RowMat<T>> as_matrix(const BasicTensor<T>& t)
{
    return as_matrix(t, t.dim(0), t.size() / t.dim(0));
}

template <typename T>
Eigen::Map<RowMat<T>> as_matrix(BasicTensor<T>& t)
{
    return as_matrix(t, t.dim(0), t.size() / t.dim(0));
}

template <typename T>
Eigen::Map<const Vec<T>> as_vector(const BasicTensor<T>& t)
{
    return Eigen::Map<const Vec<T>>(t.data(), static_cast<Eigen::Index>(t.size()));
}

template <typename T>
Eigen::Map<Vec<T>> as_vector(BasicTensor<T>& t)
{
    return Eigen::Map<Vec<T>>(t.data(), static_cast<Eigen::Index>(t.size()));
}

void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw ShapeError(message);
    }
}

// (C * K) x T patch matrix; patch row c * K + k holds input[c][t + k - pad].
template <typename T>
RowMat<T> im2col(const BasicTensor<T>& input, std::size_t width)
{
    const std::size_t channels = input.dim(0);
    const std::size_t length = input.dim(1);
    const auto pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
    RowMat<T> cols = RowMat<T>::Zero(static_cast<Eigen::Index>(channels * width), static_cast<Eigen::Index>(length));
    for (std::size_t c = 0; c < channels; ++c) {
        const T* src = input.data() + c * length;
        for (std::size_t k = 0; k < width; ++k) {
            T* dst = cols.data() + (c * width + k) * length;
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
            const std::ptrdiff_t t_begin = std::max<std::ptrdiff_t>(0, -shift);
            const std::ptrdiff_t t_end =
                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(length), static_cast<std::ptrdiff_t>(length) - shift);
            for (std::ptrdiff_t t = t_begin; t < t_end; ++t) {
                dst[t] = src[t + shift];
            }
        }
    }
    return cols;
}

template <typename T>
T sigmoid(T x)
{
    return T{1} / (T{1} + std::exp(-x));
}

} // namespace

template <typename T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& input, const Conv1DParams<T>& params)
{
    require(input.rank() == 2, "conv1d: input must be channels x time, got " + shape_to_string(input.shape()));
    require(input.dim(0) == params.in_channels(),
            "conv1d: input has " + std::to_string(input.dim(0)) + " channels, kernels expect " +
                std::to_string(params.in_channels()));
    const std::size_t out_channels = params.out_channels();
    const std::size_t length = input.dim(1);
    const RowMat<T> cols = im2col(input, params.width());

    BasicTensor<T> out({out_channels, length});
    auto out_m = as_matrix(out);
    out_m.noalias() = as_matrix(params.kernels, out_channels, params.in_channels() * params.width()) * cols;
    out_m.colwise() += as_vector(params.bias);
    return out;
}

template <typename T>
BasicTensor<T> conv1d_backward(const BasicTensor<T>& input, const Conv1DParams<T>& params,
                               const BasicTensor<T>& grad_output, Conv1DParams<T>& grads, bool want_input_grad)
{
    const std::size_t channels = params.in_channels();
    const std::size_t width = params.width();
    const std::size_t length = input.dim(1);
    require(grad_output.rank() == 2 && grad_output.dim(0) == params.out_channels() && grad_output.dim(1) == length,
            "conv1d backward: gradient shape " + shape_to_string(grad_output.shape()) + " mismatches output");

    const RowMat<T> cols = im2col(input, width);
    const auto dout = as_matrix(grad_output);
    auto kernels_m = as_matrix(params.kernels, params.out_channels(), channels * width);
    as_matrix(grads.kernels, params.out_channels(), channels * width).noalias() += dout * cols.transpose();
    as_vector(grads.bias) += dout.rowwise().sum();

    if (!want_input_grad) {
        return {};
    }
    const RowMat<T> dcols = kernels_m.transpose() * dout;
    BasicTensor<T> dinput({channels, length});
    const auto pad = static_cast<std::ptrdiff_t>((width - 1) / 2);
    for (std::size_t c = 0; c < channels; ++c) {
        T* dst = dinput.data() + c * length;
        for (std::size_t k = 0; k < width; ++k) {
            const T* src = dcols.data() + (c * width + k) * length;
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
            const std::ptrdiff_t t_begin = std::max<std::ptrdiff_t>(0, -shift);
            const std::ptrdiff_t t_end =
                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(length), static_cast<std::ptrdiff_t>(length) - shift);
            for (std::ptrdiff_t t = t_begin; t < t_end; ++t) {
                dst[t + shift] += src[t];
            }
        }
    }
    return dinput;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x)
{
    BasicTensor<T> y = x;
    for (T& v : y.values()) {
        v = v > T{0} ? v : T{0};
    }
    return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output)
{
    BasicTensor<T> dx = grad_output;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x[i] > T{0})) {
            dx[i] = T{0};
        }
    }
    return dx;
}

template <typename T>
std::vector<std::uint8_t> relu_mask(const BasicTensor<T>& x)
{
    std::vector<std::uint8_t> on(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        on[i] = x[i] > T{0} ? 1 : 0;
    }
    return on;
}

template <typename T>
BasicTensor<T> relu_frozen(const BasicTensor<T>& x, const std::vector<std::uint8_t>& on)
{
    require(on.size() == x.size(), "relu_frozen: mask has " + std::to_string(on.size()) + " entries, input " +
                                       std::to_string(x.size()));
    BasicTensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (on[i] == 0) {
            y[i] = T{0};
        }
    }
    return y;
}

template <typename T>
PoolResult<T> maxpool_time_forward(const BasicTensor<T>& input)
{
    require(input.rank() == 2, "maxpool_time: input must be channels x time");
    const std::size_t channels = input.dim(0);
    const std::size_t length = input.dim(1);
    const std::size_t out_length = (length + 1) / 2;
    PoolResult<T> result{BasicTensor<T>({channels, out_length}), std::vector<std::uint32_t>(channels * out_length)};
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t j = 0; j < out_length; ++j) {
            const std::size_t first = c * length + 2 * j;
            T best = input[first];
            std::uint32_t winner = static_cast<std::uint32_t>(first);
            if (2 * j + 1 < length) {
                if (input[first + 1] > best) {
                    best = input[first + 1];
                    winner = static_cast<std::uint32_t>(first + 1);
                }
            } else if (T{0} > best) {
                // zero padding frame wins
                best = T{0};
                winner = kPadWinner;
            }
            result.output[c * out_length + j] = best;
            result.winners[c * out_length + j] = winner;
        }
    }
    return result;
}

template <typename T>
PoolResult<T> maxpool_channels_forward(const BasicTensor<T>& input, std::size_t pool)
{
    require(input.rank() == 2, "maxpool_channels: input must be channels x time");
    const std::size_t channels = input.dim(0);
    const std::size_t length = input.dim(1);
    require(pool >= 1 && channels % pool == 0,
            "maxpool_channels: " + std::to_string(channels) + " channels not divisible by pool " +
                std::to_string(pool));
    const std::size_t groups = channels / pool;
    PoolResult<T> result{BasicTensor<T>({groups, length}), std::vector<std::uint32_t>(groups * length)};
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t t = 0; t < length; ++t) {
            std::size_t winner = g * pool * length + t;
            T best = input[winner];
            for (std::size_t c = g * pool + 1; c < (g + 1) * pool; ++c) {
                const std::size_t idx = c * length + t;
                if (input[idx] > best) {
                    best = input[idx];
                    winner = idx;
                }
            }
            result.output[g * length + t] = best;
            result.winners[g * length + t] = static_cast<std::uint32_t>(winner);
        }
    }
    return result;
}

template <typename T>
BasicTensor<T> maxpool_gather(const BasicTensor<T>& input, const std::vector<std::uint32_t>& winners,
                              const Shape& output_shape)
{
    BasicTensor<T> output(output_shape);
    require(winners.size() == output.size(), "maxpool_gather: winner count does not match output shape");
    for (std::size_t i = 0; i < winners.size(); ++i) {
        if (winners[i] != kPadWinner) {
            require(winners[i] < input.size(), "maxpool_gather: winner index out of range");
            output[i] = input[winners[i]];
        }
    }
    return output;
}

template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& grad_output, const std::vector<std::uint32_t>& winners,
                                const Shape& input_shape)
{
    BasicTensor<T> dinput(input_shape);
    for (std::size_t i = 0; i < winners.size(); ++i) {
        if (winners[i] != kPadWinner) {
            dinput[winners[i]] += grad_output[i];
        }
    }
    return dinput;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double keep_prob, Mode mode, Rng& rng)
{
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw std::invalid_argument("dropout: keep_prob must be in (0, 1], got " + std::to_string(keep_prob));
    }
    DropoutResult<T> result{x, {}};
    if (mode == Mode::Eval || keep_prob == 1.0) {
        return result;
    }
    const T scale = static_cast<T>(1.0 / keep_prob);
    result.mask.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        result.mask[i] = rng.uniform() < keep_prob ? scale : T{0};
        result.output[i] *= result.mask[i];
    }
    return result;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_output, const std::vector<T>& mask)
{
    BasicTensor<T> dx = grad_output;
    if (mask.empty()) {
        return dx;
    }
    for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] *= mask[i];
    }
    return dx;
}

template <typename T>
BasicTensor<T> GRUCache<T>::outputs() const
{
    const std::size_t length = states.dim(0) - 1;
    const std::size_t hidden = states.dim(1);
    AlignedVector<T> rows(states.values().begin() + static_cast<std::ptrdiff_t>(hidden), states.values().end());
    return BasicTensor<T>({length, hidden}, std::move(rows));
}

template <typename T>
GRUCache<T> gru_forward(const BasicTensor<T>& inputs, const GRUParams<T>& params)
{
    require(inputs.rank() == 2, "gru: inputs must be length x features");
    require(inputs.dim(1) == params.input_size(),
            "gru: input dimension " + std::to_string(inputs.dim(1)) + " does not match W (" +
                std::to_string(params.input_size()) + ")");
    const std::size_t length = inputs.dim(0);
    const std::size_t hidden = params.hidden_size();
    const std::size_t in = params.input_size();

    const auto x = as_matrix(inputs);
    const RowMat<T> xz = x * as_matrix(params.W_z, hidden, in).transpose();
    const RowMat<T> xr = x * as_matrix(params.W_r, hidden, in).transpose();
    const RowMat<T> xh = x * as_matrix(params.W_h, hidden, in).transpose();
    const auto uz = as_matrix(params.U_z, hidden, hidden);
    const auto ur = as_matrix(params.U_r, hidden, hidden);
    const auto uh = as_matrix(params.U_h, hidden, hidden);
    const auto bz = as_vector(params.b_z);
    const auto br = as_vector(params.b_r);
    const auto bh = as_vector(params.b_h);

    GRUCache<T> cache{BasicTensor<T>({length + 1, hidden}), BasicTensor<T>({length, hidden}),
                      BasicTensor<T>({length, hidden}), BasicTensor<T>({length, hidden})};
    auto states = as_matrix(cache.states);
    auto z = as_matrix(cache.update);
    auto r = as_matrix(cache.reset);
    auto c = as_matrix(cache.candidate);
    const auto H = static_cast<Eigen::Index>(hidden);
    Vec<T> az(H), ar(H), ah(H), rh(H);
    for (std::size_t t = 0; t < length; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const Vec<T> prev = states.row(ti).transpose();
        az.noalias() = xz.row(ti).transpose() + uz * prev + bz;
        ar.noalias() = xr.row(ti).transpose() + ur * prev + br;
        for (Eigen::Index i = 0; i < H; ++i) {
            z(ti, i) = sigmoid(az(i));
            r(ti, i) = sigmoid(ar(i));
            rh(i) = r(ti, i) * prev(i);
        }
        ah.noalias() = xh.row(ti).transpose() + uh * rh + bh;
        for (Eigen::Index i = 0; i < H; ++i) {
            c(ti, i) = std::tanh(ah(i));
            states(ti + 1, i) = (T{1} - z(ti, i)) * prev(i) + z(ti, i) * c(ti, i);
        }
    }
    return cache;
}

template <typename T>
BasicTensor<T> gru_backward(const BasicTensor<T>& inputs, const GRUParams<T>& params, const GRUCache<T>& cache,
                            const BasicTensor<T>& grad_outputs, GRUParams<T>& grads)
{
    const std::size_t length = inputs.dim(0);
    const std::size_t hidden = params.hidden_size();
    const std::size_t in = params.input_size();
    require(grad_outputs.rank() == 2 && grad_outputs.dim(0) == length && grad_outputs.dim(1) == hidden,
            "gru backward: gradient shape " + shape_to_string(grad_outputs.shape()) + " mismatches outputs");
    const auto H = static_cast<Eigen::Index>(hidden);
    const auto L = static_cast<Eigen::Index>(length);

    const auto states = as_matrix(cache.states);
    const auto z = as_matrix(cache.update);
    const auto r = as_matrix(cache.reset);
    const auto c = as_matrix(cache.candidate);
    const auto dh_out = as_matrix(grad_outputs);
    const auto uz = as_matrix(params.U_z, hidden, hidden);
    const auto ur = as_matrix(params.U_r, hidden, hidden);
    const auto uh = as_matrix(params.U_h, hidden, hidden);

    RowMat<T> da_z(L, H), da_r(L, H), da_h(L, H), reset_prev(L, H);
    Vec<T> carry = Vec<T>::Zero(H);
    Vec<T> d_rh(H);
    for (Eigen::Index t = L - 1; t >= 0; --t) {
        const Vec<T> dh = dh_out.row(t).transpose() + carry;
        const auto prev = states.row(t);
        for (Eigen::Index i = 0; i < H; ++i) {
            const T zi = z(t, i);
            const T ci = c(t, i);
            da_h(t, i) = dh(i) * zi * (T{1} - ci * ci);
            da_z(t, i) = dh(i) * (ci - prev(i)) * zi * (T{1} - zi);
            carry(i) = dh(i) * (T{1} - zi);
            reset_prev(t, i) = r(t, i) * prev(i);
        }
        d_rh.noalias() = uh.transpose() * da_h.row(t).transpose();
        for (Eigen::Index i = 0; i < H; ++i) {
            const T ri = r(t, i);
            da_r(t, i) = d_rh(i) * prev(i) * ri * (T{1} - ri);
            carry(i) += d_rh(i) * ri;
        }
        carry.noalias() += ur.transpose() * da_r.row(t).transpose();
        carry.noalias() += uz.transpose() * da_z.row(t).transpose();
    }

    const auto x = as_matrix(inputs);
    const auto prev_states = states.topRows(L);
    as_matrix(grads.W_z, hidden, in).noalias() += da_z.transpose() * x;
    as_matrix(grads.W_r, hidden, in).noalias() += da_r.transpose() * x;
    as_matrix(grads.W_h, hidden, in).noalias() += da_h.transpose() * x;
    as_matrix(grads.U_z, hidden, hidden).noalias() += da_z.transpose() * prev_states;
    as_matrix(grads.U_r, hidden, hidden).noalias() += da_r.transpose() * prev_states;
    as_matrix(grads.U_h, hidden, hidden).noalias() += da_h.transpose() * reset_prev;
    as_vector(grads.b_z) += da_z.colwise().sum().transpose();
    as_vector(grads.b_r) += da_r.colwise().sum().transpose();
    as_vector(grads.b_h) += da_h.colwise().sum().transpose();

    BasicTensor<T> dx({length, in});
    auto dx_m = as_matrix(dx);
    dx_m.noalias() = da_z * as_matrix(params.W_z, hidden, in);
    dx_m.noalias() += da_r * as_matrix(params.W_r, hidden, in);
    dx_m.noalias() += da_h * as_matrix(params.W_h, hidden, in);
    return dx;
}

template <typename T>
AttentionResult<T> attention_pool_forward(const BasicTensor<T>& h, const AttentionParams<T>& params)
{
    require(h.rank() == 2 && h.dim(1) == params.w.size(),
            "attention: sequence " + shape_to_string(h.shape()) + " does not match w of size " +
                std::to_string(params.w.size()));
    const auto hm = as_matrix(h);
    const Vec<T> scores = hm * as_vector(params.w);
    AttentionResult<T> result;
    result.alphas = softmax_stable<T>(std::span<const T>(scores.data(), static_cast<std::size_t>(scores.size())));
    result.pooled = BasicTensor<T>({h.dim(1)});
    const Vec<T> alphas = Eigen::Map<const Vec<T>>(result.alphas.data(), static_cast<Eigen::Index>(result.alphas.size()));
    as_vector(result.pooled).noalias() = hm.transpose() * alphas;
    return result;
}

template <typename T>
BasicTensor<T> attention_pool_backward(const BasicTensor<T>& h, const AttentionParams<T>& params,
                                       const std::vector<T>& alphas, const BasicTensor<T>& grad_pooled,
                                       AttentionParams<T>& grads)
{
    const auto hm = as_matrix(h);
    // Owned copies keep reductions independent of where the caller's buffer sits.
    const Vec<T> alpha = Eigen::Map<const Vec<T>>(alphas.data(), static_cast<Eigen::Index>(alphas.size()));
    const auto dr = as_vector(grad_pooled);
    const Vec<T> dalpha = hm * dr;
    const T mean = alpha.dot(dalpha);
    const Vec<T> dscore = alpha.cwiseProduct(dalpha - Vec<T>::Constant(alpha.size(), mean));

    as_vector(grads.w).noalias() += hm.transpose() * dscore;
    BasicTensor<T> dh(h.shape());
    auto dhm = as_matrix(dh);
    dhm.noalias() = alpha * dr.transpose();
    dhm.noalias() += dscore * as_vector(params.w).transpose();
    return dh;
}

template <typename T>
BasicTensor<T> last_pool_forward(const BasicTensor<T>& h)
{
    require(h.rank() == 2, "last_pool: expected a length x hidden sequence");
    const auto last = h.row(h.dim(0) - 1);
    return BasicTensor<T>({h.dim(1)}, std::vector<T>(last.begin(), last.end()));
}

template <typename T>
BasicTensor<T> last_pool_backward(const BasicTensor<T>& grad_pooled, std::size_t length)
{
    BasicTensor<T> dh({length, grad_pooled.size()});
    auto last = dh.row(length - 1);
    std::copy(grad_pooled.values().begin(), grad_pooled.values().end(), last.begin());
    return dh;
}

template <typename T>
std::vector<T> dense_softmax_forward(const BasicTensor<T>& r, const HeadParams<T>& params)
{
    require(params.W.rank() == 2 && params.W.dim(1) == r.size(),
            "dense_softmax: W " + shape_to_string(params.W.shape()) + " does not match input of size " +
                std::to_string(r.size()));
    const Vec<T> logits = as_matrix(params.W) * as_vector(r) + as_vector(params.b);
    return softmax_stable<T>(std::span<const T>(logits.data(), static_cast<std::size_t>(logits.size())));
}

template <typename T>
BasicTensor<T> dense_softmax_backward(const BasicTensor<T>& r, const HeadParams<T>& params,
                                      const std::vector<T>& probs, const std::vector<T>& grad_probs,
                                      HeadParams<T>& grads)
{
    const std::vector<T> dlogits_v = softmax_backward<T>(probs, grad_probs);
    const Vec<T> dlogits = Eigen::Map<const Vec<T>>(dlogits_v.data(), static_cast<Eigen::Index>(dlogits_v.size()));
    as_matrix(grads.W).noalias() += dlogits * as_vector(r).transpose();
    as_vector(grads.b) += dlogits;
    BasicTensor<T> dr({r.size()});
    as_vector(dr).noalias() = as_matrix(params.W).transpose() * dlogits;
    return dr;
}

template <typename T>
void glorot_uniform(BasicTensor<T>& tensor, std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (T& v : tensor.values()) {
        v = static_cast<T>(rng.uniform(-limit, limit));
    }
}

#define SER_INSTANTIATE_LAYERS(T)                                                                                 \
    template BasicTensor<T> conv1d_forward(const BasicTensor<T>&, const Conv1DParams<T>&);                       \
    template BasicTensor<T> conv1d_backward(const BasicTensor<T>&, const Conv1DParams<T>&, const BasicTensor<T>&, \
                                            Conv1DParams<T>&, bool);                                              \
    template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                          \
    template std::vector<std::uint8_t> relu_mask(const BasicTensor<T>&);                                        \
    template BasicTensor<T> relu_frozen(const BasicTensor<T>&, const std::vector<std::uint8_t>&);               \
    template BasicTensor<T> maxpool_gather(const BasicTensor<T>&, const std::vector<std::uint32_t>&, const Shape&); \
    template PoolResult<T> maxpool_time_forward(const BasicTensor<T>&);                                           \
    template PoolResult<T> maxpool_channels_forward(const BasicTensor<T>&, std::size_t);                          \
    template BasicTensor<T> maxpool_backward(const BasicTensor<T>&, const std::vector<std::uint32_t>&,            \
                                             const Shape&);                                                       \
    template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, Mode, Rng&);                          \
    template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const std::vector<T>&);                       \
    template struct GRUCache<T>;                                                                                  \
    template GRUCache<T> gru_forward(const BasicTensor<T>&, const GRUParams<T>&);                                 \
    template BasicTensor<T> gru_backward(const BasicTensor<T>&, const GRUParams<T>&, const GRUCache<T>&,          \
                                         const BasicTensor<T>&, GRUParams<T>&);                                   \
    template AttentionResult<T> attention_pool_forward(const BasicTensor<T>&, const AttentionParams<T>&);         \
    template BasicTensor<T> attention_pool_backward(const BasicTensor<T>&, const AttentionParams<T>&,             \
                                                    const std::vector<T>&, const BasicTensor<T>&,                 \
                                                    AttentionParams<T>&);                                         \
    template BasicTensor<T> last_pool_forward(const BasicTensor<T>&);                                             \
    template BasicTensor<T> last_pool_backward(const BasicTensor<T>&, std::size_t);                               \
    template std::vector<T> dense_softmax_forward(const BasicTensor<T>&, const HeadParams<T>&);                   \
    template BasicTensor<T> dense_softmax_backward(const BasicTensor<T>&, const HeadParams<T>&,                   \
                                                   const std::vector<T>&, const std::vector<T>&, HeadParams<T>&); \
    template void glorot_uniform(BasicTensor<T>&, std::size_t, std::size_t, Rng&);

SER_INSTANTIATE_LAYERS(float)
SER_INSTANTIATE_LAYERS(double)

#undef SER_INSTANTIATE_LAYERS

} // namespace ser::nn
