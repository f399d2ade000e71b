#ifndef HSPROTO_EMBED_HPP
#define HSPROTO_EMBED_HPP

#include <cmath>
#include <vector>

#include "hsproto/cube.hpp"
#include "hsproto/error.hpp"
#include "hsproto/kernels.hpp"
#include "hsproto/model.hpp"
#include "hsproto/tensor.hpp"

namespace hsproto {

// Keeps the logistic strictly inside (0,1) even after rounding to float, so
// downstream logs and the (0,1) range invariant hold at any saturation.
inline constexpr double kSigmoidEps = 1e-7;

template <typename T>
inline T sigmoid_clamped(T x) {
    double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
    s = std::min(1.0 - kSigmoidEps, std::max(kSigmoidEps, s));
    return static_cast<T>(s);
}

template <typename T>
struct BlockTrace {
    Grid<T> pre1, post1, sum, out;
};

// Every intermediate the backward pass reads. Block k's input is
// blocks[k-1].out (down_out for k=0), so inputs are not duplicated.
template <typename T>
struct ForwardTrace {
    Grid<T> input;
    std::vector<T> z, h_pre, h, s_pre, s;  // attention path
    Grid<T> recal;
    Grid<T> down_out;
    std::vector<BlockTrace<T>> blocks;
    std::vector<T> embedding;
};

template <typename T>
void conv_apply(const ConvLayer<T>& l, const Grid<T>& in, Grid<T>& out) {
    kernels::conv_forward(in, l.w, l.b, l.ksize, l.stride, l.cout, out);
}

// Full forward pass, recording intermediates.
template <typename T>
void forward_trace(const Grid<T>& in, const EmbedModel<T>& m, bool attention,
                   ForwardTrace<T>& tr) {
    if (in.channels != m.cfg.channels)
        throw ArgumentError("embed: input has " + std::to_string(in.channels) +
                            " channels, model expects " + std::to_string(m.cfg.channels));
    if (attention && !m.cfg.attention)
        throw ArgumentError("embed: attention requested but model has no attention block");
    tr.input = in;
    const Grid<T>* x = &tr.input;
    if (attention) {
        kernels::squeeze_mean_max(tr.input, tr.z);
        kernels::fc_forward(m.se.w1, m.se.b1, tr.z, tr.h_pre);
        tr.h.resize(tr.h_pre.size());
        for (size_t i = 0; i < tr.h_pre.size(); ++i)
            tr.h[i] = tr.h_pre[i] > T(0) ? tr.h_pre[i] : T(0);
        kernels::fc_forward(m.se.w2, m.se.b2, tr.h, tr.s_pre);
        tr.s.resize(tr.s_pre.size());
        for (size_t i = 0; i < tr.s_pre.size(); ++i) tr.s[i] = sigmoid_clamped(tr.s_pre[i]);
        kernels::scale_channels(tr.input, tr.s, tr.recal);
        x = &tr.recal;
    }
    conv_apply(m.down, *x, tr.down_out);
    const Grid<T>* cur = &tr.down_out;
    size_t nblocks = 0;
    for (const auto& st : m.stages) nblocks += st.size();
    tr.blocks.resize(nblocks);
    size_t bi = 0;
    for (const auto& st : m.stages)
        for (const auto& blk : st) {
            auto& bt = tr.blocks[bi++];
            conv_apply(blk.c1, *cur, bt.pre1);
            kernels::relu_forward(bt.pre1, bt.post1);
            conv_apply(blk.c2, bt.post1, bt.sum);
            if (m.cfg.residual) {
                if (blk.has_proj) {
                    Grid<T> sc;
                    conv_apply(blk.proj, *cur, sc);
                    kernels::add_inplace(bt.sum, sc);
                } else {
                    kernels::add_inplace(bt.sum, *cur);
                }
            }
            kernels::relu_forward(bt.sum, bt.out);
            cur = &bt.out;
        }
    kernels::global_avg_pool(*cur, tr.embedding);
}

// Accumulates parameter gradients into `g` for one cube given d(loss)/d(embedding).
template <typename T>
void backward_into(const ForwardTrace<T>& tr, const EmbedModel<T>& m, bool attention,
                   const std::vector<T>& g_emb, EmbedModel<T>& g) {
    size_t bi = tr.blocks.size();
    const Grid<T>* last = bi == 0 ? &tr.down_out : &tr.blocks[bi - 1].out;
    Grid<T> gx;
    kernels::global_avg_pool_backward(g_emb, last->height, last->width, gx);
    for (size_t s = m.stages.size(); s-- > 0;)
        for (size_t b = m.stages[s].size(); b-- > 0;) {
            --bi;
            const auto& blk = m.stages[s][b];
            auto& gblk = g.stages[s][b];
            const auto& bt = tr.blocks[bi];
            const Grid<T>& bin = bi == 0 ? tr.down_out : tr.blocks[bi - 1].out;
            Grid<T> g_sum;
            kernels::relu_backward(bt.sum, gx, g_sum);
            kernels::conv_param_grad(bt.post1, g_sum, blk.c2.ksize, blk.c2.stride, gblk.c2.w,
                                     gblk.c2.b);
            Grid<T> g_post1;
            kernels::conv_input_grad(g_sum, blk.c2.w, blk.c2.ksize, blk.c2.stride, bt.post1.height,
                                     bt.post1.width, blk.c2.cin, g_post1);
            Grid<T> g_pre1;
            kernels::relu_backward(bt.pre1, g_post1, g_pre1);
            kernels::conv_param_grad(bin, g_pre1, blk.c1.ksize, blk.c1.stride, gblk.c1.w,
                                     gblk.c1.b);
            Grid<T> g_in;
            kernels::conv_input_grad(g_pre1, blk.c1.w, blk.c1.ksize, blk.c1.stride, bin.height,
                                     bin.width, blk.c1.cin, g_in);
            if (m.cfg.residual) {
                if (blk.has_proj) {
                    kernels::conv_param_grad(bin, g_sum, blk.proj.ksize, blk.proj.stride,
                                             gblk.proj.w, gblk.proj.b);
                    Grid<T> g_sc;
                    kernels::conv_input_grad(g_sum, blk.proj.w, blk.proj.ksize, blk.proj.stride,
                                             bin.height, bin.width, blk.proj.cin, g_sc);
                    kernels::add_inplace(g_in, g_sc);
                } else {
                    kernels::add_inplace(g_in, g_sum);
                }
            }
            gx = std::move(g_in);
        }
    const Grid<T>& down_in = attention ? tr.recal : tr.input;
    kernels::conv_param_grad(down_in, gx, m.down.ksize, m.down.stride, g.down.w, g.down.b);
    if (!attention) return;
    Grid<T> g_recal;
    kernels::conv_input_grad(gx, m.down.w, m.down.ksize, m.down.stride, down_in.height,
                             down_in.width, m.down.cin, g_recal);
    // recal = input .* s  (per channel), so ds_c = sum_p input[p,c] * g_recal[p,c]
    std::vector<T> g_s;
    kernels::scale_channels_grad_s(tr.input, g_recal, g_s);
    std::vector<T> g_spre(g_s.size());
    for (size_t i = 0; i < g_s.size(); ++i) g_spre[i] = g_s[i] * tr.s[i] * (T(1) - tr.s[i]);
    std::vector<T> g_h;
    kernels::fc_backward(m.se.w2, tr.h, g_spre, g.se.w2, g.se.b2, g_h);
    std::vector<T> g_hpre(g_h.size());
    for (size_t i = 0; i < g_h.size(); ++i) g_hpre[i] = tr.h_pre[i] > T(0) ? g_h[i] : T(0);
    std::vector<T> g_z;
    kernels::fc_backward(m.se.w1, tr.z, g_hpre, g.se.w1, g.se.b1, g_z);
    // g_z ends here: the squeeze input is data, not a parameter.
}

template <typename T>
std::vector<T> embed_grid(const Grid<T>& in, const EmbedModel<T>& m, bool attention) {
    ForwardTrace<T> tr;
    forward_trace(in, m, attention, tr);
    return std::move(tr.embedding);
}

template <typename T>
std::vector<T> embed_grid(const Grid<T>& in, const EmbedModel<T>& m) {
    return embed_grid(in, m, m.cfg.attention);
}

// Row i is embed(batch[i]). Cubes are independent, so the batch loop is
// parallel and still bitwise identical to embedding one at a time.
template <typename T>
Mat<T> embed_batch_grids(const std::vector<const Grid<T>*>& batch, const EmbedModel<T>& m,
                         bool attention) {
    for (const auto* g : batch)
        if (g->channels != m.cfg.channels)
            throw ArgumentError("embed_batch: heterogeneous channel counts");
    Mat<T> out(batch.size(), static_cast<size_t>(m.cfg.embed_dim()));
    const bool par = kernels::parallel_enabled() && !kernels::in_parallel_region();
#pragma omp parallel for if (par && batch.size() > 1)
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(batch.size()); ++i) {
        const std::vector<T> e = embed_grid(*batch[i], m, attention);
        std::copy(e.begin(), e.end(), out.row(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cube-level wrappers (float production path).
// ---------------------------------------------------------------------------

std::vector<float> se_squeeze(const HyperCube& cube);
std::vector<float> se_squeeze_avg_only(const HyperCube& cube);
std::vector<float> se_excite(const std::vector<float>& z, const SEBlock<float>& se);
HyperCube se_recalibrate(const HyperCube& cube, const std::vector<float>& s);
Grid<float> spectral_downsample(const HyperCube& cube, const ConvLayer<float>& down);
std::vector<float> embed(const HyperCube& cube, const EmbedModel<float>& m,
                         bool attention_enabled);
std::vector<float> embed(const HyperCube& cube, const EmbedModel<float>& m);
Mat<float> embed_batch(const std::vector<HyperCube>& cubes, const EmbedModel<float>& m,
                       bool attention_enabled);

// ---------------------------------------------------------------------------
// Loss plumbing. A loss sees the model and a batch of input grids; gradients
// are accumulated batch-sequentially so results do not depend on thread count.
// ---------------------------------------------------------------------------

template <typename T>
struct LossFn {
    virtual ~LossFn() = default;
    virtual double value(const EmbedModel<T>& m, const std::vector<const Grid<T>*>& batch) const = 0;
    virtual double value_and_grad(const EmbedModel<T>& m, const std::vector<const Grid<T>*>& batch,
                                  EmbedModel<T>& g) const = 0;
};

// Losses that are a function of the embedding matrix only. Derived classes
// implement objective(); the gradient driver embeds the batch, pulls
// d(loss)/d(embeddings), then re-runs each cube with a trace and backprops.
// The second forward pass trades time for bounded memory on large batches.
template <typename T>
struct EmbeddingLoss : LossFn<T> {
    // Attention runs only when both this flag and the model config say so;
    // clearing it bypasses an existing attention block (its grads stay zero).
    bool attention = true;

    // Returns the loss; when g_emb is non-null it is filled with the
    // n x D gradient w.r.t. the embeddings.
    virtual double objective(const Mat<double>& emb, Mat<double>* g_emb) const = 0;

    double value(const EmbedModel<T>& m, const std::vector<const Grid<T>*>& batch) const override {
        const Mat<T> e = embed_batch_grids(batch, m, attention && m.cfg.attention);
        return objective(cast_mat<double>(e), nullptr);
    }

    double value_and_grad(const EmbedModel<T>& m, const std::vector<const Grid<T>*>& batch,
                          EmbedModel<T>& g) const override {
        const bool attn = attention && m.cfg.attention;
        const Mat<T> e = embed_batch_grids(batch, m, attn);
        Mat<double> g_emb(e.rows, e.cols);
        const double loss = objective(cast_mat<double>(e), &g_emb);
        const int d = m.cfg.embed_dim();
        std::vector<T> ge(static_cast<size_t>(d));
        ForwardTrace<T> tr;
        for (size_t i = 0; i < batch.size(); ++i) {
            for (int k = 0; k < d; ++k) ge[static_cast<size_t>(k)] = static_cast<T>(g_emb.at(i, k));
            forward_trace(*batch[i], m, attn, tr);
            backward_into(tr, m, attn, ge, g);
        }
        return loss;
    }
};

// Evaluates the loss and returns a gradient structure of the same shape as m.
template <typename T>
EmbedModel<T> gradient(const LossFn<T>& loss, const EmbedModel<T>& m,
                       const std::vector<const Grid<T>*>& batch) {
    EmbedModel<T> g = EmbedModel<T>::build(m.cfg);
    g.zero_tensors();
    const double v = loss.value_and_grad(m, batch, g);
    if (!std::isfinite(v)) throw TrainingError("gradient: loss is not finite");
    return g;
}

}  // namespace hsproto

#endif
