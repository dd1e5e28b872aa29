// SPDX-License-Identifier: Apache-2.0
#include "vls/layers.hpp"

#include <cmath>

#include "vls/rng.hpp"

namespace vls {

Parameter* ParamStore::create(const std::string& name, std::vector<std::int64_t> shape,
                              Init init) {
    if (by_name_.count(name)) throw usage_error("parameter name collision: " + name);
    auto value = make_tensor(std::move(shape));
    switch (init.kind) {
    case Init::Kind::Zeros:
        break;
    case Init::Kind::Ones:
        std::fill(value->data.begin(), value->data.end(), real(1));
        break;
    case Init::Kind::UniformFanIn: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(value->dim(0)));
        SeededRng rng(seed_ ^ fnv1a(name));
        for (auto& v : value->data) v = static_cast<real>(rng.uniform(-bound, bound));
        break;
    }
    case Init::Kind::Uniform: {
        SeededRng rng(seed_ ^ fnv1a(name));
        for (auto& v : value->data) v = static_cast<real>(rng.uniform(-init.bound, init.bound));
        break;
    }
    }
    params_.emplace_back(name, std::move(value));
    Parameter* p = &params_.back();
    order_.push_back(p);
    by_name_.emplace(name, p);
    return p;
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

std::int64_t ParamStore::count(bool trainable_only) const {
    std::int64_t total = 0;
    for (const auto* p : order_) {
        if (trainable_only && p->frozen) continue;
        total += p->numel();
    }
    return total;
}

void ParamStore::zero_grads() {
    for (auto* p : order_) p->value->zero_grad();
}

void ParamStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
    for (auto* p : order_) {
        if (p->name.rfind(prefix, 0) == 0) p->set_frozen(frozen);
    }
}

Linear Linear::create(ParamStore& store, const std::string& name, std::int64_t in,
                      std::int64_t out, bool with_bias) {
    Linear l;
    l.w = store.create(name + ".w", {in, out}, Init::fan_in());
    if (with_bias) l.b = store.create(name + ".b", {out}, Init::zeros());
    return l;
}

TensorPtr Linear::forward(Tape& t, const TensorPtr& x) const {
    auto y = ops::matmul(t, x, w->value);
    return b ? ops::add_bias(t, y, b->value) : y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, std::int64_t d) {
    LayerNorm ln;
    ln.gain = store.create(name + ".gain", {d}, Init::ones());
    ln.bias = store.create(name + ".bias", {d}, Init::zeros());
    return ln;
}

TensorPtr LayerNorm::forward(Tape& t, const TensorPtr& x) const {
    return ops::layer_norm(t, x, gain->value, bias->value, eps);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, std::int64_t d,
                                std::int64_t hidden) {
    FeedForward ff;
    ff.fc1 = Linear::create(store, name + ".fc1", d, hidden);
    ff.fc2 = Linear::create(store, name + ".fc2", hidden, d);
    return ff;
}

TensorPtr FeedForward::forward(Tape& t, const TensorPtr& x) const {
    return fc2.forward(t, ops::gelu(t, fc1.forward(t, x)));
}

RelPosBias RelPosBias::create(ParamStore& store, const std::string& name, int heads, int buckets,
                              int max_distance) {
    RelPosBias rb;
    rb.heads = heads;
    rb.buckets = buckets;
    rb.max_distance = max_distance;
    rb.table = store.create(name + ".table", {static_cast<std::int64_t>(heads) * buckets},
                            Init::uniform(0.02));
    rb.gate = store.create(name + ".gate", {heads}, Init::zeros());
    return rb;
}

int RelPosBias::bucket_of(std::int64_t delta, int buckets, int max_distance) {
    const std::int64_t d = delta < 0 ? -delta : delta;
    constexpr int kExact = 8;
    if (d <= kExact) return static_cast<int>(d);
    const double span = std::log(static_cast<double>(max_distance) / kExact);
    const int log_buckets = buckets - 1 - (kExact + 1);
    const int b = kExact + 1 +
                  static_cast<int>(std::floor(std::log(static_cast<double>(d) / kExact) / span *
                                              log_buckets));
    return b >= buckets ? buckets - 1 : b;
}

TensorPtr RelPosBias::head_bias(Tape& t, int head, std::int64_t lq, std::int64_t lk) const {
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(lq * lk));
    const std::int64_t base = static_cast<std::int64_t>(head) * buckets;
    for (std::int64_t i = 0; i < lq; ++i) {
        for (std::int64_t j = 0; j < lk; ++j) {
            idx.push_back(base + bucket_of(i - j, buckets, max_distance));
        }
    }
    auto raw = ops::gather(t, table->value, idx, {lq, lk});
    auto gate_col = ops::reshape(t, gate->value, {heads, 1});
    auto gate_h = ops::reshape(t, ops::slice_rows(t, gate_col, head, head + 1), {1});
    return ops::mul_scalar_tensor(t, raw, ops::sigmoid(t, gate_h));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name,
                                              std::int64_t d, int heads) {
    if (d % heads != 0) {
        throw usage_error("attention: model dim " + std::to_string(d) +
                          " not divisible by heads " + std::to_string(heads));
    }
    MultiHeadAttention mha;
    mha.heads = heads;
    mha.d_model = d;
    mha.wq = Linear::create(store, name + ".wq", d, d);
    // a key bias shifts every attention logit in a row equally, which softmax
    // cancels; the parameter would be untrainable dead weight
    mha.wk = Linear::create(store, name + ".wk", d, d, /*with_bias=*/false);
    mha.wv = Linear::create(store, name + ".wv", d, d);
    mha.wo = Linear::create(store, name + ".wo", d, d);
    return mha;
}

TensorPtr MultiHeadAttention::forward(Tape& t, const TensorPtr& query_in, const TensorPtr& kv_in,
                                      const std::vector<std::uint8_t>& valid,
                                      const RelPosBias* rel_bias) const {
    const auto q = wq.forward(t, query_in);
    const auto k = wk.forward(t, kv_in);
    const auto v = wv.forward(t, kv_in);
    const std::int64_t dh = d_model / heads;
    std::vector<TensorPtr> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const auto qh = ops::slice_cols(t, q, h * dh, (h + 1) * dh);
        const auto kh = ops::slice_cols(t, k, h * dh, (h + 1) * dh);
        const auto vh = ops::slice_cols(t, v, h * dh, (h + 1) * dh);
        TensorPtr bias;
        if (rel_bias) bias = rel_bias->head_bias(t, h, q->dim(0), k->dim(0));
        outs.push_back(ops::attention(t, qh, kh, vh, valid, bias));
    }
    return wo.forward(t, ops::concat_cols(t, outs));
}

EncoderLayer EncoderLayer::create(ParamStore& store, const std::string& name, std::int64_t d,
                                  int heads, std::int64_t ffn_hidden) {
    EncoderLayer layer;
    layer.ln1 = LayerNorm::create(store, name + ".ln1", d);
    layer.ln2 = LayerNorm::create(store, name + ".ln2", d);
    layer.attn = MultiHeadAttention::create(store, name + ".attn", d, heads);
    layer.ff = FeedForward::create(store, name + ".ff", d, ffn_hidden);
    return layer;
}

TensorPtr EncoderLayer::forward(Tape& t, const TensorPtr& x,
                                const std::vector<std::uint8_t>& valid,
                                const RelPosBias* rel_bias) const {
    auto h = ln1.forward(t, x);
    auto y = ops::add(t, x, attn.forward(t, h, h, valid, rel_bias));
    auto h2 = ln2.forward(t, y);
    return ops::add(t, y, ff.forward(t, h2));
}

DecoderLayer DecoderLayer::create(ParamStore& store, const std::string& name, std::int64_t d,
                                  int heads, std::int64_t ffn_hidden) {
    DecoderLayer layer;
    layer.ln1 = LayerNorm::create(store, name + ".ln1", d);
    layer.ln2 = LayerNorm::create(store, name + ".ln2", d);
    layer.ln3 = LayerNorm::create(store, name + ".ln3", d);
    layer.self_attn = MultiHeadAttention::create(store, name + ".self", d, heads);
    layer.cross_attn = MultiHeadAttention::create(store, name + ".cross", d, heads);
    layer.ff = FeedForward::create(store, name + ".ff", d, ffn_hidden);
    return layer;
}

TensorPtr DecoderLayer::forward(Tape& t, const TensorPtr& x,
                                const std::vector<std::uint8_t>& self_valid,
                                const TensorPtr& memory,
                                const std::vector<std::uint8_t>& mem_valid) const {
    auto h = ln1.forward(t, x);
    auto y = ops::add(t, x, self_attn.forward(t, h, h, self_valid));
    auto h2 = ln2.forward(t, y);
    y = ops::add(t, y, cross_attn.forward(t, h2, memory, mem_valid));
    auto h3 = ln3.forward(t, y);
    return ops::add(t, y, ff.forward(t, h3));
}

std::vector<std::uint8_t> broadcast_key_mask(std::int64_t lq,
                                             const std::vector<std::uint8_t>& key_valid) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(lq) * key_valid.size());
    for (std::int64_t i = 0; i < lq; ++i) {
        std::copy(key_valid.begin(), key_valid.end(),
                  out.begin() +
                      static_cast<std::ptrdiff_t>(i * static_cast<std::int64_t>(key_valid.size())));
    }
    return out;
}

std::vector<std::uint8_t> causal_mask(std::int64_t l) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(l * l), 0);
    for (std::int64_t i = 0; i < l; ++i) {
        for (std::int64_t j = 0; j <= i; ++j) out[static_cast<std::size_t>(i * l + j)] = 1;
    }
    return out;
}

} // namespace vls
