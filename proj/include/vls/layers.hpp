// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "vls/tensor.hpp"

namespace vls {

// Parameter initialization families. Uniform draws are seeded per parameter
// from fnv1a(name) ^ model_seed, so adding or removing one parameter never
// shifts the values of any other.
struct Init {
    enum class Kind { Zeros, Ones, UniformFanIn, Uniform } kind = Kind::Zeros;
    double bound = 0.0; // Uniform only

    static Init zeros() { return {Kind::Zeros, 0.0}; }
    static Init ones() { return {Kind::Ones, 0.0}; }
    static Init fan_in() { return {Kind::UniformFanIn, 0.0}; }
    static Init uniform(double b) { return {Kind::Uniform, b}; }
};

// Owns every parameter of a model in creation order. Names are unique;
// pointers stay valid for the life of the store.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Parameter* create(const std::string& name, std::vector<std::int64_t> shape, Init init);
    Parameter* find(const std::string& name); // nullptr when absent
    const std::vector<Parameter*>& in_order() const { return order_; }
    std::uint64_t seed() const { return seed_; }

    std::int64_t count(bool trainable_only) const;
    void zero_grads();
    // Freezes/unfreezes every parameter whose name starts with `prefix`.
    void set_frozen_prefix(const std::string& prefix, bool frozen);

private:
    std::uint64_t seed_;
    std::deque<Parameter> params_;
    std::vector<Parameter*> order_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

struct Linear {
    Parameter* w = nullptr; // [in x out]
    Parameter* b = nullptr; // [out]; null for bias-free layers
    static Linear create(ParamStore& store, const std::string& name, std::int64_t in,
                         std::int64_t out, bool with_bias = true);
    TensorPtr forward(Tape& t, const TensorPtr& x) const;
};

struct LayerNorm {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;
    real eps = real(1e-5);
    static LayerNorm create(ParamStore& store, const std::string& name, std::int64_t d);
    TensorPtr forward(Tape& t, const TensorPtr& x) const;
};

struct FeedForward {
    Linear fc1, fc2;
    static FeedForward create(ParamStore& store, const std::string& name, std::int64_t d,
                              std::int64_t hidden);
    TensorPtr forward(Tape& t, const TensorPtr& x) const;
};

// Bucketed relative position bias with a per-head sigmoid gate:
// logit += sigmoid(gate_h) * table[h][bucket(i - j)]. Buckets are exact for
// distances <= 8 and log-spaced up to max_distance beyond that.
struct RelPosBias {
    Parameter* table = nullptr; // rank 1, [heads * buckets]
    Parameter* gate = nullptr;  // rank 1, [heads]
    int heads = 0;
    int buckets = 32;
    int max_distance = 128;

    static RelPosBias create(ParamStore& store, const std::string& name, int heads, int buckets,
                             int max_distance);
    static int bucket_of(std::int64_t delta, int buckets, int max_distance);
    TensorPtr head_bias(Tape& t, int head, std::int64_t lq, std::int64_t lk) const;
};

struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int heads = 0;
    std::int64_t d_model = 0;
    static MultiHeadAttention create(ParamStore& store, const std::string& name, std::int64_t d,
                                     int heads);
    // valid is a [Lq x Lk] row-major 0/1 mask shared across heads.
    TensorPtr forward(Tape& t, const TensorPtr& query_in, const TensorPtr& kv_in,
                      const std::vector<std::uint8_t>& valid,
                      const RelPosBias* rel_bias = nullptr) const;
};

// Pre-norm residual encoder layer.
struct EncoderLayer {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ff;
    static EncoderLayer create(ParamStore& store, const std::string& name, std::int64_t d,
                               int heads, std::int64_t ffn_hidden);
    TensorPtr forward(Tape& t, const TensorPtr& x, const std::vector<std::uint8_t>& valid,
                      const RelPosBias* rel_bias = nullptr) const;
};

// Pre-norm decoder layer: causal self-attention, cross-attention to the fused
// memory, feed-forward.
struct DecoderLayer {
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
    static DecoderLayer create(ParamStore& store, const std::string& name, std::int64_t d,
                               int heads, std::int64_t ffn_hidden);
    TensorPtr forward(Tape& t, const TensorPtr& x, const std::vector<std::uint8_t>& self_valid,
                      const TensorPtr& memory, const std::vector<std::uint8_t>& mem_valid) const;
};

// [Lq x Lk] mask where row i attends exactly the valid keys.
std::vector<std::uint8_t> broadcast_key_mask(std::int64_t lq,
                                             const std::vector<std::uint8_t>& key_valid);
// Lower-triangular causal mask.
std::vector<std::uint8_t> causal_mask(std::int64_t l);

} // namespace vls
