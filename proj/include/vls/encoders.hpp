// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vls/layers.hpp"
#include "vls/media.hpp"

namespace vls {

struct VisionEncoderConfig {
    std::int64_t patch = 8;           // square patch edge, kernel == stride
    std::int64_t temporal_stride = 2; // video tokenizer temporal kernel == stride
    std::int64_t d_mod = 64;
    int layers = 2;
    int heads = 4;
    std::int64_t ffn_mult = 4;
    std::int64_t max_len = 256; // positional table size
};

struct SpeechEncoderConfig {
    std::int64_t stride1 = 8; // first conv, kernel == stride over raw samples
    std::int64_t stride2 = 20; // second conv over first-stage frames
    std::int64_t c1 = 32;      // first conv channels
    std::int64_t d_mod = 64;
    int layers = 2;
    int heads = 4;
    std::int64_t ffn_mult = 4;
    std::int64_t max_len = 256;
    int rel_buckets = 32;
    int rel_max_distance = 128;
    bool use_rel_bias = true;
};

enum class Modality { Vision, Speech };

struct FeatureSequence {
    TensorPtr states; // [L x d_mod]
    Modality tag = Modality::Vision;
    std::int64_t length() const { return states ? states->dim(0) : 0; }
};

// Conv patch tokenizers (kernel == stride, so patches are a gather +
// matmul) feeding a transformer stack shared between the image and video
// paths. Tokenizer parameters are per-path.
struct VisionEncoder {
    VisionEncoderConfig cfg;
    Linear image_tokenizer; // [P*P*C -> d_mod]
    Linear video_tokenizer; // [St*P*P*C -> d_mod]
    Parameter* pos = nullptr;
    std::vector<EncoderLayer> stack;
    LayerNorm final_ln;

    static VisionEncoder create(ParamStore& store, const std::string& prefix,
                                const VisionEncoderConfig& cfg);
};

// Two-stage temporal conv featurizer (total stride stride1*stride2) under a
// transformer whose attention carries the gated relative position bias.
struct SpeechEncoder {
    SpeechEncoderConfig cfg;
    Linear conv1; // [stride1 -> c1]
    Linear conv2; // [stride2*c1 -> d_mod]
    Parameter* pos = nullptr;
    std::vector<EncoderLayer> stack;
    std::vector<RelPosBias> rel_bias; // one per layer when enabled
    LayerNorm final_ln;

    static SpeechEncoder create(ParamStore& store, const std::string& prefix,
                                const SpeechEncoderConfig& cfg);
    // CNN stage only (before positions and the transformer); exposed so the
    // stride arithmetic and shift behavior are testable in isolation.
    TensorPtr featurize(Tape& t, const AudioTensor& audio) const;
};

// L = (H/P)(W/P); shape errors name H, W and P.
FeatureSequence encode_image(Tape& t, const VisionEncoder& enc, const ImageTensor& img);
// L = (T/St)(H/P)(W/P).
FeatureSequence encode_video(Tape& t, const VisionEncoder& enc, const VideoTensor& vid);
// L = floor(floor(n/stride1)/stride2); audio shorter than one full window is
// a shape error reporting the minimum length.
FeatureSequence encode_audio(Tape& t, const SpeechEncoder& enc, const AudioTensor& audio);

// Closed-form output lengths for valid inputs.
std::int64_t image_token_count(const VisionEncoderConfig& cfg, std::int64_t h, std::int64_t w);
std::int64_t video_token_count(const VisionEncoderConfig& cfg, std::int64_t frames,
                               std::int64_t h, std::int64_t w);
std::int64_t audio_frame_count(const SpeechEncoderConfig& cfg, std::int64_t samples);

} // namespace vls
