// SPDX-License-Identifier: Apache-2.0
#include "vls/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace vls {

namespace {

TensorPtr run_stack(Tape& t, const std::vector<EncoderLayer>& stack, const LayerNorm& final_ln,
                    TensorPtr x, const std::vector<RelPosBias>* rel_bias) {
    const std::int64_t l = x->dim(0);
    const auto valid = broadcast_key_mask(l, std::vector<std::uint8_t>(static_cast<std::size_t>(l), 1));
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const RelPosBias* rb = rel_bias && i < rel_bias->size() ? &(*rel_bias)[i] : nullptr;
        x = stack[i].forward(t, x, valid, rb);
    }
    return final_ln.forward(t, x);
}

TensorPtr add_positions(Tape& t, const TensorPtr& x, Parameter* pos) {
    const std::int64_t l = x->dim(0);
    if (l > pos->value->dim(0)) {
        throw usage_error("encoder: sequence length " + std::to_string(l) +
                          " exceeds positional table " + std::to_string(pos->value->dim(0)));
    }
    return ops::add(t, x, ops::slice_rows(t, pos->value, 0, l));
}

} // namespace

VisionEncoder VisionEncoder::create(ParamStore& store, const std::string& prefix,
                                    const VisionEncoderConfig& cfg) {
    VisionEncoder enc;
    enc.cfg = cfg;
    const std::int64_t c = 3;
    enc.image_tokenizer =
        Linear::create(store, prefix + ".tok2d", cfg.patch * cfg.patch * c, cfg.d_mod);
    enc.video_tokenizer = Linear::create(store, prefix + ".tok3d",
                                         cfg.temporal_stride * cfg.patch * cfg.patch * c, cfg.d_mod);
    enc.pos = store.create(prefix + ".pos", {cfg.max_len, cfg.d_mod},
                           Init::uniform(1.0 / std::sqrt(static_cast<double>(cfg.d_mod))));
    for (int i = 0; i < cfg.layers; ++i) {
        enc.stack.push_back(EncoderLayer::create(store, prefix + ".l" + std::to_string(i),
                                                 cfg.d_mod, cfg.heads, cfg.d_mod * cfg.ffn_mult));
    }
    enc.final_ln = LayerNorm::create(store, prefix + ".ln_out", cfg.d_mod);
    return enc;
}

SpeechEncoder SpeechEncoder::create(ParamStore& store, const std::string& prefix,
                                    const SpeechEncoderConfig& cfg) {
    SpeechEncoder enc;
    enc.cfg = cfg;
    enc.conv1 = Linear::create(store, prefix + ".conv1", cfg.stride1, cfg.c1);
    enc.conv2 = Linear::create(store, prefix + ".conv2", cfg.stride2 * cfg.c1, cfg.d_mod);
    enc.pos = store.create(prefix + ".pos", {cfg.max_len, cfg.d_mod},
                           Init::uniform(1.0 / std::sqrt(static_cast<double>(cfg.d_mod))));
    for (int i = 0; i < cfg.layers; ++i) {
        enc.stack.push_back(EncoderLayer::create(store, prefix + ".l" + std::to_string(i),
                                                 cfg.d_mod, cfg.heads, cfg.d_mod * cfg.ffn_mult));
        if (cfg.use_rel_bias) {
            enc.rel_bias.push_back(RelPosBias::create(store,
                                                      prefix + ".l" + std::to_string(i) + ".rel",
                                                      cfg.heads, cfg.rel_buckets,
                                                      cfg.rel_max_distance));
        }
    }
    enc.final_ln = LayerNorm::create(store, prefix + ".ln_out", cfg.d_mod);
    return enc;
}

std::int64_t image_token_count(const VisionEncoderConfig& cfg, std::int64_t h, std::int64_t w) {
    return (h / cfg.patch) * (w / cfg.patch);
}

std::int64_t video_token_count(const VisionEncoderConfig& cfg, std::int64_t frames,
                               std::int64_t h, std::int64_t w) {
    return (frames / cfg.temporal_stride) * image_token_count(cfg, h, w);
}

std::int64_t audio_frame_count(const SpeechEncoderConfig& cfg, std::int64_t samples) {
    return (samples / cfg.stride1) / cfg.stride2;
}

FeatureSequence encode_image(Tape& t, const VisionEncoder& enc, const ImageTensor& img) {
    const auto p = enc.cfg.patch;
    if (img.channels != 3) throw usage_error("encode_image: expected 3 channels");
    if (img.height % p != 0 || img.width % p != 0) {
        throw usage_error("encode_image: H=" + std::to_string(img.height) +
                          " W=" + std::to_string(img.width) + " not divisible by patch P=" +
                          std::to_string(p));
    }
    if (static_cast<std::int64_t>(img.values.size()) != img.height * img.width * img.channels) {
        throw usage_error("encode_image: payload size does not match dimensions");
    }
    const std::int64_t gh = img.height / p, gw = img.width / p;
    const std::int64_t l = gh * gw, d = p * p * img.channels;
    auto patches = make_tensor({l, d});
    std::int64_t row = 0;
    for (std::int64_t py = 0; py < gh; ++py) {
        for (std::int64_t px = 0; px < gw; ++px, ++row) {
            real* dst = patches->data.data() + row * d;
            for (std::int64_t y = 0; y < p; ++y) {
                for (std::int64_t x = 0; x < p; ++x) {
                    for (std::int64_t c = 0; c < img.channels; ++c) {
                        *dst++ = img.values[static_cast<std::size_t>(
                            ((py * p + y) * img.width + (px * p + x)) * img.channels + c)];
                    }
                }
            }
        }
    }
    auto x = add_positions(t, enc.image_tokenizer.forward(t, patches), enc.pos);
    FeatureSequence out;
    out.states = run_stack(t, enc.stack, enc.final_ln, x, nullptr);
    out.tag = Modality::Vision;
    return out;
}

FeatureSequence encode_video(Tape& t, const VisionEncoder& enc, const VideoTensor& vid) {
    const auto p = enc.cfg.patch;
    const auto st = enc.cfg.temporal_stride;
    if (vid.channels != 3) throw usage_error("encode_video: expected 3 channels");
    if (vid.height % p != 0 || vid.width % p != 0) {
        throw usage_error("encode_video: H=" + std::to_string(vid.height) +
                          " W=" + std::to_string(vid.width) + " not divisible by patch P=" +
                          std::to_string(p));
    }
    if (vid.frames % st != 0) {
        throw usage_error("encode_video: T=" + std::to_string(vid.frames) +
                          " not divisible by temporal stride " + std::to_string(st));
    }
    if (static_cast<std::int64_t>(vid.values.size()) !=
        vid.frames * vid.height * vid.width * vid.channels) {
        throw usage_error("encode_video: payload size does not match dimensions");
    }
    const std::int64_t gt = vid.frames / st, gh = vid.height / p, gw = vid.width / p;
    const std::int64_t l = gt * gh * gw, d = st * p * p * vid.channels;
    auto patches = make_tensor({l, d});
    std::int64_t row = 0;
    for (std::int64_t pt = 0; pt < gt; ++pt) {
        for (std::int64_t py = 0; py < gh; ++py) {
            for (std::int64_t px = 0; px < gw; ++px, ++row) {
                real* dst = patches->data.data() + row * d;
                for (std::int64_t f = 0; f < st; ++f) {
                    for (std::int64_t y = 0; y < p; ++y) {
                        for (std::int64_t x = 0; x < p; ++x) {
                            for (std::int64_t c = 0; c < vid.channels; ++c) {
                                *dst++ = vid.values[static_cast<std::size_t>(
                                    (((pt * st + f) * vid.height + py * p + y) * vid.width +
                                     (px * p + x)) *
                                        vid.channels +
                                    c)];
                            }
                        }
                    }
                }
            }
        }
    }
    auto x = add_positions(t, enc.video_tokenizer.forward(t, patches), enc.pos);
    FeatureSequence out;
    out.states = run_stack(t, enc.stack, enc.final_ln, x, nullptr);
    out.tag = Modality::Vision;
    return out;
}

TensorPtr SpeechEncoder::featurize(Tape& t, const AudioTensor& audio) const {
    const auto n = static_cast<std::int64_t>(audio.samples.size());
    const std::int64_t window = cfg.stride1 * cfg.stride2;
    if (n < window) {
        throw usage_error("encode_audio: " + std::to_string(n) +
                          " samples is below the minimum of " + std::to_string(window));
    }
    const std::int64_t l1 = n / cfg.stride1;
    const std::int64_t l2 = l1 / cfg.stride2;
    // non-overlapping windows: frame i of stage one sees samples [i*s1, (i+1)*s1)
    auto windows = make_tensor({l1, cfg.stride1});
    std::copy(audio.samples.begin(), audio.samples.begin() + l1 * cfg.stride1,
              windows->data.begin());
    auto h1 = ops::gelu(t, conv1.forward(t, windows));
    // stage two groups stride2 consecutive frames; row-major reshape is exact
    auto grouped = ops::reshape(t, ops::slice_rows(t, h1, 0, l2 * cfg.stride2),
                                {l2, cfg.stride2 * cfg.c1});
    return ops::gelu(t, conv2.forward(t, grouped));
}

FeatureSequence encode_audio(Tape& t, const SpeechEncoder& enc, const AudioTensor& audio) {
    auto x = add_positions(t, enc.featurize(t, audio), enc.pos);
    FeatureSequence out;
    out.states = run_stack(t, enc.stack, enc.final_ln, x,
                           enc.cfg.use_rel_bias ? &enc.rel_bias : nullptr);
    out.tag = Modality::Speech;
    return out;
}

} // namespace vls
