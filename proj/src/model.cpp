// SPDX-License-Identifier: Apache-2.0
#include "vls/model.hpp"

#include <algorithm>
#include <cmath>

namespace vls {

TrimodalModel::TrimodalModel(const ModelConfig& config)
    : cfg(config), params(config.seed) {
    if (cfg.vocab_size <= 0) throw usage_error("model: vocab_size must be set");
    vision = VisionEncoder::create(params, "vision", cfg.vision);
    speech = SpeechEncoder::create(params, "speech", cfg.speech);
    proj_vision = Linear::create(params, "fusion.proj_vision", cfg.vision.d_mod, cfg.d_text);
    proj_speech = Linear::create(params, "fusion.proj_speech", cfg.speech.d_mod, cfg.d_text);
    const double emb_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_text));
    embed = params.create("fusion.embed", {cfg.vocab_size, cfg.d_text}, Init::uniform(emb_bound));
    seg_embed = params.create("fusion.seg", {3, cfg.d_text}, Init::uniform(emb_bound));
    pos_vision = params.create("fusion.pos_vision", {cfg.vision.max_len, cfg.d_text},
                               Init::uniform(emb_bound));
    pos_speech = params.create("fusion.pos_speech", {cfg.speech.max_len, cfg.d_text},
                               Init::uniform(emb_bound));
    pos_text = params.create("fusion.pos_text", {cfg.max_text_len, cfg.d_text},
                             Init::uniform(emb_bound));
    pos_target = params.create("decoder.pos", {cfg.max_target_len, cfg.d_text},
                               Init::uniform(emb_bound));
    for (int i = 0; i < cfg.joint_layers; ++i) {
        joint.push_back(EncoderLayer::create(params, "fusion.l" + std::to_string(i), cfg.d_text,
                                             cfg.heads, cfg.d_text * cfg.ffn_mult));
    }
    joint_ln = LayerNorm::create(params, "fusion.ln_out", cfg.d_text);
    for (int i = 0; i < cfg.dec_layers; ++i) {
        decoder.push_back(DecoderLayer::create(params, "decoder.l" + std::to_string(i), cfg.d_text,
                                               cfg.heads, cfg.d_text * cfg.ffn_mult));
    }
    if (cfg.dec_layers > 0) decoder_ln = LayerNorm::create(params, "decoder.ln_out", cfg.d_text);
}

namespace {

TensorPtr segment_vector(Tape& t, Parameter* seg_embed, int idx, std::int64_t d) {
    return ops::reshape(t, ops::slice_rows(t, seg_embed->value, idx, idx + 1), {d});
}

TensorPtr with_positions_and_segment(Tape& t, const TrimodalModel& model, const TensorPtr& x,
                                     Parameter* pos, int seg_idx) {
    const std::int64_t l = x->dim(0);
    if (l > pos->value->dim(0)) {
        throw usage_error("fuse_and_encode: segment length " + std::to_string(l) +
                          " exceeds positional table " + std::to_string(pos->value->dim(0)));
    }
    auto y = ops::add(t, x, ops::slice_rows(t, pos->value, 0, l));
    return ops::add_bias(t, y, segment_vector(t, model.seg_embed, seg_idx, model.cfg.d_text));
}

std::vector<std::uint8_t> segment_validity(const std::vector<std::uint8_t>& override_mask,
                                           std::int64_t l, const char* segment) {
    if (override_mask.empty()) return std::vector<std::uint8_t>(static_cast<std::size_t>(l), 1);
    if (static_cast<std::int64_t>(override_mask.size()) != l) {
        throw usage_error(std::string("fuse_and_encode: ") + segment + " mask length " +
                          std::to_string(override_mask.size()) + " does not match segment length " +
                          std::to_string(l));
    }
    return override_mask;
}

} // namespace

FusedMemory fuse_and_encode(Tape& t, const TrimodalModel& model, const MultimodalInput& input) {
    if (input.image.has_value() && input.video.has_value()) {
        throw usage_error("fuse_and_encode: at most one of image/video may be present");
    }
    std::vector<TensorPtr> segments;
    std::vector<std::uint8_t> valid;
    FusedMemory mem;

    if (input.image.has_value() || input.video.has_value()) {
        FeatureSequence feat = input.image.has_value()
                                   ? encode_image(t, model.vision, *input.image)
                                   : encode_video(t, model.vision, *input.video);
        auto projected = model.proj_vision.forward(t, feat.states);
        auto x = with_positions_and_segment(t, model, projected, model.pos_vision, 0);
        mem.len_vision = x->dim(0);
        segments.push_back(x);
        const auto v = segment_validity(input.vision_valid, mem.len_vision, "vision");
        valid.insert(valid.end(), v.begin(), v.end());
    }
    if (input.audio.has_value()) {
        FeatureSequence feat = encode_audio(t, model.speech, *input.audio);
        auto projected = model.proj_speech.forward(t, feat.states);
        auto x = with_positions_and_segment(t, model, projected, model.pos_speech, 1);
        mem.len_speech = x->dim(0);
        segments.push_back(x);
        const auto v = segment_validity(input.speech_valid, mem.len_speech, "speech");
        valid.insert(valid.end(), v.begin(), v.end());
    }
    if (!input.text_ids.empty()) {
        for (int id : input.text_ids) {
            if (id == kPadId && input.text_valid.empty()) {
                throw usage_error("fuse_and_encode: PAD inside text without a validity mask");
            }
        }
        auto emb = ops::embedding(t, model.embed->value, input.text_ids);
        auto x = with_positions_and_segment(t, model, emb, model.pos_text, 2);
        mem.len_text = x->dim(0);
        segments.push_back(x);
        const auto v = segment_validity(input.text_valid, mem.len_text, "text");
        valid.insert(valid.end(), v.begin(), v.end());
    }
    if (segments.empty()) throw usage_error("fuse_and_encode: no segment present");

    auto x = segments.size() == 1 ? segments[0] : ops::concat_rows(t, segments);
    const std::int64_t l = x->dim(0);
    const auto attn_mask = broadcast_key_mask(l, valid);
    for (const auto& layer : model.joint) {
        x = layer.forward(t, x, attn_mask);
    }
    mem.states = model.joint_ln.forward(t, x);
    mem.valid = valid;
    return mem;
}

TensorPtr forward_teacher_forced(Tape& t, const TrimodalModel& model, const FusedMemory& memory,
                                 const std::vector<int>& decoder_input_ids) {
    if (decoder_input_ids.empty()) {
        throw usage_error("forward_teacher_forced: empty target");
    }
    if (decoder_input_ids[0] != kBosId) {
        throw usage_error("forward_teacher_forced: decoder input must start with BOS");
    }
    const auto l = static_cast<std::int64_t>(decoder_input_ids.size());
    if (l > model.cfg.max_target_len) {
        throw usage_error("forward_teacher_forced: target length " + std::to_string(l) +
                          " exceeds max_target_len " + std::to_string(model.cfg.max_target_len));
    }
    auto x = ops::embedding(t, model.embed->value, decoder_input_ids);
    x = ops::add(t, x, ops::slice_rows(t, model.pos_target->value, 0, l));
    const auto self_valid = causal_mask(l);
    const auto mem_valid = broadcast_key_mask(l, memory.valid);
    for (const auto& layer : model.decoder) {
        x = layer.forward(t, x, self_valid, memory.states, mem_valid);
    }
    if (!model.decoder.empty()) x = model.decoder_ln.forward(t, x);
    return ops::matmul(t, x, ops::transpose(t, model.embed->value));
}

std::int64_t count_parameters(const TrimodalModel& model, bool trainable_only) {
    return model.params.count(trainable_only);
}

MultimodalInput input_from_example(const TrainingExample& ex, const Vocab& vocab,
                                   bool ablate_vision, bool ablate_speech) {
    MultimodalInput input;
    if (!ablate_vision) {
        input.image = ex.image;
        input.video = ex.video;
    }
    if (!ablate_speech) input.audio = ex.audio;
    input.text_ids = vocab.encode(ex.prompt_text + ex.input_text);
    return input;
}

ExampleLoss example_loss(Tape& t, const TrimodalModel& model, const TrainingExample& ex,
                         const Vocab& vocab, bool ablate_vision, bool ablate_speech) {
    const auto input = input_from_example(ex, vocab, ablate_vision, ablate_speech);
    const auto target = vocab.encode(ex.target_text);
    if (target.empty()) throw usage_error("example_loss: empty target text");

    std::vector<int> decoder_input;
    decoder_input.reserve(target.size() + 1);
    decoder_input.push_back(kBosId);
    decoder_input.insert(decoder_input.end(), target.begin(), target.end());
    std::vector<int> labels(target.begin(), target.end());
    labels.push_back(kEosId);

    const auto memory = fuse_and_encode(t, model, input);
    const auto logits = forward_teacher_forced(t, model, memory, decoder_input);
    ExampleLoss out;
    out.loss = ops::cross_entropy_with_logits(t, logits, labels, kPadId);
    out.positions = static_cast<std::int64_t>(labels.size());
    return out;
}

namespace {

std::vector<double> log_softmax_row(const TensorPtr& logits, std::int64_t row) {
    const std::int64_t v = logits->dim(1);
    const real* x = logits->data.data() + row * v;
    double mx = static_cast<double>(x[0]);
    for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(x[j]));
    double sum = 0;
    for (std::int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(x[j]) - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(static_cast<std::size_t>(v));
    for (std::int64_t j = 0; j < v; ++j) {
        out[static_cast<std::size_t>(j)] = static_cast<double>(x[j]) - lse;
    }
    return out;
}

struct Hypothesis {
    std::vector<int> ids; // BOS-prefixed
    double logp = 0.0;
    bool finished = false;

    std::int64_t emitted() const {
        return static_cast<std::int64_t>(ids.size()) - 1;
    }
    double score(double length_penalty) const {
        const double len = std::max<double>(1.0, static_cast<double>(emitted()));
        return logp / std::pow(len, length_penalty);
    }
};

std::vector<int> strip_framing(const std::vector<int>& ids) {
    std::vector<int> out;
    for (std::size_t i = 1; i < ids.size(); ++i) { // skip BOS
        if (ids[i] == kEosId) break;
        out.push_back(ids[i]);
    }
    return out;
}

} // namespace

std::vector<int> generate(const TrimodalModel& model, const MultimodalInput& input,
                          const GenerationConfig& cfg) {
    if (cfg.max_len < 1) throw usage_error("generate: max_len must be >= 1");
    if (cfg.mode == GenerationConfig::Mode::Beam && cfg.beam_width < 1) {
        throw usage_error("generate: beam width must be >= 1");
    }
    Tape t(false);
    const auto memory = fuse_and_encode(t, model, input);

    if (cfg.mode == GenerationConfig::Mode::Greedy) {
        std::vector<int> ids = {kBosId};
        for (std::int64_t step = 0; step < cfg.max_len; ++step) {
            if (static_cast<std::int64_t>(ids.size()) >= model.cfg.max_target_len) break;
            const auto logits = forward_teacher_forced(t, model, memory, ids);
            const std::int64_t v = logits->dim(1);
            const real* last = logits->data.data() + (logits->dim(0) - 1) * v;
            int best = 0;
            for (std::int64_t j = 1; j < v; ++j) {
                if (last[j] > last[best]) best = static_cast<int>(j); // ties keep lowest id
            }
            ids.push_back(best);
            if (best == kEosId) break;
        }
        return strip_framing(ids);
    }

    // beam search with length-penalized scores
    std::vector<Hypothesis> beams = {Hypothesis{{kBosId}, 0.0, false}};
    for (std::int64_t step = 0; step < cfg.max_len; ++step) {
        bool any_active = false;
        for (const auto& b : beams) any_active = any_active || !b.finished;
        if (!any_active) break;

        struct Cand {
            Hypothesis hyp;
            int token; // -1 for carried finished beams
            std::size_t parent;
        };
        std::vector<Cand> cands;
        for (std::size_t bi = 0; bi < beams.size(); ++bi) {
            const auto& b = beams[bi];
            if (b.finished) {
                cands.push_back({b, -1, bi});
                continue;
            }
            if (static_cast<std::int64_t>(b.ids.size()) >= model.cfg.max_target_len) {
                Hypothesis done = b;
                done.finished = true;
                cands.push_back({done, -1, bi});
                continue;
            }
            const auto logits = forward_teacher_forced(t, model, memory, b.ids);
            const auto logp = log_softmax_row(logits, logits->dim(0) - 1);
            for (std::size_t v = 0; v < logp.size(); ++v) {
                Hypothesis next = b;
                next.ids.push_back(static_cast<int>(v));
                next.logp += logp[v];
                next.finished = static_cast<int>(v) == kEosId;
                cands.push_back({std::move(next), static_cast<int>(v), bi});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
            const double sa = a.hyp.score(cfg.length_penalty);
            const double sb = b.hyp.score(cfg.length_penalty);
            if (sa != sb) return sa > sb;
            if (a.token != b.token) return a.token < b.token;
            return a.parent < b.parent;
        });
        beams.clear();
        for (std::size_t i = 0; i < cands.size() && static_cast<int>(beams.size()) < cfg.beam_width;
             ++i) {
            beams.push_back(std::move(cands[i].hyp));
        }
    }
    const Hypothesis* best = nullptr;
    for (const auto& b : beams) {
        if (!best || b.score(cfg.length_penalty) > best->score(cfg.length_penalty)) best = &b;
    }
    return best ? strip_framing(best->ids) : std::vector<int>{};
}

} // namespace vls
