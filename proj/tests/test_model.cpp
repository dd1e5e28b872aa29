// SPDX-License-Identifier: Apache-2.0
// Runs against the 64-bit build for the gradient checks.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "vls/model.hpp"
#include "vls/rng.hpp"

using namespace vls;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 1) {
    ModelConfig mc;
    mc.d_text = 16;
    mc.joint_layers = 1;
    mc.dec_layers = 1;
    mc.heads = 2;
    mc.ffn_mult = 2;
    mc.max_text_len = 32;
    mc.max_target_len = 16;
    mc.vocab_size = 48;
    mc.seed = seed;
    mc.vision.patch = 2;
    mc.vision.temporal_stride = 2;
    mc.vision.d_mod = 8;
    mc.vision.layers = 1;
    mc.vision.heads = 2;
    mc.vision.ffn_mult = 2;
    mc.vision.max_len = 64;
    mc.speech.stride1 = 2;
    mc.speech.stride2 = 3;
    mc.speech.c1 = 4;
    mc.speech.d_mod = 8;
    mc.speech.layers = 1;
    mc.speech.heads = 2;
    mc.speech.ffn_mult = 2;
    mc.speech.max_len = 64;
    mc.speech.rel_buckets = 16;
    mc.speech.rel_max_distance = 64;
    return mc;
}

ImageTensor random_image(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    ImageTensor img;
    img.height = h;
    img.width = w;
    img.channels = 3;
    img.values.resize(static_cast<std::size_t>(h * w * 3));
    SeededRng rng(seed);
    for (auto& v : img.values) v = static_cast<real>(rng.uniform(0.0, 1.0));
    return img;
}

AudioTensor random_audio(std::int64_t n, std::uint64_t seed) {
    AudioTensor a;
    a.samples.resize(static_cast<std::size_t>(n));
    SeededRng rng(seed);
    for (auto& v : a.samples) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    return a;
}

std::vector<int> random_ids(std::int64_t n, std::int64_t vocab, std::uint64_t seed) {
    std::vector<int> ids;
    SeededRng rng(seed);
    for (std::int64_t i = 0; i < n; ++i) {
        ids.push_back(kNumReserved +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - kNumReserved))));
    }
    return ids;
}

} // namespace

TEST_CASE("memory length arithmetic at the reference sizes") {
    // 32x32 image at patch 8 -> 16 tokens; 1600 samples at stride 160 -> 10;
    // 7 text tokens -> memory length 33
    ModelConfig mc;
    mc.vocab_size = 64;
    mc.joint_layers = 1;
    mc.dec_layers = 1;
    TrimodalModel model(mc);
    MultimodalInput input;
    input.image = random_image(32, 32, 1);
    input.audio = random_audio(1600, 2);
    input.text_ids = random_ids(7, mc.vocab_size, 3);
    Tape t(false);
    auto mem = fuse_and_encode(t, model, input);
    CHECK(mem.len_vision == 16);
    CHECK(mem.len_speech == 10);
    CHECK(mem.len_text == 7);
    CHECK(mem.length() == 33);
    CHECK(mem.states->dim(0) == 33);
}

TEST_CASE("memory length arithmetic for all seven segment combinations") {
    TrimodalModel model(tiny_config());
    Tape t(false);
    const auto img = random_image(4, 4, 5); // 4 tokens
    const auto audio = random_audio(12, 6); // 2 frames
    const auto text = random_ids(3, 48, 7); // 3 tokens
    for (int mask = 1; mask < 8; ++mask) {
        MultimodalInput input;
        std::int64_t expect = 0;
        if (mask & 1) {
            input.image = img;
            expect += 4;
        }
        if (mask & 2) {
            input.audio = audio;
            expect += 2;
        }
        if (mask & 4) {
            input.text_ids = text;
            expect += 3;
        }
        auto mem = fuse_and_encode(t, model, input);
        CHECK(mem.length() == expect);
        CHECK(mem.states->dim(0) == expect);
        CHECK(static_cast<std::int64_t>(mem.valid.size()) == expect);
    }
    MultimodalInput empty;
    CHECK_THROWS_AS(fuse_and_encode(t, model, empty), usage_error);
}

TEST_CASE("text-only input produces exactly the text segment") {
    TrimodalModel model(tiny_config());
    Tape t(false);
    MultimodalInput input;
    input.text_ids = random_ids(5, 48, 11);
    auto mem = fuse_and_encode(t, model, input);
    CHECK(mem.len_vision == 0);
    CHECK(mem.len_speech == 0);
    CHECK(mem.len_text == 5);
}

TEST_CASE("projections are modality-specific") {
    TrimodalModel a(tiny_config(33));
    TrimodalModel b(tiny_config(33));
    // same init; swap b's projection weights between modalities
    std::swap(b.proj_vision.w->value->data, b.proj_speech.w->value->data);
    std::swap(b.proj_vision.b->value->data, b.proj_speech.b->value->data);

    MultimodalInput input;
    input.image = random_image(4, 4, 1);
    input.audio = random_audio(12, 2);
    Tape t(false);
    auto ma = fuse_and_encode(t, a, input);
    auto mb = fuse_and_encode(t, b, input);
    real diff = 0;
    for (std::size_t i = 0; i < ma.states->data.size(); ++i) {
        diff = std::max(diff, std::abs(ma.states->data[i] - mb.states->data[i]));
    }
    CHECK(diff > 1e-8);
}

TEST_CASE("causal mask: future target perturbations leave earlier logits bitwise unchanged") {
    TrimodalModel model(tiny_config(5));
    MultimodalInput input;
    input.image = random_image(4, 4, 9);
    input.text_ids = random_ids(4, 48, 10);
    Tape t(false);
    const auto mem = fuse_and_encode(t, model, input);

    std::vector<int> ids = {kBosId};
    auto tail = random_ids(6, 48, 12);
    ids.insert(ids.end(), tail.begin(), tail.end());
    const auto logits = forward_teacher_forced(t, model, mem, ids);

    for (std::size_t pos = 1; pos < ids.size(); ++pos) {
        auto perturbed = ids;
        perturbed[pos] = perturbed[pos] == kEosId ? kUnkId : perturbed[pos] + 1;
        const auto logits2 = forward_teacher_forced(t, model, mem, perturbed);
        const std::int64_t v = logits->dim(1);
        // rows strictly before the perturbed position are bitwise identical
        CHECK(std::memcmp(logits->data.data(), logits2->data.data(),
                          static_cast<std::size_t>(pos * v) * sizeof(real)) == 0);
        // and the row at the perturbed position changes
        real diff = 0;
        for (std::int64_t j = 0; j < v; ++j) {
            diff = std::max(diff, std::abs(logits->data[pos * v + j] - logits2->data[pos * v + j]));
        }
        CHECK(diff > 0);
    }
}

TEST_CASE("memory perturbation reaches the logits") {
    TrimodalModel model(tiny_config(6));
    MultimodalInput a;
    a.image = random_image(4, 4, 20);
    a.text_ids = random_ids(3, 48, 21);
    auto b = a;
    b.image = random_image(4, 4, 22);
    Tape t(false);
    std::vector<int> ids = {kBosId, kNumReserved + 1, kNumReserved + 2};
    auto la = forward_teacher_forced(t, model, fuse_and_encode(t, model, a), ids);
    auto lb = forward_teacher_forced(t, model, fuse_and_encode(t, model, b), ids);
    real diff = 0;
    for (std::size_t i = 0; i < la->data.size(); ++i) {
        diff = std::max(diff, std::abs(la->data[i] - lb->data[i]));
    }
    CHECK(diff > 1e-10);
}

TEST_CASE("zero-layer decoder reduces to the tied output projection") {
    auto mc = tiny_config(7);
    mc.dec_layers = 0;
    TrimodalModel model(mc);
    MultimodalInput input;
    input.text_ids = random_ids(3, 48, 30);
    Tape t(false);
    const auto mem = fuse_and_encode(t, model, input);
    std::vector<int> ids = {kBosId, kNumReserved + 3};
    const auto logits = forward_teacher_forced(t, model, mem, ids);

    auto emb = ops::embedding(t, model.embed->value, ids);
    auto x = ops::add(t, emb, ops::slice_rows(t, model.pos_target->value, 0, 2));
    auto expect = ops::matmul(t, x, ops::transpose(t, model.embed->value));
    REQUIRE(logits->data.size() == expect->data.size());
    CHECK(std::memcmp(logits->data.data(), expect->data.data(),
                      logits->data.size() * sizeof(real)) == 0);
}

TEST_CASE("teacher forcing validates its input") {
    TrimodalModel model(tiny_config(8));
    MultimodalInput input;
    input.text_ids = random_ids(2, 48, 40);
    Tape t(false);
    const auto mem = fuse_and_encode(t, model, input);
    CHECK_THROWS_AS(forward_teacher_forced(t, model, mem, {}), usage_error);
    CHECK_THROWS_AS(forward_teacher_forced(t, model, mem, {kNumReserved}), usage_error);
}

TEST_CASE("a padded-out segment matches the segment being absent") {
    TrimodalModel model(tiny_config(9));
    const auto img = random_image(4, 4, 50);
    const auto text = random_ids(4, 48, 51);

    MultimodalInput without;
    without.image = img;
    without.text_ids = text;

    MultimodalInput padded = without;
    padded.audio = random_audio(12, 52);
    padded.speech_valid.assign(2, 0); // both speech frames masked out

    Tape t(false);
    std::vector<int> ids = {kBosId, kNumReserved + 5, kNumReserved + 6};
    std::vector<int> labels = {kNumReserved + 5, kNumReserved + 6, kEosId};

    const auto mem_a = fuse_and_encode(t, model, without);
    const auto mem_b = fuse_and_encode(t, model, padded);
    CHECK(mem_b.length() == mem_a.length() + 2);

    const auto la = forward_teacher_forced(t, model, mem_a, ids);
    const auto lb = forward_teacher_forced(t, model, mem_b, ids);
    const auto ca = ops::cross_entropy_with_logits(t, la, labels, kPadId);
    const auto cb = ops::cross_entropy_with_logits(t, lb, labels, kPadId);
    CHECK(std::abs(ca->data[0] - cb->data[0]) < 1e-5);
    real diff = 0;
    for (std::size_t i = 0; i < la->data.size(); ++i) {
        diff = std::max(diff, std::abs(la->data[i] - lb->data[i]));
    }
    CHECK(diff < 1e-9);
}

TEST_CASE("PAD inside the text segment requires a validity mask") {
    TrimodalModel model(tiny_config(10));
    MultimodalInput input;
    input.text_ids = {kNumReserved, kPadId};
    Tape t(false);
    CHECK_THROWS_AS(fuse_and_encode(t, model, input), usage_error);
    input.text_valid = {1, 0};
    CHECK(fuse_and_encode(t, model, input).len_text == 2);
}

TEST_CASE("full trimodal forward/backward passes the finite-difference oracle") {
    GradCheckOptions opts;
    opts.step = 1e-5;
    opts.max_elements_per_param = 8;

    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        TrimodalModel model(tiny_config(300 + seed));
        MultimodalInput in1;
        in1.image = random_image(4, 4, seed * 3 + 1);
        in1.text_ids = random_ids(3, 48, seed * 3 + 2);
        MultimodalInput in2;
        in2.audio = random_audio(12, seed * 3 + 3);
        in2.text_ids = random_ids(2, 48, seed * 3 + 4);
        const std::vector<int> dec1 = {kBosId, kNumReserved + 1, kNumReserved + 2};
        const std::vector<int> lab1 = {kNumReserved + 1, kNumReserved + 2, kEosId};
        const std::vector<int> dec2 = {kBosId, kNumReserved + 4};
        const std::vector<int> lab2 = {kNumReserved + 4, kEosId};

        auto f = [&](Tape& t) {
            auto l1 = ops::cross_entropy_with_logits(
                t, forward_teacher_forced(t, model, fuse_and_encode(t, model, in1), dec1), lab1,
                kPadId);
            auto l2 = ops::cross_entropy_with_logits(
                t, forward_teacher_forced(t, model, fuse_and_encode(t, model, in2), dec2), lab2,
                kPadId);
            return ops::add(t, ops::scale(t, l1, real(0.6)), ops::scale(t, l2, real(0.4)));
        };
        opts.select_seed = seed;
        CHECK(finite_diff_check(f, model.params.in_order(), opts) < 1e-4);
    }
}

TEST_CASE("greedy generation is deterministic and capped") {
    TrimodalModel model(tiny_config(11));
    MultimodalInput input;
    input.image = random_image(4, 4, 60);
    input.text_ids = random_ids(3, 48, 61);
    GenerationConfig gc;
    gc.max_len = 8;
    const auto a = generate(model, input, gc);
    const auto b = generate(model, input, gc);
    CHECK(a == b);
    CHECK(a.size() <= 8);
}

TEST_CASE("forced one-hot pattern generates one token then stops") {
    auto mc = tiny_config(12);
    mc.dec_layers = 0;
    mc.joint_layers = 0;
    mc.vocab_size = 48;
    mc.d_text = 48; // square embedding so rows can act like unit vectors
    TrimodalModel model(mc);
    std::fill(model.pos_target->value->data.begin(), model.pos_target->value->data.end(), real(0));
    auto& table = model.embed->value->data;
    std::fill(table.begin(), table.end(), real(0));
    const int a = kNumReserved + 7;
    // with tied embeddings the logit for token j is row_j . row_current, so:
    // row_bos = e1, row_a = 2 e1 + e2, row_eos = 10 e2. After BOS the scores
    // are a:2 > bos:1 > eos:0; after 'a' they are eos:10 > a:5 > bos:2.
    table[static_cast<std::size_t>(kBosId * 48 + 0)] = 1;
    table[static_cast<std::size_t>(a * 48 + 0)] = 2;
    table[static_cast<std::size_t>(a * 48 + 1)] = 1;
    table[static_cast<std::size_t>(kEosId * 48 + 1)] = 10;

    MultimodalInput input;
    input.text_ids = {a};
    GenerationConfig gc;
    gc.max_len = 10;
    const auto out = generate(model, input, gc);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == a);
}

TEST_CASE("all-equal logits break ties toward the lowest token id") {
    auto mc = tiny_config(13);
    mc.dec_layers = 0;
    mc.joint_layers = 0;
    TrimodalModel model(mc);
    std::fill(model.embed->value->data.begin(), model.embed->value->data.end(), real(0));
    std::fill(model.pos_target->value->data.begin(), model.pos_target->value->data.end(), real(0));
    MultimodalInput input;
    input.text_ids = {kNumReserved};
    GenerationConfig gc;
    gc.max_len = 3;
    const auto out = generate(model, input, gc);
    // every step scores all tokens equally; the lowest id (PAD) wins and EOS
    // never fires, so generation runs to max_len
    CHECK(out == std::vector<int>({kPadId, kPadId, kPadId}));
}

TEST_CASE("greedy selection is invariant to a constant logit shift") {
    TrimodalModel model(tiny_config(17));
    MultimodalInput input;
    input.text_ids = random_ids(3, 48, 95);
    Tape t(false);
    const auto mem = fuse_and_encode(t, model, input);
    const auto logits = forward_teacher_forced(t, model, mem, {kBosId});
    const std::int64_t v = logits->dim(1);
    const real* row = logits->data.data();
    auto argmax = [&](real shift) {
        int best = 0;
        for (std::int64_t j = 1; j < v; ++j) {
            if (row[j] + shift > row[best] + shift) best = static_cast<int>(j);
        }
        return best;
    };
    const int base = argmax(0);
    CHECK(argmax(real(17.5)) == base);
    CHECK(argmax(real(-3.25)) == base);
    // and greedy's first emission is exactly that argmax
    GenerationConfig gc;
    gc.max_len = 1;
    const auto out = generate(model, input, gc);
    if (base == kEosId) {
        CHECK(out.empty());
    } else {
        REQUIRE(out.size() == 1);
        CHECK(out[0] == base);
    }
}

TEST_CASE("beam width 1 equals greedy on 20 random models") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        TrimodalModel model(tiny_config(1000 + seed));
        MultimodalInput input;
        input.text_ids = random_ids(3, 48, 70 + seed);
        GenerationConfig greedy;
        greedy.max_len = 6;
        GenerationConfig beam;
        beam.mode = GenerationConfig::Mode::Beam;
        beam.beam_width = 1;
        beam.max_len = 6;
        CHECK(generate(model, input, greedy) == generate(model, input, beam));
    }
}

TEST_CASE("beam search accepts widths above one") {
    TrimodalModel model(tiny_config(14));
    MultimodalInput input;
    input.text_ids = random_ids(4, 48, 80);
    GenerationConfig beam;
    beam.mode = GenerationConfig::Mode::Beam;
    beam.beam_width = 3;
    beam.max_len = 5;
    const auto a = generate(model, input, beam);
    const auto b = generate(model, input, beam);
    CHECK(a == b);
    CHECK(a.size() <= 5);
}

TEST_CASE("count_parameters matches the hand ledger") {
    // single linear layer: D^2 + D
    {
        ParamStore store(1);
        Linear::create(store, "lin", 16, 16);
        CHECK(store.count(false) == 16 * 16 + 16);
    }

    const auto mc = tiny_config(15);
    TrimodalModel model(mc);

    const std::int64_t d = mc.d_text;   // 16
    const std::int64_t dm = 8;          // modality width
    auto linear = [](std::int64_t in, std::int64_t out) { return in * out + out; };
    auto ln = [](std::int64_t width) { return 2 * width; };
    // q, v, o carry biases; the key projection is bias-free
    auto mha = [&](std::int64_t width) { return 3 * linear(width, width) + width * width; };
    auto ffn = [&](std::int64_t width, std::int64_t mult) {
        return linear(width, width * mult) + linear(width * mult, width);
    };
    auto enc_layer = [&](std::int64_t width, std::int64_t mult) {
        return 2 * ln(width) + mha(width) + ffn(width, mult);
    };
    auto dec_layer = [&](std::int64_t width, std::int64_t mult) {
        return 3 * ln(width) + 2 * mha(width) + ffn(width, mult);
    };

    std::int64_t expect = 0;
    // vision encoder: 2d/3d tokenizers, positions, one layer, output norm
    expect += linear(2 * 2 * 3, dm) + linear(2 * 2 * 2 * 3, dm);
    expect += 64 * dm;
    expect += enc_layer(dm, 2) + ln(dm);
    // speech encoder: two convs, positions, one layer + gated bias, output norm
    expect += linear(2, 4) + linear(3 * 4, dm);
    expect += 64 * dm;
    expect += enc_layer(dm, 2) + (2 * 16 /*table*/ + 2 /*gate*/) + ln(dm);
    // fusion: projections, tied embedding, segments, positions, joint layer, norm
    expect += 2 * linear(dm, d);
    expect += 48 * d;
    expect += 3 * d;
    expect += 64 * d + 64 * d + 32 * d; // pos_vision, pos_speech, pos_text
    expect += enc_layer(d, 2) + ln(d);
    // decoder: positions, one layer, output norm (output projection is tied)
    expect += 16 * d;
    expect += dec_layer(d, 2) + ln(d);

    CHECK(count_parameters(model, false) == expect);
    CHECK(count_parameters(model, true) == expect);

    // freezing both encoders removes exactly their parameter sums
    std::int64_t encoder_sum = 0;
    for (const auto* p : model.params.in_order()) {
        if (p->name.rfind("vision.", 0) == 0 || p->name.rfind("speech.", 0) == 0) {
            encoder_sum += p->numel();
        }
    }
    model.params.set_frozen_prefix("vision.", true);
    model.params.set_frozen_prefix("speech.", true);
    CHECK(count_parameters(model, true) == expect - encoder_sum);
    CHECK(count_parameters(model, false) == expect);
    model.params.set_frozen_prefix("vision.", false);
    model.params.set_frozen_prefix("speech.", false);
    CHECK(count_parameters(model, true) == expect);
}

TEST_CASE("example_loss frames targets with BOS/EOS and counts positions") {
    TrimodalModel model(tiny_config(16));
    auto vocab = Vocab::build({"red dog ran"}, 100);
    // rebuild the model so ids match the vocab size
    auto mc = tiny_config(16);
    mc.vocab_size = static_cast<std::int64_t>(vocab.size());
    TrimodalModel m2(mc);

    TrainingExample ex;
    ex.task = TaskKind::ImageCaptioning;
    ex.image = random_image(4, 4, 90);
    ex.prompt_text = prompt_for(TaskKind::ImageCaptioning);
    ex.target_text = "red dog";

    Tape t(false);
    auto el = example_loss(t, m2, ex, vocab);
    CHECK(el.positions == 3); // red, dog, EOS
    CHECK(std::isfinite(static_cast<double>(el.loss->data[0])));

    // ablating the only modality leaves the prompt-only text segment
    auto input = input_from_example(ex, vocab, /*ablate_vision=*/true, false);
    CHECK(!input.image.has_value());
    CHECK(!input.text_ids.empty());
}
