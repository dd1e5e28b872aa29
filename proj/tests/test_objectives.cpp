// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "vls/objectives.hpp"
#include "vls/rng.hpp"
#include "vls/tokenizer.hpp"

using namespace vls;

namespace {

Vocab word_vocab() {
    return Vocab::build({"the quick brown fox jumps over lazy dog a b c d e f g h"}, 200);
}

ImageTensor dummy_image() {
    ImageTensor img;
    img.height = 8;
    img.width = 8;
    img.channels = 3;
    img.values.assign(static_cast<std::size_t>(8 * 8 * 3), real(0.5));
    return img;
}

VideoTensor dummy_video() {
    VideoTensor vid;
    vid.frames = 2;
    vid.height = 8;
    vid.width = 8;
    vid.channels = 3;
    vid.values.assign(static_cast<std::size_t>(2 * 8 * 8 * 3), real(0.5));
    return vid;
}

AudioTensor dummy_audio() {
    AudioTensor a;
    a.samples.assign(320, real(0.1));
    return a;
}

} // namespace

TEST_CASE("zero mask rate leaves input unchanged with a terminal-only target") {
    auto v = word_vocab();
    const auto tokens = v.encode("the quick brown fox");
    SpanMaskSpec spec;
    spec.mask_rate = 0.0;
    spec.seed = 3;
    const auto res = corrupt_spans(tokens, spec);
    CHECK(res.masked_input == tokens);
    REQUIRE(res.target.size() == 1);
    CHECK(res.target[0] == sentinel_id(0));
}

TEST_CASE("hand-placed span corruption matches the sentinel convention") {
    auto v = word_vocab();
    const auto tokens = v.encode("the quick brown fox jumps");
    const auto res = corrupt_spans_at(tokens, {{1, 2}});
    CHECK(v.decode(res.masked_input) == "the <extra_0> fox jumps");
    CHECK(v.decode(res.target) == "<extra_0> quick brown <extra_1>");
    CHECK(reconstruct(res.masked_input, res.target) == tokens);
}

TEST_CASE("span placement is validated") {
    auto v = word_vocab();
    const auto tokens = v.encode("a b c d e f g h");
    CHECK_THROWS_AS(corrupt_spans_at(tokens, {{0, 2}, {2, 1}}), usage_error); // no gap
    CHECK_THROWS_AS(corrupt_spans_at(tokens, {{0, 20}}), usage_error);        // out of range
    CHECK_THROWS_AS(corrupt_spans_at({}, {}), usage_error);                   // empty input
}

TEST_CASE("span budget beyond the sentinel count raises corruption_error") {
    auto v = word_vocab();
    std::vector<int> tokens(400, v.id_of("a"));
    SpanMaskSpec spec;
    spec.mask_rate = 0.9;
    spec.mean_span_len = 1.0;
    spec.seed = 1;
    CHECK_THROWS_AS(corrupt_spans(tokens, spec), corruption_error);
}

TEST_CASE("reconstruct is the identity without sentinels") {
    auto v = word_vocab();
    const auto tokens = v.encode("the lazy dog");
    CHECK(reconstruct(tokens, {sentinel_id(0)}) == tokens);
}

TEST_CASE("reconstruct rejects shuffled sentinel order") {
    auto v = word_vocab();
    const auto tokens = v.encode("the quick brown fox jumps over lazy dog");
    const auto res = corrupt_spans_at(tokens, {{1, 2}, {5, 1}});
    // swap the two sentinel markers in the target
    auto shuffled = res.target;
    for (auto& id : shuffled) {
        if (id == sentinel_id(0)) {
            id = sentinel_id(1);
        } else if (id == sentinel_id(1)) {
            id = sentinel_id(0);
        }
    }
    CHECK_THROWS_AS(reconstruct(res.masked_input, shuffled), reconstruction_error);
}

TEST_CASE("corruption round trips over 1000 random sentences") {
    auto v = word_vocab();
    const std::vector<std::string> words = {"the", "quick", "brown", "fox",  "jumps", "over",
                                            "lazy", "dog",   "a",     "b",   "c",     "d"};
    SeededRng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<int> tokens;
        const auto len = 1 + rng.below(60);
        for (std::uint64_t i = 0; i < len; ++i) {
            tokens.push_back(v.id_of(words[rng.below(words.size())]));
        }
        SpanMaskSpec spec;
        spec.mask_rate = rng.uniform(0.0, 0.4);
        spec.mean_span_len = rng.uniform(1.0, 4.0);
        spec.seed = rng.bits();
        const auto res = corrupt_spans(tokens, spec);
        CHECK(reconstruct(res.masked_input, res.target) == tokens);
    }
}

TEST_CASE("corruption is deterministic in the seed") {
    auto v = word_vocab();
    std::vector<int> tokens(50, v.id_of("fox"));
    SpanMaskSpec spec;
    spec.seed = 77;
    const auto a = corrupt_spans(tokens, spec);
    const auto b = corrupt_spans(tokens, spec);
    CHECK(a.masked_input == b.masked_input);
    CHECK(a.target == b.target);
}

TEST_CASE("empirical mask fraction tracks the configured rate on 100k tokens") {
    auto v = word_vocab();
    SeededRng rng(512);
    const double rate = 0.15;
    std::int64_t total = 0, masked = 0;
    std::uint64_t sentence = 0;
    while (total < 100000) {
        std::vector<int> tokens;
        const auto len = 30 + rng.below(40);
        for (std::uint64_t i = 0; i < len; ++i) tokens.push_back(v.id_of("a"));
        SpanMaskSpec spec;
        spec.mask_rate = rate;
        spec.mean_span_len = 3.0;
        spec.seed = 1000003 * (++sentence);
        const auto res = corrupt_spans(tokens, spec);
        std::int64_t kept = 0;
        for (int id : res.masked_input) kept += is_sentinel(id) ? 0 : 1;
        masked += static_cast<std::int64_t>(tokens.size()) - kept;
        total += static_cast<std::int64_t>(tokens.size());
    }
    const double fraction = static_cast<double>(masked) / static_cast<double>(total);
    CHECK(fraction > rate * 0.8);
    CHECK(fraction < rate * 1.2);
}

TEST_CASE("build_example resolves labels") {
    auto v = word_vocab();
    RawRecord rec;
    rec.task = "SpeechEmotion";
    rec.audio = dummy_audio();
    rec.label = "2";
    auto ex = build_example(rec, TaskKind::SpeechEmotion, v);
    CHECK(ex.target_text == "anger");
    CHECK(ex.prompt_text == "Predict the emotion of this segment: ");

    rec.label = "happiness";
    CHECK(build_example(rec, TaskKind::SpeechEmotion, v).target_text == "happiness");

    rec.label = "joyful";
    CHECK_THROWS_AS(build_example(rec, TaskKind::SpeechEmotion, v), schema_error);

    rec.label = "0";
    CHECK(build_example(rec, TaskKind::SpeechSentiment, v).target_text == "highly negative");
    rec.label = "4";
    CHECK(build_example(rec, TaskKind::SpeechSentiment, v).target_text == "highly positive");
}

TEST_CASE("build_example for captioning") {
    auto v = word_vocab();
    RawRecord rec;
    rec.task = "ImageCaptioning";
    rec.image = dummy_image();
    rec.text_target = "the quick fox";
    auto ex = build_example(rec, TaskKind::ImageCaptioning, v);
    CHECK(ex.prompt_text == "Generate the caption for this image: ");
    CHECK(ex.input_text.empty());
    CHECK(ex.target_text == "the quick fox");
    CHECK(ex.image.has_value());

    RawRecord missing;
    missing.task = "ImageCaptioning";
    missing.text_target = "the quick fox";
    try {
        build_example(missing, TaskKind::ImageCaptioning, v);
        FAIL("expected schema_error");
    } catch (const schema_error& e) {
        CHECK(std::string(e.what()).find("image") != std::string::npos);
    }
}

TEST_CASE("build_example for question answering and dialogue") {
    auto v = word_vocab();
    RawRecord rec;
    rec.task = "VisionQA";
    rec.image = dummy_image();
    rec.text_input = "the quick";
    rec.text_target = "fox";
    auto ex = build_example(rec, TaskKind::VisionQA, v);
    CHECK(ex.input_text == "the quick");
    CHECK(ex.target_text == "fox");

    RawRecord dlg;
    dlg.task = "DialogueGeneration";
    dlg.image = dummy_image();
    dlg.text_input = "the dog jumps";
    dlg.text_target = "over";
    dlg.style = "witty";
    auto dex = build_example(dlg, TaskKind::DialogueGeneration, v);
    CHECK(dex.prompt_text == "Generate the response for the dialogue in witty style: ");
    dlg.style.reset();
    CHECK_THROWS_AS(build_example(dlg, TaskKind::DialogueGeneration, v), schema_error);
}

TEST_CASE("build_example reconstruction tasks round trip") {
    auto v = word_vocab();
    RawRecord rec;
    rec.task = "VisionTextReconstruction";
    rec.image = dummy_image();
    rec.text_target = "the quick brown fox jumps over lazy dog";
    SpanMaskSpec spec;
    spec.mask_rate = 0.3;
    spec.seed = 5;
    auto ex = build_example(rec, TaskKind::VisionTextReconstruction, v, spec);
    CHECK(ex.image.has_value());
    CHECK(!ex.target_text.empty());
    const auto rebuilt = reconstruct(v.encode(ex.input_text), v.encode(ex.target_text));
    CHECK(v.decode(rebuilt) == rec.text_target);
}

TEST_CASE("build_example enforces the image/video exclusivity invariant") {
    auto v = word_vocab();
    RawRecord rec;
    rec.task = "ImageCaptioning";
    rec.image = dummy_image();
    rec.video = dummy_video();
    rec.text_target = "fox";
    CHECK_THROWS_AS(build_example(rec, TaskKind::ImageCaptioning, v), schema_error);
}

TEST_CASE("build_example for clip sentiment") {
    auto v = word_vocab();
    RawRecord rec;
    rec.task = "ClipSentiment";
    rec.video = dummy_video();
    rec.audio = dummy_audio();
    rec.label = "funny";
    auto ex = build_example(rec, TaskKind::ClipSentiment, v);
    CHECK(ex.target_text == "funny");
    CHECK(ex.prompt_text == "Predict the sentiment of this clip: ");
}

TEST_CASE("random records never violate example invariants") {
    auto v = word_vocab();
    SeededRng rng(31337);
    const std::vector<std::string> words = {"the", "fox", "dog", "a", "b"};
    for (int trial = 0; trial < 300; ++trial) {
        const TaskKind task = kAllTasks[rng.below(std::size(kAllTasks))];
        RawRecord rec;
        rec.task = task_name(task);
        std::string text;
        const auto len = 1 + rng.below(8);
        for (std::uint64_t i = 0; i < len; ++i) {
            if (i) text += ' ';
            text += words[rng.below(words.size())];
        }
        rec.text_target = text;
        rec.text_input = "the dog";
        rec.style = "witty";
        rec.label = std::to_string(rng.below(2));
        switch (task) {
        case TaskKind::VideoCaptioning:
        case TaskKind::ClipSentiment:
            rec.video = dummy_video();
            rec.audio = dummy_audio();
            break;
        case TaskKind::SpeechTranscription:
        case TaskKind::SpeechSentiment:
        case TaskKind::SpeechEmotion:
        case TaskKind::SpeechTextReconstruction:
            rec.audio = dummy_audio();
            break;
        case TaskKind::LanguageReconstruction:
            break;
        default:
            rec.image = dummy_image();
            break;
        }
        SpanMaskSpec spec;
        spec.seed = rng.bits();
        auto ex = build_example(rec, task, v, spec);
        CHECK(!(ex.image.has_value() && ex.video.has_value()));
        CHECK(!ex.target_text.empty());
        if (task == TaskKind::DialogueGeneration) {
            CHECK(ex.prompt_text == prompt_for(task, "witty"));
        } else {
            CHECK(ex.prompt_text == prompt_for(task));
        }
    }
}

TEST_CASE("label_of_generation maps generations onto labels") {
    const std::vector<std::string> labels = {"funny", "unfunny"};
    CHECK(label_of_generation("funny", labels) == "funny");
    CHECK(label_of_generation("unfunny", labels) == "unfunny");
    CHECK(label_of_generation("very funny", labels) == "funny");
    CHECK(label_of_generation("", labels) == "funny"); // tie -> first label
    const auto sent = sentiment_labels();
    CHECK(label_of_generation("positive", sent) == "positive");
    CHECK(label_of_generation("highly positive stuff", sent) == "highly positive");
}
