// SPDX-License-Identifier: Apache-2.0
#include "vls/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vls/io.hpp"
#include "vls/objectives.hpp"
#include "vls/rng.hpp"
#include "vls/tokenizer.hpp"

namespace fs = std::filesystem;

namespace vls {

std::string synthetic_word(std::int64_t idx) {
    return "w" + std::to_string(idx);
}

std::array<real, 3> color_for_token(std::int64_t idx) {
    if (idx < 0 || idx >= 512) {
        throw usage_error("vocab subset too large for the color table (max 512 tokens)");
    }
    return {static_cast<real>((idx & 7) / 7.0), static_cast<real>(((idx >> 3) & 7) / 7.0),
            static_cast<real>(((idx >> 6) & 7) / 7.0)};
}

double tone_for_token(std::int64_t idx, std::int64_t sample_rate) {
    const double freq = 150.0 + 30.0 * static_cast<double>(idx);
    if (idx < 0 || freq >= static_cast<double>(sample_rate) / 2.0) {
        throw usage_error("vocab subset too large for the tone table at sample rate " +
                          std::to_string(sample_rate));
    }
    return freq;
}

int label_index_for_content(const std::string& content, std::uint64_t seed, int n_classes) {
    return static_cast<int>((fnv1a(content) ^ seed) % static_cast<std::uint64_t>(n_classes));
}

ImageTensor render_caption_image(const std::vector<std::int64_t>& word_idx, std::int64_t block) {
    ImageTensor img;
    img.height = block;
    img.width = block * static_cast<std::int64_t>(word_idx.size());
    img.channels = 3;
    img.values.assign(static_cast<std::size_t>(img.height * img.width * 3), real(0));
    for (std::size_t b = 0; b < word_idx.size(); ++b) {
        const auto rgb = color_for_token(word_idx[b]);
        for (std::int64_t y = 0; y < block; ++y) {
            for (std::int64_t x = 0; x < block; ++x) {
                const std::int64_t px = static_cast<std::int64_t>(b) * block + x;
                for (int c = 0; c < 3; ++c) {
                    img.values[static_cast<std::size_t>((y * img.width + px) * 3 + c)] =
                        rgb[static_cast<std::size_t>(c)];
                }
            }
        }
    }
    return img;
}

VideoTensor render_caption_video(const std::vector<std::int64_t>& word_idx, std::int64_t block,
                                 std::int64_t frames) {
    const auto base = render_caption_image(word_idx, block);
    VideoTensor vid;
    vid.frames = frames;
    vid.height = base.height;
    vid.width = base.width;
    vid.channels = 3;
    vid.values.reserve(static_cast<std::size_t>(frames) * base.values.size());
    for (std::int64_t t = 0; t < frames; ++t) {
        std::vector<real> frame = base.values;
        // block 0 animated: its red channel drifts over frames
        const real shift = static_cast<real>(static_cast<double>(t) / static_cast<double>(frames));
        for (std::int64_t y = 0; y < base.height; ++y) {
            for (std::int64_t x = 0; x < block && x < base.width; ++x) {
                auto& r = frame[static_cast<std::size_t>((y * base.width + x) * 3)];
                r = static_cast<real>(std::fmod(static_cast<double>(r) + shift, 1.0));
            }
        }
        vid.values.insert(vid.values.end(), frame.begin(), frame.end());
    }
    return vid;
}

AudioTensor render_transcript_audio(const std::vector<std::int64_t>& word_idx,
                                    std::int64_t tone_hop, std::int64_t sample_rate) {
    AudioTensor audio;
    audio.sample_rate = sample_rate;
    audio.samples.reserve(static_cast<std::size_t>(tone_hop) * word_idx.size());
    for (const auto idx : word_idx) {
        const double freq = tone_for_token(idx, sample_rate);
        for (std::int64_t k = 0; k < tone_hop; ++k) {
            audio.samples.push_back(static_cast<real>(
                0.5 * std::sin(6.283185307179586 * freq * static_cast<double>(k) /
                               static_cast<double>(sample_rate))));
        }
    }
    return audio;
}

SyntheticCorpusSpec SyntheticCorpusSpec::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw usage_error("cannot read synth spec: " + path);
    SyntheticCorpusSpec spec;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        bool blank = true;
        for (char ch : line) blank = blank && std::isspace(static_cast<unsigned char>(ch));
        if (blank) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw usage_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "vocab_words") spec.vocab_words = std::stoll(value);
            else if (key == "examples_per_task") spec.examples_per_task = std::stoll(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else if (key == "block") spec.block = std::stoll(value);
            else if (key == "caption_len_min") spec.caption_len_min = std::stoll(value);
            else if (key == "caption_len_max") spec.caption_len_max = std::stoll(value);
            else if (key == "sentence_len_min") spec.sentence_len_min = std::stoll(value);
            else if (key == "sentence_len_max") spec.sentence_len_max = std::stoll(value);
            else if (key == "tone_hop") spec.tone_hop = std::stoll(value);
            else if (key == "sample_rate") spec.sample_rate = std::stoll(value);
            else if (key == "video_frames") spec.video_frames = std::stoll(value);
            else if (key == "attach_paired") spec.attach_paired = (value == "true" || value == "1");
            else if (key == "tasks") spec.tasks = value;
            else throw usage_error("unknown synth spec key: " + key);
        } catch (const std::invalid_argument&) {
            throw usage_error("synth spec key '" + key + "' has a malformed value");
        }
    }
    return spec;
}

namespace {

struct Generator {
    const SyntheticCorpusSpec& spec;
    const std::string& out;

    std::vector<std::int64_t> random_words(SeededRng& rng, std::int64_t lo, std::int64_t hi) const {
        const auto len = lo + static_cast<std::int64_t>(
                                  rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        std::vector<std::int64_t> idx;
        idx.reserve(static_cast<std::size_t>(len));
        for (std::int64_t i = 0; i < len; ++i) {
            idx.push_back(static_cast<std::int64_t>(
                rng.below(static_cast<std::uint64_t>(spec.vocab_words))));
        }
        return idx;
    }

    std::string words_text(const std::vector<std::int64_t>& idx) const {
        std::string text;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i) text += ' ';
            text += synthetic_word(idx[i]);
        }
        return text;
    }

    std::string save_image(const ImageTensor& img, const std::string& stem) const {
        const std::string rel = "media/" + stem + ".mmt";
        save_tensor_file((fs::path(out) / rel).string(), {img.height, img.width, img.channels},
                         img.values);
        return rel;
    }
    std::string save_video(const VideoTensor& vid, const std::string& stem) const {
        const std::string rel = "media/" + stem + ".mmt";
        save_tensor_file((fs::path(out) / rel).string(),
                         {vid.frames, vid.height, vid.width, vid.channels}, vid.values);
        return rel;
    }
    std::string save_audio(const AudioTensor& audio, const std::string& stem) const {
        const std::string rel = "media/" + stem + ".mmt";
        save_tensor_file((fs::path(out) / rel).string(),
                         {static_cast<std::int64_t>(audio.samples.size())}, audio.samples);
        return rel;
    }
};

} // namespace

void generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::string& out_dir) {
    if (spec.vocab_words < 1) throw usage_error("synth: vocab_words must be positive");
    if (spec.caption_len_min < 1 || spec.caption_len_max < spec.caption_len_min) {
        throw usage_error("synth: bad caption length range");
    }
    if (spec.caption_len_max > 10) {
        throw usage_error("synth: caption_len_max beyond 10 breaks single-digit block questions");
    }
    // validate the colour/tone tables up front
    color_for_token(spec.vocab_words - 1);
    tone_for_token(spec.vocab_words - 1, spec.sample_rate);

    std::set<std::string> wanted;
    if (spec.tasks.empty()) {
        for (TaskKind t : kPretrainTasks) wanted.insert(task_name(t));
    } else {
        std::istringstream ss(spec.tasks);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            task_from_name(item); // validates
            wanted.insert(item);
        }
    }

    fs::create_directories(fs::path(out_dir) / "media");
    Generator gen{spec, out_dir};
    std::vector<std::string> corpus_texts;

    auto emit = [&](TaskKind task, const std::vector<RawRecord>& records,
                    const std::vector<std::string>& refs) {
        save_records((fs::path(out_dir) / (task_name(task) + ".jsonl")).string(), records);
        std::string ref_text;
        for (const auto& r : refs) ref_text += r + '\n';
        atomic_write_file((fs::path(out_dir) / (task_name(task) + ".refs.txt")).string(), ref_text);
    };

    const auto n = spec.examples_per_task;
    for (const auto& name : wanted) {
        const TaskKind task = task_from_name(name);
        SeededRng rng(spec.seed ^ fnv1a(name));
        std::vector<RawRecord> records;
        std::vector<std::string> refs;
        for (std::int64_t i = 0; i < n; ++i) {
            RawRecord rec;
            rec.task = name;
            const std::string stem = name + "_" + std::to_string(i);
            switch (task) {
            case TaskKind::ImageCaptioning: {
                const auto caption = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                rec.text_target = gen.words_text(caption);
                rec.image_path = gen.save_image(render_caption_image(caption, spec.block), stem);
                if (spec.attach_paired) {
                    auto transcript = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                    while (transcript == caption) {
                        transcript = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                    }
                    rec.audio_path = gen.save_audio(
                        render_transcript_audio(transcript, spec.tone_hop, spec.sample_rate),
                        stem + "_audio");
                }
                refs.push_back(rec.text_target);
                break;
            }
            case TaskKind::VideoCaptioning: {
                const auto caption = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                rec.text_target = gen.words_text(caption);
                rec.video_path = gen.save_video(
                    render_caption_video(caption, spec.block, spec.video_frames), stem);
                refs.push_back(rec.text_target);
                break;
            }
            case TaskKind::VisionQA: {
                const auto caption = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                const auto pos = static_cast<std::int64_t>(
                    rng.below(static_cast<std::uint64_t>(caption.size())));
                rec.text_input = "what is block " + std::to_string(pos);
                rec.text_target = synthetic_word(caption[static_cast<std::size_t>(pos)]);
                rec.image_path = gen.save_image(render_caption_image(caption, spec.block), stem);
                refs.push_back(rec.text_target);
                break;
            }
            case TaskKind::VisionTextReconstruction: {
                const auto caption = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                rec.text_target = gen.words_text(caption);
                rec.image_path = gen.save_image(render_caption_image(caption, spec.block), stem);
                refs.push_back(rec.text_target);
                break;
            }
            case TaskKind::SpeechTranscription: {
                const auto transcript = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                rec.text_target = gen.words_text(transcript);
                rec.audio_path = gen.save_audio(
                    render_transcript_audio(transcript, spec.tone_hop, spec.sample_rate), stem);
                if (spec.attach_paired) {
                    auto caption = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                    while (caption == transcript) {
                        caption = gen.random_words(rng, spec.caption_len_min, spec.caption_len_max);
                    }
                    rec.image_path =
                        gen.save_image(render_caption_image(caption, spec.block), stem + "_image");
                }
                refs.push_back(rec.text_target);
                break;
            }
            case TaskKind::SpeechSentiment:
            case TaskKind::SpeechEmotion: {
                const auto content = gen.random_words(rng, 4, 8);
                const auto& labels = task == TaskKind::SpeechSentiment ? sentiment_labels()
                                                                       : emotion_labels();
                const int li = label_index_for_content(gen.words_text(content), spec.seed,
                                                       static_cast<int>(labels.size()));
                rec.label = std::to_string(li);
                rec.text_target = labels[static_cast<std::size_t>(li)];
                rec.audio_path = gen.save_audio(
                    render_transcript_audio(content, spec.tone_hop, spec.sample_rate), stem);
                refs.push_back(labels[static_cast<std::size_t>(li)]);
                break;
            }
            case TaskKind::SpeechTextReconstruction: {
                const auto transcript = gen.random_words(rng, spec.sentence_len_min, spec.sentence_len_max);
                rec.text_target = gen.words_text(transcript);
                rec.audio_path = gen.save_audio(
                    render_transcript_audio(transcript, spec.tone_hop, spec.sample_rate), stem);
                refs.push_back(rec.text_target);
                break;
            }
            case TaskKind::LanguageReconstruction: {
                const auto sentence = gen.random_words(rng, spec.sentence_len_min, spec.sentence_len_max);
                rec.text_target = gen.words_text(sentence);
                refs.push_back(rec.text_target);
                break;
            }
            default:
                throw usage_error("synth: task '" + name + "' is not a pretraining task");
            }
            if (rec.text_input) corpus_texts.push_back(*rec.text_input);
            corpus_texts.push_back(rec.text_target);
            records.push_back(std::move(rec));
        }
        emit(task, records, refs);
    }

    // the vocabulary covers every prompt, label word, digit and content word
    for (TaskKind t : kAllTasks) corpus_texts.push_back(prompt_for(t));
    corpus_texts.push_back(prompt_for(TaskKind::DialogueGeneration, "witty"));
    for (const auto& l : sentiment_labels()) corpus_texts.push_back(l);
    for (const auto& l : emotion_labels()) corpus_texts.push_back(l);
    for (const auto& l : clip_labels()) corpus_texts.push_back(l);
    corpus_texts.push_back("what is block 0 1 2 3 4 5 6 7 8 9");
    for (std::int64_t i = 0; i < spec.vocab_words; ++i) {
        corpus_texts.push_back(synthetic_word(i));
    }
    const auto vocab = Vocab::build(corpus_texts, static_cast<std::size_t>(kNumReserved) + 256 +
                                                      static_cast<std::size_t>(spec.vocab_words));
    vocab.save((fs::path(out_dir) / "vocab.txt").string());
}

} // namespace vls
