// SPDX-License-Identifier: Apache-2.0
// Drives the vlsgen binary end to end: command wiring, file formats and exit
// codes. VLSGEN_PATH is injected by the build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vls/io.hpp"
#include "vls/trainer.hpp"

using namespace vls;
namespace fs = std::filesystem;

namespace {

const std::string kRoot = "/tmp/vls_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(VLSGEN_PATH) + " " + args + " >" + kRoot +
                            "/stdout.txt 2>" + kRoot + "/stderr.txt";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::string out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return out;
}

void write(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::vector<std::string> lines_of(const std::string& path) {
    std::ifstream f(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("full command flow: synth, pretrain, generate, eval") {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);

    write(kRoot + "/synth.spec",
          "vocab_words = 16\nexamples_per_task = 8\nseed = 21\ntasks = "
          "ImageCaptioning,LanguageReconstruction\n");
    REQUIRE(run("synth --spec " + kRoot + "/synth.spec --out " + kRoot + "/data") == 0);
    CHECK(fs::exists(kRoot + "/data/ImageCaptioning.jsonl"));
    CHECK(fs::exists(kRoot + "/data/vocab.txt"));

    write(kRoot + "/pre.cfg", "data_dir = " + kRoot + "/data\nout_dir = " + kRoot +
                                  "/pre\n"
                                  "d_text = 32\njoint_layers = 2\ndec_layers = 2\nenc_layers = 1\n"
                                  "d_mod = 32\nmax_steps = 700\nbatch_size = 8\nlr = 0.002\n"
                                  "seed = 5\ntasks = ImageCaptioning\ncheckpoint_every = 350\n");
    REQUIRE(run("pretrain --config " + kRoot + "/pre.cfg") == 0);
    CHECK(fs::exists(kRoot + "/pre/checkpoint/manifest"));
    CHECK(fs::exists(kRoot + "/pre/checkpoint_350/manifest")); // periodic checkpoint

    // the task filter keeps the excluded dataset out of every step report
    const auto log = slurp(kRoot + "/pre/train.log");
    CHECK(!log.empty());
    CHECK(log.find("ImageCaptioning") != std::string::npos);
    CHECK(log.find("LanguageReconstruction") == std::string::npos);

    // an overfit model reproduces all eight captions through the CLI
    write(kRoot + "/gen.cfg", "data_dir = " + kRoot + "/data\nout_dir = " + kRoot + "/pre\n");
    REQUIRE(run("generate --config " + kRoot + "/gen.cfg --checkpoint " + kRoot +
                "/pre/checkpoint --input " + kRoot + "/data/ImageCaptioning.jsonl --output " +
                kRoot + "/hyp.txt") == 0);
    const auto hyp = lines_of(kRoot + "/hyp.txt");
    const auto refs = lines_of(kRoot + "/data/ImageCaptioning.refs.txt");
    REQUIRE(hyp.size() == refs.size()); // line-aligned output
    CHECK(hyp == refs);

    REQUIRE(run("eval --hyp " + kRoot + "/hyp.txt --ref " + kRoot +
                "/data/ImageCaptioning.refs.txt --metrics rouge1,rougeL,wer --out " + kRoot +
                "/report.json") == 0);
    const auto report = slurp(kRoot + "/report.json");
    CHECK(report.find("\"rouge1\":1.0") != std::string::npos);
    CHECK(report.find("\"wer\":0.0") != std::string::npos);

    // text-only generation path: records with no modality files
    REQUIRE(run("generate --config " + kRoot + "/gen.cfg --checkpoint " + kRoot +
                "/pre/checkpoint --input " + kRoot + "/data/LanguageReconstruction.jsonl "
                "--output " + kRoot + "/hyp_lr.txt") == 0);
    CHECK(lines_of(kRoot + "/hyp_lr.txt").size() ==
          lines_of(kRoot + "/data/LanguageReconstruction.refs.txt").size());

    // beam decoding through the CLI
    write(kRoot + "/beam.cfg", "data_dir = " + kRoot + "/data\nout_dir = " + kRoot +
                                   "/pre\ngen_mode = beam\nbeam_width = 3\n");
    REQUIRE(run("generate --config " + kRoot + "/beam.cfg --checkpoint " + kRoot +
                "/pre/checkpoint --input " + kRoot + "/data/ImageCaptioning.jsonl --output " +
                kRoot + "/hyp_beam.txt") == 0);
    CHECK(lines_of(kRoot + "/hyp_beam.txt").size() == refs.size());
}

TEST_CASE("finetune honors step counts and updates encoders by default") {
    // depends on the checkpoint from the previous case
    REQUIRE(fs::exists(kRoot + "/pre/checkpoint/manifest"));
    const auto before = checkpoint_param_hashes(kRoot + "/pre/checkpoint");

    // zero steps: parameters come out bitwise identical
    write(kRoot + "/ft0.cfg", "data_dir = " + kRoot + "/data\nout_dir = " + kRoot +
                                  "/ft0\nmax_steps = 0\ntasks = ImageCaptioning\n");
    REQUIRE(run("finetune --config " + kRoot + "/ft0.cfg --checkpoint " + kRoot +
                "/pre/checkpoint") == 0);
    CHECK(checkpoint_param_hashes(kRoot + "/ft0/checkpoint") == before);

    // a few steps with default (unfrozen) encoders move encoder parameters
    write(kRoot + "/ft.cfg", "data_dir = " + kRoot + "/data\nout_dir = " + kRoot +
                                 "/ft\nmax_steps = 5\nbatch_size = 4\ntasks = ImageCaptioning\n"
                                 "warmup_steps = 1\nlr = 0.001\nseed = 6\n");
    REQUIRE(run("finetune --config " + kRoot + "/ft.cfg --checkpoint " + kRoot +
                "/pre/checkpoint") == 0);
    const auto after = checkpoint_param_hashes(kRoot + "/ft/checkpoint");
    bool vision_moved = false, speech_moved = false, fusion_moved = false;
    for (const auto& [name, hash] : after) {
        if (before.at(name) == hash) continue;
        vision_moved = vision_moved || name.rfind("vision.", 0) == 0;
        speech_moved = speech_moved || name.rfind("speech.", 0) == 0;
        fusion_moved = fusion_moved || name.rfind("fusion.", 0) == 0;
    }
    CHECK(vision_moved);
    CHECK(fusion_moved);
    // the captioning pool carries no audio, so speech gradients stay zero and
    // the speech encoder only moves once speech data is in the mix
    CHECK(!speech_moved);
}

TEST_CASE("eval supports label accuracy with an explicit label set") {
    write(kRoot + "/labels_hyp.txt", "funny\nvery unfunny stuff\n");
    write(kRoot + "/labels_ref.txt", "funny\nunfunny\n");
    REQUIRE(run("eval --hyp " + kRoot + "/labels_hyp.txt --ref " + kRoot +
                "/labels_ref.txt --metrics label_accuracy --labels funny,unfunny --out " + kRoot +
                "/labels_report.json") == 0);
    CHECK(slurp(kRoot + "/labels_report.json").find("\"label_accuracy\":1.0") !=
          std::string::npos);
    // without a label set it is a usage error
    CHECK(run("eval --hyp " + kRoot + "/labels_hyp.txt --ref " + kRoot +
              "/labels_ref.txt --metrics label_accuracy") == 2);
}

TEST_CASE("exit codes distinguish usage, schema and integrity failures") {
    // usage: mismatched line counts
    write(kRoot + "/short.txt", "one line\n");
    write(kRoot + "/long.txt", "one\ntwo\n");
    CHECK(run("eval --hyp " + kRoot + "/short.txt --ref " + kRoot + "/long.txt") == 2);

    // usage: unknown metric
    CHECK(run("eval --hyp " + kRoot + "/short.txt --ref " + kRoot +
              "/short.txt --metrics meteor") == 2);

    // usage: unknown config key
    write(kRoot + "/bad.cfg", "no_such_key = 1\n");
    CHECK(run("pretrain --config " + kRoot + "/bad.cfg") == 2);

    // schema: unknown task in a record file
    write(kRoot + "/bad_records.jsonl", "{\"task\":\"NotATask\",\"text_target\":\"x\"}\n");
    write(kRoot + "/gen2.cfg", "data_dir = " + kRoot + "/data\nout_dir = " + kRoot + "/pre\n");
    CHECK(run("generate --config " + kRoot + "/gen2.cfg --checkpoint " + kRoot +
              "/pre/checkpoint --input " + kRoot + "/bad_records.jsonl --output " + kRoot +
              "/nope.txt") == 2);

    // integrity: missing checkpoint
    CHECK(run("generate --config " + kRoot + "/gen2.cfg --checkpoint " + kRoot +
              "/no_such_ckpt --input " + kRoot + "/data/ImageCaptioning.jsonl --output " + kRoot +
              "/nope.txt") == 3);

    // integrity: corrupted parameter payload
    fs::create_directories(kRoot + "/broken");
    fs::copy(kRoot + "/pre/checkpoint", kRoot + "/broken/checkpoint",
             fs::copy_options::recursive);
    {
        std::ofstream f(kRoot + "/broken/checkpoint/params/fusion.embed.mmt",
                        std::ios::binary | std::ios::trunc);
        f << "garbage";
    }
    CHECK(run("generate --config " + kRoot + "/gen2.cfg --checkpoint " + kRoot +
              "/broken/checkpoint --input " + kRoot + "/data/ImageCaptioning.jsonl --output " +
              kRoot + "/nope.txt") == 3);

    // CLI parse errors are usage errors
    CHECK(run("pretrain") == 2);
    CHECK(run("frobnicate") == 2);
}
