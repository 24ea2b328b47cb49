#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "anymodal/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace anymodal;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("anymodal-data-" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream f(p, std::ios::trunc);
    for (const auto& l : lines) f << l << "\n";
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string caption_line(const std::string& id) {
    json gray;
    gray["h"] = 2;
    gray["w"] = 2;
    gray["c"] = 3;
    gray["data"] = std::vector<double>(12, 0.5);
    json j;
    j["id"] = id;
    j["task"] = "caption";
    j["modality"] = json::array({json{{"kind", "image"}, {"payload", gray}}});
    j["caption"] = "a gray blob";
    return j.dump();
}

} // namespace

TEST_CASE("caption grammar is the full cross product") {
    auto img = grammar::surface_forms(Modality::image);
    CHECK(img.size() == 4 * 3 * 4);
    CHECK(std::set<std::string>(img.begin(), img.end()).size() == img.size());
    CHECK(grammar::image_caption(0, 0, 0) == "a red circle in the top left");
    CHECK(grammar::image_caption(3, 2, 3) == "a yellow triangle in the bottom right");

    CHECK(grammar::surface_forms(Modality::audio).size() == 3 * 3);
    CHECK(grammar::audio_caption(2, 1) == "a high rising tone");
    CHECK(grammar::surface_forms(Modality::imu).size() == 5);
    CHECK(grammar::imu_caption(1) == "the user is running");
    CHECK(grammar::surface_forms(Modality::video).size() == 4 * 4);
    CHECK(grammar::video_caption(2, 3) == "a blue shape moving down");
}

TEST_CASE("payload JSON round-trips every modality exactly") {
    std::mt19937_64 rng(9);

    ModalitySignal img;
    img.kind = Modality::image;
    img.image = detail::draw_shape_image(1, 2, 3, rng);
    ModalitySignal img2 = payload_from_json(Modality::image, payload_to_json(img));
    CHECK(img2.image.h == img.image.h);
    CHECK(img2.image.data == img.image.data);

    ModalitySignal audio;
    audio.kind = Modality::audio;
    audio.audio = {0.1, -0.25, 0.75};
    ModalitySignal audio2 = payload_from_json(Modality::audio, payload_to_json(audio));
    CHECK(audio2.audio == audio.audio);

    ModalitySignal imu;
    imu.kind = Modality::imu;
    imu.imu = Mat::Random(5, 6);
    ModalitySignal imu2 = payload_from_json(Modality::imu, payload_to_json(imu));
    CHECK((imu2.imu - imu.imu).cwiseAbs().maxCoeff() == 0.0);

    ModalitySignal vid;
    vid.kind = Modality::video;
    vid.video.push_back(img.image);
    vid.video.push_back(img.image);
    ModalitySignal vid2 = payload_from_json(Modality::video, payload_to_json(vid));
    REQUIRE(vid2.video.size() == 2);
    CHECK(vid2.video[1].data == img.image.data);
}

TEST_CASE("record schema errors carry the line number") {
    fs::path dir = fresh_dir("schema");
    fs::path p = dir / "bad.jsonl";

    SUBCASE("malformed JSON") {
        write_lines(p, {caption_line("ok-1"), "{not json"});
        CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("line 2"), std::runtime_error);
    }
    SUBCASE("missing id") {
        write_lines(p, {"{\"task\":\"caption\"}"});
        CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("line 1"), std::runtime_error);
    }
    SUBCASE("unknown task") {
        json j = json::parse(caption_line("x"));
        j["task"] = "translate";
        write_lines(p, {caption_line("ok-1"), caption_line("ok-2"), j.dump()});
        try {
            load_dataset(p);
            FAIL("expected throw");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
            CHECK(std::string(e.what()).find("translate") != std::string::npos);
        }
    }
    SUBCASE("missing modality array") {
        json j = json::parse(caption_line("x"));
        j.erase("modality");
        write_lines(p, {j.dump()});
        CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("modality"), std::runtime_error);
    }
    SUBCASE("caption record without caption") {
        json j = json::parse(caption_line("x"));
        j.erase("caption");
        write_lines(p, {j.dump()});
        CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("caption"), std::runtime_error);
    }
    SUBCASE("instruct record without response") {
        json j = json::parse(caption_line("x"));
        j["task"] = "instruct";
        j["template"] = "mm-it";
        j.erase("caption");
        write_lines(p, {j.dump()});
        CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("response"), std::runtime_error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset(dir / "nope.jsonl"), std::runtime_error);
    }
}

TEST_CASE("duplicate ids are rejected with both line numbers") {
    fs::path dir = fresh_dir("dup");
    fs::path p = dir / "dup.jsonl";
    write_lines(p, {caption_line("same"), caption_line("other"), caption_line("same")});
    try {
        load_dataset(p);
        FAIL("expected throw");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("'same'") != std::string::npos);
        CHECK(msg.find("line 1") != std::string::npos);
    }
}

TEST_CASE("empty lines are skipped; order is file order") {
    fs::path dir = fresh_dir("order");
    fs::path p = dir / "ok.jsonl";
    write_lines(p, {caption_line("a"), "", caption_line("b")});
    Dataset ds = load_dataset(p);
    REQUIRE(ds.size() == 2);
    CHECK(ds.at(0).id == "a");
    CHECK(ds.at(1).id == "b");
}

TEST_CASE("shuffled order is a seed-determined permutation") {
    std::vector<DatasetRecord> recs(10);
    Dataset ds(std::move(recs));
    auto a = ds.shuffled_indices(3);
    auto b = ds.shuffled_indices(3);
    auto c = ds.shuffled_indices(4);
    CHECK(a == b);
    CHECK(a != c);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("validation split is a pure function of id and seed, near 10%") {
    // determinism
    CHECK(is_validation_id("image-000123", 7) == is_validation_id("image-000123", 7));
    // seed changes membership for at least one id
    int n_val_7 = 0, n_val_8 = 0;
    for (int i = 0; i < 5000; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "image-%06d", i);
        n_val_7 += is_validation_id(id, 7);
        n_val_8 += is_validation_id(id, 8);
    }
    CHECK(n_val_7 > 350);
    CHECK(n_val_7 < 650);
    CHECK(n_val_8 > 350);
    CHECK(n_val_8 < 650);
}

TEST_CASE("synthetic corpus: split property, loadability, captions in grammar") {
    fs::path dir = fresh_dir("synth");
    SynthSpec spec;
    spec.kind = Modality::image;
    spec.n_items = 120;
    spec.seed = 13;
    SynthResult res = synth_corpus(spec, dir);
    CHECK(res.n_train + res.n_val == 120);
    CHECK(res.n_val > 0);

    Dataset tr = load_dataset(res.train_path);
    Dataset va = load_dataset(res.val_path);
    CHECK(static_cast<int>(tr.size()) == res.n_train);
    CHECK(static_cast<int>(va.size()) == res.n_val);

    auto forms = grammar::surface_forms(Modality::image);
    std::set<std::string> legal(forms.begin(), forms.end());
    std::set<std::string> ids;
    for (size_t i = 0; i < tr.size(); ++i) {
        const auto& r = tr.at(i);
        CHECK(legal.count(r.caption) == 1);
        CHECK_FALSE(is_validation_id(r.id, spec.seed));
        ids.insert(r.id);
        CHECK_NOTHROW(r.modalities.at(0).validate());
    }
    for (size_t i = 0; i < va.size(); ++i) {
        CHECK(is_validation_id(va.at(i).id, spec.seed));
        ids.insert(va.at(i).id);
    }
    CHECK(ids.size() == 120); // train and val are disjoint

    // manifest records the split rule and counts
    json manifest = json::parse(slurp(res.manifest_path));
    CHECK(manifest.at("n_train") == res.n_train);
    CHECK(manifest.at("n_val") == res.n_val);
    CHECK(manifest.at("surface_forms").size() == forms.size());
}

TEST_CASE("synthetic corpus generation is byte-identical per seed") {
    SynthSpec spec;
    spec.kind = Modality::audio;
    spec.n_items = 40;
    spec.seed = 99;
    fs::path d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
    auto r1 = synth_corpus(spec, d1);
    auto r2 = synth_corpus(spec, d2);
    CHECK(slurp(r1.train_path) == slurp(r2.train_path));
    CHECK(slurp(r1.val_path) == slurp(r2.val_path));
    // a different seed changes the bytes
    spec.seed = 100;
    auto r3 = synth_corpus(spec, fresh_dir("det3"));
    CHECK(slurp(r1.train_path) != slurp(r3.train_path));
}

TEST_CASE("synthetic corpus: every modality kind generates and validates") {
    for (Modality kind :
         {Modality::image, Modality::audio, Modality::imu, Modality::video}) {
        SynthSpec spec;
        spec.kind = kind;
        spec.n_items = 12;
        spec.seed = 5;
        fs::path dir = fresh_dir(std::string("kind-") + modality_name(kind));
        auto res = synth_corpus(spec, dir);
        Dataset ds = load_dataset(res.train_path);
        REQUIRE(!ds.empty());
        CHECK(ds.at(0).modalities.at(0).kind == kind);
        CHECK_NOTHROW(ds.at(0).modalities.at(0).validate());
    }
    SynthSpec bad;
    bad.n_items = 0;
    CHECK_THROWS_AS(synth_corpus(bad, fresh_dir("bad")), std::invalid_argument);
    bad.n_items = 1;
    bad.task = "instruct";
    bad.kind = Modality::audio; // instruct synthesis is image-only
    CHECK_THROWS_AS(synth_corpus(bad, fresh_dir("bad2")), std::invalid_argument);
}

TEST_CASE("instruct synthesis answers match the rendered image") {
    SynthSpec spec;
    spec.kind = Modality::image;
    spec.task = "instruct";
    spec.n_items = 30;
    spec.seed = 17;
    fs::path dir = fresh_dir("instr");
    auto res = synth_corpus(spec, dir);
    Dataset ds = load_dataset(res.train_path);
    std::set<std::string> answers;
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.at(i);
        CHECK(r.task == "instruct");
        CHECK(r.template_name == "vqa-short");
        CHECK(r.fields.count("question") == 1);
        answers.insert(r.response);
    }
    // every answer is a color, shape, or position surface form
    std::set<std::string> legal;
    for (const auto& [c, rgb] : grammar::colors()) legal.insert(c);
    for (const auto& s : grammar::shapes()) legal.insert(s);
    for (const auto& p : grammar::positions()) legal.insert(p);
    for (const auto& a : answers) CHECK(legal.count(a) == 1);
}

TEST_CASE("augmentation: generator output becomes instruct records") {
    fs::path dir = fresh_dir("aug");
    fs::path src = dir / "src.jsonl";
    json row1, row2, row3;
    row1["id"] = "r1";
    row1["captions"] = {"A red fire hydrant on the sidewalk."};
    row1["boxes"] = json::array(
        {json{{"label", "fire hydrant"}, {"x1", 0.3}, {"y1", 0.6}, {"x2", 0.4}, {"y2", 0.7}}});
    row2["id"] = "r2";
    row2["captions"] = {"A dog."};
    row3["id"] = "r3";
    row3["captions"] = {"A cat."};
    write_lines(src, {row1.dump(), row2.dump(), row3.dump()});

    int calls = 0;
    auto generate = [&calls](const std::string& prompt) -> std::string {
        ++calls;
        CHECK(prompt.find("[INST]") != std::string::npos);
        if (calls == 1) return "Question: What is shown? === Answer: A hydrant.";
        if (calls == 2) return "gibberish without the delimiter";
        throw std::runtime_error("generator backend down");
    };
    std::vector<std::string> errors;
    fs::path out = dir / "aug.jsonl";
    AugmentationStats stats = build_augmented_records(src, generate, out, &errors);
    CHECK(stats.emitted == 1);
    CHECK(stats.dropped == 1);
    CHECK(stats.failed == 1);
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].find("line 3") != std::string::npos);

    Dataset ds = load_dataset(out);
    REQUIRE(ds.size() == 1);
    CHECK(ds.at(0).id == "r1-aug");
    CHECK(ds.at(0).task == "instruct");
    CHECK(ds.at(0).template_name == "mm-it");
    CHECK(ds.at(0).fields.at("question") == "What is shown?");
    CHECK(ds.at(0).response == "A hydrant.");
    // caption-only source rows get a neutral gray placeholder image
    CHECK(ds.at(0).modalities.at(0).kind == Modality::image);
    CHECK(ds.at(0).modalities.at(0).image.at(0, 0, 0) == 0.5);
}
