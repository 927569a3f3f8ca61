#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "../common/fixtures.hpp"
#include "drowsy/pipeline.hpp"
#include "drowsy/synth.hpp"
#include "helpers.hpp"

using namespace drowsy;
using nlohmann::json;

namespace {

const std::filesystem::path kData = DROWSY_DATA_DIR;

PipelineConfig default_config() { return load_pipeline_config(kData / "configs" / "default.json"); }

std::string base_config_json() {
    return json{{"face_cascade", "cascades/face_lbp.xml"},
                {"eye_cascade", "cascades/eye_haar.xml"},
                {"model", "models/eye_hog.model"}}
        .dump();
}

std::vector<json> read_jsonl(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        out.push_back(json::parse(line));
    }
    return out;
}

std::string run_to_string(const PipelineConfig& cfg, const std::filesystem::path& frames) {
    std::ostringstream out;
    run_sequence(cfg, frames, out);
    return out.str();
}

// Mann-Whitney estimate with half credit for ties.
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (pos[i] && !pos[j]) {
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
                pairs += 1.0;
            }
        }
    }
    return wins / pairs;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing") {
    const auto c = parse_pipeline_config(base_config_json(), kData);
    CHECK(c.face_cascade == kData / "cascades/face_lbp.xml");
    CHECK(c.fps == 30.0);
    CHECK(c.features == DescriptorKind::hog);

    auto j = json::parse(base_config_json());
    j["fps"] = 25.0;
    j["features"] = "lbp";
    j["vigilance"] = {{"alarm_after", 2.0}};
    j["force_lost_frames"] = {3, 7};
    const auto d = parse_pipeline_config(j.dump(), kData);
    CHECK(d.fps == 25.0);
    CHECK(d.features == DescriptorKind::lbp);
    CHECK(d.vigilance.alarm_after == 2.0);
    CHECK(d.force_lost_frames == std::set<int>{3, 7});

    auto typo = json::parse(base_config_json());
    typo["fsp"] = 30;
    CHECK_THROWS_AS(parse_pipeline_config(typo.dump(), kData), ConfigError);
    auto nested = json::parse(base_config_json());
    nested["tracker"] = {{"roi_margn", 10}};
    CHECK_THROWS_AS(parse_pipeline_config(nested.dump(), kData), ConfigError);

    for (double fps : {0.0, -30.0}) {
        auto bad = json::parse(base_config_json());
        bad["fps"] = fps;
        CHECK_THROWS_AS(parse_pipeline_config(bad.dump(), kData), ConfigError);
    }
    auto missing = json::parse(base_config_json());
    missing["model"] = "models/nope.model";
    CHECK_THROWS_AS(parse_pipeline_config(missing.dump(), kData), ConfigError);
    missing.erase("model");
    CHECK_THROWS_AS(parse_pipeline_config(missing.dump(), kData), ConfigError);
    CHECK_THROWS_AS(parse_pipeline_config("[1, 2]", kData), ConfigError);
    CHECK_THROWS_AS(load_pipeline_config(kData / "configs" / "absent.json"), ConfigError);
}

TEST_CASE("default config loads") {
    const auto cfg = default_config();
    CHECK(std::filesystem::exists(cfg.face_cascade));
    CHECK(std::filesystem::exists(cfg.eye_cascade));
    CHECK(std::filesystem::exists(cfg.model));
    CHECK_NOTHROW(Pipeline::from_config(cfg));
}

TEST_CASE("blank frames are lost with unknown eyes") {
    PipelineConfig cfg;
    SvmModel model;
    model.weights.assign(540, 0.01);
    Pipeline p(cfg, load_cascade(fixture::planted_lbp_xml()), load_cascade(fixture::planted_haar_xml()), model);
    const GrayImage blank(320, 240, 128);
    for (int k = 0; k < 20; ++k) {
        const auto r = p.process(blank);
        const auto j = json::parse(to_jsonl(r));
        CHECK(j["frame"] == k);
        CHECK(j["face"].is_null());
        CHECK(j["eyes"]["left"].is_null());
        CHECK(j["eyes"]["right"].is_null());
        CHECK(j["status"] == "lost");
        CHECK(j["fused"] == "unknown");
        CHECK(j["alarm"] == false);
        CHECK(j["alarm_event"] == "none");
    }
    CHECK(p.summary().lost == 20);
    CHECK(p.summary().alarms_raised == 0);
}

TEST_CASE("scripted two second closure raises and releases once") {
    const double fps = 30.0;
    const int onset = 30;
    synth::SceneSpec spec;
    spec.frames = 120;
    spec.fps = fps;
    spec.face_x = 250;
    spec.face_y = 170;
    spec.face_size = 140;
    spec.vx = 1.0;
    spec.noise = 3.0;
    spec.blinks = {{onset, onset + 59}};
    const auto dir = testutil::scratch_dir("closure");
    synth::write_sequence(spec, dir);

    auto cfg = default_config();
    cfg.fps = fps;
    const auto lines = read_jsonl(run_to_string(cfg, dir));
    REQUIRE(lines.size() == 121);
    int raised = 0;
    int released = 0;
    for (int k = 0; k < 120; ++k) {
        const auto& j = lines[static_cast<std::size_t>(k)];
        if (j["alarm_event"] == "raised") {
            ++raised;
            // frame k's reading covers [t, t + 1/fps)
            const double t_end = j["t"].get<double>() + 1.0 / fps;
            CHECK(t_end >= onset / fps + 1.5 - 1e-9);
            CHECK(t_end <= onset / fps + 1.6 + 1e-9);
        }
        released += j["alarm_event"] == "released";
    }
    CHECK(raised == 1);
    CHECK(released == 1);
    CHECK(lines.back()["summary"] == true);
    CHECK(lines.back()["alarms_raised"] == 1);
}

TEST_CASE("forced loss re-runs detection on the next frame") {
    synth::SceneSpec spec;
    spec.frames = 30;
    spec.face_size = 140;
    spec.noise = 2.0;
    const auto dir = testutil::scratch_dir("force_lost");
    synth::write_sequence(spec, dir);

    auto cfg = default_config();
    cfg.force_lost_frames = {10, 20};
    const auto lines = read_jsonl(run_to_string(cfg, dir));
    REQUIRE(lines.size() == 31);
    CHECK(lines[0]["status"] == "detected");
    CHECK(lines[5]["status"] == "tracked");
    for (int k : {10, 20}) {
        CHECK(lines[static_cast<std::size_t>(k)]["status"] == "lost");
        CHECK(lines[static_cast<std::size_t>(k) + 1]["status"] == "detected");
        CHECK(lines[static_cast<std::size_t>(k) + 2]["status"] == "tracked");
    }
}

TEST_CASE("one line per frame and byte-identical reruns") {
    synth::SceneSpec spec;
    spec.frames = 45;
    spec.face_size = 130;
    spec.vx = 1.5;
    spec.noise = 4.0;
    spec.blinks = {{10, 14}};
    spec.vanish = {{30, 31}};
    const auto dir = testutil::scratch_dir("determinism");
    synth::write_sequence(spec, dir);

    const auto cfg = default_config();
    const auto a = run_to_string(cfg, dir);
    const auto b = run_to_string(cfg, dir);
    auto la = read_jsonl(a);
    auto lb = read_jsonl(b);
    REQUIRE(la.size() == 46);
    REQUIRE(lb.size() == 46);
    for (std::size_t k = 0; k < 45; ++k) {
        CHECK(la[k].dump() == lb[k].dump());
        CHECK(la[k]["frame"] == k);
    }
    // timings live only in the summary line
    for (auto* s : {&la.back(), &lb.back()}) {
        CHECK((*s)["summary"] == true);
        CHECK((*s)["frames"] == 45);
        CHECK((*s)["face_cascade"] == "face_lbp.xml");
        CHECK((*s)["eye_cascade"] == "eye_haar.xml");
        CHECK((*s)["model"] == "eye_hog.model");
    }
}

TEST_CASE("unreadable frame aborts with its index") {
    synth::SceneSpec spec;
    spec.frames = 3;
    const auto dir = testutil::scratch_dir("bad_frame");
    synth::write_sequence(spec, dir);
    std::ofstream(dir / "frame_00001.pgm", std::ios::trunc) << "P5\n";
    std::ostringstream out;
    try {
        run_sequence(default_config(), dir, out);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
    }
    CHECK_THROWS_AS(run_sequence(default_config(), testutil::scratch_dir("no_frames"), out), Error);
}

TEST_CASE("training and evaluation from directories") {
    const auto dir = testutil::scratch_dir("eyes");
    synth::write_eye_dataset({.count = 150, .noise = 6.0, .seed = 3}, dir / "train");
    synth::write_eye_dataset({.count = 150, .noise = 6.0, .seed = 4}, dir / "test");

    const TrainParams params{.lambda = 1e-3, .epochs = 20, .seed = 1};
    const auto rep = train_from_dirs(dir / "train/open", dir / "train/closed", DescriptorKind::hog, params);
    CHECK(rep.open_count == 150);
    CHECK(rep.closed_count == 150);
    CHECK(rep.training_accuracy >= 0.98);

    const auto own = evaluate_dirs(rep.model, dir / "train/open", dir / "train/closed");
    CHECK(own.roc.auc == doctest::Approx(pairwise_auc(own.scores, own.closed)).epsilon(1e-9));

    const auto held = evaluate_dirs(rep.model, dir / "test/open", dir / "test/closed");
    const auto swapped = train_from_dirs(dir / "train/closed", dir / "train/open", DescriptorKind::hog, params);
    const auto held_swapped = evaluate_dirs(swapped.model, dir / "test/open", dir / "test/closed");
    CHECK(held_swapped.roc.auc == doctest::Approx(1.0 - held.roc.auc).epsilon(0.02));

    auto reseeded = params;
    reseeded.seed = 2;
    const auto other = train_from_dirs(dir / "train/open", dir / "train/closed", DescriptorKind::hog, reseeded);
    CHECK(other.model.weights != rep.model.weights);
    CHECK(std::abs(evaluate_dirs(other.model, dir / "test/open", dir / "test/closed").roc.auc - held.roc.auc) < 0.02);

    const auto empty = testutil::scratch_dir("eyes_empty");
    CHECK_THROWS_AS(train_from_dirs(dir / "train/open", empty, DescriptorKind::hog, params), Error);
    CHECK_THROWS_AS(evaluate_dirs(rep.model, dir / "test/open", empty), Error);
}

TEST_CASE("eval rejects a model of the wrong dimension") {
    const auto dir = testutil::scratch_dir("eyes_dim");
    synth::write_eye_dataset({.count = 5}, dir);
    SvmModel m;
    m.kind = DescriptorKind::lbp;
    m.weights.assign(540, 0.0);
    try {
        evaluate_dirs(m, dir / "open", dir / "closed");
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("540") != std::string::npos);
        CHECK(msg.find("348") != std::string::npos);
    }
}

TEST_CASE("ROC CSV layout") {
    const auto roc = roc_from_scores({0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
    std::ostringstream out;
    write_roc_csv(out, roc);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "threshold,fpr,tpr");
    std::vector<std::string> rows;
    while (std::getline(in, line)) {
        rows.push_back(line);
    }
    REQUIRE(rows.size() == roc.points.size() + 1);
    CHECK(rows.back() == "AUC,0.75");
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        CHECK(std::count(rows[i].begin(), rows[i].end(), ',') == 2);
    }
}

TEST_CASE("synthetic sequences") {
    synth::SceneSpec spec;
    spec.frames = 120;
    spec.width = 320;
    spec.height = 240;
    spec.face_x = 100;
    spec.face_y = 60;
    spec.vx = 0.5;
    spec.noise = 5.0;
    spec.seed = 11;
    spec.blinks = {{50, 99}};
    const auto a = testutil::scratch_dir("synth_a");
    const auto b = testutil::scratch_dir("synth_b");
    synth::write_sequence(spec, a);
    synth::write_sequence(spec, b);
    for (int k : {0, 37, 119}) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.pgm", k);
        CHECK(slurp(a / name) == slurp(b / name));
    }
    CHECK(slurp(a / "truth.jsonl") == slurp(b / "truth.jsonl"));

    const auto truth = read_jsonl(slurp(a / "truth.jsonl"));
    REQUIRE(truth.size() == 120);
    for (int k = 0; k < 120; ++k) {
        const bool closed = k >= 50 && k <= 99;
        for (const char* side : {"left", "right"}) {
            CHECK(truth[static_cast<std::size_t>(k)][side]["state"] == (closed ? "closed" : "open"));
        }
    }

    synth::SceneSpec still;
    still.frames = 5;
    still.width = 200;
    still.height = 160;
    still.face_x = 40;
    still.face_y = 20;
    const auto first = synth::render_frame(still, 0).image;
    for (int k = 1; k < 5; ++k) {
        CHECK(synth::render_frame(still, k).image == first);
    }

    CHECK_THROWS(synth::parse_scene_spec(R"({"frames": 3, "blinkz": []})"));
}

}
