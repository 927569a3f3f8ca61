#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../common/fixtures.hpp"
#include "../common/oracles.hpp"
#include "drowsy/cascade.hpp"
#include "helpers.hpp"

using namespace drowsy;

namespace {

const std::string kMinimalHaar = R"(<?xml version="1.0"?>
<opencv_storage>
<cascade type_id="opencv-cascade-classifier">
  <stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>24</height>
  <width>24</width>
  <stageNum>1</stageNum>
  <stages>
    <_>
      <maxWeakCount>1</maxWeakCount>
      <stageThreshold>-1.25</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 0 0.125</internalNodes>
          <leafValues>-0.5 0.75</leafValues></_></weakClassifiers></_></stages>
  <features>
    <_>
      <rects>
        <_>2 4 20 8 -1.</_>
        <_>2 8 20 4 2.</_></rects>
      <tilted>0</tilted></_></features></cascade>
</opencv_storage>
)";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) {
        s.replace(p, from.size(), to);
    }
    return s;
}

std::string load_error(const std::string& xml) {
    try {
        load_cascade(xml);
    } catch (const LoadError& e) {
        return e.what();
    }
    return {};
}

Rect random_window(std::mt19937_64& rng, const Cascade& c, int img_w, int img_h) {
    const double max_scale = std::min(static_cast<double>(img_w) / c.base_w, static_cast<double>(img_h) / c.base_h);
    const double s = std::uniform_real_distribution<double>(1.0, max_scale)(rng);
    const int w = std::min(img_w, static_cast<int>(std::lround(c.base_w * s)));
    const int h = std::min(img_h, static_cast<int>(std::lround(c.base_h * s)));
    return {testutil::uniform_int(rng, 0, img_w - w), testutil::uniform_int(rng, 0, img_h - h), w, h};
}

} // namespace

TEST_SUITE("cascade") {

TEST_CASE("minimal Haar cascade loads with the authored fields") {
    const Cascade c = load_cascade(kMinimalHaar);
    CHECK(c.kind == FeatureKind::haar);
    CHECK(c.base_w == 24);
    CHECK(c.base_h == 24);
    REQUIRE(c.stages.size() == 1);
    CHECK(c.stages[0].threshold == -1.25);
    REQUIRE(c.stages[0].weak.size() == 1);
    const auto& w = std::get<HaarWeak>(c.stages[0].weak[0]);
    CHECK(w.threshold == 0.125);
    CHECK(w.leaf_pass == -0.5);
    CHECK(w.leaf_fail == 0.75);
    REQUIRE(w.feature.rects.size() == 2);
    CHECK(w.feature.rects[0].rect == Rect{2, 4, 20, 8});
    CHECK(w.feature.rects[0].weight == -1.0);
    CHECK(w.feature.rects[1].rect == Rect{2, 8, 20, 4});
    CHECK(w.feature.rects[1].weight == 2.0);
}

TEST_CASE("schema violations are load errors naming the element") {
    CHECK(load_error(replace_all(kMinimalHaar, "<featureType>HAAR", "<featureType>LBP")).find("features") !=
          std::string::npos);
    CHECK(load_error(replace_all(kMinimalHaar, "<featureType>HAAR", "<featureType>HOG")).find("featureType") !=
          std::string::npos);
    CHECK(load_error(replace_all(kMinimalHaar, "<tilted>0", "<tilted>1")).find("tilted") != std::string::npos);
    CHECK(load_error(replace_all(kMinimalHaar, "0 -1 0 0.125", "0 -1 3 0.125")).find("dangling feature index 3") !=
          std::string::npos);
    CHECK(load_error(replace_all(kMinimalHaar, "BOOST", "GENTLE")).find("stageType") != std::string::npos);
    CHECK(load_error(replace_all(kMinimalHaar, "<stageNum>1", "<stageNum>2")).find("stageNum") != std::string::npos);
    CHECK(load_error(replace_all(kMinimalHaar, "0 -1 0 0.125", "1 -1 0 0.125 0 -2 1 0.5")).find("internalNodes") !=
          std::string::npos);
    CHECK(load_error("<opencv_storage><cascade>").find("malformed XML") != std::string::npos);
}

TEST_CASE("stages keep their order") {
    const Cascade c = load_cascade(fixture::planted_haar_xml());
    REQUIRE(c.stages.size() == 2);
    CHECK(std::get<HaarWeak>(c.stages[0].weak[0]).threshold == -0.7);
    CHECK(std::get<HaarWeak>(c.stages[1].weak[0]).threshold == 0.3);
    CHECK(std::get<HaarWeak>(c.stages[1].weak[0]).feature.rects.size() == 2);
}

TEST_CASE("real LBP face model loads") {
    const Cascade c = load_cascade_file(DROWSY_FIXTURE_DIR "/lbpcascade_frontalface.xml");
    CHECK(c.kind == FeatureKind::lbp);
    CHECK(c.base_w == 24);
    CHECK(c.stages.size() == 20);
    CHECK(c.stages[0].weak.size() == 3);
    CHECK(c.stages[0].threshold == doctest::Approx(-0.7520892024040222));
    const auto& first = std::get<LbpWeak>(c.stages[0].weak[0]);
    CHECK(first.subset[0] == static_cast<std::uint32_t>(-67130709));
    CHECK(first.leaf_in == doctest::Approx(-0.6543210148811340));
    CHECK(first.leaf_out == doctest::Approx(0.8888888955116272));
}

TEST_CASE("a dominated stage threshold accepts every window") {
    const std::string xml = replace_all(kMinimalHaar, "<stageThreshold>-1.25", "<stageThreshold>-1e30");
    const Cascade c = load_cascade(xml);
    std::mt19937_64 rng(1);
    const auto img = testutil::random_gray(rng, 60, 50);
    const IntegralImage ii(img);
    for (int k = 0; k < 50; ++k) {
        CHECK(eval_window(c, ii, random_window(rng, c, 60, 50)).accept);
    }
}

TEST_CASE("cancelling Haar weights give zero on a constant image") {
    // value 0 sits on the fail side of a 0 threshold and the pass side of a tiny positive one
    const Cascade at_zero = load_cascade(replace_all(kMinimalHaar, "0 -1 0 0.125", "0 -1 0 0."));
    const Cascade above_zero = load_cascade(replace_all(kMinimalHaar, "0 -1 0 0.125", "0 -1 0 1e-12"));
    const IntegralImage ii(GrayImage(80, 60, 173));
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
        const Rect w = random_window(rng, at_zero, 80, 60);
        CHECK(eval_window(at_zero, ii, w).last_stage_sum == 0.75);
        CHECK(eval_window(above_zero, ii, w).last_stage_sum == -0.5);
    }
}

TEST_CASE("mb-lbp bit order is clockwise from the top-left block") {
    GrayImage img(9, 9, 100);
    // brighten only the top-middle block (index 1 of the ring)
    for (int y = 0; y < 3; ++y) {
        for (int x = 3; x < 6; ++x) {
            img.at(x, y) = 200;
        }
    }
    IntegralImage ii(img);
    // every neighbour equals or exceeds the centre
    CHECK(mb_lbp_code(ii, {0, 0, 3, 3}) == 0xFF);
    for (int y = 3; y < 6; ++y) {
        for (int x = 3; x < 6; ++x) {
            img.at(x, y) = 150;  // centre now beats all but the top-middle block
        }
    }
    ii = IntegralImage(img);
    CHECK(mb_lbp_code(ii, {0, 0, 3, 3}) == 0b01000000);
}

TEST_CASE("integral evaluation matches the pixel-loop oracle") {
    std::mt19937_64 rng(21);
    const Cascade haar = load_cascade(fixture::planted_haar_xml());
    const Cascade lbp = load_cascade(fixture::planted_lbp_xml());
    const Cascade real = load_cascade_file(DROWSY_FIXTURE_DIR "/lbpcascade_frontalface.xml");
    for (const Cascade* c : {&haar, &lbp, &real}) {
        for (int trial = 0; trial < 100; ++trial) {
            auto img = testutil::random_gray(rng, 90, 70);
            if (trial % 3 == 0) {
                fixture::plant_checkerboard(img, testutil::uniform_int(rng, 0, 60), testutil::uniform_int(rng, 0, 40));
            } else if (trial % 3 == 1) {
                fixture::plant_block_checker(img, testutil::uniform_int(rng, 0, 60), testutil::uniform_int(rng, 0, 40));
            }
            const IntegralImage ii(img);
            const Rect w = trial % 2 ? random_window(rng, *c, 90, 70)
                                     : Rect{testutil::uniform_int(rng, 0, 66), testutil::uniform_int(rng, 0, 46), 24, 24};
            const auto got = eval_window(*c, ii, w);
            const auto want = oracle::cascade(*c, img, w);
            REQUIRE(got.accept == want.accept);
            REQUIRE(got.rejected_at == want.rejected_at);
            REQUIRE(got.last_stage_sum == want.last_stage_sum);
        }
    }
}

TEST_CASE("rejection is monotone in the number of stages") {
    std::mt19937_64 rng(22);
    const Cascade real = load_cascade_file(DROWSY_FIXTURE_DIR "/lbpcascade_frontalface.xml");
    const auto img = testutil::random_gray(rng, 100, 100);
    const IntegralImage ii(img);
    for (int trial = 0; trial < 200; ++trial) {
        const Rect w = random_window(rng, real, 100, 100);
        const auto full = eval_window(real, ii, w);
        if (full.rejected_at) {
            const auto prefix = eval_window(real, ii, w, *full.rejected_at + 1);
            CHECK(prefix.rejected_at == full.rejected_at);
            CHECK_FALSE(prefix.accept);
        }
    }
}

TEST_CASE("planted patterns are localised") {
    for (int kind = 0; kind < 2; ++kind) {
        const Cascade c = load_cascade(kind == 0 ? fixture::planted_haar_xml() : fixture::planted_lbp_xml());
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            auto img = fixture::noise_scene(160, 120, seed);
            const int px = 20 + static_cast<int>(seed) * 17;
            const int py = 10 + static_cast<int>(seed) * 11;
            if (kind == 0) {
                fixture::plant_checkerboard(img, px, py);
            } else {
                fixture::plant_block_checker(img, px, py);
            }
            // LBP codes survive rescaling, so the ladder stops just above the pattern size
            const DetectParams near{.max_size = 27};
            const auto d = detect_multiscale(c, img, near);
            REQUIRE(d.size() == 1);
            CHECK(std::abs(d[0].rect.x - px) <= 2);
            CHECK(std::abs(d[0].rect.y - py) <= 2);
            CHECK(std::abs(d[0].rect.right() - (px + 24)) <= 2);
            CHECK(std::abs(d[0].rect.bottom() - (py + 24)) <= 2);

            const auto loose = detect_multiscale(c, img, {.max_size = 27, .min_neighbors = 1});
            CHECK(loose.size() >= d.size());
        }
    }
}

TEST_CASE("blank image gives no detections") {
    const Cascade real = load_cascade_file(DROWSY_FIXTURE_DIR "/lbpcascade_frontalface.xml");
    CHECK(detect_multiscale(real, GrayImage(120, 90, 0), {}).empty());
    CHECK(detect_multiscale(load_cascade(fixture::planted_haar_xml()), GrayImage(120, 90, 128), {}).empty());
}

TEST_CASE("parallel and serial scans agree and repeat") {
    const Cascade c = load_cascade(fixture::planted_lbp_xml());
    auto img = fixture::noise_scene(200, 150, 9);
    fixture::plant_block_checker(img, 50, 40);
    fixture::plant_block_checker(img, 120, 90);
    const IntegralImage ii(img);
    const auto a = scan_windows(c, ii, {});
    CHECK(a == scan_windows_serial(c, ii, {}));
    CHECK(a == scan_windows(c, ii, {}));
    CHECK(detect_multiscale(c, ii, {}) == detect_multiscale(c, ii, {}));
}

TEST_CASE("grouping examples") {
    const Rect r{10, 10, 30, 30};
    auto g = group_detections(std::vector<Rect>{r, r, r}, 3);
    REQUIRE(g.size() == 1);
    CHECK(g[0].neighbors == 3);
    CHECK(g[0].rect == r);

    g = group_detections(std::vector<Rect>{{0, 0, 20, 20}, {100, 100, 20, 20}}, 1);
    CHECK(g.size() == 2);

    const std::vector<Rect> jittered{{10, 10, 30, 30}, {11, 10, 30, 30}, {9, 11, 30, 30}, {10, 9, 31, 30},
                                     {11, 11, 29, 30}};
    g = group_detections(jittered, 3);
    REQUIRE(g.size() == 1);
    CHECK(g[0].neighbors == 5);
    // means: x 51/5, y 51/5, w 150/5, h 150/5
    CHECK(g[0].rect == Rect{10, 10, 30, 30});
    CHECK(group_detections(jittered, 6).empty());
}

TEST_CASE("grouping never grows and stays inside member hulls") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Rect> raw;
        const int n = testutil::uniform_int(rng, 0, 40);
        for (int i = 0; i < n; ++i) {
            raw.push_back({testutil::uniform_int(rng, 0, 100), testutil::uniform_int(rng, 0, 100),
                           testutil::uniform_int(rng, 10, 40), testutil::uniform_int(rng, 10, 40)});
        }
        const auto g = group_detections(raw, 1);
        CHECK(g.size() <= raw.size());
        for (const auto& d : g) {
            CHECK(d.neighbors >= 1);
            // the average of a cluster lies inside the bounding range of all members
            const auto [x0, x1] = std::minmax_element(raw.begin(), raw.end(), [](auto& a, auto& b) { return a.x < b.x; });
            const auto [w0, w1] = std::minmax_element(raw.begin(), raw.end(), [](auto& a, auto& b) { return a.w < b.w; });
            CHECK(d.rect.x >= x0->x);
            CHECK(d.rect.x <= x1->x);
            CHECK(d.rect.w >= w0->w);
            CHECK(d.rect.w <= w1->w);
        }
    }
}

TEST_CASE("eye regions") {
    const auto rois = eye_rois({0, 0, 100, 100});
    CHECK(rois.left == Rect{10, 18, 40, 37});
    CHECK(rois.right == Rect{50, 18, 40, 37});
    CHECK(rois.left.right() <= rois.right.x + 1);

    const auto tiny = eye_rois({5, 5, 20, 20});
    CHECK(tiny.left.w >= 4);
    CHECK(tiny.right.w >= 4);

    const auto clipped = eye_rois({-20, -30, 100, 100}, 60, 60);
    CHECK(fits(clipped.left, 60, 60));
}

TEST_CASE("scale factor must exceed one") {
    const Cascade c = load_cascade(fixture::planted_haar_xml());
    CHECK_THROWS_AS(detect_multiscale(c, GrayImage(40, 40), {.scale_factor = 1.0}), DomainError);
}

}
