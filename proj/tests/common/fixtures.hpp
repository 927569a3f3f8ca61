#pragma once

// Small handcrafted cascades and planted-pattern scenes.

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "drowsy/raster.hpp"

namespace fixture {

struct HaarStump {
    std::vector<std::string> rects;  // "x y w h weight"
    double threshold;
};

inline std::string haar_xml(int w, int h, const std::vector<HaarStump>& stages, const std::string& type = "HAAR") {
    std::ostringstream o;
    o << "<?xml version=\"1.0\"?>\n<opencv_storage>\n<cascade>\n<stageType>BOOST</stageType>\n<featureType>" << type
      << "</featureType>\n<height>" << h << "</height>\n<width>" << w << "</width>\n<stageNum>" << stages.size()
      << "</stageNum>\n<stages>\n";
    for (std::size_t i = 0; i < stages.size(); ++i) {
        o << "<_><maxWeakCount>1</maxWeakCount><stageThreshold>0.5</stageThreshold><weakClassifiers>"
          << "<_><internalNodes>0 -1 " << i << " " << stages[i].threshold
          << "</internalNodes><leafValues>1. 0.</leafValues></_></weakClassifiers></_>\n";
    }
    o << "</stages>\n<features>\n";
    for (const auto& s : stages) {
        o << "<_><rects>";
        for (const auto& r : s.rects) {
            o << "<_>" << r << "</_>";
        }
        o << "</rects><tilted>0</tilted></_>\n";
    }
    o << "</features>\n</cascade>\n</opencv_storage>\n";
    return o.str();
}

/// LBP stumps accepting exactly one code each.
inline std::string lbp_xml(int w, int h, const std::vector<std::pair<std::string, unsigned>>& blocks) {
    std::ostringstream o;
    o << "<?xml version=\"1.0\"?>\n<opencv_storage>\n<cascade>\n<stageType>BOOST</stageType>\n<featureType>LBP"
      << "</featureType>\n<height>" << h << "</height>\n<width>" << w << "</width>\n<stageNum>" << blocks.size()
      << "</stageNum>\n<stages>\n";
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        std::uint32_t words[8] = {};
        const unsigned code = blocks[i].second;
        words[code >> 5] |= 1u << (code & 31);
        o << "<_><maxWeakCount>1</maxWeakCount><stageThreshold>0.5</stageThreshold><weakClassifiers>"
          << "<_><internalNodes>0 -1 " << i;
        for (auto wd : words) {
            o << " " << static_cast<std::int32_t>(wd);
        }
        o << "</internalNodes><leafValues>1. 0.</leafValues></_></weakClassifiers></_>\n";
    }
    o << "</stages>\n<features>\n";
    for (const auto& b : blocks) {
        o << "<_><rect>" << b.first << "</rect></_>\n";
    }
    o << "</features>\n</cascade>\n</opencv_storage>\n";
    return o.str();
}

/// Diagonal checkerboard detector: strong TL+BR vs TR+BL contrast, balanced
/// left and right halves.
inline std::string planted_haar_xml() {
    return haar_xml(24, 24,
                    {{{"0 0 24 24 -1.", "0 0 12 12 2.", "12 12 12 12 2."}, -0.7},
                     {{"0 0 24 24 -1.", "0 0 12 24 2."}, 0.3}});
}

/// Bright centre block inside a dark frame, at two block sizes.
inline std::string planted_lbp_xml() { return lbp_xml(24, 24, {{"0 0 8 8", 170u}, {"4 4 4 4", 156u}}); }

inline drowsy::GrayImage noise_scene(int w, int h, std::uint64_t seed, int lo = 90, int hi = 160) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(lo, hi);
    drowsy::GrayImage img(w, h);
    for (auto& v : img.data()) {
        v = static_cast<std::uint8_t>(d(rng));
    }
    return img;
}

inline void plant_checkerboard(drowsy::GrayImage& img, int x0, int y0) {
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 24; ++x) {
            const bool dark = (x < 12) == (y < 12);
            img.at(x0 + x, y0 + y) = dark ? 30 : 220;
        }
    }
}

// 3x3 grid of 8 px blocks, bright corners and centre, dark edges
inline void plant_block_checker(drowsy::GrayImage& img, int x0, int y0) {
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 24; ++x) {
            const bool bright = (x / 8 + y / 8) % 2 == 0;
            img.at(x0 + x, y0 + y) = bright ? 220 : 30;
        }
    }
}

} // namespace fixture
