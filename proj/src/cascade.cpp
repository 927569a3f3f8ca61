#include "drowsy/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace drowsy {

namespace pt = boost::property_tree;

// ---------------------------------------------------------------------------
// Loading

namespace {

[[noreturn]] void load_fail(const std::string& path, const std::string& what) {
    throw LoadError("cascade: " + path + ": " + what);
}

std::vector<std::string> tokens(const std::string& text) {
    std::istringstream is(text);
    std::vector<std::string> out;
    for (std::string t; is >> t;) {
        out.push_back(t);
    }
    return out;
}

double to_double(const std::string& tok, const std::string& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) {
            load_fail(path, "malformed number '" + tok + "'");
        }
        return v;
    } catch (const std::logic_error&) {
        load_fail(path, "malformed number '" + tok + "'");
    }
}

long long to_integer(const std::string& tok, const std::string& path) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(tok, &used);
        if (used != tok.size()) {
            load_fail(path, "malformed integer '" + tok + "'");
        }
        return v;
    } catch (const std::logic_error&) {
        load_fail(path, "malformed integer '" + tok + "'");
    }
}

const pt::ptree& child(const pt::ptree& node, const std::string& name, const std::string& path) {
    const auto it = node.find(name);
    if (it == node.not_found()) {
        load_fail(path, "missing element <" + name + ">");
    }
    return it->second;
}

std::string text_of(const pt::ptree& node, const std::string& name, const std::string& path) {
    return child(node, name, path).get_value<std::string>();
}

std::vector<const pt::ptree*> items(const pt::ptree& node) {
    std::vector<const pt::ptree*> out;
    for (const auto& [key, value] : node) {
        if (key == "_") {
            out.push_back(&value);
        }
    }
    return out;
}

Rect parse_rect(const std::vector<std::string>& t, const std::string& path) {
    return {static_cast<int>(to_integer(t[0], path)), static_cast<int>(to_integer(t[1], path)),
            static_cast<int>(to_integer(t[2], path)), static_cast<int>(to_integer(t[3], path))};
}

struct RawNode {
    int feature = 0;
    double threshold = 0.0;
    std::array<std::uint32_t, 8> subset{};
    double leaf_pass = 0.0;
    double leaf_fail = 0.0;
};

RawNode parse_weak(const pt::ptree& weak, FeatureKind kind, const std::string& path) {
    const auto nodes = tokens(text_of(weak, "internalNodes", path));
    const auto leaves = tokens(text_of(weak, "leafValues", path));
    const std::size_t expected = kind == FeatureKind::haar ? 4 : 11;
    if (nodes.size() != expected) {
        load_fail(path + "/internalNodes", "expected " + std::to_string(expected) + " values for a " +
                                               (kind == FeatureKind::haar ? "HAAR" : "LBP") +
                                               " stump, found " + std::to_string(nodes.size()) +
                                               " (only single-split weak classifiers are supported)");
    }
    if (leaves.size() != 2) {
        load_fail(path + "/leafValues", "expected 2 leaf values, found " + std::to_string(leaves.size()));
    }
    const long long left = to_integer(nodes[0], path);
    const long long right = to_integer(nodes[1], path);
    if (left > 0 || right > 0 || -left > 1 || -right > 1) {
        load_fail(path + "/internalNodes", "node children must reference leaves 0 or 1");
    }
    RawNode n;
    n.feature = static_cast<int>(to_integer(nodes[2], path));
    if (kind == FeatureKind::haar) {
        n.threshold = to_double(nodes[3], path);
    } else {
        for (int i = 0; i < 8; ++i) {
            n.subset[static_cast<std::size_t>(i)] =
                static_cast<std::uint32_t>(static_cast<std::int32_t>(to_integer(nodes[3 + static_cast<std::size_t>(i)], path)));
        }
    }
    n.leaf_pass = to_double(leaves[static_cast<std::size_t>(-left)], path);
    n.leaf_fail = to_double(leaves[static_cast<std::size_t>(-right)], path);
    return n;
}

HaarFeature parse_haar_feature(const pt::ptree& f, int base_w, int base_h, const std::string& path) {
    if (const auto tilted = f.get_optional<int>("tilted"); tilted && *tilted != 0) {
        load_fail(path + "/tilted", "tilted Haar features are not supported");
    }
    HaarFeature feat;
    const auto& rects = child(f, "rects", path);
    for (const auto* r : items(rects)) {
        const std::string rpath = path + "/rects/_";
        const auto t = tokens(r->get_value<std::string>());
        if (t.size() != 5) {
            load_fail(rpath, "Haar rect needs 'x y w h weight', found " + std::to_string(t.size()) + " values");
        }
        WeightedRect wr{parse_rect(t, rpath), to_double(t[4], rpath)};
        if (!fits(wr.rect, base_w, base_h)) {
            load_fail(rpath, "rect does not fit the base window");
        }
        feat.rects.push_back(wr);
    }
    if (feat.rects.size() < 2 || feat.rects.size() > 3) {
        load_fail(path + "/rects", "Haar feature needs 2 or 3 rects, found " + std::to_string(feat.rects.size()));
    }
    return feat;
}

LbpFeature parse_lbp_feature(const pt::ptree& f, int base_w, int base_h, const std::string& path) {
    std::string text;
    std::string rpath;
    if (const auto r = f.get_child_optional("rect")) {
        text = r->get_value<std::string>();
        rpath = path + "/rect";
    } else if (const auto rs = f.get_child_optional("rects")) {
        const auto list = items(*rs);
        if (list.size() != 1) {
            load_fail(path + "/rects", "LBP feature needs exactly one rect, found " + std::to_string(list.size()));
        }
        text = list.front()->get_value<std::string>();
        rpath = path + "/rects/_";
    } else {
        load_fail(path, "missing element <rect>");
    }
    const auto t = tokens(text);
    if (t.size() != 4) {
        load_fail(rpath, "LBP rect needs 'x y w h', found " + std::to_string(t.size()) + " values");
    }
    LbpFeature feat{parse_rect(t, rpath)};
    const Rect grid{feat.block.x, feat.block.y, 3 * feat.block.w, 3 * feat.block.h};
    if (!fits(grid, base_w, base_h)) {
        load_fail(rpath, "3x3 block grid does not fit the base window");
    }
    return feat;
}

const pt::ptree& find_cascade(const pt::ptree& doc) {
    if (const auto c = doc.get_child_optional("opencv_storage.cascade")) {
        return *c;
    }
    if (const auto c = doc.get_child_optional("cascade")) {
        return *c;
    }
    load_fail("/", "no <cascade> element (old-style haar layouts are not supported)");
}

} // namespace

Cascade load_cascade(std::string_view xml) {
    pt::ptree doc;
    try {
        std::istringstream is{std::string(xml)};
        pt::read_xml(is, doc, pt::xml_parser::trim_whitespace | pt::xml_parser::no_comments);
    } catch (const pt::xml_parser_error& e) {
        throw LoadError(std::string("cascade: malformed XML: ") + e.what());
    }
    const auto& root = find_cascade(doc);
    const std::string base = "cascade";

    Cascade c;
    const auto stage_type = text_of(root, "stageType", base);
    if (stage_type != "BOOST") {
        load_fail(base + "/stageType", "unsupported stage type '" + stage_type + "'");
    }
    const auto feature_type = text_of(root, "featureType", base);
    if (feature_type == "HAAR") {
        c.kind = FeatureKind::haar;
    } else if (feature_type == "LBP") {
        c.kind = FeatureKind::lbp;
    } else {
        load_fail(base + "/featureType", "unknown feature type '" + feature_type + "'");
    }
    c.base_w = static_cast<int>(to_integer(text_of(root, "width", base), base + "/width"));
    c.base_h = static_cast<int>(to_integer(text_of(root, "height", base), base + "/height"));
    if (c.base_w < 1 || c.base_h < 1) {
        load_fail(base, "base window must be positive");
    }

    std::vector<HaarFeature> haar_table;
    std::vector<LbpFeature> lbp_table;
    const auto feats = items(child(root, "features", base));
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const std::string fpath = base + "/features/_[" + std::to_string(i) + "]";
        if (c.kind == FeatureKind::haar) {
            haar_table.push_back(parse_haar_feature(*feats[i], c.base_w, c.base_h, fpath));
        } else {
            lbp_table.push_back(parse_lbp_feature(*feats[i], c.base_w, c.base_h, fpath));
        }
    }

    const auto stages = items(child(root, "stages", base));
    if (const auto declared = root.get_optional<int>("stageNum");
        declared && static_cast<std::size_t>(*declared) != stages.size()) {
        load_fail(base + "/stageNum", "declares " + std::to_string(*declared) + " stages, found " +
                                          std::to_string(stages.size()));
    }
    if (stages.empty()) {
        load_fail(base + "/stages", "cascade has no stages");
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const std::string spath = base + "/stages/_[" + std::to_string(s) + "]";
        Stage stage;
        stage.threshold = to_double(text_of(*stages[s], "stageThreshold", spath), spath + "/stageThreshold");
        const auto weaks = items(child(*stages[s], "weakClassifiers", spath));
        if (weaks.empty()) {
            load_fail(spath + "/weakClassifiers", "stage has no weak classifiers");
        }
        for (std::size_t k = 0; k < weaks.size(); ++k) {
            const std::string wpath = spath + "/weakClassifiers/_[" + std::to_string(k) + "]";
            const RawNode n = parse_weak(*weaks[k], c.kind, wpath);
            const std::size_t table = c.kind == FeatureKind::haar ? haar_table.size() : lbp_table.size();
            if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= table) {
                load_fail(wpath + "/internalNodes", "dangling feature index " + std::to_string(n.feature) +
                                                        " (table has " + std::to_string(table) + ")");
            }
            if (c.kind == FeatureKind::haar) {
                stage.weak.emplace_back(HaarWeak{haar_table[static_cast<std::size_t>(n.feature)], n.threshold,
                                                 n.leaf_pass, n.leaf_fail});
            } else {
                stage.weak.emplace_back(
                    LbpWeak{lbp_table[static_cast<std::size_t>(n.feature)], n.subset, n.leaf_pass, n.leaf_fail});
            }
        }
        if (const auto declared = stages[s]->get_optional<int>("maxWeakCount");
            declared && static_cast<std::size_t>(*declared) != weaks.size()) {
            load_fail(spath + "/maxWeakCount", "declares " + std::to_string(*declared) + " weak classifiers, found " +
                                                   std::to_string(weaks.size()));
        }
        c.stages.push_back(std::move(stage));
    }
    return c;
}

Cascade load_cascade_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cascade: cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        Cascade c = load_cascade(ss.str());
        c.identity = path.filename().string();
        return c;
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Evaluation

Rect scale_rect(const Rect& r, double scale) {
    return {static_cast<int>(std::lround(r.x * scale)), static_cast<int>(std::lround(r.y * scale)),
            std::max(1, static_cast<int>(std::lround(r.w * scale))),
            std::max(1, static_cast<int>(std::lround(r.h * scale)))};
}

unsigned mb_lbp_code(const IntegralImage& ii, const Rect& b) {
    const auto block = [&](int gx, int gy) { return ii.rect_sum_unchecked(b.x + gx * b.w, b.y + gy * b.h, b.w, b.h); };
    const std::int64_t c = block(1, 1);
    return (block(0, 0) >= c ? 128u : 0u) | (block(1, 0) >= c ? 64u : 0u) | (block(2, 0) >= c ? 32u : 0u) |
           (block(2, 1) >= c ? 16u : 0u) | (block(2, 2) >= c ? 8u : 0u) | (block(1, 2) >= c ? 4u : 0u) |
           (block(0, 2) >= c ? 2u : 0u) | (block(0, 1) >= c ? 1u : 0u);
}

namespace {

// Cascade with feature geometry pre-scaled to one window size.
struct ScaledWeak {
    std::array<WeightedRect, 3> rects{};
    int rect_count = 0;
    bool balanced = false;  // weighted areas cancel in the base window
    Rect block;
    const HaarWeak* haar = nullptr;
    const LbpWeak* lbp = nullptr;
};

struct ScaledCascade {
    int win_w = 0;
    int win_h = 0;
    double inv_area = 0.0;
    std::vector<std::vector<ScaledWeak>> stages;
};

ScaledCascade prepare(const Cascade& c, int win_w, int win_h) {
    ScaledCascade sc;
    sc.win_w = win_w;
    sc.win_h = win_h;
    sc.inv_area = 1.0 / (static_cast<double>(win_w) * win_h);
    const double s = static_cast<double>(win_w) / c.base_w;
    for (const auto& stage : c.stages) {
        auto& out = sc.stages.emplace_back();
        for (const auto& weak : stage.weak) {
            ScaledWeak sw;
            if (const auto* h = std::get_if<HaarWeak>(&weak)) {
                sw.haar = h;
                double base_balance = 0.0;
                for (const auto& wr : h->feature.rects) {
                    base_balance += wr.weight * static_cast<double>(wr.rect.area());
                }
                sw.balanced = base_balance == 0.0;
                for (const auto& wr : h->feature.rects) {
                    Rect r = scale_rect(wr.rect, s);
                    r.x = std::min(r.x, win_w - 1);
                    r.y = std::min(r.y, win_h - 1);
                    r.w = std::min(r.w, win_w - r.x);
                    r.h = std::min(r.h, win_h - r.y);
                    sw.rects[static_cast<std::size_t>(sw.rect_count++)] = {r, wr.weight};
                }
            } else {
                const auto* l = std::get_if<LbpWeak>(&weak);
                sw.lbp = l;
                Rect b = scale_rect(l->feature.block, s);
                b.x = std::min(b.x, win_w - 3);
                b.y = std::min(b.y, win_h - 3);
                b.w = std::max(1, std::min(b.w, (win_w - b.x) / 3));
                b.h = std::max(1, std::min(b.h, (win_h - b.y) / 3));
                sw.block = b;
            }
            out.push_back(sw);
        }
    }
    return sc;
}

WindowVerdict eval_prepared(const Cascade& c, const ScaledCascade& sc, const IntegralImage& ii, int x, int y,
                            int stage_count) {
    double inv_sigma = 1.0;
    if (c.kind == FeatureKind::haar) {
        const double mean = ii.rect_sum_unchecked(x, y, sc.win_w, sc.win_h) * sc.inv_area;
        const double var = ii.rect_sq_sum_unchecked(x, y, sc.win_w, sc.win_h) * sc.inv_area - mean * mean;
        inv_sigma = 1.0 / std::max(1.0, std::sqrt(std::max(0.0, var)));
    }
    WindowVerdict v;
    for (int s = 0; s < stage_count; ++s) {
        double sum = 0.0;
        for (const auto& w : sc.stages[static_cast<std::size_t>(s)]) {
            if (w.haar != nullptr) {
                const auto rsum = [&](const Rect& r) {
                    return static_cast<double>(ii.rect_sum_unchecked(x + r.x, y + r.y, r.w, r.h));
                };
                double value = 0.0;
                if (w.balanced) {
                    // Rounded scaled rects no longer cancel exactly; measure the other
                    // rects against the first one's mean so flat regions still give 0.
                    const Rect& r0 = w.rects[0].rect;
                    const double mean0 = rsum(r0) / static_cast<double>(r0.area());
                    for (int k = 1; k < w.rect_count; ++k) {
                        const auto& r = w.rects[static_cast<std::size_t>(k)];
                        value += r.weight * (rsum(r.rect) - static_cast<double>(r.rect.area()) * mean0);
                    }
                } else {
                    for (int k = 0; k < w.rect_count; ++k) {
                        const auto& r = w.rects[static_cast<std::size_t>(k)];
                        value += r.weight * rsum(r.rect);
                    }
                }
                sum += value * inv_sigma * sc.inv_area < w.haar->threshold ? w.haar->leaf_pass : w.haar->leaf_fail;
            } else {
                const unsigned code = mb_lbp_code(ii, {x + w.block.x, y + w.block.y, w.block.w, w.block.h});
                sum += w.lbp->contains(code) ? w.lbp->leaf_in : w.lbp->leaf_out;
            }
        }
        v.last_stage_sum = sum;
        if (sum < c.stages[static_cast<std::size_t>(s)].threshold) {
            v.rejected_at = s;
            return v;
        }
    }
    v.accept = true;
    return v;
}

struct ScaleLevel {
    int win_w;
    int win_h;
    int stride;
};

std::vector<ScaleLevel> scale_ladder(const Cascade& c, int img_w, int img_h, const DetectParams& p) {
    if (!(p.scale_factor > 1.0)) {
        throw DomainError("detect_multiscale: scale_factor must exceed 1");
    }
    std::vector<ScaleLevel> levels;
    for (double s = 1.0;; s *= p.scale_factor) {
        const int w = static_cast<int>(std::lround(c.base_w * s));
        const int h = static_cast<int>(std::lround(c.base_h * s));
        if (w > img_w || h > img_h || (p.max_size > 0 && w > p.max_size)) {
            break;
        }
        if (w < std::max(p.min_size, c.base_w)) {
            continue;
        }
        if (!levels.empty() && levels.back().win_w == w && levels.back().win_h == h) {
            continue;
        }
        levels.push_back({w, h, std::max(1, static_cast<int>(std::lround(p.step * s)))});
    }
    return levels;
}

std::vector<Detection> scan_row(const Cascade& c, const ScaledCascade& sc, const IntegralImage& ii, int y,
                                int stride) {
    std::vector<Detection> hits;
    const int stages = static_cast<int>(c.stages.size());
    for (int x = 0; x + sc.win_w <= ii.width(); x += stride) {
        const auto v = eval_prepared(c, sc, ii, x, y, stages);
        if (v.accept) {
            hits.push_back({{x, y, sc.win_w, sc.win_h}, 1, v.last_stage_sum});
        }
    }
    return hits;
}

std::vector<Detection> scan_impl(const Cascade& c, const IntegralImage& ii, const DetectParams& p, bool parallel) {
    std::vector<Detection> out;
    for (const auto& level : scale_ladder(c, ii.width(), ii.height(), p)) {
        const ScaledCascade sc = prepare(c, level.win_w, level.win_h);
        const int rows = (ii.height() - level.win_h) / level.stride + 1;
        std::vector<std::vector<Detection>> per_row(static_cast<std::size_t>(rows));
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
        for (int r = 0; r < rows; ++r) {
            per_row[static_cast<std::size_t>(r)] = scan_row(c, sc, ii, r * level.stride, level.stride);
        }
        for (auto& row : per_row) {
            out.insert(out.end(), row.begin(), row.end());
        }
    }
    return out;
}

} // namespace

WindowVerdict eval_window(const Cascade& c, const IntegralImage& ii, const Rect& window, int stage_count) {
    if (!fits(window, ii.width(), ii.height())) {
        throw BoundsError("eval_window: window outside image");
    }
    stage_count = std::clamp(stage_count, 0, static_cast<int>(c.stages.size()));
    const ScaledCascade sc = prepare(c, window.w, window.h);
    return eval_prepared(c, sc, ii, window.x, window.y, stage_count);
}

WindowVerdict eval_window(const Cascade& c, const IntegralImage& ii, const Rect& window) {
    return eval_window(c, ii, window, static_cast<int>(c.stages.size()));
}

std::vector<Detection> scan_windows(const Cascade& c, const IntegralImage& ii, const DetectParams& p) {
    return scan_impl(c, ii, p, true);
}

std::vector<Detection> scan_windows_serial(const Cascade& c, const IntegralImage& ii, const DetectParams& p) {
    return scan_impl(c, ii, p, false);
}

std::vector<Detection> detect_multiscale(const Cascade& c, const IntegralImage& ii, const DetectParams& p) {
    return group_detections(scan_windows(c, ii, p), p.min_neighbors, p.group_eps);
}

std::vector<Detection> detect_multiscale(const Cascade& c, const GrayImage& img, const DetectParams& p) {
    return detect_multiscale(c, IntegralImage(img), p);
}

// ---------------------------------------------------------------------------
// Grouping

namespace {

int find_root(std::vector<int>& parent, int i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
        parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
        i = parent[static_cast<std::size_t>(i)];
    }
    return i;
}

bool similar(const Rect& a, const Rect& b, double eps) {
    const double delta = eps * (a.w + b.w + a.h + b.h) / 4.0;
    return std::abs(a.x - b.x) <= delta && std::abs(a.y - b.y) <= delta && std::abs(a.right() - b.right()) <= delta &&
           std::abs(a.bottom() - b.bottom()) <= delta;
}

} // namespace

std::vector<Detection> group_detections(const std::vector<Detection>& raw, int min_neighbors, double eps) {
    if (eps < 0.0) {
        throw DomainError("group_detections: eps must be nonnegative");
    }
    const int n = static_cast<int>(raw.size());
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (similar(raw[static_cast<std::size_t>(i)].rect, raw[static_cast<std::size_t>(j)].rect, eps)) {
                const int a = find_root(parent, i);
                const int b = find_root(parent, j);
                if (a != b) {
                    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
                }
            }
        }
    }
    struct Acc {
        double x = 0, y = 0, w = 0, h = 0, best = -1e300;
        int count = 0;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& a = acc[static_cast<std::size_t>(find_root(parent, i))];
        const auto& d = raw[static_cast<std::size_t>(i)];
        a.x += d.rect.x;
        a.y += d.rect.y;
        a.w += d.rect.w;
        a.h += d.rect.h;
        a.best = std::max(a.best, d.score);
        ++a.count;
    }
    std::vector<Detection> out;
    for (const auto& a : acc) {
        if (a.count == 0 || a.count < std::max(1, min_neighbors)) {
            continue;
        }
        const auto avg = [&](double v) { return static_cast<int>(std::lround(v / a.count)); };
        out.push_back({{avg(a.x), avg(a.y), avg(a.w), avg(a.h)}, a.count, a.best});
    }
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        return std::tie(a.rect.x, a.rect.y, a.rect.w, a.rect.h) < std::tie(b.rect.x, b.rect.y, b.rect.w, b.rect.h);
    });
    return out;
}

std::vector<Detection> group_detections(const std::vector<Rect>& raw, int min_neighbors, double eps) {
    std::vector<Detection> d;
    d.reserve(raw.size());
    for (const auto& r : raw) {
        d.push_back({r, 1, 0.0});
    }
    return group_detections(d, min_neighbors, eps);
}

EyeRois eye_rois(const Rect& face, int image_w, int image_h, const EyeRoiConfig& cfg) {
    const auto at = [](int origin, int extent, double f) { return origin + static_cast<int>(std::lround(f * extent)); };
    const auto span = [&](double x0, double x1) {
        const int a = at(face.x, face.w, x0);
        const int b = at(face.x, face.w, x1);
        const int top = at(face.y, face.h, cfg.y0);
        const int bottom = at(face.y, face.h, cfg.y1);
        return Rect{a, top, b - a, bottom - top};
    };
    EyeRois rois{span(cfg.left_x0, cfg.left_x1), span(cfg.right_x0, cfg.right_x1)};
    if (image_w > 0 && image_h > 0) {
        rois.left = clip(rois.left, image_w, image_h);
        rois.right = clip(rois.right, image_w, image_h);
    }
    return rois;
}

} // namespace drowsy
