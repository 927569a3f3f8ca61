#include "drowsy/classify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace drowsy {

std::string_view to_string(EyeState s) { return s == EyeState::closed ? "closed" : "open"; }

namespace {

void check_dims(const SvmModel& m, const FeatureVector& x) {
    if (x.dim() != m.dim()) {
        throw DimensionError("svm: model dim " + std::to_string(m.dim()) + " but feature dim " +
                             std::to_string(x.dim()));
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

} // namespace

double score(const SvmModel& m, const FeatureVector& x) {
    check_dims(m, x);
    return dot(m.weights, x.values) + m.bias;
}

EyeState predict(const SvmModel& m, const FeatureVector& x, double threshold) {
    return score(m, x) >= threshold ? EyeState::closed : EyeState::open;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct ClassWeights {
    double positive = 1.0;
    double negative = 1.0;
};

ClassWeights class_weights(const std::vector<LabeledSample>& data, bool balance) {
    const auto pos = static_cast<double>(std::count_if(data.begin(), data.end(),
                                                       [](const auto& s) { return s.label == EyeState::closed; }));
    const double neg = static_cast<double>(data.size()) - pos;
    if (pos == 0.0 || neg == 0.0) {
        throw TrainingError("svm: training data must contain both open and closed samples");
    }
    if (!balance) {
        return {};
    }
    const double n = static_cast<double>(data.size());
    return {n / (2.0 * pos), n / (2.0 * neg)};
}

double weighted_objective(const std::vector<double>& w, double b, const std::vector<LabeledSample>& data, double lambda,
                          const ClassWeights& cw) {
    double loss = 0.0;
    for (const auto& s : data) {
        const double y = label_sign(s.label);
        const double c = s.label == EyeState::closed ? cw.positive : cw.negative;
        loss += c * std::max(0.0, 1.0 - y * (dot(w, s.features.values) + b));
    }
    return 0.5 * lambda * dot(w, w) + loss / static_cast<double>(data.size());
}

} // namespace

double objective(const SvmModel& m, const std::vector<LabeledSample>& data, double lambda) {
    double loss = 0.0;
    for (const auto& s : data) {
        loss += std::max(0.0, 1.0 - label_sign(s.label) * score(m, s.features));
    }
    return 0.5 * lambda * dot(m.weights, m.weights) + loss / static_cast<double>(data.size());
}

SvmModel train(const std::vector<LabeledSample>& data, const TrainParams& params) {
    if (data.empty()) {
        throw TrainingError("svm: empty training set");
    }
    if (!(params.lambda > 0.0) || params.epochs < 1) {
        throw TrainingError("svm: lambda must be positive and epochs >= 1");
    }
    const int dim = data.front().features.dim();
    const DescriptorKind kind = data.front().features.kind;
    for (const auto& s : data) {
        if (s.features.dim() != dim) {
            throw DimensionError("svm: inconsistent feature dims " + std::to_string(dim) + " and " +
                                 std::to_string(s.features.dim()));
        }
    }
    const ClassWeights cw = class_weights(data, params.balance_classes);

    SvmModel m;
    m.kind = kind;
    m.weights.assign(static_cast<std::size_t>(dim), 0.0);
    m.trained_on = data.size();

    std::mt19937_64 rng(params.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    const double radius = 1.0 / std::sqrt(params.lambda);
    double t = 0.0;
    // The returned model is the best epoch-end iterate, so more epochs never
    // give a worse objective.
    std::vector<double> best_w;
    double best_b = 0.0;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        // Fisher-Yates with raw engine output keeps the order platform independent.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
        }
        for (const std::size_t idx : order) {
            t += 1.0;
            const auto& s = data[idx];
            const double y = label_sign(s.label);
            const double c = s.label == EyeState::closed ? cw.positive : cw.negative;
            const double eta = 1.0 / (params.lambda * t);
            const double margin = y * (dot(m.weights, s.features.values) + m.bias);
            const double shrink = 1.0 - eta * params.lambda;
            for (double& w : m.weights) {
                w *= shrink;
            }
            if (margin < 1.0) {
                const double step = eta * c * y;
                for (std::size_t k = 0; k < m.weights.size(); ++k) {
                    m.weights[k] += step * s.features.values[k];
                }
                m.bias += step;
            }
            const double norm = std::sqrt(dot(m.weights, m.weights));
            if (norm > radius) {
                for (double& w : m.weights) {
                    w *= radius / norm;
                }
            }
        }
        const double obj = weighted_objective(m.weights, m.bias, data, params.lambda, cw);
        if (obj < best_obj) {
            best_obj = obj;
            best_w = m.weights;
            best_b = m.bias;
        }
    }
    m.weights = std::move(best_w);
    m.bias = best_b;
    std::ostringstream lam;
    lam.precision(17);
    lam << params.lambda;
    m.metadata["lambda"] = lam.str();
    m.metadata["epochs"] = std::to_string(params.epochs);
    m.metadata["seed"] = std::to_string(params.seed);
    m.metadata["trained_on"] = std::to_string(data.size());
    return m;
}

// ---------------------------------------------------------------------------
// ROC

RocCurve roc_from_scores(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) {
        throw DimensionError("roc: score and label counts differ");
    }
    const auto pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
    const double neg = static_cast<double>(positive.size()) - pos;
    if (pos == 0.0 || neg == 0.0) {
        throw EvaluationError("roc: evaluation data must contain both open and closed samples");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    constexpr double inf = std::numeric_limits<double>::infinity();
    RocCurve curve;
    curve.points.push_back({inf, 0.0, 0.0});
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (positive[order[i]] ? tp : fp) += 1.0;
            ++i;
        }
        curve.points.push_back({s, fp / neg, tp / pos});
    }
    curve.points.push_back({-inf, 1.0, 1.0});
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return curve;
}

RocCurve roc(const SvmModel& m, const std::vector<LabeledSample>& data) {
    std::vector<double> scores;
    std::vector<bool> positive;
    scores.reserve(data.size());
    positive.reserve(data.size());
    for (const auto& s : data) {
        scores.push_back(score(m, s.features));
        positive.push_back(s.label == EyeState::closed);
    }
    return roc_from_scores(scores, positive);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

std::string exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

[[noreturn]] void model_fail(int line, const std::string& what) {
    throw LoadError("model: line " + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& tok, int line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        model_fail(line, "malformed number '" + tok + "'");
    }
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string t; is >> t;) {
        out.push_back(t);
    }
    return out;
}

} // namespace

void save_model(std::ostream& out, const SvmModel& m) {
    out << "LSVM 1\n";
    out << "kind " << to_string(m.kind) << "\n";
    out << "dim " << m.dim() << "\n";
    out << "bias " << exact(m.bias) << "\n";
    out << "weights";
    for (double w : m.weights) {
        out << ' ' << exact(w);
    }
    out << "\n";
    for (const auto& [k, v] : m.metadata) {
        out << "# " << k << "=" << v << "\n";
    }
}

void save_model(const std::filesystem::path& path, const SvmModel& m) {
    std::ofstream out(path);
    if (!out) {
        throw LoadError("model: cannot write " + path.string());
    }
    save_model(out, m);
}

SvmModel load_model(std::istream& in) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    const auto field = [&](int idx, const char* key) {
        if (static_cast<std::size_t>(idx) >= lines.size()) {
            model_fail(idx + 1, std::string("truncated file, missing '") + key + "'");
        }
        auto toks = split(lines[static_cast<std::size_t>(idx)]);
        if (toks.empty() || toks.front() != key) {
            model_fail(idx + 1, std::string("expected '") + key + "'");
        }
        toks.erase(toks.begin());
        return toks;
    };
    if (lines.empty() || split(lines[0]) != std::vector<std::string>{"LSVM", "1"}) {
        model_fail(1, "bad magic (expected 'LSVM 1')");
    }
    SvmModel m;
    const auto kind = field(1, "kind");
    if (kind.size() != 1) {
        model_fail(2, "expected one kind token");
    }
    try {
        m.kind = parse_descriptor_kind(kind[0]);
    } catch (const DomainError& e) {
        model_fail(2, e.what());
    }
    const auto dim = field(2, "dim");
    if (dim.size() != 1) {
        model_fail(3, "expected one dim token");
    }
    const double d = parse_number(dim[0], 3);
    if (d != std::floor(d) || d < 1) {
        model_fail(3, "dim must be a positive integer");
    }
    const auto bias = field(3, "bias");
    if (bias.size() != 1) {
        model_fail(4, "expected one bias token");
    }
    m.bias = parse_number(bias[0], 4);
    const auto weights = field(4, "weights");
    if (weights.size() != static_cast<std::size_t>(d)) {
        model_fail(5, "dim header says " + dim[0] + " but found " + std::to_string(weights.size()) + " weights");
    }
    for (const auto& w : weights) {
        m.weights.push_back(parse_number(w, 5));
    }
    if (m.dim() != descriptor_dim(m.kind)) {
        model_fail(3, "dim " + std::to_string(m.dim()) + " does not match kind " + std::string(to_string(m.kind)) +
                          " (" + std::to_string(descriptor_dim(m.kind)) + ")");
    }
    for (std::size_t i = 5; i < lines.size(); ++i) {
        const auto& line = lines[i];
        if (line.empty()) {
            continue;
        }
        if (line.rfind("# ", 0) != 0) {
            model_fail(static_cast<int>(i) + 1, "unexpected content after weights");
        }
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            m.metadata[line.substr(2, eq - 2)] = line.substr(eq + 1);
        }
    }
    if (const auto it = m.metadata.find("trained_on"); it != m.metadata.end()) {
        m.trained_on = static_cast<std::size_t>(std::strtoull(it->second.c_str(), nullptr, 10));
    }
    return m;
}

SvmModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("model: cannot open " + path.string());
    }
    try {
        return load_model(in);
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

} // namespace drowsy
