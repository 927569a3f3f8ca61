#include <doctest.h>

#include <cmath>
#include <sstream>

#include "drowsy/classify.hpp"
#include "helpers.hpp"

using namespace drowsy;

namespace {

FeatureVector vec(std::vector<double> v) { return {DescriptorKind::hog, std::move(v)}; }

std::vector<LabeledSample> toy(bool flipped = false, double scale = 1.0) {
    std::vector<LabeledSample> d;
    for (int i = 0; i < 50; ++i) {
        d.push_back({vec({2.0 * scale, 0.0}), flipped ? EyeState::open : EyeState::closed});
        d.push_back({vec({-2.0 * scale, 0.0}), flipped ? EyeState::closed : EyeState::open});
    }
    return d;
}

double accuracy(const SvmModel& m, const std::vector<LabeledSample>& d) {
    int ok = 0;
    for (const auto& s : d) {
        ok += predict(m, s.features) == s.label;
    }
    return static_cast<double>(ok) / static_cast<double>(d.size());
}

std::vector<LabeledSample> blobs(std::mt19937_64& rng, int n, int dim, double sep) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<LabeledSample> d;
    for (int i = 0; i < n; ++i) {
        const bool closed = i % 2 == 0;
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (auto& x : v) {
            x = g(rng);
        }
        v[0] += closed ? sep : -sep;
        d.push_back({vec(v), closed ? EyeState::closed : EyeState::open});
    }
    return d;
}

} // namespace

TEST_SUITE("classify") {

TEST_CASE("toy problem is learned") {
    const auto m = train(toy(), {.lambda = 0.01, .epochs = 100, .seed = 1});
    CHECK(accuracy(m, toy()) == 1.0);
    CHECK(m.weights[0] > 0.0);
    CHECK(m.trained_on == 100);
}

TEST_CASE("training is deterministic") {
    std::mt19937_64 rng(1);
    const auto d = blobs(rng, 200, 5, 1.0);
    const auto a = train(d, {.lambda = 1e-3, .epochs = 20, .seed = 9});
    const auto b = train(d, {.lambda = 1e-3, .epochs = 20, .seed = 9});
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
}

TEST_CASE("flipping labels negates the weights") {
    const TrainParams p{.lambda = 0.01, .epochs = 100, .seed = 3};
    const auto a = train(toy(), p);
    const auto b = train(toy(true), p);
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        CHECK(std::abs(a.weights[i] + b.weights[i]) < 1e-6);
    }
    CHECK(std::abs(a.bias + b.bias) < 1e-6);
}

TEST_CASE("training preconditions") {
    std::vector<LabeledSample> one_class{{vec({1.0}), EyeState::open}, {vec({2.0}), EyeState::open}};
    CHECK_THROWS_AS(train(one_class, {}), TrainingError);
    std::vector<LabeledSample> ragged{{vec({1.0}), EyeState::open}, {vec({2.0, 1.0}), EyeState::closed}};
    CHECK_THROWS_AS(train(ragged, {}), DimensionError);
}

TEST_CASE("objective does not grow across epochs") {
    std::mt19937_64 rng(2);
    const auto d = blobs(rng, 100, 3, 1.5);
    double prev = INFINITY;
    for (int epochs = 1; epochs <= 30; ++epochs) {
        const double obj = objective(train(d, {.lambda = 0.05, .epochs = epochs, .seed = 4}), d, 0.05);
        CHECK(obj <= prev + 1e-6);
        prev = std::min(prev, obj);
    }
}

TEST_CASE("feature scaling with rescaled lambda keeps predictions") {
    const double c = 3.0;
    const auto a = train(toy(), {.lambda = 0.01, .epochs = 100, .seed = 5});
    const auto b = train(toy(false, c), {.lambda = 0.01 / (c * c), .epochs = 100, .seed = 5});
    const auto da = toy();
    const auto db = toy(false, c);
    for (std::size_t i = 0; i < da.size(); ++i) {
        CHECK(predict(a, da[i].features) == predict(b, db[i].features));
    }
}

TEST_CASE("scores and predictions") {
    SvmModel zero;
    zero.weights = {0.0, 0.0, 0.0};
    zero.bias = 0.7;
    CHECK(score(zero, vec({5.0, -1.0, 2.0})) == 0.7);

    SvmModel m;
    m.weights = {1.0, -2.0, 0.0};
    m.bias = 1.0;
    CHECK(score(m, vec({1.0, 1.0, 5.0})) == 0.0);
    const auto x = vec({0.3, -1.2, 4.0});
    auto ax = x;
    for (auto& v : ax.values) {
        v *= 2.5;
    }
    CHECK(score(m, ax) - m.bias == doctest::Approx(2.5 * (score(m, x) - m.bias)));
    CHECK_THROWS_AS(score(m, vec({1.0})), DimensionError);

    SvmModel s;
    s.weights = {1.0};
    s.bias = 0.0;
    CHECK(predict(s, vec({0.2})) == EyeState::closed);
    CHECK(predict(s, vec({0.2}), 0.5) == EyeState::open);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 50; ++i) {
        const auto r = vec({testutil::random_float(rng, 1, 1, -100.0, 100.0).at(0, 0)});
        CHECK(predict(s, r, -1e300) == EyeState::closed);
        for (double t : {-1.0, 0.0, 1.0}) {
            CHECK((predict(s, r, t) == EyeState::closed) == (score(s, r) >= t));
        }
    }
}

TEST_CASE("ROC curve shape and AUC") {
    const auto sep = roc_from_scores({0.1, 0.2, 0.8, 0.9}, {false, false, true, true});
    CHECK(sep.auc == 1.0);
    CHECK(sep.points.front().fpr == 0.0);
    CHECK(sep.points.front().tpr == 0.0);
    CHECK(sep.points.back().fpr == 1.0);
    CHECK(sep.points.back().tpr == 1.0);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> scores;
    std::vector<bool> pos;
    for (int i = 0; i < 10000; ++i) {
        scores.push_back(u(rng));
        pos.push_back(u(rng) < 0.5);
    }
    const auto r = roc_from_scores(scores, pos);
    CHECK(r.auc >= 0.45);
    CHECK(r.auc <= 0.55);
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        CHECK(r.points[i].fpr >= r.points[i - 1].fpr);
        CHECK(r.points[i].tpr >= r.points[i - 1].tpr);
    }

    std::vector<double> neg = scores;
    for (auto& s : neg) {
        s = -s;
    }
    CHECK(roc_from_scores(neg, pos).auc == doctest::Approx(1.0 - r.auc).epsilon(1e-9));

    // ties move together: one diagonal segment
    const auto tied = roc_from_scores({0.5, 0.5, 0.5, 0.5}, {true, false, true, false});
    CHECK(tied.auc == doctest::Approx(0.5));
    for (const auto& p : tied.points) {
        CHECK(((p.fpr == 0.0 && p.tpr == 0.0) || (p.fpr == 1.0 && p.tpr == 1.0)));
    }

    CHECK_THROWS_AS(roc_from_scores({0.1, 0.2}, {true, true}), EvaluationError);
}

TEST_CASE("model files round trip exactly") {
    std::mt19937_64 rng(8);
    SvmModel m;
    m.kind = DescriptorKind::lbp;
    m.weights.resize(348);
    for (auto& w : m.weights) {
        w = testutil::random_float(rng, 1, 1, -1.0, 1.0).at(0, 0) / 3.0;
    }
    m.bias = -0.123456789012345678;
    m.metadata["lambda"] = "0.0001";
    std::stringstream ss;
    save_model(ss, m);
    const std::string text = ss.str();
    CHECK(text.rfind("LSVM 1\nkind lbp\ndim 348\nbias ", 0) == 0);
    const auto back = load_model(ss);
    CHECK(back.weights == m.weights);
    CHECK(back.bias == m.bias);
    CHECK(back.kind == m.kind);
    CHECK(back.metadata.at("lambda") == "0.0001");
    for (int i = 0; i < 100; ++i) {
        FeatureVector x{DescriptorKind::lbp, std::vector<double>(348)};
        for (auto& v : x.values) {
            v = testutil::random_float(rng, 1, 1).at(0, 0);
        }
        CHECK(score(back, x) == score(m, x));
    }

    std::istringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_model(truncated), LoadError);
    std::istringstream bad_magic("SVM 1\nkind hog\ndim 1\nbias 0\nweights 1\n");
    CHECK_THROWS_AS(load_model(bad_magic), LoadError);

    std::ostringstream short_w;
    short_w << "LSVM 1\nkind hog\ndim 540\nbias 0\nweights";
    for (int i = 0; i < 539; ++i) {
        short_w << " 0";
    }
    short_w << "\n";
    std::istringstream in(short_w.str());
    try {
        load_model(in);
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("540") != std::string::npos);
        CHECK(msg.find("539") != std::string::npos);
    }
}

}
