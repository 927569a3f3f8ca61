#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "drowsy/features.hpp"

namespace drowsy {

/// Closed eyes are the positive class.
enum class EyeState { open, closed };

std::string_view to_string(EyeState s);

struct LabeledSample {
    FeatureVector features;
    EyeState label = EyeState::open;
};

inline double label_sign(EyeState s) { return s == EyeState::closed ? 1.0 : -1.0; }

struct SvmModel {
    DescriptorKind kind = DescriptorKind::hog;
    std::vector<double> weights;
    double bias = 0.0;
    std::size_t trained_on = 0;
    std::map<std::string, std::string> metadata;

    int dim() const { return static_cast<int>(weights.size()); }
};

struct TrainParams {
    double lambda = 1e-4;
    int epochs = 50;
    std::uint64_t seed = 1;
    bool balance_classes = false;  // weight hinge terms by inverse class frequency
};

/// Linear SVM by per-sample subgradient descent on
///   lambda/2 |w|^2 + mean hinge(1 - y (w.x + b))
/// with step 1/(lambda t) and a seeded per-epoch shuffle. The bias is not
/// regularised. Deterministic in (data order, params).
SvmModel train(const std::vector<LabeledSample>& data, const TrainParams& params);

/// Regularised hinge objective of `m` on `data`.
double objective(const SvmModel& m, const std::vector<LabeledSample>& data, double lambda);

double score(const SvmModel& m, const FeatureVector& x);
EyeState predict(const SvmModel& m, const FeatureVector& x, double threshold = 0.0);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // (0,0) first, (1,1) last
    double auc = 0.0;
};

/// ROC over (score, is_positive) pairs; equal scores move together.
RocCurve roc_from_scores(const std::vector<double>& scores, const std::vector<bool>& positive);
RocCurve roc(const SvmModel& m, const std::vector<LabeledSample>& data);

void save_model(std::ostream& out, const SvmModel& m);
void save_model(const std::filesystem::path& path, const SvmModel& m);
SvmModel load_model(std::istream& in);
SvmModel load_model(const std::filesystem::path& path);

} // namespace drowsy
