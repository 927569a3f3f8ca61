#pragma once

#include <vector>

#include "drowsy/raster.hpp"

namespace drowsy {

inline constexpr int kPatchWidth = 48;
inline constexpr int kPatchHeight = 32;

/// Illumination normalisation parameters: gamma, difference-of-Gaussians
/// band and the power-mean/tanh contrast equalisation.
struct PrepConfig {
    double gamma = 0.2;
    double sigma_inner = 1.0;
    double sigma_outer = 2.0;
    double a = 0.1;
    double tau = 10.0;

    void validate() const;
};

/// A normalised 48x32 eye patch.
struct EyePatch {
    FloatImage pixels;
};

FloatImage gamma_correct(const FloatImage& img, double gamma);

/// Normalised 1-D Gaussian taps over [-ceil(3 sigma), ceil(3 sigma)].
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with replicate-edge padding.
FloatImage gaussian_blur(const FloatImage& img, double sigma);

FloatImage dog_filter(const FloatImage& img, double sigma_inner, double sigma_outer);

FloatImage contrast_equalize(const FloatImage& img, double a, double tau);

/// Resize to 48x32, min-max map to [0,1], then gamma -> DoG -> contrast equalisation.
EyePatch preprocess(const GrayImage& raw_eye, const PrepConfig& cfg = {});

/// Same pipeline on real-valued intensities in [0,255] (no quantisation).
EyePatch preprocess(const FloatImage& raw_eye, const PrepConfig& cfg = {});

} // namespace drowsy
