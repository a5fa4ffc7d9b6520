#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "speckle/types.hpp"

namespace speckle {

/// Affine map of min -> 0, max -> 1. Throws ConstantSignal.
std::vector<double> minmax_scale(std::span<const double> signal);

/// RMSE between min-max scaled estimate and min-max scaled true offsets,
/// reporting the better of the two global signs.
double linearity_rmse(std::span<const double> estimate_means, std::span<const double> offsets);

/// Zero-mean, unit-variance normalized dot product, in [-1, 1].
double ncc(std::span<const double> a, std::span<const double> b);

double pearson(std::span<const double> a, std::span<const double> b);  // alias of ncc semantics

/// One-sided power spectrum of the mean-removed series: power_k folds the
/// conjugate bins so the total over all returned bins is N * variance.
struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> power;
};
Spectrum power_spectrum(std::span<const double> series, double frame_rate);

/// Frequency of the strongest non-DC bin.
double dominant_frequency(const Spectrum& spectrum);

enum class Axis {
  Vertical,    // wavefront position is a row index (moves along y)
  Horizontal,  // wavefront position is a column index (moves along x)
};

/// Wavefront speed in map pixels/frame: 1-D mean profiles per frame, circular
/// phase correlation between consecutive profiles with parabolic subpixel
/// refinement, least-squares slope of the cumulative position.
/// Throws NoPropagationDetected for static or featureless sequences.
double wavefront_speed(const std::vector<Image>& maps, Axis axis);

struct EvalReport {
  std::vector<double> ncc_values;
  double ncc_mean = 0.0;
  double linearity_rmse = -1.0;   // -1 = not evaluated
  double linearity_pearson = 0.0;
  double spectral_peak_hz = -1.0;
  double spectral_peak_fraction = -1.0;  // fraction of pixels peaking at the modal bin
  double wave_speed = 0.0;
  bool wave_speed_valid = false;
  nlohmann::json metadata;

  nlohmann::json to_json() const;
};

}  // namespace speckle
