#include "speckle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "speckle/error.hpp"

namespace speckle {

namespace {

void require_nonconstant(std::span<const double> s, const char* what) {
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  if (!(*hi > *lo)) fail(ErrorCode::ConstantSignal, std::string(what) + " is constant");
}

double mean_of(std::span<const double> s) {
  double acc = 0.0;
  for (double v : s) acc += v;
  return acc / static_cast<double>(s.size());
}

// Radix-2 when possible, otherwise the direct transform.
std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const bool pow2 = (n & (n - 1)) == 0;
  if (pow2) {
    for (size_t i = 0; i < n; ++i) out[i] = x[i];
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
      size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(out[i], out[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
      const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
      const std::complex<double> wl(std::cos(ang), std::sin(ang));
      for (size_t i = 0; i < n; i += len) {
        std::complex<double> w(1.0);
        for (size_t k = 0; k < len / 2; ++k) {
          const std::complex<double> u = out[i + k];
          const std::complex<double> v = out[i + k + len / 2] * w;
          out[i + k] = u + v;
          out[i + k + len / 2] = u - v;
          w *= wl;
        }
      }
    }
    return out;
  }
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0);
    for (size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> minmax_scale(std::span<const double> signal) {
  if (signal.size() < 2) fail(ErrorCode::ConstantSignal, "signal too short to scale");
  require_nonconstant(signal, "minmax_scale input");
  const auto [lo_it, hi_it] = std::minmax_element(signal.begin(), signal.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  std::vector<double> out(signal.size());
  for (size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - lo) / span;
  return out;
}

double linearity_rmse(std::span<const double> estimate_means, std::span<const double> offsets) {
  if (estimate_means.size() != offsets.size())
    fail(ErrorCode::DimensionMismatch, "linearity_rmse: length mismatch");
  std::vector<double> distinct(offsets.begin(), offsets.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3)
    fail(ErrorCode::ConstantSignal, "linearity_rmse needs >= 3 distinct offsets");

  const std::vector<double> truth = minmax_scale(offsets);
  double best = std::numeric_limits<double>::infinity();
  for (const double sign : {1.0, -1.0}) {
    std::vector<double> flipped(estimate_means.size());
    for (size_t i = 0; i < estimate_means.size(); ++i) flipped[i] = sign * estimate_means[i];
    const std::vector<double> est = minmax_scale(flipped);
    double acc = 0.0;
    for (size_t i = 0; i < est.size(); ++i) {
      const double d = est[i] - truth[i];
      acc += d * d;
    }
    best = std::min(best, std::sqrt(acc / static_cast<double>(est.size())));
  }
  return best;
}

double ncc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    fail(ErrorCode::DimensionMismatch, "ncc: need equal lengths >= 2");
  require_nonconstant(a, "ncc first argument");
  require_nonconstant(b, "ncc second argument");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pearson(std::span<const double> a, std::span<const double> b) { return ncc(a, b); }

Spectrum power_spectrum(std::span<const double> series, double frame_rate) {
  const size_t n = series.size();
  if (n < 8) fail(ErrorCode::DimensionMismatch, "power_spectrum needs N >= 8");
  if (!(frame_rate > 0.0)) fail(ErrorCode::InvalidConfig, "frame_rate must be > 0");
  std::vector<double> x(series.begin(), series.end());
  const double mean = mean_of(series);
  for (double& v : x) v -= mean;
  const auto spec = dft(x);

  // Fold conjugate bins: the total power over the one-sided bins is N * variance.
  Spectrum out;
  const size_t half = n / 2;
  out.freq_hz.reserve(half + 1);
  out.power.reserve(half + 1);
  for (size_t k = 0; k <= half; ++k) {
    double p = std::norm(spec[k]);
    if (k > 0 && (k != half || n % 2 != 0)) p += std::norm(spec[n - k]);
    out.freq_hz.push_back(frame_rate * static_cast<double>(k) / static_cast<double>(n));
    out.power.push_back(p / static_cast<double>(n));
  }
  return out;
}

double dominant_frequency(const Spectrum& spectrum) {
  if (spectrum.power.size() < 2) fail(ErrorCode::DimensionMismatch, "spectrum too short");
  size_t best = 1;
  for (size_t k = 2; k < spectrum.power.size(); ++k)
    if (spectrum.power[k] > spectrum.power[best]) best = k;
  return spectrum.freq_hz[best];
}

double wavefront_speed(const std::vector<Image>& maps, Axis axis) {
  if (maps.size() < 2) fail(ErrorCode::DimensionMismatch, "wavefront_speed needs >= 2 maps");
  const int w = maps.front().width, h = maps.front().height;
  const int len = axis == Axis::Vertical ? h : w;
  const int other = axis == Axis::Vertical ? w : h;
  if (len < 4) fail(ErrorCode::DimensionMismatch, "profile too short for correlation");

  // Mean-removed 1-D profiles, averaged across the perpendicular axis.
  std::vector<std::vector<double>> profiles(maps.size(), std::vector<double>(len, 0.0));
  double max_std = 0.0;
  for (size_t t = 0; t < maps.size(); ++t) {
    for (int u = 0; u < len; ++u) {
      double acc = 0.0;
      for (int v = 0; v < other; ++v)
        acc += axis == Axis::Vertical ? maps[t].at(v, u) : maps[t].at(u, v);
      profiles[t][u] = acc / static_cast<double>(other);
    }
    const double mean = mean_of(profiles[t]);
    double var = 0.0;
    for (double& p : profiles[t]) {
      p -= mean;
      var += p * p;
    }
    max_std = std::max(max_std, std::sqrt(var / len));
  }
  if (max_std <= 1e-12)
    fail(ErrorCode::NoPropagationDetected, "profiles are flat, nothing to track");

  // Circular cross-correlation peak between consecutive profiles, parabolic
  // subpixel refinement, shifts wrapped to (-len/2, len/2].
  std::vector<double> position(maps.size(), 0.0);
  for (size_t t = 0; t + 1 < maps.size(); ++t) {
    const auto& a = profiles[t];
    const auto& b = profiles[t + 1];
    std::vector<double> xc(len, 0.0);
    for (int s = 0; s < len; ++s) {
      double acc = 0.0;
      for (int r = 0; r < len; ++r) acc += a[((r - s) % len + len) % len] * b[r];
      xc[s] = acc;
    }
    int peak = 0;
    for (int s = 1; s < len; ++s)
      if (xc[s] > xc[peak]) peak = s;
    const double cm = xc[(peak - 1 + len) % len];
    const double c0 = xc[peak];
    const double cp = xc[(peak + 1) % len];
    const double denom = cm - 2.0 * c0 + cp;
    const double sub = std::abs(denom) > 1e-300 ? 0.5 * (cm - cp) / denom : 0.0;
    double shift = peak + sub;
    if (shift > len / 2.0) shift -= len;
    position[t + 1] = position[t] + shift;
  }

  double max_pos = 0.0;
  for (double p : position) max_pos = std::max(max_pos, std::abs(p));
  if (max_pos < 0.25)
    fail(ErrorCode::NoPropagationDetected, "no consistent profile motion detected");

  // Least-squares slope of position vs frame index.
  const double n = static_cast<double>(position.size());
  double st = 0.0, sp = 0.0, stt = 0.0, stp = 0.0;
  for (size_t t = 0; t < position.size(); ++t) {
    st += static_cast<double>(t);
    sp += position[t];
    stt += static_cast<double>(t) * static_cast<double>(t);
    stp += static_cast<double>(t) * position[t];
  }
  return (n * stp - st * sp) / (n * stt - st * st);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{
      {"ncc", ncc_values},
      {"ncc_mean", ncc_mean},
      {"metadata", metadata},
  };
  if (linearity_rmse >= 0.0) {
    j["linearity_rmse"] = linearity_rmse;
    j["linearity_pearson"] = linearity_pearson;
  }
  if (spectral_peak_hz >= 0.0) {
    j["spectral_peak_hz"] = spectral_peak_hz;
    j["spectral_peak_fraction"] = spectral_peak_fraction;
  }
  if (wave_speed_valid) j["wave_speed"] = wave_speed;
  return j;
}

}  // namespace speckle
