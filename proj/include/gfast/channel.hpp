#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace gfast {

using Complex = std::complex<double>;

struct BinderTopology {
  std::vector<double> line_lengths_m;
  /// FEXT coupling constant; frequency in units of `ChannelModel::f0_hz`, length in meters.
  double fext_coupling = 0.0;
  std::uint64_t rng_seed = 0;

  std::size_t num_lines() const { return line_lengths_m.size(); }
  void validate() const;
};

struct BandPlan {
  std::size_t num_tones = 4096;
  double f_start_hz = 2e6;
  double f_stop_hz = 212e6;
  /// DMT symbol rate; converts bits/tone to bit/s.
  double symbol_rate_hz = 48e3;

  double tone_spacing_hz() const { return (f_stop_hz - f_start_hz) / static_cast<double>(num_tones); }
  /// Center frequency of tone `n`.
  double tone_frequency_hz(std::size_t n) const {
    return f_start_hz + (static_cast<double>(n) + 0.5) * tone_spacing_hz();
  }
  void validate() const;
};

/// Parameters of the synthetic binder model.
struct ChannelModel {
  double attenuation_db_per_sqrt_mhz_per_100m = 3.8;
  double propagation_speed_m_s = 2e8;
  double f0_hz = 1e6;
  double xtalk_sigma_db = 3.0;
};

/// Per-tone L x L channel matrices plus per-line noise variances.
/// Entry (l, j) of `matrix(n)` couples transmitter j into receiver l.
class ChannelTensor {
 public:
  ChannelTensor() = default;
  ChannelTensor(BandPlan band, std::vector<Eigen::MatrixXcd> matrices, Eigen::MatrixXd noise);

  std::size_t num_tones() const { return matrices_.size(); }
  std::size_t num_lines() const { return noise_.cols(); }
  const BandPlan& band() const { return band_; }
  void set_symbol_rate(double hz) { band_.symbol_rate_hz = hz; }

  const Eigen::MatrixXcd& matrix(std::size_t tone) const { return matrices_[tone]; }
  double noise(std::size_t tone, std::size_t line) const { return noise_(tone, line); }
  const Eigen::MatrixXd& noise_table() const { return noise_; }

  bool operator==(const ChannelTensor& other) const;

 private:
  BandPlan band_;
  std::vector<Eigen::MatrixXcd> matrices_;
  Eigen::MatrixXd noise_;  // N x L, watts per tone
};

ChannelTensor generate_channel(const BinderTopology& topology, const BandPlan& band, double noise_psd_dbm_hz,
                               const ChannelModel& model = {});

/// Binary format, little endian:
///   8 bytes magic "GFCHAN01", u64 N, u64 L, f64 f_start, f64 f_stop,
///   N blocks of L*L complex entries (f64 re, f64 im) in row-major order,
///   N*L f64 noise variances (tone-major).
void save_channel(const ChannelTensor& tensor, const std::filesystem::path& path);

/// Human-editable text variant with the same content; values printed with 17 significant digits.
void save_channel_text(const ChannelTensor& tensor, const std::filesystem::path& path);

/// Reads either format (detected from the first bytes).
ChannelTensor load_channel(const std::filesystem::path& path);

}  // namespace gfast
