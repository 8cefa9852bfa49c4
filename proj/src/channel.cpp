#include "gfast/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gfast/errors.hpp"
#include "gfast/random.hpp"
#include "gfast/units.hpp"

namespace gfast {

namespace {

void require_finite(double value, const std::string& field) {
  if (!std::isfinite(value)) throw ValidationError(field, "must be finite");
}

}  // namespace

void BinderTopology::validate() const {
  if (line_lengths_m.empty()) throw ValidationError("topology.line_lengths_m", "need at least one line");
  for (std::size_t l = 0; l < line_lengths_m.size(); ++l) {
    const std::string field = "topology.line_lengths_m[" + std::to_string(l) + "]";
    require_finite(line_lengths_m[l], field);
    if (line_lengths_m[l] <= 0.0) throw ValidationError(field, "must be > 0");
  }
  require_finite(fext_coupling, "topology.fext_coupling");
  if (fext_coupling < 0.0) throw ValidationError("topology.fext_coupling", "must be >= 0");
}

void BandPlan::validate() const {
  if (num_tones < 1) throw ValidationError("band.num_tones", "must be >= 1");
  require_finite(f_start_hz, "band.f_start_hz");
  require_finite(f_stop_hz, "band.f_stop_hz");
  require_finite(symbol_rate_hz, "band.symbol_rate_hz");
  if (f_start_hz <= 0.0) throw ValidationError("band.f_start_hz", "must be > 0");
  if (f_stop_hz <= f_start_hz) throw ValidationError("band.f_stop_hz", "must exceed f_start_hz");
  if (symbol_rate_hz <= 0.0) throw ValidationError("band.symbol_rate_hz", "must be > 0");
}

ChannelTensor::ChannelTensor(BandPlan band, std::vector<Eigen::MatrixXcd> matrices, Eigen::MatrixXd noise)
    : band_(band), matrices_(std::move(matrices)), noise_(std::move(noise)) {
  if (matrices_.empty()) throw ValidationError("channel", "no tones");
  if (band_.num_tones != matrices_.size())
    throw ValidationError("channel", "band plan has " + std::to_string(band_.num_tones) + " tones but " +
                                         std::to_string(matrices_.size()) + " matrices were given");
  const auto lines = noise_.cols();
  if (noise_.rows() != static_cast<Eigen::Index>(matrices_.size()) || lines < 1)
    throw ValidationError("channel.noise", "noise table must be N x L");
  for (std::size_t n = 0; n < matrices_.size(); ++n) {
    const auto& h = matrices_[n];
    if (h.rows() != lines || h.cols() != lines)
      throw ValidationError("channel.tone[" + std::to_string(n) + "]", "matrix is not L x L");
    for (Eigen::Index l = 0; l < lines; ++l) {
      const double direct = std::abs(h(l, l));
      if (!std::isfinite(direct) || direct == 0.0)
        throw ValidationError("channel.tone[" + std::to_string(n) + "]",
                              "direct gain of line " + std::to_string(l) + " is zero or not finite");
      const double sigma2 = noise_(static_cast<Eigen::Index>(n), l);
      if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw ValidationError("channel.noise[" + std::to_string(n) + "][" + std::to_string(l) + "]",
                              "noise variance must be positive and finite");
    }
  }
}

bool ChannelTensor::operator==(const ChannelTensor& other) const {
  if (num_tones() != other.num_tones() || num_lines() != other.num_lines()) return false;
  if (band_.f_start_hz != other.band_.f_start_hz || band_.f_stop_hz != other.band_.f_stop_hz) return false;
  if (noise_ != other.noise_) return false;
  for (std::size_t n = 0; n < matrices_.size(); ++n)
    if (matrices_[n] != other.matrices_[n]) return false;
  return true;
}

ChannelTensor generate_channel(const BinderTopology& topology, const BandPlan& band, double noise_psd_dbm_hz,
                               const ChannelModel& model) {
  topology.validate();
  band.validate();
  require_finite(noise_psd_dbm_hz, "noise_psd_dbm_hz");
  require_finite(model.attenuation_db_per_sqrt_mhz_per_100m, "channel_model.attenuation");
  require_finite(model.xtalk_sigma_db, "channel_model.xtalk_sigma_db");
  if (!(model.propagation_speed_m_s > 0.0) || !std::isfinite(model.propagation_speed_m_s))
    throw ValidationError("channel_model.propagation_speed_m_s", "must be positive and finite");
  if (!(model.f0_hz > 0.0) || !std::isfinite(model.f0_hz))
    throw ValidationError("channel_model.f0_hz", "must be positive and finite");

  const auto lines = static_cast<Eigen::Index>(topology.num_lines());
  const auto& d = topology.line_lengths_m;

  // Frequency-independent pair factors, drawn in row-major order.
  Eigen::MatrixXd xtalk_factor = Eigen::MatrixXd::Zero(lines, lines);
  Eigen::MatrixXd xtalk_phase = Eigen::MatrixXd::Zero(lines, lines);
  Rng rng(topology.rng_seed);
  for (Eigen::Index l = 0; l < lines; ++l) {
    for (Eigen::Index j = 0; j < lines; ++j) {
      if (l == j) continue;
      xtalk_factor(l, j) = std::pow(10.0, model.xtalk_sigma_db * rng.normal() / 10.0);
      xtalk_phase(l, j) = rng.uniform(-std::numbers::pi, std::numbers::pi);
    }
  }

  std::vector<Eigen::MatrixXcd> matrices;
  matrices.reserve(band.num_tones);
  for (std::size_t n = 0; n < band.num_tones; ++n) {
    const double f = band.tone_frequency_hz(n);
    const double sqrt_mhz = std::sqrt(f / 1e6);
    const double rel_f = f / model.f0_hz;
    Eigen::MatrixXcd h(lines, lines);
    for (Eigen::Index l = 0; l < lines; ++l) {
      const double dl = d[static_cast<std::size_t>(l)];
      const double atten_db = model.attenuation_db_per_sqrt_mhz_per_100m * sqrt_mhz * dl / 100.0;
      const double direct = std::pow(10.0, -atten_db / 20.0);
      const double delay_phase = -2.0 * std::numbers::pi * f * dl / model.propagation_speed_m_s;
      h(l, l) = std::polar(direct, delay_phase);
      for (Eigen::Index j = 0; j < lines; ++j) {
        if (j == l) continue;
        const double coupling_len = std::min(dl, d[static_cast<std::size_t>(j)]);
        const double power =
            topology.fext_coupling * rel_f * rel_f * coupling_len * direct * direct * xtalk_factor(l, j);
        h(l, j) = std::polar(std::sqrt(power), delay_phase + xtalk_phase(l, j));
      }
    }
    matrices.push_back(std::move(h));
  }

  const double sigma2 = psd_dbm_hz_to_watt(noise_psd_dbm_hz, band.tone_spacing_hz());
  Eigen::MatrixXd noise = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(band.num_tones), lines, sigma2);
  return ChannelTensor(band, std::move(matrices), std::move(noise));
}

}  // namespace gfast
