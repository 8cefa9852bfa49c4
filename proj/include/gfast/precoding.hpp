#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfast/channel.hpp"
#include "gfast/partition.hpp"
#include "gfast/units.hpp"

namespace gfast {

enum class PrecoderKind { ZfLinear, ZfThp };

std::string to_string(PrecoderKind kind);
PrecoderKind parse_precoder_kind(const std::string& name);

/// Encoding order k_1..k_L as line indices; earlier entries are encoded first.
struct EncodingOrder {
  std::vector<std::size_t> lines;

  /// Throws ValidationError unless `lines` is a permutation of 0..num_lines-1.
  void validate(std::size_t num_lines) const;
  /// Position of every line in the order.
  std::vector<std::size_t> ranks() const;
};

/// Inactive (tone, line) pairs: no data for that user on that tone. The line still
/// transmits precoding energy for the active users.
class DisabledSet {
 public:
  DisabledSet() = default;
  DisabledSet(std::size_t tones, std::size_t lines) : tones_(tones), lines_(lines), flags_(tones * lines, 0) {}

  std::size_t num_tones() const { return tones_; }
  std::size_t num_lines() const { return lines_; }
  bool contains(std::size_t tone, std::size_t line) const { return flags_[index(tone, line)] != 0; }
  /// Returns false when the pair was already present.
  bool insert(std::size_t tone, std::size_t line);
  std::size_t size() const { return count_; }
  std::size_t disabled_on_tone(std::size_t tone) const;
  std::vector<std::size_t> active_lines(std::size_t tone) const;

  DisabledSet merged(const DisabledSet& other) const;
  bool operator==(const DisabledSet& other) const = default;

 private:
  std::size_t index(std::size_t tone, std::size_t line) const;

  std::size_t tones_ = 0;
  std::size_t lines_ = 0;
  std::vector<unsigned char> flags_;
  std::size_t count_ = 0;
};

/// Structural precoder of one tone. Streams are listed in `users`; for ZF_THP that is the
/// encoding order restricted to the active lines.
struct TonePrecoder {
  std::vector<std::size_t> users;
  Eigen::MatrixXcd columns;    // L x A, unit-norm precoder columns
  Eigen::VectorXd gain;        // effective direct gain per unit stream power
  Eigen::MatrixXd power_map;   // L x A, per-line power = power_map * p
  Eigen::MatrixXcd feedback;   // A x A strictly lower triangular (ZF_THP only)
  bool usable = true;          // false if the active channel is rank deficient
};

struct PrecoderStructure {
  PrecoderKind kind = PrecoderKind::ZfLinear;
  std::size_t num_lines = 0;
  std::vector<TonePrecoder> tones;
};

/// Zero-forcing precoder for the active rows of one tone (pseudo-inverse structure).
TonePrecoder build_zf_tone(const Eigen::MatrixXcd& channel, std::span<const std::size_t> active);
/// ZF-THP structure for one tone; `active` must already be in encoding order.
TonePrecoder build_zf_thp_tone(const Eigen::MatrixXcd& channel, std::span<const std::size_t> ordered_active);

PrecoderStructure build_zf(const ChannelTensor& tensor, const DisabledSet& disabled, unsigned workers = 1);
PrecoderStructure build_zf_thp(const ChannelTensor& tensor, const DisabledSet& disabled, const EncodingOrder& order,
                               unsigned workers = 1);
PrecoderStructure build_precoder(PrecoderKind kind, const ChannelTensor& tensor, const DisabledSet& disabled,
                                 const EncodingOrder& order, unsigned workers = 1);

/// Rebuilds only the tones whose active set differs between `previous` and `disabled`.
PrecoderStructure rebuild_precoder(const PrecoderStructure& previous, const DisabledSet& previous_disabled,
                                   const ChannelTensor& tensor, const DisabledSet& disabled,
                                   const EncodingOrder& order, unsigned workers = 1);

/// Bits per tone of an interference-free stream.
double rate(double gain, double power, SnrGap gap, double noise);

/// Stream power at which `rate` reaches `max_bits`; +inf when gain is zero (tone unusable).
double bitcap_to_power_cap(double gain, SnrGap gap, double noise, double max_bits);

/// Encoding order: prioritized lines first, then the rest; inside each group longer lines
/// first ("shortest lines last"), ties by ascending index.
EncodingOrder make_order(std::span<const double> line_lengths, const PriorityPartition& partition);

/// Per-stream rates from explicit precoder columns scaled by sqrt(power), including every
/// interference term: all other streams for ZF_LINEAR, later-encoded streams for ZF_THP.
Eigen::VectorXd explicit_stream_rates(PrecoderKind kind, const Eigen::MatrixXcd& channel, const TonePrecoder& tone,
                                      std::span<const double> stream_power, SnrGap gap,
                                      std::span<const double> noise_per_line);

}  // namespace gfast
