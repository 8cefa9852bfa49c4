#include "gfast/precoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gfast/errors.hpp"
#include "gfast/parallel.hpp"

namespace gfast {

namespace {

// Rank threshold relative to the largest pivot of the row-equilibrated active channel.
constexpr double kRankTolerance = 1e-12;

Eigen::MatrixXcd gather_rows(const Eigen::MatrixXcd& channel, std::span<const std::size_t> rows) {
  Eigen::MatrixXcd out(static_cast<Eigen::Index>(rows.size()), channel.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = channel.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

TonePrecoder unusable_tone(std::span<const std::size_t> users, Eigen::Index lines) {
  const auto a = static_cast<Eigen::Index>(users.size());
  TonePrecoder tone;
  tone.users.assign(users.begin(), users.end());
  tone.columns = Eigen::MatrixXcd::Zero(lines, a);
  tone.gain = Eigen::VectorXd::Zero(a);
  tone.power_map = Eigen::MatrixXd::Zero(lines, a);
  tone.usable = false;
  return tone;
}

}  // namespace

std::string to_string(PrecoderKind kind) {
  switch (kind) {
    case PrecoderKind::ZfLinear:
      return "zf_linear";
    case PrecoderKind::ZfThp:
      return "zf_thp";
  }
  return "unknown";
}

PrecoderKind parse_precoder_kind(const std::string& name) {
  if (name == "zf_linear" || name == "zf" || name == "ZF_LINEAR") return PrecoderKind::ZfLinear;
  if (name == "zf_thp" || name == "thp" || name == "ZF_THP") return PrecoderKind::ZfThp;
  throw ValidationError("precoder", "unknown precoder kind '" + name + "'");
}

void EncodingOrder::validate(std::size_t num_lines) const {
  if (lines.size() != num_lines)
    throw ValidationError("encoding_order", "has " + std::to_string(lines.size()) + " entries, expected " +
                                                std::to_string(num_lines));
  std::vector<bool> seen(num_lines, false);
  for (auto l : lines) {
    if (l >= num_lines || seen[l]) throw ValidationError("encoding_order", "is not a permutation");
    seen[l] = true;
  }
}

std::vector<std::size_t> EncodingOrder::ranks() const {
  std::vector<std::size_t> rank(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) rank[lines[i]] = i;
  return rank;
}

std::size_t DisabledSet::index(std::size_t tone, std::size_t line) const {
  if (tone >= tones_ || line >= lines_) throw ValidationError("disabled_set", "index out of range");
  return tone * lines_ + line;
}

bool DisabledSet::insert(std::size_t tone, std::size_t line) {
  auto& flag = flags_[index(tone, line)];
  if (flag) return false;
  flag = 1;
  ++count_;
  return true;
}

std::size_t DisabledSet::disabled_on_tone(std::size_t tone) const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < lines_; ++l) count += flags_[index(tone, l)];
  return count;
}

std::vector<std::size_t> DisabledSet::active_lines(std::size_t tone) const {
  std::vector<std::size_t> active;
  for (std::size_t l = 0; l < lines_; ++l)
    if (!flags_[index(tone, l)]) active.push_back(l);
  return active;
}

DisabledSet DisabledSet::merged(const DisabledSet& other) const {
  if (other.tones_ != tones_ || other.lines_ != lines_) throw ValidationError("disabled_set", "dimension mismatch");
  DisabledSet out = *this;
  for (std::size_t n = 0; n < tones_; ++n)
    for (std::size_t l = 0; l < lines_; ++l)
      if (other.contains(n, l)) out.insert(n, l);
  return out;
}

TonePrecoder build_zf_tone(const Eigen::MatrixXcd& channel, std::span<const std::size_t> active) {
  const Eigen::Index lines = channel.cols();
  const auto a = static_cast<Eigen::Index>(active.size());
  TonePrecoder tone;
  tone.users.assign(active.begin(), active.end());
  if (a == 0) {
    tone.columns.resize(lines, 0);
    tone.gain.resize(0);
    tone.power_map.resize(lines, 0);
    return tone;
  }
  const Eigen::MatrixXcd rows = gather_rows(channel, active);
  const Eigen::VectorXd scale = rows.rowwise().norm().cwiseInverse();
  const Eigen::MatrixXcd equilibrated = scale.asDiagonal() * rows;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod;
  cod.setThreshold(kRankTolerance);
  cod.compute(equilibrated);
  if (cod.rank() < a) return unusable_tone(active, lines);

  // pinv(D A) D = pinv(A) for full row rank A.
  const Eigen::MatrixXcd pinv = cod.pseudoInverse() * scale.asDiagonal();
  tone.columns.resize(lines, a);
  tone.gain.resize(a);
  for (Eigen::Index k = 0; k < a; ++k) {
    const double norm2 = pinv.col(k).squaredNorm();
    tone.gain(k) = 1.0 / norm2;
    tone.columns.col(k) = pinv.col(k) / std::sqrt(norm2);
  }
  tone.power_map = tone.columns.cwiseAbs2();
  return tone;
}

TonePrecoder build_zf_thp_tone(const Eigen::MatrixXcd& channel, std::span<const std::size_t> ordered_active) {
  const Eigen::Index lines = channel.cols();
  const auto a = static_cast<Eigen::Index>(ordered_active.size());
  TonePrecoder tone;
  tone.users.assign(ordered_active.begin(), ordered_active.end());
  if (a == 0) {
    tone.columns.resize(lines, 0);
    tone.gain.resize(0);
    tone.power_map.resize(lines, 0);
    tone.feedback.resize(0, 0);
    return tone;
  }
  const Eigen::MatrixXcd rows = gather_rows(channel, ordered_active);
  // rows^H = Q R, so rows * Q = R^H is lower triangular: stream k reaches only users
  // encoded at or after k; the part seen by later users is removed by the feedback filter.
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(rows.adjoint());
  const Eigen::MatrixXcd r = qr.matrixQR().topLeftCorner(a, a).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < a; ++k)
    if (std::abs(r(k, k)) <= kRankTolerance * rows.row(k).norm()) return unusable_tone(ordered_active, lines);

  tone.columns = qr.householderQ() * Eigen::MatrixXcd::Identity(lines, a);
  tone.gain = r.diagonal().cwiseAbs2();
  tone.power_map = tone.columns.cwiseAbs2();
  const Eigen::MatrixXcd effective = r.adjoint();
  Eigen::MatrixXcd normalized = effective;
  for (Eigen::Index k = 0; k < a; ++k) normalized.row(k) /= effective(k, k);
  tone.feedback = normalized.triangularView<Eigen::StrictlyLower>();
  return tone;
}

PrecoderStructure build_zf(const ChannelTensor& tensor, const DisabledSet& disabled, unsigned workers) {
  EncodingOrder identity;
  identity.lines.resize(tensor.num_lines());
  std::iota(identity.lines.begin(), identity.lines.end(), 0);
  return build_precoder(PrecoderKind::ZfLinear, tensor, disabled, identity, workers);
}

PrecoderStructure build_zf_thp(const ChannelTensor& tensor, const DisabledSet& disabled, const EncodingOrder& order,
                               unsigned workers) {
  return build_precoder(PrecoderKind::ZfThp, tensor, disabled, order, workers);
}

namespace {

std::vector<std::size_t> ordered_active(const DisabledSet& disabled, std::size_t tone, const EncodingOrder& order) {
  std::vector<std::size_t> active;
  for (auto l : order.lines)
    if (!disabled.contains(tone, l)) active.push_back(l);
  return active;
}

TonePrecoder build_tone(PrecoderKind kind, const ChannelTensor& tensor, const DisabledSet& disabled, std::size_t n,
                        const EncodingOrder& order) {
  if (kind == PrecoderKind::ZfLinear) return build_zf_tone(tensor.matrix(n), disabled.active_lines(n));
  return build_zf_thp_tone(tensor.matrix(n), ordered_active(disabled, n, order));
}

void check_dims(const ChannelTensor& tensor, const DisabledSet& disabled, const EncodingOrder& order) {
  if (disabled.num_tones() != tensor.num_tones() || disabled.num_lines() != tensor.num_lines())
    throw ValidationError("disabled_set", "dimensions do not match the channel");
  order.validate(tensor.num_lines());
}

}  // namespace

PrecoderStructure build_precoder(PrecoderKind kind, const ChannelTensor& tensor, const DisabledSet& disabled,
                                 const EncodingOrder& order, unsigned workers) {
  check_dims(tensor, disabled, order);
  PrecoderStructure structure;
  structure.kind = kind;
  structure.num_lines = tensor.num_lines();
  structure.tones.resize(tensor.num_tones());
  parallel_for(tensor.num_tones(), workers,
               [&](std::size_t n) { structure.tones[n] = build_tone(kind, tensor, disabled, n, order); });
  return structure;
}

PrecoderStructure rebuild_precoder(const PrecoderStructure& previous, const DisabledSet& previous_disabled,
                                   const ChannelTensor& tensor, const DisabledSet& disabled,
                                   const EncodingOrder& order, unsigned workers) {
  check_dims(tensor, disabled, order);
  if (previous.tones.size() != tensor.num_tones()) return build_precoder(previous.kind, tensor, disabled, order, workers);
  PrecoderStructure structure;
  structure.kind = previous.kind;
  structure.num_lines = tensor.num_lines();
  structure.tones.resize(tensor.num_tones());
  parallel_for(tensor.num_tones(), workers, [&](std::size_t n) {
    bool same = true;
    for (std::size_t l = 0; l < tensor.num_lines() && same; ++l)
      same = previous_disabled.contains(n, l) == disabled.contains(n, l);
    structure.tones[n] = same ? previous.tones[n] : build_tone(previous.kind, tensor, disabled, n, order);
  });
  return structure;
}

double rate(double gain, double power, SnrGap gap, double noise) {
  return std::log2(1.0 + gain * power / (gap.linear * noise));
}

double bitcap_to_power_cap(double gain, SnrGap gap, double noise, double max_bits) {
  if (!(gain > 0.0)) return std::numeric_limits<double>::infinity();
  return gap.linear * noise * (std::exp2(max_bits) - 1.0) / gain;
}

EncodingOrder make_order(std::span<const double> line_lengths, const PriorityPartition& partition) {
  partition.validate(line_lengths.size());
  EncodingOrder order;
  order.lines.resize(line_lengths.size());
  std::iota(order.lines.begin(), order.lines.end(), 0);
  std::stable_sort(order.lines.begin(), order.lines.end(), [&](std::size_t a, std::size_t b) {
    if (partition.is_prioritized(a) != partition.is_prioritized(b)) return partition.is_prioritized(a);
    return line_lengths[a] > line_lengths[b];
  });
  return order;
}

Eigen::VectorXd explicit_stream_rates(PrecoderKind kind, const Eigen::MatrixXcd& channel, const TonePrecoder& tone,
                                      std::span<const double> stream_power, SnrGap gap,
                                      std::span<const double> noise_per_line) {
  const auto a = static_cast<Eigen::Index>(tone.users.size());
  Eigen::MatrixXcd transmit = tone.columns;
  for (Eigen::Index s = 0; s < a; ++s) transmit.col(s) *= std::sqrt(stream_power[static_cast<std::size_t>(s)]);
  Eigen::VectorXd rates(a);
  for (Eigen::Index s = 0; s < a; ++s) {
    const auto user = static_cast<Eigen::Index>(tone.users[static_cast<std::size_t>(s)]);
    const Eigen::RowVectorXcd received = channel.row(user) * transmit;
    double interference = 0.0;
    for (Eigen::Index j = 0; j < a; ++j) {
      if (j == s) continue;
      if (kind == PrecoderKind::ZfThp && j < s) continue;  // pre-cancelled by the encoder
      interference += std::norm(received(j));
    }
    const double signal = std::norm(received(s));
    rates(s) = std::log2(1.0 + signal / (gap.linear * (interference + noise_per_line[static_cast<std::size_t>(user)])));
  }
  return rates;
}

}  // namespace gfast
