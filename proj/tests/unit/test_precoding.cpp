#include <cmath>
#include <vector>

#include "doctest.h"
#include "gfast/errors.hpp"
#include "gfast/precoding.hpp"

using namespace gfast;

namespace {

ChannelTensor single_tone(const Eigen::MatrixXcd& H, double noise = 1e-3) {
  BandPlan band;
  band.num_tones = 1;
  return ChannelTensor(band, {H}, Eigen::MatrixXd::Constant(1, H.rows(), noise));
}

}  // namespace

TEST_CASE("order puts prioritized lines first, longest first inside each group") {
  const std::vector<double> lengths{100, 300, 50, 300, 200};
  const auto part = PriorityPartition::from_prioritized(5, {2, 4});
  const auto order = make_order(lengths, part);
  CHECK(order.lines == std::vector<std::size_t>{4, 2, 1, 3, 0});
  const auto ranks = order.ranks();
  CHECK(ranks[4] == 0);
  CHECK(ranks[0] == 4);

  const auto all = make_order(lengths, PriorityPartition::all(5));
  CHECK(all.lines == std::vector<std::size_t>{1, 3, 4, 0, 2});
}

TEST_CASE("encoding order must be a permutation") {
  EncodingOrder bad{{0, 0, 2}};
  CHECK_THROWS_AS(bad.validate(3), ValidationError);
  EncodingOrder short_order{{0, 1}};
  CHECK_THROWS_AS(short_order.validate(3), ValidationError);
}

TEST_CASE("rate and bit cap are inverse") {
  const SnrGap gap = SnrGap::from_db(9.75);
  const double g = 0.3, noise = 2e-9;
  CHECK(rate(g, 0.0, gap, noise) == 0.0);
  const double p = bitcap_to_power_cap(g, gap, noise, 12.0);
  CHECK(rate(g, p, gap, noise) == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(std::isinf(bitcap_to_power_cap(0.0, gap, noise, 12.0)));
  // log2(1 + 3) = 2 with unit gap
  CHECK(rate(1.0, 3.0, SnrGap{1.0}, 1.0) == doctest::Approx(2.0));
}

TEST_CASE("diagonal channel: ZF columns are unit vectors, gains are |h|^2") {
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2, 2);
  H(0, 0) = 2.0;
  H(1, 1) = Complex(0.0, 1.0);
  const auto t = single_tone(H);
  const auto s = build_precoder(PrecoderKind::ZfLinear, t, DisabledSet(1, 2), EncodingOrder{{0, 1}});
  const auto& tone = s.tones[0];
  REQUIRE(tone.usable);
  REQUIRE(tone.users.size() == 2);
  CHECK(tone.gain(0) == doctest::Approx(4.0));
  CHECK(tone.gain(1) == doctest::Approx(1.0));
  CHECK(tone.power_map(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(tone.power_map(1, 0)) < 1e-15);
}

TEST_CASE("THP on a lower-triangular channel needs no rotation") {
  Eigen::MatrixXcd H(3, 3);
  H << 1.0, 0.0, 0.0, 0.4, 2.0, 0.0, Complex(0.1, 0.2), 0.3, 0.5;
  const auto t = single_tone(H);
  const auto s = build_precoder(PrecoderKind::ZfThp, t, DisabledSet(1, 3), EncodingOrder{{0, 1, 2}});
  const auto& tone = s.tones[0];
  REQUIRE(tone.usable);
  CHECK(tone.users == std::vector<std::size_t>{0, 1, 2});
  CHECK(tone.gain(0) == doctest::Approx(1.0));
  CHECK(tone.gain(1) == doctest::Approx(4.0));
  CHECK(tone.gain(2) == doctest::Approx(0.25));
  // Stream j stays invisible to the users encoded before it.
  for (int j = 1; j < 3; ++j)
    for (int u = 0; u < j; ++u) CHECK(std::abs((H.row(u) * tone.columns.col(j))(0)) < 1e-12);
  // Feedback is strictly lower triangular.
  for (int r = 0; r < 3; ++r)
    for (int c = r; c < 3; ++c) CHECK(std::abs(tone.feedback(r, c)) < 1e-15);
}

TEST_CASE("THP streams follow the encoding order restricted to active lines") {
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Identity(3, 3);
  H(0, 1) = 0.2;
  H(2, 0) = 0.1;
  const auto t = single_tone(H);
  DisabledSet dis(1, 3);
  dis.insert(0, 1);
  const auto s = build_precoder(PrecoderKind::ZfThp, t, dis, EncodingOrder{{2, 1, 0}});
  CHECK(s.tones[0].users == std::vector<std::size_t>{2, 0});
}

TEST_CASE("explicit rates of a ZF tone ignore nulled interference") {
  Eigen::MatrixXcd H(2, 2);
  H << 1.0, 0.3, 0.2, 0.8;
  const auto t = single_tone(H, 1e-2);
  const auto s = build_precoder(PrecoderKind::ZfLinear, t, DisabledSet(1, 2), EncodingOrder{{0, 1}});
  const std::vector<double> p{0.5, 0.25};
  const std::vector<double> noise{1e-2, 1e-2};
  const auto r = explicit_stream_rates(PrecoderKind::ZfLinear, H, s.tones[0], p, SnrGap{1.0}, noise);
  for (int k = 0; k < 2; ++k)
    CHECK(r(k) == doctest::Approx(rate(s.tones[0].gain(k), p[static_cast<std::size_t>(k)], SnrGap{1.0}, 1e-2)));
}

TEST_CASE("disabled set bookkeeping") {
  DisabledSet d(3, 2);
  CHECK(d.insert(1, 0));
  CHECK_FALSE(d.insert(1, 0));
  CHECK(d.size() == 1);
  CHECK(d.disabled_on_tone(1) == 1);
  CHECK(d.active_lines(1) == std::vector<std::size_t>{1});
  DisabledSet e(3, 2);
  e.insert(2, 1);
  CHECK(d.merged(e).size() == 2);
}
