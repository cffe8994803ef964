#include <gtest/gtest.h>

#include "elastic/speed_model.hpp"
#include "support/oracles.hpp"

using namespace elastic;

TEST(SpeedCurve, KnownValues) {
  SpeedCurve curve;
  EXPECT_EQ(curve.speed(1), 1.0);
  EXPECT_EQ(curve.speed(2), 1.6);
  EXPECT_EQ(curve.speed(4), 2.56);
  EXPECT_EQ(curve.speed(16), 6.5536);
  EXPECT_EQ(curve.speed(0), 0.0);
}

TEST(SpeedCurve, DoublingRatioIsOnePointSix) {
  SpeedCurve curve(powers_of_two_up_to(1024));
  for (int k = 1; k < 1024; k *= 2) EXPECT_NEAR(curve.speed(2 * k) / curve.speed(k), 1.6, 1e-15) << k;
}

TEST(SpeedCurve, MatchesReferenceExactly) {
  SpeedCurve curve(powers_of_two_up_to(1 << 20));
  for (int k : curve.legal_set()) EXPECT_EQ(curve.speed(k), oracle::speed(k)) << k;
}

TEST(SpeedCurve, StepAndSecondProgress) {
  SpeedCurve curve;
  EXPECT_EQ(curve.step_progress(8, 0.5), 0.5 * 4.096);
  EXPECT_DOUBLE_EQ(curve.per_second_progress(2) * 3600.0, 1.6);
}

TEST(SpeedCurve, RejectsCountsOutsideTheLegalSet) {
  SpeedCurve curve;
  for (int k : {3, 5, 32, -1}) {
    try {
      (void)curve.speed(k);
      FAIL() << k;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::domain);
    }
  }
}

TEST(SpeedCurve, MonotoneAndConcaveOnChords) {
  SpeedCurve curve(powers_of_two_up_to(32));
  const auto& K = curve.legal_set();
  for (std::size_t i = 1; i < K.size(); ++i) EXPECT_GT(curve.speed(K[i]), curve.speed(K[i - 1]));
  double previous_slope = curve.speed(1);  // chord from (0, 0)
  for (std::size_t i = 1; i < K.size(); ++i) {
    const double slope = (curve.speed(K[i]) - curve.speed(K[i - 1])) / (K[i] - K[i - 1]);
    EXPECT_LT(slope, previous_slope);
    previous_slope = slope;
  }
}

TEST(LegalSet, Validation) {
  EXPECT_NO_THROW(validate_legal_set(LegalSet{1, 2, 4, 8, 16}));
  EXPECT_NO_THROW(validate_legal_set(LegalSet{1, 4, 8}));
  EXPECT_THROW(validate_legal_set(LegalSet{}), Error);
  EXPECT_THROW(validate_legal_set(LegalSet{2, 4}), Error);
  EXPECT_THROW(validate_legal_set(LegalSet{1, 3}), Error);
  EXPECT_THROW(validate_legal_set(LegalSet{1, 4, 2}), Error);
  EXPECT_THROW(validate_legal_set(LegalSet{1, 1 << 21}), Error);
}

TEST(Attenuation, ParsesDecimals) {
  EXPECT_EQ(Attenuation::from_decimal("0.8"), (Attenuation{4, 5}));
  EXPECT_EQ(Attenuation::from_decimal("0.75"), (Attenuation{3, 4}));
  EXPECT_EQ(Attenuation::from_decimal("1"), (Attenuation{1, 1}));
  EXPECT_THROW(Attenuation::from_decimal("0.5"), Error);
  EXPECT_THROW(Attenuation::from_decimal("1.2"), Error);
  EXPECT_THROW(Attenuation::from_decimal("abc"), Error);
}

TEST(Attenuation, LinearSpeedWhenBaseIsOne) {
  SpeedCurve curve(default_legal_set(), Attenuation{1, 1});
  for (int k : curve.legal_set()) EXPECT_EQ(curve.speed(k), static_cast<double>(k));
}
