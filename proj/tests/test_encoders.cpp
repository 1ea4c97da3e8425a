#include <gtest/gtest.h>

#include "icr/encoders.hpp"

using namespace icr;

TEST(ImageEncoderTest, UnitNormRows) {
  SeededRng rng(1);
  ImageEncoder enc(6, 5, 4, rng);
  const Matrix x = random_gaussian_matrix(9, 6, rng);
  const Matrix z = enc.forward(x);
  ASSERT_EQ(z.rows, 9u);
  ASSERT_EQ(z.cols, 4u);
  for (std::size_t i = 0; i < z.rows; ++i)
    EXPECT_NEAR(l2_norm(z.row(i), z.cols), 1.0, 1e-10);
}

TEST(ImageEncoderTest, DeterministicAndStateless) {
  SeededRng rng(2);
  ImageEncoder enc(6, 5, 4, rng);
  const Matrix x = random_gaussian_matrix(3, 6, rng);
  const Matrix other = random_gaussian_matrix(5, 6, rng);
  const Matrix first = enc.forward(x);
  enc.forward(other);  // unrelated call in between
  const Matrix second = enc.forward(x);
  EXPECT_EQ(first, second);
}

TEST(ImageEncoderTest, WrongFeatureDimThrows) {
  SeededRng rng(3);
  ImageEncoder enc(6, 5, 4, rng);
  EXPECT_THROW(enc.forward(Matrix(2, 7)), ShapeMismatch);
}

TEST(CaptionEncoderTest, MeanPoolPermutationInvariant) {
  SeededRng rng(4);
  CaptionEncoder enc(12, 4, 5, 4, CaptionPooling::MeanPool, rng);
  const Matrix a = enc.forward({{5, 9}});
  const Matrix b = enc.forward({{9, 5}});
  EXPECT_EQ(a, b);
}

TEST(CaptionEncoderTest, GruOrderSensitive) {
  SeededRng rng(5);
  CaptionEncoder enc(12, 4, 5, 4, CaptionPooling::Gru, rng);
  const Matrix a = enc.forward({{5, 9, 2}});
  const Matrix b = enc.forward({{2, 9, 5}});
  EXPECT_NE(a, b);
}

TEST(CaptionEncoderTest, UnitNormRowsBothPoolings) {
  SeededRng rng(6);
  for (CaptionPooling p : {CaptionPooling::MeanPool, CaptionPooling::Gru}) {
    CaptionEncoder enc(12, 4, 5, 4, p, rng);
    const Matrix z = enc.forward({{1, 2, 3}, {4}, {7, 8}});
    for (std::size_t i = 0; i < z.rows; ++i)
      EXPECT_NEAR(l2_norm(z.row(i), z.cols), 1.0, 1e-10);
  }
}

TEST(CaptionEncoderTest, SingleTokenEqualsHeadOfEmbeddingRow) {
  SeededRng rng(7);
  CaptionEncoder enc(12, 4, 5, 4, CaptionPooling::MeanPool, rng);
  SeededRng rng2(7);
  EmbeddingMeanPool ref_pool(12, 4, rng2);
  ProjectionHead ref_head(4, 5, 4, rng2);
  const Matrix via_encoder = enc.forward({{7}});
  Matrix e(1, 4);
  std::copy(ref_pool.table().row(7), ref_pool.table().row(7) + 4, e.row(0));
  const Matrix via_head = ref_head.forward(e);
  EXPECT_EQ(via_encoder, via_head);
}

TEST(CaptionEncoderTest, Errors) {
  SeededRng rng(8);
  CaptionEncoder enc(12, 4, 5, 4, CaptionPooling::MeanPool, rng);
  EXPECT_THROW(enc.forward({{}}), EmptyCaption);
  EXPECT_THROW(enc.forward({{12}}), TokenOutOfRange);

  SeededRng rng2(8);
  CaptionEncoder gru(12, 4, 5, 4, CaptionPooling::Gru, rng2);
  EXPECT_THROW(gru.forward({{}}), EmptyCaption);
  EXPECT_THROW(gru.forward({{-3}}), TokenOutOfRange);
}

TEST(CaptionEncoderTest, DeterministicAcrossInstances) {
  SeededRng a(9), b(9);
  CaptionEncoder e1(12, 4, 5, 4, CaptionPooling::Gru, a);
  CaptionEncoder e2(12, 4, 5, 4, CaptionPooling::Gru, b);
  EXPECT_EQ(e1.forward({{3, 1, 4}}), e2.forward({{3, 1, 4}}));
}
