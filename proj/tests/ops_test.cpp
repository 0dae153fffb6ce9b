#include <gtest/gtest.h>

#include <cmath>

#include "dsn/ops.hpp"
#include "dsn/rng.hpp"
#include "oracles.hpp"

using dsn::Tensor;

TEST(Conv1d, IdentityKernel) {
    Tensor x = Tensor::of({1, 3}, {1, 2, 3});
    Tensor w = Tensor::of({1, 1, 3}, {0, 1, 0});
    Tensor b({1});
    Tensor y = dsn::conv1d_forward(x, w, b);
    EXPECT_EQ(y.shape, (std::vector<int>{1, 3}));
    EXPECT_FLOAT_EQ(y.data[0], 1.f);
    EXPECT_FLOAT_EQ(y.data[1], 2.f);
    EXPECT_FLOAT_EQ(y.data[2], 3.f);
}

TEST(Conv1d, BoxKernelWithPadding) {
    Tensor x = Tensor::of({1, 3}, {1, 1, 1});
    Tensor w = Tensor::of({1, 1, 3}, {1, 1, 1});
    Tensor b({1});
    Tensor y = dsn::conv1d_forward(x, w, b);
    EXPECT_FLOAT_EQ(y.data[0], 2.f);
    EXPECT_FLOAT_EQ(y.data[1], 3.f);
    EXPECT_FLOAT_EQ(y.data[2], 2.f);
}

TEST(Conv1d, ZeroWeightsGiveConstantBias) {
    dsn::Rng rng(7);
    Tensor x({2, 9});
    for (float& v : x.data) v = rng.uniform(-1.f, 1.f);
    Tensor w({3, 2, 5});
    Tensor b = Tensor::of({3}, {0.5f, -1.f, 2.f});
    Tensor y = dsn::conv1d_forward(x, w, b);
    for (int j = 0; j < 3; ++j)
        for (int t = 0; t < 9; ++t) EXPECT_FLOAT_EQ(y.at(j, t), b.data[(size_t)j]);
}

TEST(Conv1d, ChannelMismatchRejected) {
    Tensor x({2, 4});
    Tensor w({1, 3, 3});
    Tensor b({1});
    EXPECT_THROW(
        {
            try {
                dsn::conv1d_forward(x, w, b);
            } catch (const dsn::error& e) {
                EXPECT_EQ(e.kind(), dsn::errc::shape);
                throw;
            }
        },
        dsn::error);
}

TEST(Conv1d, MatchesNaiveOracleOnRandomShapes) {
    dsn::Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const int c_in = 1 + (int)rng.next_below(4);
        const int c_out = 1 + (int)rng.next_below(4);
        const int k = 1 + (int)rng.next_below(7);
        const int L = 1 + (int)rng.next_below(16);
        Tensor x({c_in, L}), w({c_out, c_in, k}), b({c_out});
        for (float& v : x.data) v = rng.uniform(-1.f, 1.f);
        for (float& v : w.data) v = rng.uniform(-1.f, 1.f);
        for (float& v : b.data) v = rng.uniform(-1.f, 1.f);
        Tensor got = dsn::conv1d_forward(x, w, b);
        Tensor want = oracle::conv1d(x, w, b);
        ASSERT_EQ(got.shape, want.shape);
        ASSERT_EQ(got.dim(1), L) << "stride-1 same padding must preserve length";
        for (int64_t i = 0; i < got.size(); ++i)
            EXPECT_NEAR(got.data[(size_t)i], want.data[(size_t)i], 1e-5f);
    }
}

TEST(Conv1d, BatchedPathMatchesSingleInstance) {
    dsn::Rng rng(13);
    const int B = 3, c_in = 2, c_out = 4, k = 5, L = 12;
    Tensor xb({B, c_in, L}), w({c_out, c_in, k}), b({c_out});
    for (float& v : xb.data) v = rng.uniform(-1.f, 1.f);
    for (float& v : w.data) v = rng.uniform(-1.f, 1.f);
    for (float& v : b.data) v = rng.uniform(-1.f, 1.f);
    const dsn::ConvTaps taps = dsn::ConvTaps::dense(c_out, c_in, k);
    Tensor yb = dsn::conv1d_forward_batch(xb, w, b, taps);
    for (int bi = 0; bi < B; ++bi) {
        Tensor x({c_in, L});
        std::copy(xb.ptr() + (int64_t)bi * c_in * L, xb.ptr() + (int64_t)(bi + 1) * c_in * L,
                  x.ptr());
        Tensor y = dsn::conv1d_forward(x, w, b);
        for (int64_t i = 0; i < y.size(); ++i)
            EXPECT_EQ(y.data[(size_t)i], yb.data[(size_t)(bi * y.size() + i)])
                << "batched rows must be bit-identical to the single-instance kernel";
    }
}

TEST(Pool, SpecExamples) {
    Tensor a = Tensor::of({1, 3}, {2, 4, 6});
    Tensor p1 = dsn::adaptive_avg_pool1d(a, 1);
    EXPECT_FLOAT_EQ(p1.data[0], 4.f);

    Tensor b = Tensor::of({1, 4}, {1, 2, 3, 4});
    Tensor p2 = dsn::adaptive_avg_pool1d(b, 2);
    EXPECT_FLOAT_EQ(p2.data[0], 1.5f);
    EXPECT_FLOAT_EQ(p2.data[1], 3.5f);
}

TEST(Pool, FullLengthIsIdentity) {
    dsn::Rng rng(3);
    Tensor x({2, 7});
    for (float& v : x.data) v = rng.uniform(-2.f, 2.f);
    Tensor y = dsn::adaptive_avg_pool1d(x, 7);
    for (int64_t i = 0; i < x.size(); ++i) EXPECT_EQ(x.data[(size_t)i], y.data[(size_t)i]);
}

TEST(Pool, MeanPreservedWhenDividesExactly) {
    dsn::Rng rng(5);
    Tensor x({1, 12});
    for (float& v : x.data) v = rng.uniform(-1.f, 1.f);
    for (int m : {1, 2, 3, 4, 6, 12}) {
        Tensor y = dsn::adaptive_avg_pool1d(x, m);
        double mean_x = 0, mean_y = 0;
        for (float v : x.data) mean_x += v;
        for (float v : y.data) mean_y += v;
        EXPECT_NEAR(mean_x / 12.0, mean_y / m, 1e-6);
    }
}

TEST(Pool, RejectsBadOutputLength) {
    Tensor x({1, 4});
    EXPECT_THROW(dsn::adaptive_avg_pool1d(x, 5), dsn::error);
    EXPECT_THROW(dsn::adaptive_avg_pool1d(x, 0), dsn::error);
}

TEST(CrossEntropy, UniformLogits) {
    Tensor logits({3});
    EXPECT_NEAR(dsn::cross_entropy(logits, 1), std::log(3.0), 1e-6);
}

TEST(CrossEntropy, StableForExtremeLogits) {
    Tensor logits = Tensor::of({3}, {1e4f, -1e4f, 0.f});
    EXPECT_TRUE(std::isfinite(dsn::cross_entropy(logits, 0)));
    EXPECT_TRUE(std::isfinite(dsn::cross_entropy(logits, 1)));
    EXPECT_NEAR(dsn::cross_entropy(logits, 0), 0.0, 1e-5);
}

TEST(CrossEntropy, RejectsBadLabel) {
    Tensor logits({3});
    EXPECT_THROW(dsn::cross_entropy(logits, 3), dsn::error);
    EXPECT_THROW(dsn::cross_entropy(logits, -1), dsn::error);
}

TEST(Relu, GateMatchesSign) {
    Tensor x = Tensor::of({1, 4}, {-1.f, 0.f, 0.5f, 2.f});
    std::vector<uint8_t> gate;
    dsn::relu_forward_inplace(x, &gate);
    EXPECT_EQ(x.data, (std::vector<float>{0.f, 0.f, 0.5f, 2.f}));
    EXPECT_EQ(gate, (std::vector<uint8_t>{0, 0, 1, 1}));
}

TEST(BatchNorm, NormalizesPerChannel) {
    dsn::Rng rng(17);
    const int B = 4, C = 3, L = 8;
    Tensor x({B, C, L});
    for (float& v : x.data) v = rng.uniform(-3.f, 5.f);
    Tensor gamma({C}, 1.f), beta({C}, 0.f);
    dsn::BatchNormState st(C);
    dsn::BatchNormCache cache;
    Tensor y = dsn::batchnorm_forward(x, gamma, beta, st, true, &cache);
    for (int c = 0; c < C; ++c) {
        double mean = 0, var = 0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < L; ++t) mean += y.at(b, c, t);
        mean /= B * L;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < L; ++t) var += (y.at(b, c, t) - mean) * (y.at(b, c, t) - mean);
        var /= B * L;
        EXPECT_NEAR(mean, 0.0, 1e-5);
        EXPECT_NEAR(var, 1.0, 1e-3);
    }
}

TEST(BatchNorm, EvalUsesRunningStats) {
    const int C = 2;
    Tensor x({1, C, 4}, 3.f);
    Tensor gamma({C}, 1.f), beta({C}, 0.f);
    dsn::BatchNormState st(C);  // running mean 0, var 1
    Tensor y = dsn::batchnorm_forward(x, gamma, beta, st, false, nullptr);
    for (float v : y.data) EXPECT_NEAR(v, 3.f, 1e-4);
}
