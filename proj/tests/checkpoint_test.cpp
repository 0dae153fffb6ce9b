#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <thread>

#include "dsn/checkpoint.hpp"
#include "dsn/trainer.hpp"

using dsn::DsnConfig;
using dsn::DsnModel;
using dsn::Rng;
using dsn::Tensor;

namespace {

DsnModel make_model(uint64_t seed) {
    DsnConfig c;
    c.num_sparse_layers = 3;
    c.channels = 9;
    c.kernel_size = 7;
    c.groups = 3;
    c.sparsity = 0.5f;
    c.num_classes = 3;
    c.input_variates = 2;
    c.pool_mid_len = 4;
    return dsn::build_model(c, dsn::InitMode::random, Rng(seed));
}

}  // namespace

TEST(Crc32, KnownVector) {
    const char* s = "123456789";
    EXPECT_EQ(dsn::crc32((const uint8_t*)s, 9), 0xCBF43926u);
}

TEST(Checkpoint, RoundTripReproducesLogits) {
    DsnModel model = make_model(21);
    // perturb running stats so the normalization state round-trip is exercised
    Rng rng(3);
    for (float& v : model.modules[0].bn1.state.running_mean.data) v = rng.uniform(-1.f, 1.f);
    for (float& v : model.modules[0].bn1.state.running_var.data) v = rng.uniform(0.5f, 2.f);

    const auto buf = dsn::serialize_model(model, 21, 17);
    auto loaded = dsn::deserialize_model(buf);
    EXPECT_EQ(loaded.seed, 21u);
    EXPECT_EQ(loaded.epoch, 17);

    for (int trial = 0; trial < 10; ++trial) {
        Tensor x({2, 2, 16});
        Rng r(100 + (uint64_t)trial);
        for (float& v : x.data) v = r.uniform(-1.f, 1.f);
        Tensor a = model.forward(x, false);
        Tensor b = loaded.model.forward(x, false);
        ASSERT_EQ(a.data, b.data) << "trial " << trial;
    }
}

TEST(Checkpoint, SerializationIsDeterministic) {
    DsnModel model = make_model(22);
    EXPECT_EQ(dsn::serialize_model(model, 1, 2), dsn::serialize_model(model, 1, 2));
}

TEST(Checkpoint, EveryCorruptedByteIsDetected) {
    DsnModel model = make_model(23);
    const auto buf = dsn::serialize_model(model, 5, 9);
    // flip one byte at a spread of positions, including header and tail
    for (size_t pos = 0; pos < buf.size(); pos += std::max<size_t>(1, buf.size() / 37)) {
        auto bad = buf;
        bad[pos] ^= 0x40;
        EXPECT_THROW(
            {
                try {
                    dsn::deserialize_model(bad);
                } catch (const dsn::error& e) {
                    EXPECT_EQ(e.kind(), dsn::errc::checkpoint);
                    throw;
                }
            },
            dsn::error)
            << "byte " << pos;
    }
}

TEST(Checkpoint, BadMagicRejected) {
    DsnModel model = make_model(24);
    auto buf = dsn::serialize_model(model, 1, 1);
    buf[0] = 'X';
    // fix up the checksum so the magic check itself is what fires
    const uint32_t crc = dsn::crc32(buf.data(), buf.size() - 4);
    for (int i = 0; i < 4; ++i) buf[buf.size() - 4 + (size_t)i] = (uint8_t)(crc >> (8 * i));
    try {
        dsn::deserialize_model(buf);
        FAIL() << "expected checkpoint error";
    } catch (const dsn::error& e) {
        EXPECT_EQ(e.kind(), dsn::errc::checkpoint);
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
}

TEST(Checkpoint, TruncatedFileRejected) {
    DsnModel model = make_model(25);
    auto buf = dsn::serialize_model(model, 1, 1);
    buf.resize(buf.size() / 2);
    EXPECT_THROW(dsn::deserialize_model(buf), dsn::error);
}

TEST(Checkpoint, FileRoundTrip) {
    DsnModel model = make_model(26);
    const auto path = (std::filesystem::temp_directory_path() / "ck_test.dsn").string();
    dsn::save_checkpoint(model, 7, 3, path);
    auto loaded = dsn::load_checkpoint(path);
    EXPECT_EQ(dsn::serialize_model(loaded.model, 7, 3), dsn::serialize_model(model, 7, 3));
    EXPECT_THROW(dsn::load_checkpoint(path + ".missing"), dsn::error);
}

TEST(Checkpoint, MismatchedClassesDiagnosedAtEvaluate) {
    DsnModel model = make_model(27);  // 3 classes
    const auto buf = dsn::serialize_model(model, 1, 1);
    auto loaded = dsn::deserialize_model(buf);
    dsn::TsDataset ds;
    ds.variates = 2;
    ds.length = 16;
    ds.num_classes = 5;
    ds.instances.push_back(Tensor({2, 16}, 0.5f));
    ds.labels.push_back(4);
    EXPECT_THROW(dsn::evaluate(loaded.model, ds), dsn::error);
}

TEST(Checkpoint, ConcurrentEvaluationOfLoadedModel) {
    DsnModel model = make_model(29);
    auto loaded = dsn::deserialize_model(dsn::serialize_model(model, 1, 1));
    dsn::TsDataset ds;
    ds.variates = 2;
    ds.length = 16;
    ds.num_classes = 3;
    Rng rng(4);
    for (int i = 0; i < 24; ++i) {
        Tensor inst({2, 16});
        for (float& v : inst.data) v = rng.uniform(-1.f, 1.f);
        ds.instances.push_back(std::move(inst));
        ds.labels.push_back(i % 3);
    }
    const double serial = dsn::evaluate(loaded.model, ds);
    double a = -1, b = -1;
    std::thread t1([&] { a = dsn::evaluate(loaded.model, ds); });
    std::thread t2([&] { b = dsn::evaluate(loaded.model, ds); });
    t1.join();
    t2.join();
    EXPECT_EQ(a, serial);
    EXPECT_EQ(b, serial);
}

TEST(Checkpoint, MasksSurviveSerialization) {
    DsnModel model = make_model(28);
    const auto buf = dsn::serialize_model(model, 1, 1);
    auto loaded = dsn::deserialize_model(buf);
    const auto la = static_cast<const DsnModel&>(model).sparse_layers();
    const auto lb = static_cast<const DsnModel&>(loaded.model).sparse_layers();
    for (size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i]->mask.bits, lb[i]->mask.bits);
}
