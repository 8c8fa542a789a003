#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "weldsign/weights.hpp"

using namespace weldsign;

namespace {

WeightStore random_store(uint64_t seed) {
    XorShift64Star rng(seed);
    WeightStore s;
    s.add("alpha.weight", oracles::random_tensor({3, 3, 2, 4}, rng));
    s.add("alpha.bias", oracles::random_tensor({4}, rng));
    s.add("bn.gamma", oracles::random_tensor({7}, rng));
    s.add("deep.w", oracles::random_tensor({2, 5, 1, 3}, rng));
    return s;
}

// bitwise CRC-32 without the library's lookup table
uint32_t crc32_reference(const std::vector<uint8_t>& bytes, size_t len) {
    uint32_t crc = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) {
        crc ^= bytes[i];
        for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

}  // namespace

TEST(WeightFormat, RoundTripIsBitIdentical) {
    const WeightStore s = random_store(111);
    const std::vector<uint8_t> bytes = save_weights(s);
    const WeightStore back = load_weights(bytes);
    ASSERT_EQ(back.size(), s.size());
    size_t i = 0;
    for (const auto& [name, t] : s) {
        EXPECT_TRUE(back.contains(name));
        const Tensor& bt = back.get(name);
        ASSERT_TRUE(bt.same_shape(t));
        for (int64_t j = 0; j < t.size(); ++j) {
            EXPECT_EQ(std::bit_cast<uint32_t>(bt[j]), std::bit_cast<uint32_t>(t[j]));
        }
        ++i;
    }
    // a second save of the loaded store yields the same bytes
    EXPECT_EQ(save_weights(back), bytes);
}

TEST(WeightFormat, OrderIsPreserved) {
    const WeightStore s = random_store(112);
    const WeightStore back = load_weights(save_weights(s));
    auto it = back.begin();
    for (const auto& [name, t] : s) {
        EXPECT_EQ(it->first, name);
        ++it;
    }
}

TEST(WeightFormat, FlippedPayloadBitFailsTheChecksum) {
    std::vector<uint8_t> bytes = save_weights(random_store(113));
    bytes[bytes.size() / 2] ^= 0x10;
    EXPECT_THROW(load_weights(bytes), BadCrcError);
}

TEST(WeightFormat, BadMagicIsItsOwnError) {
    std::vector<uint8_t> bytes = save_weights(random_store(114));
    bytes[0] = 'X';
    EXPECT_THROW(load_weights(bytes), BadMagicError);
}

TEST(WeightFormat, TruncationIsItsOwnError) {
    const std::vector<uint8_t> bytes = save_weights(random_store(115));
    for (size_t cut : {bytes.size() - 1, bytes.size() - 4, bytes.size() / 2, size_t{10}}) {
        std::vector<uint8_t> short_bytes(bytes.begin(), bytes.begin() + static_cast<ptrdiff_t>(cut));
        EXPECT_THROW(load_weights(short_bytes), TruncatedFileError) << "cut at " << cut;
    }
}

TEST(WeightFormat, EmptyStoreGoldenBytes) {
    const std::vector<uint8_t> bytes = save_weights(WeightStore{});
    ASSERT_EQ(bytes.size(), 16u);
    const std::vector<uint8_t> header{'W', 'L', 'D', 'W', 1, 0, 0, 0, 0, 0, 0, 0};
    for (size_t i = 0; i < header.size(); ++i) EXPECT_EQ(bytes[i], header[i]) << "byte " << i;
    const uint32_t want_crc = crc32_reference(bytes, 12);
    const uint32_t got_crc = static_cast<uint32_t>(bytes[12]) | (static_cast<uint32_t>(bytes[13]) << 8) |
                             (static_cast<uint32_t>(bytes[14]) << 16) | (static_cast<uint32_t>(bytes[15]) << 24);
    EXPECT_EQ(got_crc, want_crc);
    EXPECT_EQ(load_weights(bytes).size(), 0u);
}

TEST(WeightFormat, LibraryCrcMatchesBitwiseReference) {
    XorShift64Star rng(116);
    std::vector<uint8_t> data(257);
    for (auto& b : data) b = static_cast<uint8_t>(rng.next_u64());
    EXPECT_EQ(crc32(data.data(), data.size()), crc32_reference(data, data.size()));
    // the standard check value
    const std::vector<uint8_t> check{'1', '2', '3', '4', '5', '6', '7', '8', '9'};
    EXPECT_EQ(crc32(check.data(), check.size()), 0xCBF43926u);
}

TEST(WeightStoreApi, DuplicatesAndMissingNamesAreRejected) {
    WeightStore s;
    s.add("a", Tensor({2}));
    EXPECT_THROW(s.add("a", Tensor({3})), std::invalid_argument);
    EXPECT_THROW(s.get("nope"), std::invalid_argument);
    EXPECT_EQ(s.total_floats(), 2);
}

TEST(WeightFormat, FileRoundTrip) {
    const std::string path = std::filesystem::temp_directory_path() / "weldsign_test_store.wld";
    const WeightStore s = random_store(117);
    save_weights_file(path, s);
    const WeightStore back = load_weights_file(path);
    EXPECT_EQ(save_weights(back), save_weights(s));
    std::filesystem::remove(path);
    EXPECT_THROW(load_weights_file(path), std::runtime_error);
}
