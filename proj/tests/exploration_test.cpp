#include <gtest/gtest.h>

#include "dsn/exploration.hpp"
#include "oracles.hpp"

using dsn::bigint;
using dsn::exploration_space_size;
using dsn::SpaceKind;

TEST(Binomial, SmallValues) {
    EXPECT_EQ(dsn::binomial(4, 2), 6);
    EXPECT_EQ(dsn::binomial(10, 0), 1);
    EXPECT_EQ(dsn::binomial(10, 10), 1);
    EXPECT_EQ(dsn::binomial(10, 11), 0);
    EXPECT_EQ(dsn::binomial(52, 5), 2598960);
}

TEST(Binomial, ExactForLargeArguments) {
    // C(100, 50) has 30 digits; exactness is the point of the bigint route.
    const bigint v = dsn::binomial(100, 50);
    EXPECT_EQ(v.str(), "100891344545564193334812497256");
}

TEST(ExplorationSpace, SpecTriples) {
    EXPECT_EQ(exploration_space_size(SpaceKind::layerwise, 4, 0.5, 1), 6);
    EXPECT_EQ(exploration_space_size(SpaceKind::layerwise, 8, 0.5, 2), 70);
    EXPECT_EQ(exploration_space_size(SpaceKind::grouped, 8, 0.5, 2), 36);
    EXPECT_EQ(exploration_space_size(SpaceKind::grouped_regions, 8, 0.5, 2), 6);
}

TEST(ExplorationSpace, SingleGroupCollapsesToLayerwise) {
    for (int64_t n : {4, 6, 10})
        EXPECT_EQ(exploration_space_size(SpaceKind::layerwise, n, 0.5, 1),
                  exploration_space_size(SpaceKind::grouped, n, 0.5, 1));
}

TEST(ExplorationSpace, RejectsNonIntegralCounts) {
    EXPECT_THROW(exploration_space_size(SpaceKind::layerwise, 5, 0.5, 1), dsn::error);
    EXPECT_THROW(exploration_space_size(SpaceKind::grouped, 10, 0.5, 4), dsn::error);
    // N^2 = 4 does not divide 10, so region sizes would be fractional
    EXPECT_THROW(exploration_space_size(SpaceKind::grouped_regions, 10, 0.5, 2), dsn::error);
}

TEST(ExplorationSpace, MatchesSubsetEnumeration) {
    // grouped kinds: per-group exhaustive enumeration, product over groups
    for (const int64_t n_l : {8, 12, 16}) {
        for (const int groups : {2}) {
            for (const double s : {0.25, 0.5, 0.75}) {
                const double active_d = (double)n_l * (1.0 - s);
                const int64_t active = (int64_t)std::llround(active_d);
                if (std::abs(active_d - (double)active) > 1e-9) continue;
                if (active % groups || n_l % ((int64_t)groups * groups)) continue;

                const int64_t lw = oracle::count_subsets((int)n_l, (int)active);
                EXPECT_EQ(exploration_space_size(SpaceKind::layerwise, n_l, s, groups), lw);

                int64_t grouped = 1, regions = 1;
                for (int g = 1; g <= groups; ++g) {
                    grouped *= oracle::count_subsets((int)(n_l / groups), (int)(active / groups));
                    regions *= oracle::count_subsets((int)(g * n_l / (groups * groups)),
                                                     (int)(active / groups));
                }
                EXPECT_EQ(exploration_space_size(SpaceKind::grouped, n_l, s, groups), grouped);
                EXPECT_EQ(exploration_space_size(SpaceKind::grouped_regions, n_l, s, groups),
                          regions);
            }
        }
    }
}

TEST(ExplorationSpace, OrderingHoldsOnGrid) {
    for (int64_t n_l = 1; n_l <= 32; ++n_l)
        for (const int groups : {2, 3, 4})
            for (const double s : {0.25, 0.5, 0.75}) {
                const double active_d = (double)n_l * (1.0 - s);
                const int64_t active = (int64_t)std::llround(active_d);
                if (std::abs(active_d - (double)active) > 1e-9) continue;
                if (active % groups || n_l % ((int64_t)groups * groups)) continue;
                const bigint lw = exploration_space_size(SpaceKind::layerwise, n_l, s, groups);
                const bigint gr = exploration_space_size(SpaceKind::grouped, n_l, s, groups);
                const bigint rg =
                    exploration_space_size(SpaceKind::grouped_regions, n_l, s, groups);
                EXPECT_LE(rg, gr) << "N_l=" << n_l << " N=" << groups << " S=" << s;
                EXPECT_LE(gr, lw) << "N_l=" << n_l << " N=" << groups << " S=" << s;
            }
}
