#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "cowsynth/metrics.hpp"
#include "doctest.h"

using namespace cow;

namespace {

struct Vox {
    int z, y, x;
};

// Exhaustive re-implementation used as the oracle: surface extraction by
// definition, then all-pairs nearest distances.
std::vector<Vox> surface_voxels(const BinaryMask& m) {
    auto fg = [&](int z, int y, int x) {
        if (z < 0 || z >= m.depth || y < 0 || y >= m.height || x < 0 || x >= m.width)
            return false;
        return m.at(z, y, x) != 0;
    };
    std::vector<Vox> out;
    for (int z = 0; z < m.depth; ++z)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                if (fg(z, y, x) &&
                    (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) ||
                     !fg(z, y + 1, x) || !fg(z, y, x - 1) || !fg(z, y, x + 1)))
                    out.push_back({z, y, x});
    return out;
}

double hd95_bruteforce(const BinaryMask& a, const BinaryMask& b) {
    auto sa = surface_voxels(a);
    auto sb = surface_voxels(b);
    auto spacing = a.spacing;
    auto directed = [&](const std::vector<Vox>& from, const std::vector<Vox>& to) {
        std::vector<double> d;
        for (const Vox& p : from) {
            double best = 1e300;
            for (const Vox& q : to) {
                double dz = (p.z - q.z) * double(spacing[0]);
                double dy = (p.y - q.y) * double(spacing[1]);
                double dx = (p.x - q.x) * double(spacing[2]);
                best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            d.push_back(std::sqrt(best));
        }
        return d;
    };
    return std::max(percentile(directed(sa, sb), 0.95),
                    percentile(directed(sb, sa), 0.95));
}

BinaryMask random_blobs(int d, int h, int w, int n_seeds, uint64_t seed,
                        std::array<float, 3> spacing = {1.f, 1.f, 1.f}) {
    BinaryMask m(d, h, w);
    m.spacing = spacing;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dz(0, d - 1), dy(0, h - 1), dx(0, w - 1);
    std::uniform_int_distribution<int> rad(0, 1);
    for (int i = 0; i < n_seeds; ++i) {
        int cz = dz(rng), cy = dy(rng), cx = dx(rng), r = rad(rng);
        for (int z = std::max(0, cz - r); z <= std::min(d - 1, cz + r); ++z)
            for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y)
                for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x)
                    m.at(z, y, x) = 1;
    }
    return m;
}

}  // namespace

TEST_CASE("dice score") {
    SUBCASE("pinned overlap example gives 2/3") {
        BinaryMask p(1, 1, 4), g(1, 1, 4);
        p.at(0, 0, 0) = 1;
        p.at(0, 0, 1) = 1;
        g.at(0, 0, 0) = 1;
        CHECK(dice_score(p, g) == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("identical non-empty masks give 1") {
        BinaryMask m = random_blobs(3, 8, 8, 5, 1);
        CHECK(dice_score(m, m) == 1.0);
    }
    SUBCASE("both empty counts as perfect agreement") {
        BinaryMask p(2, 4, 4), g(2, 4, 4);
        CHECK(dice_score(p, g) == 1.0);
    }
    SUBCASE("one empty gives 0") {
        BinaryMask p(2, 4, 4), g(2, 4, 4);
        g.at(0, 1, 1) = 1;
        CHECK(dice_score(p, g) == 0.0);
        CHECK(dice_score(g, p) == 0.0);
    }
    SUBCASE("disjoint non-empty masks give 0") {
        BinaryMask p(1, 2, 2), g(1, 2, 2);
        p.at(0, 0, 0) = 1;
        g.at(0, 1, 1) = 1;
        CHECK(dice_score(p, g) == 0.0);
    }
    SUBCASE("symmetry") {
        BinaryMask a = random_blobs(3, 10, 10, 6, 2);
        BinaryMask b = random_blobs(3, 10, 10, 6, 3);
        CHECK(dice_score(a, b) == doctest::Approx(dice_score(b, a)));
    }
    SUBCASE("shape mismatch throws") {
        BinaryMask a(1, 4, 4), b(1, 4, 5);
        CHECK_THROWS_AS(dice_score(a, b), std::invalid_argument);
    }
}

TEST_CASE("percentile interpolates linearly") {
    std::vector<double> v;
    for (int i = 1; i <= 20; ++i) v.push_back(i);
    CHECK(percentile(v, 0.95) == doctest::Approx(19.05));
    CHECK(percentile(v, 0.0) == doctest::Approx(1.0));
    CHECK(percentile(v, 1.0) == doctest::Approx(20.0));
    CHECK(percentile({4.0}, 0.95) == doctest::Approx(4.0));
    CHECK(percentile({1.0, 2.0}, 0.5) == doctest::Approx(1.5));
    CHECK_THROWS_AS(percentile({}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(percentile({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("hd95 pinned value: two voxels five apart") {
    BinaryMask a(1, 1, 8), b(1, 1, 8);
    a.at(0, 0, 1) = 1;
    b.at(0, 0, 6) = 1;
    auto d = hd95(a, b);
    REQUIRE(d.has_value());
    CHECK(*d == doctest::Approx(5.0));
}

TEST_CASE("hd95 basics") {
    SUBCASE("identical masks give 0") {
        BinaryMask m = random_blobs(4, 10, 10, 8, 7);
        auto d = hd95(m, m);
        REQUIRE(d.has_value());
        CHECK(*d == doctest::Approx(0.0));
    }
    SUBCASE("symmetric in its arguments") {
        BinaryMask a = random_blobs(3, 12, 12, 6, 8);
        BinaryMask b = random_blobs(3, 12, 12, 6, 9);
        CHECK(*hd95(a, b) == doctest::Approx(*hd95(b, a)));
    }
    SUBCASE("empty mask on either side yields no value") {
        BinaryMask e(2, 5, 5);
        BinaryMask m = random_blobs(2, 5, 5, 3, 10);
        CHECK_FALSE(hd95(e, m).has_value());
        CHECK_FALSE(hd95(m, e).has_value());
        CHECK_FALSE(hd95(e, e).has_value());
    }
    SUBCASE("only the surface matters: solid vs hollow box agree") {
        BinaryMask solid(5, 9, 9);
        for (int z = 1; z <= 3; ++z)
            for (int y = 2; y <= 6; ++y)
                for (int x = 2; x <= 6; ++x) solid.at(z, y, x) = 1;
        BinaryMask shifted = solid;  // same shape moved by one voxel in x
        shifted.data.assign(shifted.size(), 0);
        for (int z = 1; z <= 3; ++z)
            for (int y = 2; y <= 6; ++y)
                for (int x = 3; x <= 7; ++x) shifted.at(z, y, x) = 1;
        auto d = hd95(solid, shifted);
        REQUIRE(d.has_value());
        CHECK(*d == doctest::Approx(1.0));
    }
    SUBCASE("anisotropic spacing weights each axis") {
        BinaryMask a(4, 4, 4), b(4, 4, 4);
        a.spacing = {3.0f, 1.0f, 1.0f};
        b.spacing = a.spacing;
        a.at(0, 0, 0) = 1;
        b.at(2, 0, 0) = 1;  // two slices apart at 3 mm slice gap
        CHECK(*hd95(a, b) == doctest::Approx(6.0));
    }
    SUBCASE("spacing mismatch throws") {
        BinaryMask a(1, 4, 4), b(1, 4, 4);
        a.at(0, 0, 0) = 1;
        b.at(0, 0, 0) = 1;
        b.spacing = {2.f, 1.f, 1.f};
        CHECK_THROWS_AS(hd95(a, b), std::invalid_argument);
    }
}

TEST_CASE("hd95 matches the all-pairs oracle on random masks") {
    int tested = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        std::array<float, 3> spacing = {1.f, 1.f, 1.f};
        if (seed % 3 == 1) spacing = {2.5f, 0.75f, 0.75f};
        if (seed % 3 == 2) spacing = {1.0f, 0.5f, 2.0f};
        BinaryMask a = random_blobs(4, 9, 9, 4, 1000 + seed, spacing);
        BinaryMask b = random_blobs(4, 9, 9, 4, 2000 + seed, spacing);
        if (a.count_positive() == 0 || b.count_positive() == 0) continue;
        if (surface_voxels(a).size() > 50 || surface_voxels(b).size() > 50) continue;
        auto fast = hd95(a, b);
        REQUIRE(fast.has_value());
        CHECK(*fast == doctest::Approx(hd95_bruteforce(a, b)).epsilon(1e-9));
        ++tested;
    }
    CHECK(tested >= 50);
}

TEST_CASE("hd95 scales linearly with spacing") {
    BinaryMask a = random_blobs(3, 10, 10, 5, 31);
    BinaryMask b = random_blobs(3, 10, 10, 5, 32);
    double base = *hd95(a, b);
    a.spacing = {2.f, 2.f, 2.f};
    b.spacing = {2.f, 2.f, 2.f};
    CHECK(*hd95(a, b) == doctest::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("summaries") {
    SUBCASE("mean and normal CI") {
        MetricSummary s = summarize({0.7, 0.8, 0.9});
        CHECK(s.mean == doctest::Approx(0.8));
        double half = 1.96 * 0.1 / std::sqrt(3.0);
        CHECK(s.ci_lo == doctest::Approx(0.8 - half));
        CHECK(s.ci_hi == doctest::Approx(0.8 + half));
        CHECK(s.n == 3);
    }
    SUBCASE("single observation has zero-width CI") {
        MetricSummary s = summarize({0.42});
        CHECK(s.mean == doctest::Approx(0.42));
        CHECK(s.ci_lo == doctest::Approx(0.42));
        CHECK(s.ci_hi == doctest::Approx(0.42));
    }
    SUBCASE("record roll-up counts missing hd95") {
        std::vector<EvalRecord> recs = {{"a", 0.8, 5.0},
                                        {"b", 0.6, std::nullopt},
                                        {"c", 0.7, 7.0}};
        EvalSummary s = summarize_records(recs);
        CHECK(s.n_cases == 3);
        CHECK(s.n_hd95_missing == 1);
        CHECK(s.dice.mean == doctest::Approx(0.7));
        CHECK(s.hd95.mean == doctest::Approx(6.0));
        CHECK(s.hd95.n == 2);
    }
    SUBCASE("no records throws") {
        CHECK_THROWS_AS(summarize_records({}), std::invalid_argument);
    }
}

TEST_CASE("metrics CSV round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "cowsynth_metrics_csv";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string path = (dir / "per_case.csv").string();

    std::vector<EvalRecord> recs = {{"case01", 0.8125, 4.5},
                                    {"case02", 0.5, std::nullopt},
                                    {"case03", 0.9990234375, 12.25}};
    write_metrics_csv(path, recs);
    auto back = read_metrics_csv(path);
    REQUIRE(back.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(back[i].id == recs[i].id);
        CHECK(back[i].dice == doctest::Approx(recs[i].dice).epsilon(1e-12));
        CHECK(back[i].hd95.has_value() == recs[i].hd95.has_value());
        if (back[i].hd95)
            CHECK(*back[i].hd95 == doctest::Approx(*recs[i].hd95).epsilon(1e-12));
    }
    CHECK_THROWS_AS(read_metrics_csv((dir / "absent.csv").string()), std::runtime_error);
    fs::remove_all(dir);
}
