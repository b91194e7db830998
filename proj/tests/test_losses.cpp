#include <cmath>
#include <random>

#include "cowsynth/losses.hpp"
#include "doctest.h"

using namespace cow;
using nn::Tensor;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, uint64_t seed,
                             double lo = 0.0, double hi = 1.0) {
    Tensor<double> t(n, c, h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& x : t.data) x = dist(rng);
    return t;
}

// Central finite differences of f w.r.t. every entry of x.
template <typename F>
Tensor<double> fd_grad(Tensor<double> x, F f, double eps = 1e-6) {
    Tensor<double> g = Tensor<double>::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) {
        double keep = x.data[i];
        x.data[i] = keep + eps;
        double up = f(x);
        x.data[i] = keep - eps;
        double dn = f(x);
        x.data[i] = keep;
        g.data[i] = (up - dn) / (2 * eps);
    }
    return g;
}

double max_rel_err(const Tensor<double>& a, const Tensor<double>& b) {
    double worst = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double scale = std::max({std::abs(a.data[i]), std::abs(b.data[i]), 1e-8});
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("mae loss values") {
    Tensor<double> a(1, 1, 2, 2), b(1, 1, 2, 2);
    a.data = {1.0, 2.0, 3.0, 4.0};
    b.data = {1.5, 2.0, 2.0, 6.0};
    CHECK(mae_loss(a, b) == doctest::Approx((0.5 + 0.0 + 1.0 + 2.0) / 4.0));
    CHECK(mae_loss(a, a) == 0.0);

    SUBCASE("symmetry") { CHECK(mae_loss(a, b) == doctest::Approx(mae_loss(b, a))); }
    SUBCASE("shape mismatch throws") {
        Tensor<double> c(1, 1, 1, 4);
        CHECK_THROWS_AS(mae_loss(a, c), std::invalid_argument);
    }
    SUBCASE("gradient matches finite differences away from ties") {
        Tensor<double> x = random_tensor(2, 1, 3, 3, 1);
        Tensor<double> y = random_tensor(2, 1, 3, 3, 2);
        Tensor<double> g = mae_loss_grad(x, y);
        Tensor<double> fd = fd_grad(x, [&](const Tensor<double>& t) { return mae_loss(t, y); });
        CHECK(max_rel_err(g, fd) < 1e-3);
    }
}

TEST_CASE("dice loss pinned example") {
    // pred [1,1,0,0] vs gt [1,0,0,0]: 1 - 2*1/(2+1) = 1/3 at smooth = 0
    Tensor<double> p(1, 1, 2, 2), g(1, 1, 2, 2);
    p.data = {1, 1, 0, 0};
    g.data = {1, 0, 0, 0};
    CHECK(dice_loss(p, g, 0.0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("dice loss behaviour") {
    SUBCASE("perfect overlap gives zero loss for any smooth") {
        Tensor<double> p(1, 1, 2, 2);
        p.data = {1, 0, 1, 0};
        for (double s : {0.0, 1.0, 1e-5}) CHECK(dice_loss(p, p, s) == doctest::Approx(0.0));
    }
    SUBCASE("disjoint prediction gives loss 1 at smooth 0") {
        Tensor<double> p(1, 1, 2, 2), g(1, 1, 2, 2);
        p.data = {1, 0, 0, 0};
        g.data = {0, 1, 0, 0};
        CHECK(dice_loss(p, g, 0.0) == doctest::Approx(1.0));
    }
    SUBCASE("both empty with positive smooth gives zero loss") {
        Tensor<double> z(1, 1, 2, 2), z2(1, 1, 2, 2);
        CHECK(dice_loss(z, z2, 1.0) == doctest::Approx(0.0));
    }
    SUBCASE("prediction outside [0,1] throws") {
        Tensor<double> p(1, 1, 1, 2), g(1, 1, 1, 2);
        p.data = {1.2, 0.0};
        CHECK_THROWS_AS(dice_loss(p, g, 1.0), std::invalid_argument);
    }
    SUBCASE("loss stays in [0,1] for random soft predictions") {
        for (uint64_t s = 0; s < 10; ++s) {
            Tensor<double> p = random_tensor(1, 1, 4, 4, s);
            Tensor<double> g(1, 1, 4, 4);
            std::mt19937_64 rng(100 + s);
            std::bernoulli_distribution bit(0.3);
            for (auto& v : g.data) v = bit(rng) ? 1.0 : 0.0;
            double l = dice_loss(p, g, 1.0);
            CHECK(l >= 0.0);
            CHECK(l <= 1.0);
        }
    }
    SUBCASE("gradient matches finite differences") {
        Tensor<double> p = random_tensor(1, 1, 3, 3, 5, 0.05, 0.95);
        Tensor<double> g(1, 1, 3, 3);
        g.data = {1, 0, 0, 1, 1, 0, 0, 0, 1};
        Tensor<double> an = dice_loss_grad(p, g, 1.0);
        Tensor<double> fd =
            fd_grad(p, [&](const Tensor<double>& t) { return dice_loss(t, g, 1.0); });
        CHECK(max_rel_err(an, fd) < 1e-3);
    }
}

TEST_CASE("local loss semantics") {
    // recon/pred_seg/gt map on a 1x1x8x8 grid
    Tensor<double> recon = random_tensor(1, 1, 8, 8, 21);
    Tensor<double> seg(1, 1, 8, 8);
    seg.at(0, 0, 3, 3) = 1.0;  // one confident vessel pixel
    Tensor<double> gtmap = random_tensor(1, 1, 8, 8, 22);

    SUBCASE("equals plain mae once the mask covers everything") {
        double l = local_loss(recon, seg, gtmap, /*radius=*/8, /*threshold=*/0.5);
        CHECK(l == doctest::Approx(mae_loss(recon, gtmap)));
    }
    SUBCASE("masked-out pixels contribute |gt| and get zero gradient") {
        int radius = 1;
        std::vector<uint8_t> mask = predicted_attention_mask(seg, 0.5, radius);
        double expect = 0;
        for (size_t i = 0; i < recon.size(); ++i) {
            double m = mask[i] ? recon.data[i] : 0.0;
            expect += std::abs(m - gtmap.data[i]);
        }
        expect /= recon.size();
        CHECK(local_loss(recon, seg, gtmap, radius, 0.5) == doctest::Approx(expect));

        Tensor<double> g = local_loss_grad(recon, seg, gtmap, radius, 0.5);
        for (size_t i = 0; i < g.size(); ++i)
            if (!mask[i]) CHECK(g.data[i] == 0.0);
    }
    SUBCASE("gradient w.r.t. recon matches finite differences") {
        Tensor<double> an = local_loss_grad(recon, seg, gtmap, 2, 0.5);
        Tensor<double> fd = fd_grad(recon, [&](const Tensor<double>& t) {
            return local_loss(t, seg, gtmap, 2, 0.5);
        });
        CHECK(max_rel_err(an, fd) < 1e-3);
    }
    SUBCASE("all-below-threshold prediction masks everything out") {
        Tensor<double> cold(1, 1, 8, 8);
        cold.fill(0.1);
        double expect = 0;
        for (double v : gtmap.data) expect += std::abs(v);
        expect /= gtmap.size();
        CHECK(local_loss(recon, cold, gtmap, 3, 0.5) == doctest::Approx(expect));
        Tensor<double> g = local_loss_grad(recon, cold, gtmap, 3, 0.5);
        for (double v : g.data) CHECK(v == 0.0);
    }
}

TEST_CASE("uncertainty weighted loss pinned values") {
    // sigma1 = sigma2 = 1, l_seg = 0.4, l_loc = 0.2: 0.2 + 0.1 + 0 = 0.3
    CHECK(uncertainty_weighted_loss(0.4, 0.2, 0.0, 0.0) == doctest::Approx(0.3));
    // sigma1^2 = 2, sigma2^2 = 1: 0.1 + 0.1 + 0.5*ln 2 = 0.54657...
    CHECK(uncertainty_weighted_loss(0.4, 0.2, std::log(2.0), 0.0) ==
          doctest::Approx(0.2 + 0.5 * std::log(2.0)).epsilon(1e-9));
    CHECK(uncertainty_weighted_loss(0.4, 0.2, std::log(2.0), 0.0) ==
          doctest::Approx(0.5466).epsilon(1e-3));
}

TEST_CASE("uncertainty weighted loss gradients and optimum") {
    SUBCASE("grads match finite differences") {
        double l_seg = 0.37, l_loc = 0.12, ls1 = 0.3, ls2 = -0.4;
        UncertaintyGrads g = uncertainty_weighted_loss_grads(l_seg, l_loc, ls1, ls2);
        double eps = 1e-6;
        auto fd1 = (uncertainty_weighted_loss(l_seg, l_loc, ls1 + eps, ls2) -
                    uncertainty_weighted_loss(l_seg, l_loc, ls1 - eps, ls2)) /
                   (2 * eps);
        auto fd2 = (uncertainty_weighted_loss(l_seg, l_loc, ls1, ls2 + eps) -
                    uncertainty_weighted_loss(l_seg, l_loc, ls1, ls2 - eps)) /
                   (2 * eps);
        auto fd_seg = (uncertainty_weighted_loss(l_seg + eps, l_loc, ls1, ls2) -
                       uncertainty_weighted_loss(l_seg - eps, l_loc, ls1, ls2)) /
                      (2 * eps);
        auto fd_loc = (uncertainty_weighted_loss(l_seg, l_loc + eps, ls1, ls2) -
                       uncertainty_weighted_loss(l_seg, l_loc - eps, ls1, ls2)) /
                      (2 * eps);
        CHECK(g.d_log_sigma1_sq == doctest::Approx(fd1).epsilon(1e-6));
        CHECK(g.d_log_sigma2_sq == doctest::Approx(fd2).epsilon(1e-6));
        CHECK(g.d_l_seg == doctest::Approx(fd_seg).epsilon(1e-6));
        CHECK(g.d_l_loc == doctest::Approx(fd_loc).epsilon(1e-6));
    }
    SUBCASE("optimum sits at sigma^2 = task loss") {
        double l_seg = 0.25, l_loc = 0.6;
        double opt1 = std::log(l_seg), opt2 = std::log(l_loc);
        UncertaintyGrads g = uncertainty_weighted_loss_grads(l_seg, l_loc, opt1, opt2);
        CHECK(g.d_log_sigma1_sq == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(g.d_log_sigma2_sq == doctest::Approx(0.0).epsilon(1e-12));
        double best = uncertainty_weighted_loss(l_seg, l_loc, opt1, opt2);
        for (double d1 : {-0.5, 0.2, 1.0})
            for (double d2 : {-0.7, 0.4}) {
                if (d1 == 0 && d2 == 0) continue;
                CHECK(uncertainty_weighted_loss(l_seg, l_loc, opt1 + d1, opt2 + d2) > best);
            }
    }
    SUBCASE("non-finite inputs throw") {
        CHECK_THROWS_AS(uncertainty_weighted_loss(std::nan(""), 0.1, 0.0, 0.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(uncertainty_weighted_loss(0.1, 0.1, INFINITY, 0.0),
                        std::invalid_argument);
    }
}
