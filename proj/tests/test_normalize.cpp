#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "trustspeech/normalize.hpp"
#include "trustspeech/rng.hpp"

using namespace trustspeech;

namespace {

FeatureVector fv_const(double x) {
    FeatureVector fv;
    for (std::size_t f = 0; f < kNumFeatures; ++f) fv.set(f, x);
    return fv;
}

std::vector<FeatureVector> make_storage(const std::vector<double>& xs) {
    std::vector<FeatureVector> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(fv_const(x));
    return out;
}

std::vector<WeightedRow> make_rows(const std::vector<FeatureVector>& storage,
                                   const std::vector<Condition>& conds) {
    std::vector<WeightedRow> rows;
    for (std::size_t i = 0; i < storage.size(); ++i) rows.push_back({&storage[i], conds[i]});
    return rows;
}

}  // namespace

TEST_CASE("speaker_stats: pinned weighted example") {
    // L = {0, 2}, H = {4}: mu = (1 + 4)/2 = 2.5, var = 2.75
    const auto storage = make_storage({0.0, 2.0, 4.0});
    const auto rows = make_rows(storage, {Condition::L, Condition::L, Condition::H});
    const auto stats = speaker_stats(rows, "spk01");

    REQUIRE(stats.n_rows_l == 2);
    REQUIRE(stats.n_rows_h == 1);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        REQUIRE(stats.mu[f] == 2.5);
        REQUIRE_THAT(stats.sigma[f], Catch::Matchers::WithinAbs(1.6583123951777, 1e-12));
    }
    const auto z = apply_z(fv_const(4.0), stats);
    REQUIRE_THAT(z.values[0], Catch::Matchers::WithinAbs(0.9045340337332909, 1e-15));
}

TEST_CASE("speaker_stats: zero variance normalizes to zero") {
    const auto storage = make_storage({1.0, 1.0, 1.0});
    const auto rows = make_rows(storage, {Condition::L, Condition::L, Condition::H});
    const auto stats = speaker_stats(rows, "spk01");
    REQUIRE(stats.mu[0] == 1.0);
    REQUIRE(stats.sigma[0] == 0.0);
    REQUIRE(apply_z(fv_const(1.0), stats).values[0] == 0.0);
    REQUIRE(apply_z(fv_const(7.0), stats).values[0] == 0.0);
}

TEST_CASE("speaker_stats: balanced conditions reduce to plain stats") {
    const auto storage = make_storage({1.0, 3.0, 5.0, 7.0});
    const auto rows = make_rows(
        storage, {Condition::L, Condition::L, Condition::H, Condition::H});
    const auto stats = speaker_stats(rows, "spk01");
    const std::vector<double> all = {1.0, 3.0, 5.0, 7.0};
    REQUIRE(stats.mu[0] == 4.0);
    REQUIRE(stats.sigma[0] == population_std(all));
}

TEST_CASE("speaker_stats: a speaker missing one condition is unusable") {
    const auto storage = make_storage({1.0, 2.0});
    const auto rows = make_rows(storage, {Condition::L, Condition::L});
    REQUIRE_THROWS_AS(speaker_stats(rows, "spk01"), DataError);
}

TEST_CASE("question_stats: pinned example and identity fallback") {
    const auto storage = make_storage({-1.0, 1.0, 0.0, 2.0});
    const auto rows = make_rows(
        storage, {Condition::L, Condition::L, Condition::H, Condition::H});
    const auto stats = question_stats(rows, "q7");
    REQUIRE_FALSE(stats.fallback);
    REQUIRE(stats.mu[0] == 0.5);
    REQUIRE_THAT(stats.sigma[0], Catch::Matchers::WithinAbs(1.118033988749895, 1e-15));

    // seen in only one condition: identity stats, samples pass through
    const auto one_side = make_rows(storage, {Condition::L, Condition::L,
                                              Condition::L, Condition::L});
    const auto fb = question_stats(one_side, "q_lonly");
    REQUIRE(fb.fallback);
    REQUIRE(fb.mu[0] == 0.0);
    REQUIRE(fb.sigma[0] == 1.0);
    REQUIRE(apply_z(fv_const(3.25), fb).values[0] == 3.25);
}

TEST_CASE("weighted stats: quad-precision oracle on random splits") {
    Rng rng(404);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n_l = 1 + rng.uniform_index(8);
        const std::size_t n_h = 1 + rng.uniform_index(8);
        std::vector<double> xs;
        std::vector<Condition> conds;
        for (std::size_t i = 0; i < n_l + n_h; ++i) {
            xs.push_back(rng.uniform(-50.0, 50.0) * std::pow(10.0, rng.uniform(-3.0, 3.0)));
            conds.push_back(i < n_l ? Condition::L : Condition::H);
        }
        const auto storage = make_storage(xs);
        const auto stats = speaker_stats(make_rows(storage, conds), "spk");

        __float128 sum_l = 0, sum_h = 0;
        for (std::size_t i = 0; i < xs.size(); ++i)
            (i < n_l ? sum_l : sum_h) += static_cast<__float128>(xs[i]);
        const __float128 mu =
            (sum_l / static_cast<__float128>(n_l) + sum_h / static_cast<__float128>(n_h)) / 2;
        __float128 var = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const __float128 d = static_cast<__float128>(xs[i]) - mu;
            const __float128 w = 1.0q / (2.0q * static_cast<__float128>(i < n_l ? n_l : n_h));
            var += w * d * d;
        }
        const double mu_ref = static_cast<double>(mu);
        const double sigma_ref = std::sqrt(static_cast<double>(var));
        const double scale = std::max(1.0, std::abs(mu_ref));
        REQUIRE_THAT(stats.mu[0], Catch::Matchers::WithinAbs(mu_ref, 1e-12 * scale));
        REQUIRE_THAT(stats.sigma[0],
                     Catch::Matchers::WithinAbs(sigma_ref, 1e-12 * std::max(1.0, sigma_ref)));
    }
}

TEST_CASE("weighted stats: duplicating one condition changes nothing, exactly") {
    Rng rng(405);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> xs;
        std::vector<Condition> conds;
        const std::size_t n_l = 2 + rng.uniform_index(5);
        const std::size_t n_h = 2 + rng.uniform_index(5);
        for (std::size_t i = 0; i < n_l + n_h; ++i) {
            xs.push_back(rng.uniform(-10.0, 10.0));
            conds.push_back(i < n_l ? Condition::L : Condition::H);
        }
        const auto storage = make_storage(xs);
        const auto base = speaker_stats(make_rows(storage, conds), "spk");

        // duplicate every L row
        std::vector<double> xs2 = xs;
        std::vector<Condition> conds2 = conds;
        for (std::size_t i = 0; i < n_l; ++i) {
            xs2.push_back(xs[i]);
            conds2.push_back(Condition::L);
        }
        const auto storage2 = make_storage(xs2);
        const auto dup = speaker_stats(make_rows(storage2, conds2), "spk");

        REQUIRE(dup.mu[0] == base.mu[0]);        // bit-identical
        REQUIRE(dup.sigma[0] == base.sigma[0]);  // bit-identical
    }
}

TEST_CASE("apply_z: normalized rows have weighted mean 0 and variance 1") {
    Rng rng(406);
    std::vector<double> xs;
    std::vector<Condition> conds;
    for (int i = 0; i < 9; ++i) {
        xs.push_back(rng.uniform(0.0, 20.0));
        conds.push_back(i < 6 ? Condition::L : Condition::H);
    }
    const auto storage = make_storage(xs);
    const auto stats = speaker_stats(make_rows(storage, conds), "spk");

    std::vector<FeatureVector> z_storage;
    for (const auto& fv : storage) z_storage.push_back(apply_z(fv, stats));
    const auto z_stats = speaker_stats(make_rows(z_storage, conds), "spk");
    REQUIRE_THAT(z_stats.mu[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(z_stats.sigma[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("apply_z: missing features impute to zero and keep the flag") {
    const auto storage = make_storage({0.0, 2.0, 4.0});
    const auto stats =
        speaker_stats(make_rows(storage, {Condition::L, Condition::L, Condition::H}), "spk");
    FeatureVector v = fv_const(4.0);
    v.values[3] = std::numeric_limits<double>::quiet_NaN();
    v.missing[3] = true;
    const auto z = apply_z(v, stats);
    REQUIRE(z.values[3] == 0.0);
    REQUIRE(z.missing[3]);
    REQUIRE_FALSE(z.missing[0]);
}

TEST_CASE("summarize_series: quartiles per feature, feature-major") {
    std::vector<std::array<double, kNumFeatures>> qs(3);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const double scale = static_cast<double>(f + 1);
        qs[0][f] = 1.0 * scale;
        qs[1][f] = 2.0 * scale;
        qs[2][f] = 3.0 * scale;
    }
    const auto s = summarize_series(qs);
    REQUIRE(s.size() == 48);
    REQUIRE(s[0] == 1.5);
    REQUIRE(s[1] == 2.0);
    REQUIRE(s[2] == 2.5);
    // feature 1 scaled by 2: (3.0, 4.0, 5.0)
    REQUIRE(s[3] == 3.0);
    REQUIRE(s[4] == 4.0);
    REQUIRE(s[5] == 5.0);

    // question order is irrelevant
    std::swap(qs[0], qs[2]);
    REQUIRE(summarize_series(qs) == s);

    REQUIRE_THROWS_AS(summarize_series({}), ArgumentError);
}

TEST_CASE("series_feature_names: 48 names aligned with the layout") {
    const auto names = series_feature_names();
    REQUIRE(names.size() == kNumSeriesFeatures);
    REQUIRE(names[0] == "syllrate_full.q25");
    REQUIRE(names[1] == "syllrate_full.q50");
    REQUIRE(names[2] == "syllrate_full.q75");
    REQUIRE(names[3 * kF0Median + 1] == "f0_median.q50");
}
