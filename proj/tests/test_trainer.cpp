#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "actembed/errors.hpp"
#include "actembed/synth.hpp"
#include "actembed/trainer.hpp"
#include "fixtures.hpp"

using namespace actembed;

namespace {

struct Setup {
    Corpus corpus;
    Vocabulary vocab;
    SegmentIndex index;
    ModelParams params;
};

Setup setup(const Corpus& corpus, Granularity g, std::size_t d, std::uint64_t seed = 1) {
    Setup s;
    s.corpus = corpus;
    s.vocab = build_vocabulary(corpus);
    s.index = segment(corpus, g);
    s.params = init_model(corpus, s.vocab, s.index, d, seed);
    return s;
}

/// Ten short sequences over a small alphabet; 4 hours each so day segments would not fit.
Corpus tiny_corpus() { return fixtures::random_corpus(10, 4 * 120, 6, 21); }

/// Small synthetic cohort: whole weeks, a handful of subjects.
Corpus small_cohort(std::size_t n, std::uint64_t seed) {
    SynthConfig sc;
    sc.n_subjects = n;
    sc.labeled_fraction = 1.0;
    sc.seed = seed;
    return generate_cohort(sc);
}

TrainConfig quick(Granularity g, std::size_t d, std::size_t epochs) {
    TrainConfig c;
    c.granularity = g;
    c.d = d;
    c.epochs = epochs;
    c.patience = 0;
    return c;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

bool same_params(const ModelParams& a, const ModelParams& b) {
    return same_bits(a.phi_sym.data(), b.phi_sym.data()) && same_bits(a.phi_seg.data(), b.phi_seg.data()) &&
           same_bits(a.w_s.data(), b.w_s.data()) && same_bits(a.w_nc.data(), b.w_nc.data()) &&
           same_bits(a.u.data(), b.u.data()) && same_bits(a.w_o, b.w_o) && same_bits(a.theta, b.theta);
}

double cosine(std::span<const float> a, std::span<const float> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_SUITE("trainer") {
    TEST_CASE("lambda schedule values") {
        CHECK(lambda_schedule(0.0, 0.05) == 0.0);
        CHECK(lambda_schedule(1.0, 1.0) == doctest::Approx(0.9999092).epsilon(1e-7));
        CHECK(lambda_schedule(0.5, 0.05) == doctest::Approx(0.049331).epsilon(1e-5));
        CHECK(lambda_schedule(0.3, 0.0) == 0.0);
        double prev = -1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double l = lambda_schedule(i / 1000.0, 0.05);
            CHECK(l >= prev);
            CHECK(l <= 0.05);
            prev = l;
        }
    }

    TEST_CASE("negative sampling draws") {
        NoiseDistribution point({0.0, 1.0, 0.0});
        const std::size_t only[1] = {1};
        Rng rng(1);
        CHECK_THROWS_AS(sample_negatives(point, 1, only, rng), InputError);

        Corpus c = fixtures::random_corpus(2, 400, 30, 3);
        NoiseDistribution nu = symbol_noise_distribution(build_vocabulary(c));
        const std::size_t positive[1] = {4};
        Rng a(77), b(77);
        auto first = sample_negatives(nu, 12, positive, a);
        auto second = sample_negatives(nu, 12, positive, b);
        CHECK(first.size() == 12);
        CHECK(first == second);
        for (int rep = 0; rep < 200; ++rep)
            for (auto x : sample_negatives(nu, 12, positive, a)) CHECK(x != 4);
    }

    TEST_CASE("positive symbol schedule") {
        Rng rng(5);
        auto day = positive_symbol_schedule(2880, 30, rng);
        CHECK(day.size() == 96);
        CHECK(std::set<std::size_t>(day.begin(), day.end()).size() == 96);
        for (auto p : day) CHECK(p < 2880);
        CHECK(positive_symbol_schedule(50, 50, rng).size() == 1);
        CHECK(positive_symbol_schedule(100, 30, rng).size() == 4);
        CHECK_THROWS_AS(positive_symbol_schedule(20, 21, rng), ConfigError);
        Rng x(9), y(9);
        CHECK(positive_symbol_schedule(2880, 30, x) == positive_symbol_schedule(2880, 30, y));
    }

    TEST_CASE("threshold projection") {
        std::vector<float> sorted{-1.0F, 0.0F, 2.0F};
        auto copy = sorted;
        project_thresholds(std::span<float>(copy));
        CHECK(copy == sorted);

        std::vector<double> swapped{1.0, 0.5};
        project_thresholds(std::span<double>(swapped));
        CHECK(swapped[0] == 1.0);
        CHECK(swapped[1] == doctest::Approx(1.000001).epsilon(1e-12));

        std::mt19937_64 rng(3);
        std::uniform_real_distribution<float> u(-50.0F, 50.0F);
        for (int rep = 0; rep < 500; ++rep) {
            std::vector<float> t(1 + rep % 40);
            for (auto& x : t) x = u(rng);
            if (rep % 7 == 0) std::fill(t.begin(), t.end(), 1e6F);  // ties at a large magnitude
            project_thresholds(std::span<float>(t));
            for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
        }
    }

    TEST_CASE("learning rate decays linearly to the floor") {
        const std::size_t total = 1000;
        double prev = 1.0;
        for (std::size_t t = 0; t < total; ++t) {
            const double lr = learning_rate(t, total, 0.025, 1e-4);
            CHECK(lr > 0.0);
            CHECK(lr <= prev);
            prev = lr;
        }
        CHECK(learning_rate(0, total, 0.025, 1e-4) == 0.025);
        CHECK(learning_rate(total - 1, total, 0.025, 1e-4) == doctest::Approx(1e-4).epsilon(1e-12));
    }

    TEST_CASE("config resolution") {
        TrainConfig week;
        week.granularity = Granularity::week;
        week.eta = 0.5;
        auto warnings = resolve_config(week);
        CHECK(week.eta == 0.0);
        CHECK(warnings.size() == 1);
        CHECK(*week.window == 50);

        TrainConfig day;
        CHECK(resolve_config(day).empty());
        CHECK(*day.window == 30);
        CHECK(*day.eta == 0.25);
        TrainConfig hour;
        hour.granularity = Granularity::hour;
        resolve_config(hour);
        CHECK(*hour.window == 20);
        CHECK(*hour.eta == 0.5);

        TrainConfig bad;
        bad.granularity = Granularity::hour;
        bad.window = 121;
        CHECK_THROWS_AS(resolve_config(bad), ConfigError);
        bad = TrainConfig{};
        bad.disc_prob = 1.5;
        CHECK_THROWS_AS(resolve_config(bad), ConfigError);
        bad = TrainConfig{};
        bad.min_lr = 0.1;
        CHECK_THROWS_AS(resolve_config(bad), ConfigError);
        bad = TrainConfig{};
        bad.eta = -1.0;
        CHECK_THROWS_AS(resolve_config(bad), ConfigError);
    }

    TEST_CASE("zero output weights give 13 ln 2 content loss") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 8);
        TrainConfig c = quick(Granularity::hour, 8, 1);
        Rng rng(4);
        auto e = evaluate_epoch_loss(s.corpus, s.index, s.params, c, rng, 0.0);
        REQUIRE(e.means.content);
        CHECK(*e.means.content == doctest::Approx(13.0 * std::log(2.0)).epsilon(1e-6));
        // measurement never advances the caller's rng
        Rng again(4);
        CHECK(rng() == again());
        Rng r1(11), r2(11);
        auto a = evaluate_epoch_loss(s.corpus, s.index, s.params, c, r1, 0.0);
        auto b = evaluate_epoch_loss(s.corpus, s.index, s.params, c, r2, 0.0);
        CHECK(*a.means.content == *b.means.content);
        CHECK(*a.means.ordinal == *b.means.ordinal);
        CHECK(a.combined == b.combined);
    }

    TEST_CASE("disabled components are reported absent") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 8);
        TrainConfig c = quick(Granularity::hour, 8, 1);
        c.ordinal = c.context = c.smoothing = c.adversarial = false;
        Rng rng(1);
        auto e = evaluate_epoch_loss(s.corpus, s.index, s.params, c, rng, 0.0);
        CHECK(e.means.content.has_value());
        CHECK_FALSE(e.means.ordinal.has_value());
        CHECK_FALSE(e.means.context.has_value());
        CHECK_FALSE(e.means.smoothing.has_value());
        CHECK_FALSE(e.means.adversarial.has_value());
    }

    TEST_CASE("content-only training lowers the content loss in one epoch") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 16);
        TrainConfig c = quick(Granularity::hour, 16, 1);
        c.ordinal = c.context = c.smoothing = c.adversarial = false;
        c.disc_prob = 0.0;
        auto report = train(s.corpus, s.index, s.params, c);
        REQUIRE(report.initial);
        REQUIRE(report.epochs.size() == 1);
        CHECK(*report.epochs[0].means.content < *report.initial->means.content);
        CHECK(*report.final->means.content < *report.initial->means.content);
    }

    TEST_CASE("training is deterministic given the seed") {
        Corpus corpus = tiny_corpus();
        Setup a = setup(corpus, Granularity::hour, 8), b = setup(corpus, Granularity::hour, 8);
        TrainConfig c = quick(Granularity::hour, 8, 2);
        c.seed = 13;
        auto ra = train(a.corpus, a.index, a.params, c);
        auto rb = train(b.corpus, b.index, b.params, c);
        CHECK(same_params(a.params, b.params));
        CHECK(ra.epochs.back().combined == rb.epochs.back().combined);
        CHECK(ra.discriminator_updates == rb.discriminator_updates);
        CHECK(ra.discriminator_updates > 0);

        Setup d = setup(corpus, Granularity::hour, 8);
        c.seed = 14;
        train(d.corpus, d.index, d.params, c);
        CHECK_FALSE(same_params(a.params, d.params));
    }

    TEST_CASE("zero lambda gives the adversary no effect on embeddings") {
        Corpus corpus = tiny_corpus();
        TrainConfig c = quick(Granularity::hour, 8, 2);
        c.disc_prob = 0.0;
        c.lambda_max = 0.0;
        Setup zero = setup(corpus, Granularity::hour, 8);
        train(zero.corpus, zero.index, zero.params, c);
        // u is untouched when the discriminator never updates
        for (float x : zero.params.u.data()) CHECK(x == 0.0F);

        TrainConfig off = c;
        off.adversarial = false;
        Setup none = setup(corpus, Granularity::hour, 8);
        train(none.corpus, none.index, none.params, off);
        CHECK(same_bits(zero.params.phi_seg.data(), none.params.phi_seg.data()));
        CHECK(same_bits(zero.params.phi_sym.data(), none.params.phi_sym.data()));

        TrainConfig disc = c;
        disc.disc_prob = 0.2;
        Setup with_disc = setup(corpus, Granularity::hour, 8);
        train(with_disc.corpus, with_disc.index, with_disc.params, disc);
        CHECK(std::any_of(with_disc.params.u.data().begin(), with_disc.params.u.data().end(),
                          [](float x) { return x != 0.0F; }));
    }

    TEST_CASE("thresholds stay strictly increasing and parameters finite") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 8);
        TrainConfig c = quick(Granularity::hour, 8, 3);
        c.ordinal_clip = 0.0;
        c.lr = 0.5;
        train(s.corpus, s.index, s.params, c);
        for (std::size_t i = 1; i < s.params.theta.size(); ++i) CHECK(s.params.theta[i] > s.params.theta[i - 1]);
        CHECK_NOTHROW(validate_params(s.params));
    }

    TEST_CASE("non-finite parameters abort training") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 8);
        s.params.phi_seg(3, 1) = std::numeric_limits<float>::infinity();
        CHECK_THROWS_AS(train(s.corpus, s.index, s.params, quick(Granularity::hour, 8, 1)), NumericalError);

        Setup blow = setup(tiny_corpus(), Granularity::hour, 8);
        TrainConfig c = quick(Granularity::hour, 8, 1);
        c.lr = 1e30;
        c.min_lr = 1e30;
        try {
            train(blow.corpus, blow.index, blow.params, c);
            FAIL("expected a numerical error");
        } catch (const NumericalError& e) {
            CHECK(std::string(e.what()).find("step") != std::string::npos);
        }
    }

    TEST_CASE("week granularity skips context and smoothing") {
        Setup s = setup(small_cohort(4, 2), Granularity::week, 8);
        TrainConfig c = quick(Granularity::week, 8, 1);
        TrainReport r;
        CHECK_NOTHROW(r = train(s.corpus, s.index, s.params, c));
        CHECK_FALSE(r.epochs[0].means.context.has_value());
        CHECK_FALSE(r.epochs[0].means.smoothing.has_value());
        CHECK(r.epochs[0].means.content.has_value());
        CHECK(r.warnings.empty());
    }

    TEST_CASE("sample granularity trains on symbols only") {
        Corpus corpus = fixtures::random_corpus(3, 200, 5, 8);
        Setup s = setup(corpus, Granularity::sample, 8);
        TrainConfig c = quick(Granularity::sample, 8, 1);
        auto r = train(s.corpus, s.index, s.params, c);
        CHECK(r.epochs[0].steps == 600);
        CHECK_FALSE(r.epochs[0].means.context.has_value());
        CHECK(s.params.phi_seg.rows() == 0);
    }

    TEST_CASE("report json carries every epoch") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 8);
        auto r = train(s.corpus, s.index, s.params, quick(Granularity::hour, 8, 2));
        const std::string j = report_to_json(r);
        CHECK(j.find("\"epochs\"") != std::string::npos);
        CHECK(j.find("\"seed\"") != std::string::npos);
        CHECK(r.epochs.size() == 2);
        CHECK(r.epochs[0].epoch == 1);
        CHECK(r.epochs[1].epoch == 2);
        for (const auto& e : r.epochs) CHECK(std::isfinite(e.combined));
        CHECK(config_to_json(quick(Granularity::hour, 8, 2)).find("\"granularity\"") != std::string::npos);
    }

    TEST_CASE("early stop after a flat stretch") {
        Setup s = setup(tiny_corpus(), Granularity::hour, 8);
        TrainConfig c = quick(Granularity::hour, 8, 20);
        c.tolerance = 1.0;  // every change counts as flat
        c.patience = 3;
        auto r = train(s.corpus, s.index, s.params, c);
        CHECK(r.converged);
        CHECK(r.final_epoch == 4);
    }

    TEST_CASE("combined loss mostly decreases over the first five epochs of the default cohort") {
        Corpus corpus = generate_cohort(SynthConfig{});
        Setup s = setup(corpus, Granularity::day, 100);
        TrainConfig c;
        c.epochs = 5;
        c.patience = 0;
        auto r = train(s.corpus, s.index, s.params, c);
        REQUIRE(r.epochs.size() == 5);
        int decreases = 0;
        for (std::size_t i = 1; i < 5; ++i) decreases += r.epochs[i].combined <= r.epochs[i - 1].combined;
        // four transitions between five epochs, plus the step from the initial evaluation
        decreases += r.epochs[0].combined <= r.initial->combined;
        CHECK(decreases >= 4);
    }

    TEST_CASE("inferring a seen segment lands near its trained embedding") {
        Corpus corpus = small_cohort(12, 5);
        Setup s = setup(corpus, Granularity::day, 32);
        TrainConfig c = quick(Granularity::day, 32, 10);
        train(s.corpus, s.index, s.params, c);
        const std::size_t target = s.index.global_id(4, 2);
        const auto& samples = s.corpus.sequences[4].samples;
        std::vector<std::int32_t> seg(samples.begin() + static_cast<std::ptrdiff_t>(s.index.start_sample(target)),
                                      samples.begin() + static_cast<std::ptrdiff_t>(s.index.start_sample(target) + 2880));
        auto v = infer_unseen_segment(s.params, seg, 50);
        const double own = cosine(v, s.params.phi_seg.row(target));
        std::vector<double> others;
        for (std::size_t id = 0; id < s.index.num_segments(); ++id)
            if (id != target) others.push_back(cosine(v, s.params.phi_seg.row(id)));
        std::sort(others.begin(), others.end());
        const double p95 = others[static_cast<std::size_t>(0.95 * static_cast<double>(others.size() - 1))];
        CHECK(own > p95);
    }
}
