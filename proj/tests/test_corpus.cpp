#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "actembed/corpus.hpp"
#include "actembed/errors.hpp"
#include "fixtures.hpp"

using namespace actembed;
using fixtures::sequence;

namespace {

std::string week_line(const std::string& subject, int value, const std::string& labels = "") {
    std::string s = "{\"subject\":\"" + subject + "\",\"series\":[";
    for (std::size_t i = 0; i < kWeekSamples; ++i) {
        if (i) s += ',';
        s += std::to_string(value);
    }
    s += "]";
    if (!labels.empty()) s += ",\"labels\":" + labels;
    return s + "}\n";
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

Corpus two_sequences(std::size_t length) {
    Corpus c = fixtures::random_corpus(2, length, 9, 3);
    return c;
}

}  // namespace

TEST_SUITE("corpus") {
    TEST_CASE("one week record segments into seven days") {
        std::istringstream in(week_line("a", 3, "{\"apnea\":1}"));
        Corpus c = parse_corpus(in);
        REQUIRE(c.size() == 1);
        CHECK(c.sequences[0].label(Task::apnea) == 1);
        CHECK_FALSE(c.sequences[0].label(Task::diabetes).has_value());
        SegmentIndex idx = segment(c, Granularity::day);
        CHECK(idx.segments_per_sequence() == 7);
        CHECK(idx.segment_length() == 2880);
    }

    TEST_CASE("empty input is rejected") {
        std::istringstream in("");
        CHECK(error_of([&] { parse_corpus(in); }) == "empty corpus");
    }

    TEST_CASE("length mismatch names both lengths") {
        std::istringstream in("{\"subject\":\"a\",\"series\":[1,2,3,4]}\n{\"subject\":\"b\",\"series\":[1,2,3]}\n");
        const std::string msg = error_of([&] { parse_corpus(in); });
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find('3') != std::string::npos);
        CHECK(msg.find('4') != std::string::npos);
    }

    TEST_CASE("malformed records report the line number") {
        std::istringstream bad_json("{\"subject\":\"a\",\"series\":[1]}\n{oops\n");
        CHECK(error_of([&] { parse_corpus(bad_json); }).find("line 2") != std::string::npos);
        std::istringstream bad_label("{\"subject\":\"a\",\"series\":[1],\"labels\":{\"apnea\":2}}\n");
        CHECK_THROWS_AS(parse_corpus(bad_label), InputError);
        std::istringstream bad_value("{\"subject\":\"a\",\"series\":[-4]}\n");
        CHECK_THROWS_AS(parse_corpus(bad_value), InputError);
        std::istringstream bad_task("{\"subject\":\"a\",\"series\":[1],\"labels\":{\"gout\":0}}\n");
        CHECK_THROWS_AS(parse_corpus(bad_task), InputError);
    }

    TEST_CASE("null samples are missing and write back as null") {
        std::istringstream in("{\"subject\":\"a\",\"series\":[1,null,2],\"labels\":{\"insomnia\":2}}\n");
        Corpus c = parse_corpus(in);
        CHECK(c.sequences[0].samples == std::vector<std::int32_t>{1, kMissing, 2});
        std::ostringstream out;
        write_corpus(c, out);
        CHECK(out.str().find("null") != std::string::npos);
        std::istringstream again(out.str());
        Corpus d = parse_corpus(again);
        CHECK(d.sequences[0].samples == c.sequences[0].samples);
        CHECK(d.sequences[0].labels == c.sequences[0].labels);
    }

    TEST_CASE("vocabulary counts and ranks") {
        Corpus c;
        c.sequences.push_back(sequence("a", {5, 5, 5, 0}));
        Vocabulary v = build_vocabulary(c);
        CHECK(v.symbols() == std::vector<std::int32_t>{0, 5});
        CHECK(v.counts() == std::vector<std::uint64_t>{1, 3});
        CHECK(v.ordinal_rank(0) == 1);
        CHECK(v.ordinal_rank(1) == 2);
        CHECK(v.unk_count() == 0);
    }

    TEST_CASE("missing samples count toward UNK only") {
        Corpus c;
        c.sequences.push_back(sequence("a", {kMissing, 4, kMissing, 7}));
        Vocabulary v = build_vocabulary(c);
        CHECK(v.size() == 2);
        CHECK(v.unk_count() == 2);
        CHECK(v.encode(kMissing) == v.unk_id());
        CHECK_THROWS_AS(v.ordinal_rank(v.unk_id()), InputError);
        CHECK(v.total_count() == 2);
    }

    TEST_CASE("single distinct value gives one class") {
        Corpus c;
        c.sequences.push_back(sequence("a", {3, 3, 3}));
        Vocabulary v = build_vocabulary(c);
        CHECK(v.num_classes() == 1);
        CHECK(v.ordinal_rank(0) == 1);
    }

    TEST_CASE("vocabulary build is deterministic and consistent") {
        Corpus c = fixtures::random_corpus(5, 300, 40, 11);
        Vocabulary a = build_vocabulary(c), b = build_vocabulary(c);
        CHECK(a.symbols() == b.symbols());
        CHECK(a.counts() == b.counts());
        CHECK(a.hash() == b.hash());
        CHECK(std::is_sorted(a.symbols().begin(), a.symbols().end()));
        CHECK(std::adjacent_find(a.symbols().begin(), a.symbols().end()) == a.symbols().end());
        CHECK(std::accumulate(a.counts().begin(), a.counts().end(), std::uint64_t{0}) == 5u * 300u);
        for (auto n : a.counts()) CHECK(n > 0);
    }

    TEST_CASE("symbol noise distribution is the unigram") {
        Corpus c;
        c.sequences.push_back(sequence("a", {5, 5, 5, 0, kMissing}));
        Vocabulary v = build_vocabulary(c);
        NoiseDistribution nu = symbol_noise_distribution(v);
        CHECK(nu.probability(0) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(nu.probability(1) == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(nu.probability(v.unk_id()) == 0.0);
    }

    TEST_CASE("uniform counts give uniform noise") {
        Corpus c;
        c.sequences.push_back(sequence("a", {1, 2, 3, 4, 4, 3, 2, 1}));
        NoiseDistribution nu = symbol_noise_distribution(build_vocabulary(c));
        for (std::size_t i = 0; i < 4; ++i) CHECK(nu.probability(i) == doctest::Approx(0.25).epsilon(1e-12));
    }

    TEST_CASE("symbol noise empirical frequencies") {
        Corpus c = fixtures::random_corpus(3, 500, 12, 5);
        Vocabulary v = build_vocabulary(c);
        NoiseDistribution nu = symbol_noise_distribution(v);
        double total = 0.0;
        for (std::size_t i = 0; i < nu.size(); ++i) total += nu.probability(i);
        CHECK(std::abs(total - 1.0) < 1e-12);
        Rng rng(42);
        std::vector<double> freq(nu.size(), 0.0);
        const std::size_t draws = 1000000;
        for (std::size_t i = 0; i < draws; ++i) freq[nu.sample(rng)] += 1.0;
        double worst = 0.0;
        for (std::size_t i = 0; i < nu.size(); ++i)
            worst = std::max(worst, std::abs(freq[i] / draws - nu.probability(i)));
        CHECK(worst < 0.005);
        CHECK(freq[v.unk_id()] == 0.0);
    }

    TEST_CASE("smoothing exponent flattens the unigram") {
        Corpus c;
        c.sequences.push_back(sequence("a", {0, 1, 1, 1, 1, 1, 1, 1, 1}));
        Vocabulary v = build_vocabulary(c);
        NoiseDistribution raw = symbol_noise_distribution(v, 1.0);
        NoiseDistribution flat = symbol_noise_distribution(v, 0.5);
        CHECK(flat.probability(0) > raw.probability(0));
        CHECK(flat.probability(0) == doctest::Approx(1.0 / (1.0 + std::sqrt(8.0))).epsilon(1e-12));
        CHECK_THROWS_AS(symbol_noise_distribution(v, 0.0), ConfigError);
    }

    TEST_CASE("segment noise distribution is uniform") {
        Corpus c = two_sequences(kWeekSamples);
        SegmentIndex idx = segment(c, Granularity::day);
        NoiseDistribution nu = segment_noise_distribution(idx);
        REQUIRE(nu.size() == 14);
        for (std::size_t i = 0; i < 14; ++i) CHECK(nu.probability(i) == doctest::Approx(1.0 / 14).epsilon(1e-12));

        Corpus one = fixtures::random_corpus(1, kWeekSamples, 9, 1);
        NoiseDistribution single = segment_noise_distribution(segment(one, Granularity::week));
        CHECK(single.size() == 1);
        CHECK(single.probability(0) == 1.0);

        NoiseDistribution seven = segment_noise_distribution(segment(one, Granularity::day));
        Rng rng(9);
        std::vector<double> freq(7, 0.0);
        for (int i = 0; i < 100000; ++i) freq[seven.sample(rng)] += 1.0;
        for (double f : freq) CHECK(std::abs(f / 100000 - 1.0 / 7) < 0.01);
    }

    TEST_CASE("granularity shapes and neighbors") {
        Corpus c = fixtures::random_corpus(1, kWeekSamples, 9, 2);
        SegmentIndex day = segment(c, Granularity::day);
        CHECK(day.segments_per_sequence() == 7);

        SegmentIndex week = segment(c, Granularity::week);
        CHECK(week.segments_per_sequence() == 1);
        CHECK(week.segment_length() == kWeekSamples);
        CHECK(week.neighbors(0).empty());

        SegmentIndex hour = segment(c, Granularity::hour);
        CHECK(hour.segments_per_sequence() == 168);
        CHECK(hour.neighbors(0) == std::vector<std::size_t>{1});
        CHECK(hour.neighbors(1) == std::vector<std::size_t>{0, 2});
        CHECK(hour.neighbors(167) == std::vector<std::size_t>{166});
    }

    TEST_CASE("non-divisible length is an error naming length and L") {
        Corpus c = fixtures::random_corpus(1, 3000, 5, 1);
        const std::string msg = error_of([&] { segment(c, Granularity::day); });
        CHECK(msg.find("3000") != std::string::npos);
        CHECK(msg.find("2880") != std::string::npos);
    }

    TEST_CASE("segmentation is a lossless partition with dense ids") {
        Corpus c = fixtures::random_corpus(3, 2 * 2880, 30, 8);
        for (Granularity g : {Granularity::hour, Granularity::day}) {
            SegmentIndex idx = segment(c, g);
            CHECK(idx.num_segments() == c.size() * idx.segments_per_sequence());
            CHECK(idx.segment_length() * idx.segments_per_sequence() == c.sequence_length());
            std::vector<std::vector<std::int32_t>> rebuilt(c.size());
            for (std::size_t id = 0; id < idx.num_segments(); ++id) {
                const auto& s = c.sequences[idx.sequence_of(id)].samples;
                CHECK(idx.global_id(idx.sequence_of(id), idx.position_of(id)) == id);
                CHECK(idx.subject_of(id) == idx.sequence_of(id));
                auto& out = rebuilt[idx.sequence_of(id)];
                CHECK(out.size() == idx.start_sample(id));
                out.insert(out.end(), s.begin() + idx.start_sample(id),
                           s.begin() + idx.start_sample(id) + idx.segment_length());
            }
            for (std::size_t n = 0; n < c.size(); ++n) CHECK(rebuilt[n] == c.sequences[n].samples);
        }
    }

    TEST_CASE("neighbor relation is symmetric and stays within a sequence") {
        Corpus c = fixtures::random_corpus(3, 2880, 5, 4);
        for (std::size_t hw : {1u, 2u}) {
            SegmentIndex idx = segment(c, Granularity::hour, hw);
            for (std::size_t id = 0; id < idx.num_segments(); ++id) {
                auto ns = idx.neighbors(id);
                CHECK_FALSE(ns.empty());
                const std::size_t pos = idx.position_of(id);
                if (pos >= hw && pos + hw < idx.segments_per_sequence()) CHECK(ns.size() == 2 * hw);
                for (std::size_t n : ns) {
                    CHECK(idx.sequence_of(n) == idx.sequence_of(id));
                    auto back = idx.neighbors(n);
                    CHECK(std::find(back.begin(), back.end(), id) != back.end());
                }
            }
        }
    }

    TEST_CASE("sequences of one subject share a subject id") {
        Corpus c = fixtures::random_corpus(3, 2880, 5, 4);
        c.sequences[2].subject_id = c.sequences[0].subject_id;
        SubjectRoster r = build_roster(c);
        CHECK(r.size() == 2);
        CHECK(r.sequence_subject == std::vector<std::uint32_t>{0, 1, 0});
        SegmentIndex idx = segment(c, Granularity::day);
        CHECK(idx.num_subjects() == 2);
        CHECK(idx.subject_of(2) == 0);
    }

    TEST_CASE("out-of-vocabulary resolution") {
        Corpus c;
        c.sequences.push_back(sequence("a", {0, 5, 10}));
        Vocabulary v = build_vocabulary(c);
        CHECK(resolve_oov(5, v) == 1);
        CHECK(resolve_oov(15, v) == 2);
        CHECK(resolve_oov(2, v) == 0);
        CHECK(resolve_oov(3, v) == 1);
        CHECK_THROWS_AS(resolve_oov(-1, v), InputError);

        Corpus d;
        d.sequences.push_back(sequence("a", {0, 10}));
        Vocabulary w = build_vocabulary(d);
        CHECK(w.symbols()[resolve_oov(7, w)] == 10);
        CHECK(resolve_oov(5, w) == 0);  // tie goes to the smaller value
        OovBlend b = oov_blend(7, w);
        CHECK(b.lo == 0);
        CHECK(b.hi == 1);
        CHECK(b.lo_weight == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(b.hi_weight == doctest::Approx(0.7).epsilon(1e-12));
        OovBlend top = oov_blend(15, w);
        CHECK(top.lo == 1);
        CHECK(top.hi == 1);
        CHECK(top.lo_weight == 1.0);
    }

    TEST_CASE("names parse back") {
        for (Task t : kTasks) CHECK(parse_task(task_name(t)) == t);
        for (Granularity g : {Granularity::sample, Granularity::hour, Granularity::day, Granularity::week})
            CHECK(parse_granularity(granularity_name(g)) == g);
        CHECK_THROWS_AS(parse_granularity("month"), ConfigError);
        CHECK(task_arity(Task::apnea) == 2);
        CHECK(task_arity(Task::insomnia) == 3);
    }
}
