#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "actembed/corpus.hpp"

namespace fixtures {

inline actembed::ActivitySequence sequence(std::string subject, std::vector<std::int32_t> samples) {
    actembed::ActivitySequence s;
    s.subject_id = std::move(subject);
    s.samples = std::move(samples);
    return s;
}

/// n sequences of `length` samples drawn from 0..max_value, one subject each.
inline actembed::Corpus random_corpus(std::size_t n, std::size_t length, int max_value, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> value(0, max_value);
    actembed::Corpus c;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::int32_t> xs(length);
        for (auto& x : xs) x = value(rng);
        c.sequences.push_back(sequence("p" + std::to_string(i), std::move(xs)));
    }
    return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("actembed_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace fixtures
