#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace actembed {

using Rng = std::mt19937_64;

/// Sample value used in memory for a missing epoch (JSON null on disk).
inline constexpr std::int32_t kMissing = -1;

/// One week at 30-second epochs.
inline constexpr std::size_t kWeekSamples = 20160;

enum class Task { apnea = 0, diabetes = 1, hypertension = 2, insomnia = 3 };

inline constexpr std::array<Task, 4> kTasks{Task::apnea, Task::diabetes, Task::hypertension,
                                            Task::insomnia};

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
/// Number of classes: 2 for apnea/hypertension, 3 for diabetes/insomnia.
int task_arity(Task task);

struct ActivitySequence {
    std::string subject_id;
    std::vector<std::int32_t> samples;  // kMissing marks a missing epoch
    std::array<std::optional<int>, 4> labels{};

    const std::optional<int>& label(Task task) const { return labels[static_cast<int>(task)]; }
    std::optional<int>& label(Task task) { return labels[static_cast<int>(task)]; }
};

struct Corpus {
    std::vector<ActivitySequence> sequences;

    std::size_t size() const { return sequences.size(); }
    bool empty() const { return sequences.empty(); }
    std::size_t sequence_length() const { return empty() ? 0 : sequences.front().samples.size(); }
};

/// Checks the corpus invariants (equal lengths, value and label ranges).
void validate_corpus(const Corpus& corpus);

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::string& path);
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::string& path);

/// Distinct subjects in order of first appearance, and the subject of each sequence.
struct SubjectRoster {
    std::vector<std::string> subjects;
    std::vector<std::uint32_t> sequence_subject;

    std::size_t size() const { return subjects.size(); }
};

SubjectRoster build_roster(const Corpus& corpus);

/// Observed activity values, ascending. Symbol index i < size() is the i-th value;
/// index size() is UNK. The ordinal rank of a non-UNK symbol is its index + 1.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::int32_t> symbols, std::vector<std::uint64_t> counts,
               std::uint64_t unk_count);

    std::size_t size() const { return symbols_.size(); }
    std::size_t rows() const { return symbols_.size() + 1; }
    std::size_t unk_id() const { return symbols_.size(); }
    /// Number of ordinal classes (non-UNK symbols).
    std::size_t num_classes() const { return symbols_.size(); }

    const std::vector<std::int32_t>& symbols() const { return symbols_; }
    const std::vector<std::uint64_t>& counts() const { return counts_; }
    std::uint64_t unk_count() const { return unk_count_; }
    std::uint64_t total_count() const { return total_; }

    std::optional<std::size_t> index_of(std::int32_t value) const;
    /// Rank in 1..C; throws for UNK.
    std::size_t ordinal_rank(std::size_t symbol_id) const;
    /// Symbol id for a raw sample; kMissing maps to UNK, unseen values go through resolve_oov.
    std::size_t encode(std::int32_t value) const;

    /// FNV-1a over symbols and counts, rendered as 16 hex digits.
    std::string hash() const;

private:
    std::vector<std::int32_t> symbols_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t unk_count_ = 0;
    std::uint64_t total_ = 0;
};

Vocabulary build_vocabulary(const Corpus& corpus);

/// Nearest in-vocabulary symbol (ties go to the smaller value).
std::size_t resolve_oov(std::int64_t value, const Vocabulary& vocab);

/// Linear interpolation weights between the two in-vocabulary symbols enclosing a value.
/// For in-vocabulary or out-of-range values both ids coincide and lo_weight is 1.
struct OovBlend {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double lo_weight = 1.0;
    double hi_weight = 0.0;
};
OovBlend oov_blend(std::int64_t value, const Vocabulary& vocab);

/// Symbol ids for every sample, sequence-major.
std::vector<std::vector<std::uint32_t>> encode_corpus(const Corpus& corpus, const Vocabulary& vocab);

/// Discrete distribution over 0..size()-1 sampled by inverse CDF.
class NoiseDistribution {
public:
    NoiseDistribution() = default;
    explicit NoiseDistribution(std::vector<double> probabilities);
    static NoiseDistribution uniform(std::size_t n);

    std::size_t size() const { return uniform_ ? uniform_size_ : probs_.size(); }
    double probability(std::size_t i) const;
    /// Number of outcomes with non-zero probability.
    std::size_t support() const { return support_; }
    std::size_t sample(Rng& rng) const;

private:
    std::vector<double> probs_;
    std::vector<double> cdf_;
    bool uniform_ = false;
    std::size_t uniform_size_ = 0;
    std::size_t support_ = 0;
};

/// Unigram distribution over symbols raised to `exponent` and renormalized. UNK has probability 0.
NoiseDistribution symbol_noise_distribution(const Vocabulary& vocab, double exponent = 1.0);

enum class Granularity { sample, hour, day, week };

std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);
/// Samples per segment at 30-second epochs: 1, 120, 2880, 20160.
std::size_t segment_length(Granularity g);

/// Partition of every sequence into K equal segments with dense global ids
/// (sequence-major) and neighbor lists of `half_width` segments per side.
class SegmentIndex {
public:
    SegmentIndex() = default;
    SegmentIndex(Granularity g, std::size_t sequence_length, std::size_t num_sequences,
                 std::vector<std::uint32_t> sequence_subject, std::size_t num_subjects,
                 std::size_t half_width);

    Granularity granularity() const { return granularity_; }
    std::size_t segment_length() const { return length_; }
    std::size_t segments_per_sequence() const { return k_; }
    std::size_t num_sequences() const { return n_; }
    std::size_t num_segments() const { return n_ * k_; }
    std::size_t num_subjects() const { return num_subjects_; }
    std::size_t half_width() const { return half_width_; }

    std::size_t global_id(std::size_t sequence, std::size_t k) const;
    std::size_t sequence_of(std::size_t id) const { return id / k_; }
    std::size_t position_of(std::size_t id) const { return id % k_; }
    std::size_t subject_of(std::size_t id) const { return sequence_subject_.at(sequence_of(id)); }
    /// Offset of the segment's first sample within its sequence.
    std::size_t start_sample(std::size_t id) const { return position_of(id) * length_; }

    std::vector<std::size_t> neighbors(std::size_t id) const;
    void neighbors(std::size_t id, std::vector<std::size_t>& out) const;

private:
    Granularity granularity_ = Granularity::day;
    std::size_t length_ = 0;
    std::size_t k_ = 0;
    std::size_t n_ = 0;
    std::vector<std::uint32_t> sequence_subject_;
    std::size_t num_subjects_ = 0;
    std::size_t half_width_ = 1;
};

SegmentIndex segment(const Corpus& corpus, Granularity g, std::size_t half_width = 1);

/// Uniform over the G segment ids: each id occurs exactly once in the corpus.
NoiseDistribution segment_noise_distribution(const SegmentIndex& index);

}  // namespace actembed
