#include "actembed/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "actembed/errors.hpp"

namespace actembed {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kTaskNames{"apnea", "diabetes", "hypertension",
                                                     "insomnia"};

std::string line_error(std::size_t line, const std::string& what) {
    return "corpus line " + std::to_string(line) + ": " + what;
}

ActivitySequence parse_record(const json& j, std::size_t line) {
    if (!j.is_object()) throw InputError(line_error(line, "record is not a JSON object"));
    ActivitySequence seq;
    auto subject = j.find("subject");
    if (subject == j.end() || !subject->is_string())
        throw InputError(line_error(line, "missing string field \"subject\""));
    seq.subject_id = subject->get<std::string>();

    auto series = j.find("series");
    if (series == j.end() || !series->is_array())
        throw InputError(line_error(line, "missing array field \"series\""));
    seq.samples.reserve(series->size());
    for (const auto& v : *series) {
        if (v.is_null()) {
            seq.samples.push_back(kMissing);
        } else if (v.is_number_integer()) {
            auto x = v.get<std::int64_t>();
            if (x < 0 || x > std::numeric_limits<std::int32_t>::max())
                throw InputError(line_error(line, "sample value out of range: " + std::to_string(x)));
            seq.samples.push_back(static_cast<std::int32_t>(x));
        } else {
            throw InputError(line_error(line, "series entries must be integers or null"));
        }
    }

    if (auto labels = j.find("labels"); labels != j.end() && !labels->is_null()) {
        if (!labels->is_object()) throw InputError(line_error(line, "\"labels\" must be an object"));
        for (const auto& [name, value] : labels->items()) {
            Task task;
            try {
                task = parse_task(name);
            } catch (const Error&) {
                throw InputError(line_error(line, "unknown task \"" + name + "\""));
            }
            if (!value.is_number_integer())
                throw InputError(line_error(line, "label for " + name + " must be an integer"));
            auto c = value.get<std::int64_t>();
            if (c < 0 || c >= task_arity(task))
                throw InputError(line_error(line, "label out of range for " + name + ": " +
                                                      std::to_string(c)));
            seq.label(task) = static_cast<int>(c);
        }
    }
    return seq;
}

}  // namespace

std::string_view task_name(Task task) { return kTaskNames[static_cast<int>(task)]; }

Task parse_task(std::string_view name) {
    for (Task t : kTasks)
        if (task_name(t) == name) return t;
    throw ConfigError("unknown task: " + std::string(name));
}

int task_arity(Task task) {
    switch (task) {
        case Task::apnea:
        case Task::hypertension:
            return 2;
        case Task::diabetes:
        case Task::insomnia:
            return 3;
    }
    return 2;
}

void validate_corpus(const Corpus& corpus) {
    if (corpus.empty()) throw InputError("empty corpus");
    const std::size_t length = corpus.sequence_length();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& seq = corpus.sequences[i];
        if (seq.samples.size() != length)
            throw InputError("sequence " + std::to_string(i) + " has length " +
                             std::to_string(seq.samples.size()) + ", expected " +
                             std::to_string(length) + " (length of the first sequence)");
        for (auto v : seq.samples)
            if (v < 0 && v != kMissing)
                throw InputError("sequence " + std::to_string(i) + " has a negative sample");
        for (Task t : kTasks) {
            const auto& lab = seq.label(t);
            if (lab && (*lab < 0 || *lab >= task_arity(t)))
                throw InputError("sequence " + std::to_string(i) + ": label out of range for " +
                                 std::string(task_name(t)));
        }
    }
    if (length == 0) throw InputError("sequences are empty");
}

Corpus parse_corpus(std::istream& in) {
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError(line_error(lineno, std::string("malformed JSON: ") + e.what()));
        }
        auto seq = parse_record(j, lineno);
        if (!corpus.empty() && seq.samples.size() != corpus.sequence_length())
            throw InputError(line_error(lineno, "series length " + std::to_string(seq.samples.size()) +
                                                    " differs from first record length " +
                                                    std::to_string(corpus.sequence_length())));
        corpus.sequences.push_back(std::move(seq));
    }
    validate_corpus(corpus);
    return corpus;
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus file: " + path);
    return parse_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
    for (const auto& seq : corpus.sequences) {
        json j;
        j["subject"] = seq.subject_id;
        json series = json::array();
        for (auto v : seq.samples) {
            if (v == kMissing)
                series.push_back(nullptr);
            else
                series.push_back(v);
        }
        j["series"] = std::move(series);
        json labels = json::object();
        for (Task t : kTasks)
            if (seq.label(t)) labels[std::string(task_name(t))] = *seq.label(t);
        if (!labels.empty()) j["labels"] = std::move(labels);
        out << j.dump() << '\n';
    }
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write corpus file: " + path);
    write_corpus(corpus, out);
}

SubjectRoster build_roster(const Corpus& corpus) {
    SubjectRoster roster;
    std::unordered_map<std::string, std::uint32_t> ids;
    for (const auto& seq : corpus.sequences) {
        auto [it, inserted] = ids.emplace(seq.subject_id, static_cast<std::uint32_t>(roster.subjects.size()));
        if (inserted) roster.subjects.push_back(seq.subject_id);
        roster.sequence_subject.push_back(it->second);
    }
    return roster;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary(std::vector<std::int32_t> symbols, std::vector<std::uint64_t> counts,
                       std::uint64_t unk_count)
    : symbols_(std::move(symbols)), counts_(std::move(counts)), unk_count_(unk_count) {
    if (symbols_.size() != counts_.size())
        throw InputError("vocabulary symbols and counts differ in size");
    for (std::size_t i = 1; i < symbols_.size(); ++i)
        if (symbols_[i] <= symbols_[i - 1]) throw InputError("vocabulary symbols must be strictly increasing");
    total_ = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::optional<std::size_t> Vocabulary::index_of(std::int32_t value) const {
    auto it = std::lower_bound(symbols_.begin(), symbols_.end(), value);
    if (it == symbols_.end() || *it != value) return std::nullopt;
    return static_cast<std::size_t>(it - symbols_.begin());
}

std::size_t Vocabulary::ordinal_rank(std::size_t symbol_id) const {
    if (symbol_id >= symbols_.size()) throw InputError("UNK has no ordinal rank");
    return symbol_id + 1;
}

std::size_t Vocabulary::encode(std::int32_t value) const {
    if (value == kMissing) return unk_id();
    if (auto idx = index_of(value)) return *idx;
    return resolve_oov(value, *this);
}

std::string Vocabulary::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 1099511628211ULL;
        }
    };
    mix(symbols_.size());
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(symbols_[i])));
        mix(counts_[i]);
    }
    mix(unk_count_);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

Vocabulary build_vocabulary(const Corpus& corpus) {
    if (corpus.empty()) throw InputError("empty corpus");
    std::map<std::int32_t, std::uint64_t> counts;
    std::uint64_t unk = 0;
    for (const auto& seq : corpus.sequences)
        for (auto v : seq.samples) {
            if (v == kMissing)
                ++unk;
            else
                ++counts[v];
        }
    std::vector<std::int32_t> symbols;
    std::vector<std::uint64_t> c;
    symbols.reserve(counts.size());
    for (const auto& [value, n] : counts) {
        symbols.push_back(value);
        c.push_back(n);
    }
    return Vocabulary(std::move(symbols), std::move(c), unk);
}

std::size_t resolve_oov(std::int64_t value, const Vocabulary& vocab) {
    if (value < 0) throw InputError("negative activity value: " + std::to_string(value));
    const auto& s = vocab.symbols();
    if (s.empty()) return vocab.unk_id();
    auto it = std::lower_bound(s.begin(), s.end(), value,
                               [](std::int32_t a, std::int64_t b) { return a < b; });
    if (it == s.end()) return s.size() - 1;
    if (*it == value || it == s.begin()) return static_cast<std::size_t>(it - s.begin());
    auto hi = static_cast<std::size_t>(it - s.begin());
    std::int64_t dhi = *it - value;
    std::int64_t dlo = value - s[hi - 1];
    return dlo <= dhi ? hi - 1 : hi;
}

OovBlend oov_blend(std::int64_t value, const Vocabulary& vocab) {
    if (value < 0) throw InputError("negative activity value: " + std::to_string(value));
    const auto& s = vocab.symbols();
    if (s.empty()) return {vocab.unk_id(), vocab.unk_id(), 1.0, 0.0};
    auto it = std::lower_bound(s.begin(), s.end(), value,
                               [](std::int32_t a, std::int64_t b) { return a < b; });
    if (it == s.end()) return {s.size() - 1, s.size() - 1, 1.0, 0.0};
    auto hi = static_cast<std::size_t>(it - s.begin());
    if (*it == value || it == s.begin()) return {hi, hi, 1.0, 0.0};
    const double lo_v = s[hi - 1];
    const double hi_v = s[hi];
    const double hi_w = (static_cast<double>(value) - lo_v) / (hi_v - lo_v);
    return {hi - 1, hi, 1.0 - hi_w, hi_w};
}

std::vector<std::vector<std::uint32_t>> encode_corpus(const Corpus& corpus, const Vocabulary& vocab) {
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(corpus.size());
    for (const auto& seq : corpus.sequences) {
        std::vector<std::uint32_t> ids(seq.samples.size());
        std::transform(seq.samples.begin(), seq.samples.end(), ids.begin(),
                       [&](std::int32_t v) { return static_cast<std::uint32_t>(vocab.encode(v)); });
        out.push_back(std::move(ids));
    }
    return out;
}

// ---------------------------------------------------------------- Noise

NoiseDistribution::NoiseDistribution(std::vector<double> probabilities) : probs_(std::move(probabilities)) {
    if (probs_.empty()) throw InputError("empty noise distribution");
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("invalid probability in noise distribution");
        total += p;
    }
    if (total <= 0.0) throw InputError("noise distribution has no mass");
    cdf_.resize(probs_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        probs_[i] /= total;
        acc += probs_[i];
        cdf_[i] = acc;
        if (probs_[i] > 0.0) ++support_;
    }
}

NoiseDistribution NoiseDistribution::uniform(std::size_t n) {
    if (n == 0) throw InputError("empty noise distribution");
    NoiseDistribution d;
    d.uniform_ = true;
    d.uniform_size_ = n;
    d.support_ = n;
    return d;
}

double NoiseDistribution::probability(std::size_t i) const {
    if (i >= size()) return 0.0;
    return uniform_ ? 1.0 / static_cast<double>(uniform_size_) : probs_[i];
}

std::size_t NoiseDistribution::sample(Rng& rng) const {
    if (uniform_) return std::uniform_int_distribution<std::size_t>(0, uniform_size_ - 1)(rng);
    const double u = std::uniform_real_distribution<double>(0.0, cdf_.back())(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    auto i = static_cast<std::size_t>(it - cdf_.begin());
    if (i >= probs_.size()) i = probs_.size() - 1;
    // u can land exactly on the boundary of a zero-mass bucket
    while (probs_[i] == 0.0 && i > 0) --i;
    return i;
}

NoiseDistribution symbol_noise_distribution(const Vocabulary& vocab, double exponent) {
    if (vocab.size() == 0) throw InputError("vocabulary has no symbols");
    if (!(exponent > 0.0)) throw ConfigError("noise smoothing exponent must be positive");
    std::vector<double> p(vocab.rows(), 0.0);
    for (std::size_t i = 0; i < vocab.size(); ++i)
        p[i] = exponent == 1.0 ? static_cast<double>(vocab.counts()[i])
                               : std::pow(static_cast<double>(vocab.counts()[i]), exponent);
    return NoiseDistribution(std::move(p));
}

// ---------------------------------------------------------------- Segmentation

std::string_view granularity_name(Granularity g) {
    switch (g) {
        case Granularity::sample: return "sample";
        case Granularity::hour: return "hour";
        case Granularity::day: return "day";
        case Granularity::week: return "week";
    }
    return "day";
}

Granularity parse_granularity(std::string_view name) {
    for (auto g : {Granularity::sample, Granularity::hour, Granularity::day, Granularity::week})
        if (granularity_name(g) == name) return g;
    throw ConfigError("invalid granularity: " + std::string(name));
}

std::size_t segment_length(Granularity g) {
    switch (g) {
        case Granularity::sample: return 1;
        case Granularity::hour: return 120;
        case Granularity::day: return 2880;
        case Granularity::week: return 20160;
    }
    return 1;
}

SegmentIndex::SegmentIndex(Granularity g, std::size_t sequence_length, std::size_t num_sequences,
                           std::vector<std::uint32_t> sequence_subject, std::size_t num_subjects,
                           std::size_t half_width)
    : granularity_(g),
      length_(actembed::segment_length(g)),
      n_(num_sequences),
      sequence_subject_(std::move(sequence_subject)),
      num_subjects_(num_subjects),
      half_width_(half_width) {
    if (sequence_length == 0 || sequence_length % length_ != 0)
        throw InputError("sequence length " + std::to_string(sequence_length) +
                         " is not divisible by segment length " + std::to_string(length_));
    if (sequence_subject_.size() != n_) throw InputError("sequence subject map has wrong size");
    k_ = sequence_length / length_;
}

std::size_t SegmentIndex::global_id(std::size_t sequence, std::size_t k) const {
    if (sequence >= n_ || k >= k_) throw InputError("segment position out of range");
    return sequence * k_ + k;
}

void SegmentIndex::neighbors(std::size_t id, std::vector<std::size_t>& out) const {
    out.clear();
    const std::size_t pos = position_of(id);
    const std::size_t base = id - pos;
    const std::size_t first = pos >= half_width_ ? pos - half_width_ : 0;
    const std::size_t last = std::min(k_ - 1, pos + half_width_);
    for (std::size_t p = first; p <= last; ++p)
        if (p != pos) out.push_back(base + p);
}

std::vector<std::size_t> SegmentIndex::neighbors(std::size_t id) const {
    std::vector<std::size_t> out;
    neighbors(id, out);
    return out;
}

SegmentIndex segment(const Corpus& corpus, Granularity g, std::size_t half_width) {
    if (corpus.empty()) throw InputError("empty corpus");
    if (half_width == 0) throw ConfigError("neighbor half-width must be at least 1");
    auto roster = build_roster(corpus);
    return SegmentIndex(g, corpus.sequence_length(), corpus.size(), std::move(roster.sequence_subject),
                        roster.size(), half_width);
}

NoiseDistribution segment_noise_distribution(const SegmentIndex& index) {
    return NoiseDistribution::uniform(index.num_segments());
}

}  // namespace actembed
