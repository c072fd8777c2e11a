#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "actembed/corpus.hpp"
#include "actembed/losses.hpp"

namespace actembed {

using EncodedCorpus = std::vector<std::vector<std::uint32_t>>;

template <class T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }
    MatrixView<T> view() const { return {data_.data(), rows_, cols_}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// All trainable parameters plus the metadata that ties them to a corpus.
struct ModelParams {
    Granularity granularity = Granularity::day;
    std::size_t d = 0;

    Matrix<float> phi_sym;  // (V+1) x d, last row is UNK
    Matrix<float> phi_seg;  // G x d, empty at sample granularity
    Matrix<float> w_s;      // (V+1) x d
    Matrix<float> w_nc;     // G x d, empty at sample granularity
    Matrix<float> u;        // P x d
    std::vector<float> w_o;    // d
    std::vector<float> theta;  // C-1, strictly increasing

    // metadata
    std::vector<std::int32_t> symbols;
    std::vector<std::uint64_t> symbol_counts;
    std::uint64_t unk_count = 0;
    std::vector<std::string> subjects;
    std::vector<std::uint32_t> sequence_subject;
    std::size_t segments_per_sequence = 0;
    std::string hyperparameters = "{}";  // JSON object text

    std::size_t vocab_size() const { return symbols.size(); }
    std::size_t num_segments() const { return sequence_subject.size() * segments_per_sequence; }
    std::size_t num_subjects() const { return subjects.size(); }
    std::size_t num_classes() const { return symbols.size(); }

    Vocabulary vocabulary() const { return Vocabulary(symbols, symbol_counts, unk_count); }
    std::string vocab_hash() const { return vocabulary().hash(); }
};

struct ModelShape {
    Granularity granularity = Granularity::day;
    std::size_t vocab_size = 0;    // V, excluding UNK
    std::size_t num_segments = 0;  // G
    std::size_t num_subjects = 0;  // P
    std::size_t num_classes = 0;   // C
};

/// Embedding rows uniform in [-0.5/d, 0.5/d]; output weights, u and w_o zero; theta equally
/// spaced on [-2, 2] (a single threshold sits at 0). Metadata is left empty.
ModelParams init_params(const ModelShape& shape, std::size_t d, std::uint64_t seed, bool ordinal_enabled = true);

/// init_params sized from a corpus, with metadata filled in.
ModelParams init_model(const Corpus& corpus, const Vocabulary& vocab, const SegmentIndex& index, std::size_t d,
                       std::uint64_t seed, bool ordinal_enabled = true);

std::span<const float> lookup_symbol(const ModelParams& params, std::size_t symbol_id);
/// Segment embedding row. Not available at sample granularity (use the overload below).
std::span<const float> lookup_segment(const ModelParams& params, std::size_t segment_id);
/// Unit representation: the segment row, or at sample granularity the symbol row of the sample.
std::span<const float> lookup_segment(const ModelParams& params, const SegmentIndex& index,
                                      const EncodedCorpus& encoded, std::size_t segment_id);

/// Embedding of an arbitrary activity value; values between two known symbols are linearly
/// interpolated, values outside the range clamp to the nearest symbol.
std::vector<float> symbol_vector_for_value(const ModelParams& params, std::int64_t value);

enum class SubjectPooling { concatenate, average };

struct SubjectRepresentation {
    std::string subject_id;
    std::vector<float> vector;
};

/// Segment vectors of one sequence in time order, concatenated (K*d) or averaged (d).
SubjectRepresentation subject_representation(const ModelParams& params, const SegmentIndex& index,
                                             const EncodedCorpus& encoded, std::size_t sequence,
                                             SubjectPooling pooling = SubjectPooling::concatenate);

struct InferConfig {
    std::size_t negatives = 12;
    double lr = 0.025;
    double min_lr = 1e-4;
    double noise_exponent = 1.0;
    std::uint64_t seed = 1;
};

/// Embeds an unseen segment: a fresh row is trained with the segment-content loss for `steps`
/// passes over the segment while every model parameter stays frozen.
std::vector<float> infer_unseen_segment(const ModelParams& params, std::span<const std::int32_t> samples,
                                        std::size_t steps, const InferConfig& config = {});

/// Checks shapes and parameter invariants (finite values, increasing theta).
void validate_params(const ModelParams& params);

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);
std::vector<std::uint8_t> serialize_model(const ModelParams& params);
ModelParams deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace actembed
