#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actembed/corpus.hpp"
#include "actembed/model.hpp"

namespace actembed {

/// One-vs-all (or single binary) L2-regularized logistic regression. Row c of `weights` holds the
/// coefficients of class c's model followed by its intercept; a 2-class model has a single row
/// scoring class 1.
struct LogRegModel {
    int classes = 2;
    Matrix<double> weights;
};

struct LogRegOptions {
    double tolerance = 1e-6;     // gradient-norm stopping criterion
    std::size_t max_iter = 10000;
};

/// Mean binary log loss plus (l2/2)*||w||^2 (the intercept is not penalized).
/// `w` holds q coefficients followed by the intercept; `y` is 0/1.
double logreg_objective(const Matrix<double>& x, std::span<const int> y, std::span<const double> w, double l2);

/// Full-batch gradient descent with Barzilai-Borwein steps and Armijo backtracking; the
/// objective never increases between iterations.
std::vector<double> fit_binary_logreg(const Matrix<double>& x, std::span<const int> y, double l2,
                                      const LogRegOptions& options = {},
                                      std::vector<double>* objective_trace = nullptr);

LogRegModel train_logreg(const Matrix<double>& x, std::span<const int> labels, int classes, double l2,
                         const LogRegOptions& options = {});

/// Binary: class 1 iff score >= 0. One-vs-all: argmax score, ties to the lowest class.
std::vector<int> predict(const LogRegModel& model, const Matrix<double>& x);

struct F1Scores {
    double binary = 0.0;  // F1 of class 1
    double macro = 0.0;
    double micro = 0.0;
};

/// A precision or recall of 0/0 makes that class's F1 zero.
F1Scores f1_scores(std::span<const int> truth, std::span<const int> predicted, int classes);

struct EvalProtocol {
    std::size_t splits = 10;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 1;
    std::vector<double> l2_grid{1e-3, 1e-2, 1e-1, 1.0, 10.0};
    bool standardize = true;  // z-score features with training-split statistics
    std::size_t threads = 1;
    LogRegOptions logreg{};
};

struct SplitResult {
    std::size_t split = 0;
    std::uint64_t seed = 0;
    double l2 = 0.0;
    F1Scores test;
    double validation_score = 0.0;
    std::vector<std::size_t> train, validation, test_rows;
};

struct EvalReport {
    std::string task;
    int classes = 2;
    std::size_t labeled = 0;
    std::vector<SplitResult> splits;
    // mean and standard deviation across splits
    F1Scores mean;
    F1Scores stddev;
    /// binary F1 for 2-class tasks, micro-F1 for 3-class tasks
    double headline_mean() const { return classes == 2 ? mean.binary : mean.micro; }
};

/// Repeated stratified train/validation/test splits over the labeled rows. The l2 strength
/// is chosen per split by validation score (binary F1, or micro-F1 for 3-class tasks).
EvalReport evaluate_task(const Matrix<double>& features, std::span<const std::optional<int>> labels, Task task,
                         const EvalProtocol& protocol);

struct ProbeReport {
    double accuracy = 0.0;
    double chance = 0.0;
    std::size_t subjects = 0;
    std::size_t train_segments = 0;
    std::size_t test_segments = 0;
};

struct ProbeOptions {
    double heldout_fraction = 0.3;
    std::uint64_t seed = 1;
    double l2 = 1e-4;
    std::size_t max_iter = 500;
};

/// Fresh softmax subject classifier on frozen segment embeddings; accuracy on held-out segments.
ProbeReport subject_probe(const ModelParams& params, const SegmentIndex& index, const EncodedCorpus& encoded,
                          const ProbeOptions& options = {});

/// Probe on explicit segment vectors grouped by subject (rows of `vectors`, subject per row,
/// `sequence` per row groups segments that come from one sequence).
ProbeReport subject_probe(const Matrix<double>& vectors, std::span<const std::size_t> subject,
                          std::span<const std::size_t> sequence, std::size_t num_subjects,
                          const ProbeOptions& options = {});

/// N x (K*d) matrix of subject representations, one row per sequence.
Matrix<double> representation_matrix(const ModelParams& params, const SegmentIndex& index,
                                     const EncodedCorpus& encoded,
                                     SubjectPooling pooling = SubjectPooling::concatenate);

struct FeatureTable {
    std::vector<std::string> subjects;
    std::vector<std::array<std::optional<int>, 4>> labels;
    Matrix<double> features;

    std::vector<std::optional<int>> task_labels(Task task) const;
};

FeatureTable feature_table(const Corpus& corpus, Matrix<double> features);
/// CSV header: subject,apnea,diabetes,hypertension,insomnia,e0..e{q-1}; missing labels are empty.
void write_feature_csv(const FeatureTable& table, std::ostream& out);
FeatureTable read_feature_csv(std::istream& in);

std::string eval_report_json(const std::vector<EvalReport>& reports, std::uint64_t seed);
std::string probe_report_json(const ProbeReport& report);
/// variant,task,split,seed,l2,binary_f1,macro_f1,micro_f1
void write_eval_csv(const std::vector<EvalReport>& reports, const std::string& variant, std::ostream& out,
                    bool header = true);

}  // namespace actembed
