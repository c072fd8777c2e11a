#include "actembed/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "actembed/errors.hpp"

namespace actembed {

using nlohmann::json;

namespace {

double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

using Objective = std::function<double(std::span<const double>, std::span<double>)>;

// Gradient descent with Barzilai-Borwein step proposals and Armijo backtracking. Every accepted
// step strictly decreases the objective.
std::vector<double> minimize(const Objective& f, std::size_t dim, double tolerance, std::size_t max_iter,
                             std::vector<double>* trace) {
    std::vector<double> w(dim, 0.0), g(dim), w_new(dim), g_new(dim);
    double fx = f(w, g);
    if (trace) trace->push_back(fx);
    double step = 1.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const double gg = norm2(g);
        if (std::sqrt(gg) < tolerance) break;
        double t = step;
        double f_new = 0.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t i = 0; i < dim; ++i) w_new[i] = w[i] - t * g[i];
            f_new = f(w_new, g_new);
            if (f_new <= fx - 1e-4 * t * gg) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        double sy = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double s = w_new[i] - w[i];
            sy += s * (g_new[i] - g[i]);
            ss += s * s;
        }
        step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : t * 2.0;
        w.swap(w_new);
        g.swap(g_new);
        fx = f_new;
        if (trace) trace->push_back(fx);
    }
    return w;
}

double binary_objective(const Matrix<double>& x, std::span<const int> y, std::span<const double> w, double l2,
                        std::span<double> grad) {
    const std::size_t n = x.rows();
    const std::size_t q = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = x.row(i);
        double s = w[q];
        for (std::size_t j = 0; j < q; ++j) s += row[j] * w[j];
        loss += softplus(s) - (y[i] ? s : 0.0);
        if (!grad.empty()) {
            const double r = (sigmoid(s) - (y[i] ? 1.0 : 0.0)) * inv_n;
            for (std::size_t j = 0; j < q; ++j) grad[j] += r * row[j];
            grad[q] += r;
        }
    }
    double reg = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
        reg += w[j] * w[j];
        if (!grad.empty()) grad[j] += l2 * w[j];
    }
    return loss * inv_n + 0.5 * l2 * reg;
}

struct Standardizer {
    std::vector<double> mean, scale;

    Standardizer(const Matrix<double>& x, std::span<const std::size_t> rows) : mean(x.cols(), 0.0), scale(x.cols(), 1.0) {
        if (rows.empty()) return;
        for (auto r : rows)
            for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += x(r, j);
        for (auto& m : mean) m /= static_cast<double>(rows.size());
        std::vector<double> var(x.cols(), 0.0);
        for (auto r : rows)
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const double dlt = x(r, j) - mean[j];
                var[j] += dlt * dlt;
            }
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
            scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
    }

    Matrix<double> apply(const Matrix<double>& x, std::span<const std::size_t> rows) const {
        Matrix<double> out(rows.size(), x.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(rows[i], j) - mean[j]) * scale[j];
        return out;
    }
};

Matrix<double> gather(const Matrix<double>& x, std::span<const std::size_t> rows) {
    Matrix<double> out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = x.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

double primary_score(const F1Scores& f, int classes) { return classes == 2 ? f.binary : f.micro; }

}  // namespace

double logreg_objective(const Matrix<double>& x, std::span<const int> y, std::span<const double> w, double l2) {
    if (w.size() != x.cols() + 1) throw InputError("weight vector has wrong length");
    return binary_objective(x, y, w, l2, {});
}

std::vector<double> fit_binary_logreg(const Matrix<double>& x, std::span<const int> y, double l2,
                                      const LogRegOptions& options, std::vector<double>* objective_trace) {
    if (x.rows() != y.size()) throw InputError("feature and label counts differ");
    Objective f = [&](std::span<const double> w, std::span<double> g) { return binary_objective(x, y, w, l2, g); };
    return minimize(f, x.cols() + 1, options.tolerance, options.max_iter, objective_trace);
}

LogRegModel train_logreg(const Matrix<double>& x, std::span<const int> labels, int classes, double l2,
                         const LogRegOptions& options) {
    if (classes < 2) throw InputError("need at least 2 classes");
    if (x.rows() < 2) throw InputError("need at least 2 training examples");
    if (x.rows() != labels.size()) throw InputError("feature and label counts differ");
    std::vector<std::size_t> count(static_cast<std::size_t>(classes), 0);
    for (int c : labels) {
        if (c < 0 || c >= classes) throw InputError("label out of range");
        ++count[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < classes; ++c)
        if (count[static_cast<std::size_t>(c)] == 0) throw InputError("class absent: " + std::to_string(c));

    LogRegModel model;
    model.classes = classes;
    const std::size_t models = classes == 2 ? 1 : static_cast<std::size_t>(classes);
    model.weights = Matrix<double>(models, x.cols() + 1);
    std::vector<int> y(labels.size());
    for (std::size_t m = 0; m < models; ++m) {
        const int positive = classes == 2 ? 1 : static_cast<int>(m);
        for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == positive ? 1 : 0;
        const auto w = fit_binary_logreg(x, y, l2, options);
        std::copy(w.begin(), w.end(), model.weights.row(m).begin());
    }
    return model;
}

std::vector<int> predict(const LogRegModel& model, const Matrix<double>& x) {
    if (x.cols() + 1 != model.weights.cols()) throw InputError("feature dimension does not match the classifier");
    const std::size_t q = x.cols();
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        int best = 0;
        double best_score = -INFINITY;
        for (std::size_t m = 0; m < model.weights.rows(); ++m) {
            const auto w = model.weights.row(m);
            double s = w[q];
            for (std::size_t j = 0; j < q; ++j) s += w[j] * row[j];
            if (model.classes == 2) {
                best = s >= 0.0 ? 1 : 0;
                break;
            }
            if (s > best_score) {
                best_score = s;
                best = static_cast<int>(m);
            }
        }
        out[i] = best;
    }
    return out;
}

F1Scores f1_scores(std::span<const int> truth, std::span<const int> predicted, int classes) {
    if (truth.size() != predicted.size()) throw InputError("label lists differ in length");
    const auto nc = static_cast<std::size_t>(classes);
    std::vector<std::size_t> tp(nc, 0), fp(nc, 0), fn(nc, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        if (t >= nc || p >= nc) throw InputError("label out of range");
        if (t == p) {
            ++tp[t];
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    auto f1 = [](std::size_t tp_, std::size_t fp_, std::size_t fn_) {
        if (tp_ + fp_ == 0 || tp_ + fn_ == 0) return 0.0;
        const double prec = static_cast<double>(tp_) / static_cast<double>(tp_ + fp_);
        const double rec = static_cast<double>(tp_) / static_cast<double>(tp_ + fn_);
        return prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    };
    F1Scores s;
    double macro = 0.0;
    std::size_t stp = 0, sfp = 0, sfn = 0;
    for (std::size_t c = 0; c < nc; ++c) {
        macro += f1(tp[c], fp[c], fn[c]);
        stp += tp[c];
        sfp += fp[c];
        sfn += fn[c];
    }
    s.macro = macro / static_cast<double>(nc);
    s.micro = f1(stp, sfp, sfn);
    s.binary = nc >= 2 ? f1(tp[1], fp[1], fn[1]) : 0.0;
    return s;
}

EvalReport evaluate_task(const Matrix<double>& features, std::span<const std::optional<int>> labels, Task task,
                         const EvalProtocol& protocol) {
    if (features.rows() != labels.size()) throw InputError("feature rows and labels differ in count");
    if (protocol.splits == 0) throw ConfigError("at least one split is required");
    if (protocol.l2_grid.empty()) throw ConfigError("l2 grid is empty");
    EvalReport report;
    report.task = std::string(task_name(task));
    report.classes = task_arity(task);
    const auto nc = static_cast<std::size_t>(report.classes);

    std::vector<std::vector<std::size_t>> by_class(nc);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        const int c = *labels[i];
        if (c < 0 || static_cast<std::size_t>(c) >= nc) throw InputError("label out of range");
        by_class[static_cast<std::size_t>(c)].push_back(i);
        ++report.labeled;
    }
    if (report.labeled == 0) throw InputError("no labeled subjects for task " + report.task);
    for (std::size_t c = 0; c < nc; ++c)
        if (by_class[c].size() < 3)
            throw InputError("task " + report.task + ": class " + std::to_string(c) + " has " +
                             std::to_string(by_class[c].size()) + " labeled subjects, need at least 3");

    auto run_split = [&](std::size_t s) {
        SplitResult r;
        r.split = s;
        r.seed = protocol.seed * 1000003ULL + s;
        Rng rng(r.seed);
        for (std::size_t c = 0; c < nc; ++c) {
            auto members = by_class[c];
            std::shuffle(members.begin(), members.end(), rng);
            const double n = static_cast<double>(members.size());
            auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(protocol.test_fraction * n)));
            auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(protocol.val_fraction * n)));
            while (n_test + n_val >= members.size()) {
                if (n_val > 1)
                    --n_val;
                else
                    --n_test;
            }
            r.test_rows.insert(r.test_rows.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
            r.validation.insert(r.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test),
                                members.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
            r.train.insert(r.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), members.end());
        }
        std::sort(r.train.begin(), r.train.end());
        std::sort(r.validation.begin(), r.validation.end());
        std::sort(r.test_rows.begin(), r.test_rows.end());

        Matrix<double> xtr, xva, xte;
        if (protocol.standardize) {
            Standardizer z(features, r.train);
            xtr = z.apply(features, r.train);
            xva = z.apply(features, r.validation);
            xte = z.apply(features, r.test_rows);
        } else {
            xtr = gather(features, r.train);
            xva = gather(features, r.validation);
            xte = gather(features, r.test_rows);
        }
        auto labels_of = [&](const std::vector<std::size_t>& rows) {
            std::vector<int> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) y[i] = *labels[rows[i]];
            return y;
        };
        const auto ytr = labels_of(r.train);
        const auto yva = labels_of(r.validation);
        const auto yte = labels_of(r.test_rows);

        double best = -1.0;
        LogRegModel best_model;
        for (double l2 : protocol.l2_grid) {
            auto model = train_logreg(xtr, ytr, report.classes, l2, protocol.logreg);
            const double score = primary_score(f1_scores(yva, predict(model, xva), report.classes), report.classes);
            if (score > best) {
                best = score;
                r.l2 = l2;
                best_model = std::move(model);
            }
        }
        r.validation_score = best;
        r.test = f1_scores(yte, predict(best_model, xte), report.classes);
        return r;
    };

    report.splits.resize(protocol.splits);
    const std::size_t threads = std::max<std::size_t>(1, protocol.threads);
    if (threads == 1) {
        for (std::size_t s = 0; s < protocol.splits; ++s) report.splits[s] = run_split(s);
    } else {
        for (std::size_t base = 0; base < protocol.splits; base += threads) {
            std::vector<std::future<SplitResult>> jobs;
            for (std::size_t s = base; s < std::min(protocol.splits, base + threads); ++s)
                jobs.push_back(std::async(std::launch::async, run_split, s));
            for (std::size_t j = 0; j < jobs.size(); ++j) report.splits[base + j] = jobs[j].get();
        }
    }

    auto summarize = [&](auto member) {
        double m = 0.0;
        for (const auto& s : report.splits) m += s.test.*member;
        m /= static_cast<double>(report.splits.size());
        double v = 0.0;
        for (const auto& s : report.splits) v += (s.test.*member - m) * (s.test.*member - m);
        v = report.splits.size() > 1 ? v / static_cast<double>(report.splits.size() - 1) : 0.0;
        return std::pair{m, std::sqrt(v)};
    };
    std::tie(report.mean.binary, report.stddev.binary) = summarize(&F1Scores::binary);
    std::tie(report.mean.macro, report.stddev.macro) = summarize(&F1Scores::macro);
    std::tie(report.mean.micro, report.stddev.micro) = summarize(&F1Scores::micro);
    return report;
}

// ---------------------------------------------------------------- subject probe

ProbeReport subject_probe(const Matrix<double>& vectors, std::span<const std::size_t> subject,
                          std::span<const std::size_t> sequence, std::size_t num_subjects,
                          const ProbeOptions& options) {
    if (vectors.rows() != subject.size() || subject.size() != sequence.size())
        throw InputError("probe inputs differ in length");
    if (num_subjects < 2) throw InputError("probe needs at least 2 subjects");
    if (!(options.heldout_fraction > 0.0 && options.heldout_fraction < 1.0))
        throw ConfigError("held-out fraction must lie in (0, 1)");

    // group rows by sequence and hold out a fraction of each sequence's segments
    std::size_t num_sequences = 0;
    for (auto s : sequence) num_sequences = std::max(num_sequences, s + 1);
    std::vector<std::vector<std::size_t>> rows_of(num_sequences);
    for (std::size_t i = 0; i < sequence.size(); ++i) rows_of[sequence[i]].push_back(i);

    Rng rng(options.seed);
    std::vector<std::size_t> train, test;
    for (auto& rows : rows_of) {
        if (rows.empty()) continue;
        if (rows.size() < 2) throw InputError("subject probe needs at least 2 segments per sequence");
        std::shuffle(rows.begin(), rows.end(), rng);
        auto held = static_cast<std::size_t>(std::lround(options.heldout_fraction * static_cast<double>(rows.size())));
        held = std::clamp<std::size_t>(held, 1, rows.size() - 1);
        test.insert(test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(held));
        train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(held), rows.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());

    // raw embeddings and no intercept, the same form as the training discriminator
    const auto xtr = gather(vectors, train);
    const auto xte = gather(vectors, test);
    const std::size_t q = vectors.cols();
    const std::size_t P = num_subjects;
    const double inv_n = 1.0 / static_cast<double>(train.size());

    // mean softmax cross-entropy + (l2/2)||U||^2
    Objective f = [&](std::span<const double> w, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
        std::vector<double> logits(P);
        double loss = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            const auto x = xtr.row(i);
            for (std::size_t p = 0; p < P; ++p) {
                const double* wp = w.data() + p * q;
                double s = 0.0;
                for (std::size_t j = 0; j < q; ++j) s += wp[j] * x[j];
                logits[p] = s;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double zsum = 0.0;
            for (auto& l : logits) {
                l = std::exp(l - mx);
                zsum += l;
            }
            const std::size_t y = subject[train[i]];
            loss += -std::log(logits[y] / zsum);
            for (std::size_t p = 0; p < P; ++p) {
                const double r = (logits[p] / zsum - (p == y ? 1.0 : 0.0)) * inv_n;
                double* gp = g.data() + p * q;
                for (std::size_t j = 0; j < q; ++j) gp[j] += r * x[j];
            }
        }
        double reg = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            reg += w[i] * w[i];
            g[i] += options.l2 * w[i];
        }
        return loss * inv_n + 0.5 * options.l2 * reg;
    };
    const auto w = minimize(f, P * q, 1e-6, options.max_iter, nullptr);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto x = xte.row(i);
        std::size_t best = 0;
        double best_s = -INFINITY;
        for (std::size_t p = 0; p < P; ++p) {
            const double* wp = w.data() + p * q;
            double s = 0.0;
            for (std::size_t j = 0; j < q; ++j) s += wp[j] * x[j];
            if (s > best_s) {
                best_s = s;
                best = p;
            }
        }
        if (best == subject[test[i]]) ++correct;
    }
    ProbeReport report;
    report.subjects = P;
    report.chance = 1.0 / static_cast<double>(P);
    report.train_segments = train.size();
    report.test_segments = test.size();
    report.accuracy = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
    return report;
}

ProbeReport subject_probe(const ModelParams& params, const SegmentIndex& index, const EncodedCorpus& encoded,
                          const ProbeOptions& options) {
    if (index.segments_per_sequence() < 2)
        throw InputError("subject probe needs at least 2 segments per sequence (K >= 2)");
    const std::size_t G = index.num_segments();
    Matrix<double> vectors(G, params.d);
    std::vector<std::size_t> subject(G), sequence(G);
    for (std::size_t id = 0; id < G; ++id) {
        const auto v = lookup_segment(params, index, encoded, id);
        std::copy(v.begin(), v.end(), vectors.row(id).begin());
        subject[id] = index.subject_of(id);
        sequence[id] = index.sequence_of(id);
    }
    return subject_probe(vectors, subject, sequence, index.num_subjects(), options);
}

// ---------------------------------------------------------------- features and reports

Matrix<double> representation_matrix(const ModelParams& params, const SegmentIndex& index,
                                     const EncodedCorpus& encoded, SubjectPooling pooling) {
    const std::size_t cols = pooling == SubjectPooling::concatenate ? index.segments_per_sequence() * params.d : params.d;
    Matrix<double> out(index.num_sequences(), cols);
    for (std::size_t n = 0; n < index.num_sequences(); ++n) {
        const auto rep = subject_representation(params, index, encoded, n, pooling);
        std::copy(rep.vector.begin(), rep.vector.end(), out.row(n).begin());
    }
    return out;
}

std::vector<std::optional<int>> FeatureTable::task_labels(Task task) const {
    std::vector<std::optional<int>> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i][static_cast<int>(task)];
    return out;
}

FeatureTable feature_table(const Corpus& corpus, Matrix<double> features) {
    if (features.rows() != corpus.size()) throw InputError("feature rows do not match corpus sequences");
    FeatureTable t;
    for (const auto& seq : corpus.sequences) {
        t.subjects.push_back(seq.subject_id);
        t.labels.push_back(seq.labels);
    }
    t.features = std::move(features);
    return t;
}

void write_feature_csv(const FeatureTable& table, std::ostream& out) {
    out << "subject";
    for (Task t : kTasks) out << ',' << task_name(t);
    for (std::size_t j = 0; j < table.features.cols(); ++j) out << ",e" << j;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < table.subjects.size(); ++i) {
        out << table.subjects[i];
        for (const auto& lab : table.labels[i]) {
            out << ',';
            if (lab) out << *lab;
        }
        for (std::size_t j = 0; j < table.features.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", table.features(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

FeatureTable read_feature_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty feature CSV");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 5 || header[0] != "subject") throw InputError("feature CSV has an unexpected header");
    for (std::size_t t = 0; t < 4; ++t)
        if (header[t + 1] != task_name(kTasks[t])) throw InputError("feature CSV has an unexpected header");
    const std::size_t q = header.size() - 5;
    FeatureTable table;
    std::vector<double> values;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != header.size())
            throw InputError("feature CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(header.size()));
        table.subjects.push_back(cells[0]);
        std::array<std::optional<int>, 4> labs{};
        try {
            for (std::size_t t = 0; t < 4; ++t)
                if (!cells[t + 1].empty()) labs[t] = std::stoi(cells[t + 1]);
            for (std::size_t j = 0; j < q; ++j) values.push_back(std::stod(cells[5 + j]));
        } catch (const std::exception&) {
            throw InputError("feature CSV line " + std::to_string(lineno) + " has a non-numeric cell");
        }
        table.labels.push_back(labs);
    }
    table.features = Matrix<double>(table.subjects.size(), q);
    std::copy(values.begin(), values.end(), table.features.data().begin());
    return table;
}

std::string eval_report_json(const std::vector<EvalReport>& reports, std::uint64_t seed) {
    json out;
    out["seed"] = seed;
    json tasks = json::array();
    for (const auto& r : reports) {
        json t;
        t["task"] = r.task;
        t["classes"] = r.classes;
        t["labeled"] = r.labeled;
        auto scores = [&](const F1Scores& f) {
            json s;
            if (r.classes == 2) {
                s["f1"] = f.binary;
            } else {
                s["f1_macro"] = f.macro;
            }
            s["f1_micro"] = f.micro;
            return s;
        };
        t["mean"] = scores(r.mean);
        t["std"] = scores(r.stddev);
        json splits = json::array();
        for (const auto& s : r.splits) {
            json js = scores(s.test);
            js["split"] = s.split;
            js["seed"] = s.seed;
            js["l2"] = s.l2;
            js["validation_score"] = s.validation_score;
            js["train"] = s.train;
            js["validation"] = s.validation;
            js["test"] = s.test_rows;
            splits.push_back(std::move(js));
        }
        t["splits"] = std::move(splits);
        tasks.push_back(std::move(t));
    }
    out["tasks"] = std::move(tasks);
    return out.dump(2);
}

std::string probe_report_json(const ProbeReport& r) {
    json j;
    j["accuracy"] = r.accuracy;
    j["chance"] = r.chance;
    j["subjects"] = r.subjects;
    j["train_segments"] = r.train_segments;
    j["test_segments"] = r.test_segments;
    return j.dump(2);
}

void write_eval_csv(const std::vector<EvalReport>& reports, const std::string& variant, std::ostream& out,
                    bool header) {
    if (header) out << "variant,task,split,seed,l2,binary_f1,macro_f1,micro_f1\n";
    for (const auto& r : reports)
        for (const auto& s : r.splits)
            out << variant << ',' << r.task << ',' << s.split << ',' << s.seed << ',' << s.l2 << ','
                << s.test.binary << ',' << s.test.macro << ',' << s.test.micro << '\n';
}

}  // namespace actembed
