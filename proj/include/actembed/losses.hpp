#pragma once

// Forward values and analytic gradients of the embedding objectives. Every function is pure:
// it reads parameter rows through views and returns the gradient entries it touches, leaving
// the update to the caller. Dot products accumulate in the parameter type; loss values and
// coefficients are carried in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace actembed {

/// Parameter blocks addressed by gradient entries.
enum class Slice { phi_sym, phi_seg, w_s, w_nc, u, w_o, theta };

struct RowId {
    Slice slice;
    std::size_t row;
};

template <class T>
struct GradEntry {
    Slice slice;
    std::size_t row;
    std::vector<T> grad;
};

template <class T>
struct LossGrad {
    double value = 0.0;
    std::vector<GradEntry<T>> grads;
};

/// Read-only row-major matrix view.
template <class T>
struct MatrixView {
    const T* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::span<const T> row(std::size_t i) const { return {data + i * cols, cols}; }
};

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow or cancellation.
inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

template <class T>
double dot(std::span<const T> a, std::span<const T> b) {
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return static_cast<double>(acc);
}

template <class T>
std::vector<T> scaled(std::span<const T> v, double s) {
    std::vector<T> out(v.size());
    const T f = static_cast<T>(s);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = f * v[i];
    return out;
}

template <class T>
void axpy(double a, std::span<const T> x, std::span<T> y) {
    const T f = static_cast<T>(a);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += f * x[i];
}

/// Negative-sampling loss of an anchor vector predicting `positive` against `negatives`,
/// scored through the rows of `out` (w_s for symbols, w_nc for segment ids).
/// value = -log s(w_pos . a) - sum_m log s(-w_m . a)
template <class T>
LossGrad<T> negative_sampling_loss(std::span<const T> anchor, RowId anchor_id, std::size_t positive,
                                   std::span<const std::size_t> negatives, MatrixView<T> out,
                                   Slice out_slice) {
    for (auto n : negatives)
        if (n == positive) throw std::invalid_argument("negative sample equals the positive target");
    LossGrad<T> lg;
    lg.grads.reserve(negatives.size() + 2);
    std::vector<T> g_anchor(anchor.size(), T(0));

    const auto w_pos = out.row(positive);
    const double s_pos = dot(w_pos, anchor);
    const double c_pos = sigmoid(s_pos) - 1.0;
    lg.value -= log_sigmoid(s_pos);
    axpy<T>(c_pos, w_pos, g_anchor);
    lg.grads.push_back({out_slice, positive, scaled(anchor, c_pos)});

    for (auto m : negatives) {
        const auto w_neg = out.row(m);
        const double s = dot(w_neg, anchor);
        const double c = sigmoid(s);
        lg.value -= log_sigmoid(-s);
        axpy<T>(c, w_neg, g_anchor);
        lg.grads.push_back({out_slice, m, scaled(anchor, c)});
    }
    lg.grads.push_back({anchor_id.slice, anchor_id.row, std::move(g_anchor)});
    return lg;
}

/// Segment vector predicting one of its own symbols.
template <class T>
LossGrad<T> segment_content_loss(std::span<const T> segment, RowId segment_id, std::size_t positive_symbol,
                                 std::span<const std::size_t> negative_symbols, MatrixView<T> w_s) {
    return negative_sampling_loss(segment, segment_id, positive_symbol, negative_symbols, w_s, Slice::w_s);
}

/// Segment vector predicting the id of a neighboring segment. `neighbors` is the anchor's
/// neighbor set; the positive must belong to it.
template <class T>
LossGrad<T> neighbor_context_loss(std::span<const T> segment, std::size_t segment_id,
                                  std::size_t positive_neighbor, std::span<const std::size_t> neighbors,
                                  std::span<const std::size_t> negative_segments, MatrixView<T> w_nc) {
    if (std::find(neighbors.begin(), neighbors.end(), positive_neighbor) == neighbors.end())
        throw std::invalid_argument("positive segment is not a neighbor of the anchor");
    for (auto n : negative_segments)
        if (n == segment_id) throw std::invalid_argument("negative sample equals the anchor segment");
    return negative_sampling_loss(segment, RowId{Slice::phi_seg, segment_id}, positive_neighbor,
                                  negative_segments, w_nc, Slice::w_nc);
}

/// Cumulative-link ordinal loss for a symbol of rank c in 1..C with thresholds theta (C-1 values).
/// value = -log(s(theta_c - z) - s(theta_{c-1} - z)), z = w_o . phi, theta_0 = -inf, theta_C = +inf.
template <class T>
LossGrad<T> ordinal_loss(std::size_t rank, std::span<const T> symbol_vec, std::size_t symbol_row,
                         std::span<const T> w_o, std::span<const T> theta) {
    const std::size_t classes = theta.size() + 1;
    if (rank < 1 || rank > classes) throw std::invalid_argument("ordinal rank out of range");
    const double z = dot(w_o, symbol_vec);
    const bool has_upper = rank < classes;
    const bool has_lower = rank > 1;
    const double a = has_upper ? static_cast<double>(theta[rank - 1]) - z : 0.0;
    const double b = has_lower ? static_cast<double>(theta[rank - 2]) - z : 0.0;
    const double sa = has_upper ? sigmoid(a) : 1.0;
    const double sb = has_lower ? sigmoid(b) : 0.0;
    const double da = has_upper ? sa * (1.0 - sa) : 0.0;
    const double db = has_lower ? sb * (1.0 - sb) : 0.0;

    double pi;
    if (has_upper && has_lower && a > 0.0 && b > 0.0) {
        // both near 1: use 1-s(x) = s(-x) to avoid cancellation
        pi = sigmoid(-b) - sigmoid(-a);
    } else {
        pi = sa - sb;
    }
    pi = std::max(pi, 1e-12);

    LossGrad<T> lg;
    lg.value = -std::log(pi);
    const double dz = (da - db) / pi;
    lg.grads.push_back({Slice::phi_sym, symbol_row, scaled(w_o, dz)});
    lg.grads.push_back({Slice::w_o, 0, scaled(symbol_vec, dz)});
    if (has_upper) lg.grads.push_back({Slice::theta, rank - 1, {static_cast<T>(-da / pi)}});
    if (has_lower) lg.grads.push_back({Slice::theta, rank - 2, {static_cast<T>(db / pi)}});
    return lg;
}

/// Probabilities of the C ordinal classes for a score z (sums to 1 by telescoping).
inline std::vector<double> ordinal_class_probs(double z, std::span<const double> theta) {
    std::vector<double> p(theta.size() + 1);
    double prev = 0.0;
    for (std::size_t c = 0; c < theta.size(); ++c) {
        const double cur = sigmoid(theta[c] - z);
        p[c] = cur - prev;
        prev = cur;
    }
    p.back() = 1.0 - prev;
    return p;
}

/// Squared-distance smoothing between a segment and its neighbors:
/// value = eta/|N| * sum_c ||phi_k - phi_c||^2.
template <class T>
LossGrad<T> smoothing_loss(std::span<const T> segment, std::size_t segment_id,
                           std::span<const std::span<const T>> neighbor_vecs,
                           std::span<const std::size_t> neighbor_ids, double eta) {
    if (neighbor_vecs.empty()) throw std::invalid_argument("smoothing needs at least one neighbor");
    if (neighbor_vecs.size() != neighbor_ids.size())
        throw std::invalid_argument("neighbor vectors and ids differ in size");
    if (eta < 0.0) throw std::invalid_argument("smoothing strength must be non-negative");
    const double scale = eta / static_cast<double>(neighbor_vecs.size());
    LossGrad<T> lg;
    std::vector<T> g_anchor(segment.size(), T(0));
    for (std::size_t c = 0; c < neighbor_vecs.size(); ++c) {
        const auto nb = neighbor_vecs[c];
        std::vector<T> g_nb(segment.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < segment.size(); ++i) {
            const double diff = static_cast<double>(segment[i]) - static_cast<double>(nb[i]);
            sq += diff * diff;
            g_anchor[i] += static_cast<T>(2.0 * scale * diff);
            g_nb[i] = static_cast<T>(-2.0 * scale * diff);
        }
        lg.value += scale * sq;
        lg.grads.push_back({Slice::phi_seg, neighbor_ids[c], std::move(g_nb)});
    }
    lg.grads.push_back({Slice::phi_seg, segment_id, std::move(g_anchor)});
    return lg;
}

/// Softmax over u_p . phi for every subject p, max-subtracted.
template <class T>
std::vector<double> discriminator_probs(std::span<const T> segment, MatrixView<T> u) {
    std::vector<double> logits(u.rows);
    for (std::size_t p = 0; p < u.rows; ++p) logits[p] = dot(u.row(p), segment);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (auto& l : logits) l /= z;
    return logits;
}

/// Cross-entropy of the subject discriminator; gradient flows into u only.
template <class T>
LossGrad<T> discriminator_loss(std::span<const double> probs, std::size_t subject, std::span<const T> segment) {
    if (subject >= probs.size()) throw std::invalid_argument("unknown subject");
    LossGrad<T> lg;
    lg.value = -std::log(std::max(probs[subject], std::numeric_limits<double>::min()));
    lg.grads.reserve(probs.size());
    for (std::size_t q = 0; q < probs.size(); ++q) {
        const double c = probs[q] - (q == subject ? 1.0 : 0.0);
        lg.grads.push_back({Slice::u, q, scaled(segment, c)});
    }
    return lg;
}

/// Negated discriminator cross-entropy; gradient flows into the segment vector only.
/// The caller scales the update by lambda.
template <class T>
LossGrad<T> adversarial_loss(std::span<const double> probs, std::size_t subject, MatrixView<T> u,
                             RowId segment_id) {
    if (subject >= probs.size()) throw std::invalid_argument("unknown subject");
    LossGrad<T> lg;
    lg.value = std::log(std::max(probs[subject], std::numeric_limits<double>::min()));
    std::vector<double> g(u.cols, 0.0);
    for (std::size_t q = 0; q < probs.size(); ++q) {
        const double c = (q == subject ? 1.0 : 0.0) - probs[q];
        if (c == 0.0) continue;
        const auto row = u.row(q);
        for (std::size_t i = 0; i < u.cols; ++i) g[i] += c * static_cast<double>(row[i]);
    }
    std::vector<T> gt(g.begin(), g.end());
    lg.grads.push_back({segment_id.slice, segment_id.row, std::move(gt)});
    return lg;
}

/// Components of the combined objective. A disabled or inapplicable component is nullopt.
struct LossComponents {
    std::optional<double> content;      // L_s
    std::optional<double> ordinal;      // L_o
    std::optional<double> context;      // L_nc
    std::optional<double> smoothing;    // L_r, eta already applied
    std::optional<double> adversarial;  // L_a
};

/// L_s + beta L_o + L_nc + L_r + lambda L_a over the present components.
inline double combined_loss_value(const LossComponents& c, double beta, double lambda) {
    double total = 0.0;
    if (c.content) total += *c.content;
    if (c.ordinal) total += beta * *c.ordinal;
    if (c.context) total += *c.context;
    if (c.smoothing) total += *c.smoothing;
    if (c.adversarial) total += lambda * *c.adversarial;
    return total;
}

}  // namespace actembed
