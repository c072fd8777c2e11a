#pragma once

// Randomized analytic-vs-finite-difference checks for each loss, shared by the unit tests and
// the acceptance run. Each function draws one random instance and returns its max relative error.

#include <random>

#include "oracles.hpp"

namespace oracle {

using Rng = std::mt19937_64;

inline Vec random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec v(d);
    for (auto& x : v) x = u(rng);
    return v;
}

inline std::vector<double> flatten(const std::vector<Vec>& rows) {
    std::vector<double> out;
    for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
}

/// Shared body of the two negative-sampling losses.
template <class Call>
double check_negative_sampling(Rng& rng, std::size_t d, actembed::Slice anchor_slice, actembed::Slice out_slice,
                               Call call) {
    const std::size_t rows = 20, M = 12;
    std::vector<Vec> W(rows);
    for (auto& r : W) r = random_vec(rng, d, 0.5);
    Vec phi = random_vec(rng, d, 0.5);
    std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
    const std::size_t positive = pick(rng);
    std::vector<std::size_t> negs;
    while (negs.size() < M) {
        const auto n = pick(rng);
        if (n != positive && n != 0) negs.push_back(n);  // row 0 doubles as the anchor id for context loss
    }
    const auto flat = flatten(W);
    const actembed::MatrixView<double> view{flat.data(), rows, d};
    const actembed::LossGrad<double> lg = call(phi, positive, negs, view);

    Rows touched;
    touched[{anchor_slice, 0}] = &phi;
    for (std::size_t i = 0; i < rows; ++i) touched[{out_slice, i}] = &W[i];
    auto value = [&] {
        std::vector<Vec> wn;
        for (auto m : negs) wn.push_back(W[m]);
        return negative_sampling(phi, W[positive], wn);
    };
    if (std::abs(lg.value - value()) > 1e-10) return std::numeric_limits<double>::infinity();
    return max_gradient_error(lg, touched, value);
}

inline double check_content(Rng& rng, std::size_t d = 8) {
    using namespace actembed;
    return check_negative_sampling(rng, d, Slice::phi_seg, Slice::w_s,
                                   [&](const Vec& phi, std::size_t pos, const std::vector<std::size_t>& negs,
                                       MatrixView<double> view) {
                                       return segment_content_loss<double>(phi, RowId{Slice::phi_seg, 0}, pos, negs,
                                                                           view);
                                   });
}

inline double check_context(Rng& rng, std::size_t d = 8) {
    using namespace actembed;
    return check_negative_sampling(rng, d, Slice::phi_seg, Slice::w_nc,
                                   [&](const Vec& phi, std::size_t pos, const std::vector<std::size_t>& negs,
                                       MatrixView<double> view) {
                                       const std::size_t nbrs[1] = {pos};
                                       return neighbor_context_loss<double>(phi, 0, pos, nbrs, negs, view);
                                   });
}

inline double check_ordinal(Rng& rng, std::size_t d = 8) {
    using namespace actembed;
    std::uniform_int_distribution<std::size_t> classes_dist(2, 9);
    const std::size_t C = classes_dist(rng);
    std::uniform_real_distribution<double> gap(0.3, 1.5);
    std::vector<Vec> theta_rows(C - 1, Vec(1));
    double t = -0.5 * static_cast<double>(C - 1);
    for (auto& r : theta_rows) {
        r[0] = t;
        t += gap(rng);
    }
    Vec phi = random_vec(rng, d, 0.5);
    Vec w_o = random_vec(rng, d, 0.5);
    const std::size_t rank = std::uniform_int_distribution<std::size_t>(1, C)(rng);
    const Vec theta_flat = flatten(theta_rows);
    const auto lg = ordinal_loss<double>(rank, phi, 3, w_o, theta_flat);

    Rows touched;
    touched[{Slice::phi_sym, 3}] = &phi;
    touched[{Slice::w_o, 0}] = &w_o;
    for (std::size_t c = 0; c + 1 < C; ++c) touched[{Slice::theta, c}] = &theta_rows[c];
    auto value = [&] { return ordinal(rank, phi, w_o, flatten(theta_rows)); };
    if (std::abs(lg.value - value()) > 1e-10) return std::numeric_limits<double>::infinity();
    return max_gradient_error(lg, touched, value);
}

inline double check_smoothing(Rng& rng, std::size_t d = 8) {
    using namespace actembed;
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
    const double eta = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    Vec phi = random_vec(rng, d);
    std::vector<Vec> nbrs(n);
    for (auto& v : nbrs) v = random_vec(rng, d);
    std::vector<std::span<const double>> views;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < n; ++i) {
        views.emplace_back(nbrs[i]);
        ids.push_back(i + 1);
    }
    const auto lg = smoothing_loss<double>(phi, 0, views, ids, eta);
    Rows touched;
    touched[{Slice::phi_seg, 0}] = &phi;
    for (std::size_t i = 0; i < n; ++i) touched[{Slice::phi_seg, i + 1}] = &nbrs[i];
    auto value = [&] { return smoothing(phi, nbrs, eta); };
    if (std::abs(lg.value - value()) > 1e-10) return std::numeric_limits<double>::infinity();
    return max_gradient_error(lg, touched, value);
}

/// Discriminator (gradient into u) and adversary (gradient into the segment) on one instance.
inline std::pair<double, double> check_discriminator_pair(Rng& rng, std::size_t d = 8) {
    using namespace actembed;
    const std::size_t P = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
    std::vector<Vec> u(P);
    for (auto& r : u) r = random_vec(rng, d);
    Vec phi = random_vec(rng, d);
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, P - 1)(rng);
    const auto flat = flatten(u);
    const MatrixView<double> view{flat.data(), P, d};
    const auto probs = discriminator_probs<double>(phi, view);

    const auto ld = discriminator_loss<double>(probs, p, phi);
    Rows u_rows;
    for (std::size_t q = 0; q < P; ++q) u_rows[{Slice::u, q}] = &u[q];
    auto dvalue = [&] { return discriminator(phi, u, p); };
    double e_disc = std::abs(ld.value - dvalue()) > 1e-10 ? std::numeric_limits<double>::infinity()
                                                            : max_gradient_error(ld, u_rows, dvalue);

    const auto la = adversarial_loss<double>(probs, p, view, RowId{Slice::phi_seg, 0});
    Rows phi_row;
    phi_row[{Slice::phi_seg, 0}] = &phi;
    auto avalue = [&] { return adversarial(phi, u, p); };
    double e_adv = std::abs(la.value - avalue()) > 1e-10 ? std::numeric_limits<double>::infinity()
                                                           : max_gradient_error(la, phi_row, avalue);
    return {e_disc, e_adv};
}

}  // namespace oracle
