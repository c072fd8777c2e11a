#include "actembed/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <ranges>

#include <json.hpp>

#include "actembed/errors.hpp"

namespace actembed {

using nlohmann::json;

std::size_t default_window(Granularity g) {
    switch (g) {
        case Granularity::sample: return 20;
        case Granularity::hour: return 20;
        case Granularity::day: return 30;
        case Granularity::week: return 50;
    }
    return 30;
}

double default_eta(Granularity g) {
    switch (g) {
        case Granularity::hour: return 0.5;
        case Granularity::day: return 0.25;
        default: return 0.0;
    }
}

std::size_t TrainConfig::resolved_window() const { return window.value_or(default_window(granularity)); }
double TrainConfig::resolved_eta() const { return eta.value_or(default_eta(granularity)); }

std::vector<std::string> resolve_config(TrainConfig& c) {
    std::vector<std::string> warnings;
    if (!c.window) c.window = default_window(c.granularity);
    if (!c.eta) c.eta = default_eta(c.granularity);
    if (c.d == 0) throw ConfigError("d must be positive");
    if (c.negatives == 0) throw ConfigError("number of negatives must be at least 1");
    if (*c.window == 0) throw ConfigError("window must be positive");
    if (c.granularity != Granularity::sample && *c.window > segment_length(c.granularity))
        throw ConfigError("window " + std::to_string(*c.window) + " exceeds segment length " +
                          std::to_string(segment_length(c.granularity)));
    if (!(*c.eta >= 0.0)) throw ConfigError("eta must be non-negative");
    if (!(c.beta >= 0.0)) throw ConfigError("beta must be non-negative");
    if (!(c.lambda_max >= 0.0)) throw ConfigError("lambda-max must be non-negative");
    if (!(c.disc_prob >= 0.0 && c.disc_prob <= 1.0)) throw ConfigError("disc-prob must lie in [0, 1]");
    if (!(c.lr > 0.0) || !(c.min_lr > 0.0) || c.min_lr > c.lr)
        throw ConfigError("learning rates must satisfy 0 < min_lr <= lr");
    if (c.epochs == 0) throw ConfigError("epochs must be at least 1");
    if (c.half_width == 0) throw ConfigError("neighbor half-width must be at least 1");
    if (!(c.tolerance >= 0.0)) throw ConfigError("tolerance must be non-negative");
    if (!(c.noise_exponent > 0.0)) throw ConfigError("noise exponent must be positive");
    if (!(c.ordinal_clip >= 0.0)) throw ConfigError("ordinal clip must be non-negative");
    if (c.granularity == Granularity::week && *c.eta != 0.0) {
        warnings.emplace_back("smoothing is not applicable at week granularity; eta forced to 0");
        c.eta = 0.0;
    }
    if (c.granularity == Granularity::sample && (c.context || (c.smoothing && *c.eta > 0.0))) {
        warnings.emplace_back("sample granularity has no segment rows; context and smoothing losses are skipped");
    }
    return warnings;
}

double lambda_schedule(double progress, double lambda_max) {
    const double q = std::clamp(progress, 0.0, 1.0);
    return lambda_max * (2.0 / (1.0 + std::exp(-10.0 * q)) - 1.0);
}

std::vector<std::size_t> sample_negatives(const NoiseDistribution& dist, std::size_t count,
                                          std::span<const std::size_t> exclusions, Rng& rng) {
    std::size_t excluded_mass_points = 0;
    for (std::size_t i = 0; i < exclusions.size(); ++i) {
        const bool dup = std::find(exclusions.begin(), exclusions.begin() + static_cast<std::ptrdiff_t>(i),
                                   exclusions[i]) != exclusions.begin() + static_cast<std::ptrdiff_t>(i);
        if (!dup && dist.probability(exclusions[i]) > 0.0) ++excluded_mass_points;
    }
    if (dist.support() <= excluded_mass_points)
        throw InputError("noise support exhausted: every outcome is excluded");
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        const auto x = dist.sample(rng);
        if (std::find(exclusions.begin(), exclusions.end(), x) == exclusions.end()) out.push_back(x);
    }
    return out;
}

std::vector<std::size_t> positive_symbol_schedule(std::size_t length, std::size_t window, Rng& rng) {
    if (window == 0 || window > length) throw ConfigError("window must lie in [1, segment length]");
    const std::size_t count = (length + window - 1) / window;
    std::vector<std::size_t> all(length);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> out(count);
    std::sample(all.begin(), all.end(), out.begin(), static_cast<std::ptrdiff_t>(count), rng);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

namespace {

template <class T>
void project_thresholds_impl(std::span<T> theta) {
    for (std::size_t c = 1; c < theta.size(); ++c) {
        const T floor = theta[c - 1] + static_cast<T>(1e-6);
        // float spacing can swallow the 1e-6 gap at large magnitudes
        theta[c] = std::max(theta[c], floor > theta[c - 1] ? floor : std::nextafter(theta[c - 1], T(INFINITY)));
    }
}

}  // namespace

void project_thresholds(std::span<float> theta) { project_thresholds_impl(theta); }
void project_thresholds(std::span<double> theta) { project_thresholds_impl(theta); }

double learning_rate(std::size_t step, std::size_t total, double lr, double min_lr) {
    if (total <= 1) return min_lr;
    const double frac = static_cast<double>(std::min(step, total - 1)) / static_cast<double>(total - 1);
    return lr - (lr - min_lr) * frac;
}

std::size_t steps_per_epoch(const SegmentIndex& index, std::size_t window) {
    if (index.granularity() == Granularity::sample) return index.num_segments();
    const std::size_t L = index.segment_length();
    return index.num_segments() * ((L + window - 1) / window);
}

namespace {

json stats_to_json(const EpochStats& s) {
    json means = json::object();
    if (s.means.content) means["content"] = *s.means.content;
    if (s.means.ordinal) means["ordinal"] = *s.means.ordinal;
    if (s.means.context) means["context"] = *s.means.context;
    if (s.means.smoothing) means["smoothing"] = *s.means.smoothing;
    if (s.means.adversarial) means["adversarial"] = *s.means.adversarial;
    json j;
    j["epoch"] = s.epoch;
    j["means"] = std::move(means);
    j["combined"] = s.combined;
    if (s.discriminator) j["discriminator"] = *s.discriminator;
    j["lambda"] = s.lambda;
    j["lr"] = s.lr;
    j["steps"] = s.steps;
    j["disc_updates"] = s.disc_updates;
    j["seconds"] = s.seconds;
    return j;
}

struct Accumulator {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    std::optional<double> mean(bool active) const {
        if (!active) return std::nullopt;
        return n ? sum / static_cast<double>(n) : 0.0;
    }
};

struct Context {
    const Corpus& corpus;
    const SegmentIndex& index;
    TrainConfig cfg;
    EncodedCorpus encoded;
    Vocabulary vocab;
    NoiseDistribution sym_noise;
    NoiseDistribution seg_noise;
    std::size_t window = 0;
    double eta = 0.0;
    bool sample_level = false;
    bool use_ordinal = false;
    bool use_context = false;
    bool use_smoothing = false;
    bool use_adversarial = false;

    Context(const Corpus& c, const SegmentIndex& idx, const TrainConfig& config)
        : corpus(c), index(idx), cfg(config) {
        vocab = build_vocabulary(corpus);
        encoded = encode_corpus(corpus, vocab);
        sym_noise = symbol_noise_distribution(vocab, cfg.noise_exponent);
        seg_noise = segment_noise_distribution(index);
        window = cfg.resolved_window();
        eta = cfg.resolved_eta();
        sample_level = index.granularity() == Granularity::sample;
        const bool has_neighbors = !sample_level && index.segments_per_sequence() >= 2;
        use_ordinal = cfg.ordinal;
        use_context = cfg.context && has_neighbors && index.num_segments() >= 3;
        use_smoothing = cfg.smoothing && has_neighbors && eta > 0.0;
        use_adversarial = cfg.adversarial;
    }

    void check_params(const ModelParams& p) const {
        if (p.granularity != index.granularity()) throw InputError("model granularity does not match segmentation");
        if (p.d != cfg.d) throw InputError("model dimension does not match config d");
        if (p.vocab_hash() != vocab.hash()) throw InputError("model vocabulary does not match corpus");
        if (p.sequence_subject.size() != index.num_sequences() ||
            p.segments_per_sequence != index.segments_per_sequence())
            throw InputError("model segment layout does not match corpus");
        if (use_ordinal && p.theta.size() + 1 != vocab.num_classes())
            throw InputError("ordinal thresholds do not match vocabulary");
        if (use_ordinal && vocab.num_classes() < 2)
            throw ConfigError("ordinal loss needs at least 2 distinct activity values");
        validate_params(p);
    }
};

std::span<float> slice_row(ModelParams& p, Slice s, std::size_t row) {
    switch (s) {
        case Slice::phi_sym: return p.phi_sym.row(row);
        case Slice::phi_seg: return p.phi_seg.row(row);
        case Slice::w_s: return p.w_s.row(row);
        case Slice::w_nc: return p.w_nc.row(row);
        case Slice::u: return p.u.row(row);
        case Slice::w_o: return std::span<float>(p.w_o);
        case Slice::theta: return std::span<float>(p.theta).subspan(row, 1);
    }
    return {};
}

const char* slice_name(Slice s) {
    switch (s) {
        case Slice::phi_sym: return "phi_sym";
        case Slice::phi_seg: return "phi_seg";
        case Slice::w_s: return "w_s";
        case Slice::w_nc: return "w_nc";
        case Slice::u: return "u";
        case Slice::w_o: return "w_o";
        case Slice::theta: return "theta";
    }
    return "?";
}

struct StepLocation {
    std::size_t epoch = 0;
    std::size_t step = 0;
};

void apply(ModelParams& p, const LossGrad<float>& lg, double scale, const StepLocation& at, const char* component) {
    if (scale == 0.0) return;
    for (const auto& e : lg.grads) {
        auto row = slice_row(p, e.slice, e.row);
        axpy<float>(-scale, e.grad, row);
        for (float x : row)
            if (!std::isfinite(x))
                throw NumericalError(std::string("non-finite value in ") + slice_name(e.slice) + " row " +
                                     std::to_string(e.row) + " after " + component + " update at epoch " +
                                     std::to_string(at.epoch) + " step " + std::to_string(at.step));
    }
}

// Rescales all entries together so their joint L2 norm is at most `limit`.
void clip_gradient(LossGrad<float>& lg, double limit) {
    if (!(limit > 0.0)) return;
    double sq = 0.0;
    for (const auto& e : lg.grads)
        for (float g : e.grad) sq += static_cast<double>(g) * g;
    if (sq <= limit * limit) return;
    const auto f = static_cast<float>(limit / std::sqrt(sq));
    for (auto& e : lg.grads)
        for (float& g : e.grad) g *= f;
}

struct PassOutcome {
    EpochStats stats;
    std::size_t global_step = 0;
};

// One pass over the corpus in Algorithm order. With Update the parameters are trained; without it the
// same sampling schedule is only measured, using `fixed_lambda` for the combined value.
template <bool Update>
EpochStats run_pass(const Context& ctx, std::conditional_t<Update, ModelParams&, const ModelParams&> params,
                    Rng& rng, std::size_t& global_step, std::size_t total_steps, double fixed_lambda,
                    std::size_t epoch) {
    const auto& cfg = ctx.cfg;
    const auto& index = ctx.index;
    const std::size_t N = index.num_sequences();
    const std::size_t K = index.segments_per_sequence();
    const std::size_t L = index.segment_length();
    const std::size_t M = cfg.negatives;
    const std::size_t unk = ctx.vocab.unk_id();

    Accumulator content, ordinal, context, smoothing, adversarial, disc;
    double weighted_adv = 0.0;
    std::size_t steps = 0;
    std::size_t disc_updates = 0;
    double lr = cfg.lr;
    double lambda = fixed_lambda;
    std::bernoulli_distribution disc_draw(cfg.disc_prob);

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> nbrs;
    std::vector<std::span<const float>> nbr_vecs;
    std::vector<std::size_t> positions;

    for (const std::size_t n : order) {
        const auto& symbols = ctx.encoded[n];
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t id = index.global_id(n, k);
            const std::size_t subject = index.subject_of(id);
            if (!ctx.sample_level) {
                positions = positive_symbol_schedule(L, ctx.window, rng);
                if (ctx.use_context || ctx.use_smoothing) index.neighbors(id, nbrs);
            } else {
                positions.assign(1, k);
            }

            for (const std::size_t pos : positions) {
                StepLocation at{epoch, global_step};
                if constexpr (Update) {
                    lr = learning_rate(global_step, total_steps, cfg.lr, cfg.min_lr);
                    lambda = lambda_schedule(static_cast<double>(global_step) / static_cast<double>(total_steps),
                                             cfg.lambda_max);
                }
                RowId anchor_id{Slice::phi_seg, id};
                std::size_t positive;
                if (ctx.sample_level) {
                    // skip-gram: the sample's own symbol row predicts a symbol drawn from its window
                    anchor_id = RowId{Slice::phi_sym, symbols[pos]};
                    const std::size_t radius = std::max<std::size_t>(1, ctx.window / 2);
                    const std::size_t lo = pos >= radius ? pos - radius : 0;
                    const std::size_t hi = std::min(symbols.size() - 1, pos + radius);
                    if (hi == lo) {
                        ++global_step;
                        continue;
                    }
                    std::size_t off = std::uniform_int_distribution<std::size_t>(lo, hi - 1)(rng);
                    if (off >= pos) ++off;
                    positive = symbols[off];
                } else {
                    positive = symbols[k * L + pos];
                }
                auto anchor = [&]() -> std::span<const float> {
                    return anchor_id.slice == Slice::phi_seg ? params.phi_seg.row(anchor_id.row)
                                                             : params.phi_sym.row(anchor_id.row);
                };

                // segment content + ordinal
                {
                    const std::size_t excl[1] = {positive};
                    const auto negs = sample_negatives(ctx.sym_noise, M, excl, rng);
                    auto ls = segment_content_loss<float>(anchor(), anchor_id, positive, negs, params.w_s.view());
                    content.add(ls.value);
                    std::optional<LossGrad<float>> lo;
                    if (ctx.use_ordinal && positive != unk) {
                        lo = ordinal_loss<float>(ctx.vocab.ordinal_rank(positive), params.phi_sym.row(positive),
                                                 positive, params.w_o, params.theta);
                        ordinal.add(lo->value);
                    }
                    if constexpr (Update) {
                        apply(params, ls, lr, at, "content");
                        if (lo) {
                            clip_gradient(*lo, cfg.ordinal_clip);
                            apply(params, *lo, lr * cfg.beta, at, "ordinal");
                            project_thresholds(std::span<float>(params.theta));
                        }
                    }
                }

                // neighbor context + smoothing
                if (!ctx.sample_level && (ctx.use_context || ctx.use_smoothing)) {
                    std::optional<LossGrad<float>> lnc, lr_s;
                    // one sampled neighbor T_i drives both pair losses
                    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, nbrs.size() - 1)(rng);
                    const std::size_t target = nbrs[pick];
                    if (ctx.use_context) {
                        const std::size_t excl[2] = {target, id};
                        const auto negs = sample_negatives(ctx.seg_noise, M, excl, rng);
                        lnc = neighbor_context_loss<float>(anchor(), id, target, nbrs, negs, params.w_nc.view());
                        context.add(lnc->value);
                    }
                    if (ctx.use_smoothing) {
                        nbr_vecs.assign(1, params.phi_seg.row(target));
                        lr_s = smoothing_loss<float>(anchor(), id, nbr_vecs, std::span<const std::size_t>(&target, 1),
                                                     ctx.eta);
                        smoothing.add(lr_s->value);
                    }
                    if constexpr (Update) {
                        if (lnc) apply(params, *lnc, lr, at, "context");
                        if (lr_s) apply(params, *lr_s, lr, at, "smoothing");
                    }
                }

                // adversary against the subject discriminator
                if (ctx.use_adversarial) {
                    const auto probs = discriminator_probs<float>(anchor(), params.u.view());
                    auto la = adversarial_loss<float>(probs, subject, params.u.view(), anchor_id);
                    adversarial.add(la.value);
                    weighted_adv += lambda * la.value;
                    if constexpr (Update) apply(params, la, lr * lambda, at, "adversarial");
                }

                if constexpr (Update) {
                    if (cfg.disc_prob > 0.0 && disc_draw(rng)) {
                        const auto probs = discriminator_probs<float>(anchor(), params.u.view());
                        auto ld = discriminator_loss<float>(probs, subject, anchor());
                        disc.add(ld.value);
                        apply(params, ld, lr, at, "discriminator");
                        ++disc_updates;
                    }
                } else {
                    if (cfg.disc_prob > 0.0 || ctx.use_adversarial) {
                        const auto probs = discriminator_probs<float>(anchor(), params.u.view());
                        disc.add(-std::log(std::max(probs[subject], std::numeric_limits<double>::min())));
                    }
                }
                ++steps;
                ++global_step;
            }
        }
    }

    EpochStats s;
    s.epoch = epoch;
    s.means.content = content.mean(true);
    s.means.ordinal = ordinal.mean(ctx.use_ordinal);
    s.means.context = context.mean(ctx.use_context);
    s.means.smoothing = smoothing.mean(ctx.use_smoothing);
    s.means.adversarial = adversarial.mean(ctx.use_adversarial);
    if (disc.n) s.discriminator = disc.sum / static_cast<double>(disc.n);
    LossComponents without_adv = s.means;
    without_adv.adversarial.reset();
    s.combined = combined_loss_value(without_adv, cfg.beta, 0.0) +
                 (steps && ctx.use_adversarial ? weighted_adv / static_cast<double>(adversarial.n ? adversarial.n : 1)
                                               : 0.0);
    s.lambda = lambda;
    s.lr = lr;
    s.steps = steps;
    s.disc_updates = disc_updates;
    return s;
}

Rng forked_rng(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), 0x5eedU};
    return Rng(seq);
}

json config_json(const TrainConfig& c) {
    json j;
    j["granularity"] = std::string(granularity_name(c.granularity));
    j["d"] = c.d;
    j["negatives"] = c.negatives;
    j["window"] = c.resolved_window();
    j["eta"] = c.resolved_eta();
    j["beta"] = c.beta;
    j["lambda_max"] = c.lambda_max;
    j["disc_prob"] = c.disc_prob;
    j["lr"] = c.lr;
    j["min_lr"] = c.min_lr;
    j["epochs"] = c.epochs;
    j["tolerance"] = c.tolerance;
    j["patience"] = c.patience;
    j["half_width"] = c.half_width;
    j["noise_exponent"] = c.noise_exponent;
    j["ordinal_clip"] = c.ordinal_clip;
    j["seed"] = c.seed;
    j["ordinal"] = c.ordinal;
    j["context"] = c.context;
    j["smoothing"] = c.smoothing;
    j["adversarial"] = c.adversarial;
    return j;
}

void print_progress(const EpochStats& s, const char* tag) {
    std::fprintf(stderr, "[%s %zu] combined=%.5f", tag, s.epoch, s.combined);
    if (s.means.content) std::fprintf(stderr, " Ls=%.4f", *s.means.content);
    if (s.means.ordinal) std::fprintf(stderr, " Lo=%.4f", *s.means.ordinal);
    if (s.means.context) std::fprintf(stderr, " Lnc=%.4f", *s.means.context);
    if (s.means.smoothing) std::fprintf(stderr, " Lr=%.5f", *s.means.smoothing);
    if (s.means.adversarial) std::fprintf(stderr, " La=%.4f", *s.means.adversarial);
    if (s.discriminator) std::fprintf(stderr, " Ld=%.4f", *s.discriminator);
    std::fprintf(stderr, " lambda=%.5f lr=%.6f (%.1fs)\n", s.lambda, s.lr, s.seconds);
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(); }

std::string report_to_json(const TrainReport& r) {
    json j;
    j["seed"] = r.seed;
    j["granularity"] = std::string(granularity_name(r.granularity));
    j["final_epoch"] = r.final_epoch;
    j["converged"] = r.converged;
    j["discriminator_updates"] = r.discriminator_updates;
    j["warnings"] = r.warnings;
    if (r.initial) j["initial"] = stats_to_json(*r.initial);
    if (r.final) j["final"] = stats_to_json(*r.final);
    json epochs = json::array();
    for (const auto& e : r.epochs) epochs.push_back(stats_to_json(e));
    j["epochs"] = std::move(epochs);
    return j.dump(2);
}

EpochStats evaluate_epoch_loss(const Corpus& corpus, const SegmentIndex& index, const ModelParams& params,
                               TrainConfig config, Rng& rng, double lambda) {
    resolve_config(config);
    Context ctx(corpus, index, config);
    ctx.check_params(params);
    Rng local = rng;  // measurement never advances the caller's stream
    std::size_t step = 0;
    const auto t0 = std::chrono::steady_clock::now();
    auto s = run_pass<false>(ctx, params, local, step, 1, lambda, 0);
    s.combined = combined_loss_value(s.means, config.beta, lambda);
    s.lambda = lambda;
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

TrainReport train(const Corpus& corpus, const SegmentIndex& index, ModelParams& params, TrainConfig config) {
    TrainReport report;
    report.warnings = resolve_config(config);
    report.seed = config.seed;
    report.granularity = index.granularity();
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';

    Context ctx(corpus, index, config);
    ctx.check_params(params);
    params.hyperparameters = config_json(config).dump();

    const std::size_t per_epoch = steps_per_epoch(index, ctx.window);
    const std::size_t total = per_epoch * config.epochs;
    Rng rng(config.seed);

    if (config.evaluate_endpoints) {
        Rng eval_rng = forked_rng(config.seed, 0);
        report.initial = evaluate_epoch_loss(corpus, index, params, config, eval_rng, 0.0);
        if (config.progress) print_progress(*report.initial, "eval");
    }

    std::size_t global_step = 0;
    std::size_t streak = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        auto s = run_pass<true>(ctx, params, rng, global_step, total, 0.0, epoch);
        s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.discriminator_updates += s.disc_updates;
        if (config.progress) print_progress(s, "epoch");
        if (!report.epochs.empty()) {
            const double prev = report.epochs.back().combined;
            const double rel = std::abs(prev - s.combined) / std::max(std::abs(prev), 1e-12);
            streak = rel < config.tolerance ? streak + 1 : 0;
        }
        report.epochs.push_back(s);
        report.final_epoch = epoch;
        if (config.patience > 0 && streak >= config.patience) {
            report.converged = true;
            break;
        }
    }

    if (config.evaluate_endpoints) {
        Rng eval_rng = forked_rng(config.seed, report.final_epoch + 1);
        const double lambda =
            lambda_schedule(static_cast<double>(global_step) / static_cast<double>(total), config.lambda_max);
        report.final = evaluate_epoch_loss(corpus, index, params, config, eval_rng, lambda);
        report.final->epoch = report.final_epoch;
        if (config.progress) print_progress(*report.final, "eval");
    }
    return report;
}

}  // namespace actembed
