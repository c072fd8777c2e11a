#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actembed/corpus.hpp"
#include "actembed/losses.hpp"
#include "actembed/model.hpp"

namespace actembed {

struct TrainConfig {
    Granularity granularity = Granularity::day;
    std::size_t d = 100;
    std::size_t negatives = 12;        // M
    std::optional<std::size_t> window;  // default 20/20/30/50 for sample/hour/day/week
    std::optional<double> eta;          // default 0.5 hour, 0.25 day, 0 otherwise
    double beta = 0.5;
    double lambda_max = 0.05;
    double disc_prob = 0.2;
    double lr = 0.025;
    double min_lr = 1e-4;
    std::size_t epochs = 20;
    double tolerance = 1e-3;    // relative change in epoch-mean combined loss
    std::size_t patience = 3;   // consecutive epochs under tolerance before stopping
    std::size_t half_width = 1; // neighbors per side
    double noise_exponent = 1.0;
    double ordinal_clip = 1.0;  // joint gradient-norm cap for one ordinal update; 0 disables
    std::uint64_t seed = 1;

    bool ordinal = true;
    bool context = true;
    bool smoothing = true;
    bool adversarial = true;

    bool evaluate_endpoints = true;  // loss pass before the first and after the last epoch
    bool progress = false;           // per-epoch lines on stderr

    std::size_t resolved_window() const;
    double resolved_eta() const;
};

std::size_t default_window(Granularity g);
double default_eta(Granularity g);

/// Fills defaults and validates ranges. Returns warnings for silently adjusted settings
/// (for example eta forced to 0 at week granularity). Throws ConfigError on invalid values.
std::vector<std::string> resolve_config(TrainConfig& config);

/// Ganin ramp capped at lambda_max: lambda_max * (2 / (1 + exp(-10 q)) - 1).
double lambda_schedule(double progress, double lambda_max);

/// M independent draws, redrawing any value in `exclusions`.
std::vector<std::size_t> sample_negatives(const NoiseDistribution& dist, std::size_t count,
                                          std::span<const std::size_t> exclusions, Rng& rng);

/// ceil(length / window) distinct positions in [0, length), in random order.
std::vector<std::size_t> positive_symbol_schedule(std::size_t length, std::size_t window, Rng& rng);

/// Forward pass theta_c <- max(theta_c, theta_{c-1} + 1e-6).
void project_thresholds(std::span<float> theta);
void project_thresholds(std::span<double> theta);

/// Linearly decayed learning rate for step t of `total` (last step gets min_lr).
double learning_rate(std::size_t step, std::size_t total, double lr, double min_lr);

struct EpochStats {
    std::size_t epoch = 0;
    LossComponents means;
    std::optional<double> discriminator;  // mean L_d
    double combined = 0.0;
    double lambda = 0.0;
    double lr = 0.0;
    std::size_t steps = 0;
    std::size_t disc_updates = 0;
    double seconds = 0.0;
};

struct TrainReport {
    std::uint64_t seed = 0;
    Granularity granularity = Granularity::day;
    std::vector<EpochStats> epochs;
    std::optional<EpochStats> initial;  // evaluation before training
    std::optional<EpochStats> final;    // evaluation after training
    std::size_t discriminator_updates = 0;
    std::size_t final_epoch = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

std::string report_to_json(const TrainReport& report);
/// Resolved configuration as a compact JSON object.
std::string config_to_json(const TrainConfig& config);

/// Inner steps per epoch given the segmentation and window.
std::size_t steps_per_epoch(const SegmentIndex& index, std::size_t window);

/// Runs SGD on `params` in place. The config is resolved first.
TrainReport train(const Corpus& corpus, const SegmentIndex& index, ModelParams& params, TrainConfig config);

/// One pass with the training schedule but no updates. `lambda` weights L_a in the combined value.
EpochStats evaluate_epoch_loss(const Corpus& corpus, const SegmentIndex& index, const ModelParams& params,
                               TrainConfig config, Rng& rng, double lambda);

}  // namespace actembed
