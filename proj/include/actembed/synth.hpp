#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "actembed/corpus.hpp"

namespace actembed {

/// Additive day-shape delta for one task: class c adds c * amplitude inside [start_hour, end_hour)
/// of the subject's local day. Bands may wrap past midnight (start > end).
struct TaskEffect {
    double start_hour = 0.0;
    double end_hour = 0.0;
    double amplitude = 0.0;  // non-negative; 0 makes the task unlearnable
};

struct SynthConfig {
    std::size_t n_subjects = 120;
    double labeled_fraction = 0.5;
    std::size_t length = kWeekSamples;
    std::int32_t v_max = 200;
    double circadian_amplitude = 100.0;
    double circadian_peak_hour = 15.0;
    std::array<TaskEffect, 4> effects{{
        {1.0, 5.0, 25.0},     // apnea: restless night
        {9.0, 17.0, 15.0},    // diabetes: daytime activity per class
        {18.0, 22.0, 20.0},   // hypertension: evening activity
        {22.0, 2.0, 15.0},    // insomnia: late-evening activity per class
    }};
    double gain_min = 0.6;
    double gain_max = 1.4;
    double phase_hours = 2.0;  // phase shift drawn from [-phase_hours, phase_hours]
    // Weekend routine: the last `weekend_days` days of each week (sequences start on a weekday)
    // get a per-subject activity multiplier and a later phase drawn from [0, weekend_shift_hours].
    std::size_t weekend_days = 2;
    double weekend_gain_min = 0.4;
    double weekend_gain_max = 2.0;
    double weekend_shift_hours = 3.0;
    std::vector<int> effect_days{0, 1, 2, 3, 4, 5, 6};  // days of the week (0-based) carrying label effects
    double noise_scale = 1.0;  // Poisson-like jitter: sd = noise_scale * sqrt(mean)
    double noise_rate = 0.01;  // probability an epoch is replaced by a uniform spurious count
    double missing_rate = 0.005;
    std::uint64_t seed = 1;
};

/// Throws ConfigError on out-of-range values.
void validate_synth_config(const SynthConfig& config);

/// Noise-free expected count at a local hour of day (before gain).
double expected_activity(const SynthConfig& config, double hour, const std::array<int, 4>& classes,
                         bool with_effects = true);

Corpus generate_cohort(const SynthConfig& config);

struct PlantedEffect {
    Task task = Task::apnea;
    int classes = 2;
    double start_hour = 0.0;
    double end_hour = 0.0;
    std::vector<double> class_delta;  // additive delta per class
    bool learnable = false;

    bool operator==(const PlantedEffect&) const = default;
};

struct EffectManifest {
    std::vector<PlantedEffect> tasks;
    std::uint64_t seed = 0;
    double gain_min = 0.0;
    double gain_max = 0.0;
    double phase_hours = 0.0;
    std::vector<int> effect_days;  // day-of-week indices (0-based) on which effects are expressed

    bool learnable(Task task) const;
    bool operator==(const EffectManifest&) const = default;
};

EffectManifest describe_planted_effects(const SynthConfig& config);
std::string manifest_to_json(const EffectManifest& manifest);
EffectManifest manifest_from_json(const std::string& text);

}  // namespace actembed
