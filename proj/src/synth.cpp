#include "actembed/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <json.hpp>

#include "actembed/errors.hpp"

namespace actembed {

using nlohmann::json;

namespace {

bool in_band(double hour, double start, double end) {
    if (start == end) return false;
    if (start < end) return hour >= start && hour < end;
    return hour >= start || hour < end;
}

double wrap_hour(double h) {
    h = std::fmod(h, 24.0);
    return h < 0.0 ? h + 24.0 : h;
}

bool is_rate(double r) { return r >= 0.0 && r <= 1.0; }

}  // namespace

void validate_synth_config(const SynthConfig& c) {
    if (c.n_subjects == 0) throw ConfigError("n_subjects must be positive");
    if (!is_rate(c.labeled_fraction)) throw ConfigError("labeled fraction must lie in [0, 1]");
    if (!is_rate(c.noise_rate)) throw ConfigError("noise rate must lie in [0, 1]");
    if (!is_rate(c.missing_rate)) throw ConfigError("missing rate must lie in [0, 1]");
    if (c.length == 0) throw ConfigError("sequence length must be positive");
    if (c.v_max < 1) throw ConfigError("v_max must be at least 1");
    if (!(c.circadian_amplitude >= 0.0)) throw ConfigError("circadian amplitude must be non-negative");
    if (!(c.noise_scale >= 0.0)) throw ConfigError("noise scale must be non-negative");
    if (!(c.gain_min > 0.0) || !(c.gain_max >= c.gain_min)) throw ConfigError("gain range must be positive and ordered");
    if (!(c.phase_hours >= 0.0) || c.phase_hours > 12.0) throw ConfigError("phase range must lie in [0, 12] hours");
    if (c.weekend_days > 7) throw ConfigError("weekend days must lie in [0, 7]");
    if (!(c.weekend_gain_min > 0.0) || !(c.weekend_gain_max >= c.weekend_gain_min))
        throw ConfigError("weekend gain range must be positive and ordered");
    if (!(c.weekend_shift_hours >= 0.0) || c.weekend_shift_hours > 12.0)
        throw ConfigError("weekend shift must lie in [0, 12] hours");
    for (int day : c.effect_days)
        if (day < 0 || day > 6) throw ConfigError("effect days must lie in [0, 6]");
    for (const auto& e : c.effects) {
        if (!std::isfinite(e.amplitude) || e.amplitude < 0.0)
            throw ConfigError("effect amplitude must be finite and non-negative");
        if (e.start_hour < 0.0 || e.start_hour >= 24.0 || e.end_hour < 0.0 || e.end_hour > 24.0)
            throw ConfigError("effect band hours must lie in [0, 24]");
    }
}

double expected_activity(const SynthConfig& c, double hour, const std::array<int, 4>& classes, bool with_effects) {
    const double phase = 2.0 * std::numbers::pi * (hour - c.circadian_peak_hour) / 24.0;
    double v = c.circadian_amplitude * 0.5 * (1.0 + std::cos(phase));
    if (!with_effects) return v;
    for (std::size_t t = 0; t < 4; ++t) {
        const auto& e = c.effects[t];
        if (classes[t] > 0 && in_band(hour, e.start_hour, e.end_hour)) v += classes[t] * e.amplitude;
    }
    return v;
}

Corpus generate_cohort(const SynthConfig& c) {
    validate_synth_config(c);
    Rng rng(c.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto n_labeled = static_cast<std::size_t>(std::lround(c.labeled_fraction * static_cast<double>(c.n_subjects)));
    std::vector<std::size_t> order(c.n_subjects);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> labeled(c.n_subjects, false);
    for (std::size_t i = 0; i < n_labeled; ++i) labeled[order[i]] = true;

    std::array<bool, 7> effect_day{};
    for (int day : c.effect_days) effect_day[static_cast<std::size_t>(day)] = true;

    Corpus corpus;
    corpus.sequences.reserve(c.n_subjects);
    for (std::size_t p = 0; p < c.n_subjects; ++p) {
        // class draws happen for every subject so labeling does not change the series
        std::array<int, 4> classes{};
        for (std::size_t t = 0; t < 4; ++t) {
            std::uniform_int_distribution<int> pick(0, task_arity(kTasks[t]) - 1);
            classes[t] = pick(rng);
        }
        const double gain = c.gain_min + (c.gain_max - c.gain_min) * unit(rng);
        const double shift = c.phase_hours * (2.0 * unit(rng) - 1.0);
        const double weekend_gain = c.weekend_gain_min + (c.weekend_gain_max - c.weekend_gain_min) * unit(rng);
        const double weekend_shift = c.weekend_shift_hours * unit(rng);

        ActivitySequence seq;
        char id[32];
        std::snprintf(id, sizeof id, "s%04zu", p);
        seq.subject_id = id;
        if (labeled[p])
            for (std::size_t t = 0; t < 4; ++t) seq.labels[t] = classes[t];

        seq.samples.resize(c.length);
        for (std::size_t i = 0; i < c.length; ++i) {
            const double tod = static_cast<double>(i % 2880) / 120.0;
            const std::size_t day = (i / 2880) % 7;
            const bool weekend = day >= 7 - c.weekend_days;
            const double local = wrap_hour(tod - shift - (weekend ? weekend_shift : 0.0));
            const double g = weekend ? gain * weekend_gain : gain;
            const double mean =
                std::max(0.0, g * expected_activity(c, local, classes, effect_day[day]));
            double v = mean;
            if (c.noise_scale > 0.0) v += c.noise_scale * std::sqrt(mean) * normal(rng);
            if (c.noise_rate > 0.0 && unit(rng) < c.noise_rate) v = unit(rng) * c.v_max;
            v = std::round(std::clamp(v, 0.0, static_cast<double>(c.v_max)));
            seq.samples[i] = static_cast<std::int32_t>(v);
            if (c.missing_rate > 0.0 && unit(rng) < c.missing_rate) seq.samples[i] = kMissing;
        }
        corpus.sequences.push_back(std::move(seq));
    }
    return corpus;
}

bool EffectManifest::learnable(Task task) const {
    for (const auto& e : tasks)
        if (e.task == task) return e.learnable;
    return false;
}

EffectManifest describe_planted_effects(const SynthConfig& c) {
    validate_synth_config(c);
    EffectManifest m;
    m.seed = c.seed;
    m.gain_min = c.gain_min;
    m.gain_max = c.gain_max;
    m.phase_hours = c.phase_hours;
    m.effect_days = c.effect_days;
    std::sort(m.effect_days.begin(), m.effect_days.end());
    m.effect_days.erase(std::unique(m.effect_days.begin(), m.effect_days.end()), m.effect_days.end());
    for (std::size_t t = 0; t < 4; ++t) {
        PlantedEffect e;
        e.task = kTasks[t];
        e.classes = task_arity(e.task);
        e.start_hour = c.effects[t].start_hour;
        e.end_hour = c.effects[t].end_hour;
        for (int k = 0; k < e.classes; ++k) e.class_delta.push_back(k * c.effects[t].amplitude);
        e.learnable = c.effects[t].amplitude != 0.0 && e.start_hour != e.end_hour && !m.effect_days.empty();
        m.tasks.push_back(std::move(e));
    }
    return m;
}

std::string manifest_to_json(const EffectManifest& m) {
    json j;
    j["seed"] = m.seed;
    j["gain_range"] = {m.gain_min, m.gain_max};
    j["phase_hours"] = m.phase_hours;
    j["effect_days"] = m.effect_days;
    json tasks = json::array();
    for (const auto& e : m.tasks) {
        tasks.push_back({{"task", std::string(task_name(e.task))},
                         {"classes", e.classes},
                         {"band_hours", {e.start_hour, e.end_hour}},
                         {"class_delta", e.class_delta},
                         {"status", e.learnable ? "learnable" : "unlearnable"}});
    }
    j["tasks"] = std::move(tasks);
    return j.dump(2);
}

EffectManifest manifest_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        EffectManifest m;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.gain_min = j.at("gain_range").at(0).get<double>();
        m.gain_max = j.at("gain_range").at(1).get<double>();
        m.phase_hours = j.at("phase_hours").get<double>();
        m.effect_days = j.at("effect_days").get<std::vector<int>>();
        for (const auto& t : j.at("tasks")) {
            PlantedEffect e;
            e.task = parse_task(t.at("task").get<std::string>());
            e.classes = t.at("classes").get<int>();
            e.start_hour = t.at("band_hours").at(0).get<double>();
            e.end_hour = t.at("band_hours").at(1).get<double>();
            e.class_delta = t.at("class_delta").get<std::vector<double>>();
            e.learnable = t.at("status").get<std::string>() == "learnable";
            m.tasks.push_back(std::move(e));
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed effect manifest: ") + e.what());
    }
}

}  // namespace actembed
