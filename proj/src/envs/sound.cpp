#include "muse/envs/sound.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "muse/errors.hpp"

namespace muse {

double doppler_frequency(double f0, Vec2 emitter_pos, Vec2 emitter_vel, Vec2 receiver_pos, Vec2 receiver_vel,
                         double c) {
    if (!(c > 0.0)) throw ContractError("doppler_frequency: speed of sound must be positive");
    const Vec2 d = emitter_pos - receiver_pos;
    const double dist = d.norm();
    if (dist == 0.0) throw ContractError("doppler_frequency: emitter and receiver coincide");
    const Vec2 toward_emitter = d * (1.0 / dist);
    const double num = c + receiver_vel.dot(toward_emitter);
    const double den = c - emitter_vel.dot(toward_emitter * -1.0);
    if (!(den > 0.0)) throw ContractError("doppler_frequency: emitter speed reaches the speed of sound");
    return f0 * num / den;
}

double inverse_square_amplitude(double k, Vec2 emitter_pos, Vec2 receiver_pos) {
    const double d2 = (emitter_pos - receiver_pos).norm2();
    if (d2 == 0.0) throw ContractError("inverse_square_amplitude: emitter and receiver coincide");
    return k / d2;
}

double gaussian_decay_amplitude(double a0, double delta, Vec2 emitter_pos, Vec2 receiver_pos) {
    return a0 * std::exp(-delta * (emitter_pos - receiver_pos).norm2());
}

std::int16_t quantize_sample(double value, double max_amplitude) {
    const double v = std::clamp(value, -max_amplitude, max_amplitude) / max_amplitude;
    return static_cast<std::int16_t>(std::lround(v * 32767.0));
}

std::vector<std::int16_t> synthesize_waveform(const SoundFieldConfig& cfg, std::span<const ToneEmitter> emitters,
                                              Vec2 receiver) {
    std::vector<double> acc(cfg.samples, 0.0);
    for (const auto& e : emitters) {
        if (e.sound_class >= cfg.class_frequencies.size())
            throw ContractError("synthesize_waveform: sound class out of range");
        const double a = gaussian_decay_amplitude(cfg.class_amplitudes.at(e.sound_class), cfg.decay, e.position, receiver);
        const double w = 2.0 * std::numbers::pi * cfg.class_frequencies[e.sound_class] / cfg.sample_rate;
        for (std::size_t n = 0; n < cfg.samples; ++n) acc[n] += a * std::sin(w * static_cast<double>(n));
    }
    std::vector<std::int16_t> out(cfg.samples);
    for (std::size_t n = 0; n < cfg.samples; ++n) out[n] = quantize_sample(acc[n], cfg.max_amplitude);
    return out;
}

double dft_bin_magnitude(std::span<const std::int16_t> wave, double frequency, const SoundFieldConfig& cfg) {
    const double w = 2.0 * std::numbers::pi * frequency / cfg.sample_rate;
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < wave.size(); ++n) {
        const double v = wave[n];
        re += v * std::cos(w * static_cast<double>(n));
        im -= v * std::sin(w * static_cast<double>(n));
    }
    if (wave.empty()) return 0.0;
    return 2.0 / static_cast<double>(wave.size()) * std::hypot(re, im) * cfg.max_amplitude / 32767.0;
}

std::vector<double> sound_field_features(const SoundFieldConfig& cfg, std::span<const ToneEmitter> emitters,
                                         std::span<const SoundReceiver> receivers) {
    std::vector<double> out;
    out.reserve(receivers.size() * cfg.class_frequencies.size());
    for (const auto& r : receivers) {
        if (emitters.empty()) {
            out.insert(out.end(), cfg.class_frequencies.size(), 0.0);
            continue;
        }
        const auto wave = synthesize_waveform(cfg, emitters, r.position);
        for (double f : cfg.class_frequencies) out.push_back(dft_bin_magnitude(wave, f, cfg));
    }
    return out;
}

}  // namespace muse
