#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "muse/envs/observation.hpp"

namespace muse {

/// Frequency heard at the receiver: f0 (c + v_r . u_re) / (c - v_e . u_er),
/// with u_re the unit vector from receiver to emitter and u_er its opposite.
/// Throws ContractError for c <= 0, coincident positions or a non-positive
/// denominator (emitter at or above the speed of sound).
double doppler_frequency(double f0, Vec2 emitter_pos, Vec2 emitter_vel, Vec2 receiver_pos, Vec2 receiver_vel,
                         double c);

/// K / |e - r|^2. Throws ContractError for coincident positions.
double inverse_square_amplitude(double k, Vec2 emitter_pos, Vec2 receiver_pos);

/// a0 exp(-delta |e - r|^2).
double gaussian_decay_amplitude(double a0, double delta, Vec2 emitter_pos, Vec2 receiver_pos);

struct ToneEmitter {
    Vec2 position;
    std::size_t sound_class = 0;
};

struct SoundFieldConfig {
    std::vector<double> class_frequencies{1500.0, 2500.0, 3500.0, 4500.0};
    std::vector<double> class_amplitudes{1.0, 1.0, 1.0, 1.0};
    double decay = 8.0;
    double max_amplitude = 4.0;
    std::size_t samples = 1047;
    double sample_rate = 31400.0;
};

/// Sum of the emitters' sinusoids at one receiver, clamped to +-a_M and
/// quantized to 16-bit integers in [-32767, 32767].
std::vector<std::int16_t> synthesize_waveform(const SoundFieldConfig& cfg, std::span<const ToneEmitter> emitters,
                                              Vec2 receiver);

/// Quantization of one waveform value.
std::int16_t quantize_sample(double value, double max_amplitude);

/// Single-bin DFT magnitude at `frequency`, scaled so that a pure
/// unclipped tone of amplitude a reads approximately a.
double dft_bin_magnitude(std::span<const std::int16_t> wave, double frequency, const SoundFieldConfig& cfg);

/// Per receiver, the bin magnitudes at every class frequency: a vector of
/// length receivers * classes, receiver-major.
std::vector<double> sound_field_features(const SoundFieldConfig& cfg, std::span<const ToneEmitter> emitters,
                                         std::span<const SoundReceiver> receivers);

}  // namespace muse
