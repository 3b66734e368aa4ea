//! Closed-form utterance renderer.
//!
//! A rendered mel is the product of four factors:
//!
//! ```text
//! mel[t, c] = content[phone(t), c] * timbre[c] * jitter[c] * prosody[t, c]
//! prosody[t, c] = 1 + strength * gate(t) * (energy_amp + band_amp * tilt(c))
//! ```
//!
//! `gate` is an emotion-specific low-frequency oscillation, `tilt` is a linear
//! ramp across the pitch-proxy band and zero elsewhere. Content and timbre are
//! flat inside the band, so the band's spectral centroid moves with prosody
//! alone and every prosody statistic has an exact closed form that tests and
//! the evaluation kit reuse as an oracle.

use crate::corpus::{symbols, EmotionLabel, FeatureConfig, SpeakerProfile};
use crate::det;
use crate::error::{Error, Result};
use crate::mel::MelSpectrogram;

/// Content value shared by all phones inside the pitch-proxy band.
pub const PITCH_BAND_VALUE: f64 = 0.8;

/// Fixed hash key for phone templates: the phone-to-spectrum mapping is the
/// corpus "language" and must not move with the corpus seed.
const TEMPLATE_KEY: u64 = 0x0E11_70DE_57AB_1E00;

/// Emotion-specific prosody parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionProsody {
    /// Modulation frequency in Hz.
    pub freq_hz: f64,
    /// Amplitude of the all-channel energy modulation per unit strength.
    pub energy_amp: f64,
    /// Amplitude of the in-band tilt modulation per unit strength.
    pub band_amp: f64,
    /// Relative amplitude of the second harmonic.
    pub harmonic: f64,
    /// Phase offset in radians.
    pub phase: f64,
}

impl EmotionProsody {
    /// Fixed per-emotion table. Frequencies are well separated so short
    /// utterances still expose the class; amplitudes keep the modulation
    /// strictly positive up to strength 3.
    pub fn of(emotion: EmotionLabel) -> Self {
        let (freq_hz, energy_amp, band_amp, harmonic, phase) = match emotion {
            EmotionLabel::Neutral => (0.0, 0.0, 0.0, 0.0, 0.0),
            EmotionLabel::Happy => (3.0, 0.06, 0.14, 0.20, 0.0),
            EmotionLabel::Surprise => (5.0, 0.08, 0.16, 0.10, 0.7),
            EmotionLabel::Angry => (7.0, 0.08, 0.12, 0.25, 1.4),
            EmotionLabel::Disgust => (1.6, 0.05, 0.12, 0.15, 2.1),
            EmotionLabel::Fear => (9.0, 0.06, 0.15, 0.00, 2.8),
            EmotionLabel::Sad => (1.0, 0.04, 0.10, 0.30, 3.5),
            EmotionLabel::NeutralT => (2.2, 0.04, 0.10, 0.00, 0.9),
        };
        Self { freq_hz, energy_amp, band_amp, harmonic, phase }
    }

    /// The oscillation value at a point in time (unit strength).
    pub fn gate(&self, t_sec: f64) -> f64 {
        if self.freq_hz == 0.0 {
            return 0.0;
        }
        let w = 2.0 * std::f64::consts::PI * self.freq_hz;
        (w * t_sec + self.phase).sin() + self.harmonic * (2.0 * w * t_sec + 1.3).sin()
    }
}

/// Linear ramp over the pitch band mapped to [-1, 1]; zero outside.
pub fn band_tilt(c: usize, band: (usize, usize)) -> f64 {
    let (lo, hi) = band;
    if c < lo || c >= hi || hi - lo < 2 {
        return 0.0;
    }
    2.0 * (c - lo) as f64 / (hi - 1 - lo) as f64 - 1.0
}

/// Per-phone spectral template. Flat inside the pitch band, a smooth
/// phone-specific curve elsewhere, with a phone-level amplitude.
pub fn phone_template(phone: u32, channel: usize, band: (usize, usize), n_channels: usize) -> f64 {
    let amp = det::range_f64(det::mix(TEMPLATE_KEY, &[phone as u64, 11]), 0.85, 1.15);
    if channel >= band.0 && channel < band.1 {
        return amp * PITCH_BAND_VALUE;
    }
    let k = 1 + det::range_u64(det::mix(TEMPLATE_KEY, &[phone as u64, 13]), 4) as f64;
    let phase = det::range_f64(det::mix(TEMPLATE_KEY, &[phone as u64, 17]), 0.0, std::f64::consts::PI);
    let x = std::f64::consts::PI * k * (channel as f64 + 3.0) / n_channels as f64 + phase;
    amp * (0.45 + 0.4 * x.cos().abs())
}

/// Smooth multiplicative speaker envelope, flat inside the pitch band.
pub fn speaker_timbre(seed: u64, speaker_index: u64, config: &FeatureConfig) -> Vec<f32> {
    let c_total = config.mel_channels;
    let band = config.pitch_band();
    let h = det::mix_str(seed, "timbre", &[speaker_index]);
    let a1 = det::range_f64(det::mix(h, &[1]), 0.15, 0.30);
    let a2 = det::range_f64(det::mix(h, &[2]), 0.10, 0.25);
    let f1 = 1.0 + det::range_u64(det::mix(h, &[3]), 2) as f64;
    let f2 = 3.0 + det::range_u64(det::mix(h, &[4]), 2) as f64;
    let p1 = det::range_f64(det::mix(h, &[5]), 0.0, std::f64::consts::TAU);
    let p2 = det::range_f64(det::mix(h, &[6]), 0.0, std::f64::consts::TAU);
    let env = |c: f64| -> f64 {
        let x = c / c_total as f64;
        (a1 * (std::f64::consts::TAU * (f1 * x + p1 / std::f64::consts::TAU)).cos()
            + a2 * (std::f64::consts::TAU * (f2 * x + p2 / std::f64::consts::TAU)).cos())
        .exp()
    };
    let band_value = env(band.0 as f64);
    (0..c_total)
        .map(|c| {
            let v = if c >= band.0 && c < band.1 { band_value } else { env(c as f64) };
            v as f32
        })
        .collect()
}

/// Per-utterance recording-condition envelope, also flat inside the band.
/// Seeded by the utterance seed only, so it cancels when two profiles render
/// the same phones/emotion/strength/seed.
fn utterance_jitter(seed: u64, config: &FeatureConfig) -> Vec<f64> {
    let c_total = config.mel_channels;
    let band = config.pitch_band();
    let h = det::mix_str(seed, "jitter", &[]);
    let amp = det::range_f64(det::mix(h, &[1]), 0.04, 0.10);
    let f = 1.0 + det::range_u64(det::mix(h, &[2]), 3) as f64;
    let p = det::range_f64(det::mix(h, &[3]), 0.0, std::f64::consts::TAU);
    let env = |c: f64| (amp * (std::f64::consts::TAU * f * c / c_total as f64 + p).cos()).exp();
    let band_value = env(band.0 as f64);
    (0..c_total)
        .map(|c| if c >= band.0 && c < band.1 { band_value } else { env(c as f64) })
        .collect()
}

/// Per-phone frame counts in 4..=10, drawn from the utterance seed.
pub fn phone_durations(phones: &[u32], seed: u64) -> Vec<usize> {
    phones
        .iter()
        .enumerate()
        .map(|(i, &p)| 4 + det::range_u64(det::mix_str(seed, "dur", &[i as u64, p as u64]), 7) as usize)
        .collect()
}

/// Exact spectral centroid of the pitch band at time `t_sec` for a rendered
/// utterance, derived from the closed form (the flat band base cancels).
/// Tests and the evaluation kit use this as the generator-side oracle.
pub fn analytic_band_centroid(
    emotion: EmotionLabel,
    strength: f64,
    t_sec: f64,
    band: (usize, usize),
) -> f64 {
    let p = EmotionProsody::of(emotion);
    let g = p.gate(t_sec);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in band.0..band.1 {
        let m = 1.0 + strength * g * (p.energy_amp + p.band_amp * band_tilt(c, band));
        num += c as f64 * m;
        den += m;
    }
    num / den
}

/// Render one utterance; deterministic in all arguments.
pub fn render_utterance(
    phones: &[u32],
    profile: &SpeakerProfile,
    emotion: EmotionLabel,
    latent_strength: f64,
    seed: u64,
    config: &FeatureConfig,
) -> Result<MelSpectrogram> {
    if phones.is_empty() {
        return Err(Error::InvalidInput("phone sequence is empty".into()));
    }
    for &p in phones {
        if p as usize >= symbols::SYMBOL_COUNT {
            return Err(Error::UnknownPhone(p.to_string()));
        }
    }
    if !(latent_strength >= 0.0) || !latent_strength.is_finite() {
        return Err(Error::InvalidInput(format!(
            "latent_strength must be a finite non-negative value, got {latent_strength}"
        )));
    }
    let c_total = config.mel_channels;
    let band = config.pitch_band();
    let prosody = EmotionProsody::of(emotion);
    let durations = phone_durations(phones, seed);
    let n_frames: usize = durations.iter().sum();
    let jitter = utterance_jitter(seed, config);
    let shift = config.frame_shift_s();

    let mut data = Vec::with_capacity(n_frames * c_total);
    let mut t = 0usize;
    for (i, &phone) in phones.iter().enumerate() {
        let template: Vec<f64> =
            (0..c_total).map(|c| phone_template(phone, c, band, c_total)).collect();
        for _ in 0..durations[i] {
            let gate = prosody.gate(t as f64 * shift);
            for c in 0..c_total {
                let modulation =
                    1.0 + latent_strength * gate * (prosody.energy_amp + prosody.band_amp * band_tilt(c, band));
                let v = template[c] * profile.timbre[c] as f64 * jitter[c] * modulation;
                data.push(v.max(1e-4) as f32);
            }
            t += 1;
        }
    }
    Ok(MelSpectrogram::new(data, n_frames, c_total))
}
