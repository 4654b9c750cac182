// SPDX-License-Identifier: Apache-2.0
//! Signal generation and acquisition chains of one board.

mod channel;
mod filter;
mod mts;
mod nyquist;
mod pfb;
mod synth;
mod waveform;

pub use channel::{AnalogChannel, AnalogTone};
pub use filter::{ddc_decimate, fir_complex, integrate, lowpass_taps, DECIMATION, FIR_TAPS};
pub use mts::{apply_mts, TileLatency, MAX_UNSYNCED_OFFSET};
pub use nyquist::{alias_freq, image_freq, nyquist_zone, zone_image};
pub use pfb::{fine_demod, pfb_channelize, PFB_CHANNELS};
pub use synth::{
    interpolate16, synth_fullspeed, synth_interpolated, synth_mux, GenConfig, GenKind, MuxOutput,
    Nco, ReadoutConfig, ReadoutKind, ToneConfig, INTERPOLATION, MAX_MUX_TONES,
};
pub use waveform::{read_csv, read_raw, write_csv, write_raw, Waveform, RAW_MAGIC, RAW_VERSION};

use crate::timebase::Frequency;

/// Default DAC sample rate, 768 × the 7.68 MHz reference.
pub fn default_dac_rate() -> Frequency {
    Frequency::from_hz(5_898_240_000)
}

/// Default ADC sample rate, 320 × the 7.68 MHz reference.
pub fn default_adc_rate() -> Frequency {
    Frequency::from_hz(2_457_600_000)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("waveform has no samples")]
    EmptyWaveform,
    #[error("sample {index} = {value} outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("sample rate mismatch: expected {expected}, got {got}")]
    RateMismatch { expected: Frequency, got: Frequency },
    #[error("tone frequency {freq} not below the sample rate {rate}")]
    ToneOutOfRange { freq: Frequency, rate: Frequency },
    #[error("gain {0} outside [0, 1]")]
    GainOutOfRange(f64),
    #[error("{0} tones requested, at most {MAX_MUX_TONES} supported")]
    TooManyTones(usize),
    #[error("input length {len} is not a multiple of {multiple}")]
    LengthNotMultiple { len: usize, multiple: usize },
    #[error("integration window is empty")]
    EmptyWindow,
    #[error("integration window {window} longer than the stream ({len})")]
    WindowTooLong { window: usize, len: usize },
    #[error("waveform file: {0}")]
    Format(String),
}
