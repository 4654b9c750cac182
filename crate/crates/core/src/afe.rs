// SPDX-License-Identifier: Apache-2.0
//! Flux analog front-end: an 8-channel 16-bit DC DAC behind an SPI register
//! interface, summed with the RF flux path in an ideal bias tee.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;

pub const DAC_CHANNELS: usize = 8;
pub const V_MIN: f64 = -2.5;
pub const V_SPAN: f64 = 5.0;
pub const CODE_SCALE: f64 = 65536.0;
/// One code step, 5 V / 65536.
pub const LSB_VOLTS: f64 = V_SPAN / CODE_SCALE;
pub const DEFAULT_RF_FULLSCALE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DacRegisterFile {
    pub channel_codes: [u16; DAC_CHANNELS],
    pub powered: bool,
}

impl Default for DacRegisterFile {
    fn default() -> Self {
        DacRegisterFile {
            channel_codes: [MIDSCALE; DAC_CHANNELS],
            powered: true,
        }
    }
}

pub const MIDSCALE: u16 = 0x8000;

impl DacRegisterFile {
    pub fn voltage(&self, channel: usize) -> f64 {
        code_to_voltage(self.channel_codes[channel])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpiOp {
    Write,
    Read,
}

/// 24-bit frame: `rw(1) | address(7) | data(16)`, read when the top bit is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpiFrame {
    pub op: SpiOp,
    pub address: u8,
    pub data: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpiFrameError {
    #[error("address {0} does not fit in 7 bits")]
    Address(u8),
    #[error("frame 0x{0:08x} has bits above bit 23")]
    Width(u32),
}

impl SpiFrame {
    pub fn write(address: u8, data: u16) -> Result<Self, SpiFrameError> {
        Self::new(SpiOp::Write, address, data)
    }

    pub fn read(address: u8) -> Result<Self, SpiFrameError> {
        Self::new(SpiOp::Read, address, 0)
    }

    pub fn new(op: SpiOp, address: u8, data: u16) -> Result<Self, SpiFrameError> {
        if address >= 128 {
            return Err(SpiFrameError::Address(address));
        }
        Ok(SpiFrame { op, address, data })
    }

    pub fn encode(&self) -> u32 {
        let rw = matches!(self.op, SpiOp::Read) as u32;
        (rw << 23) | ((self.address as u32) << 16) | self.data as u32
    }

    pub fn decode(word: u32) -> Result<Self, SpiFrameError> {
        if word >> 24 != 0 {
            return Err(SpiFrameError::Width(word));
        }
        let op = if word >> 23 & 1 == 1 { SpiOp::Read } else { SpiOp::Write };
        Ok(SpiFrame {
            op,
            address: ((word >> 16) & 0x7f) as u8,
            data: (word & 0xffff) as u16,
        })
    }
}

impl fmt::Display for SpiFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:06x}", self.encode())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpiWarning {
    ReservedAddress(u8),
    PoweredDown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpiResponse {
    pub regs: DacRegisterFile,
    pub readback: Option<u16>,
    pub warning: Option<SpiWarning>,
}

/// Apply one frame. Reserved addresses and a powered-down part are tolerated
/// like hardware would: the frame is dropped and a warning logged.
pub fn spi_transfer(regs: &DacRegisterFile, frame: SpiFrame) -> SpiResponse {
    let mut next = regs.clone();
    let addr = frame.address as usize;
    let warning = if !regs.powered {
        Some(SpiWarning::PoweredDown)
    } else if addr >= DAC_CHANNELS {
        Some(SpiWarning::ReservedAddress(frame.address))
    } else {
        None
    };
    if let Some(w) = warning {
        log::warn!("spi frame {frame} ignored: {w:?}");
        return SpiResponse {
            regs: next,
            readback: None,
            warning,
        };
    }
    let readback = match frame.op {
        SpiOp::Write => {
            next.channel_codes[addr] = frame.data;
            None
        }
        SpiOp::Read => Some(regs.channel_codes[addr]),
    };
    SpiResponse {
        regs: next,
        readback,
        warning: None,
    }
}

/// Write frames that program `codes` into channels `0..codes.len()`.
pub fn program_frames(codes: &[u16]) -> Vec<SpiFrame> {
    codes
        .iter()
        .enumerate()
        .map(|(ch, &c)| SpiFrame::write(ch as u8, c).expect("channel index below 128"))
        .collect()
}

/// `V = −2.5 + 5·code/65536`.
pub fn code_to_voltage(code: u16) -> f64 {
    V_MIN + V_SPAN * code as f64 / CODE_SCALE
}

/// Nearest code, clamped to the converter range.
pub fn voltage_to_code(v: f64) -> u16 {
    let c = ((v - V_MIN) / V_SPAN * CODE_SCALE).round();
    c.clamp(0.0, u16::MAX as f64) as u16
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluxLineOutput {
    pub dc: f64,
    pub rf: Waveform,
    pub combined: Vec<f64>,
}

/// `combined[i] = v_dc + fs·(rf[i] − mean(rf))`.
pub fn bias_tee_combine(v_dc: f64, rf: &Waveform, rf_fullscale_volts: f64) -> FluxLineOutput {
    let mean = rf.samples().iter().sum::<f64>() / rf.len() as f64;
    let combined = rf
        .samples()
        .iter()
        .map(|&s| v_dc + rf_fullscale_volts * (s - mean))
        .collect();
    FluxLineOutput {
        dc: v_dc,
        rf: rf.clone(),
        combined,
    }
}

/// Excursion above the DC level during a pulse that sits inside a zero-padded
/// record of `record_len` samples. Equivalent to `bias_tee_combine` on the
/// full record minus `v_dc`, without materialising the record.
pub fn flux_excursion(pulse: &[f64], record_len: usize, rf_fullscale_volts: f64) -> Vec<f64> {
    assert!(record_len >= pulse.len() && record_len > 0);
    let mean = pulse.iter().sum::<f64>() / record_len as f64;
    pulse.iter().map(|&s| rf_fullscale_volts * (s - mean)).collect()
}

/// Mean excursion over the pulse window.
pub fn flux_plateau(pulse: &[f64], record_len: usize, rf_fullscale_volts: f64) -> f64 {
    if pulse.is_empty() {
        return 0.0;
    }
    let e = flux_excursion(pulse, record_len, rf_fullscale_volts);
    e.iter().sum::<f64>() / e.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::Frequency;
    use proptest::prelude::*;

    fn rate() -> Frequency {
        Frequency::from_hz(5_898_240_000)
    }

    #[test]
    fn write_then_read() {
        let r = spi_transfer(&DacRegisterFile::default(), SpiFrame::write(3, 0x8000).unwrap());
        assert_eq!(r.warning, None);
        let back = spi_transfer(&r.regs, SpiFrame::read(3).unwrap());
        assert_eq!(back.readback, Some(0x8000));
    }

    #[test]
    fn reserved_address_is_ignored() {
        let regs = DacRegisterFile::default();
        let r = spi_transfer(&regs, SpiFrame::write(100, 0x1234).unwrap());
        assert_eq!(r.regs, regs);
        assert_eq!(r.warning, Some(SpiWarning::ReservedAddress(100)));
        assert_eq!(SpiFrame::write(128, 0), Err(SpiFrameError::Address(128)));
    }

    #[test]
    fn powered_down_drops_frames() {
        let regs = DacRegisterFile {
            powered: false,
            ..Default::default()
        };
        let r = spi_transfer(&regs, SpiFrame::write(1, 7).unwrap());
        assert_eq!(r.regs, regs);
        assert_eq!(r.warning, Some(SpiWarning::PoweredDown));
    }

    #[test]
    fn all_channels_round_trip() {
        let codes = [0u16, 1, 0x7fff, 0x8000, 0x8001, 0xfffe, 0xffff, 12345];
        let mut regs = DacRegisterFile::default();
        for f in program_frames(&codes) {
            regs = spi_transfer(&regs, f).regs;
        }
        let read: Vec<u16> = (0..8)
            .map(|a| spi_transfer(&regs, SpiFrame::read(a).unwrap()).readback.unwrap())
            .collect();
        assert_eq!(read, codes);
    }

    #[test]
    fn frame_encoding() {
        let f = SpiFrame::write(3, 0x8000).unwrap();
        assert_eq!(f.encode(), 0x03_8000);
        assert_eq!(f.to_string(), "0x038000");
        assert_eq!(SpiFrame::read(5).unwrap().encode(), 0x85_0000);
        assert_eq!(SpiFrame::decode(0x1_000000), Err(SpiFrameError::Width(0x1_000000)));
    }

    #[test]
    fn code_map() {
        assert_eq!(code_to_voltage(0), -2.5);
        assert_eq!(code_to_voltage(32768), 0.0);
        assert!((code_to_voltage(65535) - 2.499924).abs() < 1e-6);
        assert_eq!(voltage_to_code(0.0), 32768);
        assert_eq!(voltage_to_code(-9.0), 0);
        assert_eq!(voltage_to_code(9.0), 65535);
        assert!((LSB_VOLTS - 76.2939e-6).abs() < 1e-9);
    }

    #[test]
    fn bias_tee_examples() {
        let zeros = Waveform::constant(0.0, 50, rate()).unwrap();
        assert!(bias_tee_combine(1.2, &zeros, 1.0).combined.iter().all(|&v| v == 1.2));
        let offset = Waveform::new((0..100).map(|i| 0.3 + 0.1 * ((i % 2) as f64 - 0.5)).collect(), rate()).unwrap();
        let out = bias_tee_combine(0.0, &offset, 1.0);
        assert!((out.combined.iter().sum::<f64>() / 100.0).abs() < 1e-12);
    }

    #[test]
    fn square_pulse_plateau() {
        // 20-sample pulse of amplitude 0.5 in a 200-sample record: duty 0.1.
        let mut rec = vec![0.0; 200];
        rec[40..60].iter_mut().for_each(|v| *v = 0.5);
        let out = bias_tee_combine(-0.8, &Waveform::new(rec.clone(), rate()).unwrap(), 1.0);
        let plateau = out.combined[40..60].iter().sum::<f64>() / 20.0;
        let duty = 0.1;
        assert!((plateau - (-0.8 + 0.5 * (1.0 - duty))).abs() < 1e-12);
        // The windowed helper agrees with the full record.
        let e = flux_plateau(&rec[40..60], 200, 1.0);
        assert!((e - (plateau + 0.8)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn code_map_affine_and_monotone(a in 0u16..u16::MAX) {
            let d = code_to_voltage(a + 1) - code_to_voltage(a);
            prop_assert!((d - LSB_VOLTS).abs() < 1e-12);
            prop_assert_eq!(voltage_to_code(code_to_voltage(a)), a);
        }

        #[test]
        fn bias_tee_superposition(
            v1 in -2.0f64..2.0, v2 in -2.0f64..2.0,
            rf in prop::collection::vec(-1.0f64..=1.0, 1..64),
        ) {
            let w = Waveform::new(rf, rate()).unwrap();
            let z = Waveform::constant(0.0, w.len(), rate()).unwrap();
            let a = bias_tee_combine(v1, &w, 1.0).combined;
            let b = bias_tee_combine(v2, &z, 1.0).combined;
            let c = bias_tee_combine(0.0, &z, 1.0).combined;
            let d = bias_tee_combine(v1 + v2, &w, 1.0).combined;
            for i in 0..w.len() {
                prop_assert!((a[i] + b[i] - c[i] - d[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn last_write_wins(writes in prop::collection::vec((0u8..8, any::<u16>()), 0..40)) {
            let mut regs = DacRegisterFile::default();
            let mut model = [MIDSCALE; 8];
            for &(a, d) in &writes {
                regs = spi_transfer(&regs, SpiFrame::write(a, d).unwrap()).regs;
                model[a as usize] = d;
                // Reads never change state.
                let before = regs.clone();
                regs = spi_transfer(&regs, SpiFrame::read(a).unwrap()).regs;
                prop_assert_eq!(&regs, &before);
            }
            prop_assert_eq!(regs.channel_codes, model);
        }

        #[test]
        fn frame_round_trip(addr in 0u8..128, data in any::<u16>(), read in any::<bool>()) {
            let op = if read { SpiOp::Read } else { SpiOp::Write };
            let f = SpiFrame::new(op, addr, data).unwrap();
            prop_assert_eq!(SpiFrame::decode(f.encode()).unwrap(), f);
        }
    }
}
