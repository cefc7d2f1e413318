//! OFDM/BPSK baseband modem with cyclic prefix, plus squared and
//! root-raised-cosine chip shaping to and from the fine simulation grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::relay::BasebandSignal;

/// Chip shaping applied between the OFDM chip stream and the waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pulse {
    /// Each chip held constant for `symbol_periods` sampling periods.
    Squared { symbol_periods: usize },
    /// Chips placed every `symbol_periods` sampling periods and convolved
    /// with a unit-energy root-raised-cosine pulse truncated to
    /// `span_symbols` symbol periods on each side.
    RootRaisedCosine {
        symbol_periods: usize,
        rolloff: f64,
        span_symbols: usize,
    },
}

impl Pulse {
    pub fn symbol_periods(&self) -> usize {
        match self {
            Pulse::Squared { symbol_periods } => *symbol_periods,
            Pulse::RootRaisedCosine { symbol_periods, .. } => *symbol_periods,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OfdmConfig {
    /// Subcarrier count (data length per block).
    pub n_sub: usize,
    /// Guard interval (cyclic prefix) length in chips.
    pub cp_len: usize,
    pub pulse: Pulse,
    /// Fine-grid steps per sampling period h.
    pub oversample: usize,
    /// Sampling period h.
    pub sample_period: f64,
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sub == 0 || self.cp_len >= self.n_sub {
            return Err(Error::InvalidArgument(format!(
                "cp_len {} must be < n_sub {}",
                self.cp_len, self.n_sub
            )));
        }
        if self.oversample < 1 {
            return Err(Error::InvalidArgument("oversample must be >= 1".into()));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::InvalidArgument("sample period must be > 0".into()));
        }
        match self.pulse {
            Pulse::Squared { symbol_periods } => {
                if symbol_periods == 0 {
                    return Err(Error::InvalidArgument("symbol period must be >= h".into()));
                }
            }
            Pulse::RootRaisedCosine {
                symbol_periods,
                rolloff,
                span_symbols,
            } => {
                if symbol_periods == 0 || span_symbols == 0 {
                    return Err(Error::InvalidArgument("symbol period/span must be >= 1".into()));
                }
                if !(rolloff > 0.0 && rolloff < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "rolloff {rolloff} must lie in (0,1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Chips per OFDM block including the cyclic prefix.
    pub fn block_len(&self) -> usize {
        self.n_sub + self.cp_len
    }

    /// Fine-grid samples per chip.
    pub fn samples_per_chip(&self) -> usize {
        self.pulse.symbol_periods() * self.oversample
    }

    /// Fine grid step h/M.
    pub fn fine_step(&self) -> f64 {
        self.sample_period / self.oversample as f64
    }

    /// Fine-grid index of the first chip's sampling reference in a
    /// `pulse_shape` output (hold start for squared, pulse peak for RRC).
    pub fn shaping_lead(&self) -> usize {
        match self.pulse {
            Pulse::Squared { .. } => 0,
            Pulse::RootRaisedCosine { span_symbols, .. } => span_symbols * self.samples_per_chip(),
        }
    }
}

/// Unitary DFT (forward when `inverse` is false); radix-2 when possible.
pub fn dft(data: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = data.len();
    if n == 0 {
        return vec![];
    }
    let mut out = if n.is_power_of_two() {
        fft_radix2(data, inverse)
    } else {
        dft_naive(data, inverse)
    };
    let scale = 1.0 / (n as f64).sqrt();
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

fn fft_radix2(data: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = data.len();
    let mut a = data.to_vec();
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wl = Complex64::from_polar(1.0, ang);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = a[start + k];
                let v = a[start + k + len / 2] * w;
                a[start + k] = u + v;
                a[start + k + len / 2] = u - v;
                w *= wl;
            }
        }
        len <<= 1;
    }
    a
}

fn dft_naive(data: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = data.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &x) in data.iter().enumerate() {
                let ang = sign * 2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64;
                acc += x * Complex64::from_polar(1.0, ang);
            }
            acc
        })
        .collect()
}

/// BPSK map 0 -> +1, 1 -> -1 onto the subcarriers, unitary inverse DFT,
/// cyclic prefix prepended; one complex chip per sample at the chip rate.
pub fn ofdm_modulate(bits: &[u8], cfg: &OfdmConfig) -> Result<BasebandSignal> {
    cfg.validate()?;
    if bits.is_empty() || bits.len() % cfg.n_sub != 0 {
        return Err(Error::InvalidArgument(format!(
            "bit count {} is not a positive multiple of {}",
            bits.len(),
            cfg.n_sub
        )));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::InvalidArgument("bits must be 0 or 1".into()));
    }
    let blocks = bits.len() / cfg.n_sub;
    let mut i_row = Vec::with_capacity(blocks * cfg.block_len());
    let mut q_row = Vec::with_capacity(blocks * cfg.block_len());
    for blk in 0..blocks {
        let spectrum: Vec<Complex64> = bits[blk * cfg.n_sub..(blk + 1) * cfg.n_sub]
            .iter()
            .map(|&b| Complex64::new(if b == 0 { 1.0 } else { -1.0 }, 0.0))
            .collect();
        let body = dft(&spectrum, true);
        for &chip in body[cfg.n_sub - cfg.cp_len..].iter().chain(body.iter()) {
            i_row.push(chip.re);
            q_row.push(chip.im);
        }
    }
    let chip_step = cfg.pulse.symbol_periods() as f64 * cfg.sample_period;
    BasebandSignal::new(i_row, q_row, chip_step)
}

/// Unit-energy root-raised-cosine taps on the fine grid, covering
/// [-span, span] symbol periods.
pub fn rrc_taps(cfg: &OfdmConfig) -> Result<Vec<f64>> {
    let (symbol_periods, rolloff, span_symbols) = match cfg.pulse {
        Pulse::RootRaisedCosine {
            symbol_periods,
            rolloff,
            span_symbols,
        } => (symbol_periods, rolloff, span_symbols),
        _ => return Err(Error::InvalidArgument("pulse is not root-raised-cosine".into())),
    };
    let delta = cfg.fine_step();
    let t_sym = symbol_periods as f64 * cfg.sample_period;
    let half = span_symbols * symbol_periods * cfg.oversample;
    let beta = rolloff;
    let mut taps: Vec<f64> = (-(half as i64)..=half as i64)
        .map(|j| rrc_value(j as f64 * delta / t_sym, beta) / t_sym.sqrt())
        .collect();
    // Renormalize to unit energy after truncation.
    let energy: f64 = taps.iter().map(|x| x * x).sum::<f64>() * delta;
    let scale = 1.0 / energy.sqrt();
    for t in taps.iter_mut() {
        *t *= scale;
    }
    Ok(taps)
}

/// Root-raised-cosine impulse response at normalized time t (in symbol
/// periods) for unit symbol period.
fn rrc_value(t: f64, beta: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if t.abs() < 1e-12 {
        return 1.0 + beta * (4.0 / pi - 1.0);
    }
    let quarter = 1.0 / (4.0 * beta);
    if (t.abs() - quarter).abs() < 1e-9 {
        let s = (pi / (4.0 * beta)).sin();
        let c = (pi / (4.0 * beta)).cos();
        return (beta / 2f64.sqrt()) * ((1.0 + 2.0 / pi) * s + (1.0 - 2.0 / pi) * c);
    }
    let num = (pi * t * (1.0 - beta)).sin() + 4.0 * beta * t * (pi * t * (1.0 + beta)).cos();
    let den = pi * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Shape a chip stream onto the fine grid h/M.
pub fn pulse_shape(chips: &BasebandSignal, cfg: &OfdmConfig) -> Result<BasebandSignal> {
    cfg.validate()?;
    let s = cfg.samples_per_chip();
    let delta = cfg.fine_step();
    match cfg.pulse {
        Pulse::Squared { .. } => {
            let mut i_row = Vec::with_capacity(chips.len() * s);
            let mut q_row = Vec::with_capacity(chips.len() * s);
            for k in 0..chips.len() {
                for _ in 0..s {
                    i_row.push(chips.i[k]);
                    q_row.push(chips.q[k]);
                }
            }
            BasebandSignal::new(i_row, q_row, delta)
        }
        Pulse::RootRaisedCosine { .. } => {
            let taps = rrc_taps(cfg)?;
            let half = (taps.len() - 1) / 2;
            let out_len = chips.len().saturating_sub(1) * s + taps.len();
            let mut i_row = vec![0.0; out_len];
            let mut q_row = vec![0.0; out_len];
            for k in 0..chips.len() {
                let base = k * s; // tap[0] lands here; peak at base + half
                for (m, &tap) in taps.iter().enumerate() {
                    i_row[base + m] += chips.i[k] * tap;
                    q_row[base + m] += chips.q[k] * tap;
                }
            }
            let _ = half;
            BasebandSignal::new(i_row, q_row, delta)
        }
    }
}

/// Chip value read back from a fine-grid waveform. Squared pulses are read
/// mid-chip; RRC waveforms are matched-filtered then read at the peaks.
pub fn chip_samples(
    waveform: &BasebandSignal,
    cfg: &OfdmConfig,
    offset: usize,
    max_chips: usize,
) -> Vec<(f64, f64)> {
    let s = cfg.samples_per_chip();
    let mut out = Vec::new();
    match cfg.pulse {
        Pulse::Squared { .. } => {
            let mid = s / 2;
            for k in 0..max_chips {
                let idx = offset + k * s + mid;
                if idx >= waveform.len() {
                    break;
                }
                out.push((waveform.i[idx], waveform.q[idx]));
            }
        }
        Pulse::RootRaisedCosine { .. } => {
            let taps = rrc_taps(cfg).expect("validated config");
            let half = (taps.len() - 1) / 2;
            let delta = cfg.fine_step();
            for k in 0..max_chips {
                let center = offset + k * s;
                if center >= waveform.len() {
                    break;
                }
                // Matched filter with the waveform treated as zero outside
                // its support.
                let m_lo = half.saturating_sub(center);
                let m_hi = taps.len().min(waveform.len() + half - center);
                let mut acc_i = 0.0;
                let mut acc_q = 0.0;
                for m in m_lo..m_hi {
                    let idx = center + m - half;
                    acc_i += waveform.i[idx] * taps[m];
                    acc_q += waveform.q[idx] * taps[m];
                }
                out.push((acc_i * delta, acc_q * delta));
            }
        }
    }
    out
}

/// Demodulate a fine-grid waveform: chip recovery, cyclic-prefix removal,
/// unitary DFT and BPSK hard decisions. The offset names the fine-grid
/// index of the first chip's sampling reference; residual whole-chip
/// misalignment within the guard interval is absorbed by an integer-chip
/// search that scores cyclic-prefix consistency.
pub fn ofdm_demodulate(
    waveform: &BasebandSignal,
    cfg: &OfdmConfig,
    offset: usize,
) -> Result<Vec<u8>> {
    cfg.validate()?;
    if offset >= waveform.len() {
        return Err(Error::InvalidArgument(format!(
            "offset {offset} outside waveform of {} samples",
            waveform.len()
        )));
    }
    let s = cfg.samples_per_chip();
    let blk = cfg.block_len();

    // Residual whole-chip misalignment is found by minimizing the mean
    // prefix-vs-tail mismatch energy; it vanishes at true alignment.
    let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
    for shift in 0..cfg.cp_len {
        let cand = offset + shift * s;
        let chips = chip_samples(waveform, cfg, cand, usize::MAX);
        let blocks = chips.len() / blk;
        if blocks == 0 {
            continue;
        }
        let mut mismatch = 0.0;
        for b in 0..blocks {
            let start = b * blk;
            for j in 0..cfg.cp_len {
                let (ci, cq) = chips[start + j];
                let (ti, tq) = chips[start + cfg.n_sub + j];
                mismatch += (ci - ti) * (ci - ti) + (cq - tq) * (cq - tq);
            }
        }
        mismatch /= blocks as f64;
        let better = match &best {
            None => true,
            Some((s0, _)) => mismatch < *s0,
        };
        if better {
            best = Some((mismatch, chips));
        }
    }
    let (_, chips) = best.ok_or_else(|| {
        Error::InvalidArgument("waveform shorter than one block after offset".into())
    })?;
    let blocks = chips.len() / blk;
    if blocks == 0 {
        return Err(Error::InvalidArgument(
            "waveform shorter than one block after offset".into(),
        ));
    }
    let mut bits = Vec::with_capacity(blocks * cfg.n_sub);
    for b in 0..blocks {
        let body = &chips[b * blk + cfg.cp_len..(b + 1) * blk];
        let complex: Vec<Complex64> = body.iter().map(|&(i, q)| Complex64::new(i, q)).collect();
        let spectrum = dft(&complex, false);
        bits.extend(spectrum.iter().map(|z| u8::from(z.re < 0.0)));
    }
    Ok(bits)
}

/// Demodulate a chip stream directly (no shaping, no timing search).
pub fn ofdm_demodulate_chips(chips: &BasebandSignal, cfg: &OfdmConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    let blk = cfg.block_len();
    let blocks = chips.len() / blk;
    if blocks == 0 {
        return Err(Error::InvalidArgument(
            "chip stream shorter than one block".into(),
        ));
    }
    let mut bits = Vec::with_capacity(blocks * cfg.n_sub);
    for b in 0..blocks {
        let body: Vec<Complex64> = (b * blk + cfg.cp_len..(b + 1) * blk)
            .map(|k| Complex64::new(chips.i[k], chips.q[k]))
            .collect();
        let spectrum = dft(&body, false);
        bits.extend(spectrum.iter().map(|z| u8::from(z.re < 0.0)));
    }
    Ok(bits)
}

/// Ideal BPSK bit error probability Q(sqrt(2 Eb/N0)).
pub fn ideal_ber_bpsk(ebn0_linear: f64) -> Result<f64> {
    if !(ebn0_linear >= 0.0) {
        return Err(Error::InvalidArgument(format!("Eb/N0 = {ebn0_linear}")));
    }
    Ok(0.5 * libm::erfc(ebn0_linear.sqrt()))
}
