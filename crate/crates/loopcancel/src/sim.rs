//! Fine-grid time-domain closed-loop simulation of the relay with a
//! synthesized canceler: AWGN injection calibrated to Eb/N0, BER
//! measurement with integer-offset timing recovery, and parameter sweeps.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lti::c2d_zoh;
use crate::ofdm::{dft, ofdm_demodulate, ofdm_modulate, pulse_shape, OfdmConfig};
use crate::relay::{alpha_of, rotation_matrix, BasebandSignal, RelayParams};
use crate::sdh::Controller;

/// Simulation truncates and flags divergence when |u| exceeds this cap.
pub const DIVERGENCE_CAP: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: RelayParams,
    pub ofdm: OfdmConfig,
    /// OFDM block count per Eb/N0 point.
    pub n_blocks: usize,
    /// Warm-up blocks excluded from the BER count.
    pub discard_blocks: usize,
    /// Eb/N0 grid for the noise sweep, in dB.
    pub ebn0_db: Vec<f64>,
    /// Relay-gain grid for the gain sweep.
    pub a2_sweep: Vec<f64>,
    /// Operating Eb/N0 for the gain sweep, in dB.
    pub gain_ebn0_db: f64,
    /// OFDM block count per gain-sweep point.
    pub n_blocks_gain: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn defaults(params: RelayParams, ofdm: OfdmConfig) -> Self {
        Self {
            params,
            ofdm,
            n_blocks: 150,
            discard_blocks: 1,
            ebn0_db: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            a2_sweep: vec![0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0],
            gain_ebn0_db: 2.0,
            n_blocks_gain: 900,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.ofdm.validate()?;
        if self.n_blocks < self.discard_blocks + 1 || self.n_blocks_gain < self.discard_blocks + 1 {
            return Err(Error::InvalidArgument(
                "n_blocks must exceed discard_blocks".into(),
            ));
        }
        if (self.ofdm.sample_period - self.params.sample_period).abs()
            > 1e-12 * self.params.sample_period
        {
            return Err(Error::PeriodMismatch(
                self.ofdm.sample_period,
                self.params.sample_period,
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub v: BasebandSignal,
    pub u: BasebandSignal,
    pub z: BasebandSignal,
    pub diverged: bool,
    pub peak_u: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BerPoint {
    pub x: f64,
    pub ber: f64,
    pub bits: u64,
    pub errors: u64,
    pub std_err: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct BerCurve {
    pub points: Vec<BerPoint>,
}

/// Deterministic substream derivation (splitmix64 over seed and tag).
pub fn stream_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic data bits for a given seed.
pub fn data_bits(seed: u64, n_bits: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0xB175));
    (0..n_bits).map(|_| rng.gen_range(0..2u8)).collect()
}

/// Per-sample, per-channel noise standard deviation for a target Eb/N0:
/// Eb is the integrated waveform energy per bit, N0 = Eb / 10^(dB/10), and
/// white noise on a grid of the given step carries N0/(2 step) per channel.
pub fn calibrate_noise(
    ebn0_db: f64,
    tx_waveform: &BasebandSignal,
    n_bits: usize,
    fine_step: f64,
) -> Result<f64> {
    if n_bits == 0 {
        return Err(Error::InvalidArgument("n_bits must be positive".into()));
    }
    if !(fine_step > 0.0) {
        return Err(Error::InvalidArgument(format!("fine_step = {fine_step}")));
    }
    let sum_sq: f64 = tx_waveform
        .i
        .iter()
        .zip(tx_waveform.q.iter())
        .map(|(a, b)| a * a + b * b)
        .sum();
    let eb = sum_sq * fine_step / n_bits as f64;
    if eb == 0.0 {
        return Err(Error::InvalidArgument("zero-energy waveform".into()));
    }
    let n0 = eb / 10f64.powf(ebn0_db / 10.0);
    Ok((n0 / (2.0 * fine_step)).sqrt())
}

/// Mean body-chip power (per symbol) of a modulated chip stream; equals the
/// per-bit symbol energy for unit-amplitude BPSK on unitary carriers.
fn mean_body_chip_power(chips: &BasebandSignal, cfg: &OfdmConfig, n_bits: usize) -> f64 {
    let blk = cfg.block_len();
    let blocks = chips.len() / blk;
    let mut acc = 0.0;
    for b in 0..blocks {
        for k in b * blk + cfg.cp_len..(b + 1) * blk {
            acc += chips.i[k] * chips.i[k] + chips.q[k] * chips.q[k];
        }
    }
    acc / n_bits as f64
}

/// Closed-loop time-domain run at the fine grid h/M.
///
/// The receiver input is v + alpha A_L u(t - L) plus antenna noise, the
/// anti-alias filter F advances by exact ZOH stepping, the sampler reads
/// every M-th fine sample, the canceler advances once per period and the
/// hold plus post filter P produce the transmit waveform u.
///
/// Antenna noise is white over the sampling band: one Gaussian draw per
/// period and I/Q channel, held across the M fine substeps, with variance
/// N0/(2h) where Eb fixes N0 from the symbol energy.
pub fn run_relay_sim(
    cfg: &SimConfig,
    k: &Controller,
    ebn0_db: f64,
    a2_override: Option<f64>,
) -> Result<SimTrace> {
    cfg.validate()?;
    let params = &cfg.params;
    let h = params.sample_period;
    let m_over = cfg.ofdm.oversample;
    let delta = h / m_over as f64;
    let ks = &k.system;
    if (ks.period - h).abs() > 1e-12 * h {
        return Err(Error::PeriodMismatch(ks.period, h));
    }
    if ks.n_inputs() != 2 || ks.n_outputs() != 2 {
        return Err(Error::DimensionMismatch(
            "canceler must be a 2x2-channel filter".into(),
        ));
    }

    let n_bits = cfg.n_blocks * cfg.ofdm.n_sub;
    let bits = data_bits(cfg.seed, n_bits);
    let chips = ofdm_modulate(&bits, &cfg.ofdm)?;
    let v = pulse_shape(&chips, &cfg.ofdm)?;
    let total = v.len();

    // Noise level: symbol-energy accounting, one draw per sampling period.
    let eb_sym = mean_body_chip_power(&chips, &cfg.ofdm, n_bits) * h;
    let ebn0_lin = 10f64.powf(ebn0_db / 10.0);
    let noise_std = if ebn0_lin.is_infinite() {
        0.0
    } else {
        (eb_sym / ebn0_lin / (2.0 * h)).sqrt()
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 0x4015E));

    let a2 = a2_override.unwrap_or(params.pa_gain);
    let alpha = alpha_of(params.lna_gain, a2, params.coupling);
    let a_l = rotation_matrix(params.carrier_freq, params.loop_delay);
    let delay_fine = params.delay_steps()? * m_over;

    let f2 = c2d_zoh(&params.antialias.diagonal_replicate(2), delta)?;
    let p2 = c2d_zoh(&params.post_filter.diagonal_replicate(2), delta)?;

    let mut x_f = DVector::zeros(f2.n_states());
    let mut x_p = DVector::zeros(p2.n_states());
    let mut x_k = DVector::zeros(ks.n_states());
    let mut hold = DVector::zeros(2);
    let mut ring: Vec<(f64, f64)> = vec![(0.0, 0.0); delay_fine.max(1)];
    let mut ring_pos = 0usize;

    let mut u_i = Vec::with_capacity(total);
    let mut u_q = Vec::with_capacity(total);
    let mut z_i = Vec::with_capacity(total);
    let mut z_q = Vec::with_capacity(total);
    let mut diverged = false;
    let mut peak_u = 0.0f64;
    let mut noise = (0.0f64, 0.0f64);

    for j in 0..total {
        if j % m_over == 0 {
            noise = if noise_std > 0.0 {
                gaussian_pair(&mut noise_rng, noise_std)
            } else {
                (0.0, 0.0)
            };
        }
        // A zero-period loop delay would close an algebraic loop on the
        // fine grid; it is resolved as a single fine-step delay.
        let (du_i, du_q) = if delay_fine == 0 {
            ring[ring_pos]
        } else {
            ring[(ring_pos + ring.len() - delay_fine) % ring.len()]
        };
        let rx_i = v.i[j] + alpha * (a_l[(0, 0)] * du_i + a_l[(0, 1)] * du_q) + noise.0;
        let rx_q = v.q[j] + alpha * (a_l[(1, 0)] * du_i + a_l[(1, 1)] * du_q) + noise.1;
        let rx = DVector::from_vec(vec![rx_i, rx_q]);

        let y_c = &f2.c * &x_f + &f2.d * &rx;
        x_f = &f2.a * &x_f + &f2.b * &rx;

        if j % m_over == 0 {
            let u_d = &ks.c * &x_k + &ks.d * &y_c;
            x_k = &ks.a * &x_k + &ks.b * &y_c;
            hold = u_d;
        }

        let u_t = &p2.c * &x_p + &p2.d * &hold;
        x_p = &p2.a * &x_p + &p2.b * &hold;

        ring[ring_pos] = (u_t[0], u_t[1]);
        ring_pos = (ring_pos + 1) % ring.len();

        let mag = u_t[0].abs().max(u_t[1].abs());
        peak_u = peak_u.max(mag);
        u_i.push(u_t[0]);
        u_q.push(u_t[1]);
        z_i.push(v.i[j] - u_t[0]);
        z_q.push(v.q[j] - u_t[1]);
        if mag > DIVERGENCE_CAP {
            diverged = true;
            break;
        }
    }

    let len = u_i.len();
    let v_trunc = BasebandSignal::new(v.i[..len].to_vec(), v.q[..len].to_vec(), delta)?;
    Ok(SimTrace {
        v: v_trunc,
        u: BasebandSignal::new(u_i, u_q, delta)?,
        z: BasebandSignal::new(z_i, z_q, delta)?,
        diverged,
        peak_u,
    })
}

fn gaussian_pair(rng: &mut ChaCha8Rng, std: f64) -> (f64, f64) {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt() * std;
    let ang = 2.0 * std::f64::consts::PI * u2;
    (r * ang.cos(), r * ang.sin())
}

/// Integer fine-grid lag of `a` relative to `b` maximizing their
/// cross-correlation, searched over +-`window` samples.
pub fn best_lag(a: &BasebandSignal, b: &BasebandSignal, window: usize) -> i64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0;
    }
    let size = (n + window + 1).next_power_of_two();
    let mut fa = vec![Complex64::new(0.0, 0.0); size];
    let mut fb = vec![Complex64::new(0.0, 0.0); size];
    for j in 0..n {
        fa[j] = Complex64::new(a.i[j], a.q[j]);
        fb[j] = Complex64::new(b.i[j], b.q[j]);
    }
    let sa = dft(&fa, false);
    let sb = dft(&fb, false);
    let prod: Vec<Complex64> = sa.iter().zip(sb.iter()).map(|(x, y)| x * y.conj()).collect();
    let corr = dft(&prod, true);
    let w = window as i64;
    let score_at = |lag: i64| -> f64 {
        let idx = ((lag % size as i64) + size as i64) as usize % size;
        corr[idx].re
    };
    let max_score = (-w..=w).map(score_at).fold(f64::NEG_INFINITY, f64::max);
    // Among near-maximal lags, prefer the smallest magnitude (then sign).
    let tol = 1e-12 * max_score.abs().max(1e-300);
    (-w..=w)
        .filter(|&lag| score_at(lag) >= max_score - tol)
        .min_by_key(|&lag| (lag.abs(), lag))
        .unwrap_or(0)
}

/// BER of the relayed waveform against the transmitted bits. The timing
/// offset is recovered by cross-correlating u against v over a +-2-block
/// window; blocks before `discard_blocks` are excluded.
pub fn measure_ber(trace: &SimTrace, sent_bits: &[u8], cfg: &SimConfig) -> Result<(f64, i64)> {
    if trace.diverged {
        return Err(Error::Diverged(trace.peak_u));
    }
    let window = 2 * cfg.ofdm.block_len() * cfg.ofdm.samples_per_chip();
    let lag = best_lag(&trace.u, &trace.v, window);
    let lead = cfg.ofdm.shaping_lead() as i64;
    let offset = lead + lag;
    if offset < 0 {
        return Err(Error::InvalidArgument(format!(
            "recovered offset {offset} is before the waveform start"
        )));
    }
    let bits = ofdm_demodulate(&trace.u, &cfg.ofdm, offset as usize)?;
    let skip = cfg.discard_blocks * cfg.ofdm.n_sub;
    let usable = bits.len().min(sent_bits.len());
    if usable <= skip {
        return Err(Error::InvalidArgument(
            "not enough demodulated bits after the warm-up discard".into(),
        ));
    }
    let mut errors = 0u64;
    for k in skip..usable {
        if bits[k] != sent_bits[k] {
            errors += 1;
        }
    }
    let n = (usable - skip) as u64;
    Ok((errors as f64 / n as f64, lag))
}

fn ber_point(cfg: &SimConfig, k: &Controller, x: f64, ebn0_db: f64, a2: Option<f64>) -> BerPoint {
    match run_relay_sim(cfg, k, ebn0_db, a2) {
        Ok(trace) => {
            let bits = data_bits(cfg.seed, cfg.n_blocks * cfg.ofdm.n_sub);
            match measure_ber(&trace, &bits, cfg) {
                Ok((ber, _)) => {
                    let n = ((cfg.n_blocks - cfg.discard_blocks) * cfg.ofdm.n_sub) as u64;
                    let errors = (ber * n as f64).round() as u64;
                    BerPoint {
                        x,
                        ber,
                        bits: n,
                        errors,
                        std_err: (ber * (1.0 - ber) / n as f64).sqrt(),
                        diverged: false,
                    }
                }
                Err(_) => diverged_point(x),
            }
        }
        Err(_) => diverged_point(x),
    }
}

fn diverged_point(x: f64) -> BerPoint {
    BerPoint {
        x,
        ber: f64::NAN,
        bits: 0,
        errors: 0,
        std_err: f64::NAN,
        diverged: true,
    }
}

/// BER vs Eb/N0 at the design relay gain.
pub fn sweep_ebn0(cfg: &SimConfig, k: &Controller) -> Result<BerCurve> {
    cfg.validate()?;
    let points: Vec<BerPoint> = cfg
        .ebn0_db
        .par_iter()
        .enumerate()
        .map(|(idx, &ebn0)| {
            let mut point_cfg = cfg.clone();
            point_cfg.seed = stream_seed(cfg.seed, 0xEB00 + idx as u64);
            ber_point(&point_cfg, k, ebn0, ebn0, None)
        })
        .collect();
    Ok(BerCurve { points })
}

/// BER vs relay gain a2 at a fixed Eb/N0; the canceler is held at its
/// nominal design while the simulated loop uses the swept gain. Off-design
/// points typically diverge (the canceler embeds the nominal loop gain);
/// see `sweep_gain_redesign` for the matched-design sweep.
pub fn sweep_gain(cfg: &SimConfig, k: &Controller) -> Result<BerCurve> {
    cfg.validate()?;
    let points: Vec<BerPoint> = cfg
        .a2_sweep
        .par_iter()
        .enumerate()
        .map(|(idx, &a2)| {
            let mut point_cfg = cfg.clone();
            point_cfg.seed = stream_seed(cfg.seed, 0xA200 + idx as u64);
            point_cfg.n_blocks = cfg.n_blocks_gain;
            ber_point(&point_cfg, k, a2, cfg.gain_ebn0_db, Some(a2))
        })
        .collect();
    Ok(BerCurve { points })
}

/// BER vs relay gain a2 with the canceler re-synthesized at every swept
/// operating point.
pub fn sweep_gain_redesign(cfg: &SimConfig) -> Result<BerCurve> {
    cfg.validate()?;
    let points: Vec<Result<BerPoint>> = cfg
        .a2_sweep
        .par_iter()
        .enumerate()
        .map(|(idx, &a2)| {
            let alpha = alpha_of(cfg.params.lna_gain, a2, cfg.params.coupling);
            let k = crate::relay::design_canceler_at(&cfg.params, alpha)?;
            let mut point_cfg = cfg.clone();
            point_cfg.seed = stream_seed(cfg.seed, 0xA200 + idx as u64);
            point_cfg.n_blocks = cfg.n_blocks_gain;
            Ok(ber_point(&point_cfg, &k, a2, cfg.gain_ebn0_db, Some(a2)))
        })
        .collect();
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        out.push(p?);
    }
    Ok(BerCurve { points: out })
}
