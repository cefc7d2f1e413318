//! Baseband-equivalent model of an amplify-and-forward single-frequency
//! full-duplex relay: I/Q rotation from the carrier phase over the loop
//! delay, loop gain, and the hybrid generalized plant used for canceler
//! design.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lti::ContinuousStateSpace;
use crate::sdh::{
    hinf_synthesize, lift_fsfh, Controller, DiscreteGeneralizedPlant, SampledDataPlant,
    REGULARIZATION_EPS, REGULARIZATION_RHO,
};

/// Default gamma bracket and tolerance for the canceler bisection.
pub const GAMMA_BRACKET: (f64, f64) = (1e-3, 1e3);
pub const GAMMA_TOL: f64 = 1e-3;

/// Physical and design parameters of the relay.
#[derive(Debug, Clone)]
pub struct RelayParams {
    /// Carrier frequency f (normalized Hz).
    pub carrier_freq: f64,
    /// Sampling period h.
    pub sample_period: f64,
    /// Loop delay L, an integer multiple of h.
    pub loop_delay: f64,
    /// Coupling attenuation r of the loop-back channel.
    pub coupling: f64,
    /// Low-noise amplifier gain a1.
    pub lna_gain: f64,
    /// Power amplifier (relay) gain a2.
    pub pa_gain: f64,
    /// Fast-sample/fast-hold discretization number N.
    pub n_fsfh: usize,
    /// Scalar prototype of the signal-class weight W(s); strictly proper,
    /// stable. Applied per I/Q channel.
    pub shaping: ContinuousStateSpace,
    /// Scalar prototype of the anti-alias filter F(s); proper, stable.
    pub antialias: ContinuousStateSpace,
    /// Scalar prototype of the post (reconstruction) filter P(s).
    pub post_filter: ContinuousStateSpace,
}

impl RelayParams {
    /// The squared-pulse operating point: h=1, f=10 kHz, L=1, r=0.15,
    /// a1=1, a2=2000, N=16, W=1/(2s+1), F=I, P=1/(0.001 s + 1).
    pub fn squared_pulse_defaults() -> Self {
        Self {
            carrier_freq: 10_000.0,
            sample_period: 1.0,
            loop_delay: 1.0,
            coupling: 0.15,
            lna_gain: 1.0,
            pa_gain: 2000.0,
            n_fsfh: 16,
            shaping: ContinuousStateSpace::lowpass_cascade(2.0, 1).unwrap(),
            antialias: ContinuousStateSpace::identity(1),
            post_filter: ContinuousStateSpace::lowpass_cascade(0.001, 1).unwrap(),
        }
    }

    /// The root-raised-cosine operating point: same loop, W = 1/(2s+1)^4.
    pub fn rrc_defaults() -> Self {
        Self {
            shaping: ContinuousStateSpace::lowpass_cascade(2.0, 4).unwrap(),
            ..Self::squared_pulse_defaults()
        }
    }

    pub fn delay_steps(&self) -> Result<usize> {
        let ratio = self.loop_delay / self.sample_period;
        let k = ratio.round();
        if (ratio - k).abs() > 1e-9 || k < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "loop delay {} is not a nonnegative integer multiple of h = {}",
                self.loop_delay, self.sample_period
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("h", self.sample_period),
            ("r", self.coupling),
            ("a1", self.lna_gain),
            ("a2", self.pa_gain),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be > 0")));
            }
        }
        if !self.carrier_freq.is_finite() || !self.loop_delay.is_finite() || self.loop_delay < 0.0 {
            return Err(Error::InvalidArgument("carrier frequency / delay".into()));
        }
        if self.n_fsfh < 1 {
            return Err(Error::InvalidArgument("N must be >= 1".into()));
        }
        self.delay_steps()?;
        for (name, sys, strict) in [
            ("W", &self.shaping, true),
            ("F", &self.antialias, false),
            ("P", &self.post_filter, false),
        ] {
            if sys.n_inputs() != 1 || sys.n_outputs() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a scalar prototype"
                )));
            }
            if strict && !sys.is_strictly_proper() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be strictly proper"
                )));
            }
            if !sys.is_stable()? {
                return Err(Error::InvalidArgument(format!("{name} must be stable")));
            }
        }
        Ok(())
    }
}

/// 2x2 I/Q rotation by the carrier phase accumulated over the loop delay.
pub fn rotation_matrix(carrier_freq: f64, delay: f64) -> DMatrix<f64> {
    let angle = 2.0 * std::f64::consts::PI * carrier_freq * delay;
    DMatrix::from_row_slice(
        2,
        2,
        &[angle.cos(), angle.sin(), -angle.sin(), angle.cos()],
    )
}

/// Loop gain alpha = a1 a2 r.
pub fn loop_gain(params: &RelayParams) -> f64 {
    alpha_of(params.lna_gain, params.pa_gain, params.coupling)
}

pub fn alpha_of(a1: f64, a2: f64, r: f64) -> f64 {
    a1 * a2 * r
}

/// Hybrid design plant for the canceler: per I/Q pair, v = W w filtered by
/// the signal-class weight, receiver input y = F (v + alpha A_L d) with d
/// the loop-delayed transmit signal, error z = v - u, transmit tap
/// s = P (held control).
pub fn build_design_plant(params: &RelayParams) -> Result<SampledDataPlant> {
    params.validate()?;
    build_plant_with_alpha(params, loop_gain(params))
}

/// Same construction with the loop gain overridden (used for gain sweeps
/// and the alpha = 0 reference).
pub fn build_plant_with_alpha(params: &RelayParams, alpha: f64) -> Result<SampledDataPlant> {
    params.validate()?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("alpha = {alpha}")));
    }
    let w2 = params.shaping.diagonal_replicate(2);
    let f2 = params.antialias.diagonal_replicate(2);
    let p2 = params.post_filter.diagonal_replicate(2);
    let a_l = rotation_matrix(params.carrier_freq, params.loop_delay);

    let nw = w2.n_states();
    let nf = f2.n_states();
    let np = p2.n_states();
    let n = nw + nf + np;
    let (iw, ifi, ip) = (0, nw, nw + nf);

    // Inputs [w(2) | u(2) | d(2)], outputs [z(2) | y(2) | s(2)].
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((iw, iw), (nw, nw)).copy_from(&w2.a);
    a.view_mut((ifi, ifi), (nf, nf)).copy_from(&f2.a);
    a.view_mut((ip, ip), (np, np)).copy_from(&p2.a);
    // F is driven by v = C_W x_W (W strictly proper).
    a.view_mut((ifi, iw), (nf, nw)).copy_from(&(&f2.b * &w2.c));

    let mut b = DMatrix::zeros(n, 6);
    b.view_mut((iw, 0), (nw, 2)).copy_from(&w2.b);
    b.view_mut((ip, 2), (np, 2)).copy_from(&p2.b);
    b.view_mut((ifi, 4), (nf, 2))
        .copy_from(&(&f2.b * &a_l * alpha));

    let mut c = DMatrix::zeros(6, n);
    // z = v - u_t
    c.view_mut((0, iw), (2, nw)).copy_from(&w2.c);
    c.view_mut((0, ip), (2, np)).copy_from(&(-&p2.c));
    // y = C_F x_F + D_F (v + alpha A_L d)
    c.view_mut((2, iw), (2, nw)).copy_from(&(&f2.d * &w2.c));
    c.view_mut((2, ifi), (2, nf)).copy_from(&f2.c);
    // s = C_P x_P + D_P u
    c.view_mut((4, ip), (2, np)).copy_from(&p2.c);

    let mut d = DMatrix::zeros(6, 6);
    // z <- -D_P u
    d.view_mut((0, 2), (2, 2)).copy_from(&(-&p2.d));
    // y <- D_F alpha A_L d
    d.view_mut((2, 4), (2, 2)).copy_from(&(&f2.d * &a_l * alpha));
    // s <- D_P u
    d.view_mut((4, 2), (2, 2)).copy_from(&p2.d);

    let dynamics = ContinuousStateSpace::new(a, b, c, d)?;
    SampledDataPlant::new(dynamics, 2, 2, 2, 2, 2, params.sample_period, params.delay_steps()?)
}

/// Lifted design plant, before regularization.
pub fn lifted_design_plant(params: &RelayParams) -> Result<DiscreteGeneralizedPlant> {
    let plant = build_design_plant(params)?;
    lift_fsfh(&plant, params.n_fsfh)
}

/// Full design pipeline: build the hybrid plant, lift it, regularize, run
/// the gamma-iteration and certify the result against the raw lifted plant.
pub fn design_canceler(params: &RelayParams) -> Result<Controller> {
    design_canceler_at(params, loop_gain(params))
}

/// Design against an explicit loop gain (used by gain sweeps, where the
/// canceler is re-synthesized at each operating point).
pub fn design_canceler_at(params: &RelayParams, alpha: f64) -> Result<Controller> {
    let plant = build_plant_with_alpha(params, alpha)?;
    let raw = lift_fsfh(&plant, params.n_fsfh)?;
    let reg = raw.regularize(REGULARIZATION_RHO, REGULARIZATION_EPS);
    let ctrl = hinf_synthesize(&reg, GAMMA_BRACKET.0, GAMMA_BRACKET.1, GAMMA_TOL)?;
    let cert = crate::sdh::certify(&raw, &ctrl.system)?;
    if !cert.stable {
        return Err(Error::NumericalFailure(
            "synthesized canceler fails stability on the raw lifted plant".into(),
        ));
    }
    Ok(ctrl)
}

/// Two-row (I, Q) real signal on a uniform grid.
#[derive(Debug, Clone)]
pub struct BasebandSignal {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    /// Grid period in seconds.
    pub step: f64,
}

impl BasebandSignal {
    pub fn new(i: Vec<f64>, q: Vec<f64>, step: f64) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::DimensionMismatch(format!(
                "I has {} samples, Q has {}",
                i.len(),
                q.len()
            )));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("grid period = {step}")));
        }
        if i.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("baseband signal"));
        }
        Ok(Self { i, q, step })
    }

    pub fn zeros(len: usize, step: f64) -> Self {
        Self {
            i: vec![0.0; len],
            q: vec![0.0; len],
            step,
        }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Integrated energy: sum of |sample|^2 times the grid period.
    pub fn energy(&self) -> f64 {
        self.i
            .iter()
            .zip(self.q.iter())
            .map(|(a, b)| a * a + b * b)
            .sum::<f64>()
            * self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_quarter_and_half_turns() {
        let quarter = rotation_matrix(0.25, 1.0);
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((quarter - expect).norm() < 1e-12);
        let half = rotation_matrix(0.5, 1.0);
        assert!((half + DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn rotation_integer_cycles_is_identity() {
        let m = rotation_matrix(10_000.0, 1.0);
        assert!((m - DMatrix::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn rotation_is_orthogonal() {
        for k in 0..100 {
            let f = 0.37 * k as f64 + 0.11;
            let l = 1.0 + 0.01 * k as f64;
            let m = rotation_matrix(f, l);
            assert!((&m * m.transpose() - DMatrix::identity(2, 2)).norm() < 1e-12);
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            assert!((det - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loop_gain_values() {
        let params = RelayParams::squared_pulse_defaults();
        assert!((loop_gain(&params) - 300.0).abs() < 1e-12);
        assert_eq!(alpha_of(1.0, 0.0, 0.15), 0.0);
        assert_eq!(alpha_of(1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn plant_state_dims() {
        let squared = build_design_plant(&RelayParams::squared_pulse_defaults()).unwrap();
        assert_eq!(squared.dynamics.n_states(), 4);
        let rrc = build_design_plant(&RelayParams::rrc_defaults()).unwrap();
        assert_eq!(rrc.dynamics.n_states(), 10);
    }

    #[test]
    fn alpha_zero_kills_coupling_path() {
        let params = RelayParams::squared_pulse_defaults();
        let p0 = build_plant_with_alpha(&params, 0.0).unwrap();
        // d-columns of B and D must vanish.
        assert_eq!(p0.dynamics.b.columns(4, 2).norm(), 0.0);
        assert_eq!(p0.dynamics.d.view((2, 4), (2, 2)).norm(), 0.0);
        // And the construction must agree with the a2 -> 0 limit elsewhere.
        let p = build_design_plant(&params).unwrap();
        assert_eq!(
            (&p.dynamics.b.columns(0, 4) - p0.dynamics.b.columns(0, 4)).norm(),
            0.0
        );
        assert_eq!((&p.dynamics.a - &p0.dynamics.a).norm(), 0.0);
        assert_eq!((&p.dynamics.c - &p0.dynamics.c).norm(), 0.0);
    }

    #[test]
    fn unstable_shaping_rejected() {
        let mut params = RelayParams::squared_pulse_defaults();
        params.shaping = ContinuousStateSpace::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(build_design_plant(&params).is_err());
    }

    #[test]
    fn improper_shaping_rejected() {
        let mut params = RelayParams::squared_pulse_defaults();
        params.shaping = ContinuousStateSpace::identity(1);
        assert!(build_design_plant(&params).is_err());
    }
}
