//! Fast-sample/fast-hold lifting of sampled-data generalized plants and
//! discrete-time H-infinity synthesis by gamma-iteration.
//!
//! The hybrid plant holds continuous dynamics with partitioned inputs
//! (exogenous w, held control u, delayed-loop reentry d) and outputs
//! (error z, pre-sampler measurement y, delay tap s). Lifting discretizes
//! the dynamics at period h/N, stacks w and z on the fine grid, holds u
//! over the full period and closes the loop delay d(t) = s(t - k h) as a
//! shift register, exact on the fine grid.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::lti::{
    c2d_zoh, dare_solve, hinf_norm_discrete, spectral_radius, ContinuousStateSpace,
    DiscreteStateSpace, DEFAULT_NORM_TOL,
};

/// Hard cap on the lifted state dimension.
pub const STATE_DIM_CAP: usize = 512;

/// Regularization weights fixed by design: rho scales the control-effort
/// rows appended to the error, eps the fresh exogenous channel added to the
/// measurement.
pub const REGULARIZATION_RHO: f64 = 1e-4;
pub const REGULARIZATION_EPS: f64 = 1e-4;

/// Relative slack allowed when certifying a synthesized closed loop against
/// its gamma.
pub const CERTIFY_SLACK: f64 = 1e-4;

/// Hybrid plant: continuous dynamics between a hold and a sampler, with an
/// integer-multiple-of-h loop delay on the tap channel.
#[derive(Debug, Clone)]
pub struct SampledDataPlant {
    pub dynamics: ContinuousStateSpace,
    pub n_w: usize,
    pub n_u: usize,
    pub n_z: usize,
    pub n_y: usize,
    pub n_delay: usize,
    pub period: f64,
    pub delay_steps: usize,
}

impl SampledDataPlant {
    pub fn new(
        dynamics: ContinuousStateSpace,
        n_w: usize,
        n_u: usize,
        n_z: usize,
        n_y: usize,
        n_delay: usize,
        period: f64,
        delay_steps: usize,
    ) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!("period = {period}")));
        }
        if dynamics.n_inputs() != n_w + n_u + n_delay {
            return Err(Error::DimensionMismatch(format!(
                "dynamics has {} inputs, expected w({n_w}) + u({n_u}) + d({n_delay})",
                dynamics.n_inputs()
            )));
        }
        if dynamics.n_outputs() != n_z + n_y + n_delay {
            return Err(Error::DimensionMismatch(format!(
                "dynamics has {} outputs, expected z({n_z}) + y({n_y}) + s({n_delay})",
                dynamics.n_outputs()
            )));
        }
        if n_w == 0 || n_u == 0 || n_z == 0 || n_y == 0 {
            return Err(Error::InvalidArgument(
                "plant needs nonempty w, u, z and y channels".into(),
            ));
        }
        // The delay tap must not feed through from its own reentry.
        if n_delay > 0 {
            let d_sd = dynamics
                .d
                .view((n_z + n_y, n_w + n_u), (n_delay, n_delay))
                .clone_owned();
            if d_sd.norm() != 0.0 {
                return Err(Error::Structural(
                    "delay tap feeds through from the delayed input".into(),
                ));
            }
        }
        Ok(Self {
            dynamics,
            n_w,
            n_u,
            n_z,
            n_y,
            n_delay,
            period,
            delay_steps,
        })
    }
}

/// Lifted, partitioned discrete plant; w -> z is the lifted performance
/// channel, u -> y the controller channel.
#[derive(Debug, Clone)]
pub struct DiscreteGeneralizedPlant {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d21: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    pub period: f64,
    pub n_fsfh: usize,
}

impl DiscreteGeneralizedPlant {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.b1.ncols()
    }
    pub fn n_u(&self) -> usize {
        self.b2.ncols()
    }
    pub fn n_z(&self) -> usize {
        self.c1.nrows()
    }
    pub fn n_y(&self) -> usize {
        self.c2.nrows()
    }

    fn transposed(&self) -> Self {
        Self {
            a: self.a.transpose(),
            b1: self.c1.transpose(),
            b2: self.c2.transpose(),
            c1: self.b1.transpose(),
            c2: self.b2.transpose(),
            d11: self.d11.transpose(),
            d12: self.d21.transpose(),
            d21: self.d12.transpose(),
            d22: self.d22.transpose(),
            period: self.period,
            n_fsfh: self.n_fsfh,
        }
    }

    /// Full-rank repair: appends rho*u rows to the error and an
    /// eps-weighted fresh exogenous channel to the measurement.
    pub fn regularize(&self, rho: f64, eps: f64) -> Self {
        let n = self.n_states();
        let (mw, mu, pz, py) = (self.n_w(), self.n_u(), self.n_z(), self.n_y());

        let mut c1 = DMatrix::zeros(pz + mu, n);
        c1.view_mut((0, 0), (pz, n)).copy_from(&self.c1);
        let mut d11 = DMatrix::zeros(pz + mu, mw + py);
        d11.view_mut((0, 0), (pz, mw)).copy_from(&self.d11);
        let mut d12 = DMatrix::zeros(pz + mu, mu);
        d12.view_mut((0, 0), (pz, mu)).copy_from(&self.d12);
        for i in 0..mu {
            d12[(pz + i, i)] = rho;
        }
        let mut b1 = DMatrix::zeros(n, mw + py);
        b1.view_mut((0, 0), (n, mw)).copy_from(&self.b1);
        let mut d21 = DMatrix::zeros(py, mw + py);
        d21.view_mut((0, 0), (py, mw)).copy_from(&self.d21);
        for i in 0..py {
            d21[(i, mw + i)] = eps;
        }
        Self {
            a: self.a.clone(),
            b1,
            b2: self.b2.clone(),
            c1,
            c2: self.c2.clone(),
            d11,
            d12,
            d21,
            d22: self.d22.clone(),
            period: self.period,
            n_fsfh: self.n_fsfh,
        }
    }
}

/// Synthesized canceler with its certified bound and iteration record.
#[derive(Debug, Clone)]
pub struct Controller {
    pub system: DiscreteStateSpace,
    pub gamma: f64,
    pub n_fsfh: usize,
    pub history: Vec<GammaStep>,
}

#[derive(Debug, Clone, Copy)]
pub struct GammaStep {
    pub gamma: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub stable: bool,
    pub norm: f64,
}

/// FSFH lifting at discretization number N.
pub fn lift_fsfh(plant: &SampledDataPlant, n_fsfh: usize) -> Result<DiscreteGeneralizedPlant> {
    if n_fsfh < 1 {
        return Err(Error::InvalidArgument(format!("N = {n_fsfh}")));
    }
    let big_n = n_fsfh;
    let delta = plant.period / big_n as f64;
    let fine = c2d_zoh(&plant.dynamics, delta)?;

    let nc = fine.n_states();
    let (mw, mu, md) = (plant.n_w, plant.n_u, plant.n_delay);
    let (pz, py) = (plant.n_z, plant.n_y);
    let k = plant.delay_steps;

    // Input/output block views of the fine discretization.
    let bw = fine.b.columns(0, mw).clone_owned();
    let bu = fine.b.columns(mw, mu).clone_owned();
    let bd = fine.b.columns(mw + mu, md).clone_owned();
    let cz = fine.c.rows(0, pz).clone_owned();
    let cy = fine.c.rows(pz, py).clone_owned();
    let cs = fine.c.rows(pz + py, md).clone_owned();
    let dzw = fine.d.view((0, 0), (pz, mw)).clone_owned();
    let dzu = fine.d.view((0, mw), (pz, mu)).clone_owned();
    let dzd = fine.d.view((0, mw + mu), (pz, md)).clone_owned();
    let dyw = fine.d.view((pz, 0), (py, mw)).clone_owned();
    let dyu = fine.d.view((pz, mw), (py, mu)).clone_owned();
    let dyd = fine.d.view((pz, mw + mu), (py, md)).clone_owned();
    let dsw = fine.d.view((pz + py, 0), (md, mw)).clone_owned();
    let dsu = fine.d.view((pz + py, mw), (md, mu)).clone_owned();

    if md == 0 || k == 0 {
        // No delay channel, or delay of zero periods: close d = s directly.
        let (a, bw, bu, cz, cy, dzw, dzu, dyw, dyu) = if md == 0 {
            (fine.a.clone(), bw, bu, cz, cy, dzw, dzu, dyw, dyu)
        } else {
            (
                &fine.a + &bd * &cs,
                &bw + &bd * &dsw,
                &bu + &bd * &dsu,
                &cz + &dzd * &cs,
                &cy + &dyd * &cs,
                &dzw + &dzd * &dsw,
                &dzu + &dzd * &dsu,
                &dyw + &dyd * &dsw,
                &dyu + &dyd * &dsu,
            )
        };
        let lifted = lift_core(&a, &bw, &bu, &cz, &cy, &dzw, &dzu, &dyw, &dyu, big_n)?;
        return assemble(lifted, plant.period, big_n);
    }

    let held_tap = cs.norm() == 0.0 && dsw.norm() == 0.0;
    if held_tap {
        // The delayed signal is constant over each period; store one
        // md-block per delay period and shift it at the lifted rate.
        let lifted = lift_core_two_held(&fine.a, &bw, &bu, &bd, &cz, &cy, &dzw, &dzu, &dzd, &dyw, &dyu, &dyd, big_n)?;
        let n_lift = nc + md * k;
        check_cap(n_lift)?;
        let mut a = DMatrix::zeros(n_lift, n_lift);
        a.view_mut((0, 0), (nc, nc)).copy_from(&lifted.a);
        a.view_mut((0, nc), (nc, md)).copy_from(&lifted.bd);
        for i in 0..k.saturating_sub(1) {
            a.view_mut((nc + i * md, nc + (i + 1) * md), (md, md))
                .copy_from(&DMatrix::identity(md, md));
        }
        let mut b1 = DMatrix::zeros(n_lift, mw * big_n);
        b1.view_mut((0, 0), (nc, mw * big_n)).copy_from(&lifted.b1);
        let mut b2 = DMatrix::zeros(n_lift, mu);
        b2.view_mut((0, 0), (nc, mu)).copy_from(&lifted.b2);
        b2.view_mut((nc + (k - 1) * md, 0), (md, mu)).copy_from(&dsu);
        let mut c1 = DMatrix::zeros(pz * big_n, n_lift);
        c1.view_mut((0, 0), (pz * big_n, nc)).copy_from(&lifted.c1);
        c1.view_mut((0, nc), (pz * big_n, md)).copy_from(&lifted.d1d);
        let mut c2 = DMatrix::zeros(py, n_lift);
        c2.view_mut((0, 0), (py, nc)).copy_from(&lifted.c2);
        c2.view_mut((0, nc), (py, md)).copy_from(&lifted.d2d);
        return Ok(DiscreteGeneralizedPlant {
            a,
            b1,
            b2,
            c1,
            c2,
            d11: lifted.d11,
            d12: lifted.d12,
            d21: lifted.d21,
            d22: lifted.d22,
            period: plant.period,
            n_fsfh: big_n,
        });
    }

    // General case: the tap varies within a period, so the delay line stores
    // k*N fine-grid blocks of the tapped signal.
    let reg = md * k * big_n;
    let nf = nc + reg;
    check_cap(nf)?;
    let mut af = DMatrix::zeros(nf, nf);
    af.view_mut((0, 0), (nc, nc)).copy_from(&fine.a);
    af.view_mut((0, nc), (nc, md)).copy_from(&bd);
    for i in 0..(k * big_n - 1) {
        af.view_mut((nc + i * md, nc + (i + 1) * md), (md, md))
            .copy_from(&DMatrix::identity(md, md));
    }
    let tail = nc + (k * big_n - 1) * md;
    af.view_mut((tail, 0), (md, nc)).copy_from(&cs);
    let mut bfw = DMatrix::zeros(nf, mw);
    bfw.view_mut((0, 0), (nc, mw)).copy_from(&bw);
    bfw.view_mut((tail, 0), (md, mw)).copy_from(&dsw);
    let mut bfu = DMatrix::zeros(nf, mu);
    bfu.view_mut((0, 0), (nc, mu)).copy_from(&bu);
    bfu.view_mut((tail, 0), (md, mu)).copy_from(&dsu);
    let mut czf = DMatrix::zeros(pz, nf);
    czf.view_mut((0, 0), (pz, nc)).copy_from(&cz);
    czf.view_mut((0, nc), (pz, md)).copy_from(&dzd);
    let mut cyf = DMatrix::zeros(py, nf);
    cyf.view_mut((0, 0), (py, nc)).copy_from(&cy);
    cyf.view_mut((0, nc), (py, md)).copy_from(&dyd);

    let lifted = lift_core(&af, &bfw, &bfu, &czf, &cyf, &dzw, &dzu, &dyw, &dyu, big_n)?;
    assemble(lifted, plant.period, big_n)
}

fn check_cap(n: usize) -> Result<()> {
    if n > STATE_DIM_CAP {
        return Err(Error::Capacity(n, STATE_DIM_CAP));
    }
    Ok(())
}

struct LiftedBlocks {
    a: DMatrix<f64>,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    c1: DMatrix<f64>,
    c2: DMatrix<f64>,
    d11: DMatrix<f64>,
    d12: DMatrix<f64>,
    d21: DMatrix<f64>,
    d22: DMatrix<f64>,
    // Feedthrough of the second held input (delay reentry), when present.
    bd: DMatrix<f64>,
    d1d: DMatrix<f64>,
    d2d: DMatrix<f64>,
}

fn assemble(l: LiftedBlocks, period: f64, n_fsfh: usize) -> Result<DiscreteGeneralizedPlant> {
    check_cap(l.a.nrows())?;
    Ok(DiscreteGeneralizedPlant {
        a: l.a,
        b1: l.b1,
        b2: l.b2,
        c1: l.c1,
        c2: l.c2,
        d11: l.d11,
        d12: l.d12,
        d21: l.d21,
        d22: l.d22,
        period,
        n_fsfh,
    })
}

/// Core lifting of a fine-grid discrete system over N steps: the exogenous
/// input varies per fine step, the control is held across the period, the
/// error is fast-sampled, the measurement is read at period starts.
#[allow(clippy::too_many_arguments)]
fn lift_core(
    af: &DMatrix<f64>,
    bw: &DMatrix<f64>,
    bu: &DMatrix<f64>,
    cz: &DMatrix<f64>,
    cy: &DMatrix<f64>,
    dzw: &DMatrix<f64>,
    dzu: &DMatrix<f64>,
    dyw: &DMatrix<f64>,
    dyu: &DMatrix<f64>,
    big_n: usize,
) -> Result<LiftedBlocks> {
    let n = af.nrows();
    let mw = bw.ncols();
    let mu = bu.ncols();
    let pz = cz.nrows();
    let py = cy.nrows();

    // Powers applied where needed.
    let mut cz_pow = Vec::with_capacity(big_n); // cz * af^i
    cz_pow.push(cz.clone());
    for i in 1..big_n {
        let next = &cz_pow[i - 1] * af;
        cz_pow.push(next);
    }
    let mut bw_pow = Vec::with_capacity(big_n); // af^i * bw
    bw_pow.push(bw.clone());
    for i in 1..big_n {
        let next = af * &bw_pow[i - 1];
        bw_pow.push(next);
    }

    let mut a_lift = DMatrix::identity(n, n);
    for _ in 0..big_n {
        a_lift = af * a_lift;
    }

    let mut b1 = DMatrix::zeros(n, mw * big_n);
    for j in 0..big_n {
        b1.view_mut((0, j * mw), (n, mw))
            .copy_from(&bw_pow[big_n - 1 - j]);
    }

    let mut b2 = DMatrix::zeros(n, mu);
    {
        let mut p = bu.clone();
        for _ in 0..big_n {
            b2 += &p;
            p = af * p;
        }
    }

    let mut c1 = DMatrix::zeros(pz * big_n, n);
    for i in 0..big_n {
        c1.view_mut((i * pz, 0), (pz, n)).copy_from(&cz_pow[i]);
    }

    let mut d11 = DMatrix::zeros(pz * big_n, mw * big_n);
    for i in 0..big_n {
        for j in 0..=i {
            if i == j {
                d11.view_mut((i * pz, j * mw), (pz, mw)).copy_from(dzw);
            } else {
                let block = &cz_pow[i - 1 - j] * bw;
                d11.view_mut((i * pz, j * mw), (pz, mw)).copy_from(&block);
            }
        }
    }

    let mut d12 = DMatrix::zeros(pz * big_n, mu);
    {
        let mut running = DMatrix::zeros(pz, n); // sum_{l<i} cz af^l
        for i in 0..big_n {
            let block = &running * bu + dzu;
            d12.view_mut((i * pz, 0), (pz, mu)).copy_from(&block);
            running += &cz_pow[i];
        }
    }

    let c2 = cy.clone();
    let mut d21 = DMatrix::zeros(py, mw * big_n);
    d21.view_mut((0, 0), (py, mw)).copy_from(dyw);
    let d22 = dyu.clone();

    Ok(LiftedBlocks {
        a: a_lift,
        b1,
        b2,
        c1,
        c2,
        d11,
        d12,
        d21,
        d22,
        bd: DMatrix::zeros(n, 0),
        d1d: DMatrix::zeros(pz * big_n, 0),
        d2d: DMatrix::zeros(py, 0),
    })
}

/// Lifting with a second held input (the period-constant delay reentry);
/// its lifted input and feedthrough maps are reported separately.
#[allow(clippy::too_many_arguments)]
fn lift_core_two_held(
    af: &DMatrix<f64>,
    bw: &DMatrix<f64>,
    bu: &DMatrix<f64>,
    bd: &DMatrix<f64>,
    cz: &DMatrix<f64>,
    cy: &DMatrix<f64>,
    dzw: &DMatrix<f64>,
    dzu: &DMatrix<f64>,
    dzd: &DMatrix<f64>,
    dyw: &DMatrix<f64>,
    dyu: &DMatrix<f64>,
    dyd: &DMatrix<f64>,
    big_n: usize,
) -> Result<LiftedBlocks> {
    let mu = bu.ncols();
    let md = bd.ncols();
    let held_b = DMatrix::from_columns(
        &bu.column_iter()
            .chain(bd.column_iter())
            .collect::<Vec<_>>(),
    );
    let held_dz = DMatrix::from_columns(
        &dzu.column_iter()
            .chain(dzd.column_iter())
            .collect::<Vec<_>>(),
    );
    let held_dy = DMatrix::from_columns(
        &dyu.column_iter()
            .chain(dyd.column_iter())
            .collect::<Vec<_>>(),
    );
    let l = lift_core(af, bw, &held_b, cz, cy, dzw, &held_dz, dyw, &held_dy, big_n)?;
    let b2 = l.b2.columns(0, mu).clone_owned();
    let bd_l = l.b2.columns(mu, md).clone_owned();
    let d12 = l.d12.columns(0, mu).clone_owned();
    let d1d = l.d12.columns(mu, md).clone_owned();
    let d22 = l.d22.columns(0, mu).clone_owned();
    let d2d = l.d22.columns(mu, md).clone_owned();
    Ok(LiftedBlocks {
        a: l.a,
        b1: l.b1,
        b2,
        c1: l.c1,
        c2: l.c2,
        d11: l.d11,
        d12,
        d21: l.d21,
        d22,
        bd: bd_l,
        d1d,
        d2d,
    })
}

/// Full-information game Riccati data at a given gamma.
struct FiSolution {
    x: DMatrix<f64>,
    kw: DMatrix<f64>,
    ku: DMatrix<f64>,
    h_wu: DMatrix<f64>,
    su: DMatrix<f64>, // upper factor, lambda = su' su
    lambda_inv: DMatrix<f64>,
    sw_inv: DMatrix<f64>,
    su_inv: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
fn fi_riccati(
    a: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    c1: &DMatrix<f64>,
    d11: &DMatrix<f64>,
    d12: &DMatrix<f64>,
    gamma: f64,
) -> Result<FiSolution> {
    let n = a.nrows();
    let mw = b1.ncols();
    let mu = b2.ncols();

    let mut b = DMatrix::zeros(n, mw + mu);
    b.view_mut((0, 0), (n, mw)).copy_from(b1);
    b.view_mut((0, mw), (n, mu)).copy_from(b2);
    let mut d1 = DMatrix::zeros(c1.nrows(), mw + mu);
    d1.view_mut((0, 0), (c1.nrows(), mw)).copy_from(d11);
    d1.view_mut((0, mw), (c1.nrows(), mu)).copy_from(d12);

    let q = c1.transpose() * c1;
    let s = c1.transpose() * &d1;
    let mut r = d1.transpose() * &d1;
    for i in 0..mw {
        r[(i, i)] -= gamma * gamma;
    }

    let sol = dare_solve(a, &b, &q, &r, &s)?;
    let x = sol.x;

    let h_ww = {
        let mut m = d11.transpose() * d11 + b1.transpose() * &x * b1;
        for i in 0..mw {
            m[(i, i)] -= gamma * gamma;
        }
        m
    };
    let h_wu = d11.transpose() * d12 + b1.transpose() * &x * b2;
    let lambda = d12.transpose() * d12 + b2.transpose() * &x * b2;

    let lam_chol = Cholesky::new(lambda.clone()).ok_or_else(|| {
        Error::NoStabilizingSolution("control saddle block not positive definite".into())
    })?;
    let lambda_inv = lam_chol.inverse();
    let su = lam_chol.l().transpose();

    let delta = -(&h_ww - &h_wu * &lambda_inv * h_wu.transpose());
    let delta = (&delta + delta.transpose()) * 0.5;
    let del_chol = Cholesky::new(delta).ok_or_else(|| {
        Error::NoStabilizingSolution("disturbance saddle block not negative definite".into())
    })?;
    let sw: DMatrix<f64> = del_chol.l().transpose();

    let gains = -sol.gain;
    let kw = gains.rows(0, mw).clone_owned();
    let ku = gains.rows(mw, mu).clone_owned();

    let sw_inv = sw
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular saddle factor".into()))?;
    let su_inv = su
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular control factor".into()))?;

    Ok(FiSolution {
        x,
        kw,
        ku,
        h_wu,
        su,
        lambda_inv,
        sw_inv,
        su_inv,
    })
}

/// One synthesis attempt at a fixed gamma. Returns the central controller.
fn synthesize_at_gamma(p: &DiscreteGeneralizedPlant, gamma: f64) -> Result<DiscreteStateSpace> {
    let fx = fi_riccati(&p.a, &p.b1, &p.b2, &p.c1, &p.d11, &p.d12, gamma)?;

    // Classic dual Riccati and the spectral-radius coupling condition.
    let pt = p.transposed();
    let fy = fi_riccati(&pt.a, &pt.b1, &pt.b2, &pt.c1, &pt.d11, &pt.d12, gamma)?;
    let coupling = spectral_radius(&(&fx.x * &fy.x))?;
    if coupling >= gamma * gamma * (1.0 - 1e-8) {
        return Err(Error::NoStabilizingSolution(format!(
            "coupling condition failed: rho(XY) = {coupling:.6e} vs gamma^2 = {:.6e}",
            gamma * gamma
        )));
    }

    // Square-completed equivalent plant; the remaining problem is the
    // norm < 1 output-estimation problem it induces.
    let a_t = &p.a + &p.b1 * &fx.kw;
    let b1_t = &p.b1 * &fx.sw_inv;
    let c1_t = -(&fx.su * &fx.ku);
    let d11_t = &fx.su * &fx.lambda_inv * fx.h_wu.transpose() * &fx.sw_inv;
    let c2_t = &p.c2 + &p.d21 * &fx.kw;
    let d21_t = &p.d21 * &fx.sw_inv;

    let fyh = fi_riccati(
        &a_t.transpose(),
        &c1_t.transpose(),
        &c2_t.transpose(),
        &b1_t.transpose(),
        &d11_t.transpose(),
        &d21_t.transpose(),
        1.0,
    )?;

    let k1 = &fyh.ku + &fyh.lambda_inv * fyh.h_wu.transpose() * &fyh.kw;
    let k2 = -(&fyh.lambda_inv * fyh.h_wu.transpose());
    let l = -k1.transpose();
    let g = &fx.su_inv * k2.transpose();
    let f = fx.ku.clone();

    let lbg = &l + &p.b2 * &g;
    let a_k = &a_t + &p.b2 * &f - &lbg * &c2_t;
    let b_k = lbg;
    let c_k = &f - &g * &c2_t;
    let d_k = g;

    let k = DiscreteStateSpace::new(a_k, b_k, c_k, d_k, p.period)?;
    if p.d22.norm() == 0.0 {
        Ok(k)
    } else {
        wrap_d22(&k, &p.d22)
    }
}

/// Absorbs plant feedthrough d22 into the controller realization.
fn wrap_d22(k: &DiscreteStateSpace, d22: &DMatrix<f64>) -> Result<DiscreteStateSpace> {
    let mu = k.n_outputs();
    let m = (DMatrix::identity(mu, mu) + &k.d * d22)
        .lu()
        .try_inverse()
        .ok_or(Error::WellPosedness)?;
    let ck = &m * &k.c;
    let dk = &m * &k.d;
    let ak = &k.a - &k.b * d22 * &ck;
    let bk = &k.b - &k.b * d22 * &dk;
    DiscreteStateSpace::new(ak, bk, ck, dk, k.period)
}

/// Lower linear fractional closure of a generalized plant with a controller.
pub fn close_loop(
    p: &DiscreteGeneralizedPlant,
    k: &DiscreteStateSpace,
) -> Result<DiscreteStateSpace> {
    if k.n_inputs() != p.n_y() || k.n_outputs() != p.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "controller is {}x{}, plant loop is {}x{}",
            k.n_outputs(),
            k.n_inputs(),
            p.n_u(),
            p.n_y()
        )));
    }
    let n = p.n_states();
    let nk = k.n_states();
    let mu = p.n_u();

    // u = Ck xk + Dk y, y = C2 x + D21 w + D22 u.
    let m = (DMatrix::identity(mu, mu) - &k.d * &p.d22)
        .lu()
        .try_inverse()
        .ok_or(Error::WellPosedness)?;
    let u_xk = &m * &k.c;
    let u_x = &m * &k.d * &p.c2;
    let u_w = &m * &k.d * &p.d21;

    let y_x = &p.c2 + &p.d22 * &u_x;
    let y_xk = &p.d22 * &u_xk;
    let y_w = &p.d21 + &p.d22 * &u_w;

    let mut a = DMatrix::zeros(n + nk, n + nk);
    a.view_mut((0, 0), (n, n)).copy_from(&(&p.a + &p.b2 * &u_x));
    a.view_mut((0, n), (n, nk)).copy_from(&(&p.b2 * &u_xk));
    a.view_mut((n, 0), (nk, n)).copy_from(&(&k.b * &y_x));
    a.view_mut((n, n), (nk, nk)).copy_from(&(&k.a + &k.b * &y_xk));

    let mut b = DMatrix::zeros(n + nk, p.n_w());
    b.view_mut((0, 0), (n, p.n_w()))
        .copy_from(&(&p.b1 + &p.b2 * &u_w));
    b.view_mut((n, 0), (nk, p.n_w())).copy_from(&(&k.b * &y_w));

    let mut c = DMatrix::zeros(p.n_z(), n + nk);
    c.view_mut((0, 0), (p.n_z(), n))
        .copy_from(&(&p.c1 + &p.d12 * &u_x));
    c.view_mut((0, n), (p.n_z(), nk))
        .copy_from(&(&p.d12 * &u_xk));

    let d = &p.d11 + &p.d12 * &u_w;

    DiscreteStateSpace::new(a, b, c, d, p.period)
}

/// Stability verdict and lifted closed-loop norm for a candidate controller.
pub fn certify(p: &DiscreteGeneralizedPlant, k: &DiscreteStateSpace) -> Result<Certificate> {
    let closed = close_loop(p, k)?;
    let rho = spectral_radius(&closed.a)?;
    let stable = rho < 1.0;
    let norm = if stable {
        hinf_norm_discrete(&closed, DEFAULT_NORM_TOL)?
    } else {
        f64::INFINITY
    };
    Ok(Certificate { stable, norm })
}

fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Gamma-iteration: bisect over the H-infinity level, testing Riccati
/// existence at each candidate, and return the certified central controller
/// at the smallest feasible gamma found.
pub fn hinf_synthesize(
    p: &DiscreteGeneralizedPlant,
    gamma_lo: f64,
    gamma_hi: f64,
    tol: f64,
) -> Result<Controller> {
    if !(gamma_lo > 0.0 && gamma_hi > gamma_lo && tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma bracket [{gamma_lo}, {gamma_hi}], tol {tol}"
        )));
    }
    let d12_min = min_singular_value(&p.d12);
    let d21_min = min_singular_value(&p.d21.transpose());
    if d12_min <= 1e-10 * p.d12.norm().max(1.0) {
        return Err(Error::Structural(
            "D12 is column-rank deficient; regularize the plant first".into(),
        ));
    }
    if d21_min <= 1e-10 * p.d21.norm().max(1.0) {
        return Err(Error::Structural(
            "D21 is row-rank deficient; regularize the plant first".into(),
        ));
    }
    // Stabilizability/detectability via auxiliary LQ Riccati solvability.
    let n = p.n_states();
    if n > 0 {
        let eye_n = DMatrix::identity(n, n);
        let eye_u = DMatrix::identity(p.n_u(), p.n_u());
        let zero_su = DMatrix::zeros(n, p.n_u());
        if dare_solve(&p.a, &p.b2, &eye_n, &eye_u, &zero_su).is_err() {
            return Err(Error::Structural("(A, B2) is not stabilizable".into()));
        }
        let eye_y = DMatrix::identity(p.n_y(), p.n_y());
        let zero_sy = DMatrix::zeros(n, p.n_y());
        if dare_solve(&p.a.transpose(), &p.c2.transpose(), &eye_n, &eye_y, &zero_sy).is_err() {
            return Err(Error::Structural("(C2, A) is not detectable".into()));
        }
    }

    let mut history = Vec::new();
    let test = |gamma: f64, history: &mut Vec<GammaStep>| -> bool {
        let attempt = synthesize_at_gamma(p, gamma);
        if std::env::var("SYNTH_DEBUG").is_ok() {
            if let Err(e) = &attempt {
                eprintln!("gamma {gamma:.6e} infeasible: {e}");
            }
        }
        let ok = attempt.is_ok();
        history.push(GammaStep { gamma, feasible: ok });
        ok
    };

    if !test(gamma_hi, &mut history) {
        return Err(Error::Infeasible(gamma_hi));
    }
    let mut lo = gamma_lo;
    let mut hi = gamma_hi;
    if test(gamma_lo, &mut history) {
        hi = gamma_lo;
    } else {
        let mut iters = 0;
        while hi - lo > tol * hi.max(1e-300) && iters < 60 {
            let mid = (lo * hi).sqrt();
            if test(mid, &mut history) {
                hi = mid;
            } else {
                lo = mid;
            }
            iters += 1;
        }
    }

    // Bracket sanity: feasibility must be monotone across everything tested.
    let max_infeasible = history
        .iter()
        .filter(|s| !s.feasible)
        .map(|s| s.gamma)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_feasible = history
        .iter()
        .filter(|s| s.feasible)
        .map(|s| s.gamma)
        .fold(f64::INFINITY, f64::min);
    if max_infeasible >= min_feasible {
        return Err(Error::NumericalFailure(
            "gamma bracket inverted during bisection".into(),
        ));
    }

    // Build and certify at the feasible end; widen slightly on failure.
    let mut gamma_star = hi;
    let mut last_err: Option<Error> = None;
    for _ in 0..6 {
        match synthesize_at_gamma(p, gamma_star) {
            Ok(k) => {
                let cert = certify(p, &k)?;
                if cert.stable && cert.norm <= gamma_star * (1.0 + CERTIFY_SLACK) {
                    return Ok(Controller {
                        system: k,
                        gamma: gamma_star,
                        n_fsfh: p.n_fsfh,
                        history,
                    });
                }
                last_err = Some(Error::NumericalFailure(format!(
                    "certification failed at gamma {gamma_star:.6e}: stable={}, norm={:.6e}",
                    cert.stable, cert.norm
                )));
            }
            Err(e) => last_err = Some(e),
        }
        gamma_star *= 1.0 + 10.0 * tol;
    }
    Err(last_err.unwrap_or_else(|| Error::NumericalFailure("synthesis failed".into())))
}
