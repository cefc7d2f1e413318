//! State-space linear systems: construction, interconnection, ZOH
//! discretization, stability tests, H-infinity norms and Riccati solvers.

mod expm;
pub mod qz;

pub use expm::expm;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use qz::{classify_disc, DiscClass};

/// Margin used when deciding whether a pencil eigenvalue sits on the unit
/// circle, and for stabilizing-solution spectral checks.
pub const UNIT_CIRCLE_MARGIN: f64 = 1e-8;

/// Relative residual gate for accepted DARE solutions.
pub const DARE_RESIDUAL_GATE: f64 = 1e-8;

/// Default relative tolerance for the H-infinity norm bisection.
pub const DEFAULT_NORM_TOL: f64 = 1e-6;

type CMat = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackSign {
    Positive,
    Negative,
}

impl FeedbackSign {
    fn as_f64(self) -> f64 {
        match self {
            FeedbackSign::Positive => 1.0,
            FeedbackSign::Negative => -1.0,
        }
    }
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch("A must be square".into()));
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch("rows(B) must equal rows(A)".into()));
    }
    if c.ncols() != n {
        return Err(Error::DimensionMismatch("cols(C) must equal cols(A)".into()));
    }
    if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(
            "D must be outputs x inputs".into(),
        ));
    }
    for (name, m) in [("A", a), ("B", b), ("C", c), ("D", d)] {
        if m.iter().any(|x| !x.is_finite()) {
            let _ = name;
            return Err(Error::NonFinite("state-space matrix"));
        }
    }
    Ok(())
}

/// Continuous-time LTI system dx/dt = Ax + Bu, y = Cx + Du.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Discrete-time LTI system x+ = Ax + Bu, y = Cx + Du at a fixed period.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub period: f64,
}

impl ContinuousStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        check_dims(&a, &b, &c, &d)?;
        Ok(Self { a, b, c, d })
    }

    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::static_gain(DMatrix::identity(dim, dim))
    }

    /// 1/(tau s + 1) as a minimal SISO realization.
    pub fn first_order_lowpass(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("lowpass tau = {tau}")));
        }
        Self::new(
            DMatrix::from_element(1, 1, -1.0 / tau),
            DMatrix::from_element(1, 1, 1.0 / tau),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
    }

    /// 1/(tau s + 1)^order.
    pub fn lowpass_cascade(tau: f64, order: usize) -> Result<Self> {
        if order == 0 {
            return Ok(Self::identity(1));
        }
        let stage = Self::first_order_lowpass(tau)?;
        let mut sys = stage.clone();
        for _ in 1..order {
            sys = sys.series(&stage)?;
        }
        Ok(sys)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }

    /// Largest real part over the eigenvalues of A; -inf for static systems.
    pub fn spectral_abscissa(&self) -> Result<f64> {
        if self.n_states() == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        let eigs = qz::eigenvalues(&self.a)?;
        Ok(eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.spectral_abscissa()? < 0.0)
    }

    /// DC gain C (-A)^{-1} B + D.
    pub fn dc_gain(&self) -> Result<DMatrix<f64>> {
        if self.n_states() == 0 {
            return Ok(self.d.clone());
        }
        let sol = (-&self.a)
            .lu()
            .solve(&self.b)
            .ok_or_else(|| Error::NumericalFailure("singular A in dc_gain".into()))?;
        Ok(&self.c * sol + &self.d)
    }

    /// Transfer function value C (sI - A)^{-1} B + D.
    pub fn transfer_at(&self, s: Complex64) -> Result<CMat> {
        transfer_at_raw(&self.a, &self.b, &self.c, &self.d, s)
    }

    /// Series interconnection: output of `self` feeds `next` (next o self).
    pub fn series(&self, next: &Self) -> Result<Self> {
        let (a, b, c, d) = series_raw(
            (&self.a, &self.b, &self.c, &self.d),
            (&next.a, &next.b, &next.c, &next.d),
        )?;
        Self::new(a, b, c, d)
    }

    pub fn feedback(&self, loop_sys: &Self, sign: FeedbackSign) -> Result<Self> {
        let (a, b, c, d) = feedback_raw(
            (&self.a, &self.b, &self.c, &self.d),
            (&loop_sys.a, &loop_sys.b, &loop_sys.c, &loop_sys.d),
            sign,
        )?;
        Self::new(a, b, c, d)
    }

    /// Block-diagonal replication (same dynamics applied per channel group).
    pub fn diagonal_replicate(&self, copies: usize) -> Self {
        let n = self.n_states();
        let m = self.n_inputs();
        let p = self.n_outputs();
        let mut a = DMatrix::zeros(n * copies, n * copies);
        let mut b = DMatrix::zeros(n * copies, m * copies);
        let mut c = DMatrix::zeros(p * copies, n * copies);
        let mut d = DMatrix::zeros(p * copies, m * copies);
        for k in 0..copies {
            a.view_mut((k * n, k * n), (n, n)).copy_from(&self.a);
            b.view_mut((k * n, k * m), (n, m)).copy_from(&self.b);
            c.view_mut((k * p, k * n), (p, n)).copy_from(&self.c);
            d.view_mut((k * p, k * m), (p, m)).copy_from(&self.d);
        }
        Self { a, b, c, d }
    }
}

impl DiscreteStateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        period: f64,
    ) -> Result<Self> {
        check_dims(&a, &b, &c, &d)?;
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!("period = {period}")));
        }
        Ok(Self { a, b, c, d, period })
    }

    pub fn static_gain(d: DMatrix<f64>, period: f64) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d, period)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(spectral_radius(&self.a)? < 1.0)
    }

    /// Transfer function value C (zI - A)^{-1} B + D.
    pub fn transfer_at(&self, z: Complex64) -> Result<CMat> {
        transfer_at_raw(&self.a, &self.b, &self.c, &self.d, z)
    }

    pub fn series(&self, next: &Self) -> Result<Self> {
        check_periods(self.period, next.period)?;
        let (a, b, c, d) = series_raw(
            (&self.a, &self.b, &self.c, &self.d),
            (&next.a, &next.b, &next.c, &next.d),
        )?;
        Self::new(a, b, c, d, self.period)
    }

    pub fn feedback(&self, loop_sys: &Self, sign: FeedbackSign) -> Result<Self> {
        check_periods(self.period, loop_sys.period)?;
        let (a, b, c, d) = feedback_raw(
            (&self.a, &self.b, &self.c, &self.d),
            (&loop_sys.a, &loop_sys.b, &loop_sys.c, &loop_sys.d),
            sign,
        )?;
        Self::new(a, b, c, d, self.period)
    }

    /// One state update; returns the output before the update.
    pub fn step(&self, x: &mut DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let y = &self.c * &*x + &self.d * u;
        *x = &self.a * &*x + &self.b * u;
        y
    }
}

fn check_periods(p1: f64, p2: f64) -> Result<()> {
    if (p1 - p2).abs() > 1e-12 * p1.abs().max(p2.abs()) {
        return Err(Error::PeriodMismatch(p1, p2));
    }
    Ok(())
}

fn transfer_at_raw(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    z: Complex64,
) -> Result<CMat> {
    let n = a.nrows();
    let dc: CMat = d.map(|x| Complex64::new(x, 0.0));
    if n == 0 {
        return Ok(dc);
    }
    let mut zi_a: CMat = a.map(|x| Complex64::new(-x, 0.0));
    for i in 0..n {
        zi_a[(i, i)] += z;
    }
    let bc: CMat = b.map(|x| Complex64::new(x, 0.0));
    let sol = zi_a
        .lu()
        .solve(&bc)
        .ok_or_else(|| Error::NumericalFailure("singular zI - A".into()))?;
    let cc: CMat = c.map(|x| Complex64::new(x, 0.0));
    Ok(&cc * sol + dc)
}

type RawSys<'a> = (&'a DMatrix<f64>, &'a DMatrix<f64>, &'a DMatrix<f64>, &'a DMatrix<f64>);
type RawOut = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

fn series_raw(g1: RawSys, g2: RawSys) -> Result<RawOut> {
    let (a1, b1, c1, d1) = g1;
    let (a2, b2, c2, d2) = g2;
    if c1.nrows() != b2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "series: {} outputs feed {} inputs",
            c1.nrows(),
            b2.ncols()
        )));
    }
    let n1 = a1.nrows();
    let n2 = a2.nrows();
    let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(a1);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(b2 * c1));
    a.view_mut((n1, n1), (n2, n2)).copy_from(a2);
    let mut b = DMatrix::zeros(n1 + n2, b1.ncols());
    b.view_mut((0, 0), (n1, b1.ncols())).copy_from(b1);
    b.view_mut((n1, 0), (n2, b1.ncols())).copy_from(&(b2 * d1));
    let mut c = DMatrix::zeros(c2.nrows(), n1 + n2);
    c.view_mut((0, 0), (c2.nrows(), n1)).copy_from(&(d2 * c1));
    c.view_mut((0, n1), (c2.nrows(), n2)).copy_from(c2);
    let d = d2 * d1;
    Ok((a, b, c, d))
}

fn feedback_raw(g: RawSys, h: RawSys, sign: FeedbackSign) -> Result<RawOut> {
    let (ag, bg, cg, dg) = g;
    let (ah, bh, ch, dh) = h;
    if bh.ncols() != cg.nrows() || ch.nrows() != bg.ncols() {
        return Err(Error::DimensionMismatch(
            "feedback: loop system must map outputs to inputs".into(),
        ));
    }
    let s = sign.as_f64();
    let ng = ag.nrows();
    let nh = ah.nrows();
    let p = cg.nrows();
    let eye = DMatrix::identity(p, p);
    let m = (eye - (dg * dh) * s)
        .lu()
        .try_inverse()
        .ok_or(Error::WellPosedness)?;

    let mcg = &m * cg;
    let mdgch = &m * dg * ch;
    let mdg = &m * dg;

    let mut a = DMatrix::zeros(ng + nh, ng + nh);
    a.view_mut((0, 0), (ng, ng))
        .copy_from(&(ag + (bg * dh) * &mcg * s));
    a.view_mut((0, ng), (ng, nh))
        .copy_from(&((bg * ch) * s + (bg * dh) * &mdgch));
    a.view_mut((ng, 0), (nh, ng)).copy_from(&(bh * &mcg));
    a.view_mut((ng, ng), (nh, nh))
        .copy_from(&(ah + (bh * &mdgch) * s));

    let mut b = DMatrix::zeros(ng + nh, bg.ncols());
    b.view_mut((0, 0), (ng, bg.ncols()))
        .copy_from(&(bg + (bg * dh) * &mdg * s));
    b.view_mut((ng, 0), (nh, bg.ncols())).copy_from(&(bh * &mdg));

    let mut c = DMatrix::zeros(p, ng + nh);
    c.view_mut((0, 0), (p, ng)).copy_from(&mcg);
    c.view_mut((0, ng), (p, nh)).copy_from(&(&mdgch * s));

    Ok((a, b, c, mdg))
}

/// Exact step-invariant (ZOH) discretization via the block matrix exponential.
pub fn c2d_zoh(sys: &ContinuousStateSpace, period: f64) -> Result<DiscreteStateSpace> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!("period = {period}")));
    }
    let n = sys.n_states();
    let m = sys.n_inputs();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    aug.view_mut((0, n), (n, m)).copy_from(&sys.b);
    let e = expm(&(aug * period));
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("matrix exponential overflowed".into()));
    }
    let ad = e.view((0, 0), (n, n)).clone_owned();
    let bd = e.view((0, n), (n, m)).clone_owned();
    DiscreteStateSpace::new(ad, bd, sys.c.clone(), sys.d.clone(), period)
}

/// Largest eigenvalue magnitude of a square real matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eigs = qz::eigenvalues(m)?;
    Ok(eigs.iter().map(|e| e.norm()).fold(0.0, f64::max))
}

/// Stabilizing solution of the discrete algebraic Riccati equation
///   X = A'XA - (A'XB + S)(R + B'XB)^{-1}(B'XA + S') + Q
/// together with the gain (R + B'XB)^{-1}(B'XA + S') and the relative
/// residual of the fixed-point map.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub x: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub residual: f64,
}

pub fn dare_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) || s.shape() != (n, m)
    {
        return Err(Error::DimensionMismatch("dare operands".into()));
    }
    for mat in [a, b, q, r, s] {
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dare operand"));
        }
    }
    if n == 0 {
        return Ok(DareSolution {
            x: DMatrix::zeros(0, 0),
            gain: DMatrix::zeros(m, 0),
            residual: 0.0,
        });
    }

    // On badly scaled data (X of order ||A||^2 or more) the costate block
    // of the deflating subspace dwarfs the state block; a column rescaling
    // of the costate variable restores conditioning without changing the
    // equation. Retry with scale estimates refined from the failed
    // attempt's solution magnitude.
    let mut sigma = 1.0;
    let mut first_err = None;
    for attempt in 0..3 {
        let mut x_norm_probe = None;
        match dare_attempt(a, b, q, r, s, sigma, &mut x_norm_probe) {
            Ok(sol) => return Ok(sol),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
                let next = x_norm_probe
                    .filter(|&v| v.is_finite() && v > 0.0)
                    .unwrap_or_else(|| (a.norm() * a.norm() + q.norm()).max(1.0));
                let next = next.max(1.0);
                if attempt == 2 || (next / sigma - 1.0).abs() < 0.5 {
                    break;
                }
                sigma = next;
            }
        }
    }
    Err(first_err.unwrap_or_else(|| Error::NumericalFailure("dare failed".into())))
}

fn dare_attempt(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
    sigma: f64,
    x_norm_probe: &mut Option<f64>,
) -> Result<DareSolution> {
    let n = a.nrows();
    let (h, j) = dare_pencil(a, b, q, r, s, sigma);
    let (res, count) = qz::ordered_qz(&h, &j, |e| classify_disc(e, UNIT_CIRCLE_MARGIN) == DiscClass::Inside)?;
    if res
        .eigs
        .iter()
        .any(|e| classify_disc(e, UNIT_CIRCLE_MARGIN) == DiscClass::OnCircle)
    {
        return Err(Error::NoStabilizingSolution(
            "symplectic pencil has unit-circle eigenvalues".into(),
        ));
    }
    if count != n {
        return Err(Error::NoStabilizingSolution(format!(
            "expected {n} stable pencil eigenvalues, found {count}"
        )));
    }

    let u = res.z.columns(0, n).clone_owned();
    let u11 = u.rows(0, n).clone_owned();
    let u21 = u.rows(n, n).clone_owned();
    let xt = u11
        .transpose()
        .lu()
        .solve(&u21.transpose())
        .ok_or_else(|| Error::NoStabilizingSolution("singular deflating-subspace block".into()))?;
    let xc = xt.transpose() * Complex64::new(sigma, 0.0);
    let xre = xc.map(|z| z.re);
    let xim = xc.map(|z| z.im);
    *x_norm_probe = Some(xre.norm());
    if xim.norm() > 1e-4 * xre.norm().max(1.0) {
        return Err(Error::NumericalFailure(
            "deflating subspace produced a complex solution".into(),
        ));
    }
    let x = (&xre + xre.transpose()) * 0.5;

    let rb = r + b.transpose() * &x * b;
    let rhs = b.transpose() * &x * a + s.transpose();
    let gain = rb
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoStabilizingSolution("singular R + B'XB".into()))?;

    let closed = a - b * &gain;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 - UNIT_CIRCLE_MARGIN {
        return Err(Error::NoStabilizingSolution(format!(
            "closed loop not stable (spectral radius {rho})"
        )));
    }

    let fx = a.transpose() * &x * a - (a.transpose() * &x * b + s) * &gain + q;
    let residual = (&x - fx).norm() / x.norm().max(1.0);
    if residual > DARE_RESIDUAL_GATE {
        return Err(Error::NumericalFailure(format!(
            "dare residual {residual:.3e} exceeds gate"
        )));
    }

    let sym = nalgebra::SymmetricEigen::new(x.clone());
    let lmin = sym.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = sym.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lmin < -1e-8 * lmax.max(1.0) {
        return Err(Error::NoStabilizingSolution(format!(
            "solution not positive semidefinite (min eig {lmin:.3e})"
        )));
    }

    Ok(DareSolution { x, gain, residual })
}

/// Extended symplectic pencil for the DARE, compressed to 2n x 2n by
/// projecting out the control block. `sigma` rescales the costate
/// variable (a right column scaling of the pencil); the recovered
/// solution must be multiplied back by it.
fn dare_pencil(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
    sigma: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let size = 2 * n + m;
    let mut h = DMatrix::zeros(size, size);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, 2 * n), (n, m)).copy_from(b);
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * sigma));
    h.view_mut((n, 2 * n), (n, m)).copy_from(&(-s));
    h.view_mut((2 * n, 0), (m, n)).copy_from(&s.transpose());
    h.view_mut((2 * n, 2 * n), (m, m)).copy_from(r);

    let mut j = DMatrix::zeros(size, size);
    j.view_mut((0, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    j.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * sigma));
    j.view_mut((2 * n, n), (m, n))
        .copy_from(&(-b.transpose() * sigma));

    let q2 = orthonormal_complement(&h.columns(2 * n, m).clone_owned());
    let ht = q2.transpose() * h.columns(0, 2 * n);
    let jt = q2.transpose() * j.columns(0, 2 * n);
    (ht, jt)
}

/// Columns spanning the orthogonal complement of range(m), via full
/// Householder QR.
fn orthonormal_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut work = m.clone();
    let mut q = DMatrix::<f64>::identity(rows, rows);
    for k in 0..cols.min(rows) {
        let mut norm_sq = 0.0;
        for i in k..rows {
            norm_sq += work[(i, k)] * work[(i, k)];
        }
        let norm_x = norm_sq.sqrt();
        if norm_x < 1e-300 {
            continue;
        }
        let alpha = if work[(k, k)] >= 0.0 { -norm_x } else { norm_x };
        let mut v = DVector::zeros(rows - k);
        for i in k..rows {
            v[i - k] = work[(i, k)];
        }
        v[0] -= alpha;
        let vn = v.norm();
        if vn < 1e-300 {
            continue;
        }
        v /= vn;
        for col in k..cols {
            let mut dot = 0.0;
            for i in 0..rows - k {
                dot += v[i] * work[(k + i, col)];
            }
            for i in 0..rows - k {
                work[(k + i, col)] -= 2.0 * dot * v[i];
            }
        }
        for row in 0..rows {
            let mut dot = 0.0;
            for i in 0..rows - k {
                dot += q[(row, k + i)] * v[i];
            }
            for i in 0..rows - k {
                q[(row, k + i)] -= 2.0 * dot * v[i];
            }
        }
    }
    q.columns(cols, rows - cols).clone_owned()
}

/// Largest singular value by power iteration on M^H M.
pub fn sigma_max(m: &CMat) -> f64 {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mh = m.adjoint();
    let mut v: nalgebra::DVector<Complex64> = nalgebra::DVector::from_fn(cols, |i, _| {
        Complex64::new(1.0 + (i as f64 * 0.7391).sin(), (i as f64 * 1.173).cos())
    });
    let nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    v /= Complex64::new(nv, 0.0);
    let mut prev = 0.0;
    for _ in 0..500 {
        let w = &mh * (m * &v);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let sigma = wn.sqrt();
        v = w / Complex64::new(wn, 0.0);
        if (sigma - prev).abs() <= 1e-13 * sigma.max(1e-300) {
            return sigma;
        }
        prev = sigma;
    }
    prev
}

/// Max singular value over a uniform frequency grid on [0, pi].
pub fn frequency_sweep_max(sys: &DiscreteStateSpace, points: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    for k in 0..points {
        let theta = std::f64::consts::PI * k as f64 / (points - 1).max(1) as f64;
        let z = Complex64::from_polar(1.0, theta);
        let g = sys.transfer_at(z)?;
        best = best.max(sigma_max(&g));
    }
    Ok(best)
}

/// H-infinity norm of a stable discrete system: bisection on gamma with a
/// unit-circle eigenvalue test on the symplectic pencil, seeded and
/// cross-checked by a 512-point frequency sweep.
pub fn hinf_norm_discrete(sys: &DiscreteStateSpace, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol = {tol}")));
    }
    let rho = spectral_radius(&sys.a)?;
    if rho >= 1.0 {
        return Err(Error::UnstableSystem(rho));
    }
    let dc: CMat = sys.d.map(|x| Complex64::new(x, 0.0));
    let d_norm = sigma_max(&dc);
    if sys.n_states() == 0 {
        return Ok(d_norm);
    }
    if sys.b.norm() == 0.0 || sys.c.norm() == 0.0 {
        return Ok(d_norm);
    }

    let sweep = frequency_sweep_max(sys, 512)?;
    let mut lo = sweep.max(d_norm);
    let mut hi = (lo * 2.0).max(lo + tol).max(1e-9);
    let mut guard = 0;
    while bounded_real_crossing(sys, hi)? {
        hi *= 4.0;
        guard += 1;
        if guard > 50 {
            return Err(Error::NumericalFailure(
                "could not bracket the H-infinity norm".into(),
            ));
        }
    }
    while hi - lo > tol * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if bounded_real_crossing(sys, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        guard += 1;
        if guard > 400 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// True iff some singular value of G(e^{j theta}) crosses `gamma`, detected
/// as a unit-circle eigenvalue of the bounded-real symplectic pencil.
fn bounded_real_crossing(sys: &DiscreteStateSpace, gamma: f64) -> Result<bool> {
    let m = sys.n_inputs();
    let q = sys.c.transpose() * &sys.c;
    let mut r = sys.d.transpose() * &sys.d;
    for i in 0..m {
        r[(i, i)] -= gamma * gamma;
    }
    let s = sys.c.transpose() * &sys.d;
    let (h, j) = dare_pencil(&sys.a, &sys.b, &q, &r, &s, 1.0);
    let eigs = qz::pencil_eigenvalues(&h, &j)?;
    Ok(eigs
        .iter()
        .any(|e| classify_disc(e, UNIT_CIRCLE_MARGIN) == DiscClass::OnCircle))
}
