//! Complex QZ (generalized Schur) decomposition with eigenvalue reordering.
//!
//! Used for matrix eigenvalues (pencil (M, I)), Riccati deflating subspaces
//! and symplectic-pencil unit-circle tests. The pencil is pre-rotated by a
//! Moebius transform (H, J) -> (cH - sJ, conj(s)H + conj(c)J) so that
//! infinite generalized eigenvalues of the original pencil become ordinary
//! finite ones; eigenvalues are mapped back when classified.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;

const MAX_SWEEPS_PER_EIG: usize = 60;

/// alpha/beta pair of the original (unrotated, unscaled) pencil.
#[derive(Debug, Clone, Copy)]
pub struct GenEig {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl GenEig {
    pub fn magnitude(&self) -> f64 {
        if self.beta.norm() == 0.0 {
            f64::INFINITY
        } else {
            self.alpha.norm() / self.beta.norm()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscClass {
    Inside,
    OnCircle,
    Outside,
}

pub fn classify_disc(eig: &GenEig, margin: f64) -> DiscClass {
    let a = eig.alpha.norm();
    let b = eig.beta.norm();
    let scale = a.max(b).max(f64::MIN_POSITIVE);
    if a - b > margin * scale {
        DiscClass::Outside
    } else if b - a > margin * scale {
        DiscClass::Inside
    } else {
        DiscClass::OnCircle
    }
}

/// Result of the ordered QZ run. `z` holds the accumulated right vectors of
/// the rotated pencil; right deflating subspaces of the original pencil are
/// spanned by leading columns of `z` after reordering.
pub struct QzResult {
    pub s: CMat,
    pub t: CMat,
    pub z: CMat,
    /// Back-mapped eigenvalues of the original pencil, in diagonal order.
    pub eigs: Vec<GenEig>,
}

struct Moebius {
    c: Complex64,
    s: Complex64,
    h_scale: f64,
    j_scale: f64,
}

impl Moebius {
    fn back_map(&self, alpha_rot: Complex64, beta_rot: Complex64) -> GenEig {
        // lambda_scaled = (conj(c) a' + s b') / (c b' - conj(s) a')
        let num = self.c.conj() * alpha_rot + self.s * beta_rot;
        let den = self.c * beta_rot - self.s.conj() * alpha_rot;
        GenEig {
            alpha: num * Complex64::new(self.h_scale, 0.0),
            beta: den * Complex64::new(self.j_scale, 0.0),
        }
    }
}

// Rotation angles tried in order; fixed for determinism.
const ROTATIONS: [(f64, f64); 3] = [(0.83, 0.41), (1.91, 2.23), (0.37, 5.11)];

/// Ordered QZ of a real pencil (h, j). Eigenvalues with `select` true are
/// moved to the leading diagonal positions.
pub fn ordered_qz(
    h: &DMatrix<f64>,
    j: &DMatrix<f64>,
    select: impl Fn(&GenEig) -> bool,
) -> Result<(QzResult, usize)> {
    let mut last_err = None;
    for &(theta, phi) in ROTATIONS.iter() {
        match qz_with_rotation(h, j, theta, phi) {
            Ok(mut res) => {
                let flags: Vec<bool> = res.eigs.iter().map(&select).collect();
                let count = flags.iter().filter(|&&f| f).count();
                match reorder(&mut res, &flags) {
                    Ok(()) => return Ok((res, count)),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::NumericalFailure("qz failed".into())))
}

/// Eigenvalues of a real pencil (h, j).
pub fn pencil_eigenvalues(h: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<Vec<GenEig>> {
    let mut last_err = None;
    for &(theta, phi) in ROTATIONS.iter() {
        match qz_with_rotation(h, j, theta, phi) {
            Ok(res) => return Ok(res.eigs),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::NumericalFailure("qz failed".into())))
}

/// Eigenvalues of a square real matrix via the pencil (m, I), no rotation.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let a: CMat = m.map(|x| Complex64::new(x, 0.0));
    let b: CMat = CMat::identity(n, n);
    let moebius = Moebius {
        c: Complex64::new(1.0, 0.0),
        s: Complex64::new(0.0, 0.0),
        h_scale: 1.0,
        j_scale: 1.0,
    };
    let res = qz_core(a, b, &moebius)?;
    Ok(res
        .eigs
        .iter()
        .map(|e| {
            if e.beta.norm() == 0.0 {
                Complex64::new(f64::INFINITY, 0.0)
            } else {
                e.alpha / e.beta
            }
        })
        .collect())
}

fn qz_with_rotation(h: &DMatrix<f64>, j: &DMatrix<f64>, theta: f64, phi: f64) -> Result<QzResult> {
    let n = h.nrows();
    if n != h.ncols() || n != j.nrows() || n != j.ncols() {
        return Err(Error::DimensionMismatch("pencil must be square".into()));
    }
    if h.iter().chain(j.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pencil"));
    }
    if n == 0 {
        return Ok(QzResult {
            s: CMat::zeros(0, 0),
            t: CMat::zeros(0, 0),
            z: CMat::zeros(0, 0),
            eigs: vec![],
        });
    }
    let h_scale = h.norm().max(f64::MIN_POSITIVE);
    let j_scale = j.norm().max(f64::MIN_POSITIVE);
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::from_polar(theta.sin(), phi);
    let moebius = Moebius { c, s, h_scale, j_scale };

    let hs: CMat = h.map(|x| Complex64::new(x / h_scale, 0.0));
    let js: CMat = j.map(|x| Complex64::new(x / j_scale, 0.0));
    let a = &hs * c - &js * s;
    let b = &hs * s.conj() + &js * c.conj();
    qz_core(a, b, &moebius)
}

/// Plane rotation [[c, s], [-conj(s), c]] with real c, mapping (f, g) to (r, 0).
#[derive(Clone, Copy)]
struct Rot {
    c: f64,
    s: Complex64,
}

fn zero_second(f: Complex64, g: Complex64) -> Rot {
    let gn = g.norm();
    if gn == 0.0 {
        return Rot {
            c: 1.0,
            s: Complex64::new(0.0, 0.0),
        };
    }
    let fn_ = f.norm();
    if fn_ == 0.0 {
        // (0, g) -> (|g|, 0)
        return Rot {
            c: 0.0,
            s: g.conj() / gn,
        };
    }
    // Scale to avoid underflow/overflow in the hypotenuse.
    let scale = fn_.max(gn);
    let fs = fn_ / scale;
    let gs = gn / scale;
    let h = (fs * fs + gs * gs).sqrt();
    let fu = f / fn_;
    Rot {
        c: fs / h,
        s: fu * (g.conj() / gn) * (gs / h),
    }
}

/// Unitary with (f, g) -> (0, r) under the same application formula.
fn zero_first(f: Complex64, g: Complex64) -> Rot {
    let fn_ = f.norm();
    if fn_ == 0.0 {
        return Rot {
            c: 1.0,
            s: Complex64::new(0.0, 0.0),
        };
    }
    let gn = g.norm();
    if gn == 0.0 {
        // (f, 0) -> (0, -f)
        return Rot {
            c: 0.0,
            s: Complex64::new(1.0, 0.0),
        };
    }
    let scale = fn_.max(gn);
    let fs = fn_ / scale;
    let gs = gn / scale;
    let h = (fs * fs + gs * gs).sqrt();
    Rot {
        c: gs / h,
        s: -(f / fn_) * (g.conj() / gn) * (fs / h),
    }
}

#[inline]
fn rot_pair(r: &Rot, a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    (a * r.c + b * r.s, -a * r.s.conj() + b * r.c)
}

/// Apply rotation to rows (i, i+1), columns [col_from, col_to).
fn lrot(m: &mut CMat, r: &Rot, i: usize, col_from: usize, col_to: usize) {
    for k in col_from..col_to {
        let (x, y) = rot_pair(r, m[(i, k)], m[(i + 1, k)]);
        m[(i, k)] = x;
        m[(i + 1, k)] = y;
    }
}

/// Apply rotation to columns (j, j+1), rows [row_from, row_to).
fn rrot(m: &mut CMat, r: &Rot, j: usize, row_from: usize, row_to: usize) {
    for k in row_from..row_to {
        let (x, y) = rot_pair(r, m[(k, j)], m[(k, j + 1)]);
        m[(k, j)] = x;
        m[(k, j + 1)] = y;
    }
}

fn qz_core(mut a: CMat, mut b: CMat, moebius: &Moebius) -> Result<QzResult> {
    let n = a.nrows();
    let mut z = CMat::identity(n, n);

    // B -> triangular via QR, A <- Q^H A.
    let qr = b.clone().qr();
    let q = qr.q();
    b = qr.r();
    a = q.adjoint() * a;

    // Hessenberg-triangular reduction.
    for j in 0..n.saturating_sub(2) {
        for i in (j + 2..n).rev() {
            let r = zero_second(a[(i - 1, j)], a[(i, j)]);
            lrot(&mut a, &r, i - 1, j, n);
            a[(i, j)] = Complex64::new(0.0, 0.0);
            lrot(&mut b, &r, i - 1, i - 1, n);
            let r2 = zero_first(b[(i, i - 1)], b[(i, i)]);
            rrot(&mut b, &r2, i - 1, 0, i + 1);
            b[(i, i - 1)] = Complex64::new(0.0, 0.0);
            rrot(&mut a, &r2, i - 1, 0, n);
            rrot(&mut z, &r2, i - 1, 0, n);
        }
    }

    qz_iterate(&mut a, &mut b, &mut z)?;

    let eigs: Vec<GenEig> = (0..n).map(|i| moebius.back_map(a[(i, i)], b[(i, i)])).collect();
    Ok(QzResult { s: a, t: b, z, eigs })
}

fn qz_iterate(a: &mut CMat, b: &mut CMat, z: &mut CMat) -> Result<()> {
    let n = a.nrows();
    let eps = f64::EPSILON;
    let norm_a = a.norm().max(f64::MIN_POSITIVE);
    let norm_b = b.norm().max(f64::MIN_POSITIVE);
    let mut hi = n; // active block is [lo, hi)
    let mut sweeps_since_deflation = 0usize;
    let mut total_sweeps = 0usize;
    let max_total = MAX_SWEEPS_PER_EIG * n.max(1);

    while hi > 1 {
        // Zero out negligible subdiagonals.
        for i in 1..hi {
            let thresh = eps * (a[(i - 1, i - 1)].norm() + a[(i, i)].norm()) + eps * norm_a * 1e-2;
            if a[(i, i - 1)].norm() <= thresh {
                a[(i, i - 1)] = Complex64::new(0.0, 0.0);
            }
        }
        // Deflate converged eigenvalues at the bottom.
        if a[(hi - 1, hi.wrapping_sub(2).min(hi - 1))].norm() == 0.0 && hi >= 2 && a[(hi - 1, hi - 2)].norm() == 0.0 {
            hi -= 1;
            sweeps_since_deflation = 0;
            continue;
        }
        if hi == 1 {
            break;
        }
        // Find the start of the active unreduced block.
        let mut lo = hi - 1;
        while lo > 0 && a[(lo, lo - 1)].norm() != 0.0 {
            lo -= 1;
        }
        if lo == hi - 1 {
            hi -= 1;
            sweeps_since_deflation = 0;
            continue;
        }

        total_sweeps += 1;
        sweeps_since_deflation += 1;
        if total_sweeps > max_total {
            if std::env::var("QZ_DEBUG").is_ok() {
                eprintln!("qz stall: n={n} hi={hi} window subdiags:");
                for i in 1..hi {
                    eprintln!(
                        "  a[{i},{}] = {:.3e}  diag a={:.3e} b={:.3e}",
                        i - 1,
                        a[(i, i - 1)].norm(),
                        a[(i, i)].norm(),
                        b[(i, i)].norm()
                    );
                }
            }
            return Err(Error::NumericalFailure("qz iteration did not converge".into()));
        }

        // Guard against vanishing diagonal of b inside the window; the
        // Moebius rotation makes this rare. Treated as a failure so the
        // caller can retry with a different rotation.
        for i in lo..hi {
            if b[(i, i)].norm() <= eps * norm_b * 1e-2 {
                return Err(Error::NumericalFailure(
                    "near-singular triangular factor in qz".into(),
                ));
            }
        }

        let sigma = if sweeps_since_deflation % 10 == 0 {
            // Exceptional shift to break symmetry stalls; magnitude taken
            // from the subdiagonal so zero-diagonal blocks still move.
            let k = (total_sweeps % 7 + 1) as f64;
            let kick = a[(hi - 1, hi - 2)].norm() * Complex64::from_polar(0.75, 0.6 * k)
                + a[(hi - 1, hi - 1)];
            kick / b[(hi - 1, hi - 1)]
        } else {
            wilkinson_shift(a, b, hi)
        };

        // Implicit single-shift sweep on [lo, hi).
        let v0 = a[(lo, lo)] - sigma * b[(lo, lo)];
        let v1 = a[(lo + 1, lo)];
        let mut rl = zero_second(v0, v1);
        for k in lo..hi - 1 {
            lrot(a, &rl, k, k.saturating_sub(1), a.ncols());
            if k > lo {
                // The rotation annihilated the chased bulge entry.
                a[(k + 1, k - 1)] = Complex64::new(0.0, 0.0);
            }
            lrot(b, &rl, k, k, b.ncols());
            let rr = zero_first(b[(k + 1, k)], b[(k + 1, k + 1)]);
            rrot(b, &rr, k, 0, k + 2);
            b[(k + 1, k)] = Complex64::new(0.0, 0.0);
            rrot(a, &rr, k, 0, (k + 3).min(hi));
            rrot(z, &rr, k, 0, z.nrows());
            if k + 2 < hi {
                rl = zero_second(a[(k + 1, k)], a[(k + 2, k)]);
            }
        }
    }
    Ok(())
}

fn wilkinson_shift(a: &CMat, b: &CMat, hi: usize) -> Complex64 {
    let i = hi - 2;
    let (s00, s01, s10, s11) = (a[(i, i)], a[(i, i + 1)], a[(i + 1, i)], a[(i + 1, i + 1)]);
    let (t00, t01, t11) = (b[(i, i)], b[(i, i + 1)], b[(i + 1, i + 1)]);
    // det(S2 - lambda T2) = 0 expands to qa lambda^2 + qb lambda + qc = 0.
    let qa = t00 * t11;
    let qb = -(s00 * t11 + s11 * t00 - s10 * t01);
    let qc = s00 * s11 - s01 * s10;
    let target = if t11.norm() > 0.0 { s11 / t11 } else { s11 };
    if qa.norm() < 1e-300 {
        if qb.norm() > 0.0 {
            return -qc / qb;
        }
        return target;
    }
    let disc = (qb * qb - qa * qc * 4.0).sqrt();
    let r1 = (-qb + disc) / (qa * 2.0);
    let r2 = (-qb - disc) / (qa * 2.0);
    if (r1 - target).norm() < (r2 - target).norm() {
        r1
    } else {
        r2
    }
}

/// Move selected diagonal pairs to the leading positions by adjacent swaps.
fn reorder(res: &mut QzResult, select: &[bool]) -> Result<()> {
    let n = res.s.nrows();
    let mut flags = select.to_vec();
    let mut eigs = res.eigs.clone();
    let mut top = 0usize;
    for i in 0..n {
        if flags[i] {
            for j in (top..i).rev() {
                swap_adjacent(res, j)?;
                flags.swap(j, j + 1);
                eigs.swap(j, j + 1);
            }
            top += 1;
        }
    }
    res.eigs = eigs;
    Ok(())
}

fn swap_adjacent(res: &mut QzResult, j: usize) -> Result<()> {
    let (s, t, z) = (&mut res.s, &mut res.t, &mut res.z);
    let n = s.nrows();
    let a11 = s[(j, j)];
    let a12 = s[(j, j + 1)];
    let a22 = s[(j + 1, j + 1)];
    let b11 = t[(j, j)];
    let b12 = t[(j, j + 1)];
    let b22 = t[(j + 1, j + 1)];

    // Eigenvector of the 2x2 pencil for the (a22, b22) eigenvalue.
    let p = b22 * a11 - a22 * b11;
    let q = b22 * a12 - a22 * b12;
    let nv = (p.norm_sqr() + q.norm_sqr()).sqrt();
    let block_scale = [a11, a12, a22, b11, b12, b22]
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    if nv <= 1e3 * f64::EPSILON * block_scale * block_scale {
        // Eigenvalues coincide to working precision; order is immaterial.
        return Ok(());
    }
    let v0 = -q / nv;
    let v1 = p / nv;
    // Right unitary with first column (v0, v1).
    let (z11, z21, z12, z22) = (v0, v1, -v1.conj(), v0.conj());
    let apply_right = |m: &mut CMat, rows: usize| {
        for r in 0..rows {
            let x = m[(r, j)];
            let y = m[(r, j + 1)];
            m[(r, j)] = x * z11 + y * z21;
            m[(r, j + 1)] = x * z12 + y * z22;
        }
    };
    apply_right(s, (j + 2).min(n));
    apply_right(t, (j + 2).min(n));
    apply_right(z, n);

    // First columns of the updated blocks are parallel; rotate them onto e1.
    let (su0, su1) = (s[(j, j)], s[(j + 1, j)]);
    let (tu0, tu1) = (t[(j, j)], t[(j + 1, j)]);
    let rot = if su0.norm_sqr() + su1.norm_sqr() >= tu0.norm_sqr() + tu1.norm_sqr() {
        zero_second(su0, su1)
    } else {
        zero_second(tu0, tu1)
    };
    lrot(s, &rot, j, j, s.ncols());
    lrot(t, &rot, j, j, t.ncols());

    let resid = s[(j + 1, j)].norm().max(t[(j + 1, j)].norm());
    if resid > 1e-8 * block_scale.max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "ill-conditioned eigenvalue swap (residual {resid:.2e})"
        )));
    }
    s[(j + 1, j)] = Complex64::new(0.0, 0.0);
    t[(j + 1, j)] = Complex64::new(0.0, 0.0);
    Ok(())
}
