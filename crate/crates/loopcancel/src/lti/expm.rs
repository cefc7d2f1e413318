//! Dense matrix exponential by scaling and squaring with Pade approximants.
//!
//! Order selection and theta thresholds follow Higham, "The Scaling and
//! Squaring Method for the Matrix Exponential Revisited" (2005).

use nalgebra::DMatrix;

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068e0;
const THETA_13: f64 = 5.371_920_351_148_152e0;

/// exp(M) for a square real matrix. Total: always returns a matrix, which is
/// finite whenever the input is finite and not overflowing.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm: matrix must be square");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }

    let norm = one_norm(m);
    let (u, v, squarings) = if norm < THETA_3 {
        let (u, v) = pade3(m);
        (u, v, 0)
    } else if norm < THETA_5 {
        let (u, v) = pade5(m);
        (u, v, 0)
    } else if norm < THETA_7 {
        let (u, v) = pade7(m);
        (u, v, 0)
    } else if norm < THETA_9 {
        let (u, v) = pade9(m);
        (u, v, 0)
    } else {
        let squarings = ((norm / THETA_13).log2().ceil()).max(0.0) as u32;
        let scaled = m / 2f64.powi(squarings as i32);
        let (u, v) = pade13(&scaled);
        (u, v, squarings)
    };

    // exp ~= (V - U)^-1 (V + U)
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade3(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let u = a * (&a2 * B[3] + &id * B[1]);
    let v = &a2 * B[2] + &id * B[0];
    (u, v)
}

fn pade5(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let u = a * (&a4 * B[5] + &a2 * B[3] + &id * B[1]);
    let v = &a4 * B[4] + &a2 * B[2] + &id * B[0];
    (u, v)
}

fn pade7(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 8] = [
        17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u = a * (&a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1]);
    let v = &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    (u, v)
}

fn pade9(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 10] = [
        17643225600.0,
        8821612800.0,
        2075673600.0,
        302702400.0,
        30270240.0,
        2162160.0,
        110880.0,
        3960.0,
        90.0,
        1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let a8 = &a6 * &a2;
    let u = a * (&a8 * B[9] + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1]);
    let v = &a8 * B[8] + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    (u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u = a * (&a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1]);
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_matches_exp() {
        for &x in &[0.0, 1.0, -1.0, 4.2, -62.5, 20.0] {
            let m = DMatrix::from_element(1, 1, x);
            let e = expm(&m)[(0, 0)];
            let rel = (e - x.exp()).abs() / x.exp().max(f64::MIN_POSITIVE);
            assert!(rel < 1e-12, "x={x}: expm={e:e} exp={:e}", x.exp());
        }
    }

    #[test]
    fn nilpotent_exact() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&m);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((e - expect).norm() < 1e-15);
    }

    #[test]
    fn rotation_block() {
        // exp([[0,t],[-t,0]]) = [[cos t, sin t],[-sin t, cos t]]
        let t = 0.7;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = expm(&m);
        let expect = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!((e - expect).norm() < 1e-14);
    }

    #[test]
    fn inverse_property() {
        // exp(A) exp(-A) = I for a random-ish matrix
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[0.3, -1.2, 0.5, 2.0, 0.1, -0.7, -0.4, 0.9, 1.1],
        );
        let prod = expm(&m) * expm(&(-&m));
        assert!((prod - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn empty_matrix() {
        let e = expm(&DMatrix::zeros(0, 0));
        assert_eq!(e.nrows(), 0);
    }
}
