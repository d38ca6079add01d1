//! Dense complex linear algebra helpers: Kronecker products, Schur-based
//! Lyapunov solves and spectral checks.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// Kronecker product with `(X⊗Z)[(i,k),(j,l)] = X[i,j]·Z[k,l]`, flattened as `i·rows(Z)+k`.
pub fn kron(x: &CMat, z: &CMat) -> CMat {
    let (xr, xc) = x.shape();
    let (zr, zc) = z.shape();
    let mut out = CMat::zeros(xr * zr, xc * zc);
    for i in 0..xr {
        for j in 0..xc {
            let s = x[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..zr {
                for l in 0..zc {
                    out[(i * zr + k, j * zc + l)] = s * z[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker sum `X⊗I + I⊗X`.
pub fn kron_sum(x: &CMat) -> CMat {
    let n = x.nrows();
    let id = eye(n);
    kron(x, &id) + kron(&id, x)
}

pub fn conj(x: &CMat) -> CMat {
    x.map(|v| v.conj())
}

pub fn trace(x: &CMat) -> Complex64 {
    x.diagonal().iter().sum()
}

/// `Tr(X·Z)` without forming the product.
pub fn trace_product(x: &CMat, z: &CMat) -> Complex64 {
    let mut acc = ZERO;
    for i in 0..x.nrows() {
        for k in 0..x.ncols() {
            acc += x[(i, k)] * z[(k, i)];
        }
    }
    acc
}

pub fn hermitian_defect(x: &CMat) -> f64 {
    (x - x.adjoint()).norm()
}

pub fn hermitize(x: &CMat) -> CMat {
    (x + x.adjoint()).scale(0.5)
}

/// Complex Schur form `A = U·T·U†` with `T` upper triangular.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let s = Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (u, t) = s.unpack();
    let mut lower = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            lower = lower.max(t[(i, j)].norm());
        }
    }
    if lower > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "Schur factor is not triangular (subdiagonal {lower:.2e})"
        )));
    }
    Ok((u, t))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    let (_, t) = schur(a)?;
    Ok(t.diagonal().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &CMat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn spectral_radius(a: &CMat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Solves `A·X + X·A† + C = 0` by Bartels–Stewart on the complex Schur form.
///
/// Falls back to the dense Kronecker system when the Schur factor is not
/// usable. Fails when `A` has eigenvalue pairs with `λᵢ + conj(λⱼ) ≈ 0`.
pub fn solve_lyapunov(a: &CMat, c: &CMat) -> Result<CMat> {
    check_lyapunov_dims(a, c)?;
    match schur(a) {
        Ok((u, t)) => solve_lyapunov_schur(&u, &t, c),
        Err(_) => solve_lyapunov_kron(a, c),
    }
}

/// Same equation with a precomputed Schur pair of `A`.
pub fn solve_lyapunov_schur(u: &CMat, t: &CMat, c: &CMat) -> Result<CMat> {
    let n = t.nrows();
    let d = -(u.adjoint() * c * u);
    let mut y = CMat::zeros(n, n);
    let scale = t.norm().max(1e-300);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut rhs = d[(i, j)];
            for k in (i + 1)..n {
                rhs -= t[(i, k)] * y[(k, j)];
            }
            for k in (j + 1)..n {
                rhs -= y[(i, k)] * t[(j, k)].conj();
            }
            let denom = t[(i, i)] + t[(j, j)].conj();
            if denom.norm() <= 1e-14 * scale {
                return Err(Error::Numerical(
                    "Lyapunov operator is singular (eigenvalues symmetric about the imaginary axis)"
                        .into(),
                ));
            }
            y[(i, j)] = rhs / denom;
        }
    }
    Ok(u * y * u.adjoint())
}

/// Dense vectorized solve of `A·X + X·A† + C = 0`; `O(n⁶)`, used as an oracle.
pub fn solve_lyapunov_kron(a: &CMat, c: &CMat) -> Result<CMat> {
    check_lyapunov_dims(a, c)?;
    let n = a.nrows();
    let id = eye(n);
    // column-major vec: vec(AX) = (I⊗A)vec X, vec(XA†) = (conj(A)⊗I) vec X
    let op = kron(&id, a) + kron(&conj(a), &id);
    let rhs = -nalgebra::DVector::from_column_slice(c.as_slice());
    let lu = op.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Kronecker Lyapunov system".into()))?;
    if sol.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite Kronecker Lyapunov solution".into()));
    }
    Ok(CMat::from_column_slice(n, n, sol.as_slice()))
}

fn check_lyapunov_dims(a: &CMat, c: &CMat) -> Result<()> {
    if !a.is_square() || c.shape() != a.shape() {
        return Err(Error::Dimension(format!(
            "Lyapunov operands {:?} and {:?} are not conformable",
            a.shape(),
            c.shape()
        )));
    }
    Ok(())
}

/// Frobenius residual of `A·X + X·A† + C`.
pub fn lyapunov_residual(a: &CMat, x: &CMat, c: &CMat) -> f64 {
    (a * x + x * a.adjoint() + c).norm()
}

pub fn is_finite(x: &CMat) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Random instances shared by unit tests, the acceptance suite and `oracle-check`.
pub mod testing {
    use super::*;
    use rand::Rng;

    pub fn random_cmat<R: Rng>(rng: &mut R, r: usize, cols: usize) -> CMat {
        CMat::from_fn(r, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
        hermitize(&random_cmat(rng, n, n))
    }

    pub fn random_stable<R: Rng>(rng: &mut R, n: usize) -> CMat {
        let m = random_cmat(rng, n, n);
        let shift = m.norm() + 0.5;
        m - eye(n).scale(shift)
    }
}
