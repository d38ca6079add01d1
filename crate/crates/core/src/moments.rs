//! Steady-state first- and second-order moments of a linear quantum plant.
//!
//! `S1 = E[νν†]` solves `A·S1 + S1·A† + N = 0` with `N = B·F_w·B†`.
//! `S2 = E[(νν†)⊗(νν†)]` solves the Kronecker-sum Lyapunov equation with the
//! source `N⊗S1 + S1⊗N + M`, where `M = E[d(νν†)⊗d(νν†)]` is the Itô
//! correction. Indices follow `(X⊗Z)[(i,k),(j,l)] = X[i,j]·Z[k,l]`, flattened
//! as `i·2n + k`, and `σ(k) = (k + n) mod 2n` maps `ν_k` to `ν_k†`.

use crate::error::{Error, Result};
use crate::linalg::{self, kron, CMat};
use crate::qsys::{self, QuantumPlant};

#[derive(Debug, Clone)]
pub struct MomentPair {
    pub s1: CMat,
    pub s2: CMat,
}

/// The four Itô-correction terms of the second-order equation and their sum.
#[derive(Debug, Clone)]
pub struct NoiseCorrection {
    pub m1: CMat,
    pub m2: CMat,
    pub m3: CMat,
    pub m4: CMat,
    pub total: CMat,
}

#[inline]
fn sigma(k: usize, n: usize) -> usize {
    (k + n) % (2 * n)
}

fn modes_of(s1: &CMat) -> Result<usize> {
    if !s1.is_square() || s1.nrows() % 2 != 0 || s1.nrows() == 0 {
        return Err(Error::Dimension(format!("S1 must be 2n×2n, got {:?}", s1.shape())));
    }
    Ok(s1.nrows() / 2)
}

pub fn solve_s1(p: &QuantumPlant) -> Result<CMat> {
    solve_s1_with_noise(&p.a, &p.noise_intensity())
}

/// `A·S1 + S1·A† + N = 0` for an arbitrary noise intensity `N`.
pub fn solve_s1_with_noise(a: &CMat, noise: &CMat) -> Result<CMat> {
    qsys::require_hurwitz(a, qsys::DEFAULT_HURWITZ_MARGIN)?;
    let s1 = linalg::solve_lyapunov(a, noise)?;
    Ok(linalg::hermitize(&s1))
}

/// Itô correction for a general doubled-up noise intensity `N`:
///
/// ```text
/// M1[(i,k),(j,l)] = N[i,σk]·S1[σj,l]
/// M2[(i,k),(j,l)] = N[i,l]·S1[σj,σk]
/// M3[(i,k),(j,l)] = N[σj,σk]·S1[i,l]
/// M4[(i,k),(j,l)] = N[σj,l]·S1[i,σk]
/// ```
pub fn build_noise_correction_with(s1: &CMat, noise: &CMat) -> Result<NoiseCorrection> {
    let n = modes_of(s1)?;
    if noise.shape() != s1.shape() {
        return Err(Error::Dimension(format!(
            "noise intensity {:?} does not match S1 {:?}",
            noise.shape(),
            s1.shape()
        )));
    }
    let d = 2 * n;
    let dd = d * d;
    let mut m1 = CMat::zeros(dd, dd);
    let mut m2 = CMat::zeros(dd, dd);
    let mut m3 = CMat::zeros(dd, dd);
    let mut m4 = CMat::zeros(dd, dd);
    for i in 0..d {
        for k in 0..d {
            let r = i * d + k;
            let sk = sigma(k, n);
            for j in 0..d {
                let sj = sigma(j, n);
                for l in 0..d {
                    let col = j * d + l;
                    m1[(r, col)] = noise[(i, sk)] * s1[(sj, l)];
                    m2[(r, col)] = noise[(i, l)] * s1[(sj, sk)];
                    m3[(r, col)] = noise[(sj, sk)] * s1[(i, l)];
                    m4[(r, col)] = noise[(sj, l)] * s1[(i, sk)];
                }
            }
        }
    }
    let total = &m1 + &m2 + &m3 + &m4;
    Ok(NoiseCorrection { m1, m2, m3, m4, total })
}

/// Itô correction for unit vacuum intensity `N = diag(I_n, 0_n)`.
///
/// This is the row-sparse / column-sparse block layout built from the columns
/// `s_1 … s_2n` of `S1` and the half-swap `F`: `M1` fills the rows
/// `(i', n+i')`, `M2` the top half of the rows, `M3` the right half of the
/// columns and `M4` the columns `(n+i', i')`.
pub fn build_noise_correction(s1: &CMat) -> Result<NoiseCorrection> {
    let n = modes_of(s1)?;
    build_noise_correction_with(s1, &qsys::ito_vacuum(n))
}

/// Source term `N⊗S1 + S1⊗N + M` of the second-order equation.
pub fn second_order_source(noise: &CMat, s1: &CMat, m_total: &CMat) -> CMat {
    kron(noise, s1) + kron(s1, noise) + m_total
}

pub fn solve_s2(p: &QuantumPlant, s1: &CMat, m_total: &CMat) -> Result<CMat> {
    solve_s2_with_noise(&p.a, &p.noise_intensity(), s1, m_total)
}

pub fn solve_s2_with_noise(a: &CMat, noise: &CMat, s1: &CMat, m_total: &CMat) -> Result<CMat> {
    qsys::require_hurwitz(a, qsys::DEFAULT_HURWITZ_MARGIN)?;
    let d = a.nrows();
    if s1.shape() != (d, d) || m_total.shape() != (d * d, d * d) {
        return Err(Error::Dimension("S1 or M does not match the drift dimension".into()));
    }
    let source = second_order_source(noise, s1, m_total);
    solve_kron_sum_lyapunov(a, &source)
}

/// Solves `(A⊗I + I⊗A)·X + X·(A†⊗I + I⊗A†) + C = 0` reusing the Schur form of `A`.
pub fn solve_kron_sum_lyapunov(a: &CMat, c: &CMat) -> Result<CMat> {
    match linalg::schur(a) {
        Ok((u, t)) => {
            let uu = kron(&u, &u);
            let tt = linalg::kron_sum(&t);
            linalg::solve_lyapunov_schur(&uu, &tt, c)
        }
        Err(_) => linalg::solve_lyapunov(&linalg::kron_sum(a), c),
    }
}

/// Moments of a plant driven by vacuum fields.
pub fn steady_moments(p: &QuantumPlant) -> Result<MomentPair> {
    steady_moments_with_noise(&p.a, &p.noise_intensity())
}

pub fn steady_moments_with_noise(a: &CMat, noise: &CMat) -> Result<MomentPair> {
    let s1 = solve_s1_with_noise(a, noise)?;
    let corr = build_noise_correction_with(&s1, noise)?;
    let s2 = solve_s2_with_noise(a, noise, &s1, &corr.total)?;
    Ok(MomentPair { s1, s2 })
}

/// Zero-mean Gaussian factorization of the fourth moments:
/// `S1[i,j]S1[k,l] + S1[i,σk]S1[σj,l] + S1[i,l]S1[σj,σk]`.
pub fn wick_oracle(s1: &CMat) -> Result<CMat> {
    let n = modes_of(s1)?;
    let d = 2 * n;
    let mut out = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for k in 0..d {
            let sk = sigma(k, n);
            for j in 0..d {
                let sj = sigma(j, n);
                for l in 0..d {
                    out[(i * d + k, j * d + l)] = s1[(i, j)] * s1[(k, l)]
                        + s1[(i, sk)] * s1[(sj, l)]
                        + s1[(i, l)] * s1[(sj, sk)];
                }
            }
        }
    }
    Ok(out)
}

/// `‖S2† − P·S2·P‖_F` with `P` the Kronecker factor swap.
///
/// Fourth moments are not Hermitian: `conj(S2[(j,l),(i,k)]) = S2[(k,i),(l,j)]`
/// because the adjoint of `ν_i ν_j† ν_k ν_l†` reverses the operator order.
pub fn swap_hermitian_defect(s2: &CMat) -> Result<f64> {
    let dd = s2.nrows();
    let d = (dd as f64).sqrt().round() as usize;
    if d * d != dd || !s2.is_square() {
        return Err(Error::Dimension(format!("S2 must be (2n)²×(2n)², got {:?}", s2.shape())));
    }
    let swap = |r: usize| (r % d) * d + r / d;
    let mut acc = 0.0;
    for r in 0..dd {
        for col in 0..dd {
            acc += (s2[(col, r)].conj() - s2[(swap(r), swap(col))]).norm_sqr();
        }
    }
    Ok(acc.sqrt())
}

/// `TopLeft(S1) − BottomRight(S1)ᵀ − I`, zero for states obeying the canonical commutators.
pub fn commutation_defect(s1: &CMat) -> Result<f64> {
    let n = modes_of(s1)?;
    let tl = s1.view((0, 0), (n, n)).into_owned();
    let br = s1.view((n, n), (n, n)).transpose();
    Ok((tl - br - linalg::eye(n)).norm())
}

/// Random instances shared by unit tests, the acceptance suite and `oracle-check`.
pub mod testing {
    use super::*;
    use crate::qsys::{basis_capacity, build_plant, default_basis, ParamSystem, SystemDims};
    use rand::Rng;

    /// Random stable PR plant over the full default basis, decays bounded away from zero.
    pub fn random_stable_plant<R: Rng>(rng: &mut R, n: usize, m: usize, coherent_scale: f64) -> QuantumPlant {
        build_plant(&random_stable_params(rng, n, m, coherent_scale)).unwrap()
    }

    pub fn random_stable_params<R: Rng>(rng: &mut R, n: usize, m: usize, coherent_scale: f64) -> ParamSystem {
        let cap = basis_capacity(n, m);
        let basis = default_basis(&SystemDims::new(n, m, cap).unwrap()).unwrap();
        loop {
            let theta: Vec<f64> = basis
                .labels
                .iter()
                .map(|l| {
                    if l.starts_with("decay") {
                        rng.gen_range(0.5..2.0)
                    } else {
                        rng.gen_range(0.0..coherent_scale)
                    }
                })
                .collect();
            let ps = ParamSystem::new(theta, basis.clone()).unwrap();
            let p = build_plant(&ps).unwrap();
            if matches!(linalg::spectral_abscissa(&p.a), Ok(x) if x < -0.05) {
                return ps;
            }
        }
    }
}
