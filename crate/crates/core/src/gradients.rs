//! Adjoint gradients of the steady-state energy with respect to `(Y, B)`.
//!
//! Gradients use the conjugate Wirtinger convention `G = ∂J/∂Z̄ = ½(∂J/∂Re Z + i·∂J/∂Im Z)`,
//! so that `dJ = 2·Re Tr(G†·dZ)`. The drift is `A = ½(Y − Y♭) − ½B·B♭` and the
//! noise intensity is `N = B·F_w·B†`; `J = Re[Tr(Q1·S1) + Tr(Q2·S2)] + offset`.
//!
//! For a Lyapunov constraint `A·X + X·A† + C = 0` and a linear functional
//! `Re Tr(Q·X)`, the costate `Π` solves `A†·Π + Π·A + Q = 0` and
//! `Re Tr(Q·dX) = Re Tr(Π·(dA·X + X·dA† + dC))`. The second-order source
//! `N⊗S1 + S1⊗N + M(N, S1)` is bilinear, so its sensitivity splits into a
//! weight on `dS1` (a further first-order costate) and a weight on `dN`.

use crate::cost::CostMatrices;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::moments::{self, MomentPair};
use crate::qsys::{self, flat, ito_vacuum};

#[derive(Debug, Clone)]
pub struct CostateSet {
    pub pi1: CMat,
    pub pi2: CMat,
    /// `Π·S1`.
    pub omega1: CMat,
    /// `Tr₁(Π₂·S2) + Tr₂(Π₂·S2)`.
    pub omega2: CMat,
}

#[derive(Debug, Clone)]
pub struct GradientPair {
    pub dy: CMat,
    pub db: CMat,
}

impl GradientPair {
    pub fn zeros_like(y: &CMat, b: &CMat) -> Self {
        Self { dy: CMat::zeros(y.nrows(), y.ncols()), db: CMat::zeros(b.nrows(), b.ncols()) }
    }

    pub fn norm(&self) -> f64 {
        self.dy.norm() + self.db.norm()
    }

    pub fn is_finite(&self) -> bool {
        linalg::is_finite(&self.dy) && linalg::is_finite(&self.db)
    }
}

impl std::ops::Add for GradientPair {
    type Output = GradientPair;
    fn add(self, rhs: GradientPair) -> GradientPair {
        GradientPair { dy: self.dy + rhs.dy, db: self.db + rhs.db }
    }
}

/// `A†·Π + Π·A + Q1 = 0`.
pub fn solve_costate1(a: &CMat, q1: &CMat) -> Result<CMat> {
    qsys::require_hurwitz(a, qsys::DEFAULT_HURWITZ_MARGIN)?;
    linalg::solve_lyapunov(&a.adjoint(), q1)
}

/// `(A⊗I + I⊗A)†·Π₂ + Π₂·(A⊗I + I⊗A) + Q2 = 0`.
pub fn solve_costate2(a: &CMat, q2: &CMat) -> Result<CMat> {
    qsys::require_hurwitz(a, qsys::DEFAULT_HURWITZ_MARGIN)?;
    let d = a.nrows();
    if q2.shape() != (d * d, d * d) {
        return Err(Error::Dimension(format!("Q2 is {:?}, expected {}²×{}²", q2.shape(), d, d)));
    }
    if q2.iter().all(|z| *z == linalg::ZERO) {
        return Ok(CMat::zeros(d * d, d * d));
    }
    moments::solve_kron_sum_lyapunov(&a.adjoint(), q2)
}

fn factor_dim(x: &CMat) -> Result<usize> {
    let n = x.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if !x.is_square() || d * d != n || d % 2 != 0 || d == 0 {
        return Err(Error::Dimension(format!(
            "partial trace needs a (2n)²×(2n)² operand, got {:?}",
            x.shape()
        )));
    }
    Ok(d)
}

/// Contracts the first Kronecker factor: `Tr₁(X)[k,l] = Σᵢ X[(i,k),(i,l)]`.
pub fn partial_trace_first(x: &CMat) -> Result<CMat> {
    let d = factor_dim(x)?;
    Ok(CMat::from_fn(d, d, |k, l| (0..d).map(|i| x[(i * d + k, i * d + l)]).sum()))
}

/// Contracts the second Kronecker factor: `Tr₂(X)[i,j] = Σₖ X[(i,k),(j,k)]`.
pub fn partial_trace_second(x: &CMat) -> Result<CMat> {
    let d = factor_dim(x)?;
    Ok(CMat::from_fn(d, d, |i, j| (0..d).map(|k| x[(i * d + k, j * d + k)]).sum()))
}

fn both_partial_traces(x: &CMat) -> Result<CMat> {
    Ok(partial_trace_first(x)? + partial_trace_second(x)?)
}

/// Maps the sensitivities `(G_A, U)` of `Re Tr(G_A†·dA) + Re Tr(U·dN)`, written in
/// real-coordinate form, to Wirtinger gradients in `(Y, B)`.
fn chain_to_yb(b: &CMat, g_a: &CMat, u: &CMat) -> Result<GradientPair> {
    let fw = ito_vacuum(b.ncols() / 2);
    let g_a_flat = flat(g_a)?;
    let b_flat_adj = flat(b)?.adjoint();
    let dy = (g_a - &g_a_flat).scale(0.25);
    let db = ((u + u.adjoint()) * b * fw).scale(0.5) - ((g_a + &g_a_flat) * b_flat_adj).scale(0.25);
    Ok(GradientPair { dy, db })
}

fn check_yb(y: &CMat, b: &CMat) -> Result<()> {
    if !y.is_square() || y.nrows() != b.nrows() || y.nrows() % 2 != 0 || b.ncols() % 2 != 0 {
        return Err(Error::Dimension(format!(
            "Y {:?} and B {:?} are not a doubled-up pair",
            y.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Gradient of `Re Tr(Q1·S1)` given its costate `Π`.
///
/// With `Ω = Π·S1` (Hermitian `Π`, `S1`): `dY = ½(Ω − Ω♭)`, `dB = Π·B·F_w − ½(Ω + Ω♭)·(B♭)†`.
pub fn grad_j1(y: &CMat, b: &CMat, pi: &CMat, s1: &CMat) -> Result<GradientPair> {
    check_yb(y, b)?;
    let g_a = (s1 * pi).adjoint() + pi * s1;
    chain_to_yb(b, &g_a, pi)
}

/// Gradient of `Re Tr(Q2·S2)` given its costate `Π₂` and converged moments.
///
/// Includes the dependence of the second-order source on `S1` and on `N`.
pub fn grad_j2(y: &CMat, b: &CMat, pi2: &CMat, s1: &CMat, s2: &CMat) -> Result<GradientPair> {
    check_yb(y, b)?;
    if pi2.iter().all(|z| *z == linalg::ZERO) {
        return Ok(GradientPair::zeros_like(y, b));
    }
    let a = qsys::build_drift(y, b)?;
    let fw = ito_vacuum(b.ncols() / 2);
    let noise = b * fw * b.adjoint();
    let (w_s1, w_n) = source_weights(pi2, &noise, s1)?;
    let pi_w = solve_costate1(&a, &w_s1)?;
    let k = both_partial_traces(&(s2 * pi2))?;
    let k_prime = both_partial_traces(&(pi2 * s2))?;
    let g_a = (s1 * &pi_w + k).adjoint() + &pi_w * s1 + k_prime;
    let u = pi_w + w_n;
    chain_to_yb(b, &g_a, &u)
}

/// Weights `(W, V)` with `Tr(Π₂·dR) = Tr(W·dS1) + Tr(V·dN)` for the source
/// `R = N⊗S1 + S1⊗N + M(N, S1)`.
fn source_weights(pi2: &CMat, noise: &CMat, s1: &CMat) -> Result<(CMat, CMat)> {
    let d = s1.nrows();
    let n = d / 2;
    let sg = |k: usize| (k + n) % d;
    let mut cx = CMat::zeros(d, d);
    let mut cn = CMat::zeros(d, d);
    for i in 0..d {
        for k in 0..d {
            let col = i * d + k;
            let sk = sg(k);
            for j in 0..d {
                let sj = sg(j);
                for l in 0..d {
                    let w = pi2[(j * d + l, col)];
                    if w == linalg::ZERO {
                        continue;
                    }
                    // N⊗S1 and S1⊗N
                    cn[(i, j)] += w * s1[(k, l)];
                    cx[(k, l)] += w * noise[(i, j)];
                    cx[(i, j)] += w * noise[(k, l)];
                    cn[(k, l)] += w * s1[(i, j)];
                    // Itô correction terms
                    cn[(i, sk)] += w * s1[(sj, l)];
                    cx[(sj, l)] += w * noise[(i, sk)];
                    cn[(i, l)] += w * s1[(sj, sk)];
                    cx[(sj, sk)] += w * noise[(i, l)];
                    cn[(sj, sk)] += w * s1[(i, l)];
                    cx[(i, l)] += w * noise[(sj, sk)];
                    cn[(sj, l)] += w * s1[(i, sk)];
                    cx[(i, sk)] += w * noise[(sj, l)];
                }
            }
        }
    }
    Ok((cx.transpose(), cn.transpose()))
}

pub fn solve_costates(a: &CMat, cm: &CostMatrices, mp: &MomentPair) -> Result<CostateSet> {
    let pi1 = solve_costate1(a, &cm.q1)?;
    let pi2 = solve_costate2(a, &cm.q2)?;
    let omega1 = &pi1 * &mp.s1;
    let omega2 = both_partial_traces(&(&pi2 * &mp.s2))?;
    Ok(CostateSet { pi1, pi2, omega1, omega2 })
}

/// `Re Tr(Q1·S1) + Re Tr(Q2·S2) + offset` for arbitrary `(Y, B)` with Hurwitz drift.
pub fn cost_of(y: &CMat, b: &CMat, cm: &CostMatrices) -> Result<f64> {
    let (j, _) = moments_and_cost(y, b, cm)?;
    Ok(j)
}

fn moments_and_cost(y: &CMat, b: &CMat, cm: &CostMatrices) -> Result<(f64, MomentPair)> {
    check_yb(y, b)?;
    let p = qsys::plant_from_yb(y, b)?;
    let mp = moments::steady_moments(&p)?;
    let (j1, j2) = crate::cost::cost_terms(&mp, cm);
    Ok((j1 + j2 + cm.offset, mp))
}

/// Cost and total Wirtinger gradient at `(Y, B)`.
pub fn cost_and_gradient(y: &CMat, b: &CMat, cm: &CostMatrices) -> Result<(f64, GradientPair)> {
    let (j, mp) = moments_and_cost(y, b, cm)?;
    let a = qsys::build_drift(y, b)?;
    let pi1 = solve_costate1(&a, &cm.q1)?;
    let mut g = grad_j1(y, b, &pi1, &mp.s1)?;
    if !cm.is_quadratic() {
        let pi2 = solve_costate2(&a, &cm.q2)?;
        g = g + grad_j2(y, b, &pi2, &mp.s1, &mp.s2)?;
    }
    if !g.is_finite() {
        return Err(Error::Numerical("gradient is not finite".into()));
    }
    Ok((j, g))
}

/// Central finite-difference Wirtinger gradient, `½(∂/∂Re + i·∂/∂Im)` per entry.
pub fn finite_difference_gradient(y: &CMat, b: &CMat, cm: &CostMatrices, step: f64) -> Result<GradientPair> {
    let probe = |which: usize, r: usize, k: usize, dz: num_complex::Complex64| -> Result<f64> {
        let (mut yp, mut bp, mut ym, mut bm) = (y.clone(), b.clone(), y.clone(), b.clone());
        if which == 0 {
            yp[(r, k)] += dz;
            ym[(r, k)] -= dz;
        } else {
            bp[(r, k)] += dz;
            bm[(r, k)] -= dz;
        }
        Ok((cost_of(&yp, &bp, cm)? - cost_of(&ym, &bm, cm)?) / (2.0 * step))
    };
    let mut out = GradientPair::zeros_like(y, b);
    for (which, target) in [(0usize, &mut out.dy), (1usize, &mut out.db)] {
        for r in 0..target.nrows() {
            for k in 0..target.ncols() {
                let d_re = probe(which, r, k, linalg::c(step, 0.0))?;
                let d_im = probe(which, r, k, linalg::c(0.0, step))?;
                target[(r, k)] = linalg::c(0.5 * d_re, 0.5 * d_im);
            }
        }
    }
    Ok(out)
}

/// `(‖ΔdY‖ + ‖ΔdB‖)/‖G_fd‖` between the adjoint gradient and central differences with step `1e-6`.
pub fn relative_fd_error(y: &CMat, b: &CMat, cm: &CostMatrices) -> Result<f64> {
    let (_, g) = cost_and_gradient(y, b, cm)?;
    let fd = finite_difference_gradient(y, b, cm, 1e-6)?;
    let diff = (&g.dy - &fd.dy).norm() + (&g.db - &fd.db).norm();
    Ok(diff / fd.norm().max(1e-12))
}
