//! Coherent H∞ synthesis on doubled-up plants, closed-loop assembly and H∞-norm evaluation.
//!
//! All transposes of the real-quadrature theory become conjugate transposes here. The
//! Riccati pair, for `E1 = D12†D12` and `E2 = D21D21†`:
//!
//! ```text
//! X:  F_x†X + XF_x + X(B1B1† − g²B2E1⁻¹B2†)X + g⁻²C1†(I − D12E1⁻¹D12†)C1 = 0,
//!     F_x = A − B2E1⁻¹D12†C1
//! Y:  F_yY + YF_y† + Y(g⁻²C1†C1 − C2†E2⁻¹C2)Y + B1(I − D21†E2⁻¹D21)B1† = 0,
//!     F_y = A − B1D21†E2⁻¹C2
//! ```
//!
//! with stabilizing solutions `X, Y ⪰ 0` and `ρ(YX) < 1`.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::cost::{real_energy, CostMatrices};
use crate::moments::{self, MomentPair};
use crate::qsys::{self, flat, QuantumPlant};
use serde::{Deserialize, Serialize};

/// Residual bound on accepted Riccati solutions, relative to `1 + ‖X‖`.
pub const RICCATI_TOL: f64 = 1e-8;

/// Statistics of the disturbance increments `dw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceModel {
    /// Independent vacuum-type channel, Itô matrix `diag(I, 0)`.
    #[default]
    Vacuum,
    /// Classical white noise, Itô matrix `I`.
    Classical,
}

impl DisturbanceModel {
    pub fn ito(self, n: usize) -> CMat {
        match self {
            Self::Vacuum => qsys::ito_vacuum(n),
            Self::Classical => linalg::eye(2 * n),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vacuum => "vacuum",
            Self::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedPlant {
    pub a: CMat,
    pub b: CMat,
    pub b1: CMat,
    pub b2: CMat,
    pub c1: CMat,
    pub c2: CMat,
    pub d12: CMat,
    pub d20: CMat,
    pub d21: CMat,
    /// Itô matrix of the disturbance increments `dw`.
    pub disturbance_ito: CMat,
    pub g: f64,
}

impl AugmentedPlant {
    /// `B1 = −αI`, `B2 = −I`, `C1 = C2 = D12 = D21 = I`, `D20 = 0`, with the
    /// disturbance statistics of `model`.
    pub fn disturbance_setup(p: &QuantumPlant, alpha: f64, g: f64, model: DisturbanceModel) -> Self {
        let d = p.a.nrows();
        let id = linalg::eye(d);
        Self {
            a: p.a.clone(),
            b: p.b.clone(),
            b1: id.scale(-alpha),
            b2: -id.clone(),
            c1: id.clone(),
            c2: id.clone(),
            d12: id.clone(),
            d20: CMat::zeros(d, p.b.ncols()),
            d21: id.clone(),
            disturbance_ito: model.ito(d / 2),
            g,
        }
    }

    pub fn with_gamma(&self, g: f64) -> Self {
        Self { g, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.nrows();
        let shape_err = |what: &str, m: &CMat| {
            Error::Dimension(format!("{what} has shape {:?}, inconsistent with a {d}-dimensional state", m.shape()))
        };
        if !self.a.is_square() || self.b.nrows() != d {
            return Err(shape_err("B", &self.b));
        }
        if self.b1.nrows() != d {
            return Err(shape_err("B1", &self.b1));
        }
        if self.b2.nrows() != d {
            return Err(shape_err("B2", &self.b2));
        }
        if self.c1.ncols() != d || self.d12.nrows() != self.c1.nrows() || self.d12.ncols() != self.b2.ncols() {
            return Err(shape_err("C1/D12", &self.c1));
        }
        if self.c2.ncols() != d
            || self.d21.nrows() != self.c2.nrows()
            || self.d21.ncols() != self.b1.ncols()
            || self.d20.shape() != (self.c2.nrows(), self.b.ncols())
        {
            return Err(shape_err("C2/D20/D21", &self.c2));
        }
        if self.disturbance_ito.shape() != (self.b1.ncols(), self.b1.ncols()) {
            return Err(shape_err("disturbance Itô matrix", &self.disturbance_ito));
        }
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::Configuration(format!("attenuation level g = {} must be positive", self.g)));
        }
        self.e1_inv()?;
        self.e2_inv()?;
        Ok(())
    }

    fn e1_inv(&self) -> Result<CMat> {
        invert(&(self.d12.adjoint() * &self.d12))
            .ok_or_else(|| Error::Configuration("E1 = D12†D12 is singular".into()))
    }

    fn e2_inv(&self) -> Result<CMat> {
        invert(&(&self.d21 * self.d21.adjoint()))
            .ok_or_else(|| Error::Configuration("E2 = D21D21† is singular".into()))
    }
}

fn invert(m: &CMat) -> Option<CMat> {
    let inv = m.clone().try_inverse()?;
    let cond = m.norm() * inv.norm();
    if !cond.is_finite() || cond > 1e14 {
        return None;
    }
    Some(inv)
}

/// Frobenius residual of `F†X + XF + XRX + Q`.
pub fn care_residual(f: &CMat, r: &CMat, q: &CMat, x: &CMat) -> f64 {
    (f.adjoint() * x + x * f + x * r * x + q).norm()
}

/// Sign of a matrix with no imaginary-axis eigenvalues, by scaled Newton iteration.
pub fn matrix_sign(h: &CMat) -> Result<CMat> {
    let dim = h.nrows();
    let mut z = h.clone();
    for _ in 0..100 {
        let lu = z.clone().lu();
        let log_det: f64 = (0..dim).map(|i| lu.u()[(i, i)].norm().ln()).sum();
        if !log_det.is_finite() {
            return Err(Error::Numerical("sign iteration hit a singular iterate".into()));
        }
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numerical("sign iteration hit a singular iterate".into()))?;
        let mu = (-log_det / dim as f64).exp();
        let next = (z.scale(mu) + inv.scale(1.0 / mu)).scale(0.5);
        let delta = (&next - &z).norm();
        z = next;
        if !linalg::is_finite(&z) {
            return Err(Error::Numerical("sign iteration diverged".into()));
        }
        if delta <= 1e-13 * z.norm() {
            return Ok(z);
        }
    }
    Err(Error::Numerical("sign iteration did not converge".into()))
}

/// Stabilizing Hermitian solution of `F†X + XF + XRX + Q = 0` (`F + RX` Hurwitz).
///
/// Sign-function solve of the Hamiltonian `[[F, R], [−Q, −F†]]`, then Newton refinement.
/// Fails when the Hamiltonian has imaginary-axis eigenvalues or the refined solution
/// is not stabilizing.
pub fn solve_care(f: &CMat, r: &CMat, q: &CMat) -> std::result::Result<CMat, String> {
    let d = f.nrows();
    let mut h = CMat::zeros(2 * d, 2 * d);
    h.view_mut((0, 0), (d, d)).copy_from(f);
    h.view_mut((0, d), (d, d)).copy_from(r);
    h.view_mut((d, 0), (d, d)).copy_from(&(-q));
    h.view_mut((d, d), (d, d)).copy_from(&(-f.adjoint()));
    let w = matrix_sign(&h).map_err(|e| e.to_string())?;
    if linalg::trace(&w).norm() > 0.5 {
        return Err("Hamiltonian stable subspace has the wrong dimension".into());
    }
    let id = linalg::eye(d);
    let mut lhs = CMat::zeros(2 * d, d);
    lhs.view_mut((0, 0), (d, d)).copy_from(&w.view((0, d), (d, d)));
    lhs.view_mut((d, 0), (d, d)).copy_from(&(w.view((d, d), (d, d)) + &id));
    let mut rhs = CMat::zeros(2 * d, d);
    rhs.view_mut((0, 0), (d, d)).copy_from(&(-(w.view((0, 0), (d, d)) + &id)));
    rhs.view_mut((d, 0), (d, d)).copy_from(&(-w.view((d, 0), (d, d))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| format!("least-squares solve failed: {e}"))?;
    let mut x = linalg::hermitize(&x);
    // Newton: (F + RX)†Δ + Δ(F + RX) + Res(X) = 0
    let mut res = care_residual(f, r, q, &x);
    for _ in 0..20 {
        if res <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
        let fk = f + r * &x;
        let residual = f.adjoint() * &x + &x * f + &x * r * &x + q;
        let delta = match linalg::solve_lyapunov(&fk.adjoint(), &residual) {
            Ok(dx) => dx,
            Err(_) => break,
        };
        let cand = linalg::hermitize(&(&x + delta));
        let cand_res = care_residual(f, r, q, &cand);
        if !(cand_res < res) {
            break;
        }
        x = cand;
        res = cand_res;
    }
    if !linalg::is_finite(&x) {
        return Err("non-finite Riccati solution".into());
    }
    if res > RICCATI_TOL * (1.0 + x.norm()) {
        return Err(format!("Riccati residual {res:.2e} above tolerance"));
    }
    if !qsys::is_hurwitz_with(&(f + r * &x), 0.0) {
        return Err("Riccati solution is not stabilizing".into());
    }
    Ok(x)
}

/// Solutions of the X and Y equations together with their residuals.
#[derive(Debug, Clone)]
pub struct RiccatiPair {
    pub x: CMat,
    pub y: CMat,
    pub residual_x: f64,
    pub residual_y: f64,
}

/// Coefficients `(F, R, Q)` of the X equation in the form `F†X + XF + XRX + Q = 0`.
pub fn x_equation(ap: &AugmentedPlant) -> Result<(CMat, CMat, CMat)> {
    let e1i = ap.e1_inv()?;
    let d = ap.a.nrows();
    let g2 = ap.g * ap.g;
    let f = &ap.a - &ap.b2 * &e1i * ap.d12.adjoint() * &ap.c1;
    let r = &ap.b1 * ap.b1.adjoint() - (&ap.b2 * &e1i * ap.b2.adjoint()).scale(g2);
    let pz = ap.d12.nrows();
    let q = (ap.c1.adjoint() * (linalg::eye(pz) - &ap.d12 * &e1i * ap.d12.adjoint()) * &ap.c1).scale(1.0 / g2);
    debug_assert_eq!(f.nrows(), d);
    Ok((f, r, q))
}

/// Coefficients of the Y equation, written as `G†Y + YG + YRY + Q = 0` with `G = F_y†`.
pub fn y_equation(ap: &AugmentedPlant) -> Result<(CMat, CMat, CMat)> {
    let e2i = ap.e2_inv()?;
    let g2 = ap.g * ap.g;
    let fy = &ap.a - &ap.b1 * ap.d21.adjoint() * &e2i * &ap.c2;
    let r = (ap.c1.adjoint() * &ap.c1).scale(1.0 / g2) - ap.c2.adjoint() * &e2i * &ap.c2;
    let nw = ap.d21.ncols();
    let q = &ap.b1 * (linalg::eye(nw) - ap.d21.adjoint() * &e2i * &ap.d21) * ap.b1.adjoint();
    Ok((fy.adjoint(), r, q))
}

pub fn solve_riccati_pair(ap: &AugmentedPlant) -> Result<RiccatiPair> {
    ap.validate()?;
    let infeasible = |which: &str, reason: String| Error::InfeasibleGamma { gamma: ap.g, reason: format!("{which}: {reason}") };
    let (fx, rx, qx) = x_equation(ap)?;
    let x = solve_care(&fx, &rx, &qx).map_err(|r| infeasible("X equation", r))?;
    let (fy, ry, qy) = y_equation(ap)?;
    let y = solve_care(&fy, &ry, &qy).map_err(|r| infeasible("Y equation", r))?;
    for (name, m) in [("X", &x), ("Y", &y)] {
        let min_ev = linalg::hermitian_eigenvalues(m).first().copied().unwrap_or(0.0);
        if min_ev < -1e-8 * (1.0 + m.norm()) {
            return Err(infeasible(name, format!("solution is indefinite (λ_min = {min_ev:.3e})")));
        }
    }
    let rho = linalg::spectral_radius(&(&y * &x))?;
    if rho >= 1.0 {
        return Err(infeasible("coupling", format!("ρ(YX) = {rho:.6} ≥ 1")));
    }
    Ok(RiccatiPair {
        residual_x: care_residual(&fx, &rx, &qx, &x),
        residual_y: care_residual(&fy, &ry, &qy, &y),
        x,
        y,
    })
}

#[derive(Debug, Clone)]
pub struct ControllerRealization {
    pub a_k: CMat,
    pub b_k: CMat,
    pub c_k: CMat,
    pub b_k0: CMat,
    pub b_k1: CMat,
}

impl ControllerRealization {
    /// `A_K + A_K♭ + B_K·B_K♭ + B_k1·B_k1♭`, zero for a physically realizable controller.
    pub fn pr_residual(&self) -> Result<f64> {
        let mut r = &self.a_k + flat(&self.a_k)?;
        if self.b_k.ncols() % 2 == 0 {
            r += &self.b_k * flat(&self.b_k)?;
        }
        if self.b_k1.ncols() > 0 {
            r += &self.b_k1 * flat(&self.b_k1)?;
        }
        Ok(r.norm())
    }
}

/// Central controller from a solved Riccati pair. With `fully_quantum`, `B_k1` is chosen so the
/// controller satisfies the PR identity; otherwise `B_k0 = B_k1 = 0`.
pub fn synthesize_controller(ap: &AugmentedPlant, pair: &RiccatiPair, fully_quantum: bool) -> Result<ControllerRealization> {
    let e1i = ap.e1_inv()?;
    let e2i = ap.e2_inv()?;
    let d = ap.a.nrows();
    let (x, y) = (&pair.x, &pair.y);
    let coupling = linalg::eye(d) - y * x;
    let coupling_inv = coupling
        .clone()
        .try_inverse()
        .filter(|inv| (coupling.norm() * inv.norm()) < 1e12)
        .ok_or_else(|| Error::Coupling("I − YX is singular".into()))?;
    let g2 = ap.g * ap.g;
    let c_k = -(&e1i * ((ap.b2.adjoint() * x).scale(g2) + ap.d12.adjoint() * &ap.c1));
    let b_k = &coupling_inv * (y * ap.c2.adjoint() + &ap.b1 * ap.d21.adjoint()) * &e2i;
    let a_k = &ap.a + &ap.b2 * &c_k - &b_k * &ap.c2 + (&ap.b1 - &b_k * &ap.d21) * ap.b1.adjoint() * x;
    let b_k0 = CMat::zeros(ap.b2.ncols(), 0);
    let mut k = ControllerRealization { a_k, b_k, c_k, b_k0, b_k1: CMat::zeros(d, 0) };
    if fully_quantum {
        k.b_k1 = pr_completion(&k)?;
        k.b_k0 = CMat::zeros(ap.b2.ncols(), k.b_k1.ncols());
    }
    Ok(k)
}

/// `B_k1` with `B_k1·J·B_k1† = −(A_K·J + J·A_K† + B_K·J·B_K†)`, from the eigendecomposition
/// of the right side; positive eigenvalues go to the `+I` block of `J`.
fn pr_completion(k: &ControllerRealization) -> Result<CMat> {
    let d = k.a_k.nrows();
    let jd = qsys::structure_j(d / 2);
    let mut target = &k.a_k * &jd + &jd * k.a_k.adjoint();
    if k.b_k.ncols() % 2 == 0 && k.b_k.ncols() > 0 {
        let jb = qsys::structure_j(k.b_k.ncols() / 2);
        target += &k.b_k * jb * k.b_k.adjoint();
    }
    let target = linalg::hermitize(&(-target));
    let eig = target.clone().symmetric_eigen();
    let tol = 1e-13 * (1.0 + target.norm());
    let pos: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let neg: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] < -tol).collect();
    let half = pos.len().max(neg.len()).max(1);
    let mut b = CMat::zeros(d, 2 * half);
    for (slot, &i) in pos.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        b.set_column(slot, &eig.eigenvectors.column(i).scale(s));
    }
    for (slot, &i) in neg.iter().enumerate() {
        let s = (-eig.eigenvalues[i]).sqrt();
        b.set_column(half + slot, &eig.eigenvectors.column(i).scale(s));
    }
    Ok(b)
}

/// Closed loop of plant and controller in the state `η = (ν, ξ)`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a: CMat,
    /// Disturbance input.
    pub b: CMat,
    /// Vacuum inputs `(dW, dW_k)`.
    pub g: CMat,
    pub c: CMat,
    pub h: CMat,
}

fn blocks(rows: &[&[&CMat]]) -> CMat {
    let heights: Vec<usize> = rows.iter().map(|r| r.iter().map(|m| m.nrows()).max().unwrap_or(0)).collect();
    let widths: Vec<usize> = (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].ncols()).max().unwrap_or(0)).collect();
    let mut out = CMat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (i, row) in rows.iter().enumerate() {
        let mut c0 = 0;
        for (j, m) in row.iter().enumerate() {
            out.view_mut((r0, c0), m.shape()).copy_from(*m);
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    out
}

/// Block assembly without a stability check.
pub fn closed_loop_blocks(ap: &AugmentedPlant, k: &ControllerRealization) -> ClosedLoop {
    let d = ap.a.nrows();
    let nk = k.b_k1.ncols();
    let a = blocks(&[&[&ap.a, &(&ap.b2 * &k.c_k)], &[&(&k.b_k * &ap.c2), &k.a_k]]);
    let b = blocks(&[&[&ap.b1], &[&(&k.b_k * &ap.d21)]]);
    let g = blocks(&[&[&ap.b, &CMat::zeros(d, nk)], &[&(&k.b_k * &ap.d20), &k.b_k1]]);
    let c = blocks(&[&[&ap.c1, &(&ap.d12 * &k.c_k)]]);
    let h = blocks(&[&[&CMat::zeros(ap.c1.nrows(), ap.b.ncols()), &(&ap.d12 * &k.b_k0)]]);
    ClosedLoop { a, b, g, c, h }
}

pub fn assemble_closed_loop(ap: &AugmentedPlant, k: &ControllerRealization) -> Result<ClosedLoop> {
    let cl = closed_loop_blocks(ap, k);
    let abscissa = linalg::spectral_abscissa(&cl.a)?;
    if !(abscissa < -qsys::DEFAULT_HURWITZ_MARGIN) {
        return Err(Error::SynthesisRejected(format!("closed loop is not Hurwitz (max Re λ = {abscissa:.3e})")));
    }
    Ok(cl)
}

fn max_singular_value(m: &CMat) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `σ_max(C(iωI − A)⁻¹B)`.
pub fn frequency_gain(a: &CMat, b: &CMat, c: &CMat, omega: f64) -> Result<f64> {
    let d = a.nrows();
    let m = linalg::eye(d) * linalg::c(0.0, omega) - a;
    let sol = m.lu().solve(b).ok_or_else(|| Error::Numerical("singular resolvent".into()))?;
    Ok(max_singular_value(&(c * sol)))
}

fn has_imaginary_eigenvalue(h: &CMat) -> Result<bool> {
    let scale = h.norm().max(1.0);
    Ok(linalg::eigenvalues(h)?.iter().any(|z| z.re.abs() <= 1e-8 * scale))
}

/// H∞ norm of `C(sI − A)⁻¹B` by bisection on imaginary-axis eigenvalues of
/// `[[A, BB†/γ²], [−C†C, −A†]]`, to relative tolerance `rtol`.
pub fn hinf_norm_of(a: &CMat, b: &CMat, c: &CMat, rtol: f64) -> Result<f64> {
    qsys::require_hurwitz(a, qsys::DEFAULT_HURWITZ_MARGIN)?;
    let d = a.nrows();
    let bb = b * b.adjoint();
    let cc = c.adjoint() * c;
    let ham = |gamma: f64| {
        let mut h = CMat::zeros(2 * d, 2 * d);
        h.view_mut((0, 0), (d, d)).copy_from(a);
        h.view_mut((0, d), (d, d)).copy_from(&bb.scale(1.0 / (gamma * gamma)));
        h.view_mut((d, 0), (d, d)).copy_from(&(-&cc));
        h.view_mut((d, d), (d, d)).copy_from(&(-a.adjoint()));
        h
    };
    // lower bound from the gain at zero and at the pole frequencies
    let mut lo = frequency_gain(a, b, c, 0.0)?;
    for z in linalg::eigenvalues(a)? {
        lo = lo.max(frequency_gain(a, b, c, z.im)?);
    }
    if lo == 0.0 {
        return Ok(0.0);
    }
    let mut hi = lo * 2.0;
    while has_imaginary_eigenvalue(&ham(hi))? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical("H∞ norm bracket diverged".into()));
        }
    }
    while hi - lo > rtol * lo {
        let mid = 0.5 * (lo + hi);
        if has_imaginary_eigenvalue(&ham(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `‖T_{dw→dz}‖∞` of a closed loop.
pub fn hinf_norm(cl: &ClosedLoop) -> Result<f64> {
    hinf_norm_of(&cl.a, &cl.b, &cl.c, 1e-6)
}

/// Riccati pair, controller and closed loop at the plant's level `g`.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub pair: RiccatiPair,
    pub controller: ControllerRealization,
    pub closed_loop: ClosedLoop,
    pub norm: f64,
}

pub fn synthesize(ap: &AugmentedPlant, fully_quantum: bool) -> Result<Synthesis> {
    let pair = solve_riccati_pair(ap)?;
    let controller = synthesize_controller(ap, &pair, fully_quantum)?;
    let closed_loop = assemble_closed_loop(ap, &controller)?;
    let norm = hinf_norm(&closed_loop)?;
    if !(norm < ap.g) {
        return Err(Error::SynthesisRejected(format!("closed-loop H∞ norm {norm:.6} is not below g = {}", ap.g)));
    }
    Ok(Synthesis { pair, controller, closed_loop, norm })
}

pub fn is_feasible(ap: &AugmentedPlant) -> bool {
    solve_riccati_pair(ap).is_ok()
}

/// Smallest feasible level in `[lo, hi]` to relative tolerance `rtol`, by bisection.
pub fn minimal_gamma(ap: &AugmentedPlant, lo: f64, hi: f64, rtol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if !is_feasible(&ap.with_gamma(hi)) {
        return Err(Error::InfeasibleGamma { gamma: hi, reason: "upper end of the search bracket is infeasible".into() });
    }
    if is_feasible(&ap.with_gamma(lo)) {
        return Ok(lo);
    }
    while hi - lo > rtol * hi {
        let mid = 0.5 * (lo + hi);
        if is_feasible(&ap.with_gamma(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Attenuation level used for each sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaChoice {
    Fixed(f64),
    /// `margin × γ*` with `γ*` the smallest feasible level at that α.
    Auto { margin: f64 },
}

impl Default for GammaChoice {
    fn default() -> Self {
        Self::Auto { margin: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub gamma: GammaChoice,
    pub disturbance: DisturbanceModel,
    pub fully_quantum: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Configuration("empty α grid".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::Configuration(format!("disturbance scale α = {a} must be finite and non-negative")));
        }
        match self.gamma {
            GammaChoice::Fixed(g) if !(g > 0.0 && g.is_finite()) => {
                Err(Error::Configuration(format!("attenuation level g = {g} must be positive")))
            }
            GammaChoice::Auto { margin } if !(margin > 1.0 && margin.is_finite()) => {
                Err(Error::Configuration(format!("γ margin {margin} must exceed 1")))
            }
            _ => Ok(()),
        }
    }
}

/// One α of the sweep. Costs are `None` when the corresponding loop failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub cost_open: Option<f64>,
    pub cost_closed: Option<f64>,
    pub hinf_norm: Option<f64>,
    pub stable_open: bool,
    pub stable_closed: bool,
    pub failure: Option<String>,
}

pub const SWEEP_CSV_HEADER: &str = "alpha,cost_open,cost_closed,hinf_norm,stable_open,stable_closed,gamma";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.17e}"));
        format!(
            "{:.17e},{},{},{},{},{},{}",
            self.alpha,
            f(self.cost_open),
            f(self.cost_closed),
            f(self.hinf_norm),
            self.stable_open,
            self.stable_closed,
            f(self.gamma)
        )
    }
}

/// Open-loop energy with the disturbance appended as an extra noise input `[B | B1]`.
pub fn open_loop_cost(ap: &AugmentedPlant, cm: &CostMatrices) -> Result<f64> {
    let n_in = ap.b.ncols() / 2;
    let noise = &ap.b * qsys::ito_vacuum(n_in) * ap.b.adjoint() + &ap.b1 * &ap.disturbance_ito * ap.b1.adjoint();
    real_energy(&moments::steady_moments_with_noise(&ap.a, &noise)?, cm)
}

/// Reorders a block vector `(a, a#, ξ, ξ#)` to `(a, ξ, a#, ξ#)` so the closed-loop
/// state is itself doubled-up.
fn interleave_permutation(n: usize, nk: usize) -> Vec<usize> {
    (0..n).chain(2 * n..2 * n + nk).chain(n..2 * n).chain(2 * n + nk..2 * n + 2 * nk).collect()
}

fn permute(m: &CMat, perm: &[usize]) -> CMat {
    CMat::from_fn(perm.len(), perm.len(), |i, j| m[(perm[i], perm[j])])
}

/// Plant energy in closed loop: full first and second moments of `η = (ν, ξ)`,
/// restricted to the plant indices.
pub fn closed_loop_cost(ap: &AugmentedPlant, k: &ControllerRealization, cl: &ClosedLoop, cm: &CostMatrices) -> Result<f64> {
    let n = ap.a.nrows() / 2;
    let nk = k.a_k.nrows() / 2;
    let n_in = ap.b.ncols() / 2;
    let mut fw = CMat::zeros(cl.g.ncols(), cl.g.ncols());
    fw.view_mut((0, 0), (2 * n_in, 2 * n_in)).copy_from(&qsys::ito_vacuum(n_in));
    let kv = k.b_k1.ncols();
    if kv > 0 {
        fw.view_mut((2 * n_in, 2 * n_in), (kv, kv)).copy_from(&qsys::ito_vacuum(kv / 2));
    }
    let noise = &cl.g * fw * cl.g.adjoint() + &cl.b * &ap.disturbance_ito * cl.b.adjoint();
    let perm = interleave_permutation(n, nk);
    let full = moments::steady_moments_with_noise(&permute(&cl.a, &perm), &permute(&noise, &perm))?;
    let dim = 2 * (n + nk);
    let plant: Vec<usize> = (0..n).chain(n + nk..2 * n + nk).collect();
    let s1 = CMat::from_fn(2 * n, 2 * n, |i, j| full.s1[(plant[i], plant[j])]);
    let s2 = CMat::from_fn(4 * n * n, 4 * n * n, |r, c| {
        let (i, k) = (plant[r / (2 * n)], plant[r % (2 * n)]);
        let (j, l) = (plant[c / (2 * n)], plant[c % (2 * n)]);
        full.s2[(i * dim + k, j * dim + l)]
    });
    real_energy(&MomentPair { s1, s2 }, cm)
}

fn sweep_row(p: &QuantumPlant, cm: &CostMatrices, cfg: &SweepConfig, alpha: f64) -> SweepRow {
    let base = AugmentedPlant::disturbance_setup(p, alpha, 1.0, cfg.disturbance);
    let mut row = SweepRow {
        alpha,
        gamma: None,
        cost_open: None,
        cost_closed: None,
        hinf_norm: None,
        stable_open: false,
        stable_closed: false,
        failure: None,
    };
    match open_loop_cost(&base, cm) {
        Ok(j) => {
            row.cost_open = Some(j);
            row.stable_open = true;
        }
        Err(e) => row.failure = Some(format!("open loop: {e}")),
    }
    let closed = (|| -> Result<(f64, Synthesis)> {
        let g = match cfg.gamma {
            GammaChoice::Fixed(g) => g,
            GammaChoice::Auto { margin } => margin * minimal_gamma(&base, 1e-6, 1e6, 1e-6)?,
        };
        let ap = base.with_gamma(g);
        let syn = synthesize(&ap, cfg.fully_quantum)?;
        Ok((g, syn))
    })();
    match closed {
        Ok((g, syn)) => {
            row.gamma = Some(g);
            row.hinf_norm = Some(syn.norm);
            row.stable_closed = true;
            match closed_loop_cost(&base.with_gamma(g), &syn.controller, &syn.closed_loop, cm) {
                Ok(j) => row.cost_closed = Some(j),
                Err(e) => row.failure = Some(format!("closed-loop cost: {e}")),
            }
        }
        Err(e) => row.failure = Some(format!("synthesis: {e}")),
    }
    row
}

/// Open- versus closed-loop plant energy over the α grid. Failures are recorded
/// per row; only an invalid configuration aborts.
pub fn disturbance_sweep(p: &QuantumPlant, cm: &CostMatrices, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    Ok(cfg.alphas.iter().map(|&a| sweep_row(p, cm, cfg, a)).collect())
}
