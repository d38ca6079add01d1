//! Truncated Fock-space Lindblad oracle for small plants.
//!
//! The plant's quadratic Hamiltonian `H = ½ν†Mν` and couplings `L = C₋a + C₊a#`
//! are represented as dense matrices on `N^n` number states. The steady state is
//! the fixed point of `ρ ↦ S(Σ LρL† + sρ)`, where `S` inverts
//! `X ↦ −(K_s X + X K_s†)` with `K_s = −iH − ½ΣL†L − (s/2)I`; a fixed point of
//! this map is exactly a zero of the Lindbladian. A dense superoperator with
//! nullspace extraction is kept for small spaces as a cross-check.

use num_complex::Complex64;

use crate::cost::SecondQuantizedHamiltonian;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::qsys::QuantumPlant;

pub const MIN_CUTOFF: usize = 8;
/// Largest Hilbert-space dimension squared (superoperator axis) accepted at all.
pub const MAX_SUPER_AXIS: usize = 1_000_000;
/// Largest superoperator axis for the dense nullspace route.
pub const MAX_DENSE_AXIS: usize = 1024;
pub const STEADY_TOL: f64 = 1e-9;
/// Coherent-generator scale of random plants whose occupations stay small enough
/// for cutoff 12 on two modes.
pub const ORACLE_SCALE: f64 = 0.15;
pub const ANDERSON_DEPTH: usize = 8;
const MAX_STEADY_ITERS: usize = 5000;

#[derive(Debug, Clone)]
pub struct FockSpace {
    pub n_modes: usize,
    pub cutoff: usize,
    pub dim: usize,
    pub annihilators: Vec<CMat>,
}

impl FockSpace {
    pub fn new(n_modes: usize, cutoff: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Validation("Fock space needs at least one mode".into()));
        }
        if cutoff < MIN_CUTOFF {
            return Err(Error::Validation(format!("cutoff {cutoff} below minimum {MIN_CUTOFF}")));
        }
        let dim = cutoff
            .checked_pow(n_modes as u32)
            .filter(|d| d.checked_mul(*d).is_some_and(|dd| dd <= MAX_SUPER_AXIS))
            .ok_or_else(|| {
                Error::MemoryGuard(format!("{n_modes} modes at cutoff {cutoff} exceed {MAX_SUPER_AXIS} superoperator entries per axis"))
            })?;
        let single = CMat::from_fn(cutoff, cutoff, |r, col| if col == r + 1 { c((col as f64).sqrt(), 0.0) } else { c(0.0, 0.0) });
        // mode 0 is the most significant tensor factor
        let annihilators = (0..n_modes)
            .map(|k| {
                let left = linalg::eye(cutoff.pow(k as u32));
                let right = linalg::eye(cutoff.pow((n_modes - k - 1) as u32));
                linalg::kron(&linalg::kron(&left, &single), &right)
            })
            .collect();
        Ok(Self { n_modes, cutoff, dim, annihilators })
    }

    pub fn a(&self, k: usize) -> &CMat {
        &self.annihilators[k]
    }

    pub fn number(&self, k: usize) -> CMat {
        self.a(k).adjoint() * self.a(k)
    }

    /// `ν_j` for `j < n` is `a_j`, otherwise `a_{j−n}†`.
    fn nu(&self, j: usize) -> CMat {
        if j < self.n_modes {
            self.a(j).clone()
        } else {
            self.a(j - self.n_modes).adjoint()
        }
    }

    /// Diagonal state with weights `e^{−2·total number}`.
    pub fn low_temperature(&self) -> CMat {
        let total = (0..self.n_modes).fold(CMat::zeros(self.dim, self.dim), |acc, k| acc + self.number(k));
        let mut rho = CMat::from_diagonal(&total.diagonal().map(|n| c((-2.0 * n.re).exp(), 0.0)));
        let tr = linalg::trace(&rho);
        rho /= tr;
        rho
    }

    pub fn vacuum(&self) -> CMat {
        let mut rho = CMat::zeros(self.dim, self.dim);
        rho[(0, 0)] = c(1.0, 0.0);
        rho
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedLindbladian {
    pub space: FockSpace,
    pub hamiltonian: CMat,
    pub jumps: Vec<CMat>,
    /// `Σ L†L`, formed from the truncated jump matrices so the generator is trace-annihilating.
    decay: CMat,
}

impl TruncatedLindbladian {
    pub fn new(space: FockSpace, hamiltonian: CMat, jumps: Vec<CMat>) -> Result<Self> {
        let d = space.dim;
        if hamiltonian.shape() != (d, d) || jumps.iter().any(|l| l.shape() != (d, d)) {
            return Err(Error::Dimension(format!("operators must be {d}×{d}")));
        }
        let decay = jumps.iter().fold(CMat::zeros(d, d), |acc, l| acc + l.adjoint() * l);
        Ok(Self { space, hamiltonian: linalg::hermitize(&hamiltonian), jumps, decay })
    }

    /// `H = a†Ωa`, `L = Ca`.
    pub fn build(omega: &CMat, coupling: &CMat, cutoff: usize) -> Result<Self> {
        let n = omega.nrows();
        if !omega.is_square() || coupling.ncols() != n {
            return Err(Error::Dimension("Ω must be n×n and C must be m×n".into()));
        }
        if linalg::hermitian_defect(omega) > 1e-12 {
            return Err(Error::Validation("Ω is not Hermitian".into()));
        }
        let space = FockSpace::new(n, cutoff)?;
        let d = space.dim;
        let mut h = CMat::zeros(d, d);
        for i in 0..n {
            for j in 0..n {
                if omega[(i, j)] != c(0.0, 0.0) {
                    h += space.a(i).adjoint() * space.a(j) * omega[(i, j)];
                }
            }
        }
        let jumps = (0..coupling.nrows())
            .map(|k| (0..n).fold(CMat::zeros(d, d), |acc, j| acc + space.a(j) * coupling[(k, j)]))
            .collect();
        Self::new(space, h, jumps)
    }

    /// Hamiltonian and couplings recovered from a doubled-up plant.
    pub fn from_plant(p: &QuantumPlant, cutoff: usize) -> Result<Self> {
        let (m, coupling) = p.slh_matrices()?;
        let n = p.n_modes();
        let space = FockSpace::new(n, cutoff)?;
        let d = space.dim;
        let nus: Vec<CMat> = (0..2 * n).map(|j| space.nu(j)).collect();
        // normal-ordered: a_k a_l† is replaced by a_l† a_k, dropping the constant,
        // since the truncated product differs from a_l†a_k + δ at the top level
        let mut h = CMat::zeros(d, d);
        for i in 0..2 * n {
            for j in 0..2 * n {
                if m[(i, j)].norm() == 0.0 {
                    continue;
                }
                let term = if i >= n && j >= n {
                    space.a(j - n).adjoint() * space.a(i - n)
                } else {
                    nus[i].adjoint() * &nus[j]
                };
                h += term * (m[(i, j)] * 0.5);
            }
        }
        let jumps = (0..p.n_inputs())
            .map(|k| (0..2 * n).fold(CMat::zeros(d, d), |acc, j| acc + &nus[j] * coupling[(k, j)]))
            .collect();
        Self::new(space, h, jumps)
    }

    fn effective(&self) -> CMat {
        self.hamiltonian.map(|z| z * Complex64::new(0.0, -1.0)) - self.decay.scale(0.5)
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let k = self.effective();
        let mut out = &k * rho + rho * k.adjoint();
        for l in &self.jumps {
            out += l * rho * l.adjoint();
        }
        out
    }

    /// Column-stacked superoperator, `vec(AXB) = (Bᵀ⊗A)vec(X)`.
    pub fn dense_superoperator(&self) -> Result<CMat> {
        let d = self.space.dim;
        if d * d > MAX_DENSE_AXIS {
            return Err(Error::MemoryGuard(format!("dense superoperator axis {} exceeds {MAX_DENSE_AXIS}", d * d)));
        }
        let id = linalg::eye(d);
        let k = self.effective();
        let mut sup = linalg::kron(&id, &k) + linalg::kron(&k.conjugate(), &id);
        for l in &self.jumps {
            sup += linalg::kron(&l.conjugate(), l);
        }
        Ok(sup)
    }

    pub fn residual(&self, rho: &CMat) -> f64 {
        self.apply(rho).norm()
    }

    /// Steady state from the dense nullspace (smallest singular vector).
    pub fn steady_state_dense(&self) -> Result<CMat> {
        let sup = self.dense_superoperator()?;
        let d = self.space.dim;
        let svd = sup.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return right vectors".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let scale = svd.singular_values.max().max(1.0);
        if svd.singular_values[order[1]] <= 1e-8 * scale {
            return Err(Error::DegenerateSteadyState(format!(
                "second-smallest singular value {:.3e}",
                svd.singular_values[order[1]]
            )));
        }
        let v = v_t.row(order[0]).adjoint();
        let rho = CMat::from_fn(d, d, |i, j| v[j * d + i]);
        self.finish(rho)
    }

    /// Steady state by the shifted fixed-point iteration, started from both the
    /// vacuum and a full-rank Gibbs-like state `∝ e^{−N}`; disagreement signals a
    /// degenerate kernel.
    pub fn steady_state(&self) -> Result<CMat> {
        let from_vacuum = self.iterate(self.space.vacuum())?;
        let from_mixed = self.iterate(self.space.low_temperature())?;
        let gap = (&from_vacuum - &from_mixed).norm();
        if gap > 1e-6 {
            return Err(Error::DegenerateSteadyState(format!("starts converge to states {gap:.3e} apart")));
        }
        Ok(from_vacuum)
    }

    /// Anderson-accelerated fixed-point iteration (depth [`ANDERSON_DEPTH`]).
    fn iterate(&self, mut rho: CMat) -> Result<CMat> {
        let d = self.space.dim;
        let shift = 0.2 + self.decay.norm() / (d as f64).sqrt() * 0.1;
        let ks = self.effective() - linalg::eye(d).scale(0.5 * shift);
        let (u, t) = linalg::schur(&ks)?;
        let map = |rho: &CMat| -> Result<CMat> {
            let mut src = rho.scale(shift);
            for l in &self.jumps {
                src += l * rho * l.adjoint();
            }
            normalize(linalg::hermitize(&linalg::solve_lyapunov_schur(&u, &t, &src)?))
        };
        let mut history: Vec<(CMat, CMat)> = Vec::with_capacity(ANDERSON_DEPTH + 1);
        for _ in 0..MAX_STEADY_ITERS {
            let g = map(&rho)?;
            let f = &g - &rho;
            if f.norm() < 1e-13 {
                let rho = normalize(linalg::hermitize(&g))?;
                if self.residual(&rho) <= STEADY_TOL {
                    return self.finish(rho);
                }
            }
            history.push((g.clone(), f.clone()));
            if history.len() > ANDERSON_DEPTH + 1 {
                history.remove(0);
            }
            rho = if history.len() < 2 { g } else { anderson_mix(&history)? };
        }
        Err(Error::Numerical(format!("steady-state iteration stalled at residual {:.3e}", self.residual(&rho))))
    }

    fn finish(&self, rho: CMat) -> Result<CMat> {
        let rho = normalize(linalg::hermitize(&rho))?;
        let res = self.residual(&rho);
        if res > STEADY_TOL {
            return Err(Error::Numerical(format!("steady-state residual {res:.3e} above {STEADY_TOL:e}")));
        }
        let min_ev = linalg::hermitian_eigenvalues(&rho).first().copied().unwrap_or(0.0);
        if min_ev < -STEADY_TOL {
            return Err(Error::Numerical(format!("steady state not positive (λ_min = {min_ev:.3e})")));
        }
        Ok(rho)
    }
}

/// Combination `Σ wₖ gₖ` with `Σ wₖ = 1` minimizing `‖Σ wₖ fₖ‖` over the stored history.
fn anderson_mix(history: &[(CMat, CMat)]) -> Result<CMat> {
    let (g_last, f_last) = history.last().expect("non-empty history");
    let m = history.len() - 1;
    let len = f_last.len();
    let mut df = CMat::zeros(len, m);
    for k in 0..m {
        let diff = &history[k + 1].1 - &history[k].1;
        df.set_column(k, &CMat::from_column_slice(len, 1, diff.as_slice()).column(0));
    }
    let rhs = CMat::from_column_slice(len, 1, f_last.as_slice());
    let gamma = df
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Numerical(format!("Anderson least squares failed: {e}")))?;
    let mut out = g_last.clone();
    for k in 0..m {
        out -= (&history[k + 1].0 - &history[k].0) * gamma[(k, 0)];
    }
    normalize(linalg::hermitize(&out))
}

fn normalize(rho: CMat) -> Result<CMat> {
    let tr = linalg::trace(&rho);
    if !(tr.norm() > 1e-300) || !tr.re.is_finite() {
        return Err(Error::Numerical("density matrix has zero trace".into()));
    }
    Ok(rho.map(|z| z / tr))
}

pub fn expect(rho: &CMat, op: &CMat) -> Complex64 {
    linalg::trace_product(rho, op)
}

/// `S1[i,j] = ⟨ν_i ν_j†⟩`. Anti-normal entries `⟨a_i a_j†⟩` use `δ_ij + ⟨a_j†a_i⟩`
/// so the truncation edge does not enter.
pub fn first_moments(space: &FockSpace, rho: &CMat) -> CMat {
    let n = space.n_modes;
    let mut s1 = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let ai = space.a(i);
            let aj = space.a(j);
            let adag_a = expect(rho, &(aj.adjoint() * ai));
            s1[(i, j)] = adag_a + if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
            s1[(i, n + j)] = expect(rho, &(ai * aj));
            s1[(n + i, j)] = expect(rho, &(ai.adjoint() * aj.adjoint()));
            s1[(n + i, n + j)] = expect(rho, &(ai.adjoint() * aj));
        }
    }
    s1
}

/// `c + Σ hᵢ⟨nᵢ⟩ + Σ g_ij⟨aᵢ†aⱼ†aⱼaᵢ⟩`.
pub fn energy(space: &FockSpace, rho: &CMat, ham: &SecondQuantizedHamiltonian) -> Result<f64> {
    ham.check_modes(space.n_modes)?;
    let mut e = c(ham.c, 0.0);
    for i in 0..space.n_modes {
        e += expect(rho, &space.number(i)) * ham.h[i];
        for j in 0..space.n_modes {
            let g = ham.g_at(i, j);
            if g != 0.0 {
                let (ai, aj) = (space.a(i), space.a(j));
                let op = ai.adjoint() * aj.adjoint() * aj * ai;
                e += expect(rho, &op) * g;
            }
        }
    }
    Ok(e.re)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockComparison {
    pub s1_max_diff: f64,
    pub energy_fock: f64,
    pub energy_moments: f64,
    pub residual: f64,
}

impl FockComparison {
    pub fn energy_diff(&self) -> f64 {
        (self.energy_fock - self.energy_moments).abs()
    }
}

/// Fock steady state of `p` against the moment equations and the cost model.
pub fn compare_plant(p: &QuantumPlant, ham: &SecondQuantizedHamiltonian, cutoff: usize) -> Result<FockComparison> {
    let lind = TruncatedLindbladian::from_plant(p, cutoff)?;
    let rho = lind.steady_state()?;
    let s1_fock = first_moments(&lind.space, &rho);
    let s1 = crate::moments::solve_s1(p)?;
    let cm = crate::cost::build_cost_matrices(ham)?;
    Ok(FockComparison {
        s1_max_diff: (&s1_fock - &s1).camax(),
        energy_fock: energy(&lind.space, &rho, ham)?,
        energy_moments: crate::cost::evaluate_cost(p, &cm)?,
        residual: lind.residual(&rho),
    })
}
