//! QAOA reference for density-density fermionic Hamiltonians.
//!
//! Under Jordan–Wigner `nᵢ ↦ (1 − Zᵢ)/2`, so a Hamiltonian built only from number
//! operators is diagonal in the computational basis. Basis index `k` has qubit `i`
//! in bit `i` of `k`. Fermionic `aᵢ†aᵢ†aᵢaᵢ` vanishes, so diagonal `g_ii` entries
//! carry no energy here, unlike the bosonic model.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::SecondQuantizedHamiltonian;
use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 14;

/// Fermionic terms accepted by the mapping. Only density terms are diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum FermionTerm {
    Constant(f64),
    Number { i: usize, coeff: f64 },
    Density { i: usize, j: usize, coeff: f64 },
    Hopping { i: usize, j: usize, coeff: f64 },
}

/// Product of `Z` on `support` with a real coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ZTerm {
    pub coeff: f64,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSpinHamiltonian {
    pub n_qubits: usize,
    pub diag: Vec<f64>,
    pub terms: Vec<ZTerm>,
}

impl DiagonalSpinHamiltonian {
    pub fn from_terms(n_qubits: usize, terms: Vec<ZTerm>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Validation(format!("{n_qubits} qubits outside 1..={MAX_QUBITS}")));
        }
        if let Some(q) = terms.iter().flat_map(|t| t.support.iter()).find(|&&q| q >= n_qubits) {
            return Err(Error::Dimension(format!("Z term acts on qubit {q} of {n_qubits}")));
        }
        let diag = (0..1usize << n_qubits)
            .map(|k| {
                terms
                    .iter()
                    .map(|t| t.coeff * t.support.iter().map(|&q| if k >> q & 1 == 1 { -1.0 } else { 1.0 }).product::<f64>())
                    .sum()
            })
            .collect();
        Ok(Self { n_qubits, diag, terms })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Expands each term through `nᵢ = (1 − Zᵢ)/2` and collects equal supports.
pub fn jordan_wigner_terms(n_qubits: usize, terms: &[FermionTerm]) -> Result<DiagonalSpinHamiltonian> {
    let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut add = |support: Vec<usize>, c: f64| *acc.entry(support).or_insert(0.0) += c;
    for t in terms {
        match *t {
            FermionTerm::Constant(c) => add(vec![], c),
            FermionTerm::Number { i, coeff } => {
                add(vec![], 0.5 * coeff);
                add(vec![i], -0.5 * coeff);
            }
            FermionTerm::Density { i, j, coeff } if i == j => {
                // aᵢ†aᵢ†aᵢaᵢ = 0 for fermions
                let _ = coeff;
            }
            FermionTerm::Density { i, j, coeff } => {
                let q = 0.25 * coeff;
                add(vec![], q);
                add(vec![i], -q);
                add(vec![j], -q);
                add(if i < j { vec![i, j] } else { vec![j, i] }, q);
            }
            FermionTerm::Hopping { i, j, .. } => {
                return Err(Error::UnsupportedTerm(format!(
                    "hopping a{i}†a{j} is not diagonal under Jordan–Wigner"
                )))
            }
        }
    }
    let terms = acc.into_iter().filter(|(_, c)| *c != 0.0).map(|(support, coeff)| ZTerm { coeff, support }).collect();
    DiagonalSpinHamiltonian::from_terms(n_qubits, terms)
}

pub fn fermion_terms(ham: &SecondQuantizedHamiltonian) -> Vec<FermionTerm> {
    let n = ham.n_modes;
    let mut out = vec![FermionTerm::Constant(ham.c)];
    out.extend(ham.h.iter().enumerate().map(|(i, &coeff)| FermionTerm::Number { i, coeff }));
    for i in 0..n {
        for j in 0..n {
            out.push(FermionTerm::Density { i, j, coeff: ham.g_at(i, j) });
        }
    }
    out
}

pub fn jordan_wigner_diagonal(ham: &SecondQuantizedHamiltonian) -> Result<DiagonalSpinHamiltonian> {
    ham.validate()?;
    jordan_wigner_terms(ham.n_modes, &fermion_terms(ham))
}

/// Lowest diagonal entry; ties resolve to the smallest basis index.
pub fn exact_min(h: &DiagonalSpinHamiltonian) -> (usize, f64) {
    h.diag.iter().copied().enumerate().fold((0, f64::INFINITY), |best, (k, e)| if e < best.1 { (k, e) } else { best })
}

/// Bitstring of a basis index, most significant qubit first.
pub fn bitstring(k: usize, n_qubits: usize) -> String {
    (0..n_qubits).rev().map(|q| if k >> q & 1 == 1 { '1' } else { '0' }).collect()
}

/// Final statevector after `p` alternating phase and mixer layers on `|+⟩^n`.
pub fn qaoa_state(h: &DiagonalSpinHamiltonian, gammas: &[f64], betas: &[f64]) -> Result<Vec<Complex64>> {
    if gammas.len() != betas.len() {
        return Err(Error::Dimension(format!("{} γ values but {} β values", gammas.len(), betas.len())));
    }
    let dim = h.dim();
    let amp = 1.0 / (dim as f64).sqrt();
    let mut psi = vec![Complex64::new(amp, 0.0); dim];
    for (&gamma, &beta) in gammas.iter().zip(betas) {
        for (z, &e) in psi.iter_mut().zip(&h.diag) {
            *z *= Complex64::from_polar(1.0, -gamma * e);
        }
        let (cb, sb) = (beta.cos(), beta.sin());
        let off = Complex64::new(0.0, -sb);
        for q in 0..h.n_qubits {
            let bit = 1usize << q;
            for k in (0..dim).filter(|k| k & bit == 0) {
                let (u, v) = (psi[k], psi[k | bit]);
                psi[k] = u * cb + v * off;
                psi[k | bit] = u * off + v * cb;
            }
        }
    }
    Ok(psi)
}

pub fn qaoa_energy(h: &DiagonalSpinHamiltonian, gammas: &[f64], betas: &[f64]) -> Result<f64> {
    let psi = qaoa_state(h, gammas, betas)?;
    Ok(psi.iter().zip(&h.diag).map(|(z, e)| z.norm_sqr() * e).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the simplex's value spread falls below this.
    pub f_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 4000, f_tol: 1e-12, initial_step: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// Best value after each evaluation.
    pub trace: Vec<f64>,
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½, shrink ½).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut eval = |x: &[f64], trace: &mut Vec<f64>| {
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        best = best.min(v);
        trace.push(best);
        v
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut trace);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut trace);
        simplex.push((x, v));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect::<Vec<f64>>();
    while trace.len() < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 <= opts.f_tol {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|s| s.0[k]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let xr = lerp(&centroid, &worst.0, -1.0);
        let fr = eval(&xr, &mut trace);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst.0, -2.0);
            let fe = eval(&xe, &mut trace);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = lerp(&centroid, &xr, 0.5);
                let fc = eval(&xc, &mut trace);
                (xc, fc)
            } else {
                let xc = lerp(&centroid, &worst.0, 0.5);
                let fc = eval(&xc, &mut trace);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&x_best, &s.0, 0.5);
                    s.1 = eval(&s.0, &mut trace);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult { x, f: fx, evals: trace.len(), trace }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaoaConfig {
    pub restarts: usize,
    pub seed: u64,
    pub local: NelderMeadOptions,
}

impl Default for QaoaConfig {
    fn default() -> Self {
        Self { restarts: 10, seed: 0, local: NelderMeadOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaoaRestart {
    pub restart: usize,
    pub best_energy: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaoaResult {
    pub p: usize,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub best_energy: f64,
    pub evals: usize,
    /// Best-so-far energy over all evaluations at this depth.
    pub trace: Vec<f64>,
    pub restarts: Vec<QaoaRestart>,
}

/// Multi-start Nelder–Mead at depth `p`. Restart 0 starts from `warm` padded with a
/// zero layer when given; the rest start uniformly in `γ ∈ [0, π)`, `β ∈ [0, π/2)`.
pub fn optimize_qaoa(h: &DiagonalSpinHamiltonian, p: usize, cfg: &QaoaConfig, warm: Option<&QaoaResult>) -> Result<QaoaResult> {
    if p == 0 {
        return Err(Error::Validation("QAOA depth must be at least 1".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::Configuration("at least one QAOA restart is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(p as u64);
    let objective = |x: &[f64]| qaoa_energy(h, &x[..p], &x[p..]).unwrap_or(f64::INFINITY);
    let mut best: Option<NelderMeadResult> = None;
    let mut restarts = Vec::with_capacity(cfg.restarts);
    let mut trace = Vec::new();
    for r in 0..cfg.restarts {
        let x0: Vec<f64> = match warm.filter(|w| r == 0 && w.p + 1 == p) {
            Some(w) => w.gammas.iter().chain([&0.0]).chain(w.betas.iter()).chain([&0.0]).copied().collect(),
            None => {
                let g: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..std::f64::consts::PI)).collect();
                let b: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..std::f64::consts::FRAC_PI_2)).collect();
                g.into_iter().chain(b).collect()
            }
        };
        let res = nelder_mead(objective, &x0, &cfg.local);
        let floor = trace.last().copied().unwrap_or(f64::INFINITY);
        trace.extend(res.trace.iter().map(|&e: &f64| e.min(floor)));
        restarts.push(QaoaRestart { restart: r, best_energy: res.f, evals: res.evals });
        if best.as_ref().map_or(true, |b| res.f < b.f) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one restart");
    Ok(QaoaResult {
        p,
        gammas: best.x[..p].to_vec(),
        betas: best.x[p..].to_vec(),
        best_energy: best.f,
        evals: restarts.iter().map(|r| r.evals).sum(),
        trace,
        restarts,
    })
}

/// Depths `1..=max_p`, each warm-started from the previous depth's optimum.
pub fn depth_sweep(h: &DiagonalSpinHamiltonian, max_p: usize, cfg: &QaoaConfig) -> Result<Vec<QaoaResult>> {
    let mut out: Vec<QaoaResult> = Vec::with_capacity(max_p);
    for p in 1..=max_p {
        let res = optimize_qaoa(h, p, cfg, out.last())?;
        out.push(res);
    }
    Ok(out)
}

pub const QAOA_CSV_HEADER: &str = "p,restart,best_energy,evals";

/// One row per restart, then an `exact` reference row.
pub fn sweep_csv(h: &DiagonalSpinHamiltonian, results: &[QaoaResult]) -> String {
    let mut s = String::from(QAOA_CSV_HEADER);
    s.push('\n');
    for res in results {
        for r in &res.restarts {
            s.push_str(&format!("{},{},{:.17e},{}\n", res.p, r.restart, r.best_energy, r.evals));
        }
    }
    s.push_str(&format!("exact,{},{:.17e},0\n", bitstring(exact_min(h).0, h.n_qubits), exact_min(h).1));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h2() -> DiagonalSpinHamiltonian {
        jordan_wigner_diagonal(&SecondQuantizedHamiltonian::h2_truncated()).unwrap()
    }

    fn single(terms: &[FermionTerm], n: usize) -> Vec<f64> {
        jordan_wigner_terms(n, terms).unwrap().diag
    }

    #[test]
    fn number_and_density_diagonals() {
        assert_eq!(single(&[FermionTerm::Number { i: 0, coeff: 1.0 }], 1), vec![0.0, 1.0]);
        assert_eq!(single(&[FermionTerm::Density { i: 0, j: 1, coeff: 1.0 }], 2), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(single(&[FermionTerm::Density { i: 1, j: 1, coeff: 3.0 }], 2), vec![0.0; 4]);
    }

    #[test]
    fn hopping_is_rejected() {
        let err = jordan_wigner_terms(2, &[FermionTerm::Hopping { i: 0, j: 1, coeff: 1.0 }]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedTerm(_)));
    }

    #[test]
    fn qubit_guard() {
        assert!(DiagonalSpinHamiltonian::from_terms(MAX_QUBITS + 1, vec![]).is_err());
        assert!(DiagonalSpinHamiltonian::from_terms(2, vec![ZTerm { coeff: 1.0, support: vec![2] }]).is_err());
    }

    #[test]
    fn h2_diagonal_matches_occupation_scan() {
        let ham = SecondQuantizedHamiltonian::h2_truncated();
        let h = h2();
        for k in 0..4usize {
            let occ = [(k & 1) as f64, (k >> 1 & 1) as f64];
            let mut e = ham.c + ham.h[0] * occ[0] + ham.h[1] * occ[1];
            e += (ham.g_at(0, 1) + ham.g_at(1, 0)) * occ[0] * occ[1];
            assert!((h.diag[k] - e).abs() < 1e-12);
        }
        let (k, e) = exact_min(&h);
        assert_eq!(bitstring(k, 2), "11");
        assert!((e - (-1.116760)).abs() < 1e-6, "{e}");
    }

    #[test]
    fn exact_min_tie_takes_lowest_index() {
        let h = DiagonalSpinHamiltonian::from_terms(2, vec![ZTerm { coeff: 1.0, support: vec![0] }]).unwrap();
        assert_eq!(exact_min(&h), (1, -1.0));
        let n0 = jordan_wigner_terms(1, &[FermionTerm::Number { i: 0, coeff: 1.0 }]).unwrap();
        assert_eq!(exact_min(&n0), (0, 0.0));
    }

    #[test]
    fn zero_angles_give_the_mean() {
        let h = h2();
        let mean = h.diag.iter().sum::<f64>() / 4.0;
        assert!((qaoa_energy(&h, &[0.0], &[0.0]).unwrap() - mean).abs() < 1e-14);
        let z = DiagonalSpinHamiltonian::from_terms(1, vec![ZTerm { coeff: 1.0, support: vec![0] }]).unwrap();
        assert!(qaoa_energy(&z, &[0.0], &[0.7]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn single_qubit_z_closed_form() {
        // ⟨Z⟩ = sin(2β)·sin(2γ) for one layer on |+⟩
        let z = DiagonalSpinHamiltonian::from_terms(1, vec![ZTerm { coeff: 1.0, support: vec![0] }]).unwrap();
        for (g, b) in [(0.3, 0.2), (1.1, -0.4), (2.0, 1.3)] {
            let e = qaoa_energy(&z, &[g], &[b]).unwrap();
            assert!((e - (2.0 * b).sin() * (2.0 * g).sin()).abs() < 1e-13, "{e}");
        }
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_evals: 5000, f_tol: 1e-16, initial_step: 0.5 };
        let r = nelder_mead(rosen, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn p1_optimum_matches_dense_scan() {
        let h = h2();
        let steps = 400;
        let mut scan = f64::INFINITY;
        for i in 0..steps {
            for j in 0..steps {
                let g = std::f64::consts::PI * 2.0 * i as f64 / steps as f64;
                let b = std::f64::consts::PI * j as f64 / steps as f64;
                scan = scan.min(qaoa_energy(&h, &[g], &[b]).unwrap());
            }
        }
        let res = optimize_qaoa(&h, 1, &QaoaConfig::default(), None).unwrap();
        assert!(res.best_energy <= scan + 1e-4, "{} vs scan {scan}", res.best_energy);
    }

    #[test]
    fn depth_sweep_is_monotone_and_reaches_exact() {
        let h = h2();
        let results = depth_sweep(&h, 4, &QaoaConfig { seed: 11, ..Default::default() }).unwrap();
        let e: Vec<f64> = results.iter().map(|r| r.best_energy).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{e:?}");
        let exact = exact_min(&h).1;
        assert!(e.iter().all(|&x| x >= exact - 1e-9));
        assert!(e[2] - exact < 1e-3, "{e:?}");
        let csv = sweep_csv(&h, &results);
        assert_eq!(csv.lines().count(), 1 + 4 * 10 + 1);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let h = h2();
        let cfg = QaoaConfig { seed: 3, restarts: 3, ..Default::default() };
        assert_eq!(depth_sweep(&h, 2, &cfg).unwrap(), depth_sweep(&h, 2, &cfg).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn state_norm_and_variational_bound(
            angles in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let h = h2();
            let psi = qaoa_state(&h, &angles[..3], &angles[3..]).unwrap();
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            let e = qaoa_energy(&h, &angles[..3], &angles[3..]).unwrap();
            prop_assert!(e >= exact_min(&h).1 - 1e-12);
        }
    }
}
