//! Second-quantized cost Hamiltonians and their steady-state energy.
//!
//! `H = c + Σ hᵢ aᵢ†aᵢ + Σ g_ij aᵢ†aⱼ†aⱼaᵢ` is encoded as `Tr(Q1·S1) + Tr(Q2·S2) + offset`.
//! Occupations are read from the bottom-right block of `S1` (`E[aᵢ†aᵢ]`); every
//! quartic term goes through the anti-normally ordered entry
//! `S2[(i,j),(i,j)] = E[aᵢaᵢ†aⱼaⱼ†]`, and the reordering remainders
//!
//! ```text
//! i ≠ j:  nᵢnⱼ     = aᵢaᵢ†aⱼaⱼ† − nᵢ − nⱼ − 1
//! i = j:  nᵢ(nᵢ−1) = aᵢaᵢ†aᵢaᵢ† − 3nᵢ − 1
//! ```
//!
//! are folded into `Q1` and `offset`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::moments::{self, MomentPair};
use crate::qsys::QuantumPlant;

/// Imaginary part tolerated in a trace before the energy is declared inconsistent.
pub const IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondQuantizedHamiltonian {
    pub n_modes: usize,
    /// Scalar offset (Hartree).
    pub c: f64,
    pub h: Vec<f64>,
    /// Interaction coefficients, row-major `n_modes × n_modes`.
    pub g: Vec<f64>,
}

impl SecondQuantizedHamiltonian {
    pub fn new(c: f64, h: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let ham = Self { n_modes: h.len(), c, h, g };
        ham.validate()?;
        Ok(ham)
    }

    /// Two-mode projection of the H₂ molecular Hamiltonian.
    pub fn h2_truncated() -> Self {
        Self {
            n_modes: 2,
            c: 0.715104,
            h: vec![-1.253310, -1.253310],
            g: vec![0.337378; 4],
        }
    }

    pub fn g_at(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n_modes + j]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::Validation("n_modes must be positive".into()));
        }
        if self.h.len() != self.n_modes {
            return Err(Error::Validation(format!(
                "h has {} entries, expected n_modes = {}",
                self.h.len(),
                self.n_modes
            )));
        }
        if self.g.len() != self.n_modes * self.n_modes {
            return Err(Error::Validation(format!(
                "g has {} entries, expected n_modes² = {}",
                self.g.len(),
                self.n_modes * self.n_modes
            )));
        }
        if !self.c.is_finite() {
            return Err(Error::Validation("c is not finite".into()));
        }
        if let Some(i) = self.h.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("h[{i}] is not finite")));
        }
        if let Some(i) = self.g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "g[{},{}] is not finite",
                i / self.n_modes,
                i % self.n_modes
            )));
        }
        Ok(())
    }

    pub fn check_modes(&self, n_modes: usize) -> Result<()> {
        if self.n_modes != n_modes {
            return Err(Error::Validation(format!(
                "Hamiltonian has {} modes but the system has {n_modes}",
                self.n_modes
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            n_modes: self.n_modes,
            c: self.c * lambda,
            h: self.h.iter().map(|v| v * lambda).collect(),
            g: self.g.iter().map(|v| v * lambda).collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain numeric record serializes")
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse { path: origin.into(), message: "file is empty".into() });
        }
        let ham: Self = toml::from_str(text)
            .map_err(|e| Error::Parse { path: origin.into(), message: e.to_string() })?;
        ham.validate()?;
        Ok(ham)
    }
}

/// Reads a Hamiltonian record. The name `h2_truncated` resolves to the bundled model.
///
/// File syntax (TOML):
///
/// ```toml
/// n_modes = 2
/// c = 0.715104
/// h = [-1.25331, -1.25331]
/// g = [0.337378, 0.337378, 0.337378, 0.337378]  # row-major
/// ```
pub fn load_hamiltonian(path: impl AsRef<Path>) -> Result<SecondQuantizedHamiltonian> {
    let path = path.as_ref();
    if path.as_os_str() == "h2_truncated" && !path.exists() {
        return Ok(SecondQuantizedHamiltonian::h2_truncated());
    }
    let text = crate::error::read_input(path)?;
    SecondQuantizedHamiltonian::from_toml_str(&text, &path.display().to_string())
}

#[derive(Debug, Clone)]
pub struct CostMatrices {
    pub q1: CMat,
    pub q2: CMat,
    pub offset: f64,
}

impl CostMatrices {
    pub fn n_modes(&self) -> usize {
        self.q1.nrows() / 2
    }

    pub fn is_quadratic(&self) -> bool {
        self.q2.iter().all(|z| *z == linalg::ZERO)
    }
}

pub fn build_cost_matrices(ham: &SecondQuantizedHamiltonian) -> Result<CostMatrices> {
    ham.validate()?;
    let n = ham.n_modes;
    let d = 2 * n;
    let mut q1 = CMat::zeros(d, d);
    let mut q2 = CMat::zeros(d * d, d * d);
    let mut offset = ham.c;
    // Tr(Q1·S1) = Σ Q1[c,r]·S1[r,c]; diagonal entries pick S1[r,r].
    let occ = |i: usize| n + i;
    for i in 0..n {
        q1[(occ(i), occ(i))] += c(ham.h[i], 0.0);
    }
    for i in 0..n {
        for j in 0..n {
            let g = ham.g_at(i, j);
            if g == 0.0 {
                continue;
            }
            let idx = i * d + j;
            q2[(idx, idx)] += c(g, 0.0);
            if i == j {
                q1[(occ(i), occ(i))] -= c(3.0 * g, 0.0);
            } else {
                q1[(occ(i), occ(i))] -= c(g, 0.0);
                q1[(occ(j), occ(j))] -= c(g, 0.0);
            }
            offset -= g;
        }
    }
    Ok(CostMatrices { q1, q2, offset })
}

/// `Tr(Q1·S1) + Tr(Q2·S2) + offset` as a complex number (imaginary part is a consistency residue).
pub fn energy_from_moments(mp: &MomentPair, cm: &CostMatrices) -> Complex64 {
    let j1 = linalg::trace_product(&cm.q1, &mp.s1);
    let j2 = if cm.is_quadratic() { linalg::ZERO } else { sparse_trace(&cm.q2, &mp.s2) };
    j1 + j2 + c(cm.offset, 0.0)
}

/// `Tr(Q·S)` skipping zero rows of `Q`.
pub(crate) fn sparse_trace(q: &CMat, s: &CMat) -> Complex64 {
    let mut acc = linalg::ZERO;
    for r in 0..q.nrows() {
        for k in 0..q.ncols() {
            let v = q[(r, k)];
            if v != linalg::ZERO {
                acc += v * s[(k, r)];
            }
        }
    }
    acc
}

/// The two trace terms `(J1, J2)` without the offset.
pub fn cost_terms(mp: &MomentPair, cm: &CostMatrices) -> (f64, f64) {
    let j1 = linalg::trace_product(&cm.q1, &mp.s1).re;
    let j2 = sparse_trace(&cm.q2, &mp.s2).re;
    (j1, j2)
}

/// Steady-state energy (Hartree) of a plant driven by vacuum fields.
pub fn evaluate_cost(p: &QuantumPlant, cm: &CostMatrices) -> Result<f64> {
    if p.n_modes() != cm.n_modes() {
        return Err(Error::Dimension(format!(
            "plant has {} modes, cost has {}",
            p.n_modes(),
            cm.n_modes()
        )));
    }
    let mp = moments::steady_moments(p)?;
    real_energy(&mp, cm)
}

pub fn real_energy(mp: &MomentPair, cm: &CostMatrices) -> Result<f64> {
    let e = energy_from_moments(mp, cm);
    if !e.re.is_finite() {
        return Err(Error::Numerical("energy is not finite".into()));
    }
    if e.im.abs() > IMAG_TOL * (1.0 + e.re.abs()) {
        return Err(Error::Numerical(format!("energy has imaginary residue {:.3e}", e.im)));
    }
    Ok(e.re)
}

/// Energy of a zero-mean Gaussian state from `S1` alone, by normal-ordered Wick pairing:
/// `⟨aᵢ†aⱼ†aⱼaᵢ⟩ = NᵢᵢNⱼⱼ + NᵢⱼNⱼᵢ + ⟨aᵢ†aⱼ†⟩⟨aⱼaᵢ⟩` with `Nᵢⱼ = ⟨aᵢ†aⱼ⟩`.
///
/// Unlike [`energy_from_moments`] this does not rely on canonical commutators, so it
/// applies to sub-blocks of hybrid closed loops.
pub fn gaussian_energy(s1: &CMat, ham: &SecondQuantizedHamiltonian) -> Result<f64> {
    let n = ham.n_modes;
    if s1.shape() != (2 * n, 2 * n) {
        return Err(Error::Dimension(format!("S1 is {:?}, expected {}×{}", s1.shape(), 2 * n, 2 * n)));
    }
    let occ = |i: usize, j: usize| s1[(n + i, n + j)];
    let mut e = c(ham.c, 0.0);
    for i in 0..n {
        e += c(ham.h[i], 0.0) * occ(i, i);
        for j in 0..n {
            let g = ham.g_at(i, j);
            if g == 0.0 {
                continue;
            }
            let quartic = occ(i, i) * occ(j, j) + occ(i, j) * occ(j, i) + s1[(n + i, j)] * s1[(j, n + i)];
            e += c(g, 0.0) * quartic;
        }
    }
    if !e.re.is_finite() {
        return Err(Error::Numerical("energy is not finite".into()));
    }
    if e.im.abs() > IMAG_TOL * (1.0 + e.re.abs()) {
        return Err(Error::Numerical(format!("energy has imaginary residue {:.3e}", e.im)));
    }
    Ok(e.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::testing::random_stable_plant;
    use crate::qsys::from_slh;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_hamiltonian() {
        let ham = SecondQuantizedHamiltonian::new(5.0, vec![0.0, 0.0], vec![0.0; 4]).unwrap();
        let cm = build_cost_matrices(&ham).unwrap();
        assert_eq!(cm.q1.norm(), 0.0);
        assert_eq!(cm.q2.norm(), 0.0);
        assert_eq!(cm.offset, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_stable_plant(&mut rng, 2, 2, 0.5);
        assert_eq!(evaluate_cost(&p, &cm).unwrap(), 5.0);
    }

    #[test]
    fn number_operator_at_vacuum_is_zero() {
        let ham = SecondQuantizedHamiltonian::new(0.0, vec![1.0], vec![0.0]).unwrap();
        let cm = build_cost_matrices(&ham).unwrap();
        let p = from_slh(&CMat::zeros(1, 1), &linalg::eye(1)).unwrap();
        assert!(evaluate_cost(&p, &cm).unwrap().abs() < 1e-14);
    }

    #[test]
    fn h2_at_vacuum_is_offset() {
        let cm = build_cost_matrices(&SecondQuantizedHamiltonian::h2_truncated()).unwrap();
        let p = from_slh(&CMat::zeros(2, 2), &linalg::eye(2)).unwrap();
        assert!((evaluate_cost(&p, &cm).unwrap() - 0.715104).abs() < 1e-12);
    }

    #[test]
    fn thermal_single_mode_energy() {
        // n̄ = 0.5: ⟨n⟩ = 0.5 and ⟨a†a†aa⟩ = 2n̄² = 0.5
        let mut s1 = CMat::zeros(2, 2);
        s1[(0, 0)] = c(1.5, 0.0);
        s1[(1, 1)] = c(0.5, 0.0);
        let mp = MomentPair { s2: moments::wick_oracle(&s1).unwrap(), s1 };
        let ham = SecondQuantizedHamiltonian::new(0.0, vec![2.0], vec![3.0]).unwrap();
        let cm = build_cost_matrices(&ham).unwrap();
        let e = real_energy(&mp, &cm).unwrap();
        assert!((e - (2.0 * 0.5 + 3.0 * 0.5)).abs() < 1e-13);
    }

    #[test]
    fn cost_is_linear_in_coefficients_and_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ham = SecondQuantizedHamiltonian::h2_truncated();
        let cm = build_cost_matrices(&ham).unwrap();
        let cm3 = build_cost_matrices(&ham.scaled(3.0)).unwrap();
        for _ in 0..5 {
            let p = random_stable_plant(&mut rng, 2, 2, 0.7);
            let mp = moments::steady_moments(&p).unwrap();
            let e = energy_from_moments(&mp, &cm);
            assert!(e.im.abs() <= 1e-8);
            let e3 = evaluate_cost(&p, &cm3).unwrap();
            assert!((e3 - 3.0 * e.re).abs() < 1e-10 * (1.0 + e3.abs()));
        }
    }

    #[test]
    fn cost_matrices_are_hermitian() {
        let ham = SecondQuantizedHamiltonian::new(0.1, vec![0.3, -0.2, 1.0], (0..9).map(|v| v as f64 * 0.1).collect())
            .unwrap();
        let cm = build_cost_matrices(&ham).unwrap();
        assert!(linalg::hermitian_defect(&cm.q1) <= 1e-12);
        assert!(linalg::hermitian_defect(&cm.q2) <= 1e-12);
    }

    #[test]
    fn gaussian_energy_matches_second_order_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ham = SecondQuantizedHamiltonian::new(0.3, vec![-1.0, 0.5], vec![0.4, 0.2, 0.2, -0.3]).unwrap();
        let cm = build_cost_matrices(&ham).unwrap();
        for _ in 0..10 {
            let p = random_stable_plant(&mut rng, 2, 2, 0.8);
            let mp = moments::steady_moments(&p).unwrap();
            let e1 = real_energy(&mp, &cm).unwrap();
            let e2 = gaussian_energy(&mp.s1, &ham).unwrap();
            assert!((e1 - e2).abs() < 1e-10 * (1.0 + e1.abs()), "{e1} vs {e2}");
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            SecondQuantizedHamiltonian::from_toml_str("", "x"),
            Err(Error::Parse { .. })
        ));
        let err = SecondQuantizedHamiltonian::from_toml_str("n_modes = 1\nc = 1.0\nh = [1.0]\ng = \"x\"\n", "x")
            .unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        assert!(matches!(
            SecondQuantizedHamiltonian::from_toml_str("n_modes = 2\nc = 1.0\nh = [1.0]\ng = [0.0]\n", "x"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            SecondQuantizedHamiltonian::from_toml_str("n_modes = 1\nc = nan\nh = [1.0]\ng = [0.0]\n", "x"),
            Err(Error::Validation(_))
        ));
        let h2 = SecondQuantizedHamiltonian::h2_truncated();
        assert!(matches!(h2.check_modes(3), Err(Error::Validation(_))));
    }

    #[test]
    fn toml_roundtrip() {
        let h2 = SecondQuantizedHamiltonian::h2_truncated();
        let back = SecondQuantizedHamiltonian::from_toml_str(&h2.to_toml(), "mem").unwrap();
        assert_eq!(back, h2);
    }
}
