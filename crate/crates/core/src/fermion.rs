//! Fermionic operators over labelled modes, single-particle basis changes and
//! the Jordan-Wigner map to qubit operators.
//!
//! Three mode spaces are used, all indexed `orbital + n_sites * spin`
//! (spin up = 0, down = 1):
//!
//! * site basis, orbital = site `j`;
//! * momentum basis, orbital = `m` with rotation eigenvalue
//!   `lambda_m = exp(2 pi i m / n)`, related by `c_j = n^{-1/2} sum_m lambda_m^j c~_m`;
//! * symmetry basis, orbitals `[+1, -1, e1, o1, e2, o2, ...]` where
//!   `d_{e,p} = (c~_p + c~_{n-p}) / sqrt 2` and `d_{o,p} = (c~_p - c~_{n-p}) / sqrt 2`.
//!
//! Under Jordan-Wigner, mode `k` sits on qubit `q = ordering.qubit_of(k)` and
//! `c_k -> 1/2 (X_q + i Y_q) Z_{q-1} ... Z_0`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString, PauliSum};

const COEFF_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

/// `(mode, dagger)`: `dagger = true` is a creation operator.
pub type LadderOp = (usize, bool);

#[derive(Clone, Debug, PartialEq)]
pub struct FermionTerm {
    pub coeff: Complex64,
    /// Operator product, leftmost factor first.
    pub ops: Vec<LadderOp>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FermionOperator {
    n_modes: usize,
    terms: Vec<FermionTerm>,
}

impl FermionOperator {
    pub fn zero(n_modes: usize) -> Self {
        Self {
            n_modes,
            terms: Vec::new(),
        }
    }

    pub fn identity(n_modes: usize) -> Self {
        let mut op = Self::zero(n_modes);
        op.terms.push(FermionTerm {
            coeff: Complex64::new(1.0, 0.0),
            ops: Vec::new(),
        });
        op
    }

    /// A single monomial.
    pub fn monomial(n_modes: usize, coeff: Complex64, ops: &[LadderOp]) -> Result<Self> {
        let mut op = Self::zero(n_modes);
        op.push(coeff, ops.to_vec())?;
        Ok(op)
    }

    pub fn annihilation(n_modes: usize, mode: usize) -> Result<Self> {
        Self::monomial(n_modes, Complex64::new(1.0, 0.0), &[(mode, false)])
    }

    pub fn creation(n_modes: usize, mode: usize) -> Result<Self> {
        Self::monomial(n_modes, Complex64::new(1.0, 0.0), &[(mode, true)])
    }

    /// `sum_k n_k` over the listed modes.
    pub fn number(n_modes: usize, modes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut op = Self::zero(n_modes);
        for k in modes {
            op.push(Complex64::new(1.0, 0.0), vec![(k, true), (k, false)])?;
        }
        Ok(op)
    }

    pub fn push(&mut self, coeff: Complex64, ops: Vec<LadderOp>) -> Result<()> {
        if let Some(&(index, _)) = ops.iter().find(|(k, _)| *k >= self.n_modes) {
            return Err(Error::ModeOutOfRange {
                index,
                n_modes: self.n_modes,
            });
        }
        self.terms.push(FermionTerm { coeff, ops });
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn terms(&self) -> &[FermionTerm] {
        &self.terms
    }

    pub fn add(&self, other: &FermionOperator) -> Result<FermionOperator> {
        check_modes(self.n_modes, other.n_modes)?;
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out.simplify())
    }

    pub fn scale(&self, s: Complex64) -> FermionOperator {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= s;
        }
        out.simplify()
    }

    /// Operator product `self * other` (monomials concatenated, no reordering).
    pub fn product(&self, other: &FermionOperator) -> Result<FermionOperator> {
        check_modes(self.n_modes, other.n_modes)?;
        let mut out = Self::zero(self.n_modes);
        for a in &self.terms {
            for b in &other.terms {
                let mut ops = a.ops.clone();
                ops.extend_from_slice(&b.ops);
                out.terms.push(FermionTerm {
                    coeff: a.coeff * b.coeff,
                    ops,
                });
            }
        }
        Ok(out.simplify())
    }

    /// `{a, b} = ab + ba`.
    pub fn anticommutator(&self, other: &FermionOperator) -> Result<FermionOperator> {
        self.product(other)?.add(&other.product(self)?)
    }

    pub fn adjoint(&self) -> FermionOperator {
        let terms = self
            .terms
            .iter()
            .map(|t| FermionTerm {
                coeff: t.coeff.conj(),
                ops: t.ops.iter().rev().map(|&(k, d)| (k, !d)).collect(),
            })
            .collect();
        FermionOperator {
            n_modes: self.n_modes,
            terms,
        }
        .simplify()
    }

    /// Merges identical monomials and drops negligible coefficients.
    /// Monomials are compared literally; no anticommutation is applied.
    pub fn simplify(&self) -> FermionOperator {
        let mut order: Vec<Vec<LadderOp>> = Vec::new();
        let mut acc: HashMap<Vec<LadderOp>, Complex64> = HashMap::new();
        for t in &self.terms {
            match acc.get_mut(&t.ops) {
                Some(c) => *c += t.coeff,
                None => {
                    order.push(t.ops.clone());
                    acc.insert(t.ops.clone(), t.coeff);
                }
            }
        }
        let terms = order
            .into_iter()
            .filter_map(|ops| {
                let coeff = acc[&ops];
                (coeff.norm() >= COEFF_TOL).then_some(FermionTerm { coeff, ops })
            })
            .collect();
        FermionOperator {
            n_modes: self.n_modes,
            terms,
        }
    }

    /// Coefficient of the monomial `c_a^dag c_b`, for reading off one-body terms.
    pub fn one_body_coefficient(&self, a: usize, b: usize) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.ops == [(a, true), (b, false)])
            .map(|t| t.coeff)
            .sum()
    }
}

fn check_modes(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// Bijection from mode index to qubit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeOrdering {
    qubit_of: Vec<usize>,
}

impl ModeOrdering {
    pub fn identity(n_modes: usize) -> Self {
        Self {
            qubit_of: (0..n_modes).collect(),
        }
    }

    /// `qubit_of[mode]` must be a permutation.
    pub fn new(qubit_of: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; qubit_of.len()];
        for &q in &qubit_of {
            if q >= seen.len() || seen[q] {
                return Err(Error::Parse(format!("mode ordering {qubit_of:?} is not a bijection")));
            }
            seen[q] = true;
        }
        Ok(Self { qubit_of })
    }

    /// Symmetry-basis ordering for the ring. Each e/o pair is adjacent, and
    /// the modes that tapering removes (`+1 up`, `+1 down`, first spin-up
    /// pair) are the lowest admissible qubits of their symmetries.
    ///
    /// Qubits from 0 upward: first spin-down pair, `+1 up`, `+1 down`, first
    /// spin-up pair, remaining pairs (down then up), `-1 up`, `-1 down`.
    pub fn tapering_layout(n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let idx = |o: SymmetryOrbital, s: Spin| symmetry_mode(n_sites, o, s);
        let mut order = vec![
            idx(SymmetryOrbital::Even(1), Spin::Down),
            idx(SymmetryOrbital::Odd(1), Spin::Down),
            idx(SymmetryOrbital::Plus, Spin::Up),
            idx(SymmetryOrbital::Plus, Spin::Down),
            idx(SymmetryOrbital::Even(1), Spin::Up),
            idx(SymmetryOrbital::Odd(1), Spin::Up),
        ];
        for p in 2..n_sites / 2 {
            for s in [Spin::Down, Spin::Up] {
                order.push(idx(SymmetryOrbital::Even(p), s));
                order.push(idx(SymmetryOrbital::Odd(p), s));
            }
        }
        order.push(idx(SymmetryOrbital::Minus, Spin::Up));
        order.push(idx(SymmetryOrbital::Minus, Spin::Down));
        let mut qubit_of = vec![0; order.len()];
        for (q, &mode) in order.iter().enumerate() {
            qubit_of[mode] = q;
        }
        Self::new(qubit_of)
    }

    pub fn n_modes(&self) -> usize {
        self.qubit_of.len()
    }

    pub fn qubit_of(&self, mode: usize) -> usize {
        self.qubit_of[mode]
    }

    pub fn mode_at(&self, qubit: usize) -> usize {
        self.qubit_of.iter().position(|&q| q == qubit).expect("bijection")
    }
}

/// Orbital labels of the symmetry basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryOrbital {
    /// Rotation eigenvalue +1.
    Plus,
    /// Rotation eigenvalue -1.
    Minus,
    /// Mirror-even combination of the conjugate pair `p`.
    Even(usize),
    /// Mirror-odd combination of the conjugate pair `p`.
    Odd(usize),
}

pub fn check_sites(n_sites: usize) -> Result<()> {
    match n_sites {
        4 | 6 => Ok(()),
        n => Err(Error::UnsupportedSites(n)),
    }
}

/// `[Plus, Minus, Even(1), Odd(1), Even(2), Odd(2), ...]`.
pub fn symmetry_orbitals(n_sites: usize) -> Result<Vec<SymmetryOrbital>> {
    check_sites(n_sites)?;
    let mut v = vec![SymmetryOrbital::Plus, SymmetryOrbital::Minus];
    for p in 1..n_sites / 2 {
        v.push(SymmetryOrbital::Even(p));
        v.push(SymmetryOrbital::Odd(p));
    }
    Ok(v)
}

/// Canonical index of a symmetry-basis mode.
pub fn symmetry_mode(n_sites: usize, orbital: SymmetryOrbital, spin: Spin) -> usize {
    let slot = match orbital {
        SymmetryOrbital::Plus => 0,
        SymmetryOrbital::Minus => 1,
        SymmetryOrbital::Even(p) => 2 * p,
        SymmetryOrbital::Odd(p) => 2 * p + 1,
    };
    slot + n_sites * spin.index()
}

pub fn site_mode(n_sites: usize, site: usize, spin: Spin) -> usize {
    site % n_sites + n_sites * spin.index()
}

/// Rotation eigenvalue `exp(2 pi i m / n)` of momentum orbital `m`.
pub fn momentum_eigenvalue(n_sites: usize, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n_sites as f64)
}

/// Momentum orbital stored on the qubit of a symmetry orbital when the
/// e/o rotation is undone: `Even(p)` holds `p`, `Odd(p)` holds `n - p`.
pub fn momentum_of(n_sites: usize, orbital: SymmetryOrbital) -> usize {
    match orbital {
        SymmetryOrbital::Plus => 0,
        SymmetryOrbital::Minus => n_sites / 2,
        SymmetryOrbital::Even(p) => p,
        SymmetryOrbital::Odd(p) => n_sites - p,
    }
}

/// Linear substitution of modes: old mode `a` becomes `sum_b W[a, b]` new mode `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisChange {
    matrix: DMatrix<Complex64>,
}

impl BasisChange {
    pub fn new(matrix: DMatrix<Complex64>) -> Self {
        assert!(matrix.is_square());
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies `self` and then `next`.
    pub fn then(&self, next: &BasisChange) -> BasisChange {
        BasisChange::new(&self.matrix * &next.matrix)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let n = self.n_modes();
        let prod = self.matrix.adjoint() * &self.matrix;
        (prod - DMatrix::<Complex64>::identity(n, n))
            .iter()
            .all(|v| v.norm() < tol)
    }

    /// Rewrites `op` in terms of the new modes.
    pub fn apply(&self, op: &FermionOperator) -> Result<FermionOperator> {
        check_modes(self.n_modes(), op.n_modes())?;
        let n = self.n_modes();
        // expansion of each ladder operator over new modes
        let expand = |(a, dagger): LadderOp| -> Vec<(Complex64, LadderOp)> {
            (0..n)
                .filter_map(|b| {
                    let w = self.matrix[(a, b)];
                    let w = if dagger { w.conj() } else { w };
                    (w.norm() > 1e-14).then_some((w, (b, dagger)))
                })
                .collect()
        };
        let mut out = FermionOperator::zero(n);
        for term in &op.terms {
            let mut partial: Vec<(Complex64, Vec<LadderOp>)> = vec![(term.coeff, Vec::new())];
            for &lop in &term.ops {
                let choices = expand(lop);
                let mut next = Vec::with_capacity(partial.len() * choices.len());
                for (c, ops) in &partial {
                    for &(w, new_op) in &choices {
                        let mut v = ops.clone();
                        v.push(new_op);
                        next.push((c * w, v));
                    }
                }
                partial = next;
            }
            for (coeff, ops) in partial {
                out.terms.push(FermionTerm { coeff, ops });
            }
        }
        Ok(out.simplify())
    }
}

/// Site basis to momentum basis, `c_j = n^{-1/2} sum_m lambda_m^j c~_m` per spin.
pub fn momentum_basis(n_sites: usize) -> Result<BasisChange> {
    check_sites(n_sites)?;
    let n = n_sites;
    let norm = 1.0 / (n as f64).sqrt();
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for s in Spin::BOTH {
        for j in 0..n {
            for m in 0..n {
                let lam = momentum_eigenvalue(n, m);
                w[(site_mode(n, j, s), m + n * s.index())] = lam.powu(j as u32) * norm;
            }
        }
    }
    Ok(BasisChange::new(w))
}

/// Momentum basis to symmetry basis: conjugate pairs combined into mirror-even/odd modes.
pub fn symmetry_eigenbasis(n_sites: usize) -> Result<BasisChange> {
    check_sites(n_sites)?;
    let n = n_sites;
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for s in Spin::BOTH {
        let mom = |m: usize| m + n * s.index();
        let sym = |o: SymmetryOrbital| symmetry_mode(n, o, s);
        w[(mom(0), sym(SymmetryOrbital::Plus))] = one;
        w[(mom(n / 2), sym(SymmetryOrbital::Minus))] = one;
        for p in 1..n / 2 {
            // c~_p = (d_e + d_o)/sqrt2, c~_{n-p} = (d_e - d_o)/sqrt2
            w[(mom(p), sym(SymmetryOrbital::Even(p)))] = r;
            w[(mom(p), sym(SymmetryOrbital::Odd(p)))] = r;
            w[(mom(n - p), sym(SymmetryOrbital::Even(p)))] = r;
            w[(mom(n - p), sym(SymmetryOrbital::Odd(p)))] = -r;
        }
    }
    Ok(BasisChange::new(w))
}

/// Site basis straight to the symmetry basis.
pub fn site_to_symmetry(n_sites: usize) -> Result<BasisChange> {
    Ok(momentum_basis(n_sites)?.then(&symmetry_eigenbasis(n_sites)?))
}

/// Jordan-Wigner image of `op` on `n_modes` qubits.
pub fn jordan_wigner(op: &FermionOperator, ordering: &ModeOrdering) -> Result<PauliSum> {
    let n = op.n_modes();
    check_modes(n, ordering.n_modes())?;
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    // c_k -> (1/2) X_q Z.. + (i/2) Y_q Z..
    let ladder = |(k, dagger): LadderOp| -> [(Complex64, PauliString); 2] {
        let q = ordering.qubit_of(k);
        let mut xs = PauliString::z_string(n, 0..q);
        let mut ys = xs;
        xs.set(q, Letter::X);
        ys.set(q, Letter::Y);
        [(half, xs), (if dagger { -half_i } else { half_i }, ys)]
    };
    let mut acc: Vec<(PauliString, Complex64)> = Vec::new();
    for term in op.terms() {
        let mut partial = vec![(term.coeff, PauliString::identity(n))];
        for &lop in &term.ops {
            let pieces = ladder(lop);
            let mut next = Vec::with_capacity(partial.len() * 2);
            for (c, p) in &partial {
                for (w, s) in &pieces {
                    let (ph, r) = p.multiply_unchecked(s);
                    next.push((c * w * ph, r));
                }
            }
            partial = next;
        }
        acc.extend(partial.into_iter().map(|(c, p)| (p, c)));
    }
    PauliSum::from_terms(n, acc)
}

/// Two-qubit unitary taking a symmetry-basis pair `(e, o)` back to the
/// momentum pair `(p, n-p)`; local index `bit(q_e) + 2 bit(q_o)`.
/// Requires the two qubits to be adjacent in the Jordan-Wigner order.
pub fn pair_unitary() -> [[Complex64; 4]; 4] {
    let z = Complex64::default();
    let o = Complex64::new(1.0, 0.0);
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    // columns: |00>, e occupied, o occupied, both
    [
        [o, z, z, z],
        [z, r, r, z],
        [z, r, -r, z],
        [z, z, z, -o],
    ]
}
