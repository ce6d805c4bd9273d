//! Qubit tapering with diagonal Z2 symmetries, its reversal on states, and
//! measurement of the rotation eigenvalue on the restored register.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::{momentum_of, pair_unitary, symmetry_mode, symmetry_orbitals, ModeOrdering, Spin, SymmetryOrbital};
use crate::pauli::{Letter, PauliString, PauliSum};
use crate::simulator::{run, Gate, ShotCounts, Statevector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaperedSymmetry {
    pub symmetry: PauliString,
    /// Designated qubit removed by this symmetry.
    pub qubit: usize,
    /// Sector eigenvalue, `+1` or `-1`.
    pub eigenvalue: i8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaperingPlan {
    pub n_qubits: usize,
    pub symmetries: Vec<TaperedSymmetry>,
}

/// Plans the removal of one qubit per symmetry. The designated qubit of `S` is
/// the lowest qubit in the support of `S` untouched by every other symmetry.
pub fn build_plan(h: &PauliSum, symmetries: &[PauliString], eigenvalues: &[i8]) -> Result<TaperingPlan> {
    if symmetries.len() != eigenvalues.len() {
        return Err(Error::LengthMismatch {
            expected: symmetries.len(),
            found: eigenvalues.len(),
        });
    }
    let n = h.n_qubits();
    for (s, &e) in symmetries.iter().zip(eigenvalues) {
        if s.n_qubits() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.n_qubits(),
            });
        }
        if !s.is_diagonal() || s.is_identity() {
            return Err(Error::NotDiagonal(s.to_string()));
        }
        if e != 1 && e != -1 {
            return Err(Error::Numerical(format!("sector eigenvalue {e} is not +-1")));
        }
        if let Some((p, _)) = h.terms().iter().find(|(p, _)| !p.commutes_unchecked(s)) {
            return Err(Error::NonCommuting(format!("{s} and Hamiltonian term {p}")));
        }
    }
    let mut out = Vec::with_capacity(symmetries.len());
    for (i, (s, &e)) in symmetries.iter().zip(eigenvalues).enumerate() {
        let others = symmetries
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(0u64, |acc, (_, o)| acc | o.support());
        let admissible = s.support() & !others;
        if admissible == 0 {
            return Err(Error::NoAdmissibleQubit(s.to_string()));
        }
        out.push(TaperedSymmetry {
            symmetry: *s,
            qubit: admissible.trailing_zeros() as usize,
            eigenvalue: e,
        });
    }
    Ok(TaperingPlan {
        n_qubits: n,
        symmetries: out,
    })
}

impl TaperingPlan {
    pub fn n_reduced(&self) -> usize {
        self.n_qubits - self.symmetries.len()
    }

    pub fn designated(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.symmetries.iter().map(|s| s.qubit).collect();
        v.sort_unstable();
        v
    }

    /// Full-register positions of the reduced qubits, ascending.
    pub fn kept(&self) -> Vec<usize> {
        let d = self.designated();
        (0..self.n_qubits).filter(|q| !d.contains(q)).collect()
    }

    /// Same symmetries and qubits, other eigenvalues.
    pub fn with_eigenvalues(&self, eigenvalues: &[i8]) -> Result<TaperingPlan> {
        if eigenvalues.len() != self.symmetries.len() {
            return Err(Error::LengthMismatch {
                expected: self.symmetries.len(),
                found: eigenvalues.len(),
            });
        }
        let mut p = self.clone();
        for (s, &e) in p.symmetries.iter_mut().zip(eigenvalues) {
            s.eigenvalue = e;
        }
        Ok(p)
    }

    /// `U = prod_S (X_k + S) / sqrt 2` as a Pauli sum.
    pub fn clifford(&self) -> Result<PauliSum> {
        let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut u = PauliSum::identity(self.n_qubits);
        for s in &self.symmetries {
            let x = PauliString::single(self.n_qubits, s.qubit, Letter::X);
            let us = PauliSum::from_terms(self.n_qubits, [(x, r), (s.symmetry, r)])?;
            u = u.sum_product(&us)?;
        }
        Ok(u)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Gates restoring the symmetry qubits on a full register whose designated
    /// qubits start in `|0>`: `X` for eigenvalue `-1`, one controlled-X from
    /// every other qubit of `S`, and a `Z` phase for eigenvalue `-1`.
    pub fn untaper_circuit(&self) -> Vec<Gate> {
        let mut gates = Vec::new();
        for s in &self.symmetries {
            if s.eigenvalue < 0 {
                gates.push(Gate::X { qubit: s.qubit });
            }
            for q in 0..self.n_qubits {
                if q != s.qubit && s.symmetry.support() >> q & 1 == 1 {
                    gates.push(Gate::Cx {
                        control: q,
                        target: s.qubit,
                    });
                }
            }
            if s.eigenvalue < 0 {
                // Rz(pi) = -i Z
                gates.push(Gate::Rz {
                    qubit: s.qubit,
                    theta: std::f64::consts::PI,
                });
            }
        }
        gates
    }

    /// Reduced-register gates relabelled onto the full register.
    pub fn lift_circuit(&self, reduced: &[Gate]) -> Result<Vec<Gate>> {
        let kept = self.kept();
        let map = |q: usize| -> Result<usize> {
            kept.get(q).copied().ok_or(Error::DimensionMismatch {
                expected: kept.len(),
                found: q + 1,
            })
        };
        reduced
            .iter()
            .map(|g| {
                Ok(match g {
                    Gate::Ry { qubit, theta } => Gate::Ry { qubit: map(*qubit)?, theta: *theta },
                    Gate::Rz { qubit, theta } => Gate::Rz { qubit: map(*qubit)?, theta: *theta },
                    Gate::X { qubit } => Gate::X { qubit: map(*qubit)? },
                    Gate::Cz { a, b } => Gate::Cz { a: map(*a)?, b: map(*b)? },
                    Gate::Cx { control, target } => Gate::Cx {
                        control: map(*control)?,
                        target: map(*target)?,
                    },
                    Gate::Unitary2 { q0, q1, matrix } => Gate::Unitary2 {
                        q0: map(*q0)?,
                        q1: map(*q1)?,
                        matrix: *matrix,
                    },
                })
            })
            .collect()
    }

    /// Places reduced amplitudes on the kept qubits, designated qubits in `|0>`.
    pub fn embed_state(&self, psi: &Statevector) -> Result<Statevector> {
        if psi.n_qubits() != self.n_reduced() {
            return Err(Error::DimensionMismatch {
                expected: self.n_reduced(),
                found: psi.n_qubits(),
            });
        }
        let kept = self.kept();
        let mut amps = vec![Complex64::default(); 1 << self.n_qubits];
        for (r, a) in psi.amplitudes().iter().enumerate() {
            amps[scatter(r, &kept)] = *a;
        }
        Ok(Statevector::from_amplitudes_unchecked(amps))
    }
}

fn scatter(r: usize, positions: &[usize]) -> usize {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &q)| acc | ((r >> i & 1) << q))
}

/// `U H U` with every designated `X` replaced by its sector eigenvalue.
/// Each term is conjugated exactly: `U_S P U_S` is `P` when `P` commutes
/// with `X_k`, and `-P X_k S` otherwise.
pub fn taper(h: &PauliSum, plan: &TaperingPlan) -> Result<PauliSum> {
    if h.n_qubits() != plan.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: plan.n_qubits,
            found: h.n_qubits(),
        });
    }
    let designated = plan.designated();
    let mut terms = Vec::with_capacity(h.len());
    for (p, c) in h.terms() {
        let (mut p, mut coeff) = (*p, *c);
        for s in &plan.symmetries {
            if !p.commutes(&s.symmetry)? {
                return Err(Error::NonCommuting(format!("{} and term {p}", s.symmetry)));
            }
            if matches!(p.letter(s.qubit), Letter::Z | Letter::Y) {
                let x = PauliString::single(plan.n_qubits, s.qubit, Letter::X);
                let (ph1, px) = p.multiply(&x)?;
                let (ph2, pxs) = px.multiply(&s.symmetry)?;
                p = pxs;
                coeff *= -ph1 * ph2;
            }
        }
        for s in &plan.symmetries {
            match p.letter(s.qubit) {
                Letter::I => {}
                Letter::X => coeff *= f64::from(s.eigenvalue),
                l => {
                    return Err(Error::Numerical(format!(
                        "term {p} carries {l:?} on designated qubit {}",
                        s.qubit
                    )))
                }
            }
        }
        terms.push((p.remove_qubits(&designated), coeff));
    }
    PauliSum::from_terms(plan.n_reduced(), terms)
}

/// Full-register state `U (psi (x) |s>)` carrying the sector eigenvalues.
pub fn untaper_state(psi: &Statevector, plan: &TaperingPlan) -> Result<Statevector> {
    let start = plan.embed_state(psi)?;
    run(&plan.untaper_circuit(), plan.n_qubits, Some(&start))
}

/// Inverse of [`untaper_state`] on a state of the plan's sector.
pub fn taper_state(psi: &Statevector, plan: &TaperingPlan) -> Result<Statevector> {
    if psi.n_qubits() != plan.n_qubits {
        return Err(Error::DimensionMismatch {
            expected: plan.n_qubits,
            found: psi.n_qubits(),
        });
    }
    let inverse: Vec<Gate> = plan
        .untaper_circuit()
        .into_iter()
        .rev()
        .map(|g| match g {
            Gate::Rz { qubit, theta } => Gate::Rz { qubit, theta: -theta },
            g => g,
        })
        .collect();
    let back = run(&inverse, plan.n_qubits, Some(psi))?;
    let kept = plan.kept();
    let amps: Vec<Complex64> = (0..1usize << kept.len())
        .map(|r| back.amplitudes()[scatter(r, &kept)])
        .collect();
    let leak = 1.0 - amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
    if leak.abs() > 1e-8 {
        return Err(Error::NotEigenstate(vec![("sector leakage".into(), leak)]));
    }
    Statevector::normalized(amps)
}

/// Gates rotating every e/o pair back to conjugate momentum modes.
pub fn c4_basis_gates(n_sites: usize, ordering: &ModeOrdering) -> Result<Vec<Gate>> {
    let mut gates = Vec::new();
    for s in Spin::BOTH {
        for p in 1..n_sites / 2 {
            let qe = ordering.qubit_of(symmetry_mode(n_sites, SymmetryOrbital::Even(p), s));
            let qo = ordering.qubit_of(symmetry_mode(n_sites, SymmetryOrbital::Odd(p), s));
            if qe.abs_diff(qo) != 1 {
                return Err(Error::Numerical(format!(
                    "mirror pair {p} is not adjacent (qubits {qe}, {qo})"
                )));
            }
            gates.push(Gate::Unitary2 {
                q0: qe,
                q1: qo,
                matrix: pair_unitary(),
            });
        }
    }
    Ok(gates)
}

/// Rotation eigenvalue index `m` (`lambda = exp(2 pi i m / n)`) of a momentum-register basis state.
pub fn c4_index(n_sites: usize, ordering: &ModeOrdering, basis: usize) -> Result<usize> {
    let mut m = 0;
    for o in symmetry_orbitals(n_sites)? {
        for s in Spin::BOTH {
            let q = ordering.qubit_of(symmetry_mode(n_sites, o, s));
            if basis >> q & 1 == 1 {
                m += momentum_of(n_sites, o);
            }
        }
    }
    Ok(m % n_sites)
}

/// Distribution of the rotation eigenvalue over `lambda_m = exp(2 pi i m / n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C4Distribution {
    pub n_sites: usize,
    pub probabilities: Vec<f64>,
}

impl C4Distribution {
    pub fn probability(&self, m: usize) -> f64 {
        self.probabilities[m % self.n_sites]
    }

    /// `P(lambda = -1)`.
    pub fn minus_one(&self) -> f64 {
        self.probability(self.n_sites / 2)
    }

    pub fn plus_one(&self) -> f64 {
        self.probability(0)
    }

    /// Shot histogram of momentum-register outcomes.
    pub fn from_counts(n_sites: usize, ordering: &ModeOrdering, counts: &ShotCounts) -> Result<Self> {
        if counts.total == 0 {
            return Err(Error::Numerical("empty shot record".into()));
        }
        let mut probabilities = vec![0.0; n_sites];
        for (&o, &c) in &counts.counts {
            probabilities[c4_index(n_sites, ordering, o as usize)?] += c as f64 / counts.total as f64;
        }
        Ok(Self { n_sites, probabilities })
    }
}

/// Exact rotation-eigenvalue distribution of a full symmetry-basis state.
pub fn measure_c4(psi_full: &Statevector, n_sites: usize, ordering: &ModeOrdering) -> Result<C4Distribution> {
    let n = 2 * n_sites;
    if psi_full.n_qubits() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: psi_full.n_qubits(),
        });
    }
    let rotated = run(&c4_basis_gates(n_sites, ordering)?, n, Some(psi_full))?;
    let mut probabilities = vec![0.0; n_sites];
    for (b, p) in rotated.probabilities().into_iter().enumerate() {
        probabilities[c4_index(n_sites, ordering, b)?] += p;
    }
    Ok(C4Distribution { n_sites, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hubbard::{exact_diagonalize, BasisFilter, HubbardModel, HubbardParams, Irrep, Sector};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
        (a - b).iter().all(|v| v.norm() < tol)
    }

    fn model(tp: f64, u: f64) -> HubbardModel {
        HubbardModel::new(HubbardParams::new(4, 1.0, tp, u).unwrap()).unwrap()
    }

    fn plan_for(m: &HubbardModel, sector: &Sector) -> TaperingPlan {
        build_plan(&m.hamiltonian, &m.symmetries.tapering_set(), &sector.tapering_eigenvalues()).unwrap()
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn single_zz_symmetry() {
        let h: PauliSum = PauliSum::from_text("1 0 XX\n1 0 ZZ", None).unwrap();
        let zz: PauliString = "ZZ".parse().unwrap();
        let plan = build_plan(&h, &[zz], &[1]).unwrap();
        assert_eq!(plan.symmetries[0].qubit, 0);
        let u = plan.clifford().unwrap().to_dense();
        let x0 = PauliString::single(2, 0, Letter::X).to_dense();
        assert!(close(&(&u * zz.to_dense() * u.adjoint()), &x0, 1e-12));
        assert!(close(&(&u * u.adjoint()), &DMatrix::identity(4, 4), 1e-12));
        let reduced = taper(&h, &plan).unwrap();
        assert_eq!(reduced.n_qubits(), 1);
    }

    #[test]
    fn independent_single_qubit_symmetries() {
        let h = PauliSum::from_text("1 0 ZI\n0.5 0 IZ", None).unwrap();
        let syms: Vec<PauliString> = vec!["IZ".parse().unwrap(), "ZI".parse().unwrap()];
        let plan = build_plan(&h, &syms, &[1, -1]).unwrap();
        let mut q: Vec<usize> = plan.symmetries.iter().map(|s| s.qubit).collect();
        q.sort();
        assert_eq!(q, vec![0, 1]);
    }

    #[test]
    fn plan_errors() {
        let h = PauliSum::from_text("1 0 XX\n1 0 ZZ", None).unwrap();
        let zi: PauliString = "IZ".parse().unwrap();
        assert!(matches!(build_plan(&h, &[zi], &[1]), Err(Error::NonCommuting(_))));
        let xx: PauliString = "XX".parse().unwrap();
        assert!(matches!(build_plan(&h, &[xx], &[1]), Err(Error::NotDiagonal(_))));
        let zz: PauliString = "ZZ".parse().unwrap();
        let zz2: PauliString = "ZZ".parse().unwrap();
        assert!(matches!(build_plan(&h, &[zz, zz2], &[1, 1]), Err(Error::NoAdmissibleQubit(_))));
    }

    #[test]
    fn four_site_plan_designates_four_qubits() {
        let m = model(0.5, 0.5);
        let plan = plan_for(&m, &Sector::half_filling(4, Irrep::A1).unwrap());
        assert_eq!(plan.designated().len(), 4);
        assert_eq!(plan.n_reduced(), 4);
        let u = plan.clifford().unwrap().to_dense();
        assert!(close(&(&u * u.adjoint()), &DMatrix::identity(256, 256), 1e-10));
        for s in &plan.symmetries {
            let x = PauliString::single(8, s.qubit, Letter::X).to_dense();
            assert!(close(&(&u * s.symmetry.to_dense() * u.adjoint()), &x, 1e-10));
        }
        let json = plan.to_json().unwrap();
        assert_eq!(TaperingPlan::from_json(&json).unwrap(), plan);
    }

    #[test]
    fn tapering_identity() {
        let m = model(0.5, 0.5);
        let plan = plan_for(&m, &Sector::half_filling(4, Irrep::B1).unwrap());
        assert_eq!(taper(&PauliSum::identity(8), &plan).unwrap(), PauliSum::identity(4));
    }

    #[test]
    fn sector_spectra_partition_the_full_spectrum() {
        let m = model(0.5, 0.5);
        let base = plan_for(&m, &Sector::half_filling(4, Irrep::A1).unwrap());
        let mut all = Vec::new();
        for bits in 0..16 {
            let e: Vec<i8> = (0..4).map(|k| if bits >> k & 1 == 0 { 1 } else { -1 }).collect();
            let h = taper(&m.hamiltonian, &base.with_eigenvalues(&e).unwrap()).unwrap();
            all.extend(exact_diagonalize(&h, &BasisFilter::new()).unwrap().energies);
        }
        let full = exact_diagonalize(&m.hamiltonian, &BasisFilter::new()).unwrap().energies;
        for (a, b) in sorted(all).iter().zip(&full) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tapered_sector_matches_restricted_spectrum() {
        let m = model(0.5, 0.5);
        for irrep in [Irrep::A1, Irrep::B1, Irrep::E] {
            let sector = Sector::half_filling(4, irrep).unwrap();
            let plan = plan_for(&m, &sector);
            let h = taper(&m.hamiltonian, &plan).unwrap();
            let got = exact_diagonalize(&h, &BasisFilter::new()).unwrap().energies;
            let expect = m.spectrum(Some(&sector), None).unwrap().energies;
            assert_eq!(got.len(), expect.len());
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10, "{irrep}");
            }
            let n_red = taper(&m.number, &plan).unwrap();
            let filter = BasisFilter::new().require(n_red, 4.0).unwrap();
            let g = exact_diagonalize(&h, &filter).unwrap().ground_energy();
            assert!((g - m.sector_ground(&sector).unwrap().0).abs() < 1e-10, "{irrep}");
        }
    }

    #[test]
    fn tapered_square_matches_dense_square() {
        let m = model(0.5, 0.5);
        let plan = plan_for(&m, &Sector::half_filling(4, Irrep::B1).unwrap());
        let h = taper(&m.hamiltonian, &plan).unwrap();
        let d = h.to_dense();
        assert!(close(&h.sum_product(&h).unwrap().to_dense(), &(&d * &d), 1e-10));
    }

    fn reduced_ground(m: &HubbardModel, plan: &TaperingPlan) -> (f64, Statevector) {
        let h = taper(&m.hamiltonian, plan).unwrap();
        let n_red = taper(&m.number, plan).unwrap();
        let s = exact_diagonalize(&h, &BasisFilter::new().require(n_red, 4.0).unwrap()).unwrap();
        (s.ground_energy(), s.state(0))
    }

    #[test]
    fn untapered_b1_state_carries_sector_and_energy() {
        let m = model(0.0, 0.5);
        let plan = plan_for(&m, &Sector::half_filling(4, Irrep::B1).unwrap());
        let (e, psi) = reduced_ground(&m, &plan);
        let full = untaper_state(&psi, &plan).unwrap();
        let ev = |s: PauliString| PauliSum::from_string(s, c(1.0)).expectation(&full).unwrap().re;
        assert!((ev(m.symmetries.mirror) + 1.0).abs() < 1e-10);
        assert!((ev(m.symmetries.c2) - 1.0).abs() < 1e-10);
        assert!((m.hamiltonian.expectation(&full).unwrap().re - e).abs() < 1e-10);
        let back = taper_state(&full, &plan).unwrap();
        assert!((back.overlap(&psi) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn b_symmetry_needs_one_controlled_x() {
        let m = model(0.0, 0.5);
        let sy = &m.symmetries;
        let plan = plan_for(&m, &Sector::half_filling(4, Irrep::B1).unwrap());
        let b = plan.symmetries.iter().find(|s| s.symmetry == sy.b).unwrap();
        assert_eq!(b.symmetry.weight(), 2);
        let cx = plan
            .untaper_circuit()
            .iter()
            .filter(|g| matches!(g, Gate::Cx { target, .. } if *target == b.qubit))
            .count();
        assert_eq!(cx, 1);
    }

    #[test]
    fn c4_distribution_of_ground_states() {
        let ord = ModeOrdering::tapering_layout(4).unwrap();
        let m = model(0.0, 0.5);
        let plan = plan_for(&m, &Sector::half_filling(4, Irrep::B1).unwrap());
        let b1 = untaper_state(&reduced_ground(&m, &plan).1, &plan).unwrap();
        let d = measure_c4(&b1, 4, &ord).unwrap();
        assert!((d.minus_one() - 1.0).abs() < 1e-10);
        let m2 = model(1.0, 0.5);
        let plan = plan_for(&m2, &Sector::half_filling(4, Irrep::A1).unwrap());
        let a1 = untaper_state(&reduced_ground(&m2, &plan).1, &plan).unwrap();
        let d = measure_c4(&a1, 4, &ord).unwrap();
        assert!(d.minus_one().abs() < 1e-10);
        assert!((d.plus_one() - 1.0).abs() < 1e-10);
        let mix: Vec<Complex64> = a1
            .amplitudes()
            .iter()
            .zip(b1.amplitudes())
            .map(|(x, y)| (x + y) / 2f64.sqrt())
            .collect();
        let d = measure_c4(&Statevector::from_amplitudes(mix).unwrap(), 4, &ord).unwrap();
        assert!((d.minus_one() - 0.5).abs() < 1e-10);
        assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c4_agrees_with_rotation_operator_on_six_sites() {
        let m = HubbardModel::new(HubbardParams::new(6, 1.0, 1.2, 1.5).unwrap()).unwrap();
        let sector = Sector::half_filling(6, Irrep::A2).unwrap();
        let (_, psi) = m.sector_ground(&sector).unwrap();
        let label = m.classify(&psi).unwrap();
        let d = measure_c4(&psi, 6, &m.ordering).unwrap();
        let lam = label.lambda.unwrap();
        let m_idx = (0..6)
            .find(|&k| (crate::fermion::momentum_eigenvalue(6, k) - lam).norm() < 1e-6)
            .unwrap();
        assert!((d.probability(m_idx) - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn untaper_preserves_inner_products(
            re in prop::collection::vec(-1.0f64..1.0, 32),
            im in prop::collection::vec(-1.0f64..1.0, 32),
            sector_bits in 0u8..16,
        ) {
            let m = model(0.3, 0.5);
            let e: Vec<i8> = (0..4).map(|k| if sector_bits >> k & 1 == 0 { 1 } else { -1 }).collect();
            let plan = plan_for(&m, &Sector::half_filling(4, Irrep::A1).unwrap()).with_eigenvalues(&e).unwrap();
            let mk = |o: usize| Statevector::normalized(
                (0..16).map(|i| Complex64::new(re[o + i], im[o + i])).collect()).unwrap();
            let (a, b) = (mk(0), mk(16));
            let (fa, fb) = (untaper_state(&a, &plan).unwrap(), untaper_state(&b, &plan).unwrap());
            prop_assert!((fa.inner(&fb) - a.inner(&b)).norm() < 1e-10);
            let h = taper(&m.hamiltonian, &plan).unwrap();
            let e_red = h.expectation(&a).unwrap().re;
            let e_full = m.hamiltonian.expectation(&fa).unwrap().re;
            prop_assert!((e_red - e_full).abs() < 1e-10);
            for s in &plan.symmetries {
                let v = PauliSum::from_string(s.symmetry, c(1.0)).expectation(&fa).unwrap().re;
                prop_assert!((v - f64::from(s.eigenvalue)).abs() < 1e-10);
            }
            // global phase does not move the C4 distribution
            let phased = Statevector::from_amplitudes(
                fa.amplitudes().iter().map(|x| x * Complex64::from_polar(1.0, 0.7)).collect()).unwrap();
            let d1 = measure_c4(&fa, 4, &m.ordering).unwrap();
            let d2 = measure_c4(&phased, 4, &m.ordering).unwrap();
            for (x, y) in d1.probabilities.iter().zip(&d2.probabilities) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
