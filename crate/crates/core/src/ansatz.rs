//! Adaptive RyRz circuits: an initial rotation layer followed by a sequence
//! of CZ entanglers, each trailed by Ry Rz rotations on both of its qubits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Gate;

/// Directed qubit pairs available as entanglers, addressed by index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingMap {
    pub n_qubits: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl CouplingMap {
    pub fn new(n_qubits: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if a >= n_qubits || b >= n_qubits || a == b {
                return Err(Error::InvalidGate(format!("coupling pair {i} = ({a}, {b}) on {n_qubits} qubits")));
            }
            if pairs[..i].contains(&(a, b)) {
                return Err(Error::InvalidGate(format!("duplicate coupling pair ({a}, {b})")));
            }
        }
        Ok(Self { n_qubits, pairs })
    }

    /// Five-qubit T-shaped device restricted to its four active qubits.
    pub fn ourense() -> Self {
        Self {
            n_qubits: 4,
            pairs: vec![(0, 1), (1, 0), (1, 2), (1, 3), (2, 1), (3, 1)],
        }
    }

    /// Every ordered pair, lexicographic.
    pub fn all_pairs(n_qubits: usize) -> Self {
        let mut pairs = Vec::new();
        for a in 0..n_qubits {
            for b in 0..n_qubits {
                if a != b {
                    pairs.push((a, b));
                }
            }
        }
        Self { n_qubits, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Indices into a coupling map, in circuit order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CzSequence(pub Vec<usize>);

impl CzSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, map: &CouplingMap) -> Result<()> {
        match self.0.iter().find(|&&i| i >= map.len()) {
            Some(&i) => Err(Error::InvalidGate(format!(
                "sequence index {i} outside coupling map of {} pairs",
                map.len()
            ))),
            None => Ok(()),
        }
    }

    pub fn gates(&self, map: &CouplingMap) -> Result<Vec<(usize, usize)>> {
        self.validate(map)?;
        Ok(self.0.iter().map(|&i| map.pairs[i]).collect())
    }

    /// Compact digit form, one digit per entangler (maps up to 10 pairs).
    pub fn to_digits(&self) -> String {
        self.0.iter().map(|i| i.to_string()).collect()
    }
}

impl std::fmt::Display for CzSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Parses digit strings such as `"505 441"` or `"505441"` (chunked by `n_cz`),
/// or a JSON array of arrays.
pub fn parse_sequences(text: &str, n_cz: usize) -> Result<Vec<CzSequence>> {
    let text = text.trim();
    if text.starts_with('[') {
        let v: Vec<Vec<usize>> =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("sequence list: {e}")))?;
        return Ok(v.into_iter().map(CzSequence).collect());
    }
    let digits = |s: &str| -> Result<Vec<usize>> {
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::Parse(format!("`{c}` in sequence `{s}`")))
            })
            .collect()
    };
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() > 1 {
        return tokens.iter().map(|t| Ok(CzSequence(digits(t)?))).collect();
    }
    let all = digits(text)?;
    if n_cz == 0 || all.len() % n_cz != 0 {
        return Err(Error::Parse(format!(
            "{} digits do not split into sequences of length {n_cz}",
            all.len()
        )));
    }
    Ok(all.chunks(n_cz).map(|c| CzSequence(c.to_vec())).collect())
}

/// Uniform i.i.d. draws over the map's indices.
pub fn random_sequence<R: Rng + ?Sized>(map: &CouplingMap, n_cz: usize, rng: &mut R) -> Result<CzSequence> {
    if map.is_empty() {
        return Err(Error::InvalidGate("empty coupling map".into()));
    }
    Ok(CzSequence((0..n_cz).map(|_| rng.random_range(0..map.len())).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Slot {
    Ry { qubit: usize, param: usize },
    Rz { qubit: usize, param: usize },
    Cz { a: usize, b: usize },
}

/// Gate template with rotation angles taken from a parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametrizedCircuit {
    pub n_qubits: usize,
    pub n_params: usize,
    pub slots: Vec<Slot>,
}

impl ParametrizedCircuit {
    pub fn bind(&self, theta: &[f64]) -> Result<Vec<Gate>> {
        if theta.len() != self.n_params {
            return Err(Error::LengthMismatch {
                expected: self.n_params,
                found: theta.len(),
            });
        }
        Ok(self
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Ry { qubit, param } => Gate::Ry {
                    qubit,
                    theta: theta[param],
                },
                Slot::Rz { qubit, param } => Gate::Rz {
                    qubit,
                    theta: theta[param],
                },
                Slot::Cz { a, b } => Gate::Cz { a, b },
            })
            .collect())
    }

    pub fn n_entanglers(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Cz { .. })).count()
    }

    fn push_ryrz(&mut self, qubit: usize) {
        let p = self.n_params;
        self.slots.push(Slot::Ry { qubit, param: p });
        self.slots.push(Slot::Rz { qubit, param: p + 1 });
        self.n_params += 2;
    }
}

/// Initial Ry Rz on every qubit, then per entangler `CZ(c, t)`, Ry Rz on `c`, Ry Rz on `t`.
/// `P = 2 n_active + 4 n_cz`.
pub fn build_adaptive_ryrz(n_active: usize, seq: &CzSequence, map: &CouplingMap) -> Result<ParametrizedCircuit> {
    if n_active == 0 {
        return Err(Error::InvalidGate("ansatz needs at least one qubit".into()));
    }
    let pairs = seq.gates(map)?;
    if let Some(&(c, t)) = pairs.iter().find(|&&(c, t)| c >= n_active || t >= n_active) {
        return Err(Error::InvalidGate(format!(
            "entangler ({c}, {t}) outside the {n_active} active qubits"
        )));
    }
    let mut circ = ParametrizedCircuit {
        n_qubits: n_active,
        n_params: 0,
        slots: Vec::new(),
    };
    for q in 0..n_active {
        circ.push_ryrz(q);
    }
    for (c, t) in pairs {
        circ.slots.push(Slot::Cz { a: c, b: t });
        circ.push_ryrz(c);
        circ.push_ryrz(t);
    }
    Ok(circ)
}

/// Baseline with fixed layers: Ry Rz on every qubit, then a CZ ladder
/// `(0,1), (1,2), ...`, repeated `layers` times, closed by a final rotation layer.
pub fn build_linear_ryrz(n_qubits: usize, layers: usize) -> Result<ParametrizedCircuit> {
    if n_qubits == 0 {
        return Err(Error::InvalidGate("ansatz needs at least one qubit".into()));
    }
    let mut circ = ParametrizedCircuit {
        n_qubits,
        n_params: 0,
        slots: Vec::new(),
    };
    for _ in 0..layers {
        for q in 0..n_qubits {
            circ.push_ryrz(q);
        }
        for q in 0..n_qubits.saturating_sub(1) {
            circ.slots.push(Slot::Cz { a: q, b: q + 1 });
        }
    }
    for q in 0..n_qubits {
        circ.push_ryrz(q);
    }
    Ok(circ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::simulator::{run, Statevector};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn parameter_counts() {
        let map = CouplingMap::ourense();
        let seq = CzSequence(vec![0, 2, 1]);
        assert_eq!(build_adaptive_ryrz(4, &seq, &map).unwrap().n_params, 20);
        assert_eq!(build_adaptive_ryrz(4, &CzSequence(vec![]), &map).unwrap().n_params, 8);
        let map8 = CouplingMap::all_pairs(8);
        let seq = CzSequence((0..24).map(|i| i % map8.len()).collect());
        assert_eq!(build_adaptive_ryrz(8, &seq, &map8).unwrap().n_params, 112);
    }

    #[test]
    fn digit_strings_decode() {
        let map = CouplingMap::ourense();
        let seqs = parse_sequences("505441031454", 3).unwrap();
        assert_eq!(seqs.len(), 4);
        assert_eq!(seqs[0], CzSequence(vec![5, 0, 5]));
        assert_eq!(seqs[3], CzSequence(vec![4, 5, 4]));
        let s = &parse_sequences("012", 3).unwrap()[0];
        assert_eq!(s.gates(&map).unwrap(), vec![(0, 1), (1, 0), (1, 2)]);
        let s = &parse_sequences("021", 3).unwrap()[0];
        assert_eq!(s.gates(&map).unwrap(), vec![(0, 1), (1, 2), (1, 0)]);
        assert_eq!(parse_sequences("505 441", 0).unwrap().len(), 2);
        assert_eq!(parse_sequences("[[0,1],[2]]", 2).unwrap()[1], CzSequence(vec![2]));
        assert!(parse_sequences("50a", 3).is_err());
        assert!(parse_sequences("5054", 3).is_err());
    }

    #[test]
    fn invalid_sequences_are_rejected() {
        let map = CouplingMap::ourense();
        assert!(build_adaptive_ryrz(4, &CzSequence(vec![6]), &map).is_err());
        assert!(build_adaptive_ryrz(2, &CzSequence(vec![2]), &map).is_err());
        assert!(CouplingMap::new(2, vec![(0, 1), (0, 1)]).is_err());
        assert!(CouplingMap::new(2, vec![(0, 2)]).is_err());
    }

    #[test]
    fn zero_angles_give_identity_and_first_ry_flips_qubit_zero() {
        let map = CouplingMap::ourense();
        let circ = build_adaptive_ryrz(4, &CzSequence(vec![0, 3]), &map).unwrap();
        let psi = run(&circ.bind(&vec![0.0; circ.n_params]).unwrap(), 4, None).unwrap();
        assert!((psi.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        let mut theta = vec![0.0; circ.n_params];
        theta[0] = PI;
        let gates = circ.bind(&theta).unwrap();
        assert_eq!(gates[0], Gate::Ry { qubit: 0, theta: PI });
        let psi = run(&gates, 4, None).unwrap();
        assert!((psi.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
        assert!(circ.bind(&[0.0]).is_err());
    }

    #[test]
    fn declaration_order() {
        let map = CouplingMap::ourense();
        let circ = build_adaptive_ryrz(2, &CzSequence(vec![1]), &map).unwrap();
        let expect = vec![
            Slot::Ry { qubit: 0, param: 0 },
            Slot::Rz { qubit: 0, param: 1 },
            Slot::Ry { qubit: 1, param: 2 },
            Slot::Rz { qubit: 1, param: 3 },
            Slot::Cz { a: 1, b: 0 },
            Slot::Ry { qubit: 1, param: 4 },
            Slot::Rz { qubit: 1, param: 5 },
            Slot::Ry { qubit: 0, param: 6 },
            Slot::Rz { qubit: 0, param: 7 },
        ];
        assert_eq!(circ.slots, expect);
    }

    #[test]
    fn random_sequences_are_reproducible_and_uniform() {
        let map = CouplingMap::ourense();
        let a = random_sequence(&map, 12, &mut rng_for(3, &[1])).unwrap();
        let b = random_sequence(&map, 12, &mut rng_for(3, &[1])).unwrap();
        assert_eq!(a, b);
        let mut counts = vec![0u64; 216];
        let mut rng = rng_for(11, &[]);
        let draws = 100_000;
        for _ in 0..draws {
            let s = random_sequence(&map, 3, &mut rng).unwrap();
            counts[s.0[0] * 36 + s.0[1] * 6 + s.0[2]] += 1;
        }
        let expect = draws as f64 / 216.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // chi-square 1% critical value, 215 degrees of freedom
        assert!(chi2 < 266.0, "chi2 = {chi2}");
    }

    #[test]
    fn linear_baseline_layout() {
        let c = build_linear_ryrz(4, 2).unwrap();
        assert_eq!(c.n_entanglers(), 6);
        assert_eq!(c.n_params, 24);
    }

    fn kron_single(n: usize, q: usize, m: [[Complex64; 2]; 2]) -> DMatrix<Complex64> {
        let dim = 1 << n;
        DMatrix::from_fn(dim, dim, |r, c| {
            if (r ^ c) & !(1 << q) != 0 {
                return Complex64::default();
            }
            m[r >> q & 1][c >> q & 1]
        })
    }

    fn oracle_unitary(gates: &[Gate], n: usize) -> DMatrix<Complex64> {
        let dim = 1 << n;
        let mut u = DMatrix::<Complex64>::identity(dim, dim);
        for g in gates {
            let m = match *g {
                Gate::Ry { qubit, theta } => {
                    let (s, c) = (theta / 2.0).sin_cos();
                    let c = Complex64::new(c, 0.0);
                    let s = Complex64::new(s, 0.0);
                    kron_single(n, qubit, [[c, -s], [s, c]])
                }
                Gate::Rz { qubit, theta } => kron_single(
                    n,
                    qubit,
                    [
                        [Complex64::from_polar(1.0, -theta / 2.0), Complex64::default()],
                        [Complex64::default(), Complex64::from_polar(1.0, theta / 2.0)],
                    ],
                ),
                Gate::Cz { a, b } => DMatrix::from_fn(dim, dim, |r, c| {
                    if r != c {
                        Complex64::default()
                    } else if r >> a & 1 == 1 && r >> b & 1 == 1 {
                        Complex64::new(-1.0, 0.0)
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                }),
                _ => unreachable!(),
            };
            u = m * u;
        }
        u
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bound_circuit_matches_dense_oracle(
            seq in prop::collection::vec(0usize..6, 0..5),
            theta in prop::collection::vec(0.0f64..2.0 * PI, 28),
        ) {
            let map = CouplingMap::ourense();
            let circ = build_adaptive_ryrz(4, &CzSequence(seq), &map).unwrap();
            let gates = circ.bind(&theta[..circ.n_params]).unwrap();
            let u = oracle_unitary(&gates, 4);
            for b in [0usize, 5, 15] {
                let psi = run(&gates, 4, Some(&Statevector::basis_state(4, b))).unwrap();
                for (r, a) in psi.amplitudes().iter().enumerate() {
                    prop_assert!((a - u[(r, b)]).norm() < 1e-10);
                }
            }
        }

        #[test]
        fn two_pi_shift_is_a_global_phase(
            seq in prop::collection::vec(0usize..6, 1..4),
            theta in prop::collection::vec(0.0f64..2.0 * PI, 24),
            k in 0usize..24,
        ) {
            let map = CouplingMap::ourense();
            let circ = build_adaptive_ryrz(4, &CzSequence(seq), &map).unwrap();
            let theta = &theta[..circ.n_params];
            let mut shifted = theta.to_vec();
            let k = k % circ.n_params;
            shifted[k] += 2.0 * PI;
            let a = run(&circ.bind(theta).unwrap(), 4, None).unwrap();
            let b = run(&circ.bind(&shifted).unwrap(), 4, None).unwrap();
            prop_assert!((a.overlap(&b) - 1.0).abs() < 1e-10);
            prop_assert!((b.norm() - 1.0).abs() < 1e-10);
        }
    }
}
