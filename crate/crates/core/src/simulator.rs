//! Statevector simulation with optional depolarizing trajectories, readout
//! flips and shot-based Pauli-sum estimation.
//!
//! Basis index bit `k` is qubit `k`. Noise follows the depolarizing channel
//! `rho -> (1 - p) rho + p I/d` on the qubits of every gate, unwound into
//! trajectories: after a `k`-qubit gate a uniformly random non-identity Pauli
//! is applied with probability `p (4^k - 1) / 4^k`. Registers up to
//! [`MAX_DENSITY_QUBITS`] evolve the density matrix exactly instead and draw
//! all shots from the resulting distribution.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mitigation::EnergyEstimate;
use crate::pauli::{Letter, PauliString, PauliSum};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0...0>`.
    pub fn zero_state(n_qubits: usize) -> Self {
        Self::basis_state(n_qubits, 0)
    }

    pub fn basis_state(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::default(); 1 << n_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let s = Self::from_amplitudes_unchecked(amps);
        let dev = (s.norm() - 1.0).abs();
        if dev > 1e-10 {
            return Err(Error::NotNormalized(dev));
        }
        Ok(s)
    }

    /// Skips the normalization check. Panics if the length is not a power of two.
    pub fn from_amplitudes_unchecked(amps: Vec<Complex64>) -> Self {
        assert!(amps.len().is_power_of_two(), "amplitude count must be 2^n");
        let n_qubits = amps.len().trailing_zeros() as usize;
        Self { n_qubits, amps }
    }

    /// Normalizes arbitrary amplitudes.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        let s = Self::from_amplitudes_unchecked(amps);
        let n = s.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero vector".into()));
        }
        Ok(Self {
            n_qubits: s.n_qubits,
            amps: s.amps.into_iter().map(|a| a / n).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Statevector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|^2`.
    pub fn overlap(&self, other: &Statevector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Ry { qubit: usize, theta: f64 },
    Rz { qubit: usize, theta: f64 },
    X { qubit: usize },
    Cz { a: usize, b: usize },
    Cx { control: usize, target: usize },
    /// Two-qubit unitary, row-major over the local index `bit(q0) + 2 bit(q1)`.
    Unitary2 {
        q0: usize,
        q1: usize,
        matrix: [[Complex64; 4]; 4],
    },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } | Gate::X { qubit } => vec![qubit],
            Gate::Cz { a, b } => vec![a, b],
            Gate::Cx { control, target } => vec![control, target],
            Gate::Unitary2 { q0, q1, .. } => vec![q0, q1],
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(q) = qs.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::InvalidGate(format!(
                "{self:?} targets qubit {q} on a {n_qubits}-qubit register"
            )));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::InvalidGate(format!("{self:?} repeats a qubit")));
        }
        match self {
            Gate::Ry { theta, .. } | Gate::Rz { theta, .. } if !theta.is_finite() => {
                Err(Error::InvalidGate(format!("{self:?} has a non-finite angle")))
            }
            Gate::Unitary2 { matrix, .. } => {
                for i in 0..4 {
                    for j in 0..4 {
                        let dot: Complex64 = (0..4).map(|k| matrix[k][i].conj() * matrix[k][j]).sum();
                        let expect = if i == j { 1.0 } else { 0.0 };
                        if (dot - expect).norm() > 1e-12 {
                            return Err(Error::InvalidGate("unitary2 matrix is not unitary".into()));
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn apply_1q(amps: &mut [Complex64], q: usize, m: [[Complex64; 2]; 2]) {
    let bit = 1usize << q;
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (a0, a1) = (amps[i], amps[i | bit]);
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
        }
    }
}

pub(crate) fn apply_gate(amps: &mut [Complex64], gate: &Gate) {
    match *gate {
        Gate::Ry { qubit, theta } => {
            let (s, c) = (theta / 2.0).sin_cos();
            let (c, s) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
            apply_1q(amps, qubit, [[c, -s], [s, c]]);
        }
        Gate::Rz { qubit, theta } => {
            let bit = 1usize << qubit;
            let lo = Complex64::from_polar(1.0, -theta / 2.0);
            let hi = lo.conj();
            for (i, a) in amps.iter_mut().enumerate() {
                *a *= if i & bit == 0 { lo } else { hi };
            }
        }
        Gate::X { qubit } => {
            let bit = 1usize << qubit;
            for i in 0..amps.len() {
                if i & bit == 0 {
                    amps.swap(i, i | bit);
                }
            }
        }
        Gate::Cz { a, b } => {
            let m = (1usize << a) | (1usize << b);
            for (i, v) in amps.iter_mut().enumerate() {
                if i & m == m {
                    *v = -*v;
                }
            }
        }
        Gate::Cx { control, target } => {
            let (c, t) = (1usize << control, 1usize << target);
            for i in 0..amps.len() {
                if i & c != 0 && i & t == 0 {
                    amps.swap(i, i | t);
                }
            }
        }
        Gate::Unitary2 { q0, q1, ref matrix } => {
            let (b0, b1) = (1usize << q0, 1usize << q1);
            for i in 0..amps.len() {
                if i & b0 == 0 && i & b1 == 0 {
                    let idx = [i, i | b0, i | b1, i | b0 | b1];
                    let v = idx.map(|k| amps[k]);
                    for r in 0..4 {
                        amps[idx[r]] = (0..4).map(|c| matrix[r][c] * v[c]).sum();
                    }
                }
            }
        }
    }
}

fn apply_pauli(amps: &mut [Complex64], qubit: usize, letter: Letter) {
    let bit = 1usize << qubit;
    match letter {
        Letter::I => {}
        Letter::X => apply_gate(amps, &Gate::X { qubit }),
        Letter::Z => {
            for (i, a) in amps.iter_mut().enumerate() {
                if i & bit != 0 {
                    *a = -*a;
                }
            }
        }
        Letter::Y => {
            let i_unit = Complex64::new(0.0, 1.0);
            for k in 0..amps.len() {
                if k & bit == 0 {
                    let (a0, a1) = (amps[k], amps[k | bit]);
                    amps[k] = -i_unit * a1;
                    amps[k | bit] = i_unit * a0;
                }
            }
        }
    }
}

fn validate_circuit(circuit: &[Gate], n_qubits: usize) -> Result<()> {
    circuit.iter().try_for_each(|g| g.validate(n_qubits))
}

/// Exact unitary evolution of `initial` (or `|0...0>`).
pub fn run(circuit: &[Gate], n_qubits: usize, initial: Option<&Statevector>) -> Result<Statevector> {
    validate_circuit(circuit, n_qubits)?;
    let mut psi = start_state(n_qubits, initial)?;
    for g in circuit {
        apply_gate(&mut psi.amps, g);
    }
    Ok(psi)
}

fn start_state(n_qubits: usize, initial: Option<&Statevector>) -> Result<Statevector> {
    match initial {
        Some(s) if s.n_qubits != n_qubits => Err(Error::DimensionMismatch {
            expected: n_qubits,
            found: s.n_qubits,
        }),
        Some(s) => Ok(s.clone()),
        None => Ok(Statevector::zero_state(n_qubits)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Depolarizing probability per single-qubit gate.
    pub p1: f64,
    /// Depolarizing probability per two-qubit gate.
    pub p2: f64,
    /// Independent readout bit-flip probability.
    pub readout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            p1: 0.001,
            p2: 0.01,
            readout: 0.03,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            p1: 0.0,
            p2: 0.0,
            readout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("readout", self.readout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("noise.{name}"), format!("{p} is not a probability")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.readout == 0.0
    }

    pub fn has_gate_noise(&self) -> bool {
        self.p1 > 0.0 || self.p2 > 0.0
    }

    fn gate_error_probability(&self, gate: &Gate) -> f64 {
        match gate.qubits().len() {
            1 => self.p1 * 0.75,
            _ => self.p2 * 15.0 / 16.0,
        }
    }
}

/// A Pauli fault inserted after gate `gate_index`.
#[derive(Clone, Copy, Debug)]
struct Fault {
    gate_index: usize,
    /// Index into the non-identity Paulis on the gate's qubits (1..4^k).
    pauli: usize,
}

fn draw_faults(circuit: &[Gate], noise: &NoiseModel, rng: &mut SimRng) -> Vec<Fault> {
    let mut faults = Vec::new();
    for (i, g) in circuit.iter().enumerate() {
        let p = noise.gate_error_probability(g);
        if p > 0.0 && rng.random::<f64>() < p {
            let n = 1usize << (2 * g.qubits().len());
            faults.push(Fault {
                gate_index: i,
                pauli: rng.random_range(1..n),
            });
        }
    }
    faults
}

const LETTERS: [Letter; 4] = [Letter::I, Letter::X, Letter::Y, Letter::Z];

fn evolve_with_faults(circuit: &[Gate], initial: Statevector, faults: &[Fault]) -> Statevector {
    let mut psi = initial;
    let mut next = faults.iter().peekable();
    for (i, g) in circuit.iter().enumerate() {
        apply_gate(&mut psi.amps, g);
        while let Some(f) = next.next_if(|f| f.gate_index == i) {
            for (slot, q) in g.qubits().into_iter().enumerate() {
                let letter = LETTERS[(f.pauli >> (2 * slot)) & 3];
                apply_pauli(&mut psi.amps, q, letter);
            }
        }
    }
    psi
}

/// One stochastic trajectory of the depolarizing channel.
pub fn noisy_run(
    circuit: &[Gate],
    n_qubits: usize,
    initial: Option<&Statevector>,
    noise: &NoiseModel,
    rng: &mut SimRng,
) -> Result<Statevector> {
    validate_circuit(circuit, n_qubits)?;
    noise.validate()?;
    let start = start_state(n_qubits, initial)?;
    let faults = draw_faults(circuit, noise, rng);
    Ok(evolve_with_faults(circuit, start, &faults))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotCounts {
    pub n_qubits: usize,
    /// Basis index (bit `k` = qubit `k`) to count.
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl ShotCounts {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn record(&mut self, outcome: u64) {
        *self.counts.entry(outcome).or_default() += 1;
        self.total += 1;
    }

    pub fn get(&self, outcome: u64) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    /// Bitstring with qubit 0 rightmost.
    pub fn bitstring(&self, outcome: u64) -> String {
        (0..self.n_qubits)
            .rev()
            .map(|k| if outcome >> k & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn frequencies(&self) -> BTreeMap<u64, f64> {
        self.counts
            .iter()
            .map(|(&k, &v)| (k, v as f64 / self.total as f64))
            .collect()
    }
}

/// Draws one outcome from a cumulative distribution.
fn draw(cdf: &[f64], rng: &mut SimRng) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cumulative(probs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn flip_readout(outcome: usize, n_qubits: usize, r: f64, rng: &mut SimRng) -> usize {
    if r == 0.0 {
        return outcome;
    }
    let mut o = outcome;
    for k in 0..n_qubits {
        if rng.random::<f64>() < r {
            o ^= 1 << k;
        }
    }
    o
}

/// Computational-basis samples of `psi`; readout flips applied when `noise` is given.
pub fn sample(psi: &Statevector, shots: u64, noise: Option<&NoiseModel>, rng: &mut SimRng) -> ShotCounts {
    let mut probs = psi.probabilities();
    if let Some(n) = noise {
        apply_readout(&mut probs, psi.n_qubits, n.readout);
    }
    multinomial(&probs, psi.n_qubits, shots, rng)
}

/// Independent bit flips with probability `r` on every qubit, applied to a distribution.
fn apply_readout(probs: &mut [f64], n_qubits: usize, r: f64) {
    if r == 0.0 {
        return;
    }
    for k in 0..n_qubits {
        let bit = 1usize << k;
        for o in 0..probs.len() {
            if o & bit == 0 {
                let (a, b) = (probs[o], probs[o | bit]);
                probs[o] = (1.0 - r) * a + r * b;
                probs[o | bit] = (1.0 - r) * b + r * a;
            }
        }
    }
}

/// `shots` i.i.d. draws from `probs`, as a chain of conditional binomials.
fn multinomial(probs: &[f64], n_qubits: usize, shots: u64, rng: &mut SimRng) -> ShotCounts {
    let mut counts = ShotCounts::new(n_qubits);
    let mut left = shots;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (o, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let p = p.max(0.0);
        let q = if mass > 0.0 { (p / mass).min(1.0) } else { 1.0 };
        let k = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).map_or(0, |b| b.sample(rng))
        };
        if k > 0 {
            counts.counts.insert(o as u64, k);
            counts.total += k;
        }
        left -= k;
        mass -= p;
    }
    counts
}

/// Largest register simulated with a dense density matrix when gates are noisy.
pub const MAX_DENSITY_QUBITS: usize = 8;

/// Density matrix stored column-major, `rho[r + d c]`: unitaries act as
/// `U (x) U*` on a register of `2 n` index bits.
#[derive(Clone, Debug)]
struct Density {
    n_qubits: usize,
    data: Vec<Complex64>,
}

impl Density {
    fn pure(psi: &Statevector) -> Self {
        let d = psi.dim();
        let mut data = vec![Complex64::default(); d * d];
        for c in 0..d {
            let ac = psi.amps[c].conj();
            for r in 0..d {
                data[r + d * c] = psi.amps[r] * ac;
            }
        }
        Self {
            n_qubits: psi.n_qubits,
            data,
        }
    }

    fn apply(&mut self, gate: &Gate, noise: &NoiseModel) {
        let n = self.n_qubits;
        apply_gate(&mut self.data, gate);
        apply_gate(&mut self.data, &conjugate_shifted(gate, n));
        let p = match gate.qubits().len() {
            1 => noise.p1,
            _ => noise.p2,
        };
        if p > 0.0 {
            self.depolarize(&gate.qubits(), p);
        }
    }

    /// `rho -> (1 - p) rho + p I/2^k (x) Tr_Q rho`.
    fn depolarize(&mut self, qubits: &[usize], p: f64) {
        let d = 1usize << self.n_qubits;
        let m = qubits.iter().fold(0usize, |acc, q| acc | 1 << q);
        let mut subsets = vec![0usize];
        let mut s = m;
        while s != 0 {
            subsets.push(s);
            s = (s - 1) & m;
        }
        let w = p / subsets.len() as f64;
        for r0 in (0..d).filter(|r| r & m == 0) {
            for c0 in (0..d).filter(|c| c & m == 0) {
                let trace: Complex64 = subsets.iter().map(|&s| self.data[(r0 | s) + d * (c0 | s)]).sum();
                for &s1 in &subsets {
                    for &s2 in &subsets {
                        let idx = (r0 | s1) + d * (c0 | s2);
                        self.data[idx] *= 1.0 - p;
                        if s1 == s2 {
                            self.data[idx] += trace * w;
                        }
                    }
                }
            }
        }
    }

    fn probabilities(&self) -> Vec<f64> {
        let d = 1usize << self.n_qubits;
        (0..d).map(|i| self.data[i + d * i].re.max(0.0)).collect()
    }
}

/// The complex conjugate of `gate`, moved onto the column index bits.
fn conjugate_shifted(gate: &Gate, n: usize) -> Gate {
    match *gate {
        Gate::Ry { qubit, theta } => Gate::Ry { qubit: qubit + n, theta },
        Gate::Rz { qubit, theta } => Gate::Rz {
            qubit: qubit + n,
            theta: -theta,
        },
        Gate::X { qubit } => Gate::X { qubit: qubit + n },
        Gate::Cz { a, b } => Gate::Cz { a: a + n, b: b + n },
        Gate::Cx { control, target } => Gate::Cx {
            control: control + n,
            target: target + n,
        },
        Gate::Unitary2 { q0, q1, matrix } => Gate::Unitary2 {
            q0: q0 + n,
            q1: q1 + n,
            matrix: matrix.map(|row| row.map(|v| v.conj())),
        },
    }
}

/// Exact outcome distribution of `circuit` under `noise`, readout included.
pub fn noisy_distribution(
    circuit: &[Gate],
    n_qubits: usize,
    initial: Option<&Statevector>,
    noise: &NoiseModel,
) -> Result<Vec<f64>> {
    validate_circuit(circuit, n_qubits)?;
    noise.validate()?;
    let start = start_state(n_qubits, initial)?;
    let mut probs = if noise.p1 > 0.0 || noise.p2 > 0.0 {
        if n_qubits > MAX_DENSITY_QUBITS {
            return Err(Error::TooLarge(n_qubits));
        }
        let mut rho = Density::pure(&start);
        for g in circuit {
            rho.apply(g, noise);
        }
        rho.probabilities()
    } else {
        run(circuit, n_qubits, Some(&start))?.probabilities()
    };
    apply_readout(&mut probs, n_qubits, noise.readout);
    Ok(probs)
}

/// Circuit execution shared by all measurement settings of one estimate.
/// Small noisy registers carry the exact density matrix; larger ones fall
/// back to one depolarizing trajectory per shot.
pub struct Executor<'a> {
    circuit: &'a [Gate],
    n_qubits: usize,
    initial: Statevector,
    noise: NoiseModel,
    ideal: Statevector,
    rho: Option<Density>,
}

impl<'a> Executor<'a> {
    pub fn new(
        circuit: &'a [Gate],
        n_qubits: usize,
        initial: Option<&Statevector>,
        noise: Option<&NoiseModel>,
    ) -> Result<Self> {
        let noise = noise.copied().unwrap_or_else(NoiseModel::noiseless);
        noise.validate()?;
        let initial = start_state(n_qubits, initial)?;
        let ideal = run(circuit, n_qubits, Some(&initial))?;
        let rho = (noise.has_gate_noise() && n_qubits <= MAX_DENSITY_QUBITS).then(|| {
            let mut rho = Density::pure(&initial);
            for g in circuit {
                rho.apply(g, &noise);
            }
            rho
        });
        Ok(Self {
            circuit,
            n_qubits,
            initial,
            noise,
            ideal,
            rho,
        })
    }

    pub fn ideal_state(&self) -> &Statevector {
        &self.ideal
    }

    /// Exact outcome distribution after appending `suffix`, readout included.
    pub fn distribution_with_suffix(&self, suffix: &[Gate]) -> Result<Vec<f64>> {
        validate_circuit(suffix, self.n_qubits)?;
        let mut probs = match &self.rho {
            Some(rho) => {
                let mut rho = rho.clone();
                for g in suffix {
                    rho.apply(g, &self.noise);
                }
                rho.probabilities()
            }
            None if self.noise.has_gate_noise() => return Err(Error::TooLarge(self.n_qubits)),
            None => {
                let mut psi = self.ideal.clone();
                for g in suffix {
                    apply_gate(&mut psi.amps, g);
                }
                psi.probabilities()
            }
        };
        apply_readout(&mut probs, self.n_qubits, self.noise.readout);
        Ok(probs)
    }

    /// Samples `shots` outcomes after appending `suffix` (typically basis rotations).
    pub fn sample_with_suffix(&self, suffix: &[Gate], shots: u64, rng: &mut SimRng) -> Result<ShotCounts> {
        validate_circuit(suffix, self.n_qubits)?;
        if self.rho.is_some() || !self.noise.has_gate_noise() {
            let probs = self.distribution_with_suffix(suffix)?;
            return Ok(multinomial(&probs, self.n_qubits, shots, rng));
        }
        let mut ideal_rotated = self.ideal.clone();
        for g in suffix {
            apply_gate(&mut ideal_rotated.amps, g);
        }
        let ideal_cdf = cumulative(ideal_rotated.probabilities());
        let full: Vec<Gate> = self.circuit.iter().chain(suffix).cloned().collect();
        let mut counts = ShotCounts::new(self.n_qubits);
        for _ in 0..shots {
            let faults = draw_faults(&full, &self.noise, rng);
            let o = if faults.is_empty() {
                draw(&ideal_cdf, rng)
            } else {
                let psi = evolve_with_faults(&full, self.initial.clone(), &faults);
                draw(&cumulative(psi.probabilities()), rng)
            };
            counts.record(flip_readout(o, self.n_qubits, self.noise.readout, rng) as u64);
        }
        Ok(counts)
    }
}

/// Measurement basis letter per qubit (`I` = unmeasured).
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGroup {
    pub basis: Vec<Letter>,
    pub terms: Vec<(PauliString, f64)>,
}

impl MeasurementGroup {
    /// Gates rotating the group's basis onto Z.
    pub fn rotation_gates(&self) -> Vec<Gate> {
        let mut gates = Vec::new();
        for (q, l) in self.basis.iter().enumerate() {
            match l {
                Letter::X => gates.push(Gate::Ry { qubit: q, theta: -FRAC_PI_2 }),
                Letter::Y => {
                    gates.push(Gate::Rz { qubit: q, theta: -FRAC_PI_2 });
                    gates.push(Gate::Ry { qubit: q, theta: -FRAC_PI_2 });
                }
                _ => {}
            }
        }
        gates
    }

    /// Value of the group observable on a measured (rotated) outcome.
    pub fn value(&self, outcome: usize) -> f64 {
        self.terms
            .iter()
            .map(|(p, c)| {
                if (p.support() & outcome as u64).count_ones() % 2 == 0 {
                    *c
                } else {
                    -*c
                }
            })
            .sum()
    }
}

/// Greedy qubit-wise commuting grouping of the non-identity terms, in canonical term order.
pub fn group_qubitwise(op: &PauliSum) -> Vec<MeasurementGroup> {
    let n = op.n_qubits();
    let mut groups: Vec<(PauliString, Vec<(PauliString, f64)>)> = Vec::new();
    for (p, c) in op.terms() {
        if p.is_identity() {
            continue;
        }
        match groups.iter_mut().find(|(b, _)| b.qubitwise_commutes(p)) {
            Some((basis, terms)) => {
                for q in 0..n {
                    if p.letter(q) != Letter::I {
                        basis.set(q, p.letter(q));
                    }
                }
                terms.push((*p, c.re));
            }
            None => groups.push((*p, vec![(*p, c.re)])),
        }
    }
    groups
        .into_iter()
        .map(|(b, terms)| MeasurementGroup {
            basis: b.letters(),
            terms,
        })
        .collect()
}

/// Splits `shots` equally over `groups`, remainder to the first groups.
pub fn split_shots(shots: u64, groups: usize) -> Vec<u64> {
    let g = groups as u64;
    (0..g).map(|i| (shots / g + u64::from(i < shots % g)).max(1)).collect()
}

/// Shot-based estimate of `<op>` with standard error from per-group sample variances.
pub fn estimate_expectation(
    circuit: &[Gate],
    n_qubits: usize,
    initial: Option<&Statevector>,
    op: &PauliSum,
    shots: u64,
    noise: Option<&NoiseModel>,
    rng: &mut SimRng,
) -> Result<EnergyEstimate> {
    let exec = Executor::new(circuit, n_qubits, initial, noise)?;
    estimate_with(&exec, op, shots, rng)
}

/// How a shot budget is spread over measurement settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotBudget {
    /// Split equally over the qubit-wise commuting groups.
    Total(u64),
    /// Every group (one circuit per measurement basis) gets this many.
    PerGroup(u64),
}

impl ShotBudget {
    pub fn shots(&self) -> u64 {
        match *self {
            ShotBudget::Total(s) | ShotBudget::PerGroup(s) => s,
        }
    }

    pub fn scaled(&self, factor: u64) -> ShotBudget {
        match *self {
            ShotBudget::Total(s) => ShotBudget::Total(s * factor),
            ShotBudget::PerGroup(s) => ShotBudget::PerGroup(s * factor),
        }
    }

    fn allocate(&self, groups: usize) -> Vec<u64> {
        match *self {
            ShotBudget::Total(s) => split_shots(s, groups),
            ShotBudget::PerGroup(s) => vec![s; groups],
        }
    }
}

/// Same as [`estimate_expectation`] against a prepared executor.
pub fn estimate_with(exec: &Executor<'_>, op: &PauliSum, shots: u64, rng: &mut SimRng) -> Result<EnergyEstimate> {
    estimate_with_budget(exec, op, ShotBudget::Total(shots), rng)
}

/// Shot-based estimate under an explicit budget.
pub fn estimate_with_budget(
    exec: &Executor<'_>,
    op: &PauliSum,
    budget: ShotBudget,
    rng: &mut SimRng,
) -> Result<EnergyEstimate> {
    MeasurementPlan::new(op)?.estimate(exec, budget, rng)
}

/// Grouped measurement settings of one Hermitian observable, reusable across states.
#[derive(Clone, Debug)]
pub struct MeasurementPlan {
    pub n_qubits: usize,
    pub constant: f64,
    pub groups: Vec<MeasurementGroup>,
    rotations: Vec<Vec<Gate>>,
}

impl MeasurementPlan {
    pub fn new(op: &PauliSum) -> Result<Self> {
        if !op.is_hermitian() {
            return Err(Error::NonHermitian(op.max_imag()));
        }
        let groups = group_qubitwise(op);
        let rotations = groups.iter().map(|g| g.rotation_gates()).collect();
        Ok(Self {
            n_qubits: op.n_qubits(),
            constant: op.constant().re,
            groups,
            rotations,
        })
    }

    pub fn estimate(&self, exec: &Executor<'_>, budget: ShotBudget, rng: &mut SimRng) -> Result<EnergyEstimate> {
        if self.n_qubits != exec.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: exec.n_qubits,
                found: self.n_qubits,
            });
        }
        if budget.shots() == 0 {
            return Err(Error::Numerical("shots must be positive".into()));
        }
        let mut mean = self.constant;
        let mut var = 0.0;
        let alloc = budget.allocate(self.groups.len());
        for ((g, rot), shots_g) in self.groups.iter().zip(&self.rotations).zip(alloc) {
            let counts = exec.sample_with_suffix(rot, shots_g, rng)?;
            let (m, v) = weighted_moments(&counts, |o| g.value(o as usize));
            mean += m;
            var += v / shots_g as f64;
        }
        Ok(EnergyEstimate::new(mean, var.sqrt()))
    }
}

/// Sample mean and unbiased sample variance of `f` over recorded shots.
fn weighted_moments(counts: &ShotCounts, f: impl Fn(u64) -> f64) -> (f64, f64) {
    let n = counts.total as f64;
    let mean = counts.counts.iter().map(|(&o, &c)| f(o) * c as f64).sum::<f64>() / n;
    if counts.total < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = counts
        .counts
        .iter()
        .map(|(&o, &c)| (f(o) - mean).powi(2) * c as f64)
        .sum();
    (mean, ss / (n - 1.0))
}
