//! Variational search: penalized cost, SPSA, a restarted adaptive Nelder-Mead
//! simplex and random search over CZ sequences.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_adaptive_ryrz, build_linear_ryrz, random_sequence, CouplingMap, CzSequence, ParametrizedCircuit};
use crate::error::{Error, Result};
use crate::mitigation::EnergyEstimate;
use crate::pauli::PauliSum;
use crate::rng::{rng_for, SimRng};
use crate::simulator::{run, Executor, MeasurementPlan, NoiseModel, ShotBudget, Statevector};

/// Stream tags for [`rng_for`] paths.
pub const STREAM_SEQUENCE: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_OPTIMIZER: u64 = 3;
pub const STREAM_ENERGY: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Spsa,
    Simplex,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spsa" => Ok(Self::Spsa),
            "simplex" | "nelder-mead" => Ok(Self::Simplex),
            _ => Err(Error::Parse(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotAllocation {
    PerGroup,
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaSettings {
    /// Step gain numerator; calibrated from the first gradient estimates when absent.
    pub a: Option<f64>,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Stability constant as a fraction of the iteration budget.
    pub stability: f64,
    /// Per-component magnitude of the first step targeted by calibration.
    pub target_step: f64,
    pub calibration_samples: usize,
    /// Fraction of trailing iterates re-evaluated for the final pick.
    pub reevaluate_fraction: f64,
    pub reevaluate_shot_factor: u64,
}

impl Default for SpsaSettings {
    fn default() -> Self {
        Self {
            a: None,
            c: 0.1,
            alpha: 0.602,
            gamma: 0.101,
            stability: 0.1,
            target_step: 0.1,
            calibration_samples: 10,
            reevaluate_fraction: 0.25,
            reevaluate_shot_factor: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimplexSettings {
    /// Edge length of the initial (and every restarted) simplex.
    pub initial_step: f64,
    /// Diameter below which a run counts as converged.
    pub tolerance: f64,
    pub max_restarts: usize,
    /// A restart improving the best value by less than this ends the search.
    pub restart_improvement: f64,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self {
            initial_step: 0.5,
            tolerance: 1e-8,
            max_restarts: 50,
            restart_improvement: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqeConfig {
    pub n_cz: usize,
    /// CZ sequences drawn into the pool.
    pub n_c: usize,
    /// Random restarts per sequence.
    pub n_init: usize,
    pub shots: u64,
    pub shot_allocation: ShotAllocation,
    /// SPSA iterations, or cost evaluations for the simplex.
    pub max_iters: usize,
    pub optimizer: OptimizerKind,
    /// Weight `f` of the filling penalty `f (N - n)^2`.
    pub penalty: f64,
    /// Repeated measurements `K` of the optimized state.
    pub repeats: usize,
    pub spsa: SpsaSettings,
    pub simplex: SimplexSettings,
}

impl Default for VqeConfig {
    fn default() -> Self {
        Self {
            n_cz: 3,
            n_c: 4,
            n_init: 5,
            shots: 1024,
            shot_allocation: ShotAllocation::PerGroup,
            max_iters: 100,
            optimizer: OptimizerKind::Spsa,
            penalty: 0.05,
            repeats: 5,
            spsa: SpsaSettings::default(),
            simplex: SimplexSettings::default(),
        }
    }
}

impl VqeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_c", self.n_c),
            ("n_init", self.n_init),
            ("shots", self.shots as usize),
            ("max_iters", self.max_iters),
            ("repeats", self.repeats),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("vqe.{name}"), "must be positive"));
            }
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::config("vqe.penalty", format!("{} is not a finite non-negative weight", self.penalty)));
        }
        let s = &self.spsa;
        if !(s.c > 0.0 && s.target_step > 0.0 && s.stability >= 0.0) || s.a.is_some_and(|a| a <= 0.0) {
            return Err(Error::config("vqe.spsa", "gains must be positive"));
        }
        if !(s.reevaluate_fraction > 0.0 && s.reevaluate_fraction <= 1.0) || s.reevaluate_shot_factor == 0 {
            return Err(Error::config("vqe.spsa.reevaluate_fraction", "must lie in (0, 1] with a positive shot factor"));
        }
        if !(self.simplex.initial_step > 0.0 && self.simplex.tolerance > 0.0) {
            return Err(Error::config("vqe.simplex", "step and tolerance must be positive"));
        }
        Ok(())
    }

    pub fn budget(&self) -> ShotBudget {
        match self.shot_allocation {
            ShotAllocation::PerGroup => ShotBudget::PerGroup(self.shots),
            ShotAllocation::Total => ShotBudget::Total(self.shots),
        }
    }
}

/// Where expectation values come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backend {
    /// Statevector expectation, zero standard error.
    Exact,
    /// Finite shots per measurement group under a noise model.
    Sampled { budget: ShotBudget, noise: NoiseModel },
}

impl Backend {
    pub fn is_exact(&self) -> bool {
        matches!(self, Backend::Exact)
    }
}

/// Operator as per-column nonzeros, for fast exact expectations.
#[derive(Clone, Debug)]
struct SparseOperator {
    columns: Vec<Vec<(usize, Complex64)>>,
}

impl SparseOperator {
    fn new(op: &PauliSum) -> Self {
        let dim = 1usize << op.n_qubits();
        let columns = (0..dim)
            .map(|b| {
                let mut col: BTreeMap<usize, Complex64> = BTreeMap::new();
                for (p, c) in op.terms() {
                    let (ph, r) = p.apply_to_basis(b);
                    *col.entry(r).or_default() += c * ph;
                }
                col.into_iter().filter(|(_, v)| v.norm() > 1e-14).collect()
            })
            .collect();
        Self { columns }
    }

    fn expectation(&self, amps: &[Complex64]) -> f64 {
        let mut acc = Complex64::default();
        for (col, a) in self.columns.iter().zip(amps) {
            for &(r, v) in col {
                acc += amps[r].conj() * v * a;
            }
        }
        acc.re
    }
}

/// `L = H + f (N - n)^2` on one parametrized circuit.
#[derive(Clone, Debug)]
pub struct CostFunction {
    pub circuit: ParametrizedCircuit,
    pub hamiltonian: PauliSum,
    pub number: PauliSum,
    pub target: f64,
    pub penalty: f64,
    lagrangian: PauliSum,
    deviation2: PauliSum,
    sparse_l: SparseOperator,
    sparse_h: SparseOperator,
    plan_l: MeasurementPlan,
}

/// `(N - n)^2`.
pub fn filling_deviation_squared(number: &PauliSum, target: f64) -> Result<PauliSum> {
    let d = number.shift(-target);
    d.sum_product(&d)?.into_hermitian()
}

impl CostFunction {
    pub fn new(circuit: ParametrizedCircuit, hamiltonian: PauliSum, number: PauliSum, target: f64, penalty: f64) -> Result<Self> {
        let n = circuit.n_qubits;
        for op in [&hamiltonian, &number] {
            if op.n_qubits() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: op.n_qubits(),
                });
            }
            if !op.is_hermitian() {
                return Err(Error::NonHermitian(op.max_imag()));
            }
        }
        let deviation2 = filling_deviation_squared(&number, target)?;
        let lagrangian = hamiltonian
            .add(&deviation2.scale(Complex64::new(penalty, 0.0)))?
            .into_hermitian()?;
        Ok(Self {
            sparse_l: SparseOperator::new(&lagrangian),
            sparse_h: SparseOperator::new(&hamiltonian),
            plan_l: MeasurementPlan::new(&lagrangian)?,
            circuit,
            hamiltonian,
            number,
            target,
            penalty,
            lagrangian,
            deviation2,
        })
    }

    pub fn lagrangian(&self) -> &PauliSum {
        &self.lagrangian
    }

    pub fn n_params(&self) -> usize {
        self.circuit.n_params
    }

    pub fn state(&self, theta: &[f64]) -> Result<Statevector> {
        run(&self.circuit.bind(theta)?, self.circuit.n_qubits, None)
    }

    /// `L(theta)` on the given backend; `shot_factor` scales the shot budget.
    pub fn evaluate(&self, theta: &[f64], backend: &Backend, shot_factor: u64, rng: &mut SimRng) -> Result<EnergyEstimate> {
        match backend {
            Backend::Exact => Ok(EnergyEstimate::exact(self.exact_cost(theta)?)),
            Backend::Sampled { budget, noise } => {
                let gates = self.circuit.bind(theta)?;
                let exec = Executor::new(&gates, self.circuit.n_qubits, None, Some(noise))?;
                self.plan_l.estimate(&exec, budget.scaled(shot_factor), rng)
            }
        }
    }

    pub fn exact_cost(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.sparse_l.expectation(self.state(theta)?.amplitudes()))
    }

    /// Noiseless `<H>` without the penalty.
    pub fn energy(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.sparse_h.expectation(self.state(theta)?.amplitudes()))
    }

    /// Noiseless `<N>` and `<(N - n)^2>`.
    pub fn filling(&self, theta: &[f64]) -> Result<(f64, f64)> {
        let psi = self.state(theta)?;
        Ok((self.number.expectation(&psi)?.re, self.deviation2.expectation(&psi)?.re))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub cost: f64,
    pub sigma: f64,
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TracePoint]) -> Result<()> {
    writeln!(w, "iter,cost,sigma")?;
    for t in trace {
        writeln!(w, "{},{},{}", t.iter, t.cost, t.sigma)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub theta: Vec<f64>,
    pub cost: EnergyEstimate,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
}

fn rademacher(p: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn shifted(theta: &[f64], delta: &[f64], h: f64) -> Vec<f64> {
    theta.iter().zip(delta).map(|(t, d)| t + h * d).collect()
}

/// SPSA. `objective(theta, shot_factor, rng)` returns a noisy cost.
/// The result is the lowest of the trailing iterates re-evaluated with more shots.
pub fn spsa_minimize<F>(
    mut objective: F,
    theta0: &[f64],
    max_iters: usize,
    settings: &SpsaSettings,
    rng: &mut SimRng,
) -> Result<OptimizationResult>
where
    F: FnMut(&[f64], u64, &mut SimRng) -> Result<EnergyEstimate>,
{
    let p = theta0.len();
    let stability = settings.stability * max_iters as f64;
    let mut evaluations = 0;
    let a = match settings.a {
        Some(a) => a,
        None => {
            let mut mag = 0.0;
            let samples = settings.calibration_samples.max(1);
            for _ in 0..samples {
                let delta = rademacher(p, rng);
                let fp = objective(&shifted(theta0, &delta, settings.c), 1, rng)?.value;
                let fm = objective(&shifted(theta0, &delta, -settings.c), 1, rng)?.value;
                evaluations += 2;
                mag += ((fp - fm) / (2.0 * settings.c)).abs() / samples as f64;
            }
            let scale = (stability + 1.0).powf(settings.alpha);
            if mag > 1e-12 {
                settings.target_step * scale / mag
            } else {
                settings.target_step * scale
            }
        }
    };
    let keep = ((max_iters as f64 * settings.reevaluate_fraction).ceil() as usize).clamp(1, max_iters.max(1));
    let mut theta = theta0.to_vec();
    let mut tail = Vec::with_capacity(keep);
    let mut trace = Vec::with_capacity(max_iters);
    for k in 0..max_iters {
        let ck = settings.c / ((k + 1) as f64).powf(settings.gamma);
        let ak = a / (k as f64 + 1.0 + stability).powf(settings.alpha);
        let delta = rademacher(p, rng);
        let ep = objective(&shifted(&theta, &delta, ck), 1, rng)?;
        let em = objective(&shifted(&theta, &delta, -ck), 1, rng)?;
        evaluations += 2;
        let g = (ep.value - em.value) / (2.0 * ck);
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t -= ak * g * d;
        }
        trace.push(TracePoint {
            iter: k,
            cost: 0.5 * (ep.value + em.value),
            sigma: 0.5 * ep.sigma.hypot(em.sigma),
        });
        if k + keep >= max_iters {
            tail.push(theta.clone());
        }
    }
    if tail.is_empty() {
        tail.push(theta);
    }
    let mut best: Option<(Vec<f64>, EnergyEstimate)> = None;
    for cand in tail {
        let e = objective(&cand, settings.reevaluate_shot_factor, rng)?;
        evaluations += 1;
        if best.as_ref().is_none_or(|(_, b)| e.value < b.value) {
            best = Some((cand, e));
        }
    }
    let (theta, cost) = best.expect("at least one candidate");
    Ok(OptimizationResult {
        theta,
        cost,
        evaluations,
        trace,
    })
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients) with restarts
/// around the best vertex. Stops after `max_evals` evaluations or when a
/// restart no longer improves. Never returns a point worse than `theta0`.
pub fn simplex_minimize<F>(mut objective: F, theta0: &[f64], max_evals: usize, settings: &SimplexSettings) -> Result<OptimizationResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = theta0.len();
    let mut evaluations = 0;
    let mut trace = Vec::new();
    let mut eval = |x: &[f64], evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        let v = objective(x)?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    };
    let f0 = eval(theta0, &mut evaluations)?;
    let mut best = (theta0.to_vec(), f0);
    if n == 0 {
        return Ok(OptimizationResult {
            theta: best.0,
            cost: EnergyEstimate::exact(f0),
            evaluations,
            trace,
        });
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut restarts = 0;
    'outer: loop {
        let start_value = best.1;
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![best.clone()];
        for i in 0..n {
            if evaluations >= max_evals {
                break 'outer;
            }
            let mut x = best.0.clone();
            x[i] += settings.initial_step;
            let v = eval(&x, &mut evaluations)?;
            simplex.push((x, v));
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[0].1 < best.1 {
                best = simplex[0].clone();
            }
            trace.push(TracePoint {
                iter: evaluations,
                cost: best.1,
                sigma: 0.0,
            });
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            if diameter < settings.tolerance {
                break;
            }
            if evaluations >= max_evals {
                break 'outer;
            }
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / nf;
                }
            }
            let worst = simplex[n].clone();
            let toward = |s: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + s * (c - w)).collect() };
            let xr = toward(alpha);
            let fr = eval(&xr, &mut evaluations)?;
            if fr < simplex[0].1 {
                let xe = toward(alpha * beta);
                let fe = eval(&xe, &mut evaluations)?;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst.1 {
                let xc = toward(alpha * gamma);
                let fc = eval(&xc, &mut evaluations)?;
                (xc, fc)
            } else {
                let xc = toward(-gamma);
                let fc = eval(&xc, &mut evaluations)?;
                (xc, fc)
            };
            if fc < fr.min(worst.1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x0 = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                if evaluations >= max_evals {
                    break;
                }
                let x: Vec<f64> = x0.iter().zip(&v.0).map(|(a, b)| a + delta * (b - a)).collect();
                let f = eval(&x, &mut evaluations)?;
                *v = (x, f);
            }
        }
        restarts += 1;
        if restarts > settings.max_restarts || start_value - best.1 < settings.restart_improvement && restarts > 1 {
            break;
        }
    }
    Ok(OptimizationResult {
        theta: best.0,
        cost: EnergyEstimate::exact(best.1),
        evaluations,
        trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnsatzKind {
    /// Random CZ placements from the coupling map.
    Adaptive,
    /// Fixed CZ ladders; sequences are ignored.
    Linear { layers: usize },
}

/// Hamiltonian and filling operator on the register the ansatz acts on.
#[derive(Clone, Debug)]
pub struct VqeProblem {
    pub hamiltonian: PauliSum,
    pub number: PauliSum,
    /// Target particle number `n` of the penalty.
    pub target: f64,
    pub map: CouplingMap,
    pub ansatz: AnsatzKind,
}

impl VqeProblem {
    pub fn n_qubits(&self) -> usize {
        self.hamiltonian.n_qubits()
    }

    pub fn circuit(&self, seq: &CzSequence) -> Result<ParametrizedCircuit> {
        match self.ansatz {
            AnsatzKind::Adaptive => build_adaptive_ryrz(self.n_qubits(), seq, &self.map),
            AnsatzKind::Linear { layers } => build_linear_ryrz(self.n_qubits(), layers),
        }
    }

    pub fn cost_function(&self, seq: &CzSequence, penalty: f64) -> Result<CostFunction> {
        CostFunction::new(self.circuit(seq)?, self.hamiltonian.clone(), self.number.clone(), self.target, penalty)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub restart: usize,
    pub theta: Vec<f64>,
    pub cost: EnergyEstimate,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub index: usize,
    pub sequence: CzSequence,
    pub theta_opt: Vec<f64>,
    /// Penalized cost at `theta_opt`.
    pub cost: EnergyEstimate,
    /// `<H>` at `theta_opt`, measured on the run's backend.
    pub energy: EnergyEstimate,
    pub best_restart: usize,
    pub restarts: Vec<RestartResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqeResult {
    pub sequences: Vec<SequenceResult>,
    /// Index of the sequence with the lowest energy (first on ties).
    pub best: usize,
}

impl VqeResult {
    pub fn best_sequence(&self) -> &SequenceResult {
        &self.sequences[self.best]
    }

    pub fn best_energy(&self) -> EnergyEstimate {
        self.best_sequence().energy
    }
}

/// Uniform initial angles in `[0, 2 pi)`.
pub fn initial_angles(n_params: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..n_params).map(|_| rng.random::<f64>() * TAU).collect()
}

/// One optimizer run from a given start.
pub fn optimize(cost: &CostFunction, theta0: &[f64], cfg: &VqeConfig, backend: &Backend, rng: &mut SimRng) -> Result<OptimizationResult> {
    match cfg.optimizer {
        OptimizerKind::Spsa => spsa_minimize(
            |th: &[f64], factor: u64, r: &mut SimRng| cost.evaluate(th, backend, factor, r),
            theta0,
            cfg.max_iters,
            &cfg.spsa,
            rng,
        ),
        OptimizerKind::Simplex => {
            if !backend.is_exact() {
                // Sampled cost with a fixed stream per evaluation count keeps the run deterministic.
                let mut local = rng.clone();
                return simplex_minimize(
                    |th: &[f64]| Ok(cost.evaluate(th, backend, 1, &mut local)?.value),
                    theta0,
                    cfg.max_iters,
                    &cfg.simplex,
                );
            }
            simplex_minimize(|th: &[f64]| cost.exact_cost(th), theta0, cfg.max_iters, &cfg.simplex)
        }
    }
}

/// Draws `cfg.n_c` sequences from `seed` and optimizes each.
pub fn random_search(problem: &VqeProblem, cfg: &VqeConfig, backend: &Backend, seed: u64) -> Result<VqeResult> {
    let sequences = match problem.ansatz {
        AnsatzKind::Adaptive => draw_sequences(&problem.map, cfg.n_cz, cfg.n_c, seed)?,
        AnsatzKind::Linear { .. } => vec![CzSequence(Vec::new()); cfg.n_c],
    };
    optimize_pool(problem, &sequences, cfg, backend, seed)
}

/// Sequence `c` depends on `(seed, c)` only, so pools of different sizes nest.
pub fn draw_sequences(map: &CouplingMap, n_cz: usize, n_c: usize, seed: u64) -> Result<Vec<CzSequence>> {
    (0..n_c)
        .map(|c| random_sequence(map, n_cz, &mut rng_for(seed, &[STREAM_SEQUENCE, c as u64])))
        .collect()
}

/// Multi-start optimization of every sequence; the minimum over the pool is
/// taken on the measured energy, lowest index first on ties.
pub fn optimize_pool(
    problem: &VqeProblem,
    sequences: &[CzSequence],
    cfg: &VqeConfig,
    backend: &Backend,
    seed: u64,
) -> Result<VqeResult> {
    if sequences.is_empty() {
        return Err(Error::config("vqe.n_c", "empty sequence pool"));
    }
    let results = sequences
        .iter()
        .enumerate()
        .map(|(c, seq)| optimize_sequence(problem, seq, c, cfg, backend, seed))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(results.iter().map(|r| r.energy.value));
    Ok(VqeResult { sequences: results, best })
}

/// `cfg.n_init` restarts of sequence number `index`, run in parallel on
/// streams derived from `(seed, index, restart)` and reduced in restart order.
pub fn optimize_sequence(
    problem: &VqeProblem,
    seq: &CzSequence,
    index: usize,
    cfg: &VqeConfig,
    backend: &Backend,
    seed: u64,
) -> Result<SequenceResult> {
    cfg.validate()?;
    let cost = problem.cost_function(seq, cfg.penalty)?;
    let c = index as u64;
    let restarts: Vec<RestartResult> = (0..cfg.n_init)
        .into_par_iter()
        .map(|r| {
            let theta0 = initial_angles(cost.n_params(), &mut rng_for(seed, &[STREAM_INIT, c, r as u64]));
            let mut rng = rng_for(seed, &[STREAM_OPTIMIZER, c, r as u64]);
            let res = optimize(&cost, &theta0, cfg, backend, &mut rng)?;
            Ok(RestartResult {
                restart: r,
                theta: res.theta,
                cost: res.cost,
                evaluations: res.evaluations,
                trace: res.trace,
            })
        })
        .collect::<Result<_>>()?;
    let best_restart = argmin(restarts.iter().map(|r| r.cost.value));
    let theta_opt = restarts[best_restart].theta.clone();
    let energy = match backend {
        Backend::Exact => EnergyEstimate::exact(cost.energy(&theta_opt)?),
        Backend::Sampled { budget, noise } => {
            let gates = cost.circuit.bind(&theta_opt)?;
            let exec = Executor::new(&gates, problem.n_qubits(), None, Some(noise))?;
            let mut rng = rng_for(seed, &[STREAM_ENERGY, c]);
            MeasurementPlan::new(&problem.hamiltonian)?.estimate(&exec, *budget, &mut rng)?
        }
    };
    Ok(SequenceResult {
        index,
        sequence: seq.clone(),
        theta_opt,
        cost: restarts[best_restart].cost,
        energy,
        best_restart,
        restarts,
    })
}

/// Index of the smallest value, the first one on ties.
pub fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{Letter, PauliString};
    use rand_distr::{Distribution, Normal};

    fn bowl(target: &[f64], sigma: f64) -> impl FnMut(&[f64], u64, &mut SimRng) -> Result<EnergyEstimate> + '_ {
        move |th: &[f64], factor: u64, rng: &mut SimRng| {
            let s = sigma / (factor as f64).sqrt();
            let v: f64 = th.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
            let noise = if s > 0.0 { Normal::new(0.0, s).unwrap().sample(rng) } else { 0.0 };
            Ok(EnergyEstimate::new(v + noise, s))
        }
    }

    #[test]
    fn spsa_reaches_noisy_bowl_minimum_for_all_seeds() {
        let target = [0.7, -1.2, 2.0, 0.3];
        let theta0 = [0.0; 4];
        for seed in 0..20 {
            let mut rng = rng_for(seed, &[]);
            let res = spsa_minimize(bowl(&target, 0.1), &theta0, 200, &SpsaSettings::default(), &mut rng).unwrap();
            let dist: f64 = res.theta.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dist < 0.2, "seed {seed}: distance {dist}");
        }
    }

    #[test]
    fn spsa_noiseless_trace_trends_down() {
        let target = [1.0, -0.5, 0.25];
        let mut rng = rng_for(3, &[]);
        let res = spsa_minimize(bowl(&target, 0.0), &[0.0; 3], 100, &SpsaSettings::default(), &mut rng).unwrap();
        let costs: Vec<f64> = res.trace.iter().map(|t| t.cost).collect();
        let med: Vec<f64> = costs
            .windows(9)
            .map(|w| {
                let mut w = w.to_vec();
                w.sort_by(f64::total_cmp);
                w[4]
            })
            .collect();
        for (i, pair) in med.windows(2).enumerate() {
            assert!(pair[1] <= pair[0] + 1e-9, "median rose at {i}: {pair:?}");
        }
        assert!(costs[costs.len() - 1] < 0.1 * costs[0]);
    }

    #[test]
    fn spsa_is_bit_reproducible() {
        let target = [0.3, 0.1];
        let go = || {
            let mut rng = rng_for(11, &[1]);
            spsa_minimize(bowl(&target, 0.1), &[0.0; 2], 50, &SpsaSettings::default(), &mut rng).unwrap()
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn simplex_solves_rosenbrock() {
        let rosen = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let res = simplex_minimize(rosen, &[-1.2, 1.0], 2000, &SimplexSettings::default()).unwrap();
        assert!(res.evaluations <= 2000);
        assert!((res.theta[0] - 1.0).abs() < 1e-4 && (res.theta[1] - 1.0).abs() < 1e-4, "{:?}", res.theta);
    }

    #[test]
    fn simplex_keeps_a_stationary_start() {
        let f = |x: &[f64]| Ok(x.iter().map(|v| (v - 0.5).powi(2)).sum());
        let res = simplex_minimize(f, &[0.5, 0.5, 0.5], 500, &SimplexSettings::default()).unwrap();
        assert_eq!(res.theta, vec![0.5, 0.5, 0.5]);
        assert_eq!(res.cost.value, 0.0);
    }

    #[test]
    fn simplex_never_worse_than_start() {
        let f = |x: &[f64]| Ok((3.0 * x[0]).sin() + x[1].cos() * x[0]);
        for start in [[0.1, 0.2], [2.0, -1.0], [-3.0, 4.0]] {
            let f0 = f(&start).unwrap();
            let res = simplex_minimize(f, &start, 30, &SimplexSettings::default()).unwrap();
            assert!(res.cost.value <= f0);
        }
    }

    fn two_qubit_problem() -> (PauliSum, PauliSum) {
        let z = |q| PauliSum::from_string(PauliString::single(2, q, Letter::Z), Complex64::new(1.0, 0.0));
        let h = z(0).add(&z(1).scale(Complex64::new(0.5, 0.0))).unwrap();
        // N = (1 - Z0)/2 + (1 - Z1)/2
        let number = z(0).add(&z(1)).unwrap().scale(Complex64::new(-0.5, 0.0)).shift(1.0);
        (h, number)
    }

    #[test]
    fn penalty_adds_f_per_missing_particle() {
        let (h, number) = two_qubit_problem();
        let map = CouplingMap::all_pairs(2);
        let circuit = build_adaptive_ryrz(2, &CzSequence(vec![]), &map).unwrap();
        // Ry(pi) on qubit 0 gives one particle against a target of two.
        let theta = [std::f64::consts::PI, 0.0, 0.0, 0.0];
        let f = 0.05;
        let cost = CostFunction::new(circuit.clone(), h.clone(), number.clone(), 2.0, f).unwrap();
        let e = cost.energy(&theta).unwrap();
        let l = cost.exact_cost(&theta).unwrap();
        assert!((e - -0.5).abs() < 1e-12);
        assert!((l - e - f).abs() < 1e-12);
        let (n, dev) = cost.filling(&theta).unwrap();
        assert!((n - 1.0).abs() < 1e-12 && (dev - 1.0).abs() < 1e-12);
        let plain = CostFunction::new(circuit, h, number, 2.0, 0.0).unwrap();
        assert!((plain.exact_cost(&theta).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn sampled_cost_matches_exact_within_error() {
        let (h, number) = two_qubit_problem();
        let map = CouplingMap::all_pairs(2);
        let circuit = build_adaptive_ryrz(2, &CzSequence(vec![0]), &map).unwrap();
        let cost = CostFunction::new(circuit, h, number, 2.0, 0.05).unwrap();
        let theta: Vec<f64> = (0..cost.n_params()).map(|i| 0.3 * i as f64 + 0.1).collect();
        let exact = cost.exact_cost(&theta).unwrap();
        let backend = Backend::Sampled {
            budget: ShotBudget::PerGroup(20_000),
            noise: NoiseModel::noiseless(),
        };
        let est = cost.evaluate(&theta, &backend, 1, &mut rng_for(5, &[])).unwrap();
        assert!((est.value - exact).abs() < 5.0 * est.sigma, "{est:?} vs {exact}");
    }

    #[test]
    fn argmin_prefers_first_on_ties() {
        assert_eq!(argmin([2.0, 1.0, 1.0, 3.0]), 1);
        assert_eq!(argmin([f64::NAN, 0.0]), 1);
    }
}
