//! Error mitigation: Hamiltonian moments, the order-2 Lanczos correction,
//! inverse-variance averaging of repeats and symmetry post-selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{PauliString, PauliSum};
use crate::simulator::{estimate_with_budget, Executor, ShotBudget, ShotCounts};
use crate::rng::SimRng;
use crate::simulator::Statevector;

/// Upper bound on the number of Pauli terms in `H^2` or `H^3`.
pub const MAX_MOMENT_TERMS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub sigma: f64,
}

impl EnergyEstimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

/// `H`, `H^2`, `H^3` expanded once and reused across measurements.
#[derive(Clone, Debug)]
pub struct MomentOperators {
    pub h: PauliSum,
    pub h2: PauliSum,
    pub h3: PauliSum,
}

impl MomentOperators {
    pub fn new(h: &PauliSum) -> Result<Self> {
        let h = h.clone().into_hermitian()?;
        let h2 = h.power(2, MAX_MOMENT_TERMS)?.into_hermitian()?;
        let h3 = h2.sum_product(&h)?;
        if h3.len() > MAX_MOMENT_TERMS {
            return Err(Error::TermExplosion(h3.len()));
        }
        let h3 = h3.into_hermitian()?;
        Ok(Self { h, h2, h3 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

impl MomentEstimates {
    pub fn exact(m1: f64, m2: f64, m3: f64) -> Self {
        Self {
            m1,
            m2,
            m3,
            sigma1: 0.0,
            sigma2: 0.0,
            sigma3: 0.0,
        }
    }

    /// Exact moments of a pure state.
    pub fn of_state(ops: &MomentOperators, psi: &Statevector) -> Result<Self> {
        Ok(Self::exact(
            ops.h.expectation(psi)?.re,
            ops.h2.expectation(psi)?.re,
            ops.h3.expectation(psi)?.re,
        ))
    }

    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }
}

/// Shot estimates of the first three moments, each operator under `budget`.
pub fn measure_moments(
    exec: &Executor<'_>,
    ops: &MomentOperators,
    budget: ShotBudget,
    rng: &mut SimRng,
) -> Result<MomentEstimates> {
    let e1 = estimate_with_budget(exec, &ops.h, budget, rng)?;
    let e2 = estimate_with_budget(exec, &ops.h2, budget, rng)?;
    let e3 = estimate_with_budget(exec, &ops.h3, budget, rng)?;
    Ok(MomentEstimates {
        m1: e1.value,
        m2: e2.value,
        m3: e3.value,
        sigma1: e1.sigma,
        sigma2: e2.sigma,
        sigma3: e3.sigma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanczosEstimate {
    pub estimate: EnergyEstimate,
    /// Variance indistinguishable from zero; the plain mean was returned.
    pub degenerate: bool,
}

/// Lower eigenvalue of the Krylov matrix built from `m1, m2, m3`.
fn lanczos_value(m1: f64, m2: f64, m3: f64) -> f64 {
    let v = m2 - m1 * m1;
    let alpha2 = (m3 - 2.0 * m1 * m2 + m1 * m1 * m1) / v;
    let mean = 0.5 * (m1 + alpha2);
    let half = 0.5 * (m1 - alpha2);
    mean - (half * half + v).sqrt()
}

/// Second-order Lanczos correction with a propagated standard error.
pub fn lanczos_estimate(m: &MomentEstimates) -> LanczosEstimate {
    let v = m.variance();
    let floor = (2.0 * m.sigma2).max(1e-12 * m.m1.abs().max(1.0).powi(2));
    if !(v > floor) {
        return LanczosEstimate {
            estimate: EnergyEstimate::new(m.m1, m.sigma1),
            degenerate: true,
        };
    }
    let x = [m.m1, m.m2, m.m3];
    let sig = [m.sigma1, m.sigma2, m.sigma3];
    let value = lanczos_value(x[0], x[1], x[2]);
    let mut var = 0.0;
    for i in 0..3 {
        if sig[i] == 0.0 {
            continue;
        }
        let h = 1e-6 * x[i].abs().max(1.0);
        let (mut up, mut dn) = (x, x);
        up[i] += h;
        dn[i] -= h;
        let d = (lanczos_value(up[0], up[1], up[2]) - lanczos_value(dn[0], dn[1], dn[2])) / (2.0 * h);
        var += (d * sig[i]).powi(2);
    }
    LanczosEstimate {
        estimate: EnergyEstimate::new(value, var.sqrt()),
        degenerate: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverage {
    pub estimate: EnergyEstimate,
    /// At least one input had zero error bar and dominated the result.
    pub exact_input: bool,
}

/// Inverse-variance weighted mean. Entries with zero error bar take over:
/// their plain mean is returned with zero error.
pub fn weighted_average(xs: &[EnergyEstimate]) -> Result<WeightedAverage> {
    if xs.is_empty() {
        return Err(Error::Numerical("weighted average of an empty list".into()));
    }
    if let Some(bad) = xs.iter().find(|e| !e.value.is_finite() || !(e.sigma >= 0.0)) {
        return Err(Error::Numerical(format!("invalid estimate {bad:?}")));
    }
    let exact: Vec<f64> = xs.iter().filter(|e| e.sigma == 0.0).map(|e| e.value).collect();
    if !exact.is_empty() {
        let mean = exact.iter().sum::<f64>() / exact.len() as f64;
        return Ok(WeightedAverage {
            estimate: EnergyEstimate::exact(mean),
            exact_input: true,
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for e in xs {
        let w = 1.0 / (e.sigma * e.sigma);
        num += w * e.value;
        den += w;
    }
    Ok(WeightedAverage {
        estimate: EnergyEstimate::new(num / den, den.sqrt().recip()),
        exact_input: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostSelection {
    pub counts: ShotCounts,
    pub retained_fraction: f64,
}

/// Keeps the computational-basis outcomes consistent with diagonal symmetries
/// of known eigenvalue (`+1` or `-1`).
pub fn symmetry_postselect(counts: &ShotCounts, known: &[(PauliString, i8)]) -> Result<PostSelection> {
    for (s, _) in known {
        if !s.is_diagonal() {
            return Err(Error::NotDiagonal(s.to_string()));
        }
        if s.n_qubits() != counts.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: counts.n_qubits,
                found: s.n_qubits(),
            });
        }
    }
    let mut kept = ShotCounts::new(counts.n_qubits);
    for (&o, &c) in &counts.counts {
        if known.iter().all(|(s, e)| s.parity_sign(o as usize) == f64::from(*e)) {
            kept.counts.insert(o, c);
            kept.total += c;
        }
    }
    let frac = if counts.total == 0 {
        0.0
    } else {
        kept.total as f64 / counts.total as f64
    };
    if kept.total == 0 {
        return Err(Error::EmptyPostselection(frac));
    }
    Ok(PostSelection {
        counts: kept,
        retained_fraction: frac,
    })
}
