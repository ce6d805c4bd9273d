//! Experiment orchestration: a versioned TOML configuration, the per-sector
//! pipeline over a t'/t grid, JSON-lines records, summaries, plot tables and
//! replay of single records.
//!
//! Pipeline per grid point, sector and CZ sequence: tapered VQE, `K` repeated
//! moment measurements averaged with inverse-variance weights (raw and
//! Lanczos-corrected), a noiseless re-evaluation of the optimal angles, and a
//! rotation-eigenvalue measurement on the untapered register.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{CouplingMap, CzSequence};
use crate::error::{Error, Result};
use crate::hubbard::{HubbardModel, HubbardParams, Irrep, Sector};
use crate::mitigation::{
    lanczos_estimate, measure_moments, symmetry_postselect, weighted_average, EnergyEstimate, MomentEstimates,
    MomentOperators,
};
use crate::rng::{derive_seed, rng_for};
use crate::simulator::{run, Executor, NoiseModel, Statevector};
use crate::tapering::{build_plan, c4_basis_gates, measure_c4, taper, taper_state, C4Distribution, TaperingPlan};
use crate::vqe::{
    draw_sequences, optimize_sequence, write_trace_csv, AnsatzKind, Backend, RestartResult, VqeConfig, VqeProblem,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// t'/t values sampled around the four-site transition.
pub const DEFAULT_GRID: [f64; 10] = [0.2, 0.3, 0.4, 0.44, 0.48, 0.52, 0.56, 0.6, 0.7, 0.8];

pub const STREAM_REPEAT: u64 = 10;
pub const STREAM_C4: u64 = 11;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Marker for missing values in CSV output.
pub const NA: &str = "NA";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Exact,
    #[default]
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_sites")]
    pub n_sites: usize,
    #[serde(default = "default_t")]
    pub t: f64,
    pub u: f64,
    #[serde(default = "default_grid")]
    pub t_prime_over_t: Vec<f64>,
    /// Empty selects the sectors competing for the ground state.
    #[serde(default)]
    pub sectors: Vec<Irrep>,
}

fn default_sites() -> usize {
    4
}

fn default_t() -> f64 {
    1.0
}

fn default_grid() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}

impl ModelConfig {
    pub fn sectors(&self) -> Vec<Irrep> {
        if !self.sectors.is_empty() {
            return self.sectors.clone();
        }
        match self.n_sites {
            6 => vec![Irrep::A1, Irrep::A2],
            _ => vec![Irrep::A1, Irrep::B1, Irrep::E],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzChoice {
    #[default]
    Adaptive,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzConfig {
    pub kind: AnsatzChoice,
    /// CZ ladders of the linear ansatz.
    pub layers: usize,
    /// `auto`, `ourense` or `all_pairs`; ignored when `pairs` is given.
    pub coupling: String,
    pub pairs: Option<Vec<(usize, usize)>>,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            kind: AnsatzChoice::Adaptive,
            layers: 1,
            coupling: "auto".into(),
            pairs: None,
        }
    }
}

impl AnsatzConfig {
    pub fn coupling_map(&self, n_qubits: usize) -> Result<CouplingMap> {
        if let Some(pairs) = &self.pairs {
            return CouplingMap::new(n_qubits, pairs.clone())
                .map_err(|e| Error::config("ansatz.pairs", e.to_string()));
        }
        let map = match (self.coupling.as_str(), n_qubits) {
            ("auto", 4) | ("ourense", _) => CouplingMap::ourense(),
            ("auto", n) | ("all_pairs", n) => CouplingMap::all_pairs(n),
            (other, _) => return Err(Error::config("ansatz.coupling", format!("unknown coupling map `{other}`"))),
        };
        if map.n_qubits != n_qubits {
            return Err(Error::config(
                "ansatz.coupling",
                format!("map acts on {} qubits, the tapered register has {n_qubits}", map.n_qubits),
            ));
        }
        Ok(map)
    }

    pub fn kind(&self) -> AnsatzKind {
        match self.kind {
            AnsatzChoice::Adaptive => AnsatzKind::Adaptive,
            AnsatzChoice::Linear => AnsatzKind::Linear { layers: self.layers },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Shots of the rotation-eigenvalue measurement on the sampled backend.
    pub c4_shots: u64,
    /// Discard outcomes contradicting the known spin parities and `C2`.
    pub postselect: bool,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            c4_shots: 8192,
            postselect: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendChoice,
    pub model: ModelConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub vqe: VqeConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub measurement: MeasurementConfig,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    /// Defaults for a model at `u` over the default grid.
    pub fn new(name: &str, n_sites: usize, u: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            output_dir: None,
            seed: 0,
            backend: BackendChoice::Sampled,
            model: ModelConfig {
                n_sites,
                t: 1.0,
                u,
                t_prime_over_t: default_grid(),
                sectors: Vec::new(),
            },
            noise: NoiseModel::default(),
            vqe: VqeConfig::default(),
            ansatz: AnsatzConfig::default(),
            measurement: MeasurementConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("{} is not supported, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file-name-safe string"));
        }
        let m = &self.model;
        if m.n_sites != 4 && m.n_sites != 6 {
            return Err(Error::config("model.n_sites", format!("{} sites unsupported, use 4 or 6", m.n_sites)));
        }
        if !(m.t.is_finite() && m.t > 0.0) {
            return Err(Error::config("model.t", "must be positive"));
        }
        if !m.u.is_finite() {
            return Err(Error::config("model.u", "must be finite"));
        }
        if m.t_prime_over_t.is_empty() {
            return Err(Error::config("model.t_prime_over_t", "grid is empty"));
        }
        if let Some(i) = m.t_prime_over_t.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("model.t_prime_over_t[{i}]"), "not finite"));
        }
        for (i, irrep) in m.sectors().iter().enumerate() {
            let ok = match irrep {
                Irrep::E => m.n_sites == 4,
                Irrep::E1 | Irrep::E2 => m.n_sites == 6,
                _ => true,
            };
            if !ok {
                return Err(Error::config(
                    format!("model.sectors[{i}]"),
                    format!("{irrep} does not occur on {} sites", m.n_sites),
                ));
            }
        }
        self.noise.validate()?;
        self.vqe.validate()?;
        let n_reduced = 2 * m.n_sites - 4;
        if self.ansatz.kind == AnsatzChoice::Adaptive {
            self.ansatz.coupling_map(n_reduced)?;
        } else if self.ansatz.layers == 0 {
            return Err(Error::config("ansatz.layers", "must be positive"));
        }
        if self.measurement.c4_shots == 0 {
            return Err(Error::config("measurement.c4_shots", "must be positive"));
        }
        Ok(())
    }

    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendChoice::Exact => Backend::Exact,
            BackendChoice::Sampled => Backend::Sampled {
                budget: self.vqe.budget(),
                noise: self.noise,
            },
        }
    }

    /// Grid points in configured order, each with every sector.
    pub fn cells(&self) -> Vec<(f64, Irrep)> {
        let sectors = self.model.sectors();
        self.model
            .t_prime_over_t
            .iter()
            .flat_map(|&x| sectors.iter().map(move |&s| (x, s)))
            .collect()
    }
}

fn irrep_code(irrep: Irrep) -> u64 {
    match irrep {
        Irrep::A1 => 0,
        Irrep::A2 => 1,
        Irrep::B1 => 2,
        Irrep::B2 => 3,
        Irrep::E => 4,
        Irrep::E1 => 5,
        Irrep::E2 => 6,
    }
}

/// Seed of one (grid point, sector) cell; independent of grid order.
pub fn cell_seed(base: u64, t_prime_over_t: f64, irrep: Irrep) -> u64 {
    derive_seed(base, &[t_prime_over_t.to_bits(), irrep_code(irrep)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    pub cell: u64,
}

/// Everything needed to recompute one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub name: String,
    pub n_sites: usize,
    pub t: f64,
    pub u: f64,
    pub t_prime_over_t: f64,
    pub irrep: Irrep,
    pub backend: BackendChoice,
    pub noise: NoiseModel,
    pub vqe: VqeConfig,
    pub ansatz: AnsatzConfig,
    pub measurement: MeasurementConfig,
    pub seeds: Seeds,
    pub seq_index: usize,
    pub sequence: CzSequence,
}

impl RunSpec {
    pub fn id(&self) -> String {
        record_id(&self.name, self.t_prime_over_t, self.irrep, self.seq_index)
    }

    fn backend(&self) -> Backend {
        match self.backend {
            BackendChoice::Exact => Backend::Exact,
            BackendChoice::Sampled => Backend::Sampled {
                budget: self.vqe.budget(),
                noise: self.noise,
            },
        }
    }
}

pub fn record_id(name: &str, t_prime_over_t: f64, irrep: Irrep, seq: usize) -> String {
    format!("{name}_t{t_prime_over_t:.4}_{irrep}_c{seq}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub version: String,
    pub spec: RunSpec,
    pub theta_opt: Vec<f64>,
    pub best_restart: usize,
    /// Penalized cost reported by the optimizer.
    pub cost: EnergyEstimate,
    /// Energy measured once after optimization.
    pub e_vqe: EnergyEstimate,
    /// Weighted average of the raw repeats.
    pub e_opt: EnergyEstimate,
    /// Weighted average of the Lanczos-corrected repeats.
    pub e_l: EnergyEstimate,
    pub e_opt_repeats: Vec<EnergyEstimate>,
    pub e_l_repeats: Vec<EnergyEstimate>,
    /// Repeats where the measured variance was too small for the correction.
    pub lanczos_degenerate: usize,
    /// Noiseless energy at `theta_opt`.
    pub e_non: f64,
    pub filling: f64,
    pub filling_deviation: f64,
    /// Weight on the sector's exact ground level.
    pub overlap: f64,
    /// Rotation eigenvalue distribution over `m` with `lambda = exp(2 pi i m / n)`.
    pub c4: Vec<f64>,
    pub c4_postselected: Option<Vec<f64>>,
    pub retained_fraction: Option<f64>,
    pub e0_sector: f64,
    pub restarts: Vec<RestartResult>,
}

impl ExperimentRecord {
    pub fn p_lambda_minus_one(&self) -> f64 {
        self.c4[self.spec.n_sites / 2]
    }

    pub fn p_lambda_minus_one_postselected(&self) -> Option<f64> {
        self.c4_postselected.as_ref().map(|c| c[self.spec.n_sites / 2])
    }
}

/// Tapered problem and exact reference for one grid point and sector.
#[derive(Clone, Debug)]
pub struct SectorProblem {
    pub model: HubbardModel,
    pub sector: Sector,
    pub plan: TaperingPlan,
    pub problem: VqeProblem,
    pub moments: MomentOperators,
    pub e0: f64,
    /// Tapered states spanning the lowest sector level.
    pub ground_level: Vec<Statevector>,
}

impl SectorProblem {
    pub fn new(n_sites: usize, t: f64, u: f64, t_prime_over_t: f64, irrep: Irrep, ansatz: &AnsatzConfig) -> Result<Self> {
        let params = HubbardParams::new(n_sites, t, t_prime_over_t * t, u)?;
        let model = HubbardModel::new(params)?;
        let sector = Sector::half_filling(n_sites, irrep)?;
        let plan = build_plan(
            &model.hamiltonian,
            &model.symmetries.tapering_set(),
            &sector.tapering_eigenvalues(),
        )?;
        let hamiltonian = taper(&model.hamiltonian, &plan)?;
        let number = taper(&model.number, &plan)?;
        let spectrum = model.spectrum(Some(&sector), Some(model.half_filling()))?;
        if spectrum.is_empty() {
            return Err(Error::Numerical(format!("no half-filled states in the {irrep} sector")));
        }
        let ground = spectrum.levels(1e-8).remove(0);
        let ground_level = ground
            .map(|i| taper_state(&spectrum.state(i), &plan))
            .collect::<Result<Vec<_>>>()?;
        let n_reduced = plan.n_reduced();
        let problem = VqeProblem {
            hamiltonian,
            number,
            target: n_sites as f64,
            map: match ansatz.kind {
                AnsatzChoice::Adaptive => ansatz.coupling_map(n_reduced)?,
                AnsatzChoice::Linear => CouplingMap::all_pairs(n_reduced),
            },
            ansatz: ansatz.kind(),
        };
        let moments = MomentOperators::new(&problem.hamiltonian)?;
        Ok(Self {
            model,
            sector,
            plan,
            problem,
            moments,
            e0: spectrum.ground_energy(),
            ground_level,
        })
    }

    pub fn ground_overlap(&self, psi: &Statevector) -> f64 {
        self.ground_level.iter().map(|g| g.overlap(psi)).sum()
    }

    /// Outcome distribution of the rotation eigenvalue for reduced gates.
    fn rotation_eigenvalue(
        &self,
        reduced: &[crate::simulator::Gate],
        spec: &RunSpec,
        c: u64,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>, Option<f64>)> {
        let n = self.model.params.n_sites;
        let ordering = &self.model.ordering;
        let mut full = self.plan.lift_circuit(reduced)?;
        full.extend(self.plan.untaper_circuit());
        if spec.backend == BackendChoice::Exact {
            let psi = run(&full, 2 * n, None)?;
            return Ok((measure_c4(&psi, n, ordering)?.probabilities, None, None));
        }
        full.extend(c4_basis_gates(n, ordering)?);
        let exec = Executor::new(&full, 2 * n, None, Some(&spec.noise))?;
        let mut rng = rng_for(spec.seeds.cell, &[STREAM_C4, c]);
        let counts = exec.sample_with_suffix(&[], spec.measurement.c4_shots, &mut rng)?;
        let raw = C4Distribution::from_counts(n, ordering, &counts)?.probabilities;
        if !spec.measurement.postselect {
            return Ok((raw, None, None));
        }
        let sy = &self.model.symmetries;
        let known = [
            (sy.p_up, self.sector.p_up),
            (sy.p_down, self.sector.p_down),
            (sy.c2, self.sector.c2),
        ];
        match symmetry_postselect(&counts, &known) {
            Ok(ps) => Ok((
                raw,
                Some(C4Distribution::from_counts(n, ordering, &ps.counts)?.probabilities),
                Some(ps.retained_fraction),
            )),
            Err(Error::EmptyPostselection(f)) => Ok((raw, None, Some(f))),
            Err(e) => Err(e),
        }
    }
}

/// Runs the full pipeline for one sequence.
pub fn compute_record(spec: &RunSpec, sp: &SectorProblem) -> Result<ExperimentRecord> {
    let backend = spec.backend();
    let seeds = spec.seeds;
    let c = spec.seq_index as u64;
    let seq = optimize_sequence(&sp.problem, &spec.sequence, spec.seq_index, &spec.vqe, &backend, seeds.cell)?;
    let cost = sp.problem.cost_function(&spec.sequence, spec.vqe.penalty)?;
    let theta = &seq.theta_opt;
    let psi = cost.state(theta)?;
    let gates = cost.circuit.bind(theta)?;
    let (filling, filling_deviation) = cost.filling(theta)?;

    let mut raw = Vec::new();
    let mut mitigated = Vec::new();
    let mut degenerate = 0;
    match backend {
        Backend::Exact => {
            let m = MomentEstimates::of_state(&sp.moments, &psi)?;
            let l = lanczos_estimate(&m);
            degenerate += usize::from(l.degenerate);
            raw.push(EnergyEstimate::exact(m.m1));
            mitigated.push(l.estimate);
        }
        Backend::Sampled { budget, noise } => {
            let exec = Executor::new(&gates, sp.problem.n_qubits(), None, Some(&noise))?;
            for l in 0..spec.vqe.repeats {
                let mut rng = rng_for(seeds.cell, &[STREAM_REPEAT, c, l as u64]);
                let m = measure_moments(&exec, &sp.moments, budget, &mut rng)?;
                let est = lanczos_estimate(&m);
                degenerate += usize::from(est.degenerate);
                raw.push(EnergyEstimate::new(m.m1, m.sigma1));
                mitigated.push(est.estimate);
            }
        }
    }
    let (c4, c4_postselected, retained_fraction) = sp.rotation_eigenvalue(&gates, spec, c)?;
    Ok(ExperimentRecord {
        id: spec.id(),
        version: VERSION.into(),
        spec: spec.clone(),
        theta_opt: theta.clone(),
        best_restart: seq.best_restart,
        cost: seq.cost,
        e_vqe: seq.energy,
        e_opt: weighted_average(&raw)?.estimate,
        e_l: weighted_average(&mitigated)?.estimate,
        e_opt_repeats: raw,
        e_l_repeats: mitigated,
        lanczos_degenerate: degenerate,
        e_non: cost.energy(theta)?,
        filling,
        filling_deviation,
        overlap: sp.ground_overlap(&psi),
        c4,
        c4_postselected,
        retained_fraction,
        e0_sector: sp.e0,
        restarts: seq.restarts,
    })
}

/// Records of every sequence of one cell, in sequence order.
pub fn run_cell(cfg: &ExperimentConfig, t_prime_over_t: f64, irrep: Irrep) -> Result<Vec<ExperimentRecord>> {
    let m = &cfg.model;
    let sp = SectorProblem::new(m.n_sites, m.t, m.u, t_prime_over_t, irrep, &cfg.ansatz)?;
    let seeds = Seeds {
        base: cfg.seed,
        cell: cell_seed(cfg.seed, t_prime_over_t, irrep),
    };
    let sequences = match cfg.ansatz.kind {
        AnsatzChoice::Adaptive => draw_sequences(&sp.problem.map, cfg.vqe.n_cz, cfg.vqe.n_c, seeds.cell)?,
        AnsatzChoice::Linear => vec![CzSequence(Vec::new()); cfg.vqe.n_c],
    };
    sequences
        .into_iter()
        .enumerate()
        .map(|(c, sequence)| {
            let spec = RunSpec {
                name: cfg.name.clone(),
                n_sites: m.n_sites,
                t: m.t,
                u: m.u,
                t_prime_over_t,
                irrep,
                backend: cfg.backend,
                noise: cfg.noise,
                vqe: cfg.vqe.clone(),
                ansatz: cfg.ansatz.clone(),
                measurement: cfg.measurement.clone(),
                seeds,
                seq_index: c,
                sequence,
            };
            compute_record(&spec, &sp)
        })
        .collect()
}

/// All cells in grid order, without touching the file system.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (x, irrep) in cfg.cells() {
        out.extend(run_cell(cfg, x, irrep)?);
    }
    Ok(out)
}

/// Runs every cell, appending records to `dir/records.jsonl` as cells finish,
/// then writes the summary and per-record traces. `progress` sees each cell.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dir: &Path,
    mut progress: impl FnMut(usize, usize, f64, Irrep),
) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    fs::create_dir_all(dir.join("traces"))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let mut writer = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    let cells = cfg.cells();
    let mut records = Vec::new();
    // Cells of a chunk run concurrently; the writer stays in grid order.
    let chunk = rayon::current_num_threads().max(1);
    for (k, group) in cells.chunks(chunk).enumerate() {
        for (j, &(x, irrep)) in group.iter().enumerate() {
            progress(k * chunk + j, cells.len(), x, irrep);
        }
        let batches: Vec<Result<Vec<ExperimentRecord>>> =
            group.par_iter().map(|&(x, irrep)| run_cell(cfg, x, irrep)).collect();
        for batch in batches {
            let batch = batch?;
            for r in &batch {
                serde_json::to_writer(&mut writer, r)?;
                writer.write_all(b"\n")?;
                let best = &r.restarts[r.best_restart];
                let trace = File::create(dir.join("traces").join(format!("{}.csv", r.id)))?;
                write_trace_csv(BufWriter::new(trace), &best.trace)?;
            }
            writer.flush()?;
            records.extend(batch);
        }
    }
    write_summary_csv(File::create(dir.join(SUMMARY_FILE))?, cfg, &summarize(cfg, &records)?)?;
    Ok(records)
}

pub fn read_records(dir: &Path) -> Result<Vec<ExperimentRecord>> {
    let path = dir.join(RECORDS_FILE);
    let file = File::open(&path).map_err(|e| Error::config(path.display().to_string(), format!("cannot open: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::config(format!("{}:{}", path.display(), i + 1), e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn find_record(dir: &Path, id: &str) -> Result<ExperimentRecord> {
    read_records(dir)?
        .into_iter()
        .find(|r| r.id == id)
        .ok_or_else(|| Error::RecordNotFound(id.into()))
}

/// Recomputes a record from its stored specification, optionally under another cell seed.
pub fn replay(record: &ExperimentRecord, cell_seed_override: Option<u64>) -> Result<ExperimentRecord> {
    if record.version != VERSION {
        return Err(Error::VersionMismatch {
            record: record.version.clone(),
            binary: VERSION.into(),
        });
    }
    let mut spec = record.spec.clone();
    if let Some(s) = cell_seed_override {
        spec.seeds.cell = s;
    }
    let sp = SectorProblem::new(spec.n_sites, spec.t, spec.u, spec.t_prime_over_t, spec.irrep, &spec.ansatz)?;
    compute_record(&spec, &sp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub irrep: Irrep,
    pub e0: f64,
    /// `min_c` of the Lanczos-corrected averages.
    pub e_l: Option<EnergyEstimate>,
    pub e_opt: Option<EnergyEstimate>,
    pub e_non: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t_prime_over_t: f64,
    pub sectors: Vec<SectorSummary>,
    /// Sector minimizing `min_c E_L`; `None` when a sector has no records.
    pub predicted: Option<Irrep>,
    /// Other sectors with exactly the predicted value.
    pub ties: Vec<Irrep>,
    pub ed_ground: Irrep,
}

impl SummaryRow {
    pub fn matches_ed(&self) -> bool {
        self.predicted == Some(self.ed_ground) && self.ties.is_empty()
    }
}

fn min_by_value<T: Copy>(items: impl Iterator<Item = T>, key: impl Fn(&T) -> f64) -> Option<T> {
    let mut best: Option<T> = None;
    for it in items {
        if best.as_ref().is_none_or(|b| key(&it) < key(b)) {
            best = Some(it);
        }
    }
    best
}

/// Per-grid-point sector comparison; exact references come from fresh diagonalization.
pub fn summarize(cfg: &ExperimentConfig, records: &[ExperimentRecord]) -> Result<Vec<SummaryRow>> {
    let m = &cfg.model;
    let sectors = m.sectors();
    let mut rows = Vec::new();
    for &x in &m.t_prime_over_t {
        let model = HubbardModel::new(HubbardParams::new(m.n_sites, m.t, x * m.t, m.u)?)?;
        let mut out = Vec::new();
        for &irrep in &sectors {
            let sector = Sector::half_filling(m.n_sites, irrep)?;
            let e0 = model.sector_ground(&sector)?.0;
            let mine: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.spec.irrep == irrep && r.spec.t_prime_over_t == x)
                .collect();
            out.push(SectorSummary {
                irrep,
                e0,
                e_l: min_by_value(mine.iter().map(|r| r.e_l), |e| e.value),
                e_opt: min_by_value(mine.iter().map(|r| r.e_opt), |e| e.value),
                e_non: min_by_value(mine.iter().map(|r| r.e_non), |v| *v),
            });
        }
        let ed_ground = out[crate::vqe::argmin(out.iter().map(|s| s.e0))].irrep;
        let (predicted, ties) = if out.iter().all(|s| s.e_l.is_some()) {
            let vals: Vec<f64> = out.iter().map(|s| s.e_l.map_or(f64::INFINITY, |e| e.value)).collect();
            let i = crate::vqe::argmin(vals.iter().copied());
            let ties = out
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i && vals[j] == vals[i])
                .map(|(_, s)| s.irrep)
                .collect();
            (Some(out[i].irrep), ties)
        } else {
            (None, Vec::new())
        };
        rows.push(SummaryRow {
            t_prime_over_t: x,
            sectors: out,
            predicted,
            ties,
            ed_ground,
        });
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

pub fn write_summary_csv<W: Write>(w: W, cfg: &ExperimentConfig, rows: &[SummaryRow]) -> Result<()> {
    let mut w = BufWriter::new(w);
    let sectors = cfg.model.sectors();
    let mut header = vec!["t_over".to_string()];
    for s in &sectors {
        for col in ["E_L", "sigma_L", "E_opt", "sigma", "E_non", "E0"] {
            header.push(format!("{col}_{s}"));
        }
    }
    header.extend(["predicted", "ties", "ed_ground", "match"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cells = vec![r.t_prime_over_t.to_string()];
        for s in &r.sectors {
            cells.push(fmt_opt(s.e_l.map(|e| e.value)));
            cells.push(fmt_opt(s.e_l.map(|e| e.sigma)));
            cells.push(fmt_opt(s.e_opt.map(|e| e.value)));
            cells.push(fmt_opt(s.e_opt.map(|e| e.sigma)));
            cells.push(fmt_opt(s.e_non));
            cells.push(s.e0.to_string());
        }
        cells.push(r.predicted.map_or_else(|| NA.to_string(), |p| p.to_string()));
        cells.push(r.ties.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";"));
        cells.push(r.ed_ground.to_string());
        cells.push(if r.predicted.is_none() { NA.into() } else { r.matches_ed().to_string() });
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `fig3.csv`, `fig4.csv` and `fig5.csv` for the given result directories
/// into `out`; expected cells without records become `NA` rows.
pub fn emit_plotdata(dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if dirs.is_empty() {
        return Err(Error::config("plotdata", "no result directories given"));
    }
    fs::create_dir_all(out)?;
    let mut runs = Vec::new();
    for d in dirs {
        let cfg = ExperimentConfig::load(&d.join(CONFIG_FILE))?;
        let records = read_records(d)?;
        runs.push((cfg, records));
    }
    let fig3 = out.join("fig3.csv");
    let fig4 = out.join("fig4.csv");
    let fig5 = out.join("fig5.csv");
    let mut w3 = BufWriter::new(File::create(&fig3)?);
    let mut w4 = BufWriter::new(File::create(&fig4)?);
    writeln!(w3, "run,t_over,sector,seq,E_opt,E_L,E_non,sigma,sigma_L,E0_exact")?;
    writeln!(
        w4,
        "run,t_over,sector,seq,overlap_with_ED_ground,P_lambda_minus1,P_lambda_minus1_postselected,retained_fraction"
    )?;
    let mut fig5_rows: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for (cfg, records) in &runs {
        let index: BTreeMap<String, &ExperimentRecord> = records.iter().map(|r| (r.id.clone(), r)).collect();
        for (x, irrep) in cfg.cells() {
            let mut best_err: Option<f64> = None;
            for c in 0..cfg.vqe.n_c {
                let id = record_id(&cfg.name, x, irrep, c);
                match index.get(&id) {
                    Some(r) => {
                        writeln!(
                            w3,
                            "{},{x},{irrep},{c},{},{},{},{},{},{}",
                            cfg.name, r.e_opt.value, r.e_l.value, r.e_non, r.e_opt.sigma, r.e_l.sigma, r.e0_sector
                        )?;
                        writeln!(
                            w4,
                            "{},{x},{irrep},{c},{},{},{},{}",
                            cfg.name,
                            r.overlap,
                            r.p_lambda_minus_one(),
                            fmt_opt(r.p_lambda_minus_one_postselected()),
                            fmt_opt(r.retained_fraction)
                        )?;
                        let err = (r.e_non - r.e0_sector).abs() / cfg.model.t;
                        best_err = Some(best_err.map_or(err, |b| b.min(err)));
                    }
                    None => {
                        writeln!(w3, "{},{x},{irrep},{c},{NA},{NA},{NA},{NA},{NA},{NA}", cfg.name)?;
                        writeln!(w4, "{},{x},{irrep},{c},{NA},{NA},{NA},{NA}", cfg.name)?;
                    }
                }
            }
            let key = (format!("{:?}", cfg.ansatz.kind).to_lowercase(), n_entanglers(cfg));
            fig5_rows.entry(key).or_default().push(best_err.unwrap_or(f64::NAN));
        }
    }
    w3.flush()?;
    w4.flush()?;
    let mut w5 = BufWriter::new(File::create(&fig5)?);
    writeln!(w5, "ansatz,n_CZ,mean_abs_error_over_grid,points,missing")?;
    for ((kind, n_cz), errs) in fig5_rows {
        let present: Vec<f64> = errs.iter().copied().filter(|e| e.is_finite()).collect();
        let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        writeln!(w5, "{kind},{n_cz},{},{},{}", fmt_opt(mean), present.len(), errs.len() - present.len())?;
    }
    w5.flush()?;
    Ok(vec![fig3, fig4, fig5])
}

fn n_entanglers(cfg: &ExperimentConfig) -> usize {
    match cfg.ansatz.kind {
        AnsatzChoice::Adaptive => cfg.vqe.n_cz,
        AnsatzChoice::Linear => cfg.ansatz.layers * (2 * cfg.model.n_sites - 5),
    }
}
