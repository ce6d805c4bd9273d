//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stderr so it shows up without `--nocapture`.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use ringvqe::experiment::{run_in_memory, summarize, BackendChoice, ExperimentConfig, ExperimentRecord, DEFAULT_GRID};
use ringvqe::hubbard::{exact_diagonalize, find_transition, BasisFilter, HubbardModel, HubbardParams, Irrep, Sector};
use ringvqe::mitigation::{lanczos_estimate, weighted_average, MomentEstimates, MomentOperators};
use ringvqe::rng::rng_for;
use ringvqe::simulator::{estimate_with_budget, Executor, ShotBudget};
use ringvqe::tapering::{build_plan, taper};
use ringvqe::vqe::{spsa_minimize, OptimizerKind, SpsaSettings};
use ringvqe::{EnergyEstimate, Letter, PauliString, PauliSum, Statevector};

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n}: {} {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn model(t_prime_over_t: f64, u: f64) -> HubbardModel {
    HubbardModel::new(HubbardParams::new(4, 1.0, t_prime_over_t, u).unwrap()).unwrap()
}

fn sector(irrep: Irrep) -> Sector {
    Sector::half_filling(4, irrep).unwrap()
}

#[test]
fn criterion_1_exact_transition() {
    let start = Instant::now();
    let x = find_transition(4, 1.0, 0.5, &sector(Irrep::B1), &sector(Irrep::A1), (0.48, 0.52), 1e-4);
    let elapsed = start.elapsed();
    let pass = matches!(x, Ok(x) if x > 0.48 && x < 0.52) && elapsed < Duration::from_secs(10);
    report(1, pass, format!("crossing at t'/t = {x:?} in {elapsed:.2?}"));
    assert!(pass);
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn criterion_2_tapering_fidelity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut mismatched = Vec::new();
    for x in [0.2, 0.4, 0.5, 0.6, 0.8] {
        let m = model(x, 0.5);
        let syms = m.symmetries.tapering_set();
        for s in Sector::all() {
            let plan = build_plan(&m.hamiltonian, &syms, &s.tapering_eigenvalues()).unwrap();
            let reduced = taper(&m.hamiltonian, &plan).unwrap();
            let tapered = exact_diagonalize(&reduced, &BasisFilter::new()).unwrap().energies;
            let full = m.spectrum(Some(&s), None).unwrap().energies;
            if tapered.len() != full.len() {
                mismatched.push((x, s));
                continue;
            }
            for (a, b) in sorted(tapered).iter().zip(sorted(full)) {
                worst = worst.max((a - b).abs());
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatched.is_empty() && worst < 1e-10 && elapsed < Duration::from_secs(30);
    report(
        2,
        pass,
        format!("{checked} sector spectra, max deviation {worst:.2e}, size mismatches {mismatched:?}, {elapsed:.2?}"),
    );
    assert!(pass);
}

fn noiseless_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("noiseless", 4, 0.5);
    cfg.backend = BackendChoice::Exact;
    cfg.model.t_prime_over_t = (0..=10).map(|k| k as f64 / 10.0).collect();
    cfg.model.sectors = vec![Irrep::A1, Irrep::B1];
    cfg.vqe.optimizer = OptimizerKind::Simplex;
    cfg.vqe.n_cz = 15;
    cfg.vqe.n_c = 4;
    cfg.vqe.n_init = 5;
    cfg.vqe.max_iters = 20_000;
    cfg.vqe.repeats = 1;
    cfg
}

fn noiseless_runs() -> &'static (Vec<ExperimentRecord>, Duration) {
    static RUNS: OnceLock<(Vec<ExperimentRecord>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let records = run_in_memory(&noiseless_config()).unwrap();
        (records, start.elapsed())
    })
}

#[test]
fn criterion_3_noiseless_ansatz_accuracy() {
    let cfg = noiseless_config();
    let (records, elapsed) = noiseless_runs();
    let mut errors = Vec::new();
    for (x, irrep) in cfg.cells() {
        let best = records
            .iter()
            .filter(|r| r.spec.t_prime_over_t == x && r.spec.irrep == irrep)
            .map(|r| (r.e_non - r.e0_sector).abs())
            .fold(f64::INFINITY, f64::min);
        errors.push(best);
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let pass = errors.len() == 22 && mean <= 1e-3 && *elapsed < Duration::from_secs(30 * 60);
    report(3, pass, format!("mean |E_opt - E0|/t = {mean:.2e} (worst {worst:.2e}) over {} cells in {elapsed:.2?}", errors.len()));
    assert!(pass);
}

/// The default noisy pipeline on the standard grid.
fn noisy_config() -> ExperimentConfig {
    let cfg = ExperimentConfig::new("noisy", 4, 0.5);
    assert_eq!(cfg.model.t_prime_over_t, DEFAULT_GRID.to_vec());
    assert_eq!(cfg.model.sectors(), vec![Irrep::A1, Irrep::B1, Irrep::E]);
    assert_eq!((cfg.noise.p1, cfg.noise.p2, cfg.noise.readout), (0.001, 0.01, 0.03));
    let v = &cfg.vqe;
    assert_eq!((v.n_cz, v.n_c, v.n_init, v.max_iters, v.shots, v.repeats), (3, 4, 5, 100, 1024, 5));
    assert_eq!(v.optimizer, OptimizerKind::Spsa);
    cfg
}

fn noisy_runs() -> &'static (Vec<ExperimentRecord>, Duration) {
    static RUNS: OnceLock<(Vec<ExperimentRecord>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let records = run_in_memory(&noisy_config()).unwrap();
        (records, start.elapsed())
    })
}

#[test]
fn criterion_4_noisy_pipeline_with_mitigation() {
    let cfg = noisy_config();
    let (records, elapsed) = noisy_runs();
    let rows = summarize(&cfg, records).unwrap();
    let mut worst: (f64, f64, Irrep) = (0.0, 0.0, Irrep::A1);
    let mut wrong = Vec::new();
    for row in &rows {
        for s in &row.sectors {
            let err = (s.e_l.unwrap().value - s.e0).abs();
            if err > worst.0 {
                worst = (err, row.t_prime_over_t, s.irrep);
            }
        }
        let excused = row.t_prime_over_t > 0.44 && row.t_prime_over_t < 0.56;
        if !row.matches_ed() && !excused {
            wrong.push((row.t_prime_over_t, row.predicted, row.ed_ground));
        }
    }
    let pass = worst.0 <= 0.15 && wrong.is_empty() && *elapsed < Duration::from_secs(2 * 3600);
    let predicted: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{}", r.t_prime_over_t, r.predicted.map_or("NA".into(), |p| p.to_string())))
        .collect();
    report(
        4,
        pass,
        format!(
            "max |min_c E_L - E0| = {:.3} at t'/t = {} {}; wrong sectors {wrong:?}; predicted [{}]; {elapsed:.2?}",
            worst.0,
            worst.1,
            worst.2,
            predicted.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_mitigation_improvement() {
    let (records, _) = noisy_runs();
    let n = records.len() as f64;
    let raw = records.iter().map(|r| (r.e_opt.value - r.e0_sector).abs()).sum::<f64>() / n;
    let mitigated = records.iter().map(|r| (r.e_l.value - r.e0_sector).abs()).sum::<f64>() / n;
    let factor = raw / mitigated;
    let pass = mitigated <= raw / 1.5;
    report(
        5,
        pass,
        format!("mean |E_opt - E0| = {raw:.3}, mean |E_L - E0| = {mitigated:.3}, reduction factor {factor:.2} over {n} runs"),
    );
    assert!(pass);
}

/// Spearman rank correlation.
fn rank_correlation(pairs: &[(f64, f64)]) -> f64 {
    let ranks = |key: &dyn Fn(&(f64, f64)) -> f64| {
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.sort_by(|&a, &b| key(&pairs[a]).total_cmp(&key(&pairs[b])));
        let mut r = vec![0.0; pairs.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && key(&pairs[idx[j + 1]]) == key(&pairs[idx[i]]) {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = 0.5 * (i + j) as f64;
            }
            i = j + 1;
        }
        r
    };
    let rx = ranks(&|p| p.0);
    let ry = ranks(&|p| p.1);
    let n = pairs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn criterion_6_rotation_eigenvalue_measurement() {
    // Converged states come from the noiseless runs; short optimizations add
    // partially converged states spanning the overlap range.
    let (converged, _) = noiseless_runs();
    let mut records: Vec<&ExperimentRecord> = converged.iter().collect();
    let mut partial = Vec::new();
    for budget in [20, 60, 150, 400, 1000] {
        let mut cfg = noiseless_config();
        cfg.name = format!("partial{budget}");
        cfg.model.t_prime_over_t = vec![0.2, 0.4, 0.6, 0.8];
        cfg.vqe.max_iters = budget;
        cfg.vqe.n_init = 1;
        partial.extend(run_in_memory(&cfg).unwrap());
    }
    records.extend(partial.iter());

    let mut ok = true;
    let mut details = Vec::new();
    for (irrep, expect_high) in [(Irrep::B1, true), (Irrep::A1, false)] {
        let mine: Vec<&&ExperimentRecord> = records.iter().filter(|r| r.spec.irrep == irrep).collect();
        let high: Vec<f64> = mine
            .iter()
            .filter(|r| r.overlap >= 0.99)
            .map(|r| r.p_lambda_minus_one())
            .collect();
        let bad = high
            .iter()
            .filter(|&&p| if expect_high { p < 0.98 } else { p > 0.02 })
            .count();
        let pairs: Vec<(f64, f64)> = mine.iter().map(|r| (r.overlap, r.p_lambda_minus_one())).collect();
        let rho = rank_correlation(&pairs);
        let sign_ok = if expect_high { rho > 0.0 } else { rho < 0.0 };
        ok &= !high.is_empty() && bad == 0 && sign_ok;
        details.push(format!(
            "{irrep}: {} states with overlap >= 0.99, {bad} outside bound, rank correlation {rho:.2} over {}",
            high.len(),
            pairs.len()
        ));
    }
    report(6, ok, details.join("; "));
    assert!(ok);
}

fn random_hermitian(rng: &mut impl Rng, n: usize) -> PauliSum {
    let letters = [Letter::I, Letter::X, Letter::Y, Letter::Z];
    let mut terms = Vec::new();
    for _ in 0..rng.random_range(3..12) {
        let p = PauliString::from_letters(&(0..n).map(|_| letters[rng.random_range(0..4)]).collect::<Vec<_>>());
        terms.push((p, Complex64::new(rng.random_range(-1.0..1.0), 0.0)));
    }
    PauliSum::from_terms(n, terms).unwrap()
}

#[test]
fn criterion_7_lanczos_exactness() {
    let mut rng = rng_for(7, &[]);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 500 {
        let h = random_hermitian(&mut rng, 4);
        let spec = exact_diagonalize(&h, &BasisFilter::new()).unwrap();
        let (i, j) = (rng.random_range(0..16), rng.random_range(0..16));
        // Two distinct eigenvalues are needed for a two-dimensional support.
        if (spec.energies[i] - spec.energies[j]).abs() < 1e-6 {
            continue;
        }
        let (a, b) = (spec.state(i), spec.state(j));
        let w: f64 = rng.random_range(0.05..0.95);
        let phase = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let amps = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| x * w.sqrt() + y * phase * (1.0 - w).sqrt())
            .collect();
        let psi = Statevector::normalized(amps).unwrap();
        let ops = MomentOperators::new(&h).unwrap();
        let l = lanczos_estimate(&MomentEstimates::of_state(&ops, &psi).unwrap());
        let target = spec.energies[i].min(spec.energies[j]);
        worst = worst.max((l.estimate.value - target).abs());
        done += 1;
    }
    let pass = worst < 1e-9;
    report(7, pass, format!("max |E_L - E_min| = {worst:.2e} over {done} states"));
    assert!(pass);
}

#[test]
#[ignore = "long-running six-site sweep"]
fn criterion_8_six_site_transition() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new("six", 6, 1.5);
    cfg.backend = BackendChoice::Exact;
    cfg.model.t_prime_over_t = vec![0.8, 0.9, 1.2, 1.3];
    cfg.model.sectors = vec![Irrep::A1, Irrep::A2];
    cfg.vqe.optimizer = OptimizerKind::Simplex;
    cfg.vqe.n_cz = 24;
    cfg.vqe.n_c = 4;
    cfg.vqe.n_init = 5;
    cfg.vqe.max_iters = 100_000;
    cfg.vqe.repeats = 1;
    // At f = 0.05 the six-site optimum drifts to four particles.
    cfg.vqe.penalty = 0.5;
    let records = run_in_memory(&cfg).unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for &x in &cfg.model.t_prime_over_t {
        let mut best = Vec::new();
        for irrep in [Irrep::A1, Irrep::A2] {
            let r = records
                .iter()
                .filter(|r| r.spec.t_prime_over_t == x && r.spec.irrep == irrep)
                .min_by(|a, b| a.e_non.total_cmp(&b.e_non))
                .unwrap();
            let err = (r.e_non - r.e0_sector).abs();
            ok &= err <= 0.1;
            best.push((irrep, r.e_non, r.e0_sector, err));
        }
        let vqe_order = best[0].1 < best[1].1;
        let ed_order = best[0].2 < best[1].2;
        ok &= vqe_order == ed_order;
        details.push(format!(
            "{x}: A1 err {:.3}, A2 err {:.3}, lower VQE {} / ED {}",
            best[0].3,
            best[1].3,
            if vqe_order { "A1" } else { "A2" },
            if ed_order { "A1" } else { "A2" }
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(8 * 3600);
    report(8, ok, format!("{}; {elapsed:.2?}", details.join("; ")));
    assert!(ok);
}

#[test]
fn criterion_9_statistical_soundness() {
    // Coverage of the weighted average of K = 5 shot-noise-limited estimates.
    let m = model(0.3, 0.5);
    let s = sector(Irrep::B1);
    let plan = build_plan(&m.hamiltonian, &m.symmetries.tapering_set(), &s.tapering_eigenvalues()).unwrap();
    let h = taper(&m.hamiltonian, &plan).unwrap();
    let mut rng = rng_for(9, &[0]);
    let amps: Vec<Complex64> = (0..16)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let psi = Statevector::normalized(amps).unwrap();
    let truth = h.expectation(&psi).unwrap().re;
    let exec = Executor::new(&[], 4, Some(&psi), None).unwrap();
    let meta = 200;
    let mut covered = 0;
    for k in 0..meta {
        let mut rng = rng_for(9, &[1, k]);
        let xs: Vec<EnergyEstimate> = (0..5)
            .map(|_| estimate_with_budget(&exec, &h, ShotBudget::PerGroup(256), &mut rng).unwrap())
            .collect();
        let avg = weighted_average(&xs).unwrap().estimate;
        covered += usize::from((avg.value - truth).abs() <= 1.96 * avg.sigma);
    }
    let coverage = covered as f64 / meta as f64;
    let coverage_ok = (0.90..=0.99).contains(&coverage);

    // SPSA on a noisy quadratic bowl.
    let target = [0.7, -1.2, 2.0, 0.3];
    let mut hits = 0;
    for seed in 0..20 {
        let mut rng = rng_for(seed, &[]);
        let bowl = |th: &[f64], factor: u64, rng: &mut ringvqe::rng::SimRng| {
            let sigma = 0.1 / (factor as f64).sqrt();
            let v: f64 = th.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
            let noise: f64 = rand_distr::Distribution::sample(&rand_distr::Normal::new(0.0, sigma).unwrap(), rng);
            Ok(EnergyEstimate::new(v + noise, sigma))
        };
        let res = spsa_minimize(bowl, &[0.0; 4], 200, &SpsaSettings::default(), &mut rng).unwrap();
        let dist: f64 = res.theta.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        hits += usize::from(dist < 0.2);
    }
    let pass = coverage_ok && hits == 20;
    report(9, pass, format!("95% interval coverage {coverage:.3} over {meta} meta-repeats; SPSA bowl {hits}/20 seeds"));
    assert!(pass);
}
