//! One function per scenario. Each writes its CSVs into the output
//! directory and returns a JSON summary for the metadata file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use finitebath::bath::{enumerate_spectrum, ks_distance_to_gaussian, lindeberg_check, GridCanonical, Volumes};
use finitebath::correlation::{numerical_rate, overlap_ratio, symmetric_times, RateEngine, RateMode, RateTable, SpectralDensity};
use finitebath::dynamics::{
    adaptive_stationary, canonical_bath, evolve_bms_adaptive, evolve_bms_fixed, evolve_emme, gibbs_populations,
    microcanonical_bath, stationary_distribution, system_basis_state, time_integrated_l1, BathStart, BmsSetup,
    EmmeMethod, JointDistribution, RateMatrix, Trajectory,
};
use finitebath::kernel::EnergyGrid;
use finitebath::oracle::{measure_joint, microcanonical_weights, thermal_weights, ExactPropagator, FullState};

use crate::config::{BathInit, Resolved, Scenario};

/// Collects the files written by a scenario.
pub struct Output {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(values: &[f64]) -> String {
    values.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(",")
}

fn engine(r: &Resolved, mode: RateMode) -> Result<RateEngine> {
    let s = &r.config.spectral;
    let spectral = SpectralDensity::new(&r.bath, s.lambda, s.c0)?;
    Ok(RateEngine::new(mode, &r.bath, r.kernel, spectral)?)
}

fn grid(r: &Resolved, volumes: &Volumes) -> Result<EnergyGrid> {
    Ok(volumes.grid_with_sigmas(r.config.dynamics.grid_sigmas)?)
}

pub fn run(r: &Resolved, out: &mut Output) -> Result<Value> {
    match r.scenario {
        Scenario::Spectrum => spectrum(r, out),
        Scenario::Correlations => correlations(r, out),
        Scenario::Rates => rates(r, out),
        Scenario::Evolve => evolve(r, out),
        Scenario::Compare => compare(r, out),
        Scenario::Stationary => stationary(r, out),
        Scenario::Mutualinfo => mutualinfo(r, out),
        Scenario::Validate => validate(r, out),
    }
}

/// Bin fractions `V(E)/2^N` from the Gaussian fit and, when feasible, exact counts.
fn spectrum(r: &Resolved, out: &mut Output) -> Result<Value> {
    let gaussian = Volumes::gaussian(&r.bath, r.kernel);
    let exact = Volumes::exact(&r.bath, r.kernel).ok();
    let grid = gaussian.grid_with_sigmas(r.config.dynamics.grid_sigmas)?;
    out.write("spectrum.csv", |w| {
        writeln!(w, "E,gaussian_fraction,exact_fraction")?;
        for e in grid.energies() {
            let ex = exact.as_ref().map_or(f64::NAN, |v| v.fraction(e));
            writeln!(w, "{}", row(&[e, gaussian.fraction(e), ex]))?;
        }
        Ok(())
    })?;
    let ks = match enumerate_spectrum(&r.bath) {
        Ok(levels) => Some(ks_distance_to_gaussian(&levels, r.bath.sigma_n())),
        Err(e) => {
            log::warn!("exact spectrum skipped: {e}");
            None
        }
    };
    Ok(json!({
        "sigma_n": r.bath.sigma_n(),
        "lindeberg_ratio": lindeberg_check(&r.bath).ratio,
        "ks_distance": ks,
    }))
}

fn correlations(r: &Resolved, out: &mut Output) -> Result<Value> {
    let c = &r.config.correlations;
    let eng = engine(r, r.config.spectral.mode)?;
    let taus = symmetric_times(c.tau_max, c.n_taus);
    let lambda = r.config.spectral.lambda;
    let mut worst = 0.0f64;
    let mut checks = Vec::new();
    for (idx, &(e, ep)) in c.pairs.iter().enumerate() {
        let samples = eng.correlation(e, ep)?.sample(&taus);
        out.write(&format!("correlation_{idx}.csv"), |w| {
            writeln!(w, "tau,re,im")?;
            for (t, z) in taus.iter().zip(&samples) {
                writeln!(w, "{}", row(&[*t, z.re, z.im]))?;
            }
            Ok(())
        })?;
        for &omega in &c.omegas {
            let num = numerical_rate(lambda, &taus, &samples, omega);
            let g1 = eng.gamma1(e, ep, omega)?;
            if g1 > 0.0 {
                worst = worst.max((num - g1).abs() / g1);
            }
            checks.push([e, ep, omega, num, g1]);
        }
    }
    out.write("rate_check.csv", |w| {
        writeln!(w, "E,E_prime,omega,numerical,gamma1")?;
        for v in &checks {
            writeln!(w, "{}", row(v))?;
        }
        Ok(())
    })?;
    let mut summary = json!({ "max_relative_deviation": worst });
    if let Some(rc) = c.ratio {
        let mut ratios = Vec::new();
        for n in rc.n_min..=r.bath.n_spins {
            let sub = r.bath.truncated(n)?;
            ratios.push((n, overlap_ratio(&sub, &r.kernel, rc.e, rc.e_prime, rc.omega)?));
        }
        out.write("ratio.csv", |w| {
            writeln!(w, "N,R")?;
            for (n, x) in &ratios {
                writeln!(w, "{n},{}", fmt(*x))?;
            }
            Ok(())
        })?;
        summary["ratio_last"] = json!(ratios.last().map(|x| x.1));
    }
    Ok(summary)
}

fn rates(r: &Resolved, out: &mut Output) -> Result<Value> {
    let eng = engine(r, r.config.spectral.mode)?;
    let grid = grid(r, eng.volumes())?;
    let omegas = &r.config.rates.omegas;
    let table = RateTable::build(&eng, grid, omegas)?;
    out.write("rates.csv", |w| table.write_csv(w))?;
    let mut worst_kms = 0.0f64;
    out.write("kappa.csv", |w| {
        writeln!(w, "E,omega,kappa,kms_residual")?;
        for (wi, &omega) in omegas.iter().enumerate() {
            for i in 0..grid.len() {
                let e = grid.energy(i);
                let kms = eng.kms_residual(e, omega).unwrap_or(f64::NAN);
                if e.abs() <= r.bath.sigma_n() && kms.is_finite() {
                    worst_kms = worst_kms.max(kms);
                }
                writeln!(w, "{}", row(&[e, omega, table.kappa(wi, i), kms]))?;
            }
        }
        Ok(())
    })?;
    Ok(json!({
        "n_bins": grid.len(),
        "excluded_bins": table.excluded,
        "spectral_density": omegas.iter().map(|&w| eng.spectral().continuum(w)).collect::<Vec<_>>(),
        "max_kms_residual_within_sigma": worst_kms,
    }))
}

/// Initial system populations and bath distribution from the `initial` section.
struct Start {
    p_s: Vec<f64>,
    p_e: Vec<f64>,
    bms: BathStart,
}

fn start(r: &Resolved, init: BathInit, volumes: &Volumes, grid: EnergyGrid) -> Result<Start> {
    let system = r.system();
    let level = r.config.initial.system_level.unwrap_or(system.dim() - 1);
    let p_s = system_basis_state(&system, level)?;
    let (p_e, bms) = match init {
        BathInit::Canonical { beta } => (canonical_bath(volumes, grid, beta)?, BathStart::Beta(beta)),
        BathInit::Microcanonical { energy } => (microcanonical_bath(volumes, grid, energy)?, BathStart::Energy(energy)),
    };
    Ok(Start { p_s, p_e, bms })
}

struct EmmeRun {
    matrix: RateMatrix,
    canonical: GridCanonical,
    start: Start,
    p0: JointDistribution,
}

fn emme_setup(r: &Resolved, eng: &RateEngine, init: BathInit) -> Result<EmmeRun> {
    let grid = grid(r, eng.volumes())?;
    let matrix = RateMatrix::build(r.system(), eng, grid)?;
    let canonical = GridCanonical::new(eng.volumes(), grid)?;
    let start = start(r, init, eng.volumes(), grid)?;
    let p0 = JointDistribution::product(r.system(), grid, &start.p_s, &start.p_e)?;
    Ok(EmmeRun {
        matrix,
        canonical,
        start,
        p0,
    })
}

fn emme_trajectory(r: &Resolved, run: &EmmeRun, method: EmmeMethod) -> Result<Trajectory> {
    let states = evolve_emme(&run.matrix, &run.p0, r.times(), method)?;
    Ok(Trajectory::from_emme(&run.matrix, &run.canonical, r.times(), &states)?)
}

/// One wide CSV per output time: rows `k`, columns bath energies.
fn dump_joint(out: &mut Output, traj: &Trajectory) -> Result<()> {
    let Some(joint) = &traj.joint else {
        return Ok(());
    };
    let n = traj.grid.len();
    let header: Vec<String> = traj.grid.energies().iter().map(|e| format!("p_E_{e}")).collect();
    for (i, (pt, p)) in traj.points.iter().zip(joint).enumerate() {
        out.write(&format!("joint/joint_{i:05}.csv"), |w| {
            writeln!(w, "# t = {}", fmt(pt.t))?;
            writeln!(w, "k,{}", header.join(","))?;
            for (k, block) in p.chunks(n).enumerate() {
                writeln!(w, "{k},{}", row(block))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn trajectory_summary(t: &Trajectory) -> Value {
    let first = &t.points[0].obs;
    let last = &t.points[t.points.len() - 1].obs;
    let max_drift = t.points.iter().map(|p| (p.obs.u - first.u).abs()).fold(0.0, f64::max);
    let min_clausius = t.points.iter().map(|p| p.obs.clausius_rate).fold(f64::INFINITY, f64::min);
    let max_mi = t.points.iter().map(|p| p.obs.mutual_info).fold(0.0, f64::max);
    json!({
        "beta_star_initial": first.beta_star,
        "beta_star_final": last.beta_star,
        "max_energy_drift": max_drift,
        "min_clausius_rate": min_clausius,
        "max_mutual_info": max_mi,
        "p_s_final": t.points[t.points.len() - 1].p_s,
    })
}

fn evolve(r: &Resolved, out: &mut Output) -> Result<Value> {
    let eng = engine(r, r.config.spectral.mode)?;
    let run = emme_setup(r, &eng, r.config.initial.bath)?;
    let traj = emme_trajectory(r, &run, r.config.dynamics.method)?;
    out.write("trajectory_emme.csv", |w| traj.write_csv(w))?;
    if r.config.dynamics.dump_joint {
        dump_joint(out, &traj)?;
    }
    let mut s = trajectory_summary(&traj);
    s["n_blocks"] = json!(run.matrix.components().len());
    Ok(s)
}

fn max_l1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn compare(r: &Resolved, out: &mut Output) -> Result<Value> {
    let eng = engine(r, r.config.spectral.mode)?;
    let run = emme_setup(r, &eng, r.config.initial.bath)?;
    let emme = emme_trajectory(r, &run, r.config.dynamics.method)?;
    let setup = BmsSetup::new(r.system(), &eng, run.matrix.grid)?;
    let times = r.times();
    let adaptive = evolve_bms_adaptive(&setup, run.start.bms, &run.start.p_s, times, r.config.dynamics.beta_update)?;
    let beta0 = adaptive.points[0].obs.beta_star;
    let fixed = evolve_bms_fixed(&setup, beta0, &run.start.p_s, times)?;
    out.write("trajectory_emme.csv", |w| emme.write_csv(w))?;
    out.write("trajectory_bms_adaptive.csv", |w| adaptive.write_csv(w))?;
    out.write("trajectory_bms_fixed.csv", |w| fixed.write_csv(w))?;
    out.write("beta_star.csv", |w| {
        writeln!(w, "t,beta_star_emme,beta_star_bms,beta_fixed")?;
        for (e, a) in emme.points.iter().zip(&adaptive.points) {
            writeln!(w, "{}", row(&[e.t, e.obs.beta_star, a.obs.beta_star, beta0]))?;
        }
        Ok(())
    })?;
    if r.config.dynamics.dump_joint {
        dump_joint(out, &emme)?;
    }
    let pe = emme.system_populations();
    let pa = adaptive.system_populations();
    let pf = fixed.system_populations();
    Ok(json!({
        "beta0": beta0,
        "max_l1": {
            "adaptive_vs_emme": max_l1(&pa, &pe),
            "fixed_vs_emme": max_l1(&pf, &pe),
            "adaptive_vs_fixed": max_l1(&pa, &pf),
        },
        "integrated_l1": {
            "adaptive_vs_emme": time_integrated_l1(times, &pa, &pe),
            "fixed_vs_emme": time_integrated_l1(times, &pf, &pe),
        },
        "emme": trajectory_summary(&emme),
    }))
}

fn stationary(r: &Resolved, out: &mut Output) -> Result<Value> {
    let eng = engine(r, r.config.spectral.mode)?;
    let run = emme_setup(r, &eng, r.config.initial.bath)?;
    let st = stationary_distribution(&run.matrix, &run.p0)?;
    let setup = BmsSetup::new(r.system(), &eng, run.matrix.grid)?;
    let (beta_final, p_adaptive) = adaptive_stationary(&setup, run.start.bms, &run.start.p_s)?;
    let beta0 = match run.start.bms {
        BathStart::Beta(b) => b,
        BathStart::Energy(e) => finitebath::dynamics::beta_star_of(&run.canonical, e)?,
    };
    let p_fixed = gibbs_populations(&r.system(), beta0);
    let p_emme = st.system_marginal();
    let grid = run.matrix.grid;
    let n = grid.len();
    out.write("stationary_joint.csv", |w| {
        writeln!(w, "k,E,p")?;
        for (s, x) in st.p.iter().enumerate() {
            writeln!(w, "{},{},{}", s / n, fmt(grid.energy(s % n)), fmt(*x))?;
        }
        Ok(())
    })?;
    out.write("stationary_system.csv", |w| {
        writeln!(w, "k,emme,bms_adaptive,bms_fixed")?;
        for k in 0..p_emme.len() {
            writeln!(w, "{k},{}", row(&[p_emme[k], p_adaptive[k], p_fixed[k]]))?;
        }
        Ok(())
    })?;
    let pe = st.bath_marginal();
    let u_b: f64 = grid.energies().iter().zip(&pe).map(|(e, p)| e * p).sum();
    Ok(json!({
        "beta0": beta0,
        "beta_star_final_bms": beta_final,
        "beta_star_final_emme": finitebath::dynamics::beta_star_of(&run.canonical, u_b).ok(),
        "mutual_info": st.mutual_information(),
    }))
}

fn mutualinfo(r: &Resolved, out: &mut Output) -> Result<Value> {
    let eng = engine(r, r.config.spectral.mode)?;
    let mi = r.config.mutualinfo;
    let mut runs = Vec::new();
    for init in [
        BathInit::Canonical { beta: mi.beta },
        BathInit::Microcanonical { energy: mi.energy },
    ] {
        let run = emme_setup(r, &eng, init)?;
        runs.push(emme_trajectory(r, &run, r.config.dynamics.method)?);
    }
    out.write("mutual_info.csv", |w| {
        writeln!(w, "t,canonical,microcanonical")?;
        for (a, b) in runs[0].points.iter().zip(&runs[1].points) {
            writeln!(w, "{}", row(&[a.t, a.obs.mutual_info, b.obs.mutual_info]))?;
        }
        Ok(())
    })?;
    out.write("trajectory_canonical.csv", |w| runs[0].write_csv(w))?;
    out.write("trajectory_microcanonical.csv", |w| runs[1].write_csv(w))?;
    let peak = |t: &Trajectory| t.points.iter().map(|p| p.obs.mutual_info).fold(0.0, f64::max);
    Ok(json!({
        "log_d": (r.system().dim() as f64).ln(),
        "max_canonical": peak(&runs[0]),
        "max_microcanonical": peak(&runs[1]),
    }))
}

/// Exact unitary evolution against EMME with oracle-mode rates.
fn validate(r: &Resolved, out: &mut Output) -> Result<Value> {
    let system = r.system();
    let lambda = r.config.spectral.lambda;
    let eng = engine(r, RateMode::Oracle)?;
    let grid = grid(r, eng.volumes())?;
    let matrix = RateMatrix::build(system, &eng, grid)?;
    let level = r.config.initial.system_level.unwrap_or(system.dim() - 1);
    let p_s = system_basis_state(&system, level)?;
    let weights = match r.config.initial.bath {
        BathInit::Canonical { beta } => thermal_weights(&r.bath, beta)?,
        BathInit::Microcanonical { energy } => microcanonical_weights(&r.bath, &r.kernel, energy)?,
    };
    let rho0 = FullState::diagonal_product(system, &r.bath, &p_s, &weights)?;
    let p0 = measure_joint(&rho0, &r.kernel, grid)?;
    let times = r.times();
    let exact = ExactPropagator::new(system, &r.bath, lambda)?.evolve_many(&rho0, times)?;
    let emme = evolve_emme(&matrix, &p0, times, r.config.dynamics.method)?;
    let mut worst = 0.0f64;
    let mut rows = Vec::with_capacity(times.len());
    for ((t, ex), em) in times.iter().zip(&exact).zip(&emme) {
        let measured = measure_joint(ex, &r.kernel, grid)?;
        let dev = measured.p.iter().zip(&em.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
        let mut v = vec![*t, dev, measured.l1_distance(em)];
        v.extend(measured.system_marginal());
        v.extend(em.system_marginal());
        rows.push(v);
    }
    out.write("validate.csv", |w| {
        let d = system.dim();
        let mut header = String::from("t,max_abs_deviation,l1_deviation");
        for k in 0..d {
            header.push_str(&format!(",p_k_{k}_exact"));
        }
        for k in 0..d {
            header.push_str(&format!(",p_k_{k}_emme"));
        }
        writeln!(w, "{header}")?;
        for v in &rows {
            writeln!(w, "{}", row(v))?;
        }
        Ok(())
    })?;
    let bound = 10.0 * lambda;
    Ok(json!({
        "max_abs_deviation": worst,
        "bound": bound,
        "within_bound": worst < bound,
    }))
}
