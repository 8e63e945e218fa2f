//! Command implementations: simulate, estimate, converge.
//!
//! Each run writes its artifacts into the output directory plus one
//! `manifest.json` referencing every file produced. All randomness flows
//! from the single resolved seed, so identical configurations reproduce
//! CSV outputs byte for byte; only the manifest's wall-time field varies.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use specgal::control::Control;
use specgal::estimates::{growth_check, kato_constants, BoundReport};
use specgal::galerkin::{
    find_truncation, heldout_validation, reference_drift, FamilySpec, HarnessParams,
};
use specgal::propagator::{propagate, RecordSpec, TimeGrid};
use specgal::spectral::{Geometry, SpectralModel, StateVector};
use specgal::{Error, Result};

use crate::config::{Command, Config, ControlSource, ConvergeConfig, GeometryKind, StateSource};

pub struct RunContext {
    pub config: Config,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub eps_override: Option<f64>,
    pub control_override: Option<PathBuf>,
    pub quiet: bool,
}

impl RunContext {
    fn say(&self, text: &str) {
        if !self.quiet {
            println!("{text}");
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config: String,
    seed: Option<u64>,
    amplitude_cap: Option<f64>,
    /// Control indices whose sup norm exceeds the cap; informational only.
    amplitude_cap_exceeded: Vec<usize>,
    sobolev_orders: Vec<f64>,
    outputs: Vec<String>,
    wall_time_ms: u128,
}

pub fn execute(ctx: &RunContext) -> Result<i32> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    match ctx.config.command {
        Command::Simulate => simulate(ctx),
        Command::Estimate => estimate(ctx),
        Command::Converge => converge(ctx),
    }
}

fn build_model(ctx: &RunContext, dim: usize) -> Result<SpectralModel> {
    let m = &ctx.config.model;
    let geometry = match m.geometry {
        GeometryKind::DirichletBox => Geometry::DirichletBox,
        GeometryKind::FlatTorus => Geometry::FlatTorus {
            spectral_shift: 1.0,
        },
    };
    let quad = m
        .quad_points
        .unwrap_or_else(|| SpectralModel::default_quad_points(&geometry, dim));
    match m.geometry {
        GeometryKind::DirichletBox => {
            SpectralModel::dirichlet_box(dim, m.v.clone(), m.w.clone(), quad)
        }
        GeometryKind::FlatTorus => SpectralModel::flat_torus(dim, m.v.clone(), m.w.clone(), quad),
    }
}

fn load_controls(ctx: &RunContext) -> Result<Vec<Control>> {
    if let Some(path) = &ctx.control_override {
        return Ok(vec![Control::from_json(&std::fs::read_to_string(path)?)?]);
    }
    match ctx.config.controls.as_ref().expect("validated") {
        ControlSource::File { file } => {
            Ok(vec![Control::from_json(&std::fs::read_to_string(file)?)?])
        }
        ControlSource::Family { family } => {
            let seed = ctx.seed.expect("validated: family needs a seed");
            Control::random_family(
                seed,
                family.tv_budget,
                family.horizon,
                family.pieces,
                family.count,
            )
        }
    }
}

fn load_states(ctx: &RunContext, dim: usize) -> Result<Vec<StateVector>> {
    match ctx.config.initial_states.as_ref().expect("validated") {
        StateSource::Eigenvectors { eigenvectors } => eigenvectors
            .iter()
            .map(|&n| StateVector::eigenstate(dim, n))
            .collect(),
        StateSource::Files { files } => files
            .iter()
            .map(|p| {
                let state: StateVector = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                if state.dim() != dim {
                    return Err(Error::InvalidInput(format!(
                        "state file {} has dimension {}, model expects {dim}",
                        p.display(),
                        state.dim()
                    )));
                }
                Ok(state)
            })
            .collect(),
    }
}

fn cap_violations(cap: Option<f64>, controls: &[Control]) -> Vec<usize> {
    match cap {
        None => Vec::new(),
        Some(cap) => controls
            .iter()
            .enumerate()
            .filter(|(_, c)| c.sup_norm() > cap)
            .map(|(i, _)| i)
            .collect(),
    }
}

fn write_manifest(
    ctx: &RunContext,
    command: &str,
    outputs: Vec<String>,
    cap_hits: Vec<usize>,
    started: Instant,
) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        config: ctx.config_path.display().to_string(),
        seed: ctx.seed,
        amplitude_cap: ctx.config.amplitude_cap,
        amplitude_cap_exceeded: cap_hits,
        sobolev_orders: ctx.config.sobolev_orders.clone(),
        outputs,
        wall_time_ms: started.elapsed().as_millis(),
    };
    std::fs::write(
        ctx.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn simulate(ctx: &RunContext) -> Result<i32> {
    let started = Instant::now();
    let model = build_model(ctx, ctx.config.model.dim)?;
    let controls = load_controls(ctx)?;
    let states = load_states(ctx, model.dim())?;
    let record = RecordSpec {
        grid: TimeGrid::Uniform(ctx.config.grid_points),
        sobolev_orders: ctx.config.sobolev_orders.clone(),
    };

    let mut outputs = Vec::new();
    for (ci, c) in controls.iter().enumerate() {
        for (si, state) in states.iter().enumerate() {
            let traj = propagate(&model, c, 0.0, c.horizon(), state, &record)?;
            let name = format!("trajectory_c{ci}_s{si}.csv");
            std::fs::write(ctx.out_dir.join(&name), traj.to_csv())?;
            outputs.push(name);
        }
    }
    let cap_hits = cap_violations(ctx.config.amplitude_cap, &controls);
    write_manifest(ctx, "simulate", outputs.clone(), cap_hits, started)?;
    ctx.say(&format!(
        "simulate: wrote {} trajectories to {}",
        outputs.len(),
        ctx.out_dir.display()
    ));
    Ok(0)
}

/// One aggregate row per bound report.
fn aggregate_row(report: &BoundReport, control_id: usize, state_id: usize) -> String {
    let get = |key: &str| {
        report
            .constants
            .get(key)
            .map(|v| v.to_string())
            .unwrap_or_default()
    };
    format!(
        "{},{},{control_id},{state_id},{},{},{},{},{},{},{}\n",
        report.bound_name,
        get("k"),
        report.margin,
        report.violated,
        report.literal_flagged,
        get("c_k"),
        get("fitted_m"),
        get("M"),
        get("bv_a"),
    )
}

fn estimate(ctx: &RunContext) -> Result<i32> {
    let started = Instant::now();
    let model = build_model(ctx, ctx.config.model.dim)?;
    let controls = load_controls(ctx)?;
    let states = load_states(ctx, model.dim())?;
    let ks = &ctx.config.estimate.as_ref().expect("validated").ks;
    let grid = TimeGrid::Uniform(ctx.config.grid_points);

    let mut outputs = Vec::new();
    let mut aggregate =
        String::from("bound_name,k,control_id,state_id,margin,violated,literal_flagged,c_k,fitted_m,kato_m,bv_a\n");
    let mut guaranteed_violation = false;

    for (ci, c) in controls.iter().enumerate() {
        for (si, state) in states.iter().enumerate() {
            if !c.has_atoms() {
                let report = kato_constants(&model, c, state, &grid)?;
                guaranteed_violation |= report.violated;
                aggregate.push_str(&aggregate_row(&report, ci, si));
                let name = format!("kato_c{ci}_s{si}.json");
                std::fs::write(ctx.out_dir.join(&name), report.to_json()?)?;
                outputs.push(name);
            }
            for &k in ks {
                let reports = growth_check(&model, c, state, k, &grid)?;
                for report in &reports {
                    guaranteed_violation |= report.violated;
                    aggregate.push_str(&aggregate_row(report, ci, si));
                }
                let name = format!("growth_c{ci}_s{si}_k{k}.json");
                std::fs::write(
                    ctx.out_dir.join(&name),
                    serde_json::to_string_pretty(&reports)?,
                )?;
                outputs.push(name);
            }
        }
    }

    std::fs::write(ctx.out_dir.join("aggregate.csv"), &aggregate)?;
    outputs.push("aggregate.csv".to_string());
    let cap_hits = cap_violations(ctx.config.amplitude_cap, &controls);
    write_manifest(ctx, "estimate", outputs, cap_hits, started)?;

    if guaranteed_violation {
        ctx.say("estimate: a guaranteed bound was violated");
        Ok(4)
    } else {
        ctx.say(&format!(
            "estimate: all guaranteed bounds hold; reports in {}",
            ctx.out_dir.display()
        ));
        Ok(0)
    }
}

fn converge(ctx: &RunContext) -> Result<i32> {
    let started = Instant::now();
    let section: &ConvergeConfig = ctx.config.converge.as_ref().expect("validated");
    let eps = ctx.eps_override.unwrap_or(section.eps);
    let seed = ctx.seed.expect("validated: converge needs a seed");

    let reference = build_model(ctx, section.reference_dim)?;
    let states = load_states(ctx, reference.dim())?;

    let params = HarnessParams {
        eps,
        mass_budget: section.mass_budget,
        horizon: section.horizon,
        sobolev_order: section.s,
        coupling_order: section.k,
        grid_points: ctx.config.grid_points,
    };
    let family = FamilySpec {
        seed,
        count: section.family.count,
        pieces: section.family.pieces,
        include_adversarial: section.family.include_adversarial,
        include_atoms: section.family.include_atoms,
    };

    let report = find_truncation(&reference, &params, &family, &states, &section.dims)?;
    std::fs::write(ctx.out_dir.join("convergence.json"), report.to_json()?)?;
    std::fs::write(ctx.out_dir.join("convergence.csv"), report.to_csv())?;
    let mut outputs = vec![
        "convergence.json".to_string(),
        "convergence.csv".to_string(),
    ];

    let mut self_check_failed = false;
    if section.self_check {
        let doubled = build_model(ctx, 2 * section.reference_dim)?;
        let drift = reference_drift(&doubled, &report, &states)?;
        let threshold = 0.1 * eps;
        let passed = drift < threshold;
        self_check_failed = !passed;
        #[derive(Serialize)]
        struct SelfCheck {
            doubled_dim: usize,
            max_drift: f64,
            threshold: f64,
            passed: bool,
        }
        std::fs::write(
            ctx.out_dir.join("self_check.json"),
            serde_json::to_string_pretty(&SelfCheck {
                doubled_dim: doubled.dim(),
                max_drift: drift,
                threshold,
                passed,
            })?,
        )?;
        outputs.push("self_check.json".to_string());
    }

    let mut heldout_passed = None;
    if report.selected_n.is_some() {
        let fresh_seed = section.heldout_seed.unwrap_or(seed ^ 0x9e37_79b9_7f4a_7c15);
        let count = section.heldout_count.unwrap_or(section.family.count);
        let heldout = heldout_validation(&reference, &report, &states, fresh_seed, count)?;
        heldout_passed = Some(heldout.passed);
        std::fs::write(
            ctx.out_dir.join("heldout.json"),
            serde_json::to_string_pretty(&heldout)?,
        )?;
        outputs.push("heldout.json".to_string());
    }

    write_manifest(ctx, "converge", outputs, Vec::new(), started)?;

    if self_check_failed {
        ctx.say("converge: doubled-reference self-check failed; run rejected");
        return Ok(3);
    }
    match (report.selected_n, heldout_passed) {
        (Some(n), Some(true)) => {
            ctx.say(&format!(
                "converge: selected N = {n}; held-out validation passed"
            ));
            Ok(0)
        }
        (Some(n), Some(false)) => {
            ctx.say(&format!(
                "converge: selected N = {n} but held-out validation failed"
            ));
            Ok(4)
        }
        _ => {
            ctx.say("converge: no tested dimension meets eps");
            Ok(4)
        }
    }
}

/// Maps library errors to the documented exit codes: 2 for configuration
/// and usage problems, 3 for numerical-accuracy failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Accuracy(_) => 3,
        Error::InvalidInput(_) | Error::Parse(_) | Error::Io(_) => 2,
    }
}
