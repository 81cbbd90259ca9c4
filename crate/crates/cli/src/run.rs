use std::io::Write;
use std::time::Instant;

use qfpt_core::diffusion::{self, DiffusionProblem, DriftSuperoperator, PECLET_LIMIT};
use qfpt_core::fpt::{format_float, FptResult, TAIL_TOL};
use qfpt_core::jump::{self, Boundary, JumpProblem};
use qfpt_core::kur::{self, dynamical_activity, quantum_correction, DRAZIN_TOL};
use qfpt_core::models::{homodyne_qubit, thermal_driven_qubit};
use qfpt_core::state::Horizon;
use qfpt_core::trajectory::{
    self, simulate, ThresholdSpec, TrajectoryConfig, Unravelling, DIFFUSION_STEP_LIMIT, JUMP_STEP_LIMIT,
    JUMP_STEP_WARN,
};
use qfpt_core::{build_liouvillian, drazin_inverse, steady_state, DensityMatrix, LindbladModel};
use serde_json::{json, Value};

use crate::args::{
    Builtin, Cli, Command, FptDiffusionArgs, FptJumpArgs, KurScanArgs, ModelArgs, Start, TrajectoryArgs,
    UnravellingArg, ValidateArgs,
};
use crate::model_file::ModelFile;
use crate::output::{config_hash, Artifacts, Manifest, VERSION};
use crate::CliError;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (workflow, seed) = match &cli.command {
        Command::FptJump(_) => ("fpt-jump", None),
        Command::FptDiffusion(_) => ("fpt-diffusion", None),
        Command::Trajectories(a) => ("trajectories", Some(a.seed)),
        Command::KurScan(_) => ("kur-scan", None),
        Command::Validate(a) => return validate(a),
    };
    let hash = config_hash(&cli.command);
    let mut artifacts = Artifacts::new(&cli.out, workflow, &hash)?;
    let outcome = match &cli.command {
        Command::FptJump(a) => fpt_jump(a, &mut artifacts),
        Command::FptDiffusion(a) => fpt_diffusion(a, &mut artifacts),
        Command::Trajectories(a) => trajectories(a, &mut artifacts),
        Command::KurScan(a) => kur_scan(a, &mut artifacts),
        Command::Validate(_) => unreachable!("handled above"),
    };
    // A failing physics check still leaves its artifacts behind.
    let (results, failure) = match outcome {
        Ok(results) => (results, None),
        Err(Failure::After { results, error }) => (results, Some(error)),
        Err(Failure::Before(e)) => return Err(e),
    };
    let manifest = Manifest {
        tool: "qfpt",
        version: VERSION,
        workflow: workflow.into(),
        config: serde_json::to_value(&cli.command).expect("configuration serializes"),
        config_hash: hash,
        seed,
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: Vec::new(),
        results,
    };
    let path = artifacts.finish(manifest)?;
    println!("wrote {}", path.display());
    failure.map_or(Ok(()), Err)
}

enum Failure {
    Before(CliError),
    /// Artifacts were written but the run must still report an error.
    After { results: Value, error: CliError },
}

impl<E: Into<CliError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Before(e.into())
    }
}

fn check_positive(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{name} must be positive, got {value}")))
    }
}

fn check_nonnegative(name: &str, value: f64) -> Result<(), CliError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("--{name} must be nonnegative, got {value}")))
    }
}

fn build_model(args: &ModelArgs) -> Result<LindbladModel, CliError> {
    match (&args.builtin, &args.model) {
        (Some(builtin), None) => {
            check_positive("gamma", args.gamma)?;
            check_nonnegative("omega", args.omega)?;
            check_nonnegative("nbar", args.nbar)?;
            Ok(match builtin {
                Builtin::ThermalQubit => thermal_driven_qubit(args.gamma, args.omega, args.nbar),
                Builtin::HomodyneQubit => homodyne_qubit(args.gamma, args.omega),
            })
        }
        (None, Some(path)) => ModelFile::load(path)?.into_model(),
        _ => Err(CliError::Config("give exactly one of --builtin and --model".into())),
    }
}

fn initial_state(args: &ModelArgs, model: &LindbladModel) -> Result<DensityMatrix, CliError> {
    let start = args.start.unwrap_or(match args.builtin {
        Some(Builtin::HomodyneQubit) => Start::Ground,
        _ => Start::Steady,
    });
    let d = model.dim();
    let qubit_only = |name: &str| {
        CliError::Config(format!("--start {name} needs a two-level model; use steady or mixed"))
    };
    Ok(match start {
        Start::Steady => steady_state(&build_liouvillian(model))?,
        Start::Mixed => DensityMatrix::maximally_mixed(d),
        Start::Excited if d == 2 => DensityMatrix::basis(2, 0),
        Start::Ground if d == 2 => DensityMatrix::basis(2, 1),
        Start::Excited => return Err(qubit_only("excited")),
        Start::Ground => return Err(qubit_only("ground")),
    })
}

fn boundaries<T: Copy>(upper: Option<T>, lower: Option<T>) -> Result<(Boundary<T>, Boundary<T>), CliError> {
    if upper.is_none() && lower.is_none() {
        return Err(CliError::Config(
            "give --threshold, --lower-threshold or both".into(),
        ));
    }
    Ok((
        upper.map_or(Boundary::Unbounded, Boundary::Threshold),
        lower.map_or(Boundary::Unbounded, Boundary::Threshold),
    ))
}

/// Step and horizon; a fixed horizon without an explicit step shrinks the
/// default step so that it divides the horizon.
fn time_grid(dt: Option<f64>, fixed: Option<f64>, default_dt: f64, default: Horizon) -> Result<(f64, Horizon), CliError> {
    if let Some(dt) = dt {
        check_positive("dt", dt)?;
    }
    match fixed {
        Some(t) => {
            check_positive("horizon", t)?;
            let dt = dt.unwrap_or_else(|| t / (t / default_dt).ceil());
            Ok((dt, Horizon::Fixed(t)))
        }
        None => Ok((dt.unwrap_or(default_dt), default)),
    }
}

fn moments_summary(r: &FptResult) -> Value {
    match r.moments(TAIL_TOL) {
        Ok(m) => json!({ "moments": m, "conditioned_on_horizon": false }),
        Err(tail) => match r.conditioned_moments() {
            Ok(m) => json!({
                "moments": m,
                "conditioned_on_horizon": true,
                "note": tail.to_string(),
            }),
            Err(e) => json!({ "moments": null, "note": e.to_string() }),
        },
    }
}

fn fpt_summary(r: &FptResult) -> Value {
    json!({
        "dt": r.dt,
        "horizon": r.horizon(),
        "survival_at_horizon": r.final_survival(),
        "absorbed": r.absorption(),
        "ledger_residual": r.ledger_residual(),
        "statistics": moments_summary(r),
    })
}

fn fpt_jump(a: &FptJumpArgs, artifacts: &mut Artifacts) -> Result<Value, Failure> {
    let model = build_model(&a.model)?;
    let initial = initial_state(&a.model, &model)?;
    let (upper, lower) = boundaries(a.threshold, a.lower_threshold)?;
    let mut problem = JumpProblem::new(model, initial, upper, lower);
    (problem.dt, problem.horizon) = time_grid(a.dt, a.horizon, problem.dt, problem.horizon)?;
    let s = jump::solve(&problem)?;
    s.result.validate()?;

    let two_sided = a.threshold.is_some() && a.lower_threshold.is_some();
    let extra = if two_sided {
        vec![
            ("f_lower".to_string(), s.flux_lower.clone()),
            ("f_upper".to_string(), s.flux_upper.clone()),
        ]
    } else {
        Vec::new()
    };
    let out = artifacts.create("fpt_jump.csv")?;
    s.result.write_csv(out, artifacts.metadata(), &extra)?;
    let rows: Vec<Vec<String>> = jump::charge_distribution(&s.final_state)?
        .into_iter()
        .map(|(n, p)| vec![n.to_string(), format_float(p)])
        .collect();
    artifacts.write_table("final_distribution.csv", &["N", "P"], &rows)?;
    Ok(json!({
        "window": [s.window.lower(), s.window.upper()],
        "fpt": fpt_summary(&s.result),
    }))
}

fn fpt_diffusion(a: &FptDiffusionArgs, artifacts: &mut Artifacts) -> Result<Value, Failure> {
    let model = build_model(&a.model)?;
    let initial = initial_state(&a.model, &model)?;
    check_positive("dn", a.dn)?;
    let (upper, lower) = boundaries(a.threshold, a.lower_threshold)?;
    let mut problem = DiffusionProblem::new(model, initial, upper, lower);
    problem.step = a.dn;
    (problem.dt, problem.horizon) = time_grid(a.dt, a.horizon, problem.dt, problem.horizon)?;
    let s = diffusion::solve(&problem)?;
    s.result.validate()?;

    let out = artifacts.create("fpt_diffusion.csv")?;
    s.result.write_csv(out, artifacts.metadata(), &[])?;
    let final_note = match diffusion::conditioned_final_distribution(&s.final_state) {
        Ok(dist) => {
            let rows: Vec<Vec<String>> = dist
                .into_iter()
                .map(|(n, p)| vec![format_float(n), format_float(p)])
                .collect();
            artifacts.write_table("final_distribution.csv", &["N", "density"], &rows)?;
            Value::Null
        }
        Err(e) => json!(format!("no conditioned final distribution: {e}")),
    };
    Ok(json!({
        "grid": { "lower": s.grid.lower(), "upper": s.grid.upper(), "step": s.grid.step(), "nodes": s.grid.nodes() },
        "fpt": fpt_summary(&s.result),
        "final_distribution_note": final_note,
    }))
}

fn trajectories(a: &TrajectoryArgs, artifacts: &mut Artifacts) -> Result<Value, Failure> {
    let model = build_model(&a.model)?;
    let initial = initial_state(&a.model, &model)?;
    check_positive("dt", a.dt)?;
    check_positive("horizon", a.horizon)?;
    if a.trajectories == 0 {
        return Err(CliError::Config("--trajectories must be at least 1".into()).into());
    }
    let unravelling = match a.unravelling {
        UnravellingArg::Jump => Unravelling::Jump,
        UnravellingArg::Diffusion => Unravelling::Diffusion,
    };
    let thresholds = ThresholdSpec {
        upper: a.threshold,
        lower: a.lower_threshold,
    };
    let mut cfg = TrajectoryConfig::new(model, initial, unravelling, thresholds);
    cfg.dt = a.dt;
    cfg.horizon = a.horizon;
    cfg.trajectories = a.trajectories;
    cfg.seed = a.seed;
    cfg.path_stride = a.path_stride;
    let ensemble = simulate(&cfg)?;

    let out = artifacts.create("trajectories.csv")?;
    ensemble.write_csv(out, artifacts.metadata())?;
    let hist = trajectory::fpt_histogram(&ensemble, a.bins);
    let rows: Vec<Vec<String>> = hist
        .density
        .iter()
        .enumerate()
        .map(|(i, d)| vec![format_float(hist.edges[i]), format_float(hist.edges[i + 1]), format_float(*d)])
        .collect();
    artifacts.write_table("histogram.csv", &["t_lo", "t_hi", "density"], &rows)?;
    if a.path_stride > 0 {
        let out = artifacts.create("paths.csv")?;
        ensemble.write_paths_csv(out, artifacts.metadata())?;
    }
    let mean = ensemble
        .mean_hit_time()
        .map(|(m, se)| json!({ "mean": m, "standard_error": se }))
        .unwrap_or(Value::Null);
    Ok(json!({
        "trajectories": ensemble.len(),
        "absorbed": hist.absorbed,
        "censored_fraction": ensemble.censored_fraction(),
        "hit_time": mean,
        "positivity_repairs": ensemble.records.iter().map(|r| r.repairs).sum::<u64>(),
    }))
}

fn kur_scan(a: &KurScanArgs, artifacts: &mut Artifacts) -> Result<Value, Failure> {
    if a.builtin != Builtin::ThermalQubit {
        return Err(CliError::Config("kur-scan needs the counted thermal qubit (--builtin thermal-qubit)".into()).into());
    }
    check_positive("gamma", a.gamma)?;
    check_nonnegative("nbar", a.nbar)?;
    if a.threshold <= 0 {
        return Err(CliError::Config("--threshold must be a positive integer".into()).into());
    }
    let omegas = kur::linspace(a.omega_range.lo, a.omega_range.hi, a.omega_range.count);
    let points = kur::kur_scan(a.gamma, a.nbar, &omegas, a.threshold);
    let out = artifacts.create("kur_scan.csv")?;
    kur::write_scan_csv(&points, out, artifacts.metadata())?;

    let pick = |f: &dyn Fn(&kur::KurReport) -> bool| -> Vec<f64> {
        points
            .iter()
            .filter(|p| p.report.as_ref().is_ok_and(f))
            .map(|p| p.omega_over_gamma)
            .collect()
    };
    let classical = pick(&|r| r.classical_violated);
    let quantum = pick(&|r| r.quantum_violated);
    let failed: Vec<f64> = points.iter().filter(|p| p.report.is_err()).map(|p| p.omega_over_gamma).collect();
    let results = json!({
        "points": points.len(),
        "classical_violations": classical,
        "quantum_violations": quantum,
        "failed_points": failed,
    });
    if !quantum.is_empty() {
        let error = CliError::Physics(format!("quantum bound violated at Ω/γ = {quantum:?}"));
        return Err(Failure::After { results, error });
    }
    if !failed.is_empty() {
        let error = CliError::Core(qfpt_core::Error::Convergence(format!(
            "{} scan point(s) failed; see the status column",
            failed.len()
        )));
        return Err(Failure::After { results, error });
    }
    Ok(results)
}

/// Dry run: model checks, engine previews and step-size warnings.
fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut warnings = 0usize;
    let model = build_model(&a.model)?;
    let monitored = model.monitored().count();
    writeln!(
        out,
        "model: dimension {}, {} channel(s), {monitored} monitored; Hamiltonian is Hermitian",
        model.dim(),
        model.channels().len()
    )?;
    let l = build_liouvillian(&model);
    let rho = steady_state(&l)?;
    let residual = l.apply(&rho).matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
    writeln!(out, "steady state: unique, residual {residual:.1e}")?;
    initial_state(&a.model, &model)?;

    if a.model.builtin == Some(Builtin::ThermalQubit) && a.model.omega == 0.0 {
        writeln!(out, "note: incoherent regime: Q=0 expected")?;
    }
    if monitored > 0 {
        match drazin_inverse(&l, &rho, DRAZIN_TOL).and_then(|d| quantum_correction(&model, &rho, &d)) {
            Ok(q) => writeln!(
                out,
                "activity: K = {:.6e}, Q = {:.6e}",
                dynamical_activity(&model, &rho),
                q + 0.0
            )?,
            Err(e) => {
                warnings += 1;
                writeln!(out, "warning: quantum correction unavailable: {e}")?;
            }
        }
    }

    let upper = a.threshold.map_or(Boundary::Unbounded, Boundary::Threshold);
    let lower = a.lower_threshold.map_or(Boundary::Unbounded, Boundary::Threshold);
    if a.threshold.is_some() || a.lower_threshold.is_some() {
        let integer = |b: Boundary<f64>| match b {
            Boundary::Threshold(x) if x.fract() == 0.0 => Some(Boundary::Threshold(x as i64)),
            Boundary::Threshold(_) => None,
            Boundary::Unbounded => Some(Boundary::Unbounded),
        };
        match (integer(upper), integer(lower)) {
            (Some(u), Some(l)) => match jump::initial_window(u, l).and_then(|w| jump::build_block_generator(&model, w).map(|_| w)) {
                Ok(w) => writeln!(
                    out,
                    "jump engine: initial window [{}, {}]; unbounded sides widen automatically",
                    w.lower(),
                    w.upper()
                )?,
                Err(e) => writeln!(out, "jump engine: unavailable ({e})")?,
            },
            _ => writeln!(out, "jump engine: unavailable (thresholds are not integers)")?,
        }
        check_positive("dn", a.dn)?;
        match diffusion::initial_grid(upper, lower, a.dn) {
            Ok(grid) => {
                writeln!(
                    out,
                    "diffusion engine: initial grid [{:.6}, {:.6}] with {} nodes",
                    grid.lower(),
                    grid.upper(),
                    grid.nodes()
                )?;
                let pe = DriftSuperoperator::new(&model)?.peclet(a.dn);
                if pe > PECLET_LIMIT {
                    warnings += 1;
                    writeln!(
                        out,
                        "warning: Péclet number {pe:.2} exceeds {PECLET_LIMIT} at dn = {}; refine the charge grid",
                        a.dn
                    )?;
                } else {
                    writeln!(out, "diffusion engine: Péclet number {pe:.3}")?;
                }
            }
            Err(e) => writeln!(out, "diffusion engine: unavailable ({e})")?,
        }
    }

    if let Some(dt) = a.dt {
        check_positive("dt", dt)?;
        let jump_product = dt * model.max_jump_rate();
        if jump_product >= JUMP_STEP_LIMIT {
            warnings += 1;
            writeln!(
                out,
                "warning: dt * jump rate = {jump_product:.3} reaches the limit {JUMP_STEP_LIMIT}; jump trajectories would be rejected"
            )?;
        } else if jump_product >= JUMP_STEP_WARN {
            warnings += 1;
            writeln!(out, "warning: dt * jump rate = {jump_product:.3}; jump trajectories are coarse")?;
        }
        let diffusion_product = dt * model.rate_scale();
        if diffusion_product > DIFFUSION_STEP_LIMIT {
            warnings += 1;
            writeln!(
                out,
                "warning: dt * rate = {diffusion_product:.3} exceeds {DIFFUSION_STEP_LIMIT}; diffusive trajectories would be rejected"
            )?;
        }
    }
    writeln!(out, "configuration is valid ({warnings} warning(s))")?;
    Ok(())
}
