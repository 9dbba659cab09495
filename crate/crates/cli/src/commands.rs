use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use wristkin::differential::{
    build_jacobians_with_threshold, classify_singularity, fd_jacobian, find_isotropic_config, isotropy_report,
};
use wristkin::gait::{validate_trajectory_with_threshold, write_trajectory_csv, GaitParams};
use wristkin::geometry::angle_diff;
use wristkin::kinematics::FkSolutionSet;
use wristkin::mechanism::assemble_pose;
use wristkin::oracle::{bisect_leg_residual, grid_fk_roots, hausdorff};
use wristkin::workspace::{summarize, sweep_workspace_with_threshold, write_csv, OrientationBox};
use wristkin::{
    mechanism_from_variant, solve_fk, solve_ik, JointAngles, Leg, MechanismParams, Orientation, PoseSolution,
    VariantTag,
};

use crate::scene::SceneFile;
use crate::{Cli, Command, Format, Global};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(io::Error),
    Domain(wristkin::Error),
    /// A check ran to completion and found mismatches; the value is the report.
    Failed(Value),
}

impl From<wristkin::Error> for CliError {
    fn from(e: wristkin::Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn mechanism(g: &Global) -> CliResult<MechanismParams> {
    match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            Ok(MechanismParams::from_json(&text)?)
        }
        None => {
            let v: VariantTag = g
                .variant
                .parse()
                .map_err(|e: wristkin::Error| CliError::Usage(e.to_string()))?;
            Ok(mechanism_from_variant(v))
        }
    }
}

fn angles(g: &Global, v: &[f64]) -> [f64; 3] {
    let k = if g.degrees { std::f64::consts::PI / 180.0 } else { 1.0 };
    [v[0] * k, v[1] * k, v[2] * k]
}

fn orientation(g: &Global, v: &[f64]) -> Orientation {
    let [y, p, r] = angles(g, v);
    Orientation::new(y, p, r)
}

fn emit<T: Serialize>(g: &Global, value: &T) -> CliResult<()> {
    match &g.out {
        Some(path) => {
            let text = serde_json::to_string_pretty(value).expect("serializable");
            std::fs::write(path, text + "\n")?;
            Ok(())
        }
        None => print_json(value),
    }
}

/// A closed pipe downstream is not an error for a command-line filter.
fn ignore_broken_pipe(r: io::Result<()>) -> CliResult<()> {
    match r {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    ignore_broken_pipe(writeln!(io::stdout().lock(), "{text}"))
}

fn write_scene(path: &Path, m: &MechanismParams, poses: &[PoseSolution], prefix: &str) -> CliResult<()> {
    let labelled: Vec<(String, &PoseSolution)> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("{prefix}-{i}"), p))
        .collect();
    let text = serde_json::to_string_pretty(&SceneFile::new(m, &labelled)).expect("serializable");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_sink(g: &Global) -> CliResult<Option<Box<dyn Write>>> {
    Ok(match (&g.out, g.format) {
        (Some(path), _) => Some(Box::new(BufWriter::new(File::create(path)?))),
        (None, Format::Csv) => Some(Box::new(io::stdout().lock())),
        (None, Format::Json) => None,
    })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    let m = mechanism(g)?;
    match &cli.command {
        Command::Fk { theta, scene } => cmd_fk(g, &m, theta, scene.as_deref()),
        Command::Ik { rpy, verify, scene } => {
            if *verify {
                cmd_ik_verify(&m)
            } else {
                let rpy = rpy
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("ik needs --rpy or --verify".into()))?;
                cmd_ik(g, &m, rpy, scene.as_deref())
            }
        }
        Command::Jac { rpy, fd_step } => cmd_jac(g, &m, rpy, *fd_step),
        Command::Singularity { rpy } => cmd_singularity(g, &m, rpy),
        Command::Isotropy { rpy } => cmd_isotropy(g, &m, rpy.as_deref()),
        Command::Sweep { bounds, counts } => cmd_sweep(g, &m, bounds, counts.as_deref()),
        Command::Gait { gait, preset, samples } => cmd_gait(g, &m, gait.as_deref(), preset, *samples),
        Command::OracleCheck { count } => cmd_oracle_check(g, &m, *count),
    }
}

fn cmd_fk(g: &Global, m: &MechanismParams, theta: &[f64], scene: Option<&Path>) -> CliResult<()> {
    let [t1, t2, t3] = angles(g, theta);
    let joints = JointAngles::new(t1, t2, t3);
    let set = solve_fk(m, &joints)?;
    if let Some(path) = scene {
        write_scene(path, m, &set.solutions, "fk")?;
    }
    let spurious: Vec<bool> = set.solutions.iter().map(FkSolutionSet::is_spurious).collect();
    emit(
        g,
        &json!({
            "variant": m.variant.name(),
            "joints": joints,
            "spurious_count": set.spurious_count,
            "working": set.working,
            "spurious": spurious,
            "solutions": set.solutions,
        }),
    )
}

fn cmd_ik(g: &Global, m: &MechanismParams, rpy: &[f64], scene: Option<&Path>) -> CliResult<()> {
    let o = orientation(g, rpy);
    let set = solve_ik(m, &o)?;
    if let Some(path) = scene {
        write_scene(path, m, &set.solutions, "ik")?;
    }
    emit(
        g,
        &json!({
            "variant": m.variant.name(),
            "orientation": o,
            "leg_roots": set.leg_roots,
            "double_root": set.double_root,
            "working": set.working,
            "solutions": set.solutions,
        }),
    )
}

/// Reads `fk` output and checks each assembly against the inverse model.
fn cmd_ik_verify(m: &MechanismParams) -> CliResult<()> {
    let mut text = String::new();
    io::stdin().read_to_string(&mut text)?;
    let input: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid fk JSON: {e}")))?;
    let solutions: Vec<PoseSolution> = serde_json::from_value(input["solutions"].clone())
        .map_err(|e| CliError::Usage(format!("invalid fk solutions: {e}")))?;
    let mut mismatches = Vec::new();
    let mut free_leg = 0;
    for (i, pose) in solutions.iter().enumerate() {
        let found = match solve_ik(m, &pose.orientation) {
            Ok(set) => set.solutions.iter().any(|s| {
                let (a, b) = (s.joints.to_array(), pose.joints.to_array());
                (0..3).all(|k| angle_diff(a[k], b[k]).abs() < 1e-9)
            }),
            // A leg satisfied by every joint angle: check the assembly itself.
            Err(wristkin::Error::DegenerateQuadratic(_)) => {
                free_leg += 1;
                assemble_pose(m, &pose.joints, &pose.orientation).is_ok()
            }
            Err(_) => false,
        };
        if !found {
            mismatches.push(i);
        }
    }
    let report = json!({
        "checked": solutions.len(),
        "free_leg": free_leg,
        "mismatches": mismatches.len(),
        "mismatched": mismatches,
    });
    if mismatches.is_empty() {
        print_json(&report)
    } else {
        Err(CliError::Failed(report))
    }
}

fn working_pose(m: &MechanismParams, o: &Orientation) -> CliResult<PoseSolution> {
    let set = solve_ik(m, o)?;
    set.working_pose()
        .cloned()
        .ok_or_else(|| CliError::Domain(wristkin::Error::NoRealSolution("no working assembly".into())))
}

fn cmd_jac(g: &Global, m: &MechanismParams, rpy: &[f64], fd_step: Option<f64>) -> CliResult<()> {
    let o = orientation(g, rpy);
    let pose = working_pose(m, &o)?;
    let dk = build_jacobians_with_threshold(&pose, m, g.threshold);
    let fd = fd_step.map(|h| fd_jacobian(m, &pose, h)).transpose()?;
    emit(
        g,
        &json!({
            "orientation": o,
            "joints": pose.joints,
            "jacobians": dk,
            "fd_jacobian": fd,
            "singularity": classify_singularity(&pose, m, g.threshold),
        }),
    )
}

fn cmd_singularity(g: &Global, m: &MechanismParams, rpy: &[f64]) -> CliResult<()> {
    let o = orientation(g, rpy);
    let pose = working_pose(m, &o)?;
    let report = classify_singularity(&pose, m, g.threshold);
    emit(
        g,
        &json!({
            "orientation": o,
            "joints": pose.joints,
            "kind": report.kind.to_string(),
            "report": report,
        }),
    )
}

fn cmd_isotropy(g: &Global, m: &MechanismParams, rpy: Option<&[f64]>) -> CliResult<()> {
    match rpy {
        Some(rpy) => {
            let o = orientation(g, rpy);
            let pose = working_pose(m, &o)?;
            emit(
                g,
                &json!({ "orientation": o, "joints": pose.joints, "report": isotropy_report(&pose, m) }),
            )
        }
        None => {
            let cfg = find_isotropic_config(m)?;
            let dk = build_jacobians_with_threshold(&cfg.pose, m, g.threshold);
            emit(
                g,
                &json!({
                    "mode": cfg.mode,
                    "residual": cfg.residual,
                    "pose": cfg.pose,
                    "report": isotropy_report(&cfg.pose, m),
                    "jacobians": dk,
                }),
            )
        }
    }
}

fn cmd_sweep(g: &Global, m: &MechanismParams, bounds: &str, counts: Option<&[usize]>) -> CliResult<()> {
    let mut b = match bounds {
        "default" => OrientationBox::envelope(m),
        "coarse" => OrientationBox::envelope_with_counts(m, [13, 7, 3]),
        other => return Err(CliError::Usage(format!("unknown box `{other}`; use default or coarse"))),
    };
    if let Some(c) = counts {
        b.counts = [c[0], c[1], c[2]];
    }
    let map = sweep_workspace_with_threshold(m, &b, g.threshold)?;
    let summary = summarize(&map)?;
    if let Some(sink) = csv_sink(g)? {
        ignore_broken_pipe(write_csv(&map, sink))?;
    }
    if g.format == Format::Json {
        print_json(&json!({ "variant": m.variant.name(), "box": b, "summary": summary }))?;
    }
    Ok(())
}

fn cmd_gait(g: &Global, m: &MechanismParams, path: Option<&Path>, preset: &str, samples: usize) -> CliResult<()> {
    let params = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            GaitParams::from_json(&text)?
        }
        None => match preset {
            "default" => GaitParams::default(),
            "zero" => GaitParams::zero_amplitude(),
            "full-envelope" => GaitParams::full_envelope(),
            other => return Err(CliError::Usage(format!("unknown preset `{other}`"))),
        },
    };
    let report = validate_trajectory_with_threshold(m, &params, samples, g.threshold)?;
    if let Some(sink) = csv_sink(g)? {
        ignore_broken_pipe(write_trajectory_csv(&report, sink))?;
    }
    if g.format == Format::Json {
        let per_vertebra: Vec<Value> = report
            .vertebrae
            .iter()
            .map(|v| {
                let min_margin = v.samples.iter().filter_map(|s| s.margin).fold(f64::INFINITY, f64::min);
                let max_kappa = v.samples.iter().filter_map(|s| s.kappa).fold(0.0, f64::max);
                json!({ "vertebra": v.vertebra, "min_margin": min_margin, "max_kappa": max_kappa, "rate_error": v.rate_error })
            })
            .collect();
        print_json(&json!({
            "variant": m.variant.name(),
            "gait": params,
            "samples_per_cycle": report.samples_per_cycle,
            "violation_count": report.violations.len(),
            "violations": report.violations,
            "branch_continuous": report.branch_continuous,
            "max_rate_error": report.max_rate_error,
            "vertebrae": per_vertebra,
        }))?;
    }
    Ok(())
}

fn cmd_oracle_check(g: &Global, m: &MechanismParams, count: usize) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let home = m.home_orientation();
    let (mut fk_worst, mut ik_worst) = (0.0_f64, 0.0_f64);
    let (mut fk_checked, mut ik_checked) = (0, 0);
    for _ in 0..count {
        let o = home.offset_by(&Orientation::from_degrees(
            rng.random_range(-30.0..30.0),
            rng.random_range(-15.0..15.0),
            rng.random_range(-4.0..4.0),
        ));
        let Ok(set) = solve_ik(m, &o) else { continue };
        let closed: Vec<Vec<f64>> = set
            .solutions
            .iter()
            .map(|p| vec![p.joints.theta1, p.joints.theta2])
            .collect();
        let r1 = bisect_leg_residual(m, Leg::One, &o).with_multiplicity();
        let r2 = bisect_leg_residual(m, Leg::Two, &o).with_multiplicity();
        let brute: Vec<Vec<f64>> = r1.iter().flat_map(|&a| r2.iter().map(move |&b| vec![a, b])).collect();
        ik_worst = ik_worst.max(hausdorff(&closed, &brute));
        ik_checked += 1;

        if m.variant == VariantTag::ParallelActuators {
            let pick = rng.random_range(0..set.solutions.len());
            let joints = set.solutions[pick].joints;
            let fk = solve_fk(m, &joints)?;
            let closed: Vec<Vec<f64>> = fk
                .solutions
                .iter()
                .map(|p| vec![p.orientation.pitch, p.orientation.roll])
                .collect();
            let brute: Vec<Vec<f64>> = grid_fk_roots(m, &joints).into_iter().map(|(a, b)| vec![a, b]).collect();
            fk_worst = fk_worst.max(hausdorff(&closed, &brute));
            fk_checked += 1;
        }
    }
    let tolerance = 1e-6;
    let pass = ik_worst < tolerance && fk_worst < tolerance;
    let report = json!({
        "seed": g.seed,
        "ik_checked": ik_checked,
        "fk_checked": fk_checked,
        "max_ik_hausdorff": ik_worst,
        "max_fk_hausdorff": fk_worst,
        "tolerance": tolerance,
        "pass": pass,
    });
    if pass {
        emit(g, &report)
    } else {
        Err(CliError::Failed(report))
    }
}
