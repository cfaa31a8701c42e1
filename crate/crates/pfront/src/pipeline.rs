//! Stage orchestration: medium → front/sweep → derivative → spread → verify.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::barrier::{
    calibrate_tolerance, check_parabolic_inequality, derive_constants, BarrierField, BarrierKind, ExpTail,
};
use crate::cauchy::{
    default_dt, estimate_speeds, evolve_tracked, init_omega_r, init_vr, sandwich_verdict, BoxGrid, Stepper,
};
use crate::config::{BubbleKind, RunConfig, Stage};
use crate::cylinder::CylinderGrid;
use crate::front::{
    adaptive_half_length, fit_decay, fit_decay_raw, shift_to_normalization, solve_front, speed_identity_residual,
    PulsatingFront,
};
use crate::io::{derivative_csv, fmt9, profile_csv, sweep_csv, trajectory_csv, write_front};
use crate::medium::ReactionModel;
use crate::sweep::{sweep_directions, SpeedSweep};

/// Identity residual bound for converged fronts.
const IDENTITY_TOL: f64 = 1e-4;
/// Relative bound on adjoint versus finite-difference speed derivatives.
const DERIVATIVE_TOL: f64 = 0.05;
/// Speed derivatives below this count as an isotropic medium.
const ISOTROPIC_TOL: f64 = 1e-6;
/// Exp-tail closed-form agreement.
const TAIL_TOL: f64 = 1e-6;
/// Required control violation in units of `tol_disc`.
const CONTROL_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot prepare output directory {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageStatus {
    Done,
    Failed(String),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub stages: Vec<StageReport>,
}

impl PipelineOutcome {
    pub fn all_passed(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Done && s.checks.iter().all(|c| c.pass))
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }

    pub fn artifacts(&self) -> Vec<&PathBuf> {
        self.stages.iter().flat_map(|s| &s.artifacts).collect()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for st in &self.stages {
            let status = match &st.status {
                StageStatus::Done => "done".to_string(),
                StageStatus::Failed(m) => format!("FAILED: {m}"),
                StageStatus::Skipped(m) => format!("skipped: {m}"),
            };
            let _ = writeln!(s, "[{}] {status}", st.stage.name());
            for c in &st.checks {
                let _ = writeln!(s, "  {} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
        s
    }
}

/// Products of earlier stages.
#[derive(Default)]
struct Products {
    model: Option<ReactionModel>,
    front: Option<PulsatingFront>,
    sweep: Option<SpeedSweep>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    log: &'a mut dyn FnMut(&str),
}

impl Ctx<'_> {
    fn write(&self, name: &str, body: &str, artifacts: &mut Vec<PathBuf>) -> Result<(), String> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| format!("writing {}: {e}", path.display()))?;
        artifacts.push(path);
        Ok(())
    }

    fn header(&self) -> String {
        format!("# config_hash={:016x}\n", self.cfg.hash)
    }
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, detail }
}

type StageResult = Result<(Vec<PathBuf>, Vec<Check>), String>;

/// Runs the configured stages in order into `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path, log: &mut dyn FnMut(&str)) -> Result<PipelineOutcome, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Output { path: out_dir.to_path_buf(), source })?;
    let mut ctx = Ctx { cfg, dir: out_dir, log };
    let mut prod = Products::default();
    let mut stages = Vec::new();
    // every stage needs the medium, even when its own stage was not requested
    let model_result = cfg.model().map_err(|e| e.to_string());
    if let Ok(m) = &model_result {
        prod.model = Some(m.clone());
    }
    for &stage in &cfg.stages {
        (ctx.log)(&format!("stage {} ...", stage.name()));
        let report = match blocked(stage, &prod, &model_result, &stages) {
            Some(reason) => StageReport { stage, status: StageStatus::Skipped(reason), artifacts: vec![], checks: vec![] },
            None => {
                let out = match stage {
                    Stage::Medium => medium_stage(&ctx, &prod),
                    Stage::Front => front_stage(&mut ctx, &mut prod),
                    Stage::Sweep => sweep_stage(&mut ctx, &mut prod),
                    Stage::Derivative => derivative_stage(&ctx, &prod),
                    Stage::Spread => spread_stage(&mut ctx, &prod),
                    Stage::Verify => verify_stage(&mut ctx, &prod),
                };
                match out {
                    Ok((artifacts, checks)) => StageReport { stage, status: StageStatus::Done, artifacts, checks },
                    Err(msg) => StageReport {
                        stage,
                        status: StageStatus::Failed(format!("{}: {msg}", stage.name())),
                        artifacts: vec![],
                        checks: vec![],
                    },
                }
            }
        };
        (ctx.log)(&format!("stage {}: {:?}", stage.name(), report.status));
        stages.push(report);
    }
    Ok(PipelineOutcome { stages })
}

/// Reason a stage cannot run given earlier outcomes.
fn blocked(stage: Stage, prod: &Products, model: &Result<ReactionModel, String>, done: &[StageReport]) -> Option<String> {
    if let Err(e) = model {
        return Some(format!("medium unavailable: {e}"));
    }
    let failed = |s: Stage| done.iter().any(|r| r.stage == s && r.status != StageStatus::Done);
    match stage {
        Stage::Derivative if prod.sweep.is_none() => Some("sweep stage did not complete".into()),
        Stage::Verify if failed(Stage::Sweep) => Some("sweep stage did not complete".into()),
        _ => None,
    }
}

fn medium_stage(ctx: &Ctx<'_>, prod: &Products) -> StageResult {
    let m = prod.model.as_ref().ok_or("no medium")?;
    let mut body = ctx.header();
    let mass = m.mass_integral();
    let _ = writeln!(body, "canonical = {}", m.canonical());
    let _ = writeln!(body, "model_hash = {:016x}", m.model_hash());
    let _ = writeln!(body, "dim = {}", m.dim);
    let _ = writeln!(body, "theta_min = {}", fmt9(m.theta_min));
    let _ = writeln!(body, "theta_max = {}", fmt9(m.theta_max));
    let _ = writeln!(body, "theta_mean = {}", fmt9(m.theta_mean()));
    let _ = writeln!(body, "sigma = {}", fmt9(m.sigma));
    let _ = writeln!(body, "gamma = {}", fmt9(m.gamma));
    let _ = writeln!(body, "lipschitz = {}", fmt9(m.lipschitz_l));
    let _ = writeln!(body, "max_abs_f = {}", fmt9(m.max_abs_f()));
    let _ = writeln!(body, "mass_integral = {}", fmt9(mass));
    let mut artifacts = vec![];
    ctx.write("medium.txt", &body, &mut artifacts)?;
    let checks = vec![check("nonzero mass integral", mass != 0.0, format!("mass = {}", fmt9(mass)))];
    Ok((artifacts, checks))
}

fn front_stage(ctx: &mut Ctx<'_>, prod: &mut Products) -> StageResult {
    let cfg = ctx.cfg;
    let model = prod.model.as_ref().ok_or("no medium")?;
    let mut grid = cfg.cylinder_grid().map_err(|e| e.to_string())?;
    let mut front = solve_front(model, &cfg.direction, &grid, None, &cfg.solver).map_err(|e| e.to_string())?;
    // one enlargement at fixed spacing when the decay bound asks for it
    if let Ok(fit) = fit_decay_raw(&front.profile) {
        let need = adaptive_half_length(&fit);
        if grid.half_length < need {
            let l = need.ceil();
            let n = (2.0 * l / grid.h()).round() as usize + 1;
            (ctx.log)(&format!("front: enlarging L from {} to {l} (n_xi {n})", grid.half_length));
            grid = CylinderGrid::new(l, n, grid.n_y, grid.dim).map_err(|e| e.to_string())?;
            front = solve_front(model, &cfg.direction, &grid, None, &cfg.solver).map_err(|e| e.to_string())?;
        }
    }
    let identity = speed_identity_residual(&front, model);
    let decay = fit_decay(&front, model);
    let (normalized, tau) = match shift_to_normalization(&front) {
        Ok((f, t)) => (Some(f), Some(t)),
        Err(_) => (None, None),
    };
    let mass = model.mass_integral();
    let mut body = ctx.header();
    let _ = writeln!(body, "direction = {}", front.e.iter().map(|v| fmt9(*v)).collect::<Vec<_>>().join(", "));
    let _ = writeln!(body, "L = {}", fmt9(grid.half_length));
    let _ = writeln!(body, "n_xi = {}", grid.n_xi);
    let _ = writeln!(body, "n_y = {}", grid.n_y);
    let _ = writeln!(body, "c = {}", fmt9(front.c));
    let _ = writeln!(body, "residual = {}", fmt9(front.residual_norm));
    let _ = writeln!(body, "newton_iters = {}", front.newton_iters);
    let _ = writeln!(body, "identity_residual = {}", fmt9(identity));
    match &decay {
        Ok(d) => {
            let _ = writeln!(body, "mu_plus = {}\nmu_minus = {}", fmt9(d.mu_plus), fmt9(d.mu_minus));
        }
        Err(e) => {
            let _ = writeln!(body, "decay = {e}");
        }
    }
    if let Some(t) = tau {
        let _ = writeln!(body, "normalization_shift = {}", fmt9(t));
    }
    for w in &front.warnings {
        let _ = writeln!(body, "warning = {w}");
    }
    let mut artifacts = vec![];
    ctx.write("front.txt", &body, &mut artifacts)?;
    ctx.write("front_profile.csv", &profile_csv(&front.profile, 0, ctx.cfg.hash), &mut artifacts)?;
    if cfg.front_files {
        let path = ctx.dir.join("front.pfr");
        write_front(&path, normalized.as_ref().unwrap_or(&front), Some(cfg.hash)).map_err(|e| e.to_string())?;
        artifacts.push(path);
    }
    let checks = vec![
        check("identity residual", identity <= IDENTITY_TOL, format!("{} <= {IDENTITY_TOL}", fmt9(identity))),
        check(
            "speed sign follows mass",
            (front.c > 0.0) == (mass > 0.0) || front.c == 0.0,
            format!("c = {}, mass = {}", fmt9(front.c), fmt9(mass)),
        ),
        check("decay bound", decay.is_ok(), decay.as_ref().map(|d| format!("mu_plus = {}", fmt9(d.mu_plus))).unwrap_or_else(|e| e.to_string())),
    ];
    prod.front = Some(front);
    Ok((artifacts, checks))
}

fn sweep_stage(ctx: &mut Ctx<'_>, prod: &mut Products) -> StageResult {
    let cfg = ctx.cfg;
    let model = prod.model.as_ref().ok_or("no medium")?;
    let grid = cfg.cylinder_grid().map_err(|e| e.to_string())?;
    let sweep = sweep_directions(model, &grid, cfg.n_angles, &cfg.solver).map_err(|e| e.to_string())?;
    for w in &sweep.warnings {
        (ctx.log)(&format!("sweep warning: {w}"));
    }
    let mut artifacts = vec![];
    ctx.write("sweep.csv", &sweep_csv(&sweep, cfg.hash), &mut artifacts)?;
    if cfg.front_files {
        for (j, e) in sweep.entries.iter().enumerate() {
            let path = ctx.dir.join(format!("sweep_front_{j:03}.pfr"));
            write_front(&path, &e.front, Some(cfg.hash)).map_err(|e| e.to_string())?;
            artifacts.push(path);
        }
    }
    let worst = sweep.entries.iter().map(|e| e.identity_residual).fold(0.0, f64::max);
    let cap_ok = sweep.entries.iter().all(|e| e.c.abs() <= sweep.speed_cap);
    let checks = vec![
        check("sweep identity residuals", worst <= IDENTITY_TOL, format!("max {} <= {IDENTITY_TOL}", fmt9(worst))),
        check("sweep speed cap", cap_ok, format!("cap {}", fmt9(sweep.speed_cap))),
    ];
    prod.sweep = Some(sweep);
    Ok((artifacts, checks))
}

fn derivative_stage(ctx: &Ctx<'_>, prod: &Products) -> StageResult {
    let sweep = prod.sweep.as_ref().ok_or("no sweep")?;
    let mut artifacts = vec![];
    ctx.write("derivative.csv", &derivative_csv(sweep, ctx.cfg.hash), &mut artifacts)?;
    let dis = sweep.derivative_disagreement();
    let rows = sweep.derivative_table();
    let largest = rows.iter().map(|r| r[2].abs().max(r[3].abs())).fold(0.0, f64::max);
    // an isotropic medium has no derivative to compare against
    let flat = largest <= ISOTROPIC_TOL;
    let checks = vec![check(
        "adjoint vs finite difference",
        dis <= DERIVATIVE_TOL || flat,
        if flat {
            format!("isotropic: max |dc| {} <= {ISOTROPIC_TOL}", fmt9(largest))
        } else {
            format!("relative disagreement {} <= {DERIVATIVE_TOL}", fmt9(dis))
        },
    )];
    Ok((artifacts, checks))
}

fn spread_stage(ctx: &mut Ctx<'_>, prod: &Products) -> StageResult {
    let cfg = ctx.cfg;
    let model = prod.model.as_ref().ok_or("no medium")?;
    let bx = &cfg.box_grid;
    let grid = BoxGrid::new(bx.half_width, bx.n, model.dim).map_err(|e| e.to_string())?;
    let dt = bx.dt.unwrap_or_else(|| default_dt(model));
    let stepper = Stepper::new(&grid, model, dt).map_err(|e| e.to_string())?;
    let mut artifacts = vec![];
    let mut checks = vec![];
    let mut verdicts = ctx.header();
    for (idx, ex) in cfg.spread.experiments.iter().enumerate() {
        let (mut state, tag) = match ex.kind {
            BubbleKind::Expanding => (init_vr(&grid, model, ex.radius, ex.level), "expanding"),
            BubbleKind::Shrinking => (init_omega_r(&grid, model, ex.radius, ex.level), "shrinking"),
        };
        let state = state.as_mut().map_err(|e| e.to_string())?;
        for w in grid.sizing_warnings(ex.radius + ex.t_end * 0.5) {
            (ctx.log)(&format!("spread warning: {w}"));
        }
        (ctx.log)(&format!("spread: {tag} R = {} to t = {}", ex.radius, ex.t_end));
        let track = evolve_tracked(&stepper, state, ex.t_end, cfg.spread.record_every, [0.0, 0.0], cfg.spread.level, cfg.spread.rays)
            .map_err(|e| e.to_string())?;
        ctx.write(&format!("trajectory_{idx:02}_{tag}.csv"), &trajectory_csv(&track, cfg.hash), &mut artifacts)?;
        let _ = writeln!(
            verdicts,
            "experiment {idx}: {tag} R = {} level = {} t_end = {} final max u = {} final min u = {}",
            fmt9(ex.radius),
            fmt9(ex.level),
            fmt9(ex.t_end),
            fmt9(state.max()),
            fmt9(state.min())
        );
        if !(cfg.spread.verdict && ex.kind == BubbleKind::Expanding) {
            continue;
        }
        let Some((t1, t2)) = cfg.spread.window else { continue };
        let Some(sweep) = prod.sweep.as_ref() else {
            checks.push(check("spread sandwich", false, "no sweep available".into()));
            continue;
        };
        match estimate_speeds(&track, t1, t2) {
            Ok(rep) => {
                let v = sandwich_verdict(&rep, sweep.min_speed(), sweep.max_speed(), cfg.spread.tol);
                let _ = writeln!(
                    verdicts,
                    "  window [{}, {}] records {} ray speeds [{}, {}] min-pair rate {} band [{}, {}] verdict {}",
                    fmt9(t1),
                    fmt9(t2),
                    rep.records_used,
                    fmt9(rep.min_ray_speed()),
                    fmt9(rep.max_ray_speed()),
                    fmt9(rep.min_pair_rate),
                    fmt9(v.lower),
                    fmt9(v.upper),
                    if v.pass { "PASS" } else { "FAIL" }
                );
                checks.push(check(
                    &format!("spread sandwich experiment {idx}"),
                    v.pass,
                    format!(
                        "rates [{}, {}] pair {} in [{}, {}]",
                        fmt9(rep.min_ray_speed()),
                        fmt9(rep.max_ray_speed()),
                        fmt9(rep.min_pair_rate),
                        fmt9(v.lower),
                        fmt9(v.upper)
                    ),
                ));
            }
            Err(e) => checks.push(check(&format!("spread sandwich experiment {idx}"), false, e.to_string())),
        }
    }
    ctx.write("spread.txt", &verdicts, &mut artifacts)?;
    Ok((artifacts, checks))
}

fn verify_stage(ctx: &mut Ctx<'_>, prod: &Products) -> StageResult {
    let cfg = ctx.cfg;
    let v = &cfg.verify;
    let model = prod.model.as_ref().ok_or("no medium")?;
    let mut body = ctx.header();
    let mut checks = vec![];
    // speed and direction for the exp-tail calibration
    let (c, e) = match (&prod.sweep, &prod.front) {
        (Some(s), _) => (s.entries[0].c, [1.0, 0.0]),
        (None, Some(f)) if f.e.len() == 2 => (f.c, [f.e[0], f.e[1]]),
        _ => return Err("no planar front or sweep for calibration".into()),
    };
    let tail = ExpTail::new(model, c, e, 0.0);
    let cal = calibrate_tolerance(&tail, v.dx);
    let _ = writeln!(
        body,
        "[calibration]\nmu = {}\nmax_fd_error = {}\nk_tol = {}\ntol_disc = {}",
        fmt9(tail.mu),
        fmt9(cal.max_error),
        fmt9(cal.k_tol),
        fmt9(cal.tol_disc)
    );
    if v.tail {
        checks.push(check(
            "exp-tail closed form",
            cal.max_error <= TAIL_TOL && cal.min_exact > 0.0,
            format!("max error {} <= {TAIL_TOL}", fmt9(cal.max_error)),
        ));
    }
    let kinds = [(v.subsolution, BarrierKind::Subsolution, v.beta), (v.supersolution, BarrierKind::Supersolution, v.alpha)];
    for (wanted, kind, level) in kinds {
        if !wanted {
            continue;
        }
        let sweep = prod.sweep.as_ref().ok_or("barrier checks need a sweep")?;
        let name = match kind {
            BarrierKind::Subsolution => "subsolution",
            BarrierKind::Supersolution => "supersolution",
        };
        (ctx.log)(&format!("verify: {name}"));
        let outcome = (|| -> Result<(), crate::barrier::BarrierError> {
            let spec = derive_constants(sweep, model, v.eps, kind, level)?;
            let build = |flip: bool| -> Result<BarrierField, crate::barrier::BarrierError> {
                let f = match kind {
                    BarrierKind::Subsolution => BarrierField::subsolution(sweep, &spec)?,
                    BarrierKind::Supersolution => BarrierField::supersolution(sweep, &spec)?,
                };
                Ok(if flip { f.sign_flipped() } else { f })
            };
            let field = build(false)?;
            let region = field.standard_region(2.0, 3, 120, 60, 8)?;
            let cert = check_parabolic_inequality(&field, model, &region, v.dx, cal.tol_disc)?;
            let _ = writeln!(
                body,
                "[{name}]\neps = {}\ndelta = {}\ndelta_eps = {}\nC = {}\nC_prime = {}\nC_eps = {}\nxi_eps = {}\nk = {}\nt_start = {}\nt_end = {}\nB = {}\nR = {}",
                fmt9(spec.eps),
                fmt9(spec.delta),
                fmt9(spec.delta_eps),
                fmt9(spec.c),
                fmt9(spec.c_prime),
                fmt9(spec.c_eps),
                fmt9(spec.xi_eps),
                fmt9(spec.k),
                fmt9(spec.t_start),
                fmt9(spec.t_end),
                fmt9(spec.b),
                fmt9(spec.radius)
            );
            body.push_str(&cert.report(&region));
            checks.push(check(name, cert.pass, format!("max violation {} vs tol {}", fmt9(cert.max_violation), fmt9(cert.tol_disc))));
            if v.controls {
                let flipped = build(true)?;
                let region = flipped.standard_region(2.0, 3, 120, 60, 8)?;
                let ctrl = check_parabolic_inequality(&flipped, model, &region, v.dx, cal.tol_disc)?;
                let _ = writeln!(body, "[{name} sign-flip control]");
                body.push_str(&ctrl.report(&region));
                let power = ctrl.max_violation >= CONTROL_FACTOR * cal.tol_disc;
                checks.push(check(
                    &format!("{name} control fails"),
                    !ctrl.pass && power,
                    format!("violation {} vs {CONTROL_FACTOR} x tol", fmt9(ctrl.max_violation)),
                ));
            }
            Ok(())
        })();
        if let Err(err) = outcome {
            checks.push(check(name, false, err.to_string()));
        }
    }
    let mut artifacts = vec![];
    ctx.write("certificates.txt", &body, &mut artifacts)?;
    Ok((artifacts, checks))
}
