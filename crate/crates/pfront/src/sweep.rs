//! Continuation of planar-direction fronts around the unit circle.

use std::f64::consts::PI;

use thiserror::Error;

use crate::cylinder::CylinderGrid;
use crate::front::{
    fit_decay_raw, shift_to_normalization, speed_identity_residual, DecayFit, FrontError, FrontSolver,
    PulsatingFront, SolverOptions,
};
use crate::medium::ReactionModel;

/// Maximum depth of midpoint insertion after a failed continuation step.
const MAX_BISECTION_DEPTH: usize = 4;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("direction sweeps need a two-dimensional medium and grid")]
    NotPlanar,
    #[error("need at least 4 angles, got {0}")]
    TooFewAngles(usize),
    #[error("front solve failed at angle {angle:.6}: {source}")]
    Failed { angle: f64, source: FrontError },
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub angle: f64,
    pub c: f64,
    pub residual_norm: f64,
    pub identity_residual: f64,
    pub decay: Option<DecayFit>,
    pub newton_iters: usize,
    /// `dc/dφ` by the adjoint pairing.
    pub dc_adjoint: f64,
    /// `dc/dφ` by the forward bordered solve.
    pub dc_bordered: f64,
    /// Front after the half-line normalization.
    pub front: PulsatingFront,
}

#[derive(Debug, Clone)]
pub struct SpeedSweep {
    pub medium_hash: u64,
    pub grid: CylinderGrid,
    pub entries: Vec<SweepEntry>,
    /// Logged bound `2 (max|f|/γ + √L + 1)` on |c_e|.
    pub speed_cap: f64,
    pub factorizations: usize,
    pub warnings: Vec<String>,
}

pub fn direction(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

pub fn tangent(angle: f64) -> [f64; 2] {
    [-angle.sin(), angle.cos()]
}

struct Solved {
    raw: PulsatingFront,
    normalized: PulsatingFront,
}

fn solve_step(
    solver: &mut FrontSolver<'_>,
    from: Option<&Solved>,
    from_angle: f64,
    angle: f64,
    depth: usize,
) -> Result<Solved, FrontError> {
    let init = from.map(|s| (&s.normalized.profile, s.normalized.c));
    let attempt = solver.solve(&direction(angle), init).and_then(|raw| {
        let (normalized, _) = shift_to_normalization(&raw)?;
        Ok(Solved { raw, normalized })
    });
    match attempt {
        Ok(s) => Ok(s),
        Err(err) => {
            let Some(start) = from else { return Err(err) };
            if depth >= MAX_BISECTION_DEPTH {
                return Err(err);
            }
            let mid = 0.5 * (from_angle + angle);
            let half = solve_step(solver, Some(start), from_angle, mid, depth + 1)?;
            solve_step(solver, Some(&half), mid, angle, depth + 1)
        }
    }
}

/// Fronts at `φ_j = 2πj/n`, each warm-started from the previous normalized front.
pub fn sweep_directions(
    model: &ReactionModel,
    grid: &CylinderGrid,
    n_angles: usize,
    opts: &SolverOptions,
) -> Result<SpeedSweep, SweepError> {
    if model.dim != 2 || grid.dim != 2 {
        return Err(SweepError::NotPlanar);
    }
    if n_angles < 4 {
        return Err(SweepError::TooFewAngles(n_angles));
    }
    let mut solver = FrontSolver::new(model, grid, opts.clone()).map_err(|e| SweepError::Failed { angle: 0.0, source: e })?;
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(n_angles);
    let mut warnings = Vec::new();
    let mut prev: Option<Solved> = None;
    let mut prev_angle = 0.0;
    for j in 0..n_angles {
        let angle = 2.0 * PI * j as f64 / n_angles as f64;
        let solved = solve_step(&mut solver, prev.as_ref(), prev_angle, angle, 0)
            .map_err(|source| SweepError::Failed { angle, source })?;
        let deriv = solver
            .speed_derivative(&solved.raw, &tangent(angle))
            .map_err(|source| SweepError::Failed { angle, source })?;
        let decay = match fit_decay_raw(&solved.raw.profile) {
            Ok(fit) => Some(fit),
            Err(err) => {
                warnings.push(format!("angle {angle:.6}: {err}"));
                None
            }
        };
        for w in &solved.raw.warnings {
            warnings.push(format!("angle {angle:.6}: {w}"));
        }
        entries.push(SweepEntry {
            angle,
            c: solved.raw.c,
            residual_norm: solved.raw.residual_norm,
            identity_residual: speed_identity_residual(&solved.raw, model),
            decay,
            newton_iters: solved.raw.newton_iters,
            dc_adjoint: deriv.adjoint,
            dc_bordered: deriv.bordered,
            front: solved.normalized.clone(),
        });
        prev = Some(solved);
        prev_angle = angle;
    }
    let speed_cap = 2.0 * (model.max_abs_f() / model.gamma + model.lipschitz_l.sqrt() + 1.0);
    Ok(SpeedSweep {
        medium_hash: model.model_hash(),
        grid: grid.clone(),
        entries,
        speed_cap,
        factorizations: solver.factorizations,
        warnings,
    })
}

impl SpeedSweep {
    pub fn min_speed(&self) -> f64 {
        self.entries.iter().map(|e| e.c).fold(f64::INFINITY, f64::min)
    }

    pub fn max_speed(&self) -> f64 {
        self.entries.iter().map(|e| e.c).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|c_{j+1} − c_j|` over cyclically adjacent angles.
    pub fn max_adjacent_speed_gap(&self) -> f64 {
        let n = self.entries.len();
        (0..n).map(|j| (self.entries[(j + 1) % n].c - self.entries[j].c).abs()).fold(0.0, f64::max)
    }

    /// Largest sup-distance between cyclically adjacent normalized profiles.
    pub fn max_adjacent_profile_gap(&self) -> f64 {
        let n = self.entries.len();
        (0..n)
            .map(|j| {
                let a = &self.entries[j].front.profile.values;
                let b = &self.entries[(j + 1) % n].front.profile.values;
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Central difference `(c_{j+1} − c_{j−1}) / (2Δφ)` on the cyclic table.
    pub fn finite_difference_derivative(&self, j: usize) -> f64 {
        let n = self.entries.len();
        let dphi = 2.0 * PI / n as f64;
        (self.entries[(j + 1) % n].c - self.entries[(j + n - 1) % n].c) / (2.0 * dphi)
    }

    /// Rows `(angle, c, dc_adjoint, dc_fd, dc_bordered)`.
    pub fn derivative_table(&self) -> Vec<[f64; 5]> {
        (0..self.entries.len())
            .map(|j| {
                let e = &self.entries[j];
                [e.angle, e.c, e.dc_adjoint, self.finite_difference_derivative(j), e.dc_bordered]
            })
            .collect()
    }

    /// Largest `|adjoint − fd|` relative to `max_j |fd_j|`.
    pub fn derivative_disagreement(&self) -> f64 {
        let rows = self.derivative_table();
        let scale = rows.iter().map(|r| r[3].abs()).fold(0.0, f64::max);
        let worst = rows.iter().map(|r| (r[2] - r[3]).abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    /// Every `n`-th entry, the table a coarser sweep of the same angles would hold.
    pub fn subsample(&self, stride: usize) -> SpeedSweep {
        let mut out = self.clone();
        out.entries = self.entries.iter().step_by(stride).cloned().collect();
        out
    }
}
