//! Convergence study: one cell solve, limit runs per exchange sign, micro
//! runs per ε in a worker pool, error functionals, rate fits and the
//! operator rate suites.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::EffectiveTensor;
use crate::config::{PhysicsConfig, RunConfig};
use crate::error::{Error, Result};
use crate::fem::SolverOptions;
use crate::geometry::{CellGeometry, Epsilon, MacroGrid, PerforatedGrid};
use crate::limit::{LimitProblem, LimitTrajectory};
use crate::micro::{initial_fields, MicroProblem, StepDiagnostics};
use crate::mollifier::Mollifier;
use crate::operators::GridMatrices;
use crate::verify::{self, ErrorFunctional, LemmaRow, MollifierSup, RateFit};

pub fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.discretization.tol,
        max_iter: cfg.discretization.max_iter,
    }
}

pub fn build_cell(cfg: &RunConfig) -> Result<Arc<CellGeometry>> {
    let g = &cfg.geometry;
    Ok(Arc::new(CellGeometry::new(g.dim, g.hole.clone(), g.m)?))
}

pub fn solve_tensor(cfg: &RunConfig, cell: &CellGeometry) -> Result<EffectiveTensor> {
    EffectiveTensor::solve(cell, &cfg.physics.diffusion.field(cell.m), solver_options(cfg))
}

pub fn micro_problem(
    cfg: &RunConfig,
    physics: &PhysicsConfig,
    cell: Arc<CellGeometry>,
    eps: Epsilon,
) -> Result<MicroProblem> {
    let m = cell.m;
    let grid = Arc::new(PerforatedGrid::new(cell, eps, cfg.geometry.lengths)?);
    let (u0, theta0) = initial_fields(&grid, physics.initial);
    Ok(MicroProblem {
        grid,
        diffusion: physics.diffusion.field(m),
        conductivity: physics.conductivity.field(m),
        coupling: physics.coupling(),
        reaction: physics.reaction,
        source: physics.source,
        mollifier: Mollifier::new(physics.delta)?,
        u0,
        theta0,
        time: cfg.time_grid()?,
        solver: solver_options(cfg),
        tol_pos: cfg.discretization.tol_pos,
        fail_on_positivity: cfg.flags.fail_on_positivity,
        evolve_theta: true,
    })
}

/// Limit problem on the macro grid matched to the finest ε of the sweep.
pub fn limit_problem(
    cfg: &RunConfig,
    physics: &PhysicsConfig,
    cell: Arc<CellGeometry>,
    tensor: Arc<EffectiveTensor>,
    sign: i8,
) -> Result<LimitProblem> {
    let m = cell.m;
    Ok(LimitProblem {
        grid: MacroGrid::new(cfg.finest().n(), cfg.geometry.lengths)?,
        cell,
        tensor,
        conductivity: physics.conductivity.field(m),
        coupling: physics.coupling(),
        reaction: physics.reaction,
        source: physics.source,
        mollifier: Mollifier::new(physics.delta)?,
        initial: physics.initial,
        time: cfg.time_grid()?,
        solver: solver_options(cfg),
        exchange_sign: sign as f64,
        diffusion_scaling: physics.limit_diffusion,
        tol_pos: cfg.discretization.tol_pos,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub volume: f64,
    pub perimeter: f64,
    pub d_eff: [[f64; 2]; 2],
    pub voigt: [f64; 3],
    pub eigenvalues: [f64; 2],
    pub residuals: [f64; 2],
    pub iterations: [usize; 2],
}

impl CellSummary {
    pub fn new(cell: &CellGeometry, t: &EffectiveTensor) -> Self {
        let (l1, l2) = t.eigenvalues();
        Self {
            volume: cell.volume,
            perimeter: cell.perimeter,
            d_eff: t.d_eff,
            voigt: t.voigt,
            eigenvalues: [l1, l2],
            residuals: t.residuals,
            iterations: t.iterations,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MicroSummary {
    pub epsilon: Epsilon,
    pub nodes: usize,
    pub steps: usize,
    pub dt: f64,
    pub initial_max: f64,
    pub min_value: f64,
    pub max_value: f64,
    /// `max_t ‖u_ε‖_{H¹} + ε‖∇θ_ε‖`
    pub energy_sup: f64,
    pub positivity_flags: Vec<usize>,
    pub stability_indicator: f64,
    pub c_delta: f64,
    pub max_u_iterations: usize,
    pub max_theta_iterations: usize,
    pub initial_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyPoint {
    pub epsilon: Epsilon,
    pub value: f64,
    pub errors: ErrorFunctional,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ComponentFits {
    pub total: Option<RateFit>,
    pub e1: Option<RateFit>,
    pub e2: Option<RateFit>,
    pub e3: Option<RateFit>,
    pub e4: Option<RateFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitSummary {
    pub min_value: f64,
    pub max_value: f64,
    pub max_mass_balance_defect: f64,
    pub max_theta_iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignStudy {
    pub sign: i8,
    pub limit: LimitSummary,
    pub points: Vec<StudyPoint>,
    pub fits: ComponentFits,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyBlock {
    pub label: String,
    pub signs: Vec<SignStudy>,
    /// Exchange sign whose total error converges best.
    pub selected_sign: i8,
    pub micro: Vec<MicroSummary>,
    /// Largest over smallest `energy_sup` across the sweep.
    pub uniformity_ratio: f64,
    pub initial_gap_fit: Option<RateFit>,
}

impl StudyBlock {
    pub fn selected(&self) -> &SignStudy {
        self.signs
            .iter()
            .find(|s| s.sign == self.selected_sign)
            .expect("selected sign is present")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaFits {
    pub fold: Option<RateFit>,
    pub unfold: Option<RateFit>,
    pub mismatch: Option<RateFit>,
    pub mollifier: Option<RateFit>,
    pub mollifier_jump: Option<RateFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaSuite {
    pub rows: Vec<LemmaRow>,
    pub fits: LemmaFits,
    pub c_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Runtimes {
    pub total_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub tool_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub warnings: Vec<String>,
    pub cell: CellSummary,
    pub study: StudyBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<StudyBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaSuite>,
    /// Omitted in deterministic mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtimes: Option<Runtimes>,
}

/// Everything a study produces; the report plus per-ε step diagnostics.
pub struct StudyOutput {
    pub report: ConvergenceReport,
    pub diagnostics: Vec<(Epsilon, Vec<StepDiagnostics>)>,
}

fn fit(points: impl Iterator<Item = (f64, f64)>, what: &str, warnings: &mut Vec<String>) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = points.collect();
    match verify::fit_rate(&pts) {
        Ok(f) => {
            for n in &f.notes {
                warnings.push(format!("{what}: {n}"));
            }
            Some(f)
        }
        Err(e) => {
            warnings.push(format!("{what}: no slope ({e})"));
            None
        }
    }
}

struct Clock {
    start: Instant,
    stages: Vec<(String, f64)>,
}

impl Clock {
    fn lap(&mut self, stage: &str, since: Instant) {
        self.stages.push((stage.to_string(), since.elapsed().as_secs_f64()));
    }
}

fn run_block(
    cfg: &RunConfig,
    label: &str,
    physics: &PhysicsConfig,
    cell: &Arc<CellGeometry>,
    tensor: &Arc<EffectiveTensor>,
    signs: &[i8],
    warnings: &mut Vec<String>,
    clock: &mut Clock,
) -> Result<(StudyBlock, Vec<(Epsilon, Vec<StepDiagnostics>)>)> {
    let t0 = Instant::now();
    let limits: Vec<(i8, LimitTrajectory, LimitProblem)> = signs
        .iter()
        .map(|&s| {
            let p = limit_problem(cfg, physics, cell.clone(), tensor.clone(), s)?;
            let tr = crate::limit::run(&p).map_err(|e| e.in_stage(format!("{label} limit sign {s:+}")))?;
            Ok((s, tr, p))
        })
        .collect::<Result<_>>()?;
    clock.lap(&format!("{label} limit"), t0);

    let t1 = Instant::now();
    let quad = cfg.discretization.time_quadrature;
    let per_eps: Vec<(MicroSummary, Vec<ErrorFunctional>, Vec<StepDiagnostics>)> = cfg
        .epsilons()
        .into_par_iter()
        .map(|eps| -> Result<_> {
            let stage = format!("{label} micro eps = {eps}");
            let p = micro_problem(cfg, physics, cell.clone(), eps).map_err(|e| e.in_stage(stage.clone()))?;
            let tr = crate::micro::run(&p).map_err(|e| e.in_stage(stage.clone()))?;
            let errors = limits
                .iter()
                .map(|(_, lt, lp)| verify::error_functional(&p.grid, &tr, &lp.grid, lt, tensor, quad))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage(stage.clone()))?;
            let initial_max = p.u0.iter().chain(&p.theta0).copied().fold(f64::NEG_INFINITY, f64::max);
            let summary = MicroSummary {
                epsilon: eps,
                nodes: p.grid.n_nodes(),
                steps: p.time.steps,
                dt: p.time.dt,
                initial_max,
                min_value: tr
                    .min_value()
                    .min(p.u0.iter().chain(&p.theta0).copied().fold(f64::INFINITY, f64::min)),
                max_value: tr.max_value().max(initial_max),
                energy_sup: tr.energy.iter().copied().fold(0.0, f64::max),
                positivity_flags: tr.positivity_flags.clone(),
                stability_indicator: tr.stability_indicator,
                c_delta: tr.c_delta,
                max_u_iterations: tr.diagnostics.iter().map(|d| d.u_iterations).max().unwrap_or(0),
                max_theta_iterations: tr.diagnostics.iter().map(|d| d.theta_iterations).max().unwrap_or(0),
                initial_gap: verify::initial_gap(&p.grid, &p.u0, &p.theta0, physics.initial),
            };
            Ok((summary, errors, tr.diagnostics))
        })
        .collect::<Result<_>>()?;
    clock.lap(&format!("{label} micro"), t1);

    let mut sign_studies = Vec::new();
    for (k, (s, lt, _)) in limits.iter().enumerate() {
        let points: Vec<StudyPoint> = per_eps
            .iter()
            .map(|(m, errs, _)| StudyPoint {
                epsilon: m.epsilon,
                value: m.epsilon.value(),
                errors: errs[k],
            })
            .collect();
        let tag = format!("{label} sign {s:+}");
        let comp = |i: usize| points.iter().map(move |p| (p.value, p.errors.components()[i]));
        let fits = ComponentFits {
            total: fit(
                points.iter().map(|p| (p.value, p.errors.total)),
                &format!("{tag} total"),
                warnings,
            ),
            e1: fit(comp(0), &format!("{tag} e1"), warnings),
            e2: fit(comp(1), &format!("{tag} e2"), warnings),
            e3: fit(comp(2), &format!("{tag} e3"), warnings),
            e4: fit(comp(3), &format!("{tag} e4"), warnings),
        };
        let limit = LimitSummary {
            min_value: lt.min_value(),
            max_value: lt
                .diagnostics
                .iter()
                .map(|d| d.u_max.max(d.theta_max))
                .fold(f64::NEG_INFINITY, f64::max),
            max_mass_balance_defect: lt
                .diagnostics
                .iter()
                .map(|d| d.mass_balance_defect.abs())
                .fold(0.0, f64::max),
            max_theta_iterations: lt.diagnostics.iter().map(|d| d.theta_iterations).max().unwrap_or(0),
        };
        sign_studies.push(SignStudy {
            sign: *s,
            limit,
            points,
            fits,
        });
    }
    let selected_sign = select_sign(&sign_studies);

    let micro: Vec<MicroSummary> = per_eps.iter().map(|(m, _, _)| m.clone()).collect();
    for m in &micro {
        if !m.positivity_flags.is_empty() {
            warnings.push(format!(
                "{label}: eps = {} lost positivity at {} steps",
                m.epsilon,
                m.positivity_flags.len()
            ));
        }
    }
    let e_max = micro.iter().map(|m| m.energy_sup).fold(0.0, f64::max);
    let e_min = micro.iter().map(|m| m.energy_sup).fold(f64::INFINITY, f64::min);
    let uniformity_ratio = if e_min > 0.0 { e_max / e_min } else { f64::NAN };
    let initial_gap_fit = fit(
        micro.iter().map(|m| (m.epsilon.value(), m.initial_gap)),
        &format!("{label} initial gap"),
        warnings,
    );
    let diagnostics = per_eps.into_iter().map(|(m, _, d)| (m.epsilon, d)).collect();
    Ok((
        StudyBlock {
            label: label.to_string(),
            signs: sign_studies,
            selected_sign,
            micro,
            uniformity_ratio,
            initial_gap_fit,
        },
        diagnostics,
    ))
}

/// Larger fitted total slope wins; without fits the smaller total error at
/// the finest ε.
fn select_sign(studies: &[SignStudy]) -> i8 {
    let slope = |s: &SignStudy| s.fits.total.as_ref().map(|f| f.slope);
    let finest = |s: &SignStudy| s.points.last().map(|p| p.errors.total).unwrap_or(f64::INFINITY);
    studies
        .iter()
        .max_by(|a, b| match (slope(a), slope(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => finest(b).total_cmp(&finest(a)),
        })
        .map(|s| s.sign)
        .unwrap_or(1)
}

/// Operator rate suites over the sweep.
pub fn lemma_suite(cfg: &RunConfig, cell: &Arc<CellGeometry>, warnings: &mut Vec<String>) -> Result<LemmaSuite> {
    let moll = Mollifier::new(cfg.physics.delta)?;
    let sup = MollifierSup::new(
        cfg.geometry.lengths,
        cfg.flags.lemma2_lattice,
        &moll,
        verify::data::interior_field,
    );
    let sup_jump = MollifierSup::new(
        cfg.geometry.lengths,
        cfg.flags.lemma2_lattice,
        &moll,
        verify::data::macro_field,
    );
    let opts = solver_options(cfg);
    let rows: Vec<LemmaRow> = cfg
        .epsilons()
        .into_par_iter()
        .map(|eps| -> Result<LemmaRow> {
            let grid = PerforatedGrid::new(cell.clone(), eps, cfg.geometry.lengths)?;
            let (fold_error, unfold_error) = verify::lemma1(&grid, verify::data::two_scale, verify::data::macro_field);
            let mats = GridMatrices::new(&grid)?;
            let mismatch = verify::theorem3(&grid, &mats, verify::data::two_scale, opts)?;
            Ok(LemmaRow {
                epsilon: eps.value(),
                fold_error,
                unfold_error,
                mismatch,
                mollifier_sup: sup.sup(cell, eps.n())?,
                mollifier_sup_jump: sup_jump.sup(cell, eps.n())?,
            })
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("lemma suites"))?;
    let col = |f: fn(&LemmaRow) -> f64| rows.iter().map(move |r| (r.epsilon, f(r)));
    let fits = LemmaFits {
        fold: fit(col(|r| r.fold_error), "lemma1 fold", warnings),
        unfold: fit(col(|r| r.unfold_error), "lemma1 unfold", warnings),
        mismatch: fit(col(|r| r.mismatch), "theorem3 mismatch", warnings),
        mollifier: fit(col(|r| r.mollifier_sup), "lemma2 mollifier", warnings),
        mollifier_jump: fit(
            col(|r| r.mollifier_sup_jump),
            "lemma2 mollifier (boundary jump)",
            warnings,
        ),
    };
    Ok(LemmaSuite {
        rows,
        fits,
        c_delta: sup.c_delta,
    })
}

/// Full study. `workers` sizes the pool; `None` uses the rayon default.
pub fn run_study(cfg: &RunConfig, workers: Option<usize>) -> Result<StudyOutput> {
    let mut warnings = cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| study_inner(cfg, &mut warnings))
}

fn study_inner(cfg: &RunConfig, warnings: &mut Vec<String>) -> Result<StudyOutput> {
    let mut clock = Clock {
        start: Instant::now(),
        stages: Vec::new(),
    };
    let t0 = Instant::now();
    let cell = build_cell(cfg).map_err(|e| e.in_stage("geometry"))?;
    let tensor = Arc::new(solve_tensor(cfg, &cell).map_err(|e| e.in_stage("cell"))?);
    clock.lap("cell", t0);

    let signs: Vec<i8> = if cfg.flags.ambiguity_sweep {
        vec![1, -1]
    } else {
        vec![cfg.physics.sign_limit_exchange]
    };
    let (study, mut diagnostics) = run_block(
        cfg,
        "default",
        &cfg.physics,
        &cell,
        &tensor,
        &signs,
        warnings,
        &mut clock,
    )?;
    let baseline = if cfg.flags.coupling_off_baseline {
        let (b, _) = run_block(
            cfg,
            "coupling_off",
            &cfg.physics.decoupled(),
            &cell,
            &tensor,
            &[cfg.physics.sign_limit_exchange],
            warnings,
            &mut clock,
        )?;
        Some(b)
    } else {
        None
    };
    let lemmas = if cfg.flags.lemma_suites {
        let t = Instant::now();
        let l = lemma_suite(cfg, &cell, warnings)?;
        clock.lap("lemmas", t);
        Some(l)
    } else {
        None
    };
    diagnostics.sort_by_key(|(e, _)| e.n());
    let runtimes = (!cfg.flags.deterministic).then(|| Runtimes {
        total_seconds: clock.start.elapsed().as_secs_f64(),
        stages: clock.stages.clone(),
    });
    Ok(StudyOutput {
        report: ConvergenceReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            config_hash: cfg.hash(),
            warnings: warnings.clone(),
            cell: CellSummary::new(&cell, &tensor),
            study,
            baseline,
            lemmas,
            runtimes,
        },
        diagnostics,
    })
}

/// One threshold applied to a report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `">="`, `">"` or `"<="`.
    pub relation: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: &'static str, threshold: f64) -> Self {
        let pass = match relation {
            ">=" => value >= threshold,
            ">" => value > threshold,
            _ => value <= threshold,
        };
        Self {
            name: name.into(),
            value,
            relation,
            threshold,
            pass,
        }
    }

    fn slope(name: impl Into<String>, fit: &Option<RateFit>, relation: &'static str, threshold: f64) -> Self {
        Self::new(name, fit.as_ref().map_or(f64::NAN, |f| f.slope), relation, threshold)
    }
}

/// Rate and bound thresholds of a study report. A missing fit fails its check.
pub fn assess(report: &ConvergenceReport) -> Vec<Check> {
    let tol_pos = report.config.discretization.tol_pos;
    let mut out = Vec::new();
    let block = &report.study;
    for m in &block.micro {
        out.push(Check::new(
            format!("micro {} min", m.epsilon),
            m.min_value,
            ">=",
            -tol_pos,
        ));
        out.push(Check::new(
            format!("micro {} max / initial max", m.epsilon),
            m.max_value / m.initial_max,
            "<=",
            10.0,
        ));
    }
    out.push(Check::new("uniformity ratio", block.uniformity_ratio, "<=", 2.0));
    out.push(Check::slope("initial gap slope", &block.initial_gap_fit, ">=", 0.45));
    let sel = block.selected();
    out.push(Check::slope("total error slope", &sel.fits.total, ">=", 0.45));
    for (name, f) in [
        ("e1", &sel.fits.e1),
        ("e2", &sel.fits.e2),
        ("e3", &sel.fits.e3),
        ("e4", &sel.fits.e4),
    ] {
        out.push(Check::slope(format!("{name} slope"), f, ">", 0.0));
    }
    if let Some(b) = &report.baseline {
        out.push(Check::slope(
            "coupling-off total slope",
            &b.selected().fits.total,
            ">=",
            0.45,
        ));
    }
    if let Some(l) = &report.lemmas {
        out.push(Check::slope("unfold-fold slope", &l.fits.fold, ">=", 0.9));
        out.push(Check::slope("unfold slope", &l.fits.unfold, ">=", 0.9));
        out.push(Check::slope("folding mismatch slope", &l.fits.mismatch, ">=", 0.9));
        out.push(Check::slope(
            "mollified gradient sup slope",
            &l.fits.mollifier,
            ">=",
            0.45,
        ));
    }
    out
}
