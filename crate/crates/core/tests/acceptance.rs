//! Acceptance criteria AC1 to AC10. Runs without the libtest harness so every
//! `[PASS]`/`[FAIL]` line is printed; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use twoscale::cell::EffectiveTensor;
use twoscale::config::RunConfig;
use twoscale::fem::CoefficientField;
use twoscale::geometry::{CellGeometry, Epsilon, HoleSpec, PerforatedGrid};
use twoscale::micro::initial_fields;
use twoscale::mollifier::Mollifier;
use twoscale::operators::GridMatrices;
use twoscale::presets::InitialPreset;
use twoscale::study::{self, ConvergenceReport};
use twoscale::verify::{self, fit_rate, MollifierSup, RateFit};

const SWEEP: [usize; 4] = [4, 8, 16, 32];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn hole_cell(m: usize) -> Arc<CellGeometry> {
    Arc::new(CellGeometry::new(2, HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0), m).unwrap())
}

fn grid(cell: &Arc<CellGeometry>, n: usize) -> PerforatedGrid {
    PerforatedGrid::new(cell.clone(), Epsilon::inverse(n).unwrap(), [1, 1]).unwrap()
}

fn slope(points: &[(f64, f64)]) -> RateFit {
    fit_rate(points).expect("rate fit")
}

fn ac1() -> Outcome {
    let cell = hole_cell(12);
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for n in [4, 8] {
        for c in verify::ops_check(&grid(&cell, n), 7).unwrap() {
            if c.identity == "eps-norm identity" {
                continue;
            }
            worst = worst.max(c.relative_error);
            if !(c.relative_error <= 1e-12) {
                failed.push(format!("{} at {}", c.identity, c.epsilon));
            }
        }
    }
    outcome(
        failed.is_empty(),
        format!("operator algebra, worst relative error {worst:.2e} (tol 1e-12) {failed:?}"),
    )
}

fn ac2() -> Outcome {
    let cell = hole_cell(12);
    let mut worst: f64 = 0.0;
    for n in SWEEP {
        for seed in [1, 2, 3] {
            let c = verify::ops_check(&grid(&cell, n), seed)
                .unwrap()
                .into_iter()
                .find(|c| c.identity == "eps-norm identity")
                .expect("identity present");
            worst = worst.max(c.relative_error);
        }
    }
    outcome(
        worst <= 1e-12,
        format!("eps-norm identity, worst relative error {worst:.2e} (tol 1e-12)"),
    )
}

fn ac3() -> Outcome {
    let cell = hole_cell(12);
    let rows: Vec<(f64, (f64, f64))> = SWEEP
        .iter()
        .map(|&n| {
            let g = grid(&cell, n);
            (
                g.eps(),
                verify::lemma1(&g, verify::data::two_scale, verify::data::macro_field),
            )
        })
        .collect();
    let fold = slope(&rows.iter().map(|&(e, (f, _))| (e, f)).collect::<Vec<_>>());
    let unfold = slope(&rows.iter().map(|&(e, (_, u))| (e, u)).collect::<Vec<_>>());
    outcome(
        fold.slope >= 0.9 && unfold.slope >= 0.9,
        format!(
            "unfolding error slopes: |TFU - U| {:.3}, |Tu - u| {:.3} (need >= 0.9)",
            fold.slope, unfold.slope
        ),
    )
}

fn ac4() -> Outcome {
    let cell = hole_cell(12);
    let opts = study::solver_options(&RunConfig::default());
    let pts: Vec<(f64, f64)> = SWEEP
        .iter()
        .map(|&n| {
            let g = grid(&cell, n);
            let mats = GridMatrices::new(&g).unwrap();
            (
                g.eps(),
                verify::theorem3(&g, &mats, verify::data::two_scale, opts).unwrap(),
            )
        })
        .collect();
    let f = slope(&pts);
    let values: Vec<String> = pts.iter().map(|p| format!("{:.4}", p.1)).collect();
    outcome(
        f.slope >= 0.9,
        format!(
            "folding mismatch slope {:.3} (need >= 0.9), values [{}]",
            f.slope,
            values.join(", ")
        ),
    )
}

fn ac5() -> Outcome {
    let cell = hole_cell(12);
    let moll = Mollifier::new(0.25).unwrap();
    let rate = |u: fn([f64; 2]) -> f64| {
        let sup = MollifierSup::new([1, 1], 384, &moll, u);
        slope(&SWEEP.map(|n| (1.0 / n as f64, sup.sup(&cell, n).unwrap())))
    };
    let smooth = rate(verify::data::interior_field);
    let jump = rate(verify::data::macro_field);
    outcome(
        smooth.slope >= 0.45,
        format!(
            "mollified gradient sup slope {:.3} (need >= 0.45); boundary-jump field {:.3}, recorded",
            smooth.slope, jump.slope
        ),
    )
}

fn ac6() -> Outcome {
    let opts = study::solver_options(&RunConfig::default());
    let mut worst_plain: f64 = 0.0;
    for c in [[1.0, 0.0, 1.0], [2.0, 0.0, 1.0], [1.5, 0.3, 1.0]] {
        let cell = CellGeometry::new(2, HoleSpec::none(), 8).unwrap();
        let t = EffectiveTensor::solve(&cell, &CoefficientField::uniform(c), opts).unwrap();
        let d = t.d_eff;
        let err = [d[0][0] - c[0], d[0][1] - c[1], d[1][0] - c[1], d[1][1] - c[2]]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        worst_plain = worst_plain.max(err);
    }
    let id = CoefficientField::identity();
    let coarse = EffectiveTensor::solve(&hole_cell(24), &id, opts).unwrap();
    let fine = EffectiveTensor::solve(&hole_cell(96), &id, opts).unwrap();
    let (l1, l2) = coarse.eigenvalues();
    let bounded = l1 > 0.0 && l2 < 8.0 / 9.0;
    let rel = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (coarse.d_eff[i][j] - fine.d_eff[i][j]).abs())
        .fold(0.0f64, f64::max)
        / fine.eigenvalues().1;
    outcome(
        worst_plain <= 1e-10 && bounded && rel <= 0.01,
        format!(
            "cell problem: no-hole error {worst_plain:.1e}, eigenvalues ({l1:.5}, {l2:.5}) in (0, 8/9), m=24 vs m=96 rel. diff {rel:.2e}"
        ),
    )
}

fn study_report() -> ConvergenceReport {
    let mut cfg = RunConfig::default();
    cfg.flags.coupling_off_baseline = true;
    cfg.flags.lemma_suites = false;
    study::run_study(&cfg, None).unwrap().report
}

fn ac7(r: &ConvergenceReport) -> Outcome {
    let micro: Vec<_> = r.study.micro.iter().filter(|m| m.epsilon.n() <= 16).collect();
    let min = micro.iter().map(|m| m.min_value).fold(f64::INFINITY, f64::min);
    let ratio = micro.iter().map(|m| m.max_value / m.initial_max).fold(0.0, f64::max);
    let e: Vec<f64> = micro.iter().map(|m| m.energy_sup).collect();
    let uniformity = e.iter().copied().fold(0.0, f64::max) / e.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        micro.len() == 3 && min >= -1e-10 && ratio <= 10.0 && uniformity <= 2.0,
        format!("micro bounds: min {min:.4}, max/initial {ratio:.3}, uniformity ratio {uniformity:.4}"),
    )
}

fn ac8(r: &ConvergenceReport) -> Outcome {
    let sel = r.study.selected();
    let total = sel.fits.total.as_ref().expect("total fit");
    let comps: Vec<f64> = [&sel.fits.e1, &sel.fits.e2, &sel.fits.e3, &sel.fits.e4]
        .iter()
        .map(|f| f.as_ref().map_or(f64::NAN, |f| f.slope))
        .collect();
    let base = r
        .baseline
        .as_ref()
        .and_then(|b| b.selected().fits.total.as_ref().map(|f| f.slope))
        .unwrap_or(f64::NAN);
    outcome(
        total.slope >= 0.45 && comps.iter().all(|&s| s > 0.0) && base >= 0.45,
        format!(
            "corrector estimate: total slope {:.3} (residual {:.3}, prefactor {:.3}, exchange sign {:+}), e1..e4 slopes [{:.3}, {:.3}, {:.3}, {:.3}], coupling-off slope {:.3}",
            total.slope, total.residual, total.prefactor, sel.sign, comps[0], comps[1], comps[2], comps[3], base
        ),
    )
}

fn ac9() -> Outcome {
    let cell = hole_cell(12);
    let pts: Vec<(f64, f64)> = SWEEP
        .iter()
        .map(|&n| {
            let g = grid(&cell, n);
            let (u0, t0) = initial_fields(&g, InitialPreset::Default);
            (g.eps(), verify::initial_gap(&g, &u0, &t0, InitialPreset::Default))
        })
        .collect();
    let f = slope(&pts);
    outcome(
        f.slope >= 0.45,
        format!("initial gap slope {:.3} (need >= 0.45)", f.slope),
    )
}

fn ac10() -> Outcome {
    let text = include_str!("data/small_study.toml");
    let run = || {
        let mut cfg = RunConfig::from_toml(text).unwrap();
        cfg.flags.deterministic = true;
        serde_json::to_vec_pretty(&study::run_study(&cfg, None).unwrap().report).unwrap()
    };
    let (a, b) = (run(), run());
    outcome(
        a == b,
        format!("deterministic study reports: {} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!(
            "[{}] {id} {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        all &= o.pass;
    };
    report("AC1", &ac1);
    report("AC2", &ac2);
    report("AC3", &ac3);
    report("AC4", &ac4);
    report("AC5", &ac5);
    report("AC6", &ac6);
    let t = Instant::now();
    let r = study_report();
    println!(
        "       full study with coupling-off baseline: {:.1} s",
        t.elapsed().as_secs_f64()
    );
    report("AC7", &|| ac7(&r));
    report("AC8", &|| ac8(&r));
    report("AC9", &ac9);
    report("AC10", &ac10);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
