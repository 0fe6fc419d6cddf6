//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p depth-contours --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use depth_contours::edges::{canny, edt, normalize_depth, CannyParams, EdgeMap};
use depth_contours::grid::{DepthGrid, Grid, ProbGrid};
use depth_contours::imageio::{read_report, write_report, write_table_csv, TableRow};
use depth_contours::losses::{
    depth_contour_consensus, depth_normal_consensus, gradcheck, ContourNorm, LossTerm,
    NormalConvention,
};
use depth_contours::metrics::{
    clip_depth, evaluate_grids, standard_metrics, ClipRange, EdgeSource, EvalConfig, EvalReport,
    PixelCounts, SCHEMA_VERSION,
};
use depth_contours::edges::dde;
use depth_contours::synth::{perturb, random_scene, render, shift_edges, Noise, Primitive, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn reference_report() -> EvalReport {
    let cfg = EvalConfig::benchmark();
    let acc = [2.272, 2.629, 3.066, 3.152];
    let dbe_acc: BTreeMap<String, Option<f64>> = cfg
        .canny
        .iter()
        .zip(acc)
        .map(|(p, v)| (p.key(), Some(v)))
        .collect();
    let none: BTreeMap<String, Option<f64>> = cfg.canny.iter().map(|p| (p.key(), None)).collect();
    EvalReport {
        schema_version: SCHEMA_VERSION,
        id: "reference".into(),
        images: 0,
        delta1: 0.888,
        delta2: 0.979,
        delta3: 0.995,
        rel: 0.139,
        log10: 0.047,
        rmse_lin: 0.495,
        rmse_log: 0.157,
        dbe_acc,
        dbe_comp: none.clone(),
        dbe_truncated: none,
        degenerate: cfg.canny.iter().map(|p| (p.key(), false)).collect(),
        dde_0: 0.0,
        dde_minus: 0.0,
        dde_plus: 0.0,
        pixels: PixelCounts::default(),
        edge_source: EdgeSource::Annotation,
        config: cfg,
        timestamp: None,
    }
}

fn report_fixture() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("reference.json");
    let report = reference_report();
    write_report(&report, &path).map_err(|e| e.to_string())?;
    let back = read_report(&path).map_err(|e| e.to_string())?;
    ensure(back == report, || "report changed across a JSON round trip".into())?;
    let mut csv = Vec::new();
    write_table_csv(&mut csv, &[TableRow { method: "Ours", report: &back }]).map_err(|e| e.to_string())?;
    let expected = "method,delta1,delta2,delta3,rel,log10,rmse_lin,rmse_log,\
dbe_acc_0.1_0.2,dbe_acc_0.01_0.1,dbe_acc_0.005_0.06,dbe_acc_0.03_0.05\n\
Ours,0.888,0.979,0.995,0.139,0.047,0.495,0.157,2.272,2.629,3.066,3.152\n";
    let got = String::from_utf8(csv).map_err(|e| e.to_string())?;
    ensure(got == expected, || format!("CSV differs:\n{got}"))?;
    Ok("benchmark row reproduced byte for byte".into())
}

fn oracle_identity() -> Outcome {
    let cfg = EvalConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let spec = random_scene(seed, 320, 240).map_err(|e| e.to_string())?;
        let t = render(&spec).map_err(|e| e.to_string())?;
        let r = evaluate_grids("gt", &t.depth, &t.depth, Some(&t.contours), &cfg).map_err(|e| e.to_string())?;
        ensure(
            (r.delta1, r.delta2, r.delta3) == (1.0, 1.0, 1.0)
                && (r.rel, r.log10, r.rmse_lin, r.rmse_log) == (0.0, 0.0, 0.0, 0.0),
            || format!("scene {seed}: standard metrics not exact"),
        )?;
        for (k, v) in &r.dbe_acc {
            let v = v.ok_or_else(|| format!("scene {seed}: accuracy undefined at {k}"))?;
            ensure(v < 0.5, || format!("scene {seed}: dbe_acc {v} at {{{k}}}"))?;
            worst = worst.max(v);
        }
    }
    Ok(format!("20 scenes at 320x240, worst dbe_acc {worst:.4} px"))
}

fn bar_scene() -> SceneSpec {
    SceneSpec::new(160, 60, 3.0).with(Primitive::Rect {
        x0: 40,
        y0: 0,
        x1: 80,
        y1: 60,
        depth: 1.5,
    })
}

fn chamfer_calibration() -> Outcome {
    let spec = bar_scene();
    let gt = render(&spec).map_err(|e| e.to_string())?;
    let cfg = EvalConfig::default();
    let mut spread = 0.0f64;
    for k in 1..=9usize {
        let shifted = shift_edges(&spec, k).map_err(|e| e.to_string())?;
        let r = evaluate_grids("shift", &shifted.depth, &gt.depth, Some(&gt.contours), &cfg)
            .map_err(|e| e.to_string())?;
        for (key, v) in &r.dbe_acc {
            let v = v.ok_or_else(|| format!("k={k}: accuracy undefined at {key}"))?;
            ensure((v - k as f64).abs() <= 0.5, || format!("k={k}: dbe_acc {v} at {{{key}}}"))?;
            spread = spread.max((v - k as f64).abs());
        }
    }
    let shifted = shift_edges(&spec, 12).map_err(|e| e.to_string())?;
    let r = evaluate_grids("shift", &shifted.depth, &gt.depth, Some(&gt.contours), &cfg).map_err(|e| e.to_string())?;
    ensure(r.degenerate.values().all(|&d| d), || format!("k=12: flags {:?}", r.degenerate))?;
    Ok(format!("k=1..9 within {spread:.3} px of k; k=12 flagged degenerate"))
}

fn brute_edt(m: &EdgeMap) -> Vec<f64> {
    let pts: Vec<(i64, i64)> = (0..m.height())
        .flat_map(|y| (0..m.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| m.get(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    let mut out = Vec::with_capacity(m.width() * m.height());
    for y in 0..m.height() as i64 {
        for x in 0..m.width() as i64 {
            let best = pts.iter().map(|&(px, py)| (px - x).pow(2) + (py - y).pow(2)).min();
            out.push(best.map_or(f64::INFINITY, |d| (d as f64).sqrt()));
        }
    }
    out
}

fn edt_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pixels = 0;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let density = rng.random_range(0.0..0.3f64).powi(2);
        let m = EdgeMap::from_fn(w, h, |_, _| rng.random_bool(density));
        ensure(edt(&m).values() == brute_edt(&m).as_slice(), || format!("{w}x{h} mask differs"))?;
        pixels += w * h;
    }
    Ok(format!("200 masks, {pixels} pixels, zero mismatches"))
}

fn gradient_verification() -> Outcome {
    let mut worst = (0.0f64, LossTerm::Depth);
    let mut checked = 0;
    for term in LossTerm::ALL {
        for seed in 0..5 {
            let r = gradcheck(term, seed, 8, 1e-6).map_err(|e| e.to_string())?;
            ensure(r.max_rel_error < 1e-3, || {
                format!("{term} seed {seed}: relative error {:.3e}", r.max_rel_error)
            })?;
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, term);
            }
            checked += r.checked;
        }
    }
    Ok(format!(
        "{checked} partials over 6 terms x 5 seeds, worst {:.2e} ({})",
        worst.0, worst.1
    ))
}

fn consensus_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let t = render(&random_scene(seed, 96, 72).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let r = depth_normal_consensus(&t.depth, t.normals.grid(), NormalConvention::CameraFacing)
            .map_err(|e| e.to_string())?;
        ensure(r.value <= 1e-9, || format!("scene {seed}: depth-normal consensus {:.3e}", r.value))?;
        worst = worst.max(r.value);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut margin = f64::INFINITY;
    for seed in 0..50 {
        let (w, h) = (64, 48);
        let x0 = rng.random_range(4..28);
        let y0 = rng.random_range(4..20);
        let background = rng.random_range(1.5..3.0);
        let spec = SceneSpec::new(w, h, background).with(Primitive::Rect {
            x0,
            y0,
            x1: x0 + rng.random_range(8..30),
            y1: y0 + rng.random_range(8..24),
            depth: background - rng.random_range(0.3..1.5),
        });
        let t = render(&spec).map_err(|e| e.to_string())?;
        let truth = ProbGrid::from_labels(w, h, t.contours.bits()).map_err(|e| e.to_string())?;
        let half = ProbGrid::from_values(w, h, vec![0.5; w * h]).map_err(|e| e.to_string())?;
        let a = depth_contour_consensus(&t.depth, &truth, 1.0, ContourNorm::Mean).map_err(|e| e.to_string())?;
        let b = depth_contour_consensus(&t.depth, &half, 1.0, ContourNorm::Mean).map_err(|e| e.to_string())?;
        ensure(a.value < b.value, || format!("scene {seed}: {} vs {}", a.value, b.value))?;
        margin = margin.min(b.value - a.value);
    }
    Ok(format!(
        "depth-normal worst {worst:.2e} on 50 scenes; depth-contour true < uniform on 50 step scenes with 0.3-1.5 m gaps (min margin {margin:.3})"
    ))
}

fn canny_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for case in 0..100u64 {
        let spec = random_scene(case, 64, 64).map_err(|e| e.to_string())?;
        let t = render(&spec).map_err(|e| e.to_string())?;
        let noise = Noise {
            sigma: rng.random_range(0.0..0.03),
            fatten: rng.random_range(0..3),
        };
        let d = perturb(&t, &noise, case).map_err(|e| e.to_string())?;
        let img = normalize_depth(&d).map_err(|e| e.to_string())?;
        let lo = rng.random_range(0.001..0.15);
        let mut prev: Option<EdgeMap> = None;
        for f in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let hi = lo + (1.0 - lo) * f;
            let e = canny(&img, &CannyParams::new(lo, hi)).map_err(|e| e.to_string())?;
            if prev.as_ref().is_some_and(|p| !e.is_subset_of(p)) {
                violations += 1;
            }
            prev = Some(e);
        }
    }
    ensure(violations == 0, || format!("{violations} subset violations"))?;
    Ok("100 cases x 5 levels, zero violations".into())
}

fn random_depth(rng: &mut ChaCha8Rng, w: usize, h: usize) -> DepthGrid {
    let values: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..15.0)).collect();
    let mask: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.85)).collect();
    DepthGrid::new(Grid::new(w, h, values, mask).unwrap()).unwrap()
}

fn metric_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let clip = ClipRange::default();
    let mut tested = 0;
    while tested < 1000 {
        let (w, h) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let pred = random_depth(&mut rng, w, h);
        let gt = random_depth(&mut rng, w, h);
        let Ok(m) = standard_metrics(&pred, &gt) else {
            continue;
        };
        tested += 1;
        let [d1, d2, d3] = m.delta;
        ensure(0.0 <= d1 && d1 <= d2 && d2 <= d3 && d3 <= 1.0, || format!("deltas {:?}", m.delta))?;
        let e = m.errors;
        ensure(
            e.rel >= 0.0 && e.log10 >= 0.0 && e.rmse_lin >= 0.0 && e.rmse_log >= 0.0,
            || format!("negative error {e:?}"),
        )?;
        let s = dde(&pred, &gt, 3.0).map_err(|e| e.to_string())?;
        let total = s.eps0 + s.eps_minus + s.eps_plus;
        ensure((total - 100.0).abs() <= 1e-9, || format!("dde sums to {total}"))?;
        let once = clip_depth(&pred, clip).map_err(|e| e.to_string())?;
        ensure(clip_depth(&once, clip).map_err(|e| e.to_string())? == once, || "clip not idempotent".into())?;

        // scramble every pixel outside the shared mask
        let scramble = |d: &DepthGrid, other: &DepthGrid, rng: &mut ChaCha8Rng| {
            let mut g = d.grid().clone();
            for i in 0..g.len() {
                if !(d.mask()[i] && other.mask()[i]) {
                    g.values_mut()[i] = rng.random_range(0.01..100.0);
                }
            }
            DepthGrid::new(g.with_mask(d.mask().to_vec()).unwrap())
        };
        let p2 = scramble(&pred, &gt, &mut rng).map_err(|e| e.to_string())?;
        let g2 = scramble(&gt, &pred, &mut rng).map_err(|e| e.to_string())?;
        ensure(standard_metrics(&p2, &g2).map_err(|e| e.to_string())? == m, || "masked values changed a metric".into())?;
        ensure(dde(&p2, &g2, 3.0).map_err(|e| e.to_string())? == s, || "masked values changed dde".into())?;
    }
    Ok("1000 random grids".into())
}

fn performance() -> Outcome {
    let spec = random_scene(9, 640, 480).map_err(|e| e.to_string())?;
    let t = render(&spec).map_err(|e| e.to_string())?;
    let pred = perturb(&t, &Noise { sigma: 0.01, fatten: 2 }, 9).map_err(|e| e.to_string())?;
    let cfg = EvalConfig::default();
    let run = || evaluate_grids("perf", &pred, &t.depth, Some(&t.contours), &cfg).map(|_| ());
    run().map_err(|e| e.to_string())?;
    let mut worst = Duration::ZERO;
    for _ in 0..3 {
        let start = Instant::now();
        run().map_err(|e| e.to_string())?;
        worst = worst.max(start.elapsed());
    }
    ensure(worst < Duration::from_millis(200), || format!("slowest of 3 runs took {worst:?}"))?;
    Ok(format!("640x480 with 4 threshold pairs, slowest of 3 runs {:.1} ms", worst.as_secs_f64() * 1e3))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("report fixture", Duration::from_secs(1), report_fixture),
        ("oracle identity", Duration::from_secs(5), oracle_identity),
        ("chamfer calibration", Duration::from_secs(5), chamfer_calibration),
        ("EDT exactness", Duration::from_secs(10), edt_exactness),
        ("gradient verification", Duration::from_secs(30), gradient_verification),
        ("consensus consistency", Duration::from_secs(30), consensus_consistency),
        ("Canny monotonicity", Duration::from_secs(30), canny_monotonicity),
        ("metric invariants", Duration::from_secs(20), metric_invariants),
        ("performance", Duration::from_secs(30), performance),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed <= *budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:?}, budget {budget:?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({:.2} s): {detail}", i + 1, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({:.2} s): {why}", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
