//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` with its own harness.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablemap_core::cloud::StabilityClass;
use stablemap_core::labelling::stability_label;
use stablemap_core::metrics::{
    auc, binarize, dense_weights, miou, optimal_threshold_gmean, roc_curve, DensityEstimator, WeightParams,
};
use stablemap_core::pipeline::{run_pipeline, write_scene, PipelineOutput};
use stablemap_core::synth::{generate_scene, SceneSpec, SessionBundle};
use stablemap_core::tiling::{accumulate_votes, resolve_votes, tile_submaps, TilingParams, VoteAccumulator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn label_fixed_points() -> Outcome {
    let a = stability_label(&[0.626], 0.5).unwrap();
    let b = stability_label(&[0.89], 0.5).unwrap();
    let runs = 1000;
    let start = Instant::now();
    let mut sink = 0.0;
    for i in 0..runs {
        sink += stability_label(&[0.626 + i as f64 * 1e-9], 0.5).unwrap();
    }
    let per_call = start.elapsed() / runs;
    let pass = (a - 0.269).abs() <= 0.001 && (b - 0.3593).abs() <= 0.001 && per_call < Duration::from_millis(1) && sink > 0.0;
    check(pass, format!("label(0.626 m) = {a:.4}, label(0.89 m) = {b:.4}, {per_call:?} per call"))
}

/// The 40 x 30 m five-session scene: 3 walls, 3 poles, 2 trees; 5 cars and
/// one ghost trail; 1 cm noise.
fn scene_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        extent: [40.0, 30.0],
        sessions: 5,
        walls: 3,
        poles: 3,
        trees: 2,
        cars: 5,
        ghost_trails: 1,
        sensor_noise_sigma: 0.01,
        seed,
        ..SceneSpec::default()
    }
}

struct SceneRun {
    bundle: SessionBundle,
    output: PipelineOutput,
    elapsed: Duration,
}

fn run_scene(seed: u64, dir: &Path) -> SceneRun {
    let start = Instant::now();
    let bundle = generate_scene(&scene_spec(seed)).unwrap();
    let manifest = write_scene(&bundle, dir.join("scene")).unwrap();
    let output = run_pipeline(&manifest, dir.join("run")).unwrap();
    SceneRun { bundle, output, elapsed: start.elapsed() }
}

fn labelling_quality(runs: &[SceneRun]) -> Outcome {
    let mut worst = 1.0f64;
    let mut slowest = Duration::ZERO;
    let mut rows = 0;
    for run in runs {
        for map in &run.output.labelled {
            let a = auc(&roc_curve(&map.labels, map.ground_truth().unwrap()).unwrap());
            worst = worst.min(a);
            rows += 1;
        }
        slowest = slowest.max(run.elapsed);
    }
    let pass = rows == 5 * runs.len() && worst >= 0.98 && slowest < Duration::from_secs(60);
    check(pass, format!("{rows} sessions over {} scenes, min AUC {worst:.4}, slowest scene {slowest:.1?}", runs.len()))
}

fn registration_recovery(runs: &[SceneRun]) -> Outcome {
    let mut worst_angle = 0.0f64;
    let mut worst_shift = 0.0f64;
    let mut min_static = 1.0f64;
    let mut monotone = true;
    for run in runs {
        for (k, record) in run.output.registration.iter().enumerate() {
            let truth = run.output.labelled[k].ground_truth().unwrap();
            let stable = truth.iter().filter(|c| !c.is_dynamic()).count() as f64 / truth.len() as f64;
            min_static = min_static.min(stable);
            let Some(icp) = &record.icp else { continue };
            let (angle, shift) = record.transform.error_to(&run.bundle.true_alignment(k, 0));
            worst_angle = worst_angle.max(angle.to_degrees());
            worst_shift = worst_shift.max(shift);
            monotone &= icp.history.windows(2).all(|w| w[1] <= w[0]);
        }
    }
    let pass = worst_angle <= 0.5 && worst_shift <= 0.02 && monotone && min_static >= 0.7;
    check(
        pass,
        format!("max error {worst_angle:.4} deg / {:.2} cm, residuals monotone: {monotone}, min static share {min_static:.2}", worst_shift * 100.0),
    )
}

fn weighting_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = rng.random_range(2..400);
        let labels: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0f64).powf(rng.random_range(0.2..5.0))).collect();
        let density_estimator = if i % 2 == 0 {
            DensityEstimator::Histogram { bins: rng.random_range(1..=200) }
        } else {
            DensityEstimator::Kernel { bandwidth: rng.random_range(0.01..0.5) }
        };
        let params = WeightParams { alpha: rng.random_range(0.0..5.0), density_estimator, ..WeightParams::default() };
        let w = dense_weights(&labels, &params).unwrap();
        worst = worst.max((w.iter().sum::<f64>() / n as f64 - 1.0).abs());
    }
    let labels: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
    let zero = dense_weights(&labels, &WeightParams { alpha: 0.0, ..WeightParams::default() }).unwrap();
    let all_ones = zero.iter().all(|&w| w == 1.0);

    let mut mixture: Vec<f64> = (0..900).map(|_| rng.random_range(0.0..0.05)).collect();
    mixture.extend((0..100).map(|_| rng.random_range(0.95..1.0)));
    let w = dense_weights(&mixture, &WeightParams::default()).unwrap();
    let common = w[..900].iter().sum::<f64>() / 900.0;
    let rare = w[900..].iter().sum::<f64>() / 100.0;

    let pass = worst <= 1e-9 && all_ones && rare > common;
    check(pass, format!("max |mean - 1| {worst:.1e} over 1000 sets, alpha=0 all ones: {all_ones}, rare {rare:.3} > common {common:.3}"))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let instances = 500;
    let mut mismatches = 0;
    for _ in 0..instances {
        let (scores, truth) = common::random_instance(&mut rng, 50);
        let curve = roc_curve(&scores, &truth).unwrap();
        let ours: Vec<(f64, u64, u64)> = curve.points[1..].iter().map(|p| (p.threshold, p.true_positives, p.false_positives)).collect();
        let best = optimal_threshold_gmean(&curve);
        let pred = binarize(&scores, rng.random_range(0.0..1.0));
        let agree = ours == common::brute_roc(&scores, &truth)
            && auc(&curve) == common::mann_whitney(&scores, &truth)
            && (best.threshold, best.gmean) == common::brute_gmean(&scores, &truth)
            && miou(&pred, &truth).unwrap() == common::set_miou(&pred, &truth);
        mismatches += usize::from(!agree);
    }
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
    let truth: Vec<StabilityClass> = (0..10_000)
        .map(|_| if rng.random_bool(0.5) { StabilityClass::Dynamic } else { StabilityClass::Stable })
        .collect();
    let random_auc = auc(&roc_curve(&scores, &truth).unwrap());
    let pass = mismatches == 0 && (random_auc - 0.5).abs() <= 0.02;
    check(pass, format!("{mismatches}/{instances} instances differ from brute force, random-score AUC {random_auc:.4}"))
}

fn tiling_voting(runs: &[SceneRun]) -> Outcome {
    let params = TilingParams::default();
    let mut min_coverage = 1.0f64;
    let mut sizes_ok = true;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for run in runs {
        let map = &run.output.labelled[0];
        let submaps = tile_submaps(map, &params).unwrap();
        sizes_ok &= submaps.iter().all(|s| s.points.len() == 4096 && s.source_indices.len() == 4096);
        sizes_ok &= run.output.batch.submaps.iter().all(|s| s.points.len() == 4096);

        let preds: Vec<Vec<f64>> = submaps.iter().map(|s| (0..s.points.len()).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let mut acc = VoteAccumulator::new(map.len());
        for (s, p) in submaps.iter().zip(&preds) {
            acc = accumulate_votes(acc, s, p).unwrap();
        }
        let resolved = resolve_votes(&acc, map.len()).unwrap();
        min_coverage = min_coverage.min(resolved.covered_fraction());

        // brute force: per submap, average duplicates of a point; then average over submaps
        for i in 0..map.len() {
            let mut votes = Vec::new();
            for (s, p) in submaps.iter().zip(&preds) {
                let mine: Vec<f64> = s.source_indices.iter().zip(p).filter(|(j, _)| **j == i).map(|(_, v)| *v).collect();
                if !mine.is_empty() {
                    votes.push(mine.iter().sum::<f64>() / mine.len() as f64);
                }
            }
            let expected = (!votes.is_empty()).then(|| votes.iter().sum::<f64>() / votes.len() as f64);
            match (expected, resolved.scores[i]) {
                (Some(e), Some(g)) => worst = worst.max((e - g).abs()),
                (None, None) => {}
                _ => worst = f64::INFINITY,
            }
        }
    }
    let pass = min_coverage >= 0.99 && sizes_ok && worst <= 1e-12;
    check(pass, format!("min coverage {:.2}%, all submaps 4096 points: {sizes_ok}, max vote error {worst:.1e}", min_coverage * 100.0))
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism(dir: &Path, first: &Path) -> Outcome {
    let again = run_scene(0, dir);
    let a = tree(&first.join("run"));
    let b = tree(&dir.join("run"));
    let scenes_equal = tree(&first.join("scene")) == tree(&dir.join("scene"));
    let pass = !a.is_empty() && a == b && scenes_equal && again.output.report.is_some();
    check(pass, format!("{} output files compared byte for byte, scene files equal: {scenes_equal}", a.len()))
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = (0..3).map(|s| root.path().join(format!("seed{s}"))).collect();
    let runs: Vec<SceneRun> = dirs.iter().enumerate().map(|(s, d)| run_scene(s as u64, d)).collect();

    let results = [
        ("label fixed points", label_fixed_points()),
        ("auto-labelling AUC on 5-session scenes", labelling_quality(&runs)),
        ("registration recovery", registration_recovery(&runs)),
        ("weighting suite", weighting_suite()),
        ("metric oracles", metric_oracles()),
        ("tiling and voting", tiling_voting(&runs)),
        ("end-to-end determinism", determinism(&root.path().join("rerun"), &dirs[0])),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        println!("{} {name}: {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
