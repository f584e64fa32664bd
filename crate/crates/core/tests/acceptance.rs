//! Acceptance criteria 1–9. Each test prints one PASS/FAIL line with the
//! measured quantities, then asserts.

mod common;

use std::fs;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use benchsem::diagnostics::{
    ave, benchmark_report, block_vifs, composite_reliability, cronbach_alpha, dimensional_diversity, htmt,
    htmt_matrix, vif, HtmtMatrix,
};
use benchsem::estimator::{fit, EstimatorConfig};
use benchsem::model::{validate, ConstructSpec, MissingPolicy, ScoreMatrix, Taxonomy};
use benchsem::numerics::{pearson, spearman};
use benchsem::pruner::{prune, PruneConfig, Termination};
use benchsem::rank_analysis::composite_score;
use benchsem::simulator::{generate, noise_sd_for_correlation, plant_collinearity, SimConstruct, SimPath, SimSpec};

use common::{corr, dataset, recovery_spec, run, schema_errors, with_correlation};

fn verdict(n: u8, title: &str, checks: &[(&str, bool, String)]) {
    let ok = checks.iter().all(|(_, pass, _)| *pass);
    println!("[{}] criterion {n}: {title}", if ok { "PASS" } else { "FAIL" });
    for (name, pass, detail) in checks {
        println!("    {} {name}: {detail}", if *pass { "ok  " } else { "FAIL" });
    }
    assert!(ok, "criterion {n} failed");
}

fn two_constructs(a: &[&str], b: &[&str]) -> Taxonomy {
    Taxonomy::new(
        vec![ConstructSpec::first_order("A", a), ConstructSpec::first_order("B", b)],
        vec![("A".into(), "B".into())],
        vec![],
    )
    .unwrap()
}

#[test]
fn criterion_1_d_div_anchor() {
    let m = HtmtMatrix::from_values(vec!["A".into(), "B".into()], vec![vec![None, Some(0.863)], vec![Some(0.863), None]]);
    let start = Instant::now();
    let d = dimensional_diversity(&m).unwrap();
    let elapsed = start.elapsed();
    verdict(
        1,
        "D_div from max HTMT 0.863",
        &[
            ("value", (d - 0.5794).abs() <= 0.0005, format!("{d:.6} vs 0.5794 ± 0.0005")),
            ("runtime", elapsed.as_secs_f64() < 1e-3, format!("{elapsed:?} < 1 ms")),
        ],
    );
}

#[test]
fn criterion_2_reliability_oracles() {
    let mut checks = Vec::new();
    for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let x = if r < 1.0 {
            let c = corr(4, |i, j| match (i, j) {
                (1, 0) => r,
                (3, 2) => 0.5,
                _ => 0.1,
            });
            with_correlation(&c, 4)
        } else {
            let base = with_correlation(&corr(3, |_, _| 0.1), 4);
            DMatrix::from_fn(base.nrows(), 4, |i, j| base[(i, j.saturating_sub(1))])
        };
        let data = dataset(&["a1", "a2", "b1", "b2"], &x, &two_constructs(&["a1", "a2"], &["b1", "b2"]));
        let alpha = cronbach_alpha(&data, "A").unwrap();
        let oracle = 2.0 * r / (1.0 + r);
        checks.push(("alpha k=2", (alpha - oracle).abs() <= 1e-9, format!("r={r}: {alpha:.12} vs {oracle:.12}")));
    }
    let cr = composite_reliability(&[0.8, 0.8]);
    // 0.78049 is 32/41 printed to five digits; the rounding alone is 2.2e-6
    let exact = 2.56 / 3.28;
    checks.push(("CR (0.8, 0.8) closed form", (cr - exact).abs() <= 1e-6, format!("{cr:.10} vs 32/41 = {exact:.10} ± 1e-6")));
    checks.push(("CR (0.8, 0.8) printed value", (cr - 0.78049).abs() <= 5e-6, format!("{cr:.8} vs 0.78049 at its printed precision")));
    let a = ave(&[0.8, 0.6]);
    checks.push(("AVE (0.8, 0.6)", (a - 0.5).abs() <= 1e-9, format!("{a:.12} vs 0.5")));
    verdict(2, "closed-form reliability oracles", &checks);
}

#[test]
fn criterion_3_vif_oracle() {
    let mut checks = Vec::new();
    for r in [0.0, 0.5, 0.9] {
        let c = corr(4, |i, j| match (i, j) {
            (1, 0) => r,
            (3, 2) => 0.5,
            _ => 0.2,
        });
        let data = dataset(&["a1", "a2", "b1", "b2"], &with_correlation(&c, 4), &two_constructs(&["a1", "a2"], &["b1", "b2"]));
        let sample_r = pearson(data.column("a1").unwrap(), data.column("a2").unwrap()).unwrap();
        let oracle = 1.0 / (1.0 - sample_r * sample_r);
        let v = vif(&data, "A").unwrap();
        let ok = v.iter().all(|(_, x)| (x - oracle).abs() <= 1e-6);
        checks.push(("two-indicator VIF", ok, format!("r={r}: ({:.9}, {:.9}) vs {oracle:.9}", v[0].1, v[1].1)));
    }
    let sim = generate(&recovery_spec(300, 3)).unwrap();
    let dup = plant_collinearity(&sim.scores, "Perception_2", "Perception_1", 0.0, 1).unwrap();
    let t = Taxonomy::new(
        vec![
            ConstructSpec::first_order("A", &["Perception_1", "Perception_2"]),
            ConstructSpec::first_order("B", &["Reasoning_1", "Reasoning_2"]),
        ],
        vec![("A".into(), "B".into())],
        vec![],
    )
    .unwrap();
    let data = validate(&dup, &t, MissingPolicy::Listwise).unwrap();
    let v = vif(&data, "A").unwrap();
    checks.push((
        "planted duplicate",
        v.iter().all(|(_, x)| x.is_infinite()),
        format!("({}, {}) are the infinity sentinel", v[0].1, v[1].1),
    ));
    verdict(3, "VIF oracle", &checks);
}

#[test]
fn criterion_4_estimator_recovery() {
    let start = Instant::now();
    let spec = recovery_spec(2000, 2024);
    let sim = generate(&spec).unwrap();
    let taxonomy = spec.taxonomy().unwrap();
    let data = validate(&sim.scores, &taxonomy, MissingPolicy::Listwise).unwrap();
    let fitted = fit(&data, &EstimatorConfig::default()).unwrap();
    let elapsed = start.elapsed();

    let mut worst_loading = ("", 0.0, 0.0);
    for l in &sim.truth.loadings {
        let got = fitted.loading(&l.indicator).unwrap();
        if (got - l.loading).abs() > (worst_loading.1 - worst_loading.2 as f64).abs() {
            worst_loading = (l.indicator.as_str(), got, l.loading);
        }
    }
    let mut worst_path = (String::new(), 0.0, 0.0);
    for p in &spec.paths {
        let got = fitted.path(&p.source, &p.target).unwrap();
        if (got - p.coefficient).abs() > (worst_path.1 - worst_path.2 as f64).abs() {
            worst_path = (format!("{}->{}", p.source, p.target), got, p.coefficient);
        }
    }
    let loading_dev = (worst_loading.1 - worst_loading.2).abs();
    let path_dev = (worst_path.1 - worst_path.2).abs();
    verdict(
        4,
        "recovery of planted loadings and paths (N=2000, loadings 0.9/0.8/0.7, β 0.6/0.5/0.4)",
        &[
            (
                "loadings within ±0.05",
                loading_dev <= 0.05,
                format!("worst {}: {:.4} vs planted {:.2} (|Δ| = {loading_dev:.4})", worst_loading.0, worst_loading.1, worst_loading.2),
            ),
            (
                "paths within ±0.07",
                path_dev <= 0.07,
                format!("worst {}: {:.4} vs planted {:.2} (|Δ| = {path_dev:.4})", worst_path.0, worst_path.1, worst_path.2),
            ),
            ("iterations ≤ 50", fitted.converged && fitted.iterations <= 50, format!("{} (converged={})", fitted.iterations, fitted.converged)),
            ("runtime < 10 s", elapsed.as_secs_f64() < 10.0, format!("{elapsed:?}")),
        ],
    );
}

/// Random three-construct fixture with one planted near-duplicate.
fn random_prune_fixture(seed: u64) -> (ScoreMatrix, Taxonomy, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constructs: Vec<SimConstruct> = ["A", "B", "C"]
        .iter()
        .map(|id| SimConstruct {
            id: id.to_string(),
            loadings: (0..rng.random_range(2..6)).map(|_| rng.random_range(0.4..0.95)).collect(),
            indicator_ids: None,
        })
        .collect();
    let paths = vec![
        SimPath { source: "A".into(), target: "C".into(), coefficient: rng.random_range(0.2..0.6) },
        SimPath { source: "B".into(), target: "C".into(), coefficient: rng.random_range(0.2..0.6) },
    ];
    let spec = SimSpec { constructs, paths, n_models: 150, seed };
    let sim = generate(&spec).unwrap();
    let t = spec.taxonomy().unwrap();
    let ids = t.task_indicators();
    let a = &t.constructs()[0].indicators;
    let scores = plant_collinearity(&sim.scores, &a[1], &a[0], noise_sd_for_correlation(0.98), seed).unwrap();
    (scores, t, ids.len())
}

#[test]
fn criterion_5_pruning_behaviour() {
    let mut checks = Vec::new();

    // planted near-duplicate at r = 0.98 in an otherwise clean benchmark
    let spec = SimSpec {
        constructs: ["A", "B", "C"]
            .iter()
            .map(|id| SimConstruct { id: id.to_string(), loadings: vec![0.9, 0.85, 0.85], indicator_ids: None })
            .collect(),
        paths: vec![
            SimPath { source: "A".into(), target: "C".into(), coefficient: 0.5 },
            SimPath { source: "B".into(), target: "C".into(), coefficient: 0.4 },
        ],
        n_models: 500,
        seed: 77,
    };
    let sim = generate(&spec).unwrap();
    let t = spec.taxonomy().unwrap();
    let planted = plant_collinearity(&sim.scores, "B_3", "B_2", noise_sd_for_correlation(0.98), 78).unwrap();
    let data = validate(&planted, &t, MissingPolicy::Listwise).unwrap();
    let block: Vec<String> = t.construct("B").unwrap().indicators.clone();
    let vifs = block_vifs(&data.block(&block).unwrap());
    let oracle_first = if vifs[1] >= vifs[2] { "B_2" } else { "B_3" };
    let trace = prune(&data, &PruneConfig::default()).unwrap();
    let first = trace.steps.first().map(|s| s.indicator.as_str()).unwrap_or("<none>");
    checks.push((
        "step 1 removes the planted pair member ranked first by an independent VIF oracle",
        first == oracle_first,
        format!("removed {first}; oracle VIFs B_2 = {:.2}, B_3 = {:.2}", vifs[1], vifs[2]),
    ));
    checks.push(("exactly one removal", trace.steps.len() == 1, format!("{} steps", trace.steps.len())));
    let final_vif_max = trace
        .final_report
        .per_construct
        .iter()
        .flat_map(|c| &c.indicators)
        .filter_map(|i| i.vif)
        .fold(0.0, f64::max);
    let final_loading_min = trace
        .final_report
        .per_construct
        .iter()
        .flat_map(|c| &c.indicators)
        .map(|i| i.loading)
        .fold(f64::INFINITY, f64::min);
    checks.push((
        "terminal thresholds",
        trace.termination == Termination::Clean && final_vif_max <= 5.0 && final_loading_min >= 0.75,
        format!("max VIF {final_vif_max:.3} ≤ 5, min loading {final_loading_min:.3} ≥ 0.75"),
    ));

    // keep-2: a two-task construct whose tasks are unrelated noise
    let noisy = plant_collinearity(&sim.scores, "A_1", "C_1", 40.0, 1).unwrap();
    let noisy = plant_collinearity(&noisy, "A_2", "C_2", 40.0, 2).unwrap();
    let t2 = Taxonomy::new(
        vec![
            ConstructSpec::first_order("A", &["A_1", "A_2"]),
            t.construct("B").unwrap().clone(),
            t.construct("C").unwrap().clone(),
        ],
        t.paths().to_vec(),
        vec![],
    )
    .unwrap();
    let data2 = validate(&noisy, &t2, MissingPolicy::Listwise).unwrap();
    let trace2 = prune(&data2, &PruneConfig::default()).unwrap();
    checks.push((
        "keep-2 fixture",
        trace2.steps.is_empty() && trace2.fallback_notes.iter().any(|n| n.construct == "A"),
        format!("{} removals, fallback notes for {:?}", trace2.steps.len(), trace2.fallback_notes.iter().map(|n| &n.construct).collect::<Vec<_>>()),
    ));

    let mut worst = (0u64, 0usize, 0usize);
    let mut all_ok = true;
    for seed in 0..100 {
        let (scores, t, n_ind) = random_prune_fixture(seed);
        let data = validate(&scores, &t, MissingPolicy::Listwise).unwrap();
        let steps = prune(&data, &PruneConfig::default()).map(|tr| tr.steps.len()).unwrap_or(0);
        if steps > n_ind {
            all_ok = false;
        }
        if steps > worst.1 {
            worst = (seed, steps, n_ind);
        }
    }
    checks.push((
        "termination on 100 random fixtures",
        all_ok,
        format!("most steps: {} of {} indicators (seed {})", worst.1, worst.2, worst.0),
    ));
    verdict(5, "pruning behaviour", &checks);
}

#[test]
fn criterion_6_htmt_properties() {
    let two_by_two = |wa: f64, wb: f64, between: f64| {
        let c = corr(4, |i, j| match (i, j) {
            (1, 0) => wa,
            (3, 2) => wb,
            _ => between,
        });
        dataset(&["a1", "a2", "b1", "b2"], &with_correlation(&c, 4), &two_constructs(&["a1", "a2"], &["b1", "b2"]))
    };
    let eq = htmt(&two_by_two(0.45, 0.45, 0.45), "A", "B").unwrap();
    let zero = htmt(&two_by_two(0.6, 0.5, 0.0), "A", "B").unwrap();

    let mut asymmetric = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [rng.random_range(2..5), rng.random_range(2..5), rng.random_range(2..5)];
        let p: usize = sizes.iter().sum();
        let f = DMatrix::from_fn(80, 3, |_, _| rng.random::<f64>());
        let owner: Vec<usize> = (0..3).flat_map(|k| std::iter::repeat_n(k, sizes[k])).collect();
        let x = DMatrix::from_fn(80, p, |i, j| f[(i, owner[j])] + 0.7 * rng.random::<f64>());
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let mut at = 0;
        let constructs = (0..3)
            .map(|k| {
                let ids: Vec<&str> = names[at..at + sizes[k]].iter().map(|s| s.as_str()).collect();
                at += sizes[k];
                ConstructSpec::first_order(&format!("K{k}"), &ids)
            })
            .collect();
        let t = Taxonomy::new(constructs, vec![("K0".into(), "K2".into()), ("K1".into(), "K2".into())], vec![]).unwrap();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let m = htmt_matrix(&dataset(&refs, &x, &t)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if m.values[i][j] != m.values[j][i] {
                    asymmetric += 1;
                }
            }
        }
    }
    verdict(
        6,
        "HTMT properties",
        &[
            ("equicorrelated", (eq - 1.0).abs() <= 1e-9, format!("{eq:.12}")),
            ("zero cross-block", zero.abs() <= 1e-9, format!("{zero:.3e}")),
            ("symmetry on 50 random fixtures", asymmetric == 0, format!("{asymmetric} asymmetric cells (exact comparison)")),
        ],
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, a, out);
            let j = if k % 2 == 0 { i } else { 0 };
            a.swap(j, k - 1);
        }
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}

#[test]
fn criterion_7_rank_analysis() {
    let closed_form = |perm: &[usize]| {
        let n = perm.len() as f64;
        let d2: f64 = perm.iter().enumerate().map(|(i, &p)| (i as f64 - p as f64).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 3..=10usize {
        let perms = if n <= 5 {
            permutations(n)
        } else {
            (0..300)
                .map(|_| {
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect()
        };
        for perm in perms {
            // distinct, non-integer scores carrying the permutation's order
            let x: Vec<f64> = (0..n).map(|i| (i as f64).powf(1.3) - 2.0).collect();
            let y: Vec<f64> = perm.iter().map(|&p| (p as f64) * 0.7 + 0.1).collect();
            worst = worst.max((spearman(&x, &y).unwrap() - closed_form(&perm)).abs());
            count += 1;
        }
    }

    let spec = recovery_spec(2000, 2024);
    let sim = generate(&spec).unwrap();
    let data = validate(&sim.scores, &spec.taxonomy().unwrap(), MissingPolicy::Listwise).unwrap();
    let fitted = fit(&data, &EstimatorConfig::default()).unwrap();
    let composite = composite_score(&fitted, &data).unwrap();
    let r = pearson(&composite.values, &sim.truth.latent("Overall").unwrap()).unwrap();
    verdict(
        7,
        "rank analysis",
        &[
            ("spearman closed form", worst <= 1e-12, format!("{count} permutations (n = 3..10, exhaustive n ≤ 5), max |Δ| = {worst:.2e}")),
            ("composite vs planted top-level construct", r >= 0.95, format!("r = {r:.4} (threshold 0.95)")),
        ],
    );
}

#[test]
fn criterion_8_determinism_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.json"), serde_json::to_string(&recovery_spec(250, 8)).unwrap()).unwrap();
    assert!(run(&["simulate", "--spec", "spec.json", "-o", "scores.csv"], d).status.success());
    let taxonomy = recovery_spec(250, 8).taxonomy().unwrap();
    fs::write(d.join("taxonomy.json"), serde_json::to_string(&taxonomy.to_json_value()).unwrap()).unwrap();

    let mut checks = Vec::new();
    for (cmd, schema) in [("analyze", "analyze_report"), ("prune", "prune_trace")] {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let out_name = format!("{cmd}_{k}.json");
            let out = run(&[cmd, "--scores", "scores.csv", "--taxonomy", "taxonomy.json", "-o", &out_name], d);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            outputs.push(fs::read(d.join(&out_name)).unwrap());
        }
        checks.push((cmd, outputs[0] == outputs[1], format!("two runs, {} bytes, byte-identical = {}", outputs[0].len(), outputs[0] == outputs[1])));
        let value: Value = serde_json::from_slice(&outputs[0]).unwrap();
        let errors = schema_errors(schema, &value);
        checks.push((schema, errors.is_empty(), format!("{} schema violations", errors.len())));
    }
    let refined0 = fs::read(d.join("prune_0.taxonomy.json")).unwrap();
    let refined1 = fs::read(d.join("prune_1.taxonomy.json")).unwrap();
    checks.push(("refined taxonomy", refined0 == refined1, format!("byte-identical = {}", refined0 == refined1)));
    verdict(8, "determinism and serialization", &checks);
}

#[test]
fn criterion_9_scale_invariance() {
    let spec = recovery_spec(300, 31);
    let sim = generate(&spec).unwrap();
    let t = spec.taxonomy().unwrap();
    let summary = |scores: &ScoreMatrix| -> Vec<f64> {
        let data = validate(scores, &t, MissingPolicy::Listwise).unwrap();
        let fitted = fit(&data, &EstimatorConfig::default()).unwrap();
        let rep = benchmark_report(&fitted, &data, None).unwrap();
        let mut v: Vec<f64> = fitted.weights.weights.iter().flatten().copied().collect();
        v.extend(fitted.outer.iter().map(|o| o.loading));
        v.extend(rep.per_construct.iter().flat_map(|c| c.indicators.iter().filter_map(|i| i.vif)));
        v.extend(rep.htmt.values.iter().flatten().flatten());
        v.extend([rep.d_div.unwrap(), rep.tc.unwrap(), rep.d_valid.unwrap(), rep.overall.unwrap(), rep.srmr]);
        v.extend(rep.per_construct.iter().flat_map(|c| [c.cronbach_alpha.unwrap_or(0.0), c.composite_reliability, c.ave]));
        v.extend(fitted.paths.iter().map(|p| p.coefficient));
        v.extend(composite_score(&fitted, &data).unwrap().values);
        v
    };
    let base = summary(&sim.scores);
    let mut worst = (String::new(), 0.0f64);
    for (j, id) in sim.scores.indicator_ids().iter().enumerate() {
        let mut scaled = sim.scores.clone();
        let col: Vec<f64> = scaled.column(j).iter().map(|v| v.unwrap() * 7.3).collect();
        scaled.set_column(j, &col).unwrap();
        let dev = summary(&scaled).iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dev >= worst.1 {
            worst = (id.clone(), dev);
        }
    }
    verdict(
        9,
        "scale invariance (×7.3 on each raw column in turn)",
        &[(
            "weights, loadings, VIF, HTMT, benchmark metrics, composite",
            worst.1 <= 1e-8,
            format!("{} values per fit, max |Δ| = {:.2e} (column {})", base.len(), worst.1, worst.0),
        )],
    );
}
