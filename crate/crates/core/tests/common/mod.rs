//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};

use benchsem::model::{validate, MissingPolicy, ScoreMatrix, Taxonomy, ValidatedDataset};
use benchsem::simulator::{GroundTruth, SimConstruct, SimPath, SimSpec};

/// Sylvester Hadamard columns without the constant one: centered and
/// mutually orthogonal.
pub fn centered_orthogonal(k: u32) -> DMatrix<f64> {
    let n = 1usize << k;
    DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 }).remove_column(0)
}

/// Data whose sample correlation matrix is exactly `target`.
pub fn with_correlation(target: &DMatrix<f64>, k: u32) -> DMatrix<f64> {
    let basis = centered_orthogonal(k).columns(0, target.nrows()).into_owned();
    basis * target.clone().cholesky().expect("positive definite").l().transpose()
}

pub fn corr(p: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => f(i, j),
        std::cmp::Ordering::Less => f(j, i),
    })
}

pub fn dataset(ids: &[&str], values: &DMatrix<f64>, taxonomy: &Taxonomy) -> ValidatedDataset {
    let models = (0..values.nrows()).map(|i| format!("m{i:03}")).collect();
    let ids = ids.iter().map(|s| s.to_string()).collect();
    let scores = ScoreMatrix::from_dense(models, ids, values).unwrap();
    validate(&scores, taxonomy, MissingPolicy::Listwise).unwrap()
}

/// Three first-order capability constructs feeding one overall construct,
/// every block planted at (0.9, 0.8, 0.7).
pub fn recovery_spec(n_models: usize, seed: u64) -> SimSpec {
    let c = |id: &str| SimConstruct {
        id: id.into(),
        loadings: vec![0.9, 0.8, 0.7],
        indicator_ids: None,
    };
    let p = |s: &str, b: f64| SimPath {
        source: s.into(),
        target: "Overall".into(),
        coefficient: b,
    };
    SimSpec {
        constructs: vec![c("Perception"), c("Reasoning"), c("Knowledge"), c("Overall")],
        paths: vec![p("Perception", 0.6), p("Reasoning", 0.5), p("Knowledge", 0.4)],
        n_models,
        seed,
    }
}

/// Population PLS fit (centroid scheme, correlation-mode weights) computed
/// from the planted indicator correlation matrix alone.
pub struct PopulationFit {
    pub loadings: Vec<(String, f64)>,
    pub paths: Vec<(String, String, f64)>,
}

pub fn population_pls(truth: &GroundTruth, taxonomy: &Taxonomy) -> PopulationFit {
    let ind: Vec<(usize, String, f64)> = truth
        .loadings
        .iter()
        .map(|l| (truth.construct_ids.iter().position(|c| *c == l.construct).unwrap(), l.indicator.clone(), l.loading))
        .collect();
    let p = ind.len();
    let k = truth.construct_ids.len();
    let sigma = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            ind[i].2 * ind[j].2 * truth.construct_correlation[(ind[i].0, ind[j].0)]
        }
    });
    let blocks: Vec<Vec<usize>> = (0..k).map(|c| (0..p).filter(|&i| ind[i].0 == c).collect()).collect();
    let block = |c: usize| blocks[c].iter().copied();
    let mut adj = vec![vec![false; k]; k];
    for path in &truth.paths {
        let s = truth.construct_ids.iter().position(|c| *c == path.source).unwrap();
        let t = truth.construct_ids.iter().position(|c| *c == path.target).unwrap();
        adj[s][t] = true;
        adj[t][s] = true;
    }
    // full-length weight vectors, zero outside the block
    let mut w: Vec<DVector<f64>> = (0..k)
        .map(|c| {
            let mut v = DVector::zeros(p);
            let n = block(c).count() as f64;
            block(c).for_each(|i| v[i] = 1.0 / n.sqrt());
            v
        })
        .collect();
    let standardized = |w: &[DVector<f64>]| -> Vec<DVector<f64>> {
        w.iter().map(|v| v / (v.transpose() * &sigma * v)[(0, 0)].sqrt()).collect()
    };
    for _ in 0..1000 {
        let s = standardized(&w);
        let next: Vec<DVector<f64>> = (0..k)
            .map(|c| {
                let mut proxy = DVector::zeros(p);
                for l in (0..k).filter(|&l| adj[c][l]) {
                    let r = (s[c].transpose() * &sigma * &s[l])[(0, 0)];
                    proxy += if r < 0.0 { -&s[l] } else { s[l].clone() };
                }
                let cov = &sigma * proxy;
                let mut v = DVector::zeros(p);
                block(c).for_each(|i| v[i] = cov[i]);
                v.normalize()
            })
            .collect();
        let delta = (0..k).map(|c| (&next[c] - &w[c]).amax()).fold(0.0, f64::max);
        w = next;
        if delta < 1e-13 {
            break;
        }
    }
    let s = standardized(&w);
    let mut loadings = Vec::new();
    for c in 0..k {
        let mut lam: Vec<(usize, f64)> = block(c).map(|i| (i, (&sigma * &s[c])[i])).collect();
        if lam.iter().map(|(_, l)| l).sum::<f64>() < 0.0 {
            lam.iter_mut().for_each(|(_, l)| *l = -*l);
        }
        loadings.extend(lam.into_iter().map(|(i, l)| (ind[i].1.clone(), l)));
    }
    let phi = DMatrix::from_fn(k, k, |a, b| (s[a].transpose() * &sigma * &s[b])[(0, 0)]);
    let mut paths = Vec::new();
    for (t, target) in truth.construct_ids.iter().enumerate() {
        let preds: Vec<usize> = taxonomy
            .predecessors(taxonomy.construct_index(target).unwrap())
            .into_iter()
            .map(|i| truth.construct_ids.iter().position(|c| *c == taxonomy.constructs()[i].id).unwrap())
            .collect();
        if preds.is_empty() {
            continue;
        }
        let rpp = DMatrix::from_fn(preds.len(), preds.len(), |a, b| phi[(preds[a], preds[b])]);
        let rpt = DVector::from_fn(preds.len(), |a, _| phi[(preds[a], t)]);
        let beta = rpp.try_inverse().unwrap() * rpt;
        for (a, &src) in preds.iter().enumerate() {
            paths.push((truth.construct_ids[src].clone(), target.clone(), beta[a]));
        }
    }
    PopulationFit { loadings, paths }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_benchsem")
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin()).args(args).current_dir(cwd).output().expect("binary runs")
}

pub fn schema(name: &str) -> serde_json::Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Schema violations of `instance`, rendered; empty when valid.
pub fn schema_errors(name: &str, instance: &serde_json::Value) -> Vec<String> {
    let validator = jsonschema::validator_for(&schema(name)).expect("schema compiles");
    validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}
