//! Synthetic score tables from a planted linear latent structure.
//!
//! Exogenous constructs are independent standard normals. An endogenous
//! construct is `Σ β·predecessor + √(1 − R²)·ζ`, so every construct has unit
//! population variance. Indicator `x = λ·ξ + √(1 − λ²)·e`. All residuals are
//! Gaussian and drawn from a seeded ChaCha8 stream in a fixed order:
//! construct columns in topological order, then indicator columns in
//! declaration order.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConstructSpec, ScoreMatrix, Taxonomy};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConstruct {
    pub id: String,
    /// Planted loading per indicator; empty for a construct without
    /// observed indicators.
    #[serde(default)]
    pub loadings: Vec<f64>,
    /// Defaults to `<id>_1`, `<id>_2`, ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimPath {
    pub source: String,
    pub target: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub constructs: Vec<SimConstruct>,
    #[serde(default)]
    pub paths: Vec<SimPath>,
    pub n_models: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedLoading {
    pub construct: String,
    pub indicator: String,
    pub loading: f64,
}

/// Everything the generator planted, for use as a test oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_models: usize,
    pub loadings: Vec<PlantedLoading>,
    pub paths: Vec<SimPath>,
    /// Population R² of each endogenous construct.
    pub structural_r_squared: Vec<(String, f64)>,
    pub construct_ids: Vec<String>,
    /// Population correlation matrix of the constructs (declaration order).
    #[serde(skip)]
    pub construct_correlation: DMatrix<f64>,
    /// Sampled construct scores, rows = models, declaration order.
    #[serde(skip)]
    pub latent_scores: DMatrix<f64>,
}

impl GroundTruth {
    pub fn planted_loading(&self, indicator: &str) -> Option<f64> {
        self.loadings.iter().find(|l| l.indicator == indicator).map(|l| l.loading)
    }

    pub fn latent(&self, construct: &str) -> Option<Vec<f64>> {
        let k = self.construct_ids.iter().position(|c| c == construct)?;
        Some(self.latent_scores.column(k).iter().copied().collect())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("ground truth serializes");
        let corr: Vec<Vec<f64>> = self
            .construct_correlation
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        v["construct_correlation"] = serde_json::to_value(corr).expect("matrix serializes");
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub scores: ScoreMatrix,
    pub truth: GroundTruth,
}

impl SimSpec {
    pub fn indicator_ids(&self, construct: &SimConstruct) -> Vec<String> {
        construct.indicator_ids.clone().unwrap_or_else(|| {
            (1..=construct.loadings.len())
                .map(|i| format!("{}_{i}", construct.id))
                .collect()
        })
    }

    fn construct_index(&self, id: &str) -> Result<usize> {
        self.constructs
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::SpecError(format!("unknown construct {id:?}")))
    }

    /// Topological order of the planted structure.
    fn order(&self) -> Result<Vec<usize>> {
        let n = self.constructs.len();
        let mut indeg = vec![0; n];
        let mut edges = Vec::new();
        for p in &self.paths {
            let s = self.construct_index(&p.source)?;
            let t = self.construct_index(&p.target)?;
            edges.push((s, t));
            indeg[t] += 1;
        }
        let mut done = vec![false; n];
        let mut order = Vec::new();
        while order.len() < n {
            let k = (0..n)
                .find(|&k| !done[k] && indeg[k] == 0)
                .ok_or_else(|| Error::SpecError("paths contain a cycle".into()))?;
            done[k] = true;
            order.push(k);
            for &(s, t) in &edges {
                if s == k {
                    indeg[t] -= 1;
                }
            }
        }
        Ok(order)
    }

    /// Taxonomy matching the planted structure: constructs with indicators
    /// are first-order, indicator-less constructs are second-order.
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let constructs = self
            .constructs
            .iter()
            .map(|c| {
                if c.loadings.is_empty() {
                    ConstructSpec::second_order(&c.id)
                } else {
                    let ids = self.indicator_ids(c);
                    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                    ConstructSpec::first_order(&c.id, &refs)
                }
            })
            .collect();
        let paths = self
            .paths
            .iter()
            .map(|p| (p.source.clone(), p.target.clone()))
            .collect();
        Taxonomy::new(constructs, paths, Vec::new())
    }

    fn check(&self) -> Result<()> {
        if self.n_models < 3 {
            return Err(Error::SpecError("n_models must be at least 3".into()));
        }
        let mut ids = std::collections::HashSet::new();
        let mut indicators = std::collections::HashSet::new();
        for c in &self.constructs {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::SpecError(format!("duplicate construct {:?}", c.id)));
            }
            if let Some(names) = &c.indicator_ids {
                if names.len() != c.loadings.len() {
                    return Err(Error::SpecError(format!(
                        "construct {:?}: {} indicator ids for {} loadings",
                        c.id,
                        names.len(),
                        c.loadings.len()
                    )));
                }
            }
            for name in self.indicator_ids(c) {
                if !indicators.insert(name.clone()) {
                    return Err(Error::SpecError(format!("duplicate indicator {name:?}")));
                }
            }
            if let Some(l) = c.loadings.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
                return Err(Error::SpecError(format!(
                    "construct {:?}: loading {l} outside (0, 1]",
                    c.id
                )));
            }
        }
        Ok(())
    }
}

/// Population construct correlations and per-construct structural R².
fn population_structure(spec: &SimSpec, order: &[usize]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let k = spec.constructs.len();
    let mut cov = DMatrix::zeros(k, k);
    let mut r2 = vec![0.0; k];
    let mut placed: Vec<usize> = Vec::new();
    for &j in order {
        let preds: Vec<(usize, f64)> = spec
            .paths
            .iter()
            .filter(|p| p.target == spec.constructs[j].id)
            .map(|p| Ok((spec.construct_index(&p.source)?, p.coefficient)))
            .collect::<Result<_>>()?;
        let explained: f64 = preds
            .iter()
            .flat_map(|&(a, ba)| preds.iter().map(move |&(b, bb)| (a, ba, b, bb)))
            .map(|(a, ba, b, bb)| ba * bb * cov[(a, b)])
            .sum();
        if explained >= 1.0 || explained < 0.0 {
            return Err(Error::SpecError(format!(
                "planted R² of {:?} is {explained:.4}; it must lie in [0, 1)",
                spec.constructs[j].id
            )));
        }
        r2[j] = explained;
        cov[(j, j)] = 1.0;
        for &m in &placed {
            let c: f64 = preds.iter().map(|&(a, b)| b * cov[(a, m)]).sum();
            cov[(j, m)] = c;
            cov[(m, j)] = c;
        }
        placed.push(j);
    }
    Ok((cov, r2))
}

/// Draw a score table and its ground truth. Pure in `spec` (seed included).
pub fn generate(spec: &SimSpec) -> Result<Simulation> {
    spec.check()?;
    let order = spec.order()?;
    let (corr, r2) = population_structure(spec, &order)?;
    let n = spec.n_models;
    let k = spec.constructs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    };

    let mut latent = DMatrix::zeros(n, k);
    for &j in &order {
        let noise = draw(&mut rng);
        let resid_sd = (1.0 - r2[j]).sqrt();
        let id = &spec.constructs[j].id;
        for i in 0..n {
            let mut v = resid_sd * noise[i];
            for p in spec.paths.iter().filter(|p| &p.target == id) {
                let s = spec.construct_index(&p.source)?;
                v += p.coefficient * latent[(i, s)];
            }
            latent[(i, j)] = v;
        }
    }

    let mut indicator_ids = Vec::new();
    let mut planted = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, c) in spec.constructs.iter().enumerate() {
        for (name, &lambda) in spec.indicator_ids(c).into_iter().zip(&c.loadings) {
            let noise = draw(&mut rng);
            let e_sd = (1.0 - lambda * lambda).max(0.0).sqrt();
            columns.push((0..n).map(|i| lambda * latent[(i, j)] + e_sd * noise[i]).collect());
            planted.push(PlantedLoading {
                construct: c.id.clone(),
                indicator: name.clone(),
                loading: lambda,
            });
            indicator_ids.push(name);
        }
    }
    if indicator_ids.is_empty() {
        return Err(Error::SpecError("no observed indicators".into()));
    }
    let p = indicator_ids.len();
    let width = n.to_string().len();
    let model_ids = (1..=n).map(|i| format!("m{i:0width$}")).collect();
    let cells = (0..n)
        .flat_map(|i| (0..p).map(move |c| (i, c)))
        .map(|(i, c)| Some(columns[c][i]))
        .collect();
    let scores = ScoreMatrix::new(model_ids, indicator_ids, cells)?;

    let truth = GroundTruth {
        seed: spec.seed,
        n_models: n,
        loadings: planted,
        paths: spec.paths.clone(),
        structural_r_squared: spec
            .constructs
            .iter()
            .enumerate()
            .filter(|(j, c)| spec.paths.iter().any(|p| p.target == c.id) || r2[*j] > 0.0)
            .map(|(j, c)| (c.id.clone(), r2[j]))
            .collect(),
        construct_ids: spec.constructs.iter().map(|c| c.id.clone()).collect(),
        construct_correlation: corr,
        latent_scores: latent,
    };
    Ok(Simulation { scores, truth })
}

/// One simulation per seed, generated independently (in parallel when
/// enabled). Output order follows `seeds`.
pub fn generate_many(spec: &SimSpec, seeds: &[u64]) -> Vec<Result<Simulation>> {
    par::map_slice(seeds, |&seed| {
        let mut s = spec.clone();
        s.seed = seed;
        generate(&s)
    })
}

/// Noise standard deviation that gives correlation `r` between a
/// unit-variance column and its noisy copy.
pub fn noise_sd_for_correlation(r: f64) -> f64 {
    (1.0 / (r * r) - 1.0).sqrt()
}

/// Overwrite `indicator` with `duplicate_of` plus N(0, noise_sd²) noise.
pub fn plant_collinearity(
    matrix: &ScoreMatrix,
    indicator: &str,
    duplicate_of: &str,
    noise_sd: f64,
    seed: u64,
) -> Result<ScoreMatrix> {
    let target = matrix
        .indicator_index(indicator)
        .ok_or_else(|| Error::UnknownId(indicator.to_string()))?;
    let source = matrix
        .indicator_index(duplicate_of)
        .ok_or_else(|| Error::UnknownId(duplicate_of.to_string()))?;
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::SpecError(format!("noise_sd must be nonnegative, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = matrix.clone();
    let mut cells = Vec::with_capacity(matrix.n_models());
    for v in matrix.column(source) {
        let e: f64 = StandardNormal.sample(&mut rng);
        cells.push(v.map(|x| x + noise_sd * e));
    }
    // rows with a missing source cell keep their own value
    let own = matrix.column(target);
    let values: Vec<f64> = cells
        .iter()
        .zip(&own)
        .map(|(c, o)| c.or(*o).unwrap_or(f64::NAN))
        .collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::SpecError("cannot plant into rows missing both columns".into()));
    }
    out.set_column(target, &values)?;
    Ok(out)
}
