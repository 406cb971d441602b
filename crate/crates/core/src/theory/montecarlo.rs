use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gains::{one_layer_gain, GainParams};
use crate::error::{Error, Result};

const SHARDS: u64 = 16;

/// Neighbor counts of the subgraph group and of the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub s: usize,
    pub r: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub num_samples: usize,
    pub seed: u64,
    /// Class-conditional mean `E[f | y_i]` of the ego node's signal.
    pub mu: f64,
    /// Variance of the additive noise on every signal; `0.1 mu^2` when absent.
    pub noise_var: Option<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            num_samples: 100_000,
            seed: 0,
            mu: 1.0,
            noise_var: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Mean of `f^(1) / mu` over the samples.
    pub gain: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub num_samples: usize,
}

impl McEstimate {
    /// `|gain - analytic| <= k stderr`, with room for rounding only.
    pub fn brackets(&self, k: f64) -> bool {
        (self.gain - self.analytic).abs() <= k * self.stderr + 1e-12 * self.analytic.abs().max(1.0)
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let delta = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * o.n / n,
            m2: self.m2 + o.m2 + delta * delta * self.n * o.n / n,
        }
    }
}

/// Per-neighbor edge weights `(r_S, r_R)` that realize `W` and `beta`.
fn group_weights(p: &GainParams, g: GroupSizes) -> Result<(f64, f64)> {
    if (g.s + g.r) as f64 != p.d_i {
        return Err(Error::domain(format!(
            "group sizes {} + {} do not add up to the degree {}",
            g.s, g.r, p.d_i
        )));
    }
    let per = |count: usize, share: f64, name: &str| {
        if count > 0 {
            Ok(share * p.w_i0 / count as f64)
        } else if share == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::domain(format!("empty {name} group with a nonzero weight share")))
        }
    };
    Ok((per(g.s, p.beta, "subgraph")?, per(g.r, 1.0 - p.beta, "remaining")?))
}

/// Samples one propagation step of the class-signal mean model and returns the
/// empirical gain `E[f^(1)] / mu` with its standard error, next to the
/// analytic one-layer gain.
///
/// Every neighbor in the subgraph group is same-class with probability
/// `h_S` (signal `mu`) and otherwise contributes `-rho mu`; the remaining
/// group uses `h_R`. Each signal carries independent zero-mean Gaussian noise.
pub fn monte_carlo_one_layer(params: &GainParams, groups: GroupSizes, cfg: &McConfig) -> Result<McEstimate> {
    params.validate()?;
    if cfg.num_samples < 1000 {
        return Err(Error::domain(format!("at least 1000 samples are needed, got {}", cfg.num_samples)));
    }
    if cfg.mu == 0.0 || !cfg.mu.is_finite() {
        return Err(Error::domain("the class-signal mean must be finite and nonzero"));
    }
    let var = cfg.noise_var.unwrap_or(0.1 * cfg.mu * cfg.mu);
    if !(var >= 0.0 && var.is_finite()) {
        return Err(Error::domain("noise variance must be finite and nonnegative"));
    }
    let (r_s, r_r) = group_weights(params, groups)?;
    let noise = Normal::new(0.0, var.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
    let mu = cfg.mu;
    let cross = -params.rho * mu;
    let norm = params.d_i + 1.0;

    let per_shard = cfg.num_samples as u64 / SHARDS;
    let extra = cfg.num_samples as u64 % SHARDS;
    let moments = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(shard);
            let noisy = |rng: &mut ChaCha8Rng, mean: f64| if var > 0.0 { mean + noise.sample(rng) } else { mean };
            let mut m = Moments::default();
            for _ in 0..per_shard + u64::from(shard < extra) {
                let mut sum = noisy(&mut rng, mu);
                for (count, h, r) in [(groups.s, params.h_s, r_s), (groups.r, params.h_r, r_r)] {
                    for _ in 0..count {
                        let mean = if rng.random_bool(h) { mu } else { cross };
                        sum += r * noisy(&mut rng, mean);
                    }
                }
                m.push(sum / norm / mu);
            }
            m
        })
        .reduce(Moments::default, Moments::merge);

    let variance = if moments.n > 1.0 { moments.m2 / (moments.n - 1.0) } else { 0.0 };
    Ok(McEstimate {
        gain: moments.mean,
        stderr: (variance / moments.n).sqrt(),
        analytic: one_layer_gain(params.d_i, params.w_i0, params.rho, params.h_eff()),
        num_samples: cfg.num_samples,
    })
}

/// One grid point of a Monte-Carlo check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(flatten)]
    pub params: GainParams,
    pub d_s: usize,
    pub d_r: usize,
}

impl GridPoint {
    /// Unit edge weights, a third of the neighbors (at least one) in the
    /// subgraph group, and group homophilies spread around `h_eff` so that
    /// the subgraph group is the less homophilous one.
    pub fn with_h_eff(d: usize, h_eff: f64, rho: f64) -> Result<GridPoint> {
        if d == 0 {
            return Err(Error::domain("grid points need a positive degree"));
        }
        if !(0.0..=1.0).contains(&h_eff) {
            return Err(Error::domain(format!("h_eff must lie in [0, 1], got {h_eff}")));
        }
        let d_s = (d / 3).max(1);
        let beta = d_s as f64 / d as f64;
        let spread = h_eff.min(1.0 - h_eff);
        Ok(GridPoint {
            params: GainParams {
                d_i: d as f64,
                rho,
                w_i0: d as f64,
                beta,
                h_s: h_eff - spread * (1.0 - beta),
                h_r: h_eff + spread * beta,
                ..GainParams::default()
            },
            d_s,
            d_r: d - d_s,
        })
    }

    pub fn groups(&self) -> GroupSizes {
        GroupSizes { s: self.d_s, r: self.d_r }
    }
}

/// Contents of a `theory-check` grid file: either explicit points or the
/// cartesian product of degrees, effective homophilies and ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points { points: Vec<GridPoint> },
    Cartesian { d: Vec<usize>, h_eff: Vec<f64>, rho: Vec<f64> },
}

impl Grid {
    /// `d ∈ {3, 8, 15}`, `h_eff ∈ {0.1, 0.5, 0.9}`, `rho ∈ {0, 0.5, 1}`.
    pub fn standard() -> Grid {
        Grid::Cartesian {
            d: vec![3, 8, 15],
            h_eff: vec![0.1, 0.5, 0.9],
            rho: vec![0.0, 0.5, 1.0],
        }
    }

    pub fn points(&self) -> Result<Vec<GridPoint>> {
        match self {
            Grid::Points { points } => Ok(points.clone()),
            Grid::Cartesian { d, h_eff, rho } => {
                let mut out = Vec::with_capacity(d.len() * h_eff.len() * rho.len());
                for &d in d {
                    for &h in h_eff {
                        for &r in rho {
                            out.push(GridPoint::with_h_eff(d, h, r)?);
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Grid> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub d_i: f64,
    pub rho: f64,
    pub beta: f64,
    pub h_s: f64,
    pub h_r: f64,
    pub h_eff: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Monte-Carlo estimate at every grid point; point `k` uses seed `seed + k`.
pub fn theory_check(grid: &Grid, num_samples: usize, seed: u64) -> Result<Vec<CheckRow>> {
    grid.points()?
        .iter()
        .enumerate()
        .map(|(k, pt)| {
            let cfg = McConfig {
                num_samples,
                seed: seed.wrapping_add(k as u64),
                ..McConfig::default()
            };
            let est = monte_carlo_one_layer(&pt.params, pt.groups(), &cfg)?;
            Ok(CheckRow {
                d_i: pt.params.d_i,
                rho: pt.params.rho,
                beta: pt.params.beta,
                h_s: pt.params.h_s,
                h_r: pt.params.h_r,
                h_eff: pt.params.h_eff(),
                analytic: est.analytic,
                empirical: est.gain,
                stderr: est.stderr,
                pass: est.brackets(3.0),
            })
        })
        .collect()
}

pub fn check_rows_csv(rows: &[CheckRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
