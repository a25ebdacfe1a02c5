//! Universal perturbation of an art pattern that suppresses detector
//! objectness, found by query-based gradient estimation and signed projected
//! descent.

mod objective;
mod perturbation;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::Raster64;

pub use objective::{objectness_loss, Aggregate, DetectorObjective, Objective, PreparedScene};
pub use perturbation::{Perturbation, PerturbationFiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// L-infinity budget.
    pub epsilon: f64,
    /// Descent step; `epsilon / 8` when absent.
    pub step_size: Option<f64>,
    pub iterations: usize,
    /// Antithetic direction pairs per gradient estimate.
    pub queries_per_gradient: usize,
    pub smoothing_sigma: f64,
    pub seed: u64,
    pub aggregate: Aggregate,
    /// Manifest files of the training batch; may be filled in by the caller.
    pub batch: Vec<String>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 16.0 / 255.0,
            step_size: None,
            iterations: 200,
            queries_per_gradient: 32,
            smoothing_sigma: 4.0 / 255.0,
            seed: 0,
            aggregate: Aggregate::Mean,
            batch: Vec::new(),
        }
    }
}

impl AttackConfig {
    pub fn step(&self) -> f64 {
        self.step_size.unwrap_or(self.epsilon / 8.0)
    }

    /// Loss queries spent per iteration: two per direction plus one check.
    pub fn queries_per_iteration(&self) -> usize {
        2 * self.queries_per_gradient + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if !(self.step() > 0.0 && self.step().is_finite()) {
            return Err(Error::Config(format!("step size {} is not positive", self.step())));
        }
        if self.queries_per_gradient == 0 {
            return Err(Error::Config("queries_per_gradient must be at least 1".into()));
        }
        if !(self.smoothing_sigma > 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::Config(format!("smoothing sigma {} is not positive", self.smoothing_sigma)));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: f64,
    pub best_loss: f64,
    pub queries_used: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackTrace {
    /// Loss at delta = 0; absent when no iteration ran.
    pub initial_loss: Option<f64>,
    pub entries: Vec<TraceEntry>,
}

impl AttackTrace {
    pub fn best_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.best_loss).or(self.initial_loss)
    }

    /// One JSON object per iteration.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e).expect("trace entry serializes"))?;
        }
        Ok(())
    }
}

/// Random source for one gradient estimate of iteration `iteration`.
pub fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Per-sample support flags for a delta of `channels` interleaved channels.
fn support_flags(support: Option<&BinaryMask>, dims: usize, channels: usize) -> Vec<bool> {
    match support {
        Some(m) => (0..dims).map(|i| m.bits()[i / channels]).collect(),
        None => vec![true; dims],
    }
}

/// Antithetic Gaussian-smoothing estimate of the loss gradient at `delta`:
/// `(1 / 2 n sigma) * sum_k [L(delta + sigma u_k) - L(delta - sigma u_k)] u_k`.
///
/// Directions are drawn from `rng` and zeroed where `active` is false. The
/// 2n probes are submitted as one batch and reduced in sample order.
pub fn estimate_gradient(
    objective: &mut dyn Objective,
    delta: &[f64],
    active: &[bool],
    n: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dims = delta.len();
    let directions: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dims)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(rng);
                    if active[i] {
                        z
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut probes = Vec::with_capacity(2 * n);
    for u in &directions {
        probes.push(delta.iter().zip(u).map(|(d, u)| d + sigma * u).collect());
        probes.push(delta.iter().zip(u).map(|(d, u)| d - sigma * u).collect());
    }
    let losses = objective.evaluate(&probes)?;
    let mut g = vec![0.0; dims];
    for (k, u) in directions.iter().enumerate() {
        let diff = losses[2 * k] - losses[2 * k + 1];
        if diff != 0.0 {
            for (gi, ui) in g.iter_mut().zip(u) {
                *gi += diff * ui;
            }
        }
    }
    let scale = 1.0 / (2.0 * n as f64 * sigma);
    g.iter_mut().for_each(|v| *v *= scale);
    Ok(g)
}

/// Projects onto the feasible set: `|delta| <= epsilon`, zero outside the
/// support, and `art + delta` inside [0, 1].
pub fn project(delta: &mut [f64], art: &Raster64, epsilon: f64, active: &[bool]) {
    for ((d, &a), &on) in delta.iter_mut().zip(art.data()).zip(active) {
        if !on {
            *d = 0.0;
            continue;
        }
        let v = d.clamp(-epsilon, epsilon);
        *d = (a + v).clamp(0.0, 1.0) - a;
        // rounding in the subtraction must not leave the epsilon ball
        if d.abs() > epsilon {
            *d = d.signum() * epsilon;
        }
    }
}

/// Signed projected descent from delta = 0, keeping the best iterate.
///
/// `on_iteration` sees each trace entry as soon as it exists, so a caller
/// can persist a partial trace when a later query fails.
pub fn optimize_perturbation(
    art: &Raster64,
    objective: &mut dyn Objective,
    cfg: &AttackConfig,
    support: Option<&BinaryMask>,
    mut on_iteration: impl FnMut(&TraceEntry),
) -> Result<(Perturbation, AttackTrace)> {
    cfg.validate()?;
    let (w, h, c) = (art.width(), art.height(), art.channels());
    let dims = w * h * c;
    if objective.dims() != dims {
        return Err(Error::Shape(format!(
            "objective expects {} samples, art has {dims}",
            objective.dims()
        )));
    }
    if let Some(m) = support {
        if (m.width(), m.height()) != (w, h) {
            return Err(Error::Shape(format!(
                "support is {}x{}, art is {w}x{h}",
                m.width(),
                m.height()
            )));
        }
    }
    let active = support_flags(support, dims, c);
    let mut trace = AttackTrace::default();
    let mut best = vec![0.0; dims];
    if cfg.iterations > 0 {
        let initial = objective.evaluate(&[best.clone()])?[0];
        trace.initial_loss = Some(initial);
        let mut best_loss = initial;
        let mut queries = 1;
        let mut delta = best.clone();
        let step = cfg.step();
        for it in 0..cfg.iterations {
            let mut rng = iteration_rng(cfg.seed, it);
            let g = estimate_gradient(
                objective,
                &delta,
                &active,
                cfg.queries_per_gradient,
                cfg.smoothing_sigma,
                &mut rng,
            )?;
            for (d, gi) in delta.iter_mut().zip(&g) {
                if *gi > 0.0 {
                    *d -= step;
                } else if *gi < 0.0 {
                    *d += step;
                }
            }
            project(&mut delta, art, cfg.epsilon, &active);
            let loss = objective.evaluate(&[delta.clone()])?[0];
            queries += cfg.queries_per_iteration();
            if loss < best_loss {
                best_loss = loss;
                best.copy_from_slice(&delta);
            }
            let entry = TraceEntry {
                iteration: it,
                loss,
                best_loss,
                queries_used: queries,
            };
            on_iteration(&entry);
            trace.entries.push(entry);
        }
    }
    let pert = Perturbation::from_values(w, h, c, best, cfg.epsilon, support.cloned())?;
    Ok((pert, trace))
}
