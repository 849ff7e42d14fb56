//! Bridging-density ladder and the reversible Markov kernels that leave each
//! bridge level invariant.
//!
//! The ladder interpolates geometrically between the base density at
//! `theta_ref` (level 1, beta = 0) and the target at `theta` (level `a`,
//! beta = 1). Because `log gamma` is linear in theta, every bridge level is
//! itself an Ising density at the interpolated parameter, so a single
//! random-scan Gibbs sweep implementation serves all levels. Random scan is
//! used because the composed sweep stays reversible; a systematic fixed-order
//! scan (available as [`ScanOrder::Systematic`]) does not, and exists as a
//! counterexample for the detailed-balance verifier.

use crate::error::{Error, Result};
use crate::mrf::{log_gamma, LatticeConfig, MrfModel, ThetaParam};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sites cap for exact transition-matrix construction (dense `2^n x 2^n`).
pub const TRANSITION_MATRIX_MAX_SITES: usize = 12;

/// Inverse-temperature ladder `beta_1 = 0 < ... < beta_a = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSchedule {
    betas: Vec<f64>,
}

impl BridgeSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidSchedule {
                reason: format!("need at least 2 levels, got {}", betas.len()),
            });
        }
        if betas[0] != 0.0 {
            return Err(Error::InvalidSchedule {
                reason: format!("first beta must be 0, got {}", betas[0]),
            });
        }
        if *betas.last().unwrap() != 1.0 {
            return Err(Error::InvalidSchedule {
                reason: format!("last beta must be 1, got {}", betas.last().unwrap()),
            });
        }
        if betas.iter().any(|b| !b.is_finite()) || betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule {
                reason: "betas must be strictly increasing and finite".into(),
            });
        }
        Ok(Self { betas })
    }

    /// Linearly spaced ladder with `levels` levels.
    pub fn linear(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidSchedule {
                reason: format!("need at least 2 levels, got {levels}"),
            });
        }
        let a = levels - 1;
        let betas = (0..levels)
            .map(|i| {
                if i == a {
                    1.0
                } else {
                    i as f64 / a as f64
                }
            })
            .collect();
        Self::new(betas)
    }

    /// Number of levels `a`.
    pub fn levels(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Beta at 1-based level `i`.
    pub fn beta(&self, level: usize) -> Result<f64> {
        if level == 0 || level > self.betas.len() {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.betas.len(),
            });
        }
        Ok(self.betas[level - 1])
    }
}

/// Interpolated interaction parameter at `beta`, anchored at the reference so
/// that `theta_ref == theta` collapses exactly and the endpoints are the
/// endpoint parameters bitwise.
pub fn theta_effective(theta: &ThetaParam, beta: f64) -> f64 {
    if beta == 0.0 {
        theta.theta_ref
    } else if beta == 1.0 {
        theta.theta
    } else {
        theta.theta_ref + beta * (theta.theta - theta.theta_ref)
    }
}

/// Log of the unnormalised bridge density at 1-based level `i`:
/// `(1 - beta_i) log gamma(.|theta_ref) + beta_i log gamma(.|theta)`.
/// Reduces to plain `log_gamma` calls at the endpoints.
pub fn log_bridge_gamma(
    model: &MrfModel,
    config: &LatticeConfig,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    level: usize,
) -> Result<f64> {
    let beta = schedule.beta(level)?;
    if beta == 0.0 {
        return log_gamma(model, config, theta.theta_ref);
    }
    if beta == 1.0 {
        return log_gamma(model, config, theta.theta);
    }
    let lg_ref = log_gamma(model, config, theta.theta_ref)?;
    let lg = log_gamma(model, config, theta.theta)?;
    Ok(lg_ref + beta * (lg - lg_ref))
}

/// Single-site Gibbs conditional: `P(spin_site = +1 | rest)` under the Ising
/// density at `theta_effective`.
pub fn gibbs_conditional(
    model: &MrfModel,
    config: &LatticeConfig,
    site: usize,
    theta_effective: f64,
) -> Result<f64> {
    model.check_dims(config)?;
    if site >= model.sites() {
        return Err(Error::SiteOutOfRange {
            site,
            sites: model.sites(),
        });
    }
    let s = model.neighbor_sum(config, site);
    Ok(prob_plus(theta_effective, s))
}

#[inline]
fn prob_plus(theta_eff: f64, neighbor_sum: i64) -> f64 {
    1.0 / (1.0 + (-2.0 * theta_eff * neighbor_sum as f64).exp())
}

/// Site visit order within one kernel application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    /// `sites` single-site updates at uniformly random sites; the composed
    /// step is reversible.
    #[default]
    Random,
    /// One fixed-order pass over all sites; composed step is not reversible.
    /// Counterexample fixture for the detailed-balance verifier.
    Systematic,
}

/// Reversible annealing kernel for one ladder level: `sweeps` random-scan
/// Gibbs sweeps under the level's effective parameter.
#[derive(Debug, Clone)]
pub struct AnnealKernel<'a> {
    model: &'a MrfModel,
    theta: ThetaParam,
    schedule: BridgeSchedule,
    level: usize,
    sweeps: usize,
    scan: ScanOrder,
    theta_eff: f64,
    // P(+1 | neighbor sum S) indexed by S + max_degree
    p_plus: Vec<f64>,
}

impl<'a> AnnealKernel<'a> {
    pub fn new(
        model: &'a MrfModel,
        theta: ThetaParam,
        schedule: BridgeSchedule,
        level: usize,
    ) -> Result<Self> {
        let beta = schedule.beta(level)?;
        let theta_eff = theta_effective(&theta, beta);
        let deg = model.max_degree() as i64;
        let p_plus = (-deg..=deg).map(|s| prob_plus(theta_eff, s)).collect();
        Ok(Self {
            model,
            theta,
            schedule,
            level,
            sweeps: 1,
            scan: ScanOrder::Random,
            theta_eff,
            p_plus,
        })
    }

    /// Kernel targeting `f(.|theta)` directly (top level of a trivial
    /// two-level ladder); used for burn-in stages.
    pub fn target(model: &'a MrfModel, theta: ThetaParam) -> Self {
        let schedule = BridgeSchedule::linear(2).expect("two-level ladder is valid");
        Self::new(model, theta, schedule, 2).expect("level 2 of 2 is valid")
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.sweeps = sweeps.max(1);
        self
    }

    pub fn with_scan(mut self, scan: ScanOrder) -> Self {
        self.scan = scan;
        self
    }

    pub fn model(&self) -> &MrfModel {
        self.model
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn schedule(&self) -> &BridgeSchedule {
        &self.schedule
    }

    pub fn theta(&self) -> &ThetaParam {
        &self.theta
    }

    pub fn theta_effective(&self) -> f64 {
        self.theta_eff
    }

    #[inline]
    fn lookup_p_plus(&self, neighbor_sum: i64) -> f64 {
        self.p_plus[(neighbor_sum + self.model.max_degree() as i64) as usize]
    }

    /// One kernel application, in place. Consumes, per single-site update,
    /// one site draw (random scan only) and one uniform.
    pub fn step_in_place<R: Rng + ?Sized>(&self, config: &mut LatticeConfig, rng: &mut R) {
        let n = self.model.sites();
        for _ in 0..self.sweeps {
            match self.scan {
                ScanOrder::Random => {
                    for _ in 0..n {
                        let site = rng.random_range(0..n);
                        self.update_site(config, site, rng);
                    }
                }
                ScanOrder::Systematic => {
                    for site in 0..n {
                        self.update_site(config, site, rng);
                    }
                }
            }
        }
    }

    #[inline]
    fn update_site<R: Rng + ?Sized>(&self, config: &mut LatticeConfig, site: usize, rng: &mut R) {
        let s = self.model.neighbor_sum(config, site);
        let p = self.lookup_p_plus(s);
        let u: f64 = rng.random();
        config.set_spin(site, if u < p { 1 } else { -1 });
    }

    /// One kernel application: a new configuration distributed as
    /// `K_level(.|config)`.
    pub fn step<R: Rng + ?Sized>(&self, config: &LatticeConfig, rng: &mut R) -> LatticeConfig {
        let mut next = config.clone();
        self.step_in_place(&mut next, rng);
        next
    }

    /// Exact one-application transition law over all `2^sites` states,
    /// built by expectation over scan-site choices.
    pub fn transition_matrix(&self) -> Result<TransitionMatrix> {
        let n = self.model.sites();
        if n > TRANSITION_MATRIX_MAX_SITES {
            return Err(Error::LatticeTooLarge {
                sites: n,
                max: TRANSITION_MATRIX_MAX_SITES,
            });
        }
        let site_update = |site: usize| -> TransitionMatrix {
            let dim = 1usize << n;
            let mut m = TransitionMatrix::zeros(dim);
            for s in 0..dim {
                let config = LatticeConfig::from_index(self.model.rows(), self.model.cols(), s as u32);
                let p = self.lookup_p_plus(self.model.neighbor_sum(&config, site));
                let s_plus = s | (1 << site);
                let s_minus = s & !(1 << site);
                *m.get_mut(s, s_plus) += p;
                *m.get_mut(s, s_minus) += 1.0 - p;
            }
            m
        };
        let dim = 1usize << n;
        let one_pass = match self.scan {
            ScanOrder::Random => {
                let mut avg = TransitionMatrix::zeros(dim);
                for site in 0..n {
                    avg.add_scaled(&site_update(site), 1.0 / n as f64);
                }
                // one sweep = n sequential random-site updates
                let mut sweep = TransitionMatrix::identity(dim);
                for _ in 0..n {
                    sweep = sweep.matmul(&avg);
                }
                sweep
            }
            ScanOrder::Systematic => {
                let mut sweep = TransitionMatrix::identity(dim);
                for site in 0..n {
                    sweep = sweep.matmul(&site_update(site));
                }
                sweep
            }
        };
        let mut total = one_pass.clone();
        for _ in 1..self.sweeps {
            total = total.matmul(&one_pass);
        }
        Ok(total)
    }

    /// Exactly normalised bridge density `f_level` over all states.
    pub fn bridge_distribution(&self) -> Result<Vec<f64>> {
        self.model.check_enumerable()?;
        let n = self.model.sites();
        let logs: Vec<f64> = (0..1u32 << n)
            .map(|s| {
                let config = LatticeConfig::from_index(self.model.rows(), self.model.cols(), s);
                log_bridge_gamma(self.model, &config, &self.theta, &self.schedule, self.level)
            })
            .collect::<Result<_>>()?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }
}

/// Row-stochastic dense matrix over the enumerated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            *m.get_mut(i, i) = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    fn get_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.data[row * self.dim + col]
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].iter().sum())
            .collect()
    }

    /// `max_s |(dist M)(s) - dist(s)|` — invariance defect of `dist`.
    pub fn invariance_defect(&self, dist: &[f64]) -> f64 {
        assert_eq!(dist.len(), self.dim);
        (0..self.dim)
            .map(|j| {
                let propagated: f64 = (0..self.dim).map(|i| dist[i] * self.get(i, j)).sum();
                (propagated - dist[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Outcome of an exact detailed-balance check.
#[derive(Debug, Clone, Copy)]
pub struct DetailedBalanceReport {
    pub passed: bool,
    pub max_violation: f64,
    /// State pair (enumeration indices) attaining the maximum violation.
    pub worst_pair: (usize, usize),
}

/// Verify `f_i(x) K(x,y) = f_i(y) K(y,x)` over all state pairs, with `f_i`
/// the exactly normalised bridge density and `K` the exact transition law.
pub fn detailed_balance_check(kernel: &AnnealKernel, tolerance: f64) -> Result<DetailedBalanceReport> {
    let f = kernel.bridge_distribution()?;
    let m = kernel.transition_matrix()?;
    let mut max_violation = 0.0;
    let mut worst_pair = (0, 0);
    for x in 0..m.dim() {
        for y in (x + 1)..m.dim() {
            let violation = (f[x] * m.get(x, y) - f[y] * m.get(y, x)).abs();
            if violation > max_violation {
                max_violation = violation;
                worst_pair = (x, y);
            }
        }
    }
    Ok(DetailedBalanceReport {
        passed: max_violation <= tolerance,
        max_violation,
        worst_pair,
    })
}
