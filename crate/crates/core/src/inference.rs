//! Parameter inference over `theta` driven by the unbiased estimators.
//!
//! The pseudo-marginal chain keeps the noisy likelihood estimate of the
//! current state and refreshes only on acceptance; with the unnormalised
//! base density the unknown `Z(theta_ref)` multiplies every estimate by the
//! same constant (theta_ref is held fixed for the whole run) and cancels in
//! the acceptance ratio. An exact grid posterior over enumeration-bounded
//! lattices serves as the validation oracle, and an ideal chain driven by the
//! exact likelihood isolates estimator noise from the Metropolis machinery.

use crate::error::{Error, Result};
use crate::estimators::{
    abc_indicator_estimate_sweeps, abc_reverse_chain_estimate_sweeps, mav_estimate_sweeps,
    sav_estimate_sweeps, simulations_per_replicate, AbcConfig, EstimatorConfig, Variant,
};
use crate::kernels::BridgeSchedule;
use crate::mrf::{exact_likelihood, log_gamma, LatticeConfig, MrfModel, ThetaParam};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One inference run: uniform prior interval, observed data, estimator
/// settings, and the random-walk proposal.
#[derive(Debug, Clone)]
pub struct PosteriorSpec<'a> {
    pub prior_lo: f64,
    pub prior_hi: f64,
    pub data: &'a LatticeConfig,
    pub estimator: EstimatorConfig,
    pub schedule: BridgeSchedule,
    /// Reference parameter of the bridging base density, fixed for the whole
    /// run so its unknown normaliser cancels in every acceptance ratio.
    pub theta_ref: f64,
    pub proposal_sd: f64,
    pub iterations: usize,
    pub init_theta: f64,
    pub sweeps_per_level: usize,
}

impl<'a> PosteriorSpec<'a> {
    fn validate(&self, model: &MrfModel) -> Result<()> {
        model.check_dims(self.data)?;
        if !(self.prior_lo.is_finite() && self.prior_hi.is_finite() && self.prior_lo < self.prior_hi)
        {
            return Err(Error::InvalidConfig {
                field: "prior",
                reason: format!(
                    "need finite prior_lo < prior_hi, got [{}, {}]",
                    self.prior_lo, self.prior_hi
                ),
            });
        }
        if !(self.init_theta >= self.prior_lo && self.init_theta <= self.prior_hi) {
            return Err(Error::InvalidConfig {
                field: "init_theta",
                reason: format!("{} outside prior support", self.init_theta),
            });
        }
        if !(self.proposal_sd.is_finite() && self.proposal_sd >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "proposal_sd",
                reason: format!("must be >= 0, got {}", self.proposal_sd),
            });
        }
        if self.estimator.a != self.schedule.levels() {
            return Err(Error::InvalidConfig {
                field: "a",
                reason: format!(
                    "config has a = {}, schedule has {} levels",
                    self.estimator.a,
                    self.schedule.levels()
                ),
            });
        }
        Ok(())
    }

    fn in_support(&self, theta: f64) -> bool {
        theta >= self.prior_lo && theta <= self.prior_hi
    }
}

/// One recorded chain state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub iteration: usize,
    pub theta: f64,
    pub log_estimate: f64,
    pub accepted: bool,
}

/// Chain output plus the model-simulation cost (kernel applications).
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub rows: Vec<ChainRow>,
    pub model_sims: u64,
}

impl ChainRun {
    pub fn thetas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.theta).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.rows.iter().filter(|r| r.accepted).count() as f64 / self.rows.len() as f64
    }
}

fn draw_log_estimate<R: Rng + ?Sized>(
    model: &MrfModel,
    spec: &PosteriorSpec,
    theta_val: f64,
    rng: &mut R,
) -> Result<f64> {
    let tp = ThetaParam::new(theta_val, spec.theta_ref)?;
    let b = spec.estimator.b;
    let sweeps = spec.sweeps_per_level;
    match spec.estimator.variant {
        Variant::Sav => Ok(log_gamma(model, spec.data, theta_val)?
            + sav_estimate_sweeps(model, &tp, b, sweeps, rng)?.log_value),
        Variant::Mav => Ok(log_gamma(model, spec.data, theta_val)?
            + mav_estimate_sweeps(model, &tp, &spec.schedule, b, sweeps, rng, false)?.log_value),
        Variant::ReverseChain => Ok(abc_reverse_chain_estimate_sweeps(
            model,
            spec.data,
            &tp,
            &spec.schedule,
            b,
            sweeps,
            rng,
            false,
        )?
        .w
        .log_value),
        Variant::AbcIndicator => Err(Error::InvalidConfig {
            field: "variant",
            reason: "pseudo-marginal chain needs a positive likelihood estimate; \
                     use abc_mcmc for the indicator variant"
                .into(),
        }),
    }
}

/// Metropolis-Hastings over `theta` with the retained-estimate rule: one
/// fresh estimate per in-support proposal, current estimate kept until an
/// acceptance replaces it. Out-of-support proposals are rejected without
/// drawing an estimate.
pub fn pseudo_marginal_mh<R: Rng + ?Sized>(
    model: &MrfModel,
    spec: &PosteriorSpec,
    rng: &mut R,
) -> Result<ChainRun> {
    if spec.estimator.variant == Variant::AbcIndicator {
        return Err(Error::InvalidConfig {
            field: "variant",
            reason: "pseudo-marginal chain supports sav|mav|reverse_chain".into(),
        });
    }
    mh_chain(model, spec, rng, |model, spec, theta, rng| {
        draw_log_estimate(model, spec, theta, rng).map(Some)
    })
}

/// Control chain with a perfect zero-variance likelihood plugged in (the
/// exact oracle); requires an enumeration-bounded lattice.
pub fn ideal_marginal_mh<R: Rng + ?Sized>(
    model: &MrfModel,
    spec: &PosteriorSpec,
    rng: &mut R,
) -> Result<ChainRun> {
    model.check_enumerable()?;
    mh_chain(model, spec, rng, |model, spec, theta, _rng| {
        exact_likelihood(model, spec.data, theta).map(|p| Some(p.ln()))
    })
}

fn mh_chain<R: Rng + ?Sized>(
    model: &MrfModel,
    spec: &PosteriorSpec,
    rng: &mut R,
    estimate: impl Fn(&MrfModel, &PosteriorSpec, f64, &mut R) -> Result<Option<f64>>,
) -> Result<ChainRun> {
    spec.validate(model)?;
    let proposal = Normal::new(0.0, spec.proposal_sd).map_err(|e| Error::InvalidConfig {
        field: "proposal_sd",
        reason: e.to_string(),
    })?;
    let sims_per_estimate =
        simulations_per_replicate(spec.estimator.variant, spec.estimator.a, spec.estimator.b)
            * spec.sweeps_per_level as u64;

    let mut theta = spec.init_theta;
    let mut log_est = estimate(model, spec, theta, rng)?.expect("initial estimate");
    let mut model_sims = sims_per_estimate;
    let mut rows = Vec::with_capacity(spec.iterations);
    for iteration in 0..spec.iterations {
        let step: f64 = proposal.sample(rng);
        let candidate = theta + step;
        let mut accepted = false;
        if spec.in_support(candidate) {
            let log_est_candidate =
                estimate(model, spec, candidate, rng)?.expect("in-support estimate");
            model_sims += sims_per_estimate;
            let u: f64 = rng.random();
            if u.ln() < log_est_candidate - log_est {
                theta = candidate;
                log_est = log_est_candidate;
                accepted = true;
            }
        }
        rows.push(ChainRow {
            iteration,
            theta,
            log_estimate: log_est,
            accepted,
        });
    }
    Ok(ChainRun { rows, model_sims })
}

/// Markov-chain ABC over `theta`: a proposal is accepted only if it stays in
/// the prior support and a fresh simulated dataset matches the observation
/// within the threshold.
pub fn abc_mcmc<R: Rng + ?Sized>(
    model: &MrfModel,
    spec: &PosteriorSpec,
    abc: &AbcConfig,
    rng: &mut R,
) -> Result<ChainRun> {
    spec.validate(model)?;
    let proposal = Normal::new(0.0, spec.proposal_sd).map_err(|e| Error::InvalidConfig {
        field: "proposal_sd",
        reason: e.to_string(),
    })?;
    let b = spec.estimator.b;
    let sims_per_estimate = b as u64 * spec.sweeps_per_level as u64;

    let mut theta = spec.init_theta;
    let mut model_sims = 0;
    let mut rows = Vec::with_capacity(spec.iterations);
    for iteration in 0..spec.iterations {
        let step: f64 = proposal.sample(rng);
        let candidate = theta + step;
        let mut accepted = false;
        if spec.in_support(candidate) {
            let tp = ThetaParam::new(candidate, spec.theta_ref)?;
            let indicator = abc_indicator_estimate_sweeps(
                model,
                spec.data,
                &tp,
                abc,
                b,
                spec.sweeps_per_level,
                rng,
            )?;
            model_sims += sims_per_estimate;
            if indicator.log_value == 0.0 {
                theta = candidate;
                accepted = true;
            }
        }
        rows.push(ChainRow {
            iteration,
            theta,
            log_estimate: 0.0,
            accepted,
        });
    }
    Ok(ChainRun { rows, model_sims })
}

/// Exact posterior over a uniform grid of `theta` values (cell midpoints),
/// weights proportional to the exact likelihood under the flat prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub thetas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GridPosterior {
    pub fn mean(&self) -> f64 {
        self.thetas
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| t * w)
            .sum()
    }

    /// Smallest grid point whose cumulative weight reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut cum = 0.0;
        for (t, w) in self.thetas.iter().zip(&self.weights) {
            cum += w;
            if cum >= q {
                return *t;
            }
        }
        *self.thetas.last().expect("non-empty grid")
    }

    pub fn deciles(&self) -> [f64; 9] {
        std::array::from_fn(|i| self.quantile((i + 1) as f64 / 10.0))
    }
}

pub fn exact_posterior_grid(
    model: &MrfModel,
    y: &LatticeConfig,
    prior_lo: f64,
    prior_hi: f64,
    grid_size: usize,
) -> Result<GridPosterior> {
    model.check_enumerable()?;
    model.check_dims(y)?;
    if grid_size < 100 {
        return Err(Error::InvalidConfig {
            field: "grid_size",
            reason: format!("need at least 100 grid points, got {grid_size}"),
        });
    }
    if !(prior_lo.is_finite() && prior_hi.is_finite() && prior_lo < prior_hi) {
        return Err(Error::InvalidConfig {
            field: "prior",
            reason: format!("need finite prior_lo < prior_hi, got [{prior_lo}, {prior_hi}]"),
        });
    }
    let width = (prior_hi - prior_lo) / grid_size as f64;
    let thetas: Vec<f64> = (0..grid_size)
        .map(|g| prior_lo + (g as f64 + 0.5) * width)
        .collect();
    let logs: Vec<f64> = thetas
        .iter()
        .map(|&t| {
            Ok(log_gamma(model, y, t)? - crate::mrf::exact_log_partition(model, t)?)
        })
        .collect::<Result<_>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(GridPosterior {
        thetas,
        weights: unnorm.into_iter().map(|w| w / total).collect(),
    })
}
