//! The auxiliary-variable estimator family.
//!
//! All estimators target functions of the intractable normaliser and carry
//! their values in log space:
//!
//! * [`sav_estimate`] — single-draw importance-sampling estimate; with the
//!   unnormalised base density it targets `Z(theta_ref)/Z(theta)`.
//! * [`mav_estimate`] — annealed extension along the bridging ladder: the
//!   product of successive bridge ratios evaluated on a descending kernel
//!   chain from a burn-in draw.
//! * [`abc_reverse_chain_estimate`] — simulates the auxiliary chain
//!   backwards from the observed data pinned at the final position and
//!   returns the importance weight `w` (targets the chain marginal at the
//!   data) together with the derived ratio `v`, linked by
//!   `w = log_gamma(y|theta) + v` exactly.
//! * [`abc_indicator_estimate`] — accept/reject likelihood estimate from a
//!   burn-in draw and a distance threshold; exact for discrete data at
//!   `epsilon = 0`.
//!
//! The descending stage is shared verbatim between the annealed and
//! reverse-chain paths, which is what makes their per-sample equivalence
//! checkable bitwise (see [`mav_reverse_equivalence_check`]).

use crate::error::{Error, Result};
use crate::kernels::{log_bridge_gamma, AnnealKernel, BridgeSchedule};
use crate::mrf::{log_gamma, LatticeConfig, MrfModel, ThetaParam};
use crate::stats::{ks_two_sample, KsResult};
use crate::streams::{replicate_rng, SeedMix};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicates used by the distributional arm of the equivalence check.
pub const EQUIVALENCE_KS_REPLICATES: usize = 10_000;
/// KS p-value threshold below which the distributional arm fails.
pub const EQUIVALENCE_KS_P_THRESHOLD: f64 = 0.01;

/// Estimator selected by a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sav,
    Mav,
    ReverseChain,
    AbcIndicator,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Sav => "sav",
            Variant::Mav => "mav",
            Variant::ReverseChain => "reverse_chain",
            Variant::AbcIndicator => "abc_indicator",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sav" => Ok(Variant::Sav),
            "mav" => Ok(Variant::Mav),
            "reverse_chain" => Ok(Variant::ReverseChain),
            "abc_indicator" => Ok(Variant::AbcIndicator),
            other => Err(format!(
                "unknown variant `{other}` (sav|mav|reverse_chain|abc_indicator)"
            )),
        }
    }
}

/// Tag on a realised sample; the reverse-chain estimator emits two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTag {
    Sav,
    Mav,
    ReverseChainW,
    ReverseChainV,
    AbcIndicator,
}

impl std::fmt::Display for SampleTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SampleTag::Sav => "sav",
            SampleTag::Mav => "mav",
            SampleTag::ReverseChainW => "reverse_chain_w",
            SampleTag::ReverseChainV => "reverse_chain_v",
            SampleTag::AbcIndicator => "abc_indicator",
        };
        write!(f, "{s}")
    }
}

/// What quantity a sample estimates on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    /// `1/Z(theta)` (normalised base density supplied by the caller).
    #[serde(rename = "inv_Z")]
    InvZ,
    /// `Z(theta_ref)/Z(theta)` (default unnormalised base).
    #[serde(rename = "ratio_Zref_over_Z")]
    RatioZrefOverZ,
    /// Auxiliary-chain marginal at the observed data.
    #[serde(rename = "pi_n_at_y")]
    PiNAtY,
    /// Indicator-based likelihood estimate.
    #[serde(rename = "abc_likelihood")]
    AbcLikelihood,
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TargetKind::InvZ => "inv_Z",
            TargetKind::RatioZrefOverZ => "ratio_Zref_over_Z",
            TargetKind::PiNAtY => "pi_n_at_y",
            TargetKind::AbcLikelihood => "abc_likelihood",
        };
        write!(f, "{s}")
    }
}

/// Distance norm for the indicator estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Exact equality of configurations; `epsilon` is ignored.
    ExactMatch,
    /// Count of disagreeing sites compared against `epsilon`.
    Hamming,
}

impl std::str::FromStr for DistanceKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact_match" => Ok(DistanceKind::ExactMatch),
            "hamming" => Ok(DistanceKind::Hamming),
            other => Err(format!("unknown distance `{other}` (exact_match|hamming)")),
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceKind::ExactMatch => write!(f, "exact_match"),
            DistanceKind::Hamming => write!(f, "hamming"),
        }
    }
}

/// Acceptance threshold and distance for the indicator estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub epsilon: f64,
    pub distance: DistanceKind,
}

impl AbcConfig {
    pub fn new(epsilon: f64, distance: DistanceKind) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::InvalidConfig {
                field: "epsilon",
                reason: format!("must be >= 0, got {epsilon}"),
            });
        }
        Ok(Self { epsilon, distance })
    }

    /// Exact-match acceptance (the discrete `epsilon = 0` case).
    pub fn exact() -> Self {
        Self {
            epsilon: 0.0,
            distance: DistanceKind::ExactMatch,
        }
    }

    pub fn accepts(&self, y: &LatticeConfig, x: &LatticeConfig) -> bool {
        match self.distance {
            DistanceKind::ExactMatch => x == y,
            DistanceKind::Hamming => (y.hamming_distance(x) as f64) <= self.epsilon,
        }
    }
}

/// Direction in which a recorded chain was simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

/// Recorded auxiliary chain. For reverse traces, states are stored in chain
/// order `x_1..x_n` (so the last state is the conditioning dataset) and
/// `levels[i-1]` is the kernel level of the transition between `x_i` and
/// `x_{i+1}`. Forward traces store simulation order starting at the initial
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub states: Vec<LatticeConfig>,
    pub levels: Vec<usize>,
    pub direction: Direction,
}

/// One realised estimator draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSample {
    pub log_value: f64,
    pub tag: SampleTag,
    pub target: TargetKind,
    pub trace: Option<ChainTrace>,
}

impl EstimateSample {
    /// Value on the natural scale.
    pub fn exp_value(&self) -> f64 {
        self.log_value.exp()
    }

    /// Rebase onto a normalised base density by supplying its log
    /// normaliser: ratio targets become literal `1/Z` targets.
    pub fn with_base_log_norm(mut self, log_z_ref: f64) -> Self {
        debug_assert!(matches!(
            self.target,
            TargetKind::RatioZrefOverZ | TargetKind::PiNAtY
        ));
        self.log_value -= log_z_ref;
        if self.target == TargetKind::RatioZrefOverZ {
            self.target = TargetKind::InvZ;
        }
        self
    }
}

/// One estimation run: ladder size `a`, burn-in `b` (chain length is
/// `n = a + b`), replicate count, root seed and the estimator variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub a: usize,
    pub b: usize,
    pub replicates: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl EstimatorConfig {
    pub fn new(a: usize, b: usize, replicates: usize, seed: u64, variant: Variant) -> Result<Self> {
        if a < 2 {
            return Err(Error::InvalidConfig {
                field: "a",
                reason: format!("need at least 2 annealing levels, got {a}"),
            });
        }
        if replicates < 1 {
            return Err(Error::InvalidConfig {
                field: "replicates",
                reason: "need at least 1 replicate".into(),
            });
        }
        Ok(Self {
            a,
            b,
            replicates,
            seed,
            variant,
        })
    }

    /// Total chain length `n = a + b`.
    pub fn n(&self) -> usize {
        self.a + self.b
    }
}

/// Prebuilt kernels for every ladder level of one run.
struct Ladder<'a> {
    model: &'a MrfModel,
    theta: ThetaParam,
    schedule: &'a BridgeSchedule,
    kernels: Vec<AnnealKernel<'a>>, // kernels[level - 1]
}

impl<'a> Ladder<'a> {
    fn new(
        model: &'a MrfModel,
        theta: ThetaParam,
        schedule: &'a BridgeSchedule,
        sweeps: usize,
    ) -> Result<Self> {
        let kernels = (1..=schedule.levels())
            .map(|level| {
                AnnealKernel::new(model, theta, schedule.clone(), level)
                    .map(|k| k.with_sweeps(sweeps))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            model,
            theta,
            schedule,
            kernels,
        })
    }

    fn levels(&self) -> usize {
        self.schedule.levels()
    }

    fn kernel(&self, level: usize) -> &AnnealKernel<'a> {
        &self.kernels[level - 1]
    }

    fn target_kernel(&self) -> &AnnealKernel<'a> {
        self.kernel(self.levels())
    }

    fn bridge(&self, config: &LatticeConfig, level: usize) -> Result<f64> {
        log_bridge_gamma(self.model, config, &self.theta, self.schedule, level)
    }
}

/// Burn-in stage: `b` applications of the target-level kernel from `init`.
fn burn_in<R: Rng + ?Sized>(
    kernel: &AnnealKernel,
    b: usize,
    init: LatticeConfig,
    rng: &mut R,
    mut record: Option<&mut Vec<LatticeConfig>>,
) -> LatticeConfig {
    let mut x = init;
    for _ in 0..b {
        kernel.step_in_place(&mut x, rng);
        if let Some(states) = record.as_deref_mut() {
            states.push(x.clone());
        }
    }
    x
}

/// Descending annealing stage shared by the multiple-auxiliary-variable and
/// reverse-chain paths: from `x_a`, apply kernels `a-1, ..., 2` and
/// accumulate `sum_{i=2}^{a} [bridge(x_i, i-1) - bridge(x_i, i)]`.
///
/// Returns the log weight and the visited states `x_{a-1}..x_2` in
/// simulation order. Identical inputs and stream produce bitwise identical
/// weights on both paths.
fn anneal_down<R: Rng + ?Sized>(
    ladder: &Ladder,
    x_a: LatticeConfig,
    rng: &mut R,
) -> Result<(f64, LatticeConfig, Vec<LatticeConfig>)> {
    let a = ladder.levels();
    let mut v = ladder.bridge(&x_a, a - 1)? - ladder.bridge(&x_a, a)?;
    let mut states = Vec::with_capacity(a.saturating_sub(2));
    let mut x = x_a;
    for level in (2..a).rev() {
        ladder.kernel(level).step_in_place(&mut x, rng);
        v += ladder.bridge(&x, level - 1)? - ladder.bridge(&x, level)?;
        states.push(x.clone());
    }
    Ok((v, x, states))
}

fn require_burn_in(b: usize, what: &'static str) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidConfig {
            field: "b",
            reason: format!("{what} substitutes a burn-in chain for an exact sampler; b must be >= 1"),
        });
    }
    Ok(())
}

/// Single-auxiliary-variable estimate: one burn-in draw `x`, log value
/// `log_gamma(x|theta_ref) - log_gamma(x|theta)`.
pub fn sav_estimate<R: Rng + ?Sized>(
    model: &MrfModel,
    theta: &ThetaParam,
    b: usize,
    rng: &mut R,
) -> Result<EstimateSample> {
    sav_estimate_sweeps(model, theta, b, 1, rng)
}

pub(crate) fn sav_estimate_sweeps<R: Rng + ?Sized>(
    model: &MrfModel,
    theta: &ThetaParam,
    b: usize,
    sweeps: usize,
    rng: &mut R,
) -> Result<EstimateSample> {
    require_burn_in(b, "sav_estimate")?;
    let kernel = AnnealKernel::target(model, *theta).with_sweeps(sweeps);
    let init = LatticeConfig::random_uniform(model.rows(), model.cols(), rng);
    let x = burn_in(&kernel, b, init, rng, None);
    let log_value = log_gamma(model, &x, theta.theta_ref)? - log_gamma(model, &x, theta.theta)?;
    Ok(EstimateSample {
        log_value,
        tag: SampleTag::Sav,
        target: TargetKind::RatioZrefOverZ,
        trace: None,
    })
}

/// Annealed (multiple-auxiliary-variable) estimate with a uniform random
/// initial state for the burn-in stage.
pub fn mav_estimate<R: Rng + ?Sized>(
    model: &MrfModel,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    b: usize,
    rng: &mut R,
    record_trace: bool,
) -> Result<EstimateSample> {
    mav_estimate_sweeps(model, theta, schedule, b, 1, rng, record_trace)
}

pub(crate) fn mav_estimate_sweeps<R: Rng + ?Sized>(
    model: &MrfModel,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    b: usize,
    sweeps: usize,
    rng: &mut R,
    record_trace: bool,
) -> Result<EstimateSample> {
    require_burn_in(b, "mav_estimate")?;
    let ladder = Ladder::new(model, *theta, schedule, sweeps)?;
    let init = LatticeConfig::random_uniform(model.rows(), model.cols(), rng);
    mav_impl(&ladder, b, init, rng, record_trace)
}

/// Annealed estimate from an explicit initial state (the two-stage view:
/// stage one may start anywhere, including the observed data). Permits
/// `b = 0`, in which case `x_a` is the initial state itself.
pub fn mav_estimate_with_init<R: Rng + ?Sized>(
    model: &MrfModel,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    b: usize,
    init: &LatticeConfig,
    rng: &mut R,
    record_trace: bool,
) -> Result<EstimateSample> {
    model.check_dims(init)?;
    let ladder = Ladder::new(model, *theta, schedule, 1)?;
    mav_impl(&ladder, b, init.clone(), rng, record_trace)
}

fn mav_impl<R: Rng + ?Sized>(
    ladder: &Ladder,
    b: usize,
    init: LatticeConfig,
    rng: &mut R,
    record_trace: bool,
) -> Result<EstimateSample> {
    let a = ladder.levels();
    let mut burn_states = record_trace.then(|| vec![init.clone()]);
    let x_a = burn_in(
        ladder.target_kernel(),
        b,
        init,
        rng,
        burn_states.as_mut(),
    );
    let (log_value, _, descent_states) = anneal_down(ladder, x_a, rng)?;
    let trace = burn_states.map(|mut states| {
        let mut levels = vec![a; b];
        states.extend(descent_states);
        levels.extend((2..a).rev());
        ChainTrace {
            states,
            levels,
            direction: Direction::Forward,
        }
    });
    Ok(EstimateSample {
        log_value,
        tag: SampleTag::Mav,
        target: TargetKind::RatioZrefOverZ,
        trace,
    })
}

/// The two samples produced by one reverse-chain simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseChainSample {
    /// Importance weight targeting the chain marginal at the data (times
    /// the base normaliser when the base is unnormalised).
    pub w: EstimateSample,
    /// Derived ratio estimate; `w.log_value = log_gamma(y|theta) + v.log_value`
    /// holds exactly.
    pub v: EstimateSample,
}

/// Reverse-chain estimate: pin `x_n = y`, simulate
/// `x_{n-1}, ..., x_1` with kernels `K_{n-1}, ..., K_1` (levels above `a`
/// reuse the target-level kernel; their weight factors cancel identically and
/// are omitted), and importance-weight. `b = 0` is permitted.
pub fn abc_reverse_chain_estimate<R: Rng + ?Sized>(
    model: &MrfModel,
    y: &LatticeConfig,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    b: usize,
    rng: &mut R,
    record_trace: bool,
) -> Result<ReverseChainSample> {
    abc_reverse_chain_estimate_sweeps(model, y, theta, schedule, b, 1, rng, record_trace)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn abc_reverse_chain_estimate_sweeps<R: Rng + ?Sized>(
    model: &MrfModel,
    y: &LatticeConfig,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    b: usize,
    sweeps: usize,
    rng: &mut R,
    record_trace: bool,
) -> Result<ReverseChainSample> {
    model.check_dims(y)?;
    let ladder = Ladder::new(model, *theta, schedule, sweeps)?;
    reverse_impl(&ladder, y, b, rng, record_trace)
}

fn reverse_impl<R: Rng + ?Sized>(
    ladder: &Ladder,
    y: &LatticeConfig,
    b: usize,
    rng: &mut R,
    record_trace: bool,
) -> Result<ReverseChainSample> {
    let a = ladder.levels();
    // x_{n-1}, ..., x_a: b target-level steps down from x_n = y
    let mut down_states = record_trace.then(Vec::new);
    let x_a = burn_in(
        ladder.target_kernel(),
        b,
        y.clone(),
        rng,
        down_states.as_mut(),
    );
    let (v_log, x_2, descent_states) = anneal_down(ladder, x_a, rng)?;
    // final transition to x_1 under the base-level kernel
    let x_1 = ladder.kernel(1).step(&x_2, rng);
    let trace = record_trace.then(|| {
        let n = a + b;
        let mut states = Vec::with_capacity(n);
        states.push(x_1.clone());
        states.extend(descent_states.into_iter().rev());
        let mut down = down_states.unwrap_or_default();
        // burn_in recorded x_{n-1}..x_a in simulation order; drop x_a (it is
        // either the last descent state start or y itself) and reverse
        if b > 0 {
            states.push(down.pop().expect("b steps recorded"));
            states.extend(down.into_iter().rev());
        }
        states.push(y.clone());
        let levels = (1..n).map(|i| i.min(a)).collect();
        ChainTrace {
            states,
            levels,
            direction: Direction::Reverse,
        }
    });
    let w_log = log_gamma(ladder.model, y, ladder.theta.theta)? + v_log;
    Ok(ReverseChainSample {
        w: EstimateSample {
            log_value: w_log,
            tag: SampleTag::ReverseChainW,
            target: TargetKind::PiNAtY,
            trace,
        },
        v: EstimateSample {
            log_value: v_log,
            tag: SampleTag::ReverseChainV,
            target: TargetKind::RatioZrefOverZ,
            trace: None,
        },
    })
}

/// Indicator likelihood estimate: one burn-in draw scored against the
/// observed data. Log value is `0` on acceptance, `-inf` otherwise.
pub fn abc_indicator_estimate<R: Rng + ?Sized>(
    model: &MrfModel,
    y: &LatticeConfig,
    theta: &ThetaParam,
    abc: &AbcConfig,
    b: usize,
    rng: &mut R,
) -> Result<EstimateSample> {
    abc_indicator_estimate_sweeps(model, y, theta, abc, b, 1, rng)
}

pub(crate) fn abc_indicator_estimate_sweeps<R: Rng + ?Sized>(
    model: &MrfModel,
    y: &LatticeConfig,
    theta: &ThetaParam,
    abc: &AbcConfig,
    b: usize,
    sweeps: usize,
    rng: &mut R,
) -> Result<EstimateSample> {
    require_burn_in(b, "abc_indicator_estimate")?;
    model.check_dims(y)?;
    let kernel = AnnealKernel::target(model, *theta).with_sweeps(sweeps);
    let init = LatticeConfig::random_uniform(model.rows(), model.cols(), rng);
    let x = burn_in(&kernel, b, init, rng, None);
    let log_value = if abc.accepts(y, &x) { 0.0 } else { f64::NEG_INFINITY };
    Ok(EstimateSample {
        log_value,
        tag: SampleTag::AbcIndicator,
        target: TargetKind::AbcLikelihood,
        trace: None,
    })
}

/// Result of the two-arm equivalence check between the annealed two-stage
/// procedure and the reverse-chain estimator.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceReport {
    /// Forced-fixture arm: stage two driven from `x_a = y` on a shared
    /// stream must reproduce the reverse-chain `v` bitwise.
    pub bitwise_equal: bool,
    pub forced_mav_v: f64,
    pub forced_reverse_v: f64,
    /// Distributional arm: two-sample KS between replicate `v` draws of the
    /// two procedures started from the same state.
    pub ks: KsResult,
    pub ks_replicates: usize,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.bitwise_equal && self.ks.p_value > EQUIVALENCE_KS_P_THRESHOLD
    }
}

/// Check that the annealed two-stage procedure and the reverse-chain
/// estimator agree: bitwise under a shared stream when stage one lands on
/// `x_a = y`, and in distribution (KS at [`EQUIVALENCE_KS_REPLICATES`]
/// replicates) when both run their `b`-step first stage from `y`.
pub fn mav_reverse_equivalence_check(
    model: &MrfModel,
    y: &LatticeConfig,
    theta: &ThetaParam,
    schedule: &BridgeSchedule,
    b: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    model.check_dims(y)?;
    let ladder = Ladder::new(model, *theta, schedule, 1)?;

    // forced fixture: identical stream, x_a pinned to y on both sides
    let forced_seed = SeedMix::new(seed).mix_str("equivalence-forced").finish();
    let forced_mav_v = {
        let mut rng = replicate_rng(forced_seed, 0);
        mav_impl(&ladder, 0, y.clone(), &mut rng, false)?.log_value
    };
    let forced_reverse_v = {
        let mut rng = replicate_rng(forced_seed, 0);
        reverse_impl(&ladder, y, 0, &mut rng, false)?.v.log_value
    };
    let bitwise_equal = forced_mav_v.to_bits() == forced_reverse_v.to_bits();

    // distributional arm: independent streams, first stage of length b from y
    let mav_seed = SeedMix::new(seed).mix_str("equivalence-mav").finish();
    let rev_seed = SeedMix::new(seed).mix_str("equivalence-reverse").finish();
    let mav_vs: Vec<f64> = (0..EQUIVALENCE_KS_REPLICATES as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(mav_seed, r);
            mav_impl(&ladder, b, y.clone(), &mut rng, false).map(|s| s.log_value)
        })
        .collect::<Result<_>>()?;
    let rev_vs: Vec<f64> = (0..EQUIVALENCE_KS_REPLICATES as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(rev_seed, r);
            reverse_impl(&ladder, y, b, &mut rng, false).map(|s| s.v.log_value)
        })
        .collect::<Result<_>>()?;
    let ks = ks_two_sample(&mav_vs, &rev_vs);

    Ok(EquivalenceReport {
        bitwise_equal,
        forced_mav_v,
        forced_reverse_v,
        ks,
        ks_replicates: EQUIVALENCE_KS_REPLICATES,
    })
}

/// Everything needed to run one batch of replicated estimates.
#[derive(Debug, Clone, Copy)]
pub struct RunSpec<'a> {
    pub model: &'a MrfModel,
    pub theta: ThetaParam,
    pub schedule: &'a BridgeSchedule,
    /// Observed dataset; required by the reverse-chain and indicator
    /// variants.
    pub y: Option<&'a LatticeConfig>,
    /// Indicator settings; required by the indicator variant.
    pub abc: Option<&'a AbcConfig>,
    pub config: &'a EstimatorConfig,
    /// Kernel applications per ladder level (default 1).
    pub sweeps_per_level: usize,
}

impl<'a> RunSpec<'a> {
    pub fn new(
        model: &'a MrfModel,
        theta: ThetaParam,
        schedule: &'a BridgeSchedule,
        config: &'a EstimatorConfig,
    ) -> Self {
        Self {
            model,
            theta,
            schedule,
            y: None,
            abc: None,
            config,
            sweeps_per_level: 1,
        }
    }

    pub fn with_data(mut self, y: &'a LatticeConfig) -> Self {
        self.y = Some(y);
        self
    }

    pub fn with_abc(mut self, abc: &'a AbcConfig) -> Self {
        self.abc = Some(abc);
        self
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.sweeps_per_level = sweeps.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.config.a != self.schedule.levels() {
            return Err(Error::InvalidConfig {
                field: "a",
                reason: format!(
                    "config has a = {}, schedule has {} levels",
                    self.config.a,
                    self.schedule.levels()
                ),
            });
        }
        match self.config.variant {
            Variant::Sav | Variant::Mav | Variant::AbcIndicator => {
                require_burn_in(self.config.b, "this variant")?
            }
            Variant::ReverseChain => {}
        }
        match self.config.variant {
            Variant::ReverseChain | Variant::AbcIndicator => {
                let y = self.y.ok_or(Error::InvalidConfig {
                    field: "data",
                    reason: "this variant conditions on an observed dataset".into(),
                })?;
                self.model.check_dims(y)?;
            }
            _ => {}
        }
        if self.config.variant == Variant::AbcIndicator && self.abc.is_none() {
            return Err(Error::InvalidConfig {
                field: "abc",
                reason: "indicator variant needs epsilon and distance settings".into(),
            });
        }
        Ok(())
    }
}

/// Run all replicates of a spec on independent streams (replicate `r` uses
/// stream `r` of the config seed). Replicates execute in parallel; output
/// order and values are independent of thread count. The reverse-chain
/// variant yields a `w` and a `v` sample per replicate, in that order.
pub fn run_replicates(spec: &RunSpec) -> Result<Vec<EstimateSample>> {
    spec.validate()?;
    let ladder = Ladder::new(spec.model, spec.theta, spec.schedule, spec.sweeps_per_level)?;
    let cfg = spec.config;
    let per_replicate: Vec<Vec<EstimateSample>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg.seed, r);
            match cfg.variant {
                Variant::Sav => sav_estimate_sweeps(
                    spec.model,
                    &spec.theta,
                    cfg.b,
                    spec.sweeps_per_level,
                    &mut rng,
                )
                .map(|s| vec![s]),
                Variant::Mav => {
                    let init = LatticeConfig::random_uniform(
                        spec.model.rows(),
                        spec.model.cols(),
                        &mut rng,
                    );
                    mav_impl(&ladder, cfg.b, init, &mut rng, false).map(|s| vec![s])
                }
                Variant::ReverseChain => {
                    let y = spec.y.expect("validated");
                    reverse_impl(&ladder, y, cfg.b, &mut rng, false).map(|s| vec![s.w, s.v])
                }
                Variant::AbcIndicator => {
                    let y = spec.y.expect("validated");
                    let abc = spec.abc.expect("validated");
                    abc_indicator_estimate_sweeps(
                        spec.model,
                        y,
                        &spec.theta,
                        abc,
                        cfg.b,
                        spec.sweeps_per_level,
                        &mut rng,
                    )
                    .map(|s| vec![s])
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(per_replicate.into_iter().flatten().collect())
}

/// Kernel applications consumed by one replicate of a variant; the cost unit
/// for efficiency comparisons.
pub fn simulations_per_replicate(variant: Variant, a: usize, b: usize) -> u64 {
    match variant {
        Variant::Sav | Variant::AbcIndicator => b as u64,
        Variant::Mav => (b + a.saturating_sub(2)) as u64,
        Variant::ReverseChain => (b + a - 1) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrf::{exact_likelihood, exact_log_partition, Boundary};
    use crate::stats::{mean, standard_error};
    use approx::assert_relative_eq;

    fn model_1x2() -> MrfModel {
        MrfModel::new(1, 2, Boundary::Free).unwrap()
    }

    fn model_2x2() -> MrfModel {
        MrfModel::new(2, 2, Boundary::Free).unwrap()
    }

    fn ratio_target(model: &MrfModel, theta: &ThetaParam) -> f64 {
        (exact_log_partition(model, theta.theta_ref).unwrap()
            - exact_log_partition(model, theta.theta).unwrap())
        .exp()
    }

    #[test]
    fn sav_identical_parameters_is_zero() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.8, 0.8).unwrap();
        for r in 0..20 {
            let mut rng = replicate_rng(3, r);
            let s = sav_estimate(&m, &theta, 5, &mut rng).unwrap();
            assert_eq!(s.log_value, 0.0);
        }
    }

    #[test]
    fn sav_degenerate_single_site() {
        let m = MrfModel::new(1, 1, Boundary::Free).unwrap();
        let theta = ThetaParam::new(0.9, 0.1).unwrap();
        let mut rng = replicate_rng(4, 0);
        let s = sav_estimate(&m, &theta, 3, &mut rng).unwrap();
        assert_eq!(s.log_value, 0.0); // no edges, gamma == 1
    }

    #[test]
    fn sav_requires_burn_in() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let mut rng = replicate_rng(0, 0);
        assert!(matches!(
            sav_estimate(&m, &theta, 0, &mut rng),
            Err(Error::InvalidConfig { field: "b", .. })
        ));
    }

    #[test]
    fn sav_mean_matches_ratio_oracle() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(2).unwrap();
        let cfg = EstimatorConfig::new(2, 1000, 20_000, 42, Variant::Sav).unwrap();
        let samples = run_replicates(&RunSpec::new(&m, theta, &schedule, &cfg)).unwrap();
        let values: Vec<f64> = samples.iter().map(EstimateSample::exp_value).collect();
        let target = ratio_target(&m, &theta);
        let se = standard_error(&values).unwrap();
        assert!(
            (mean(&values) - target).abs() <= 3.0 * se,
            "mean {} vs target {target} (se {se})",
            mean(&values)
        );
    }

    #[test]
    fn mav_equals_sav_for_two_levels_shared_stream() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(2).unwrap();
        for r in 0..50 {
            let mut rng_a = replicate_rng(7, r);
            let mut rng_b = replicate_rng(7, r);
            let sav = sav_estimate(&m, &theta, 20, &mut rng_a).unwrap();
            let mav = mav_estimate(&m, &theta, &schedule, 20, &mut rng_b, false).unwrap();
            assert_eq!(sav.log_value.to_bits(), mav.log_value.to_bits());
        }
    }

    #[test]
    fn mav_identical_parameters_zero_variance() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.5, 0.5).unwrap();
        let schedule = BridgeSchedule::linear(6).unwrap();
        for r in 0..50 {
            let mut rng = replicate_rng(11, r);
            let s = mav_estimate(&m, &theta, &schedule, 10, &mut rng, false).unwrap();
            assert_eq!(s.log_value, 0.0);
        }
    }

    #[test]
    fn mav_mean_matches_ratio_oracle_and_beats_sav_variance() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let target = ratio_target(&m, &theta);

        let run = |a: usize, reps: usize| {
            let schedule = BridgeSchedule::linear(a).unwrap();
            let cfg = EstimatorConfig::new(a, 1000, reps, 99, Variant::Mav).unwrap();
            let samples = run_replicates(&RunSpec::new(&m, theta, &schedule, &cfg)).unwrap();
            samples
                .iter()
                .map(EstimateSample::exp_value)
                .collect::<Vec<f64>>()
        };
        let coarse = run(2, 30_000);
        let fine = run(10, 30_000);
        let se = standard_error(&fine).unwrap();
        assert!(
            (mean(&fine) - target).abs() <= 3.0 * se,
            "mean {} vs {target}",
            mean(&fine)
        );
        let var_coarse = crate::stats::sample_variance(&coarse).unwrap();
        let var_fine = crate::stats::sample_variance(&fine).unwrap();
        assert!(
            var_fine < var_coarse,
            "annealing should reduce variance: {var_fine} vs {var_coarse}"
        );
    }

    #[test]
    fn mav_trace_shape() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(5).unwrap();
        let mut rng = replicate_rng(13, 0);
        let s = mav_estimate(&m, &theta, &schedule, 3, &mut rng, true).unwrap();
        let trace = s.trace.unwrap();
        assert_eq!(trace.direction, Direction::Forward);
        // init + 3 burn-in + 3 descent states (levels 4,3,2)
        assert_eq!(trace.states.len(), 7);
        assert_eq!(trace.levels, vec![5, 5, 5, 4, 3, 2]);
    }

    #[test]
    fn reverse_chain_identity_holds_bitwise() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(10).unwrap();
        let y = LatticeConfig::all_plus(2, 2);
        let lg_y = log_gamma(&m, &y, theta.theta).unwrap();
        for r in 0..200 {
            let mut rng = replicate_rng(17, r);
            let s = abc_reverse_chain_estimate(&m, &y, &theta, &schedule, 5, &mut rng, false)
                .unwrap();
            assert_eq!(s.w.log_value.to_bits(), (lg_y + s.v.log_value).to_bits());
            assert_eq!(s.w.target, TargetKind::PiNAtY);
            assert_eq!(s.v.target, TargetKind::RatioZrefOverZ);
        }
    }

    #[test]
    fn reverse_chain_identity_bridge() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.5, 0.5).unwrap();
        let schedule = BridgeSchedule::linear(8).unwrap();
        let y = LatticeConfig::all_plus(2, 2);
        let mut rng = replicate_rng(19, 0);
        let s = abc_reverse_chain_estimate(&m, &y, &theta, &schedule, 4, &mut rng, false).unwrap();
        assert_eq!(s.v.log_value, 0.0);
        assert_relative_eq!(
            s.w.exp_value(),
            log_gamma(&m, &y, 0.5).unwrap().exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn reverse_chain_unbiased_for_every_dataset() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(10).unwrap();
        let ratio = ratio_target(&m, &theta);
        for s_idx in 0..4u32 {
            let y = LatticeConfig::from_index(1, 2, s_idx);
            let cfg = EstimatorConfig::new(10, 200, 20_000, 23, Variant::ReverseChain).unwrap();
            let spec = RunSpec::new(&m, theta, &schedule, &cfg).with_data(&y);
            let samples = run_replicates(&spec).unwrap();
            let w_values: Vec<f64> = samples
                .iter()
                .filter(|s| s.tag == SampleTag::ReverseChainW)
                .map(EstimateSample::exp_value)
                .collect();
            assert_eq!(w_values.len(), 20_000);
            let target = log_gamma(&m, &y, theta.theta).unwrap().exp() * ratio;
            let se = standard_error(&w_values).unwrap();
            assert!(
                (mean(&w_values) - target).abs() <= 3.0 * se,
                "y={}: mean {} vs target {target} (se {se})",
                y.render(),
                mean(&w_values)
            );
        }
    }

    #[test]
    fn reverse_chain_trace_pins_data_last() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(4).unwrap();
        let y = LatticeConfig::new(2, 2, vec![1, -1, -1, 1]).unwrap();
        for b in [0, 1, 3] {
            let mut rng = replicate_rng(29, b as u64);
            let s =
                abc_reverse_chain_estimate(&m, &y, &theta, &schedule, b, &mut rng, true).unwrap();
            let trace = s.w.trace.unwrap();
            assert_eq!(trace.direction, Direction::Reverse);
            assert_eq!(trace.states.len(), 4 + b);
            assert_eq!(trace.states.last().unwrap(), &y);
            let expect_levels: Vec<usize> = (1..4 + b).map(|i| i.min(4)).collect();
            assert_eq!(trace.levels, expect_levels);
        }
    }

    #[test]
    fn equivalence_check_forced_and_distributional() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(10).unwrap();
        let y = LatticeConfig::all_plus(1, 2);
        let report = mav_reverse_equivalence_check(&m, &y, &theta, &schedule, 0, 5151).unwrap();
        assert!(report.bitwise_equal);
        assert!(
            report.ks.p_value > 0.01,
            "ks p = {} (D = {})",
            report.ks.p_value,
            report.ks.statistic
        );
        assert!(report.passed());
    }

    #[test]
    fn equivalence_check_two_levels() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.6, 0.0).unwrap();
        let schedule = BridgeSchedule::linear(2).unwrap();
        let y = LatticeConfig::all_plus(2, 2);
        let report = mav_reverse_equivalence_check(&m, &y, &theta, &schedule, 2, 77).unwrap();
        assert!(report.bitwise_equal);
        assert!(report.passed());
    }

    #[test]
    fn equivalence_check_identity_bridge() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.4, 0.4).unwrap();
        let schedule = BridgeSchedule::linear(5).unwrap();
        let y = LatticeConfig::all_plus(1, 2);
        let report = mav_reverse_equivalence_check(&m, &y, &theta, &schedule, 1, 3).unwrap();
        assert_eq!(report.forced_mav_v, 0.0);
        assert_eq!(report.forced_reverse_v, 0.0);
        assert_eq!(report.ks.statistic, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn abc_indicator_vacuous_threshold() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.5, 0.0).unwrap();
        let y = LatticeConfig::all_plus(2, 2);
        let abc = AbcConfig::new(4.0, DistanceKind::Hamming).unwrap();
        for r in 0..30 {
            let mut rng = replicate_rng(31, r);
            let s = abc_indicator_estimate(&m, &y, &theta, &abc, 2, &mut rng).unwrap();
            assert_eq!(s.log_value, 0.0);
        }
    }

    #[test]
    fn abc_indicator_single_site_rate() {
        let m = MrfModel::new(1, 1, Boundary::Free).unwrap();
        let theta = ThetaParam::new(0.7, 0.0).unwrap();
        let y = LatticeConfig::all_plus(1, 1);
        let abc = AbcConfig::exact();
        let reps = 20_000;
        let mut hits = 0;
        for r in 0..reps {
            let mut rng = replicate_rng(37, r);
            let s = abc_indicator_estimate(&m, &y, &theta, &abc, 1, &mut rng).unwrap();
            if s.log_value == 0.0 {
                hits += 1;
            }
        }
        let rate = hits as f64 / reps as f64;
        let se = (0.5 * 0.5 / reps as f64).sqrt();
        assert!((rate - 0.5).abs() <= 3.0 * se, "rate {rate}");
    }

    #[test]
    fn abc_indicator_rate_matches_exact_likelihood() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.0).unwrap();
        let y = LatticeConfig::all_plus(1, 2);
        let schedule = BridgeSchedule::linear(2).unwrap();
        let abc = AbcConfig::exact();
        let cfg = EstimatorConfig::new(2, 50, 20_000, 41, Variant::AbcIndicator).unwrap();
        let spec = RunSpec::new(&m, theta, &schedule, &cfg)
            .with_data(&y)
            .with_abc(&abc);
        let samples = run_replicates(&spec).unwrap();
        let rate = samples.iter().map(EstimateSample::exp_value).sum::<f64>()
            / samples.len() as f64;
        let p = exact_likelihood(&m, &y, 0.8).unwrap();
        let se = (p * (1.0 - p) / samples.len() as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * se, "rate {rate} vs exact {p}");
    }

    #[test]
    fn abc_acceptance_monotone_in_epsilon() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.5, 0.0).unwrap();
        let y = LatticeConfig::all_plus(2, 2);
        let reps = 4000;
        let mut prev = -1.0;
        for eps in [0.0, 1.0, 2.0, 4.0] {
            let abc = AbcConfig::new(eps, DistanceKind::Hamming).unwrap();
            let mut hits = 0;
            for r in 0..reps {
                // same streams across eps: coupled comparison is exactly monotone
                let mut rng = replicate_rng(43, r);
                let s = abc_indicator_estimate(&m, &y, &theta, &abc, 10, &mut rng).unwrap();
                if s.log_value == 0.0 {
                    hits += 1;
                }
            }
            let rate = hits as f64 / reps as f64;
            assert!(rate >= prev, "rate dropped: {rate} < {prev} at eps {eps}");
            prev = rate;
        }
        assert_eq!(prev, 1.0); // eps >= sites accepts everything
    }

    #[test]
    fn normalised_base_hook_targets_inverse_z() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(5).unwrap();
        let log_z_ref = exact_log_partition(&m, 0.2).unwrap();
        let inv_z = (-exact_log_partition(&m, 0.8).unwrap()).exp();
        let mut values = Vec::new();
        for r in 0..20_000 {
            let mut rng = replicate_rng(47, r);
            let s = mav_estimate(&m, &theta, &schedule, 100, &mut rng, false)
                .unwrap()
                .with_base_log_norm(log_z_ref);
            assert_eq!(s.target, TargetKind::InvZ);
            values.push(s.exp_value());
        }
        let se = standard_error(&values).unwrap();
        assert!(
            (mean(&values) - inv_z).abs() <= 3.0 * se,
            "mean {} vs 1/Z {}",
            mean(&values),
            inv_z
        );
    }

    #[test]
    fn run_spec_validation_errors() {
        let m = model_2x2();
        let theta = ThetaParam::new(0.5, 0.0).unwrap();
        let schedule = BridgeSchedule::linear(4).unwrap();
        let mismatched = EstimatorConfig::new(5, 10, 1, 0, Variant::Mav).unwrap();
        assert!(matches!(
            run_replicates(&RunSpec::new(&m, theta, &schedule, &mismatched)),
            Err(Error::InvalidConfig { field: "a", .. })
        ));
        let reverse = EstimatorConfig::new(4, 10, 1, 0, Variant::ReverseChain).unwrap();
        assert!(matches!(
            run_replicates(&RunSpec::new(&m, theta, &schedule, &reverse)),
            Err(Error::InvalidConfig { field: "data", .. })
        ));
        let abc = EstimatorConfig::new(4, 10, 1, 0, Variant::AbcIndicator).unwrap();
        let y = LatticeConfig::all_plus(2, 2);
        assert!(matches!(
            run_replicates(&RunSpec::new(&m, theta, &schedule, &abc).with_data(&y)),
            Err(Error::InvalidConfig { field: "abc", .. })
        ));
    }

    #[test]
    fn run_replicates_deterministic_and_order_stable() {
        let m = model_1x2();
        let theta = ThetaParam::new(0.8, 0.2).unwrap();
        let schedule = BridgeSchedule::linear(3).unwrap();
        let cfg = EstimatorConfig::new(3, 10, 500, 314, Variant::Mav).unwrap();
        let spec = RunSpec::new(&m, theta, &schedule, &cfg);
        let one: Vec<f64> = run_replicates(&spec)
            .unwrap()
            .iter()
            .map(|s| s.log_value)
            .collect();
        let two: Vec<f64> = run_replicates(&spec)
            .unwrap()
            .iter()
            .map(|s| s.log_value)
            .collect();
        assert_eq!(one, two);
    }

    #[test]
    fn estimator_config_validation() {
        assert!(EstimatorConfig::new(1, 0, 1, 0, Variant::Sav).is_err());
        assert!(EstimatorConfig::new(2, 0, 0, 0, Variant::Sav).is_err());
        let cfg = EstimatorConfig::new(4, 6, 1, 0, Variant::Mav).unwrap();
        assert_eq!(cfg.n(), 10);
    }

    #[test]
    fn simulation_cost_accounting() {
        assert_eq!(simulations_per_replicate(Variant::Sav, 2, 100), 100);
        assert_eq!(simulations_per_replicate(Variant::Mav, 10, 100), 108);
        assert_eq!(simulations_per_replicate(Variant::ReverseChain, 10, 100), 109);
        assert_eq!(simulations_per_replicate(Variant::AbcIndicator, 2, 500), 500);
    }
}
