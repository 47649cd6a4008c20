//! Monte-Carlo campaign engine: independent trials over per-trial random
//! streams, aggregated deterministically regardless of worker count, with
//! exact binomial confidence intervals and early stopping on symbol
//! errors.

use crate::channel::{ChannelPair, PowerAudit};
use crate::error::{Error, Result};
use crate::modulo_sk::{self, ModuloSkParams, ModuloSkSchedule};
use crate::numerics::{child_seed, db_to_linear, RandomSource};
use crate::sk::{self, SkParams, SkSchedule};
use rayon::prelude::*;

/// Domain tag for per-trial message draws.
const MESSAGE_DOMAIN: u64 = 0x4D45_5353_4147_4501;
/// Domain tag for per-sweep-point campaign seeds.
const SWEEP_DOMAIN: u64 = 0x5357_4545_5000_0001;

/// Trials per parallel work unit. Chunk boundaries are fixed by trial
/// index, so float accumulation order (and therefore every reported
/// number) is identical under any worker count.
const CHUNK_TRIALS: u64 = 1024;
/// First stop-rule check happens after this many trials.
const INITIAL_BATCH: u64 = 4 * CHUNK_TRIALS;
/// Batches grow geometrically up to this size between stop-rule checks.
const MAX_BATCH: u64 = 256 * CHUNK_TRIALS;

/// Result of a single protocol trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub bit_errors: u32,
    pub symbol_error: bool,
    pub wrap_events: u32,
    pub fb_power_sum: f64,
}

/// Per-round first and second moments accumulated across trials, plus
/// wrap bookkeeping for Modulo-SK diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub trials: u64,
    /// Realized estimation error, summed per round (length N).
    pub eps_sum: Vec<f64>,
    pub eps_sq_sum: Vec<f64>,
    /// Squared feedforward amplitudes per round (length N).
    pub ff_sq_sum: Vec<f64>,
    /// Squared feedback amplitudes per feedback round (length N-1).
    pub fb_sq_sum: Vec<f64>,
    /// Trials reaching each feedback round with no wrap so far.
    pub prewrap_reached: Vec<u64>,
    /// Wraps at each feedback round among those trials. The ratio is the
    /// in-model per-round aliasing rate; cascades after a first wrap are
    /// excluded because the variance schedule no longer applies to them.
    pub prewrap_wraps: Vec<u64>,
}

impl RoundTrace {
    pub fn new(n_rounds: u32) -> Self {
        let n = n_rounds as usize;
        RoundTrace {
            trials: 0,
            eps_sum: vec![0.0; n],
            eps_sq_sum: vec![0.0; n],
            ff_sq_sum: vec![0.0; n],
            fb_sq_sum: vec![0.0; n.saturating_sub(1)],
            prewrap_reached: vec![0; n.saturating_sub(1)],
            prewrap_wraps: vec![0; n.saturating_sub(1)],
        }
    }

    pub fn merge(&mut self, other: &RoundTrace) {
        self.trials += other.trials;
        for (a, b) in self.eps_sum.iter_mut().zip(&other.eps_sum) {
            *a += b;
        }
        for (a, b) in self.eps_sq_sum.iter_mut().zip(&other.eps_sq_sum) {
            *a += b;
        }
        for (a, b) in self.ff_sq_sum.iter_mut().zip(&other.ff_sq_sum) {
            *a += b;
        }
        for (a, b) in self.fb_sq_sum.iter_mut().zip(&other.fb_sq_sum) {
            *a += b;
        }
        for (a, b) in self.prewrap_reached.iter_mut().zip(&other.prewrap_reached) {
            *a += b;
        }
        for (a, b) in self.prewrap_wraps.iter_mut().zip(&other.prewrap_wraps) {
            *a += b;
        }
    }

    /// Sample variance of the round-n estimation error (1-based round).
    pub fn eps_variance(&self, round: u32) -> f64 {
        let i = (round - 1) as usize;
        let n = self.trials as f64;
        let mean = self.eps_sum[i] / n;
        (self.eps_sq_sum[i] - n * mean * mean) / (n - 1.0)
    }

    /// Observed per-round wrap rate conditioned on no earlier wrap.
    pub fn prewrap_rate(&self, round: u32) -> Option<f64> {
        let i = (round - 1) as usize;
        let reached = self.prewrap_reached[i];
        (reached > 0).then(|| self.prewrap_wraps[i] as f64 / reached as f64)
    }
}

/// When a campaign stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_trials: u64,
    pub target_symbol_errors: u64,
    /// Campaigns never grow past the size needed to resolve this BER;
    /// the reference simulations stop at 1e-8 as well.
    pub ber_floor: f64,
}

impl StopRule {
    pub const DEFAULT_BER_FLOOR: f64 = 1e-8;

    pub fn new(max_trials: u64, target_symbol_errors: u64, ber_floor: f64) -> Result<Self> {
        if max_trials == 0 {
            return Err(Error::Config("max_trials must be positive".into()));
        }
        if target_symbol_errors < 50 {
            return Err(Error::Config(
                "target_symbol_errors below 50 gives meaningless error-rate estimates".into(),
            ));
        }
        let floor_ok = ber_floor > 0.0;
        if !floor_ok {
            return Err(Error::Config("ber_floor must be positive".into()));
        }
        Ok(StopRule {
            max_trials,
            target_symbol_errors,
            ber_floor,
        })
    }

    /// Run a fixed number of trials regardless of the error count.
    pub fn fixed_trials(max_trials: u64) -> Self {
        StopRule {
            max_trials,
            target_symbol_errors: u64::MAX,
            ber_floor: Self::DEFAULT_BER_FLOOR,
        }
    }

    fn trial_cap(&self, k_bits: u32) -> u64 {
        // Rule-of-three sizing: once 3 / ber_floor bits have been observed
        // error-free the floor is resolved, so never exceed that.
        let bits_cap = 3.0 / self.ber_floor;
        let cap = (bits_cap / f64::from(k_bits)).ceil();
        if cap >= u64::MAX as f64 {
            self.max_trials
        } else {
            self.max_trials.min((cap as u64).max(1))
        }
    }
}

/// Why a campaign ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetErrorsReached,
    MaxTrialsReached,
    BerFloorReached,
}

/// Error-rate estimate with exact binomial confidence bounds on the BER.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerEstimate {
    pub trials: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub symbol_errors: u64,
    pub ber: f64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl BerEstimate {
    pub fn from_counts(trials: u64, k_bits: u32, bit_errors: u64, symbol_errors: u64) -> Self {
        let bits = trials * u64::from(k_bits);
        let (ci_low, ci_high) =
            confidence_interval(bit_errors, bits).unwrap_or((0.0, 1.0));
        BerEstimate {
            trials,
            bits,
            bit_errors,
            symbol_errors,
            ber: bit_errors as f64 / bits as f64,
            ser: symbol_errors as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }

    /// Merging is count addition; derived rates are recomputed, so the
    /// operation is associative and commutative.
    pub fn merge(&self, other: &BerEstimate) -> BerEstimate {
        let trials = self.trials + other.trials;
        let bits = self.bits + other.bits;
        let bit_errors = self.bit_errors + other.bit_errors;
        let symbol_errors = self.symbol_errors + other.symbol_errors;
        let (ci_low, ci_high) = confidence_interval(bit_errors, bits).unwrap_or((0.0, 1.0));
        BerEstimate {
            trials,
            bits,
            bit_errors,
            symbol_errors,
            ber: bit_errors as f64 / bits as f64,
            ser: symbol_errors as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }
}

/// Which scheme a campaign simulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeConfig {
    Sk(SkParams),
    ModuloSk(ModuloSkParams),
}

impl SchemeConfig {
    pub fn k_bits(&self) -> u32 {
        match self {
            SchemeConfig::Sk(p) => p.k_bits,
            SchemeConfig::ModuloSk(p) => p.k_bits,
        }
    }

    pub fn n_rounds(&self) -> u32 {
        match self {
            SchemeConfig::Sk(p) => p.n_rounds,
            SchemeConfig::ModuloSk(p) => p.n_rounds,
        }
    }

    fn sigma2_ff(&self) -> f64 {
        match self {
            SchemeConfig::Sk(p) => p.sigma2_ff,
            SchemeConfig::ModuloSk(p) => p.sigma2_ff,
        }
    }

    fn sigma2_fb(&self) -> f64 {
        match self {
            SchemeConfig::Sk(_) => 0.0,
            SchemeConfig::ModuloSk(p) => p.sigma2_fb,
        }
    }
}

enum PreparedScheme {
    Sk(SkParams, SkSchedule),
    ModuloSk(ModuloSkParams, ModuloSkSchedule),
}

/// Everything a campaign reports.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub estimate: BerEstimate,
    pub audit: PowerAudit,
    pub trace: RoundTrace,
    pub stop_reason: StopReason,
    pub wrap_events: u64,
    pub seed: u64,
}

struct ChunkAgg {
    trials: u64,
    bit_errors: u64,
    symbol_errors: u64,
    wrap_events: u64,
    audit: PowerAudit,
    trace: RoundTrace,
}

impl ChunkAgg {
    fn new(n_rounds: u32) -> Self {
        ChunkAgg {
            trials: 0,
            bit_errors: 0,
            symbol_errors: 0,
            wrap_events: 0,
            audit: PowerAudit::default(),
            trace: RoundTrace::new(n_rounds),
        }
    }
}

/// Runs one Monte-Carlo campaign.
///
/// Trial `t` draws its message and noise from streams keyed by
/// `(seed, t)`, so the result set for a given `(seed, stop)` is identical
/// under any worker count and any parallel schedule. `workers = None`
/// uses the global thread pool.
pub fn run_campaign(
    scheme: &SchemeConfig,
    stop: &StopRule,
    seed: u64,
    workers: Option<usize>,
) -> Result<CampaignResult> {
    StopRule::new(stop.max_trials, stop.target_symbol_errors, stop.ber_floor)?;
    let prepared = match scheme {
        SchemeConfig::Sk(p) => PreparedScheme::Sk(*p, sk::sk_schedule(p)),
        SchemeConfig::ModuloSk(p) => {
            PreparedScheme::ModuloSk(*p, modulo_sk::modulo_sk_schedule(p)?)
        }
    };
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| run_campaign_inner(scheme, &prepared, stop, seed))
        }
        None => run_campaign_inner(scheme, &prepared, stop, seed),
    }
}

fn run_campaign_inner(
    scheme: &SchemeConfig,
    prepared: &PreparedScheme,
    stop: &StopRule,
    seed: u64,
) -> Result<CampaignResult> {
    let k_bits = scheme.k_bits();
    let n_rounds = scheme.n_rounds();

    let run_chunk = |start: u64, end: u64| -> ChunkAgg {
        let mut agg = ChunkAgg::new(n_rounds);
        for trial in start..end {
            let w = trial_message_index(seed, trial, k_bits);
            let mut ch = ChannelPair::new(
                scheme.sigma2_ff(),
                scheme.sigma2_fb(),
                RandomSource::new(seed, trial),
            )
            .expect("validated variances");
            let outcome = match prepared {
                PreparedScheme::Sk(p, sched) => {
                    sk::run_trial_indexed(p, sched, w, &mut ch, Some(&mut agg.trace))
                }
                PreparedScheme::ModuloSk(p, sched) => {
                    modulo_sk::run_trial_indexed(p, sched, w, &mut ch, Some(&mut agg.trace))
                }
            };
            agg.trials += 1;
            agg.bit_errors += u64::from(outcome.bit_errors);
            agg.symbol_errors += u64::from(outcome.symbol_error);
            agg.wrap_events += u64::from(outcome.wrap_events);
            agg.audit.merge(ch.audit());
        }
        agg.trace.trials = agg.trials;
        agg
    };

    let cap = stop.trial_cap(k_bits);
    let mut total = ChunkAgg::new(n_rounds);
    let mut next = 0u64;
    let mut batch = INITIAL_BATCH;
    let mut stop_reason = StopReason::MaxTrialsReached;
    while next < cap {
        let batch_end = cap.min(next + batch);
        let chunk_starts: Vec<u64> = (next..batch_end).step_by(CHUNK_TRIALS as usize).collect();
        let chunks: Vec<ChunkAgg> = chunk_starts
            .par_iter()
            .map(|&s| run_chunk(s, batch_end.min(s + CHUNK_TRIALS)))
            .collect();
        // Sequential in-order fold keeps float sums order-stable.
        for c in chunks {
            total.trials += c.trials;
            total.bit_errors += c.bit_errors;
            total.symbol_errors += c.symbol_errors;
            total.wrap_events += c.wrap_events;
            total.audit.merge(&c.audit);
            total.trace.merge(&c.trace);
        }
        next = batch_end;
        if total.symbol_errors >= stop.target_symbol_errors {
            stop_reason = StopReason::TargetErrorsReached;
            break;
        }
        batch = (batch * 2).min(MAX_BATCH);
    }
    if stop_reason == StopReason::MaxTrialsReached && cap < stop.max_trials {
        stop_reason = StopReason::BerFloorReached;
    }

    Ok(CampaignResult {
        estimate: BerEstimate::from_counts(
            total.trials,
            k_bits,
            total.bit_errors,
            total.symbol_errors,
        ),
        audit: total.audit,
        trace: total.trace,
        stop_reason,
        wrap_events: total.wrap_events,
        seed,
    })
}

/// The uniform message index trial `t` of a campaign with this seed
/// draws, exposed so single trials can be replayed outside the engine.
pub fn trial_message_index(seed: u64, trial: u64, k_bits: u32) -> u64 {
    let mut rng = RandomSource::new(child_seed(seed, MESSAGE_DOMAIN), trial).rng();
    rand::RngCore::next_u64(&mut rng) & ((1u64 << k_bits) - 1)
}

/// 95% Clopper-Pearson (exact binomial) interval for `errors` out of `n`.
pub fn confidence_interval(errors: u64, n: u64) -> Result<(f64, f64)> {
    const ALPHA_HALF: f64 = 0.025;
    if n == 0 || errors > n {
        return Err(Error::Domain(format!(
            "confidence interval needs 0 <= errors <= n with n >= 1, got {errors}/{n}"
        )));
    }
    let low = if errors == 0 {
        0.0
    } else {
        // Largest p with P(X >= errors) <= alpha/2, i.e.
        // F(errors - 1; p) = 1 - alpha/2.
        bisect_binomial_cdf(errors - 1, n, 1.0 - ALPHA_HALF)
    };
    let high = if errors == n {
        1.0
    } else {
        // F(errors; p) = alpha/2.
        bisect_binomial_cdf(errors, n, ALPHA_HALF)
    };
    Ok((low, high))
}

/// Solves F(k; n, p) = target for p; the CDF is strictly decreasing in p.
fn bisect_binomial_cdf(k: u64, n: u64, target: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(k, n, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// P(X <= k) for X ~ Bin(n, p), via a streaming log-sum-exp over the pmf
/// recurrence. Terms more than 45 standard deviations below the mean are
/// dropped (their mass is below e^-1000), which keeps the sum short for
/// campaign-sized n.
fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k >= n { 1.0 } else { 0.0 };
    }
    let k = k.min(n);
    let nf = n as f64;
    let mean = nf * p;
    let sd = (nf * p * (1.0 - p)).sqrt().max(1.0);
    let kf = k as f64;
    if kf < mean - 45.0 * sd {
        return 0.0;
    }
    if kf > mean + 45.0 * sd {
        return 1.0;
    }
    let start = ((mean - 45.0 * sd).floor().max(0.0)) as u64;
    let ln_p = p.ln();
    let ln_1mp = (-p).ln_1p();
    let mut ln_pmf =
        ln_choose(n, start) + start as f64 * ln_p + (n - start) as f64 * ln_1mp;
    let mut max_ln = ln_pmf;
    let mut sum = 1.0f64; // running sum of exp(ln_pmf - max_ln)
    let step = ln_p - ln_1mp;
    for i in start..k {
        // pmf(i+1)/pmf(i) = (n-i)/(i+1) * p/(1-p)
        ln_pmf += ((n - i) as f64).ln() - ((i + 1) as f64).ln() + step;
        if ln_pmf <= max_ln {
            sum += (ln_pmf - max_ln).exp();
        } else {
            sum = sum * (max_ln - ln_pmf).exp() + 1.0;
            max_ln = ln_pmf;
        }
    }
    (max_ln + sum.ln()).exp().min(1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Sweep abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    FeedbackSnrDb,
    ForwardSnrDb,
    NRounds,
}

/// How kappa is chosen per Modulo-SK operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaPolicy {
    Fixed(f64),
    /// Grid search minimizing the analytical SER bound.
    Auto,
}

/// One point of a parameter sweep. Infeasible operating points are
/// recorded as gaps with the reason, not errors.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub abscissa: f64,
    pub kappa: Option<f64>,
    pub campaign: Option<CampaignResult>,
    pub infeasible: Option<String>,
}

/// Runs one campaign per grid value, varying `axis` on top of `base`.
/// Each point gets its own seed derived from the shared base seed, and
/// results come back in grid order.
pub fn sweep(
    axis: SweepAxis,
    grid: &[f64],
    base: &SchemeConfig,
    kappa_policy: KappaPolicy,
    stop: &StopRule,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid must be nonempty".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for (i, &value) in grid.iter().enumerate() {
        let point_seed = child_seed(seed, child_seed(SWEEP_DOMAIN, i as u64));
        let scheme = apply_axis(base, axis, value)?;
        let (scheme, kappa) = match (&scheme, kappa_policy) {
            (SchemeConfig::ModuloSk(p), KappaPolicy::Auto) => {
                match modulo_sk::select_kappa(p) {
                    Ok((kappa, _)) => (
                        SchemeConfig::ModuloSk(ModuloSkParams { kappa, ..*p }),
                        Some(kappa),
                    ),
                    Err(e) => {
                        points.push(SweepPoint {
                            abscissa: value,
                            kappa: None,
                            campaign: None,
                            infeasible: Some(e.to_string()),
                        });
                        continue;
                    }
                }
            }
            (SchemeConfig::ModuloSk(p), KappaPolicy::Fixed(k)) => (
                SchemeConfig::ModuloSk(ModuloSkParams { kappa: k, ..*p }),
                Some(k),
            ),
            (s, _) => (*s, None),
        };
        match run_campaign(&scheme, stop, point_seed, workers) {
            Ok(campaign) => points.push(SweepPoint {
                abscissa: value,
                kappa,
                campaign: Some(campaign),
                infeasible: None,
            }),
            Err(Error::Config(msg)) => points.push(SweepPoint {
                abscissa: value,
                kappa,
                campaign: None,
                infeasible: Some(msg),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(points)
}

fn apply_axis(base: &SchemeConfig, axis: SweepAxis, value: f64) -> Result<SchemeConfig> {
    match (base, axis) {
        (SchemeConfig::Sk(p), SweepAxis::ForwardSnrDb) => {
            let mut p = *p;
            p.sigma2_ff = p.p_ff / db_to_linear(value);
            Ok(SchemeConfig::Sk(p))
        }
        (SchemeConfig::Sk(_), SweepAxis::FeedbackSnrDb) => Err(Error::Config(
            "SK has no feedback SNR axis; its feedback link is noiseless".into(),
        )),
        (SchemeConfig::Sk(p), SweepAxis::NRounds) => {
            let mut p = *p;
            p.n_rounds = round_count(value)?;
            Ok(SchemeConfig::Sk(p))
        }
        (SchemeConfig::ModuloSk(p), SweepAxis::ForwardSnrDb) => {
            let mut p = *p;
            p.sigma2_ff = p.p_ff / db_to_linear(value);
            Ok(SchemeConfig::ModuloSk(p))
        }
        (SchemeConfig::ModuloSk(p), SweepAxis::FeedbackSnrDb) => {
            let mut p = *p;
            p.sigma2_fb = p.p_fb / db_to_linear(value);
            Ok(SchemeConfig::ModuloSk(p))
        }
        (SchemeConfig::ModuloSk(p), SweepAxis::NRounds) => {
            let mut p = *p;
            p.n_rounds = round_count(value)?;
            Ok(SchemeConfig::ModuloSk(p))
        }
    }
}

fn round_count(value: f64) -> Result<u32> {
    let n = value.round();
    if !(n >= 1.0 && n <= u32::MAX as f64 && (n - value).abs() < 1e-9) {
        return Err(Error::Config(format!("invalid round count {value}")));
    }
    Ok(n as u32)
}
