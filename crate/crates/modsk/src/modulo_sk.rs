//! The Modulo-SK scheme: the SK iteration driven over a noisy feedback
//! link by active, power-constrained feedback.
//!
//! The receiver amplifies its current estimate by a per-round zoom factor
//! and folds it into a fixed cell [-L/2, L/2) with a centered modulo, so
//! the feedback transmission meets its power constraint no matter how the
//! estimate grows. The transmitter knows the message point, subtracts its
//! amplified value inside the modulo, and (absent a wrap) recovers exactly
//! `beta * eps + Z~` -- the receiver's scaled estimation error seen through
//! feedback noise. From there the round proceeds like classical SK with an
//! extra noise term in the MMSE coefficients.
//!
//! An optional common-randomness dither, shared through a seed, makes the
//! feedback transmission exactly uniform over the cell; it exists for
//! bound validation and is off by default.

use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::numerics::{
    child_seed, db_to_linear, mod_centered, mod_mul_int, q_func, unit_uniform, RandomSource,
};
use crate::pam::{index_bit_errors, MessageBits, PamConstellation};
use crate::sim::{RoundTrace, TrialOutcome};
use rand_chacha::ChaCha8Rng;

/// Domain tag separating dither streams from noise and message streams.
const DITHER_DOMAIN: u64 = 0x4449_5448_4552_0001;

/// Lowest kappa scanned by [`select_kappa`].
pub const KAPPA_GRID_START: f64 = 3.0;
/// Kappa grid spacing.
pub const KAPPA_GRID_STEP: f64 = 0.25;
/// Number of kappa grid points (3.0, 3.25, ..., 6.5).
pub const KAPPA_GRID_POINTS: usize = 15;

/// Protocol constants for a Modulo-SK run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuloSkParams {
    pub n_rounds: u32,
    pub k_bits: u32,
    pub p_ff: f64,
    pub p_fb: f64,
    pub sigma2_ff: f64,
    pub sigma2_fb: f64,
    /// No-wrap margin in standard deviations of the wrap statistic.
    pub kappa: f64,
    pub dither_enabled: bool,
    pub dither_seed: u64,
}

impl ModuloSkParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_rounds: u32,
        k_bits: u32,
        p_ff: f64,
        p_fb: f64,
        sigma2_ff: f64,
        sigma2_fb: f64,
        kappa: f64,
        dither_enabled: bool,
        dither_seed: u64,
    ) -> Result<Self> {
        if n_rounds == 0 {
            return Err(Error::Config("n_rounds must be at least 1".into()));
        }
        if !(1..=60).contains(&k_bits) {
            return Err(Error::Config(format!("k_bits must be in 1..=60, got {k_bits}")));
        }
        let powers_ok = p_ff > 0.0 && p_fb > 0.0;
        if !powers_ok {
            return Err(Error::Config(format!(
                "powers must be positive, got P={p_ff} P~={p_fb}"
            )));
        }
        let variances_ok = sigma2_ff >= 0.0 && sigma2_fb >= 0.0;
        if !variances_ok {
            return Err(Error::Config(format!(
                "noise variances must be nonnegative, got {sigma2_ff} and {sigma2_fb}"
            )));
        }
        let kappa_ok = kappa > 0.0;
        if !kappa_ok {
            return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
        }
        Ok(ModuloSkParams {
            n_rounds,
            k_bits,
            p_ff,
            p_fb,
            sigma2_ff,
            sigma2_fb,
            kappa,
            dither_enabled,
            dither_seed,
        })
    }

    /// Unit-power convenience constructor from SNRs in dB.
    #[allow(clippy::too_many_arguments)]
    pub fn from_snr_db(
        forward_snr_db: f64,
        feedback_snr_db: f64,
        n_rounds: u32,
        k_bits: u32,
        kappa: f64,
        dither_enabled: bool,
        dither_seed: u64,
    ) -> Result<Self> {
        ModuloSkParams::new(
            n_rounds,
            k_bits,
            1.0,
            1.0,
            1.0 / db_to_linear(forward_snr_db),
            1.0 / db_to_linear(feedback_snr_db),
            kappa,
            dither_enabled,
            dither_seed,
        )
    }

    /// Modulo cell size: L = sqrt(12 P~), so a cell-uniform transmission
    /// has average power exactly P~.
    pub fn l_cell(&self) -> f64 {
        (12.0 * self.p_fb).sqrt()
    }

    pub fn snr_ff(&self) -> f64 {
        self.p_ff / self.sigma2_ff
    }

    /// The SK parameters this scheme degenerates to over a clean
    /// feedback link.
    pub fn sk_params(&self) -> SkView {
        SkView {
            n_rounds: self.n_rounds,
            k_bits: self.k_bits,
            p_ff: self.p_ff,
            sigma2_ff: self.sigma2_ff,
        }
    }
}

/// Plain-old-data view used when handing parameters to SK-style formulas.
#[derive(Debug, Clone, Copy)]
pub struct SkView {
    pub n_rounds: u32,
    pub k_bits: u32,
    pub p_ff: f64,
    pub sigma2_ff: f64,
}

/// Per-round Modulo-SK coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MskStep {
    /// Error std before this round's correction.
    pub sigma_eps: f64,
    /// Feedback zoom factor.
    pub beta: f64,
    /// Feedforward transmit gain on the unwrapped error estimate.
    pub gain: f64,
    /// Receiver MMSE update coefficient.
    pub coef: f64,
    /// Squared correlation between the true error and its feedback view.
    pub rho2: f64,
}

/// Deterministic Modulo-SK schedule shared by both terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuloSkSchedule {
    steps: Vec<MskStep>,
    n_rounds: u32,
    l_cell: f64,
    kappa: f64,
    sigma2_fb: f64,
    ln_sigma2_first: f64,
    ln_shrink: f64,
}

impl ModuloSkSchedule {
    pub fn steps(&self) -> &[MskStep] {
        &self.steps
    }

    pub fn l_cell(&self) -> f64 {
        self.l_cell
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// ln error variance after round `n` (1-based), closed form in the
    /// log domain: the shrink factor per round is constant because the
    /// zoom rule keeps the error/feedback correlation fixed.
    pub fn ln_sigma2_eps(&self, n: u32) -> f64 {
        assert!((1..=self.n_rounds).contains(&n));
        self.ln_sigma2_first + f64::from(n - 1) * self.ln_shrink
    }

    pub fn sigma2_eps(&self, n: u32) -> f64 {
        self.ln_sigma2_eps(n).exp()
    }

    pub fn ln_sigma2_final(&self) -> f64 {
        self.ln_sigma2_eps(self.n_rounds)
    }

    pub fn sigma_eps_final(&self) -> f64 {
        (0.5 * self.ln_sigma2_final()).exp()
    }
}

/// Smallest feedback SNR (linear) at which the margin `kappa` leaves any
/// zoom headroom: S~N~R > kappa^2 / 3.
pub fn min_feasible_feedback_snr(kappa: f64) -> f64 {
    kappa * kappa / 3.0
}

/// Builds the Modulo-SK coefficient schedule.
///
/// The zoom rule fixes `beta_n` so the wrap statistic `beta eps + Z~` has
/// std `L / (2 kappa)`, making the per-round aliasing probability 2 Q(kappa)
/// by construction. Infeasible margins (feedback link too noisy) are a
/// configuration error naming the minimum feasible feedback SNR.
pub fn modulo_sk_schedule(p: &ModuloSkParams) -> Result<ModuloSkSchedule> {
    let n_steps = (p.n_rounds - 1) as usize;
    if p.sigma2_ff == 0.0 {
        // Degenerate noiseless forward link, as in the SK schedule.
        return Ok(ModuloSkSchedule {
            steps: vec![
                MskStep {
                    sigma_eps: 0.0,
                    beta: 1.0,
                    gain: 0.0,
                    coef: 0.0,
                    rho2: 1.0,
                };
                n_steps
            ],
            n_rounds: p.n_rounds,
            l_cell: p.l_cell(),
            kappa: p.kappa,
            sigma2_fb: p.sigma2_fb,
            ln_sigma2_first: f64::NEG_INFINITY,
            ln_shrink: f64::NEG_INFINITY,
        });
    }
    let l = p.l_cell();
    let half_cell_margin = l / (2.0 * p.kappa);
    let zoom2 = half_cell_margin * half_cell_margin - p.sigma2_fb;
    if zoom2 <= 0.0 {
        let min_snr = min_feasible_feedback_snr(p.kappa);
        let min_db = 10.0 * min_snr.log10();
        return Err(Error::Config(format!(
            "feedback link too noisy for margin kappa={}: modulo feedback needs feedback SNR \
             above {:.3} ({:.2} dB) to be useful at this margin",
            p.kappa, min_snr, min_db
        )));
    }
    // rho^2 = zoom^2 / (zoom^2 + sigma2_fb), constant across rounds.
    let rho2 = zoom2 / (zoom2 + p.sigma2_fb);
    let snr = p.snr_ff();
    let ln_sigma2_first = -(snr.ln());
    let ln_shrink = (-rho2 * snr / (1.0 + snr)).ln_1p();
    let zoom = zoom2.sqrt();
    let sqrt_p = p.p_ff.sqrt();
    let rho = rho2.sqrt();
    let denom = p.p_ff + p.sigma2_ff;
    let steps = (1..p.n_rounds)
        .map(|n| {
            let ln_sigma2 = ln_sigma2_first + f64::from(n - 1) * ln_shrink;
            let sigma_eps = (0.5 * ln_sigma2).exp();
            let gain = sqrt_p * rho / sigma_eps;
            MskStep {
                sigma_eps,
                beta: zoom / sigma_eps,
                gain,
                coef: gain * sigma_eps * sigma_eps / denom,
                rho2,
            }
        })
        .collect();
    Ok(ModuloSkSchedule {
        steps,
        n_rounds: p.n_rounds,
        l_cell: l,
        kappa: p.kappa,
        sigma2_fb: p.sigma2_fb,
        ln_sigma2_first,
        ln_shrink,
    })
}

/// Probability that the no-wrap event fails at round `n` (1-based feedback
/// round) under the Gaussian-plus-dither model:
/// 2 Q((L/2) / sqrt(beta^2 sigma_eps^2 + sigma2_fb)).
///
/// The zoom rule makes this exactly 2 Q(kappa); with dither the model is
/// exact, without it the value is an approximation checked empirically.
pub fn aliasing_probability(sched: &ModuloSkSchedule, round: u32) -> f64 {
    assert!(
        round >= 1 && round < sched.n_rounds,
        "feedback rounds are 1..N"
    );
    let step = &sched.steps[(round - 1) as usize];
    let wrap_std = (step.beta * step.beta * step.sigma_eps * step.sigma_eps + sched.sigma2_fb)
        .sqrt();
    2.0 * q_func(0.5 * sched.l_cell / wrap_std)
}

/// Common-randomness dither: one uniform draw over the modulo cell per
/// feedback round, identical at both terminals because both derive it
/// from (dither_seed, trial).
#[derive(Debug, Clone)]
pub struct DitherStream {
    rng: ChaCha8Rng,
    l_cell: f64,
}

impl DitherStream {
    pub fn for_trial(dither_seed: u64, trial: u64, l_cell: f64) -> Self {
        let source = RandomSource::new(child_seed(dither_seed, DITHER_DOMAIN), trial);
        DitherStream {
            rng: source.rng(),
            l_cell,
        }
    }

    /// Next dither value, uniform on [-L/2, L/2).
    pub fn next_dither(&mut self) -> f64 {
        (unit_uniform(&mut self.rng) - 0.5) * self.l_cell
    }
}

/// Runs one Modulo-SK trial.
pub fn run_trial(
    p: &ModuloSkParams,
    sched: &ModuloSkSchedule,
    bits: &MessageBits,
    ch: &mut ChannelPair,
) -> Result<TrialOutcome> {
    check_message(p, bits)?;
    Ok(run_trial_indexed(p, sched, bits.index(), ch, None))
}

/// As [`run_trial`] but returning the realized per-round estimation errors.
pub fn run_trial_traced(
    p: &ModuloSkParams,
    sched: &ModuloSkSchedule,
    bits: &MessageBits,
    ch: &mut ChannelPair,
) -> Result<(TrialOutcome, Vec<f64>)> {
    check_message(p, bits)?;
    let mut eps = Vec::with_capacity(p.n_rounds as usize);
    let outcome = run_trial_impl(p, sched, bits.index(), ch, None, Some(&mut eps));
    Ok((outcome, eps))
}

fn check_message(p: &ModuloSkParams, bits: &MessageBits) -> Result<()> {
    if bits.len() != p.k_bits as usize {
        return Err(Error::Config(format!(
            "message has {} bits, scheme expects {}",
            bits.len(),
            p.k_bits
        )));
    }
    Ok(())
}

pub(crate) fn run_trial_indexed(
    p: &ModuloSkParams,
    sched: &ModuloSkSchedule,
    w: u64,
    ch: &mut ChannelPair,
    trace: Option<&mut RoundTrace>,
) -> TrialOutcome {
    run_trial_impl(p, sched, w, ch, trace, None)
}

fn run_trial_impl(
    p: &ModuloSkParams,
    sched: &ModuloSkSchedule,
    w: u64,
    ch: &mut ChannelPair,
    mut trace: Option<&mut RoundTrace>,
    mut eps_log: Option<&mut Vec<f64>>,
) -> TrialOutcome {
    let c = PamConstellation::build(p.k_bits).expect("validated k_bits");
    let d = c.min_distance();
    let l = sched.l_cell;
    let sqrt_p = p.p_ff.sqrt();
    let j_w = w as i128 - (c.m_points() / 2) as i128;
    let mut dither = p
        .dither_enabled
        .then(|| DitherStream::for_trial(p.dither_seed, ch.stream_id(), l));

    let x1 = sqrt_p * c.point(w);
    if let Some(t) = trace.as_mut() {
        t.ff_sq_sum[0] += x1 * x1;
    }
    let y1 = ch.transmit_ff(x1);
    let mut stat = crate::sk::SplitStatistic::from_estimate(y1 / sqrt_p, &c);

    let mut wrap_events = 0u32;
    let mut wrapped_before = false;
    let mut fb_power_sum = 0.0;

    for (i, step) in sched.steps().iter().enumerate() {
        let eps = stat.offset_units(j_w) * d;
        if let Some(t) = trace.as_mut() {
            t.eps_sum[i] += eps;
            t.eps_sq_sum[i] += eps * eps;
        }
        if let Some(log) = eps_log.as_mut() {
            log.push(eps);
        }

        // `r` is the zoom expressed per index step; both terminals use the
        // same value, so its rounding cancels between them.
        let r = step.beta * d;
        let d_n = dither.as_mut().map_or(0.0, DitherStream::next_dither);

        // Receiver: fold the amplified estimate into the cell. The index
        // component goes through the exact integer-multiple reduction --
        // a direct product would cost ~index * ulp(L) of absolute error,
        // which at K = 50 would swamp the feedback noise.
        let folded_index = mod_mul_int(r, stat.coarse_centered(), l);
        let xfb = mod_centered(folded_index + r * (stat.fine() + 0.5) + d_n, l);
        fb_power_sum += xfb * xfb;
        if let Some(t) = trace.as_mut() {
            t.fb_sq_sum[i] += xfb * xfb;
        }
        let yfb = ch.transmit_fb(xfb);

        // Transmitter: remove its own amplified message point and the
        // dither inside the modulo; absent a wrap the result is exactly
        // beta * eps + Z~.
        let anchor = mod_centered(mod_mul_int(r, j_w, l) + 0.5 * r + d_n, l);
        let v = mod_centered(yfb - anchor, l);

        // Wrap diagnostic from simulator-side truth.
        let z_fb = yfb - xfb;
        let in_cell = step.beta * eps + z_fb;
        let wrapped = !(-0.5 * l..0.5 * l).contains(&in_cell);
        if let Some(t) = trace.as_mut() {
            if !wrapped_before {
                t.prewrap_reached[i] += 1;
                if wrapped {
                    t.prewrap_wraps[i] += 1;
                }
            }
        }
        if wrapped {
            wrap_events += 1;
            wrapped_before = true;
        }

        let x = step.gain * (v / step.beta);
        if let Some(t) = trace.as_mut() {
            t.ff_sq_sum[i + 1] += x * x;
        }
        let y = ch.transmit_ff(x);
        stat.correct(-step.coef * y / d);
    }

    let eps_final = stat.offset_units(j_w) * d;
    let last = p.n_rounds as usize - 1;
    if let Some(t) = trace.as_mut() {
        t.eps_sum[last] += eps_final;
        t.eps_sq_sum[last] += eps_final * eps_final;
    }
    if let Some(log) = eps_log.as_mut() {
        log.push(eps_final);
    }

    let decoded = stat.decode_index(&c);
    TrialOutcome {
        bit_errors: index_bit_errors(w, decoded),
        symbol_error: decoded != w,
        wrap_events,
        fb_power_sum,
    }
}

/// Verdict of the campaign-level feedback power measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackPowerVerdict {
    pub mean_power: f64,
    /// Within the power constraint (1% slack).
    pub compliant: bool,
    /// With dither: also matches the cell-uniform power P~ within 1%.
    pub uniform_match: Option<bool>,
}

/// Checks the measured feedback power over a campaign. Requires at least
/// 1e5 recorded feedback symbols for the average to be meaningful.
pub fn feedback_power_check(
    fb_sum_sq: f64,
    fb_symbols: u64,
    p_fb: f64,
    dither_enabled: bool,
) -> Result<FeedbackPowerVerdict> {
    if fb_symbols < 100_000 {
        return Err(Error::State(format!(
            "feedback power check needs at least 1e5 recorded symbols, got {fb_symbols}"
        )));
    }
    let mean = fb_sum_sq / fb_symbols as f64;
    Ok(FeedbackPowerVerdict {
        mean_power: mean,
        compliant: mean <= p_fb * (1.0 + crate::channel::POWER_TOLERANCE),
        uniform_match: dither_enabled.then(|| (mean - p_fb).abs() <= 0.01 * p_fb),
    })
}

/// Resolves `kappa = auto`: scans the margin grid and keeps the value
/// minimizing the analytical symbol-error upper bound, ties to the
/// smaller margin. Errors if no grid point is feasible.
pub fn select_kappa(p: &ModuloSkParams) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for i in 0..KAPPA_GRID_POINTS {
        let kappa = KAPPA_GRID_START + KAPPA_GRID_STEP * i as f64;
        let candidate = ModuloSkParams { kappa, ..*p };
        let Ok(sched) = modulo_sk_schedule(&candidate) else {
            continue;
        };
        let bound = crate::bounds::msk_ser_upper_bound(&candidate, &sched);
        if best.is_none_or(|(_, b)| bound < b) {
            best = Some((kappa, bound));
        }
    }
    best.ok_or_else(|| {
        Error::Config(format!(
            "no feasible kappa in the [{KAPPA_GRID_START}, {:.2}] grid: modulo feedback \
             requires feedback SNR above {:.3} even at the smallest margin",
            KAPPA_GRID_START + KAPPA_GRID_STEP * (KAPPA_GRID_POINTS - 1) as f64,
            min_feasible_feedback_snr(KAPPA_GRID_START),
        ))
    })
}
