//! The classical Schalkwijk-Kailath scheme with noiseless feedback.
//!
//! Each round the transmitter learns the receiver's current estimation
//! error through the feedback link and retransmits it scaled to full
//! power; the receiver folds the observation back in with an MMSE
//! coefficient. After N rounds the error variance has shrunk by
//! (1+SNR)^(N-1), so a single uncoded PAM symbol carries N*R bits.
//!
//! The receiver's statistic must resolve 2^K points, which for K around
//! 50 exceeds what a single f64 mantissa can hold near the constellation
//! amplitude. [`SplitStatistic`] therefore keeps an exact integer point
//! index next to a float residual measured in minimum-distance units, so
//! precision concentrates where the decision happens.

use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::pam::{index_bit_errors, MessageBits, PamConstellation};
use crate::sim::{RoundTrace, TrialOutcome};

/// Protocol constants for a noiseless-feedback SK run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkParams {
    pub n_rounds: u32,
    pub k_bits: u32,
    pub p_ff: f64,
    pub sigma2_ff: f64,
}

impl SkParams {
    pub fn new(n_rounds: u32, k_bits: u32, p_ff: f64, sigma2_ff: f64) -> Result<Self> {
        if n_rounds == 0 {
            return Err(Error::Config("n_rounds must be at least 1".into()));
        }
        if !(1..=60).contains(&k_bits) {
            return Err(Error::Config(format!("k_bits must be in 1..=60, got {k_bits}")));
        }
        let values_ok = p_ff > 0.0 && sigma2_ff >= 0.0;
        if !values_ok {
            return Err(Error::Config(format!(
                "powers must be positive and variances nonnegative, got P={p_ff} sigma2={sigma2_ff}"
            )));
        }
        Ok(SkParams {
            n_rounds,
            k_bits,
            p_ff,
            sigma2_ff,
        })
    }

    /// Convenience constructor at unit transmit power.
    pub fn from_snr_db(forward_snr_db: f64, n_rounds: u32, k_bits: u32) -> Result<Self> {
        let snr = crate::numerics::db_to_linear(forward_snr_db);
        SkParams::new(n_rounds, k_bits, 1.0, 1.0 / snr)
    }

    pub fn snr(&self) -> f64 {
        self.p_ff / self.sigma2_ff
    }
}

/// Per-round transmit gain and MMSE coefficient.
///
/// `sigma_eps` is the error std before the round's correction; the
/// transmitter sends `gain * eps` and the receiver subtracts
/// `coef * Y` from its estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkStep {
    pub sigma_eps: f64,
    pub gain: f64,
    pub coef: f64,
}

/// Deterministic coefficient schedule shared by both terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct SkSchedule {
    steps: Vec<SkStep>,
    n_rounds: u32,
    snr: f64,
    ln_shrink: f64,
    ln_sigma2_first: f64,
}

impl SkSchedule {
    pub fn steps(&self) -> &[SkStep] {
        &self.steps
    }

    /// ln of the error variance after round `n` (1-based), closed form,
    /// evaluated in the log domain so deep recursions neither underflow
    /// nor overflow.
    pub fn ln_sigma2_eps(&self, n: u32) -> f64 {
        assert!((1..=self.n_rounds).contains(&n));
        self.ln_sigma2_first + f64::from(n - 1) * self.ln_shrink
    }

    pub fn sigma2_eps(&self, n: u32) -> f64 {
        self.ln_sigma2_eps(n).exp()
    }

    pub fn sigma_eps_final(&self) -> f64 {
        (0.5 * self.ln_sigma2_eps(self.n_rounds)).exp()
    }

    pub fn ln_sigma2_final(&self) -> f64 {
        self.ln_sigma2_eps(self.n_rounds)
    }
}

/// Builds the SK coefficient schedule for the given parameters.
pub fn sk_schedule(p: &SkParams) -> SkSchedule {
    let n_steps = (p.n_rounds - 1) as usize;
    if p.sigma2_ff == 0.0 {
        // Degenerate noiseless forward link: the round-1 estimate is already
        // exact, so no correction rounds are needed or sent.
        return SkSchedule {
            steps: vec![
                SkStep {
                    sigma_eps: 0.0,
                    gain: 0.0,
                    coef: 0.0,
                };
                n_steps
            ],
            n_rounds: p.n_rounds,
            snr: f64::INFINITY,
            ln_shrink: f64::NEG_INFINITY,
            ln_sigma2_first: f64::NEG_INFINITY,
        };
    }
    let snr = p.snr();
    let ln_sigma2_first = -snr.ln();
    let ln_shrink = -snr.ln_1p();
    let sqrt_p = p.p_ff.sqrt();
    let denom = p.p_ff + p.sigma2_ff;
    let steps = (1..p.n_rounds)
        .map(|n| {
            let ln_sigma2 = ln_sigma2_first + f64::from(n - 1) * ln_shrink;
            let sigma_eps = (0.5 * ln_sigma2).exp();
            SkStep {
                sigma_eps,
                gain: sqrt_p / sigma_eps,
                coef: sqrt_p * sigma_eps / denom,
            }
        })
        .collect();
    SkSchedule {
        steps,
        n_rounds: p.n_rounds,
        snr,
        ln_shrink,
        ln_sigma2_first,
    }
}

/// ln of the effective SNR after N rounds: SNR * (1+SNR)^(N-1).
pub fn effective_snr_ln(p: &SkParams) -> f64 {
    let snr = p.snr();
    snr.ln() + f64::from(p.n_rounds - 1) * snr.ln_1p()
}

/// Uncoded-PAM symbol error rate at the scheme's effective SNR:
/// 2 (1 - 1/M) Q(a * sqrt(SNR (1+SNR)^(N-1))).
pub fn sk_ser_prediction(p: &SkParams) -> f64 {
    let c = PamConstellation::build(p.k_bits).expect("validated k_bits");
    let ln_arg = c.half_spacing().ln() + 0.5 * effective_snr_ln(p);
    let arg = ln_arg.exp();
    let mf = c.m_points() as f64;
    (2.0 * (1.0 - 1.0 / mf) * crate::numerics::q_func(arg)).min(1.0)
}

/// Receiver decoding statistic split into an exact integer point index
/// and a float residual in minimum-distance units.
///
/// The represented estimate is `d * (j + 1/2 + fine)` on the centered
/// index line `j = i - M/2`, recoverable to full K-bit precision for any
/// K <= 60 while `fine` stays in [-1/2, 1/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStatistic {
    j: i128,
    fine: f64,
}

impl SplitStatistic {
    /// Quantizes a raw round-1 estimate into split form.
    pub fn from_estimate(theta_hat: f64, c: &PamConstellation) -> Self {
        let t = theta_hat / c.min_distance() - 0.5;
        let jf = (t + 0.5).floor();
        let mut s = SplitStatistic {
            j: jf as i128,
            fine: t - jf,
        };
        s.renormalize();
        s
    }

    /// Applies an estimate update expressed in d_min units, then carries
    /// any integer part of the residual into the index.
    pub fn correct(&mut self, delta_units: f64) {
        self.fine += delta_units;
        self.renormalize();
    }

    fn renormalize(&mut self) {
        let m = (self.fine + 0.5).floor();
        if m != 0.0 {
            self.j += m as i128;
            self.fine -= m;
        }
        while self.fine >= 0.5 {
            self.fine -= 1.0;
            self.j += 1;
        }
        while self.fine < -0.5 {
            self.fine += 1.0;
            self.j -= 1;
        }
    }

    /// Signed distance to the centered reference index, in d_min units.
    /// This is the estimation error the transmitter re-scales each round.
    pub fn offset_units(&self, j_ref: i128) -> f64 {
        (self.j - j_ref) as f64 + self.fine
    }

    /// Centered index component (j = i - M/2).
    pub fn coarse_centered(&self) -> i128 {
        self.j
    }

    /// Residual component in d_min units, in [-1/2, 1/2).
    pub fn fine(&self) -> f64 {
        self.fine
    }

    /// Final decision: nearest constellation index, boundary ties to the
    /// lower index, clipped to the constellation edge.
    pub fn decode_index(&self, c: &PamConstellation) -> u64 {
        let mut j = self.j;
        if self.fine <= -0.5 {
            j -= 1;
        }
        let half_m = (c.m_points() / 2) as i128;
        (j + half_m).clamp(0, c.m_points() as i128 - 1) as u64
    }
}

/// Runs one SK trial over a noiseless-feedback channel pair.
pub fn run_trial(
    p: &SkParams,
    sched: &SkSchedule,
    bits: &MessageBits,
    ch: &mut ChannelPair,
) -> Result<TrialOutcome> {
    check_channel(p, bits, ch)?;
    Ok(run_trial_indexed(p, sched, bits.index(), ch, None))
}

/// As [`run_trial`] but also returns the realized estimation error after
/// every round, for variance diagnostics and stability comparisons.
pub fn run_trial_traced(
    p: &SkParams,
    sched: &SkSchedule,
    bits: &MessageBits,
    ch: &mut ChannelPair,
) -> Result<(TrialOutcome, Vec<f64>)> {
    check_channel(p, bits, ch)?;
    let mut eps = Vec::with_capacity(p.n_rounds as usize);
    let outcome = run_trial_impl(p, sched, bits.index(), ch, None, Some(&mut eps));
    Ok((outcome, eps))
}

fn check_channel(p: &SkParams, bits: &MessageBits, ch: &ChannelPair) -> Result<()> {
    if ch.sigma2_fb() != 0.0 {
        return Err(Error::Config(
            "SK assumes a noiseless feedback link; use the modulo_sk scheme for noisy feedback"
                .into(),
        ));
    }
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
    p: &SkParams,
    sched: &SkSchedule,
    w: u64,
    ch: &mut ChannelPair,
    trace: Option<&mut RoundTrace>,
) -> TrialOutcome {
    run_trial_impl(p, sched, w, ch, trace, None)
}

fn run_trial_impl(
    p: &SkParams,
    sched: &SkSchedule,
    w: u64,
    ch: &mut ChannelPair,
    mut trace: Option<&mut RoundTrace>,
    mut eps_log: Option<&mut Vec<f64>>,
) -> TrialOutcome {
    let c = PamConstellation::build(p.k_bits).expect("validated k_bits");
    let d = c.min_distance();
    let sqrt_p = p.p_ff.sqrt();
    let j_w = w as i128 - (c.m_points() / 2) as i128;

    let x1 = sqrt_p * c.point(w);
    if let Some(t) = trace.as_mut() {
        t.ff_sq_sum[0] += x1 * x1;
    }
    let y1 = ch.transmit_ff(x1);
    let mut stat = SplitStatistic::from_estimate(y1 / sqrt_p, &c);

    for (i, step) in sched.steps().iter().enumerate() {
        let eps = stat.offset_units(j_w) * d;
        if let Some(t) = trace.as_mut() {
            t.eps_sum[i] += eps;
            t.eps_sq_sum[i] += eps * eps;
        }
        if let Some(log) = eps_log.as_mut() {
            log.push(eps);
        }
        let x = step.gain * eps;
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
        wrap_events: 0,
        fb_power_sum: 0.0,
    }
}
