//! The paired AWGN feedforward/feedback channels plus empirical power
//! accounting against the average power constraints.

use crate::error::{Error, Result};
use crate::numerics::{GaussianStream, RandomSource};

/// Relative slack allowed on the empirical average-power check.
pub const POWER_TOLERANCE: f64 = 0.01;

/// Accumulated squared transmit amplitudes per link.
///
/// Pure accumulator: merging audits from parallel trials is exact addition.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerAudit {
    pub sum_sq_ff: f64,
    pub sum_sq_fb: f64,
    pub uses_ff: u64,
    pub uses_fb: u64,
}

impl PowerAudit {
    pub fn merge(&mut self, other: &PowerAudit) {
        self.sum_sq_ff += other.sum_sq_ff;
        self.sum_sq_fb += other.sum_sq_fb;
        self.uses_ff += other.uses_ff;
        self.uses_fb += other.uses_fb;
    }

    pub fn mean_ff(&self) -> f64 {
        if self.uses_ff == 0 {
            0.0
        } else {
            self.sum_sq_ff / self.uses_ff as f64
        }
    }

    pub fn mean_fb(&self) -> f64 {
        if self.uses_fb == 0 {
            0.0
        } else {
            self.sum_sq_fb / self.uses_fb as f64
        }
    }
}

/// Outcome of checking a [`PowerAudit`] against the power constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditVerdict {
    pub mean_power_ff: f64,
    pub mean_power_fb: f64,
    pub ff_ok: bool,
    pub fb_ok: bool,
}

impl AuditVerdict {
    pub fn pass(&self) -> bool {
        self.ff_ok && self.fb_ok
    }
}

/// Checks the campaign-average power per channel use on each link,
/// allowing [`POWER_TOLERANCE`] of finite-sample slack.
pub fn audit_report(audit: &PowerAudit, p_ff: f64, p_fb: f64) -> Result<AuditVerdict> {
    if audit.uses_ff == 0 && audit.uses_fb == 0 {
        return Err(Error::State("power audit has recorded no channel uses".into()));
    }
    let mean_ff = audit.mean_ff();
    let mean_fb = audit.mean_fb();
    Ok(AuditVerdict {
        mean_power_ff: mean_ff,
        mean_power_fb: mean_fb,
        ff_ok: mean_ff <= p_ff * (1.0 + POWER_TOLERANCE),
        fb_ok: mean_fb <= p_fb * (1.0 + POWER_TOLERANCE),
    })
}

/// One trial's pair of independent AWGN links sharing a noise stream.
///
/// A zero noise variance makes the corresponding link exact and draws
/// nothing from the stream, so noiseless configurations consume the same
/// sample sequence as schemes that never touch that link.
#[derive(Debug, Clone)]
pub struct ChannelPair {
    sigma2_ff: f64,
    sigma2_fb: f64,
    sigma_ff: f64,
    sigma_fb: f64,
    noise: GaussianStream,
    audit: PowerAudit,
    stream_id: u64,
}

impl ChannelPair {
    pub fn new(sigma2_ff: f64, sigma2_fb: f64, source: RandomSource) -> Result<Self> {
        if sigma2_ff < 0.0 || sigma2_fb < 0.0 {
            return Err(Error::Config(format!(
                "noise variances must be nonnegative, got ff={sigma2_ff} fb={sigma2_fb}"
            )));
        }
        Ok(ChannelPair {
            sigma2_ff,
            sigma2_fb,
            sigma_ff: sigma2_ff.sqrt(),
            sigma_fb: sigma2_fb.sqrt(),
            noise: source.normals(),
            audit: PowerAudit::default(),
            stream_id: source.stream_id,
        })
    }

    pub fn sigma2_ff(&self) -> f64 {
        self.sigma2_ff
    }

    pub fn sigma2_fb(&self) -> f64 {
        self.sigma2_fb
    }

    /// Trial identity; schemes derive per-trial common randomness from it.
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Feedforward use: returns `x + Z`, `Z ~ N(0, sigma2_ff)`.
    pub fn transmit_ff(&mut self, x: f64) -> f64 {
        self.audit.sum_sq_ff += x * x;
        self.audit.uses_ff += 1;
        if self.sigma2_ff == 0.0 {
            x
        } else {
            x + self.sigma_ff * self.noise.next_normal()
        }
    }

    /// Feedback use: returns `x + Z~`, `Z~ ~ N(0, sigma2_fb)`.
    pub fn transmit_fb(&mut self, x: f64) -> f64 {
        self.audit.sum_sq_fb += x * x;
        self.audit.uses_fb += 1;
        if self.sigma2_fb == 0.0 {
            x
        } else {
            x + self.sigma_fb * self.noise.next_normal()
        }
    }

    pub fn audit(&self) -> &PowerAudit {
        &self.audit
    }

    pub fn into_audit(self) -> PowerAudit {
        self.audit
    }
}
