//! Experiment commands behind the CLI subcommands. Each returns the CSV
//! body and the metadata sidecar as strings; the binary writes them next
//! to each other so a run is reproducible from its sidecar alone.

use crate::config::{
    CommandKind, ConfigError, ExperimentConfig, FeedbackSnr, KappaSetting, Result,
};
use modsk::bounds::{awgn_capacity, msk_ser_upper_bound, no_feedback_converse_bler};
use modsk::modulo_sk::{modulo_sk_schedule, select_kappa, ModuloSkParams};
use modsk::numerics::db_to_linear;
use modsk::sim::{sweep, CampaignResult, KappaPolicy, SchemeConfig, SweepAxis, SweepPoint};
use modsk::sk::{sk_ser_prediction, SkParams};
use std::fmt::Write as _;

pub const FB_SWEEP_HEADER: &str = "feedback_snr_db, ber, ser, ci_low, ci_high, trials, \
bit_errors, bound_ber_upper, converse_ber_lower_n39, converse_ber_lower_n150, \
fb_power_empirical, compliant";

pub const FF_SWEEP_HEADER: &str = "forward_snr_db, n_rounds, ber, ser, ci_low, ci_high, \
trials, bit_errors, bound_ber_upper, converse_ber_lower_n39, converse_ber_lower_n150, \
fb_power_empirical, compliant";

pub const SK_CURVES_HEADER: &str =
    "forward_snr_db, k_bits, n_rounds, ber, ser, ci_low, ci_high, trials, bit_errors, \
ser_prediction";

pub const BOUNDS_HEADER: &str = "feedback_snr_db, kappa, bound_ser_upper, bound_ber_upper, \
converse_ber_lower_n39, converse_ber_lower_n150, capacity_bits_per_use, rate_feasible";

/// Everything a command produces.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub csv: String,
    pub sidecar: String,
}

pub fn run_command(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    match cfg.command {
        CommandKind::FbSweep => cmd_fb_sweep(cfg),
        CommandKind::FfSweep => cmd_ff_sweep(cfg),
        CommandKind::SkCurves => cmd_sk_curves(cfg),
        CommandKind::Bounds => cmd_bounds(cfg),
    }
}

fn engine_err(e: modsk::Error) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

/// Template Modulo-SK parameters at unit power; the swept axis is
/// overwritten per point.
fn modulo_template(cfg: &ExperimentConfig, feedback_snr_db: f64) -> Result<ModuloSkParams> {
    let kappa0 = match cfg.kappa {
        KappaSetting::Fixed(v) => v,
        KappaSetting::Auto => 3.0,
    };
    ModuloSkParams::from_snr_db(
        cfg.forward_snr_db,
        feedback_snr_db,
        cfg.n_rounds,
        cfg.k_bits,
        kappa0,
        cfg.dither,
        cfg.seed,
    )
    .map_err(engine_err)
}

fn kappa_policy(cfg: &ExperimentConfig) -> KappaPolicy {
    match cfg.kappa {
        KappaSetting::Auto => KappaPolicy::Auto,
        KappaSetting::Fixed(v) => KappaPolicy::Fixed(v),
    }
}

/// BER lower bound from the no-feedback converse at block length `n`,
/// divided by the information bits the rate puts in that block.
fn converse_ber(n: u64, rate: (u32, u32), forward_snr_db: f64) -> f64 {
    let rate_bits = f64::from(rate.0) / f64::from(rate.1);
    let bler = no_feedback_converse_bler(n, rate_bits, db_to_linear(forward_snr_db));
    bler / (rate_bits * n as f64)
}

/// The per-bit analytical upper bound at one operating point, if a
/// schedule is feasible there.
fn bound_ber_at(p: &ModuloSkParams) -> Option<f64> {
    let sched = modulo_sk_schedule(p).ok()?;
    Some(msk_ser_upper_bound(p, &sched) / f64::from(p.k_bits))
}

/// Audit column pair for a campaign: measured mean feedback power and the
/// compliance flag (constraint with 1% slack; with dither also the
/// cell-uniform power match once enough symbols are recorded).
fn audit_columns(cfg: &ExperimentConfig, campaign: &CampaignResult, p_fb: f64) -> (f64, bool) {
    let mean = campaign.audit.mean_fb();
    let mut ok = mean <= p_fb * (1.0 + modsk::channel::POWER_TOLERANCE);
    if cfg.dither && campaign.audit.uses_fb >= 100_000 {
        ok = ok && (mean - p_fb).abs() <= 0.01 * p_fb;
    }
    (mean, ok)
}

fn sim_columns(point: &SweepPoint) -> String {
    match &point.campaign {
        Some(c) => {
            let e = &c.estimate;
            format!(
                "{:e}, {:e}, {:e}, {:e}, {}, {}",
                e.ber, e.ser, e.ci_low, e.ci_high, e.trials, e.bit_errors
            )
        }
        None => ", , , , , ".to_string(),
    }
}

fn cmd_fb_sweep(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let template = modulo_template(cfg, 16.0)?;
    let grid = cfg.grid.values();
    let points = sweep(
        SweepAxis::FeedbackSnrDb,
        &grid,
        &SchemeConfig::ModuloSk(template),
        kappa_policy(cfg),
        &cfg.stop_rule(),
        cfg.seed,
        cfg.workers_opt(),
    )
    .map_err(engine_err)?;

    let conv39 = converse_ber(39, cfg.rate, cfg.forward_snr_db);
    let conv150 = converse_ber(150, cfg.rate, cfg.forward_snr_db);
    let mut csv = String::new();
    let mut notes = Vec::new();
    let _ = writeln!(csv, "{FB_SWEEP_HEADER}");
    for point in &points {
        let bound = point.kappa.and_then(|kappa| {
            bound_ber_at(&ModuloSkParams {
                kappa,
                sigma2_fb: template.p_fb / db_to_linear(point.abscissa),
                ..template
            })
        });
        let (power, compliant) = match &point.campaign {
            Some(c) => {
                let (mean, ok) = audit_columns(cfg, c, template.p_fb);
                (format!("{mean:e}"), ok.to_string())
            }
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{}, {}, {}, {:e}, {:e}, {}, {}",
            point.abscissa,
            sim_columns(point),
            bound.map_or(String::new(), |b| format!("{b:e}")),
            conv39,
            conv150,
            power,
            compliant
        );
        match (&point.infeasible, point.kappa) {
            (Some(reason), _) => notes.push(format!(
                "point {} dB infeasible: {reason}",
                point.abscissa
            )),
            (None, Some(kappa)) => {
                notes.push(format!("kappa_chosen @ {} dB = {kappa}", point.abscissa))
            }
            _ => {}
        }
    }
    push_audit_note(&mut notes, cfg, &points, template.p_fb);
    Ok(CommandOutput {
        csv,
        sidecar: cfg.sidecar(&notes),
    })
}

fn cmd_ff_sweep(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let FeedbackSnr::Db(fb_db) = cfg.feedback_snr else {
        return Err(ConfigError::Invalid(
            "ff-sweep drives Modulo-SK over a noisy feedback link; set feedback_snr_db"
                .into(),
        ));
    };
    let grid = cfg.grid.values();
    let mut csv = String::new();
    let mut notes = Vec::new();
    let _ = writeln!(csv, "{FF_SWEEP_HEADER}");
    for &n_rounds in &cfg.n_rounds_list {
        let k_bits = crate::config::bits_for(n_rounds, cfg.rate)?;
        let per_n = ExperimentConfig {
            n_rounds,
            k_bits,
            ..cfg.clone()
        };
        let template = modulo_template(&per_n, fb_db)?;
        let points = sweep(
            SweepAxis::ForwardSnrDb,
            &grid,
            &SchemeConfig::ModuloSk(template),
            kappa_policy(cfg),
            &cfg.stop_rule(),
            // Distinct sub-streams per curve.
            cfg.seed ^ u64::from(n_rounds),
            cfg.workers_opt(),
        )
        .map_err(engine_err)?;
        for point in &points {
            let bound = point.kappa.and_then(|kappa| {
                bound_ber_at(&ModuloSkParams {
                    kappa,
                    sigma2_ff: template.p_ff / db_to_linear(point.abscissa),
                    ..template
                })
            });
            let (power, compliant) = match &point.campaign {
                Some(c) => {
                    let (mean, ok) = audit_columns(cfg, c, template.p_fb);
                    (format!("{mean:e}"), ok.to_string())
                }
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                csv,
                "{}, {}, {}, {}, {:e}, {:e}, {}, {}",
                point.abscissa,
                n_rounds,
                sim_columns(point),
                bound.map_or(String::new(), |b| format!("{b:e}")),
                converse_ber(39, cfg.rate, point.abscissa),
                converse_ber(150, cfg.rate, point.abscissa),
                power,
                compliant
            );
            if let Some(reason) = &point.infeasible {
                notes.push(format!(
                    "point N={n_rounds} {} dB infeasible: {reason}",
                    point.abscissa
                ));
            } else if let Some(kappa) = point.kappa {
                notes.push(format!(
                    "kappa_chosen @ N={n_rounds} {} dB = {kappa}",
                    point.abscissa
                ));
            }
        }
        push_audit_note(&mut notes, cfg, &points, template.p_fb);
    }
    Ok(CommandOutput {
        csv,
        sidecar: cfg.sidecar(&notes),
    })
}

fn cmd_sk_curves(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let grid = cfg.grid.values();
    let mut csv = String::new();
    let mut notes = Vec::new();
    let _ = writeln!(csv, "{SK_CURVES_HEADER}");
    for &(k_bits, n_rounds) in &cfg.pairs {
        let template = SkParams::from_snr_db(0.0, n_rounds, k_bits).map_err(engine_err)?;
        let points = sweep(
            SweepAxis::ForwardSnrDb,
            &grid,
            &SchemeConfig::Sk(template),
            KappaPolicy::Auto,
            &cfg.stop_rule(),
            cfg.seed ^ (u64::from(n_rounds) << 8) ^ u64::from(k_bits),
            cfg.workers_opt(),
        )
        .map_err(engine_err)?;
        for point in &points {
            let p_here = SkParams::from_snr_db(point.abscissa, n_rounds, k_bits)
                .map_err(engine_err)?;
            let prediction = sk_ser_prediction(&p_here);
            let campaign = point.campaign.as_ref().expect("SK points are always feasible");
            let e = &campaign.estimate;
            // Below the simulation floor the estimate is censored.
            let ber_cell = if e.ber < cfg.ber_floor {
                format!("<{:e}", cfg.ber_floor)
            } else {
                format!("{:e}", e.ber)
            };
            let _ = writeln!(
                csv,
                "{}, {}, {}, {}, {:e}, {:e}, {:e}, {}, {}, {:e}",
                point.abscissa,
                k_bits,
                n_rounds,
                ber_cell,
                e.ser,
                e.ci_low,
                e.ci_high,
                e.trials,
                e.bit_errors,
                prediction
            );
        }
        notes.push(format!(
            "curve K={k_bits} N={n_rounds}: noiseless feedback, prediction column is the \
             uncoded-PAM SER at the effective SNR"
        ));
    }
    Ok(CommandOutput {
        csv,
        sidecar: cfg.sidecar(&notes),
    })
}

fn cmd_bounds(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let template = modulo_template(cfg, 16.0)?;
    let capacity = awgn_capacity(db_to_linear(cfg.forward_snr_db));
    let rate_bits = f64::from(cfg.rate.0) / f64::from(cfg.rate.1);
    let conv39 = converse_ber(39, cfg.rate, cfg.forward_snr_db);
    let conv150 = converse_ber(150, cfg.rate, cfg.forward_snr_db);
    let mut csv = String::new();
    let mut notes = Vec::new();
    let _ = writeln!(csv, "{BOUNDS_HEADER}");
    for fb_db in cfg.grid.values() {
        let base = ModuloSkParams {
            sigma2_fb: template.p_fb / db_to_linear(fb_db),
            ..template
        };
        let resolved = match cfg.kappa {
            KappaSetting::Auto => select_kappa(&base).ok(),
            KappaSetting::Fixed(v) => {
                let candidate = ModuloSkParams { kappa: v, ..base };
                modulo_sk_schedule(&candidate)
                    .ok()
                    .map(|s| (v, msk_ser_upper_bound(&candidate, &s)))
            }
        };
        let (kappa_cell, ser_cell, ber_cell) = match resolved {
            Some((kappa, bound)) => (
                format!("{kappa}"),
                format!("{bound:e}"),
                format!("{:e}", bound / f64::from(cfg.k_bits)),
            ),
            None => {
                notes.push(format!("point {fb_db} dB infeasible for every margin"));
                (String::new(), String::new(), String::new())
            }
        };
        let _ = writeln!(
            csv,
            "{}, {}, {}, {}, {:e}, {:e}, {}, {}",
            fb_db,
            kappa_cell,
            ser_cell,
            ber_cell,
            conv39,
            conv150,
            capacity,
            rate_bits < capacity
        );
    }
    notes.push("no simulation: analytical curves only".into());
    Ok(CommandOutput {
        csv,
        sidecar: cfg.sidecar(&notes),
    })
}

/// Campaign-level audit summary for the sidecar.
fn push_audit_note(
    notes: &mut Vec<String>,
    cfg: &ExperimentConfig,
    points: &[SweepPoint],
    p_fb: f64,
) {
    let mut audit = modsk::channel::PowerAudit::default();
    for point in points {
        if let Some(c) = &point.campaign {
            audit.merge(&c.audit);
        }
    }
    if audit.uses_fb == 0 {
        return;
    }
    match modsk::channel::audit_report(&audit, 1.0, p_fb) {
        Ok(v) => notes.push(format!(
            "audit: mean ff power {:e}, mean fb power {:e}, verdict {}",
            v.mean_power_ff,
            v.mean_power_fb,
            if v.pass() { "PASS" } else { "FAIL" }
        )),
        Err(e) => notes.push(format!("audit unavailable: {e}")),
    }
    let _ = cfg;
}
