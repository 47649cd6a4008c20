//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers once its assertions hold.
//!
//! Reference operating points (rate 1/3, unit transmit power):
//!   1. Modulo-SK, forward 0 dB, K=13, N=39, no dither, feedback 16 dB:
//!      BER <= 1e-4 with at least 100 symbol errors collected.
//!   2. Same at feedback 15 dB: the BER confidence interval sits strictly
//!      below the length-39 no-feedback converse floor.
//!   3. Forward 0 dB, feedback 27 dB, N=15: the dithered analytical bound
//!      is below 1e-6 per bit and simulation is consistent at 1e-5
//!      resolution.
//!   4. Classical SK at K=50, N=150 runs in double precision with the
//!      simulated SER matching the effective-SNR prediction.
//!   5. The empirical error variance after N rounds equals
//!      (1/SNR)(1+SNR)^-(N-1) across an (N, SNR) grid.
//!   6. Modulo-SK over a clean feedback link reproduces SK trajectories.
//!   7. Dithered SER never beats its analytical upper bound at 95%
//!      confidence across the feedback sweep grid; dither-free does no
//!      worse than dithered.
//!   8. Measured feedback power respects the constraint (and equals the
//!      cell-uniform power under dither).
//!   9. Campaign CSVs are byte-identical across worker counts and reruns.

use modsk::bounds::{bler_to_ber_lower, msk_ser_upper_bound, no_feedback_converse_bler};
use modsk::channel::ChannelPair;
use modsk::modulo_sk::{
    feedback_power_check, modulo_sk_schedule, run_trial_traced as msk_traced, select_kappa,
    ModuloSkParams,
};
use modsk::numerics::RandomSource;
use modsk::pam::MessageBits;
use modsk::sim::{
    confidence_interval, run_campaign, trial_message_index, SchemeConfig, StopRule,
};
use modsk::sk::{run_trial_traced as sk_traced, sk_schedule, sk_ser_prediction, SkParams};
use modsk_cli::config::{CommandKind, ConfigOverlay, ExperimentConfig};

fn auto_modulo_params(feedback_snr_db: f64, n_rounds: u32, k_bits: u32, dither: bool) -> ModuloSkParams {
    let base =
        ModuloSkParams::from_snr_db(0.0, feedback_snr_db, n_rounds, k_bits, 3.0, dither, 7)
            .unwrap();
    let (kappa, _) = select_kappa(&base).unwrap();
    ModuloSkParams { kappa, ..base }
}

#[test]
fn criterion_1_threshold_16db_feedback_ber_at_most_1e4() {
    let p = auto_modulo_params(16.0, 39, 13, false);
    let stop = StopRule::new(20_000_000, 100, 1e-8).unwrap();
    let r = run_campaign(&SchemeConfig::ModuloSk(p), &stop, 0xACC1, None).unwrap();
    assert!(
        r.estimate.symbol_errors >= 100,
        "collected only {} symbol errors",
        r.estimate.symbol_errors
    );
    assert!(
        r.estimate.ber <= 1e-4,
        "BER {} above 1e-4 at 16 dB feedback SNR",
        r.estimate.ber
    );
    println!(
        "ACCEPTANCE 1: PASS - 16 dB feedback, kappa={}, BER {:.3e} (<= 1e-4) from {} trials, {} symbol errors",
        p.kappa, r.estimate.ber, r.estimate.trials, r.estimate.symbol_errors
    );
}

#[test]
fn criterion_2_15db_feedback_beats_no_feedback_converse() {
    let p = auto_modulo_params(15.0, 39, 13, false);
    let stop = StopRule::new(20_000_000, 100, 1e-8).unwrap();
    let r = run_campaign(&SchemeConfig::ModuloSk(p), &stop, 0xACC2, None).unwrap();
    let converse = bler_to_ber_lower(no_feedback_converse_bler(39, 1.0 / 3.0, 1.0), 13);
    assert!(
        r.estimate.symbol_errors >= 100,
        "collected only {} symbol errors",
        r.estimate.symbol_errors
    );
    assert!(
        r.estimate.ci_high < converse,
        "BER CI upper edge {:.3e} not below the N=39 converse floor {:.3e}",
        r.estimate.ci_high,
        converse
    );
    println!(
        "ACCEPTANCE 2: PASS - 15 dB feedback BER {:.3e} (CI up to {:.3e}) beats the no-feedback floor {:.3e}",
        r.estimate.ber, r.estimate.ci_high, converse
    );
}

#[test]
fn criterion_3_n15_at_27db_feedback_below_1e6() {
    // Analytical route: the dithered SER bound divided by K must already
    // sit below 1e-6.
    let p = auto_modulo_params(27.0, 15, 5, false);
    let sched = modulo_sk_schedule(&p).unwrap();
    let bound_ber = msk_ser_upper_bound(&p, &sched) / 5.0;
    assert!(
        bound_ber <= 1e-6,
        "analytical BER bound {bound_ber:.3e} above 1e-6"
    );
    // Simulation consistency at 1e-5 resolution: a million bits without
    // contradicting the bound.
    let stop = StopRule::fixed_trials(200_000);
    let r = run_campaign(&SchemeConfig::ModuloSk(p), &stop, 0xACC3, None).unwrap();
    assert!(r.estimate.bits >= 1_000_000);
    assert!(
        r.estimate.ci_high <= 1e-5,
        "simulation resolution too coarse: CI {:.3e}",
        r.estimate.ci_high
    );
    assert!(
        r.estimate.ci_low <= 1e-6,
        "simulation contradicts the bound: CI low {:.3e}",
        r.estimate.ci_low
    );
    println!(
        "ACCEPTANCE 3: PASS - N=15 at 27 dB feedback: bound BER {:.3e} <= 1e-6, simulated {} bit errors in {} bits (CI high {:.3e})",
        bound_ber, r.estimate.bit_errors, r.estimate.bits, r.estimate.ci_high
    );
}

#[test]
fn criterion_4_sk_stable_at_k50_n150() {
    // Pick the forward SNR where the prediction is 3e-4, inside the
    // [1e-6, 1e-2] window, by bisection on the closed form.
    let (mut lo, mut hi) = (-3.0f64, -1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let pred = sk_ser_prediction(&SkParams::from_snr_db(mid, 150, 50).unwrap());
        if pred > 3e-4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let snr_db = 0.5 * (lo + hi);
    let p = SkParams::from_snr_db(snr_db, 150, 50).unwrap();
    let prediction = sk_ser_prediction(&p);
    assert!((1e-6..=1e-2).contains(&prediction));

    let trials = 300_000u64;
    let r = run_campaign(
        &SchemeConfig::Sk(p),
        &StopRule::fixed_trials(trials),
        0xACC4,
        None,
    )
    .unwrap();
    assert!(r.estimate.ber.is_finite() && r.estimate.ser.is_finite());
    assert!(r.trace.eps_sq_sum.iter().all(|v| v.is_finite()));
    assert!(
        r.estimate.symbol_errors >= 50,
        "only {} symbol errors observed",
        r.estimate.symbol_errors
    );
    let se = (prediction * (1.0 - prediction) / trials as f64).sqrt();
    assert!(
        (r.estimate.ser - prediction).abs() <= 3.0 * se,
        "SER {:.4e} vs prediction {:.4e} (3se = {:.2e})",
        r.estimate.ser,
        prediction,
        3.0 * se
    );
    println!(
        "ACCEPTANCE 4: PASS - K=50 N=150 at {:.3} dB: SER {:.3e} vs prediction {:.3e}, no numerical breakdown",
        snr_db, r.estimate.ser, prediction
    );
}

#[test]
fn criterion_5_effective_snr_variance_oracle() {
    for &n_rounds in &[2u32, 5, 15, 39] {
        for &snr in &[0.5f64, 1.0, 2.0] {
            let p = SkParams::new(n_rounds, 1, 1.0, 1.0 / snr).unwrap();
            let r = run_campaign(
                &SchemeConfig::Sk(p),
                &StopRule::fixed_trials(10_000),
                0xACC5 ^ u64::from(n_rounds) ^ (snr * 16.0) as u64,
                None,
            )
            .unwrap();
            let expect = (1.0 / snr) * (1.0 + snr).powi(-(n_rounds as i32 - 1));
            let got = r.trace.eps_variance(n_rounds);
            let se = expect * (2.0 / (r.trace.trials as f64 - 1.0)).sqrt();
            assert!(
                (got - expect).abs() <= 4.0 * se,
                "N={n_rounds} SNR={snr}: Var {got:e} vs {expect:e}"
            );
        }
    }
    println!(
        "ACCEPTANCE 5: PASS - Var(eps_N) matches (1/SNR)(1+SNR)^-(N-1) over N in {{2,5,15,39}}, SNR in {{0.5,1,2}}"
    );
}

#[test]
fn criterion_6_degenerate_reduction_to_sk() {
    let sk_p = SkParams::from_snr_db(0.0, 39, 13).unwrap();
    let sk_sched = sk_schedule(&sk_p);
    let msk_p = ModuloSkParams::new(39, 13, 1.0, 1e6, sk_p.sigma2_ff, 0.0, 6.5, false, 0).unwrap();
    let msk_sched = modulo_sk_schedule(&msk_p).unwrap();
    let seed = 0xACC6;
    let mut max_rel = 0.0f64;
    for trial in 0..200u64 {
        let w = trial_message_index(seed, trial, 13);
        let bits = MessageBits::from_index(w, 13);
        let mut ch_a = ChannelPair::new(sk_p.sigma2_ff, 0.0, RandomSource::new(seed, trial)).unwrap();
        let mut ch_b = ChannelPair::new(sk_p.sigma2_ff, 0.0, RandomSource::new(seed, trial)).unwrap();
        let (out_sk, eps_sk) = sk_traced(&sk_p, &sk_sched, &bits, &mut ch_a).unwrap();
        let (out_msk, eps_msk) = msk_traced(&msk_p, &msk_sched, &bits, &mut ch_b).unwrap();
        assert_eq!(out_sk.bit_errors, out_msk.bit_errors);
        for (round, (a, b)) in eps_sk.iter().zip(&eps_msk).enumerate() {
            let scale = sk_sched.sigma2_eps(round as u32 + 1).sqrt().max(a.abs());
            let rel = (a - b).abs() / scale;
            max_rel = max_rel.max(rel);
            assert!(rel <= 1e-9, "trial {trial} round {round}: rel {rel:e}");
        }
    }
    println!(
        "ACCEPTANCE 6: PASS - clean-feedback Modulo-SK tracks SK sample-for-sample (max rel dev {max_rel:.2e})"
    );
}

#[test]
fn criterion_7_bound_validity_across_feedback_grid() {
    let mut checked = 0;
    for i in 0..=10 {
        let fb_db = 10.0 + i as f64;
        let base = ModuloSkParams::from_snr_db(0.0, fb_db, 39, 13, 3.0, true, 7).unwrap();
        let Ok((kappa, _)) = select_kappa(&base) else {
            continue;
        };
        let dithered = ModuloSkParams {
            kappa,
            dither_enabled: true,
            ..base
        };
        let sched = modulo_sk_schedule(&dithered).unwrap();
        let bound = msk_ser_upper_bound(&dithered, &sched);
        let stop = StopRule::new(600_000, 100, 1e-8).unwrap();
        let seed = 0xACC7 + i as u64;
        let with = run_campaign(&SchemeConfig::ModuloSk(dithered), &stop, seed, None).unwrap();
        let plain = ModuloSkParams {
            dither_enabled: false,
            ..dithered
        };
        let without = run_campaign(&SchemeConfig::ModuloSk(plain), &stop, seed, None).unwrap();

        // The dithered simulation must not refute the upper bound: the
        // lower 95% edge of its SER stays below the bound.
        let (ser_low, _) =
            confidence_interval(with.estimate.symbol_errors, with.estimate.trials).unwrap();
        assert!(
            ser_low <= bound,
            "{fb_db} dB: dithered SER {:.3e} (CI low {:.3e}) refutes bound {:.3e}",
            with.estimate.ser,
            ser_low,
            bound
        );
        // Dither-free performs at least as well, up to two standard errors.
        let se = (with.estimate.ser * (1.0 - with.estimate.ser)
            / with.estimate.trials as f64)
            .sqrt();
        assert!(
            without.estimate.ser <= with.estimate.ser + 2.0 * se,
            "{fb_db} dB: dither-free SER {:.3e} worse than dithered {:.3e} + 2se",
            without.estimate.ser,
            with.estimate.ser
        );
        checked += 1;
    }
    assert_eq!(checked, 11, "every feedback sweep grid point must be feasible");
    println!(
        "ACCEPTANCE 7: PASS - dithered SER below its bound and dither-free no worse at all {checked} grid points"
    );
}

#[test]
fn criterion_8_feedback_power_compliance() {
    // 20k trials of 38 feedback uses exceeds the 1e5-symbol floor.
    let plain = auto_modulo_params(16.0, 39, 13, false);
    let r = run_campaign(
        &SchemeConfig::ModuloSk(plain),
        &StopRule::fixed_trials(20_000),
        0xACC8,
        None,
    )
    .unwrap();
    let verdict = feedback_power_check(r.audit.sum_sq_fb, r.audit.uses_fb, plain.p_fb, false)
        .unwrap();
    assert!(
        verdict.compliant,
        "dither-free feedback power {:.4} exceeds P~ * 1.01",
        verdict.mean_power
    );

    let dithered = ModuloSkParams {
        dither_enabled: true,
        ..plain
    };
    let r2 = run_campaign(
        &SchemeConfig::ModuloSk(dithered),
        &StopRule::fixed_trials(20_000),
        0xACC8,
        None,
    )
    .unwrap();
    let verdict2 =
        feedback_power_check(r2.audit.sum_sq_fb, r2.audit.uses_fb, dithered.p_fb, true).unwrap();
    assert_eq!(
        verdict2.uniform_match,
        Some(true),
        "dithered feedback power {:.4} not within 1% of P~",
        verdict2.mean_power
    );
    println!(
        "ACCEPTANCE 8: PASS - feedback power {:.4} P~ without dither (<= 1.01), {:.4} P~ with dither (= 1 +/- 0.01)",
        verdict.mean_power, verdict2.mean_power
    );
}

#[test]
fn criterion_9_csv_determinism_across_workers() {
    let make = |workers: u32| {
        let overlay = ConfigOverlay {
            grid: Some("13,15".into()),
            max_trials: Some(30_000),
            target_errors: Some(60),
            seed: Some(99),
            workers: Some(workers as usize),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(CommandKind::FbSweep, &overlay).unwrap();
        modsk_cli::commands::run_command(&cfg).unwrap().csv
    };
    let one = make(1);
    let eight = make(8);
    let one_again = make(1);
    assert_eq!(one, eight, "CSV differs between 1 and 8 workers");
    assert_eq!(one, one_again, "CSV differs across reruns");
    println!(
        "ACCEPTANCE 9: PASS - identical CSV bytes under 1 and 8 workers and across reruns ({} rows)",
        one.lines().count() - 1
    );
}
