//! Acceptance suite. Each test prints one `[criterion N] PASS/FAIL` line
//! (visible with `cargo test -- --nocapture`) and asserts its threshold.
//!
//! The quantitative training criteria run five-seed sweeps at desk scale
//! with early stopping once the target reward is reached.

use std::time::Instant;

use rtrrl::ac::{FeedbackMode, OptimizerKind};
use rtrrl::agent::{self, median_best};
use rtrrl::config::TrainConfig;
use rtrrl::envs::ParamValue;
use rtrrl::io::metrics::NullSink;
use rtrrl::verify::{self, VerifyOptions};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn full() -> VerifyOptions {
    VerifyOptions { quick: false, inject_fault: None }
}

fn report(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[criterion {criterion}] {tag}: {detail}");
    assert!(pass, "criterion {criterion}: {detail}");
}

fn run_sweep(cfg: &TrainConfig) -> Vec<(u64, agent::TrainResult)> {
    agent::sweep(cfg, &SEEDS, |_| Ok(Box::new(NullSink))).expect("sweep runs")
}

/// RTRL gradients match finite differences (1e-4) and the unrolled reverse
/// oracle (1e-6) over 20 seeded instances, in under a minute.
#[test]
fn criterion_1_rtrl_exactness() {
    let t0 = Instant::now();
    let fd = verify::check_rtrl_vs_fd(&full());
    let unrolled = verify::check_rtrl_vs_unrolled(&full());
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = fd.pass && unrolled.pass && elapsed < 60.0;
    report(
        1,
        pass,
        &format!("{} | {} | {elapsed:.1}s", fd.detail, unrolled.detail),
    );
}

/// Diagonal-RTRL traces for the LRU match finite differences at 1e-5.
#[test]
fn criterion_2_lru_diag_rtrl_exactness() {
    let t0 = Instant::now();
    let r = verify::check_lru_vs_fd(&full());
    let elapsed = t0.elapsed().as_secs_f64();
    report(2, r.pass && elapsed < 60.0, &format!("{} | {elapsed:.1}s", r.detail));
}

/// With the recurrent block zeroed, RFLO equals the RTRL diagonal to 1e-12
/// over 50 steps, and the tau trace follows its scalar recurrence.
#[test]
fn criterion_3_rflo_structure() {
    let r = verify::check_rflo_structure(&full());
    report(3, r.pass, &r.detail);
}

/// Linear TD(lambda) converges to the analytic values of a 5-state Markov
/// reward process within 1e-2 in at most 2e5 steps (lambda in {0, 0.9}).
#[test]
fn criterion_4_td_lambda_convergence() {
    let t0 = Instant::now();
    let r = verify::check_td_lambda_mrp(&full());
    let elapsed = t0.elapsed().as_secs_f64();
    report(4, r.pass && elapsed < 60.0, &format!("{} | {elapsed:.1}s", r.detail));
}

/// RFLO with feedback alignment reaches a median best evaluation of at
/// least 80/100 on the two-armed Bernoulli bandit within 2e6 steps.
#[test]
fn criterion_5_bandit_learning() {
    let mut cfg = TrainConfig::default();
    cfg.env.name = "bernoulli_bandit".into();
    cfg.alg.feedback = FeedbackMode::Fa;
    cfg.hp.max_steps = 2_000_000;
    cfg.hp.optimizer = OptimizerKind::Sgd;
    cfg.hp.alpha_a = 3e-3;
    cfg.hp.alpha_c = 3e-3;
    cfg.hp.alpha_r = 3e-3;
    cfg.hp.gamma = 0.9;
    cfg.hp.eta_h = 3e-3;
    cfg.hp.action_epsilon = 0.03;
    cfg.run.stop_at_reward = Some(82.0);
    let results = run_sweep(&cfg);
    let med = median_best(&results);
    let all: Vec<String> = results.iter().map(|(s, r)| format!("{s}:{:.1}", r.best_eval)).collect();
    report(5, med >= 80.0, &format!("median best {med:.1} (target 80) [{}]", all.join(" ")));
}

fn memory_chain_sweep(length: i64, feedback: FeedbackMode) -> (f64, String) {
    let mut cfg = TrainConfig::default();
    cfg.env.name = "memory_chain".into();
    cfg.env.params.insert("length".into(), ParamValue::Int(length));
    cfg.alg.feedback = feedback;
    cfg.hp.max_steps = 5_000_000;
    cfg.run.stop_at_reward = Some(0.95);
    let results = run_sweep(&cfg);
    let med = median_best(&results);
    let all: Vec<String> = results.iter().map(|(s, r)| format!("{s}:{:.2}", r.best_eval)).collect();
    (med, all.join(" "))
}

/// Default-configuration RFLO solves MemoryChain-4 and MemoryChain-8 to a
/// median best evaluation of at least 0.9 within 5e6 steps.
#[test]
fn criterion_6_memory_chain() {
    let (med4, all4) = memory_chain_sweep(4, FeedbackMode::Fa);
    let (med8, all8) = memory_chain_sweep(8, FeedbackMode::Fa);
    report(
        6,
        med4 >= 0.9 && med8 >= 0.9,
        &format!("length 4 median {med4:.2} [{all4}]; length 8 median {med8:.2} [{all8}] (target 0.9)"),
    );
}

/// RFLO on velocity-masked cart-pole reaches a median best evaluation of at
/// least 450 within 1e7 steps.
#[test]
fn criterion_7_cartpole_vel() {
    let mut cfg = TrainConfig::default();
    cfg.env.name = "cartpole".into();
    cfg.env.params.insert("mask".into(), ParamValue::Str("vel".into()));
    cfg.hp.max_steps = 10_000_000;
    cfg.hp.alpha_a = 1e-4;
    cfg.hp.alpha_c = 1e-3;
    cfg.hp.alpha_r = 3e-5;
    cfg.hp.gamma = 0.95;
    cfg.hp.eta_h = 1e-4;
    cfg.hp.patience = 100;
    cfg.run.stop_at_reward = Some(460.0);
    let results = run_sweep(&cfg);
    let med = median_best(&results);
    let all: Vec<String> = results.iter().map(|(s, r)| format!("{s}:{:.0}", r.best_eval)).collect();
    report(7, med >= 450.0, &format!("median best {med:.0} (target 450) [{}]", all.join(" ")));
}

/// Exact weight transport and feedback alignment both reach 0.9 median on
/// MemoryChain-4.
#[test]
fn criterion_8_feedback_alignment_ablation() {
    let (med_fa, all_fa) = memory_chain_sweep(4, FeedbackMode::Fa);
    let (med_ex, all_ex) = memory_chain_sweep(4, FeedbackMode::Exact);
    report(
        8,
        med_fa >= 0.9 && med_ex >= 0.9,
        &format!("fa median {med_fa:.2} [{all_fa}]; exact median {med_ex:.2} [{all_ex}] (target 0.9)"),
    );
}

/// Identical (seed, config) runs produce byte-identical metric logs.
#[test]
fn criterion_9_determinism() {
    let r = verify::check_deterministic_replay(&full());
    report(9, r.pass, &r.detail);
}

/// 100 steps of the training loop match a literal transcription of the
/// update equations with zero divergence at 1e-12.
#[test]
fn criterion_10_loop_fidelity() {
    let rep = verify::loop_fidelity(100, 3).expect("fidelity run");
    report(
        10,
        rep.max_divergence <= 1e-12,
        &format!("max divergence {:.3e} over {} steps (tolerance 1e-12)", rep.max_divergence, rep.steps),
    );
}
