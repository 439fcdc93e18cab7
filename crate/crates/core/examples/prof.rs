use rtrrl::ac::{FeedbackMode, OptimizerKind};
use rtrrl::agent;
use rtrrl::config::{CellKind, GradMode, TrainConfig};
use rtrrl::envs::parse_env_string;
use rtrrl::io::metrics::MemorySink;
use std::time::Instant;

fn main() {
    // prof env=<spec> key=value...
    let mut cfg = TrainConfig::default();
    cfg.hp.max_steps = 10_000_000;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        match k {
            "env" => {
                let (name, params) = parse_env_string(v).unwrap();
                cfg.env.name = name;
                cfg.env.params = params;
            }
            "opt" => {
                cfg.hp.optimizer =
                    if v == "sgd" { OptimizerKind::Sgd } else { OptimizerKind::Adam }
            }
            "cell" => {
                cfg.alg.cell = if v == "lru" { CellKind::Lru } else { CellKind::Ctrnn };
                cfg.alg.mode = if v == "lru" { GradMode::DiagRtrl } else { GradMode::Rflo };
            }
            "mode" => {
                cfg.alg.mode = match v {
                    "rtrl" => GradMode::Rtrl,
                    "diag_rtrl" => GradMode::DiagRtrl,
                    _ => GradMode::Rflo,
                }
            }
            "fb" => {
                cfg.alg.feedback =
                    if v == "exact" { FeedbackMode::Exact } else { FeedbackMode::Fa }
            }
            "aa" => cfg.hp.alpha_a = v.parse().unwrap(),
            "ac" => cfg.hp.alpha_c = v.parse().unwrap(),
            "ar" => cfg.hp.alpha_r = v.parse().unwrap(),
            "g" => cfg.hp.gamma = v.parse().unwrap(),
            "la" => cfg.hp.lambda_a = v.parse().unwrap(),
            "lc" => cfg.hp.lambda_c = v.parse().unwrap(),
            "lr" => cfg.hp.lambda_r = v.parse().unwrap(),
            "eh" => cfg.hp.eta_h = v.parse().unwrap(),
            "ea" => cfg.hp.eta_a = v.parse().unwrap(),
            "eps" => cfg.hp.action_epsilon = v.parse().unwrap(),
            "n" => cfg.hp.n = v.parse().unwrap(),
            "norm" => cfg.hp.normalize_obs = v.parse().unwrap(),
            "clip" => cfg.hp.clip = v.parse().unwrap(),
            "steps" => cfg.hp.max_steps = v.parse().unwrap(),
            "stop" => cfg.run.stop_at_reward = Some(v.parse().unwrap()),
            "seed" => cfg.run.seed = v.parse().unwrap(),
            "patience" => cfg.hp.patience = v.parse().unwrap(),
            other => panic!("unknown key {other}"),
        }
    }
    let t0 = Instant::now();
    let mut sink = MemorySink::new();
    let res = agent::train(&cfg, &mut sink).unwrap();
    let evals: Vec<String> =
        sink.records.iter().filter_map(|r| r.eval_reward).map(|e| format!("{e:.0}")).collect();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    println!(
        "[{}] best {:.2} steps {} time {:.0}s evals {}",
        argv.join(" "), res.best_eval, res.steps, t0.elapsed().as_secs_f64(), evals.join(",")
    );
}
