use rtrrl::agent;
use rtrrl::config::TrainConfig;
use rtrrl::envs::ParamValue;
use rtrrl::io::metrics::NullSink;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("bandit");
    let mut cfg = TrainConfig::default();
    match which {
        "bandit" => {
            cfg.env.name = "bernoulli_bandit".into();
            cfg.hp.max_steps = 2_000_000;
            cfg.run.stop_at_reward = Some(80.0);
        }
        "memory4" => {
            cfg.env.name = "memory_chain".into();
            cfg.env.params.insert("length".into(), ParamValue::Int(4));
            cfg.hp.max_steps = 5_000_000;
            cfg.run.stop_at_reward = Some(0.9);
        }
        "memory8" => {
            cfg.env.name = "memory_chain".into();
            cfg.env.params.insert("length".into(), ParamValue::Int(8));
            cfg.hp.max_steps = 5_000_000;
            cfg.run.stop_at_reward = Some(0.9);
        }
        "cartpole" => {
            cfg.env.name = "cartpole".into();
            cfg.env.params.insert("mask".into(), ParamValue::Str("vel".into()));
            cfg.hp.max_steps = 10_000_000;
            cfg.run.stop_at_reward = Some(450.0);
        }
        other => panic!("unknown probe {other}"),
    }
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    cfg.run.seed = seed;
    let t0 = Instant::now();
    let mut sink = NullSink;
    let res = agent::train(&cfg, &mut sink).unwrap();
    println!(
        "{} seed {}: best {:.3} at epoch {} ({} steps, {} episodes) in {:.1}s",
        which, seed, res.best_eval, res.best_epoch, res.steps, res.episodes,
        t0.elapsed().as_secs_f64()
    );
}
