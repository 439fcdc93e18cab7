use rtrrl::envs::{Action, CartPole, Environment, ObsMask};

fn run(c1: f64, c2: f64, bias: f64, seeds: u64) -> f64 {
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut env = CartPole::new(ObsMask::Velocities, 0.0, seed);
        let mut obs = env.reset();
        let mut ret = 0.0;
        loop {
            let u = c1 * obs[0] + c2 * obs[1] + bias;
            let s = env.step(&Action::Discrete(usize::from(u > 0.0))).unwrap();
            ret += s.reward;
            obs = s.obs;
            if s.terminal {
                break;
            }
        }
        total += ret;
    }
    total / seeds as f64
}

fn main() {
    let mut best = (0.0, 0.0, 0.0, 0.0);
    for &c1 in &[0.0, 0.1, 0.3, 1.0, 3.0] {
        for &c2 in &[0.3, 1.0, 3.0, 10.0] {
            for &b in &[0.0] {
                let m = run(c1, c2, b, 20);
                if m > best.3 {
                    best = (c1, c2, b, m);
                }
                println!("c1={c1} c2={c2} b={b}: mean {m:.1}");
            }
        }
    }
    println!("best {:?}", best);
}
