//! Trains on the default domain and reports evaluation records as JSON lines.
//!
//! Usage: `cargo run --release --example smoke_train -- [steps] [seed]`

use std::time::Instant;

use freemesh_core::domains::{convex_probe_set, DomainSpec};
use freemesh_core::sac::{evaluate, quartile_means, train, SacAgent, SacConfig, TrainEvent};
use freemesh_core::EnvConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse().expect("steps")).unwrap_or(150_000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);
    let env_cfg = EnvConfig::default();
    let sac_cfg = SacConfig { total_steps: steps, seed, checkpoint_every: 0, ..SacConfig::default() };
    let domain = DomainSpec::training_default().generate().expect("training domain");
    let mut agent = SacAgent::new(env_cfg.observation_len(), &sac_cfg).expect("agent");
    let start = Instant::now();
    let log = train(&env_cfg, &[domain], &[], &mut agent, &sac_cfg, |ev| {
        if let TrainEvent::Eval(r) = ev {
            println!("{} elapsed={:.0}s", serde_json::to_string(r).unwrap(), start.elapsed().as_secs_f64());
        }
        Ok(())
    })
    .expect("training");
    if let Some((first, last)) = quartile_means(&log.records) {
        println!("first-quartile={first:.3} last-quartile={last:.3} episodes={}", log.episodes);
    }
    let probe = evaluate(&agent, &env_cfg, &convex_probe_set(), 5).expect("eval");
    println!("convex-20 completion={:?} returns={:?}", probe.completed, probe.returns);
}
