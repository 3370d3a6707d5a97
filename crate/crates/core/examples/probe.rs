use hybrid_precoding::bcd::{evaluate_under_ps_noise, run, Baseline, BcdOptions};
use hybrid_precoding::config::{dbm_to_watts, SystemConfig};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let sigma = 30f64.to_radians();
    let seeds = 6u64;
    let draws = 100;

    // --- robustness: robust-trained vs plain-trained under matched draws
    let mut wins = 0;
    let mut diff_sum = 0.0;
    for seed in 0..seeds {
        let cfg = SystemConfig { phase_error_std: sigma, ..SystemConfig::desk_scale() };
        let plain = run(&cfg, seed, &BcdOptions::default()).unwrap();
        let robust = run(&cfg, seed, &BcdOptions { robust: true, ..Default::default() }).unwrap();
        let eval_seed = 777 + seed;
        let r_plain =
            evaluate_under_ps_noise(&plain.state, &plain.channels, sigma, draws, eval_seed).unwrap();
        let r_robust =
            evaluate_under_ps_noise(&robust.state, &robust.channels, sigma, draws, eval_seed)
                .unwrap();
        println!("seed {seed}: plain {r_plain:.3} robust {r_robust:.3}");
        if r_robust > r_plain {
            wins += 1;
        }
        diff_sum += r_robust - r_plain;
    }
    println!("robust wins {wins}/{seeds}, mean diff {:.3}", diff_sum / seeds as f64);

    // --- monotone degradation in sigma
    for seed in 0..3u64 {
        let cfg = SystemConfig::desk_scale();
        let out = run(&cfg, seed, &BcdOptions::default()).unwrap();
        let mut prev = f64::INFINITY;
        print!("seed {seed} rates:");
        for deg in [0.0, 10.0, 20.0, 30.0] {
            let r = evaluate_under_ps_noise(
                &out.state,
                &out.channels,
                (deg as f64).to_radians(),
                draws,
                555,
            )
            .unwrap();
            print!(" {r:.3}");
            assert!(r <= prev + 1e-9, "nonmonotone at {deg}");
            prev = r;
        }
        println!();
    }

    // --- baseline ordering at 3 power levels
    for p_dbm in [-5.0, 5.0, 15.0] {
        let mut sums = [0.0; 3];
        for seed in 0..seeds {
            let cfg = SystemConfig { power_budget_w: dbm_to_watts(p_dbm), ..SystemConfig::desk_scale() };
            for (i, baseline) in
                [Baseline::None, Baseline::MmseIdentityWeights, Baseline::RandomPs].iter().enumerate()
            {
                let out = run(&cfg, seed, &BcdOptions { baseline: *baseline, ..Default::default() })
                    .unwrap();
                sums[i] += out.trace.final_rate();
            }
        }
        println!(
            "P {p_dbm:+} dBm: proposed {:.2}, mmse {:.2}, random_ps {:.2}",
            sums[0] / seeds as f64,
            sums[1] / seeds as f64,
            sums[2] / seeds as f64
        );
    }
    println!("total {:.1?}", t0.elapsed());
}
