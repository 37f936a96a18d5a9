// temporary probe: churn with a compressed time axis
use sdcp_core::*;
use rayon::prelude::*;

// compression c: 1 nominal day lasts 86400/c seconds of simulated time;
// the schedule's 6-min/1-h phases compress identically.
fn churn_cfg(seed: u64, tau_days: Option<f64>, c: f64, t: f64) -> ExperimentConfig {
    let day = 86_400.0 / c;
    let bootstrap = ((360.0 / c / t).floor() as u64).max(1);
    let adaptive = ((3600.0 / c / t).floor() as u64).max(bootstrap + 1);
    let schedule = ScheduleConfig {
        kind: ScheduleKind::Conditional,
        nu: 0.01,
        bootstrap_end: bootstrap,
        adaptive_end: adaptive,
        b_ratio: 0.1,
        reinit_period: tau_days.map(|d| d * day),
    };
    ExperimentConfig {
        providers: 4,
        cache_slots: 100,
        slot_secs: t,
        horizon_secs: 3.0 * day,
        cp_shares: vec![0.13, 0.75, 0.02, 0.10],
        total_rate: 100.0,
        catalog_size: 35_000,
        zipf_alpha: 0.8,
        schedule,
        nonstationary: Some(OnOffModel::new(day, 9.0 * day, 100.0).unwrap()),
        seed,
        replications: 1,
        initial_allocation: InitialAllocation::Uniform,
    }
}

fn final_day_ratio(tr: &Trace, day: f64, horizon: f64) -> f64 {
    let (mut fmis, mut freq) = (0u64, 0u64);
    for r in &tr.records {
        if r.sim_time_s > horizon - day {
            fmis += r.misses;
            freq += r.requests;
        }
    }
    fmis as f64 / freq as f64
}

fn main() {
    for (c, t) in [(10.0, 10.0), (24.0, 10.0), (10.0, 1.0)] {
        let day = 86_400.0 / c;
        for base in [501u64, 9000] {
            let results: Vec<(f64, f64)> = (0..10u64).into_par_iter().map(|i| {
                let t3 = run_experiment(&churn_cfg(base + i, Some(1.0 / 8.0), c, t)).unwrap();
                let ti = run_experiment(&churn_cfg(base + i, None, c, t)).unwrap();
                (final_day_ratio(&t3, day, 3.0 * day), final_day_ratio(&ti, day, 3.0 * day))
            }).collect();
            let m3: f64 = results.iter().map(|r| r.0).sum::<f64>() / 10.0;
            let mi: f64 = results.iter().map(|r| r.1).sum::<f64>() / 10.0;
            let wins = results.iter().filter(|r| r.0 <= r.1).count();
            println!("c={c} T={t} base {base}: 3h {m3:.5} inf {mi:.5} pass {} wins {wins}/10", m3 <= mi);
        }
    }
}
