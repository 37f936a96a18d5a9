//! Slotted simulation engine.
//!
//! Each time slot the engine samples a perturbation, deploys the paired
//! test allocations for half a slot each, turns the measured miss-rate
//! difference into an update vector, advances the step-size schedule,
//! and takes the projected step. Catalog churn and schedule
//! reinitialization run at slot boundaries. Every run is a pure
//! function of `(config, seed)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocation::{
    compute_update, make_test_allocations, project_simplex, sample_perturbation, sdcp_step,
    IntegerAllocation, UpdateVector, VirtualAllocation, FEASIBILITY_TOL,
};
use crate::oracle::{error_metric, greedy_optimal, MissCurveSet};
use crate::schedule::{init_from_first_update, ScheduleConfig, ScheduleState};
use crate::workload::{
    advance_catalog, measure_miss_counts, rebalance_rates, zipf_popularity, CpWorkload,
    OnOffModel, SlotMeasurement,
};
use crate::{Error, Result};

/// Starting point for the virtual allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialAllocation {
    /// `K'/P` slots per provider.
    Uniform,
    /// Arbitrary starting vector, projected onto the feasible simplex.
    Explicit(Vec<f64>),
}

/// Full description of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Number of content providers sharing the cache.
    pub providers: usize,
    /// Cache size `K` in slots.
    pub cache_slots: u64,
    /// Slot duration `T` in seconds; each test allocation runs `T/2`.
    pub slot_secs: f64,
    /// Total simulated time; partial trailing slots are dropped.
    pub horizon_secs: f64,
    /// Request share per provider, summing to 1.
    pub cp_shares: Vec<f64>,
    /// Aggregate request rate in requests per second.
    pub total_rate: f64,
    /// Total catalog size, split evenly into per-provider sub-catalogs.
    pub catalog_size: u64,
    /// Zipf exponent of each sub-catalog.
    pub zipf_alpha: f64,
    pub schedule: ScheduleConfig,
    /// ON/OFF churn model; `None` keeps the catalog stationary.
    pub nonstationary: Option<OnOffModel>,
    pub seed: u64,
    pub replications: usize,
    pub initial_allocation: InitialAllocation,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.providers == 0 {
            return Err(Error::invalid("providers: must be at least 1"));
        }
        if self.cp_shares.len() != self.providers {
            return Err(Error::invalid(format!(
                "cp_shares: expected {} entries, got {}",
                self.providers,
                self.cp_shares.len()
            )));
        }
        if self.cp_shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("cp_shares: entries must be finite and nonnegative"));
        }
        let share_sum: f64 = self.cp_shares.iter().sum();
        if (share_sum - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::invalid(format!(
                "cp_shares: sum to {share_sum}, expected 1"
            )));
        }
        if !self.total_rate.is_finite() || self.total_rate < 0.0 {
            return Err(Error::invalid("total_rate: must be finite and nonnegative"));
        }
        if !self.slot_secs.is_finite() || self.slot_secs <= 0.0 {
            return Err(Error::invalid("slot_secs: must be positive"));
        }
        if !self.horizon_secs.is_finite() || self.horizon_secs < self.slot_secs {
            return Err(Error::invalid("horizon_secs: must cover at least one slot"));
        }
        if self.catalog_size < self.providers as u64 {
            return Err(Error::invalid(
                "catalog_size: need at least one object per provider",
            ));
        }
        if !self.zipf_alpha.is_finite() || self.zipf_alpha < 0.0 {
            return Err(Error::invalid("zipf_alpha: must be nonnegative"));
        }
        let even_p = self.providers + self.providers % 2;
        if (self.cache_slots as f64) < even_p as f64 / 2.0 {
            return Err(Error::invalid(
                "cache_slots: must be at least P/2 so the reduced budget is nonnegative",
            ));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications: must be at least 1"));
        }
        self.schedule.validate()?;
        if let Some(model) = &self.nonstationary {
            model.validate()?;
        }
        if let InitialAllocation::Explicit(v) = &self.initial_allocation {
            if v.len() != self.providers {
                return Err(Error::invalid(format!(
                    "initial_allocation: expected {} entries, got {}",
                    self.providers,
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("initial_allocation: entries must be finite"));
            }
        }
        Ok(())
    }

    /// Run configuration with an even provider count, adding one
    /// zero-rate provider when needed, plus the real provider count.
    fn effective(&self) -> (ExperimentConfig, usize) {
        let real = self.providers;
        if self.providers % 2 == 0 {
            return (self.clone(), real);
        }
        let mut eff = self.clone();
        eff.providers += 1;
        eff.cp_shares.push(0.0);
        if let InitialAllocation::Explicit(v) = &mut eff.initial_allocation {
            v.push(0.0);
        }
        (eff, real)
    }

    /// Reduced slot budget `K' = K - P/2` after provider augmentation.
    pub fn reduced_budget(&self) -> f64 {
        let even_p = self.providers + self.providers % 2;
        self.cache_slots as f64 - even_p as f64 / 2.0
    }
}

/// Per-iteration log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub k: u64,
    pub sim_time_s: f64,
    /// Virtual allocation after this iteration's step (the deployed
    /// baseline allocation for fixed-allocation runs).
    pub theta: Vec<f64>,
    pub theta_plus: IntegerAllocation,
    pub theta_minus: IntegerAllocation,
    pub y_plus: Vec<f64>,
    pub y_minus: Vec<f64>,
    pub g_hat: UpdateVector,
    pub a_k: f64,
    pub miss_ratio: f64,
    /// Normalized infinity-norm distance to the current optimum.
    pub error: f64,
    pub requests: u64,
    pub misses: u64,
}

/// Whole-run averages.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    /// Pooled miss ratio: total misses over total requests.
    pub miss_ratio: f64,
    pub mean_error: f64,
    /// Componentwise average of the allocation over all slots.
    pub avg_allocation: Vec<f64>,
    pub total_requests: u64,
    pub total_misses: u64,
}

/// Ordered per-slot records plus summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<SlotRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    fn from_records(records: Vec<SlotRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("trace must contain at least one slot"));
        }
        let n = records.len() as f64;
        let p = records[0].theta.len();
        let mut avg = vec![0.0; p];
        let mut requests = 0u64;
        let mut misses = 0u64;
        let mut error_sum = 0.0;
        for r in &records {
            for (a, t) in avg.iter_mut().zip(&r.theta) {
                *a += t;
            }
            requests += r.requests;
            misses += r.misses;
            error_sum += r.error;
        }
        for a in avg.iter_mut() {
            *a /= n;
        }
        let miss_ratio = if requests == 0 {
            0.0
        } else {
            misses as f64 / requests as f64
        };
        Ok(Self {
            summary: TraceSummary {
                miss_ratio,
                mean_error: error_sum / n,
                avg_allocation: avg,
                total_requests: requests,
                total_misses: misses,
            },
            records,
        })
    }
}

fn build_stationary_workloads(eff: &ExperimentConfig, real: usize) -> Result<Vec<CpWorkload>> {
    let base = eff.catalog_size / real as u64;
    let remainder = (eff.catalog_size % real as u64) as usize;
    let mut workloads = Vec::with_capacity(eff.providers);
    for (i, share) in eff.cp_shares.iter().enumerate() {
        // an appended zero-rate provider gets a single inert object
        // rather than a share of the real catalog
        let n = if i < real {
            base + u64::from(i < remainder)
        } else {
            1
        };
        let popularity = zipf_popularity(n as usize, eff.zipf_alpha)?;
        workloads.push(CpWorkload::new(share * eff.total_rate, popularity)?);
    }
    Ok(workloads)
}

fn build_workloads(
    eff: &ExperimentConfig,
    real: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CpWorkload>> {
    let mut workloads = build_stationary_workloads(eff, real)?;
    if let Some(model) = &eff.nonstationary {
        let p_on = model.stationary_on_fraction();
        for w in workloads.iter_mut() {
            w.randomize_active_mask(p_on, rng);
        }
        rebalance_rates(model.target_total_rate, &mut workloads);
    }
    Ok(workloads)
}

fn initial_theta(eff: &ExperimentConfig, k_prime: f64) -> Result<VirtualAllocation> {
    match &eff.initial_allocation {
        InitialAllocation::Uniform => VirtualAllocation::uniform(eff.providers, k_prime),
        InitialAllocation::Explicit(v) => project_simplex(v, k_prime),
    }
}

/// Tabulated miss curves for the stationary catalog of `cfg`, after
/// provider augmentation. This is the reference used to compute the
/// fixed optimal baseline allocation.
pub fn stationary_curves(cfg: &ExperimentConfig) -> Result<MissCurveSet> {
    cfg.validate()?;
    let (eff, real) = cfg.effective();
    let workloads = build_stationary_workloads(&eff, real)?;
    MissCurveSet::from_workloads(&workloads, eff.cache_slots)
}

fn miss_ratio_of(plus: &SlotMeasurement, minus: &SlotMeasurement) -> (f64, u64, u64) {
    let requests = plus.total_requests() + minus.total_requests();
    let misses = plus.total_misses() + minus.total_misses();
    let ratio = if requests == 0 {
        0.0
    } else {
        misses as f64 / requests as f64
    };
    (ratio, requests, misses)
}

/// Runs the full partitioning loop for `floor(horizon/T)` slots.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Trace> {
    cfg.validate()?;
    let (eff, real) = cfg.effective();
    let p = eff.providers;
    let k_slots = eff.cache_slots;
    let k_prime = k_slots as f64 - p as f64 / 2.0;
    let half = eff.slot_secs / 2.0;
    let n_slots = (eff.horizon_secs / eff.slot_secs).floor() as u64;

    let mut rng = ChaCha8Rng::seed_from_u64(eff.seed);
    let mut workloads = build_workloads(&eff, real, &mut rng)?;
    let mut theta = initial_theta(&eff, k_prime)?;
    let mut curves = MissCurveSet::from_workloads(&workloads, k_slots)?;
    let mut theta_opt = greedy_optimal(&curves, k_slots)?;
    let mut schedule: Option<ScheduleState> = None;
    let mut records = Vec::with_capacity(n_slots as usize);

    for k in 1..=n_slots {
        let d = sample_perturbation(p, &mut rng)?;
        let (t_plus, t_minus) = make_test_allocations(&theta, &d)?;
        assert!(t_plus.total() <= k_slots, "plus allocation exceeds cache");
        assert!(t_minus.total() <= k_slots, "minus allocation exceeds cache");

        let m_plus = measure_miss_counts(&workloads, &t_plus, half, &mut rng)?;
        let m_minus = measure_miss_counts(&workloads, &t_minus, half, &mut rng)?;
        let y_plus = m_plus.rates(half);
        let y_minus = m_minus.rates(half);
        let delta: Vec<f64> = y_plus
            .iter()
            .zip(&y_minus)
            .map(|(a, b)| a - b)
            .collect();
        let g = compute_update(&delta, &d)?;
        assert!(
            g.components().iter().sum::<f64>().abs() <= FEASIBILITY_TOL,
            "update vector lost its zero sum"
        );

        let (miss_ratio, requests, misses) = miss_ratio_of(&m_plus, &m_minus);
        let state = match schedule.take() {
            Some(s) => s,
            None => init_from_first_update(&eff.schedule, &g, k_prime, p),
        };
        let (a_k, state) = state.next_step(&eff.schedule, miss_ratio)?;
        theta = sdcp_step(&theta, &g, a_k)?;
        assert!(
            (theta.values().iter().sum::<f64>() - k_prime).abs() <= FEASIBILITY_TOL,
            "virtual allocation drifted off the budget"
        );

        let sim_time = k as f64 * eff.slot_secs;
        schedule = Some(state.maybe_reinitialize(&eff.schedule, sim_time, &g, k_prime, p));

        if let Some(model) = &eff.nonstationary {
            advance_catalog(model, &mut workloads, eff.slot_secs, &mut rng);
            curves = MissCurveSet::from_workloads(&workloads, k_slots)?;
            theta_opt = greedy_optimal(&curves, k_slots)?;
        }

        let error = error_metric(theta.values(), &theta_opt, k_slots);
        records.push(SlotRecord {
            k,
            sim_time_s: sim_time,
            theta: theta.values().to_vec(),
            theta_plus: t_plus,
            theta_minus: t_minus,
            y_plus,
            y_minus,
            g_hat: g,
            a_k,
            miss_ratio,
            error,
            requests,
            misses,
        });
    }
    Trace::from_records(records)
}

/// Runs the same measurement loop with a fixed allocation deployed in
/// both half-slots; no algorithm state is kept.
pub fn run_baseline(cfg: &ExperimentConfig, alloc: &IntegerAllocation) -> Result<Trace> {
    cfg.validate()?;
    let (eff, real) = cfg.effective();
    let p = eff.providers;
    let k_slots = eff.cache_slots;
    let half = eff.slot_secs / 2.0;
    let n_slots = (eff.horizon_secs / eff.slot_secs).floor() as u64;

    let mut fixed = alloc.slots().to_vec();
    if fixed.len() == real && real != p {
        fixed.push(0);
    }
    if fixed.len() != p {
        return Err(Error::invalid(format!(
            "baseline allocation has {} entries, expected {}",
            alloc.len(),
            p
        )));
    }
    let fixed = IntegerAllocation::new(fixed);
    if fixed.total() > k_slots {
        return Err(Error::invalid(format!(
            "baseline allocation uses {} slots, cache has {k_slots}",
            fixed.total()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(eff.seed);
    let mut workloads = build_workloads(&eff, real, &mut rng)?;
    let mut curves = MissCurveSet::from_workloads(&workloads, k_slots)?;
    let mut theta_opt = greedy_optimal(&curves, k_slots)?;
    let theta = fixed.to_f64();
    let mut records = Vec::with_capacity(n_slots as usize);

    for k in 1..=n_slots {
        let m_plus = measure_miss_counts(&workloads, &fixed, half, &mut rng)?;
        let m_minus = measure_miss_counts(&workloads, &fixed, half, &mut rng)?;
        let y_plus = m_plus.rates(half);
        let y_minus = m_minus.rates(half);
        let (miss_ratio, requests, misses) = miss_ratio_of(&m_plus, &m_minus);
        let sim_time = k as f64 * eff.slot_secs;

        if let Some(model) = &eff.nonstationary {
            advance_catalog(model, &mut workloads, eff.slot_secs, &mut rng);
            curves = MissCurveSet::from_workloads(&workloads, k_slots)?;
            theta_opt = greedy_optimal(&curves, k_slots)?;
        }

        let error = error_metric(&theta, &theta_opt, k_slots);
        records.push(SlotRecord {
            k,
            sim_time_s: sim_time,
            theta: theta.clone(),
            theta_plus: fixed.clone(),
            theta_minus: fixed.clone(),
            y_plus,
            y_minus,
            g_hat: UpdateVector::zero(p),
            a_k: 0.0,
            miss_ratio,
            error,
            requests,
            misses,
        });
    }
    Trace::from_records(records)
}

/// Aggregate statistics over replications: mean pooled miss ratio with
/// a Student-t 95% confidence interval, and the mean allocation error.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean_miss_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_error: f64,
}

fn aggregate(traces: &[Trace]) -> Aggregate {
    let n = traces.len();
    let ratios: Vec<f64> = traces.iter().map(|t| t.summary.miss_ratio).collect();
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let mean_error =
        traces.iter().map(|t| t.summary.mean_error).sum::<f64>() / n as f64;
    // identical outcomes (forced identical seeds) give an exactly
    // degenerate interval
    if n < 2 || ratios.windows(2).all(|w| w[0] == w[1]) {
        let point = ratios[0];
        return Aggregate {
            mean_miss_ratio: point,
            ci_low: point,
            ci_high: point,
            mean_error,
        };
    }
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = student_t_975(n - 1) * (var / n as f64).sqrt();
    Aggregate {
        mean_miss_ratio: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        mean_error,
    }
}

/// Two-sided 97.5% Student-t quantile by degrees of freedom.
fn student_t_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[df - 1],
        31..=40 => 2.021,
        41..=60 => 2.000,
        61..=120 => 1.980,
        _ => 1.960,
    }
}

/// Runs `cfg.replications` independent runs with seeds `seed + i`.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<(Vec<Trace>, Aggregate)> {
    cfg.validate()?;
    let traces: Result<Vec<Trace>> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i as u64);
            c.replications = 1;
            run_experiment(&c)
        })
        .collect();
    let traces = traces?;
    let agg = aggregate(&traces);
    Ok((traces, agg))
}

/// Replicated fixed-allocation runs, aggregated like
/// [`run_replications`].
pub fn run_baseline_replications(
    cfg: &ExperimentConfig,
    alloc: &IntegerAllocation,
) -> Result<(Vec<Trace>, Aggregate)> {
    cfg.validate()?;
    let traces: Result<Vec<Trace>> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i as u64);
            c.replications = 1;
            run_baseline(&c, alloc)
        })
        .collect();
    let traces = traces?;
    let agg = aggregate(&traces);
    Ok((traces, agg))
}
