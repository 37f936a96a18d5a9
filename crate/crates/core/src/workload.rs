//! Synthetic provider demand: Zipf sub-catalogs, analytic miss-intensity
//! curves for an ideal top-popularity placement, Poisson request
//! arrivals with binomial miss sampling, and exponential ON/OFF catalog
//! churn with rate rebalancing.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::allocation::IntegerAllocation;
use crate::{Error, Result};

/// Content popularity over one provider's sub-catalog: request
/// probabilities sorted in non-increasing order and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Popularity {
    probs: Vec<f64>,
    prefix: Vec<f64>,
    alpha: f64,
}

impl Popularity {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_objects(&self) -> usize {
        self.probs.len()
    }

    /// Probability mass of the `count` most popular objects.
    pub fn top_mass(&self, count: usize) -> f64 {
        self.prefix[count.min(self.probs.len())]
    }
}

/// Zipf popularity with exponent `alpha`: object `i` (0-based) has
/// probability proportional to `(i+1)^-alpha`.
pub fn zipf_popularity(n: usize, alpha: f64) -> Result<Popularity> {
    if n == 0 {
        return Err(Error::invalid("catalog size must be at least 1"));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::invalid(format!(
            "zipf exponent must be nonnegative, got {alpha}"
        )));
    }
    let mut probs: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
    let norm: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= norm;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for p in &probs {
        acc += p;
        prefix.push(acc);
    }
    Ok(Popularity {
        probs,
        prefix,
        alpha,
    })
}

/// One provider's demand: request intensity, sub-catalog popularity,
/// and an optional ON/OFF activity mask for nonstationary runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CpWorkload {
    rate: f64,
    base_rate: f64,
    popularity: Popularity,
    active_mask: Option<Vec<bool>>,
    active_mass: f64,
    active_count: usize,
}

impl CpWorkload {
    pub fn new(rate: f64, popularity: Popularity) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::invalid(format!(
                "request rate must be finite and nonnegative, got {rate}"
            )));
        }
        let n = popularity.n_objects();
        Ok(Self {
            rate,
            base_rate: rate,
            popularity,
            active_mask: None,
            active_mass: 1.0,
            active_count: n,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Stationary rate before any churn rebalancing.
    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn popularity(&self) -> &Popularity {
        &self.popularity
    }

    pub fn active_mask(&self) -> Option<&[bool]> {
        self.active_mask.as_deref()
    }

    /// Draws an independent ON/OFF state per object with probability
    /// `p_on` and switches the workload into nonstationary mode.
    pub fn randomize_active_mask<R: Rng + ?Sized>(&mut self, p_on: f64, rng: &mut R) {
        let n = self.popularity.n_objects();
        let mask: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < p_on).collect();
        self.set_active_mask(mask);
    }

    pub fn set_active_mask(&mut self, mask: Vec<bool>) {
        assert_eq!(mask.len(), self.popularity.n_objects());
        let mut mass = 0.0;
        let mut count = 0usize;
        for (p, on) in self.popularity.probs().iter().zip(&mask) {
            if *on {
                mass += p;
                count += 1;
            }
        }
        self.active_mask = Some(mask);
        self.active_mass = mass;
        self.active_count = count;
    }

    /// Per-request miss probability with `slots` cache slots holding the
    /// most popular (active) objects. In nonstationary mode popularity is
    /// renormalized over the active set.
    pub fn miss_probability(&self, slots: u64) -> f64 {
        match &self.active_mask {
            None => {
                let s = (slots as usize).min(self.popularity.n_objects());
                (1.0 - self.popularity.top_mass(s)).max(0.0)
            }
            Some(mask) => {
                if self.active_mass <= 0.0 {
                    return 0.0;
                }
                if slots as usize >= self.active_count {
                    return 0.0;
                }
                let mut cached = 0.0;
                let mut need = slots;
                if need > 0 {
                    for (p, on) in self.popularity.probs().iter().zip(mask) {
                        if *on {
                            cached += p;
                            need -= 1;
                            if need == 0 {
                                break;
                            }
                        }
                    }
                }
                (1.0 - cached / self.active_mass).clamp(0.0, 1.0)
            }
        }
    }
}

/// Expected miss intensity `L_p(slots)` in misses per second. Slot
/// counts beyond the catalog clamp to a fully cached catalog (zero
/// misses).
pub fn miss_intensity(w: &CpWorkload, slots: u64) -> f64 {
    w.rate() * w.miss_probability(slots)
}

/// Tabulates `L_p` for every slot count in `0..=max_slots` in one pass.
pub fn tabulate_miss_curve(w: &CpWorkload, max_slots: u64) -> Vec<f64> {
    let len = max_slots as usize + 1;
    let mut curve = vec![0.0; len];
    match w.active_mask() {
        None => {
            for (s, value) in curve.iter_mut().enumerate() {
                *value = (w.rate() * (1.0 - w.popularity().top_mass(s))).max(0.0);
            }
        }
        Some(mask) => {
            if w.active_mass <= 0.0 {
                return curve;
            }
            curve[0] = w.rate();
            let mut cached = 0.0;
            let mut filled = 0usize;
            for (p, on) in w.popularity().probs().iter().zip(mask) {
                if *on {
                    cached += p;
                    filled += 1;
                    if filled < len {
                        curve[filled] =
                            (w.rate() * (1.0 - cached / w.active_mass)).max(0.0);
                    }
                    if filled >= max_slots as usize {
                        break;
                    }
                }
            }
            // allocations beyond the active set cache everything
            for value in curve.iter_mut().skip(filled + 1) {
                *value = 0.0;
            }
        }
    }
    curve
}

/// Request and miss counts observed over one measurement interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMeasurement {
    pub requests: Vec<u64>,
    pub misses: Vec<u64>,
}

impl SlotMeasurement {
    pub fn rates(&self, duration_secs: f64) -> Vec<f64> {
        self.misses
            .iter()
            .map(|m| *m as f64 / duration_secs)
            .collect()
    }

    pub fn total_requests(&self) -> u64 {
        self.requests.iter().sum()
    }

    pub fn total_misses(&self) -> u64 {
        self.misses.iter().sum()
    }
}

/// Measures each provider under `alloc` for `duration_secs`: requests
/// are Poisson with mean `λ_p·duration` and misses binomial with the
/// provider's per-request miss probability, so the expected rate equals
/// [`miss_intensity`].
pub fn measure_miss_counts<R: Rng + ?Sized>(
    workloads: &[CpWorkload],
    alloc: &IntegerAllocation,
    duration_secs: f64,
    rng: &mut R,
) -> Result<SlotMeasurement> {
    if !duration_secs.is_finite() || duration_secs <= 0.0 {
        return Err(Error::invalid(format!(
            "measurement duration must be positive, got {duration_secs}"
        )));
    }
    if workloads.len() != alloc.len() {
        return Err(Error::invalid(format!(
            "{} workloads but allocation has {} entries",
            workloads.len(),
            alloc.len()
        )));
    }
    let mut requests = Vec::with_capacity(workloads.len());
    let mut misses = Vec::with_capacity(workloads.len());
    for (w, slots) in workloads.iter().zip(alloc.slots()) {
        let mean = w.rate() * duration_secs;
        if mean <= 0.0 {
            requests.push(0);
            misses.push(0);
            continue;
        }
        let n = Poisson::new(mean)
            .map_err(|_| Error::invalid(format!("invalid arrival mean {mean}")))?
            .sample(rng) as u64;
        let q = w.miss_probability(*slots);
        let m = if n == 0 || q <= 0.0 {
            0
        } else if q >= 1.0 {
            n
        } else {
            Binomial::new(n, q)
                .map_err(|_| Error::invalid(format!("invalid miss probability {q}")))?
                .sample(rng)
        };
        requests.push(n);
        misses.push(m);
    }
    Ok(SlotMeasurement { requests, misses })
}

/// Measured miss rates in misses per second, one entry per provider.
pub fn measure_miss_rates<R: Rng + ?Sized>(
    workloads: &[CpWorkload],
    alloc: &IntegerAllocation,
    duration_secs: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    measure_miss_counts(workloads, alloc, duration_secs, rng).map(|m| m.rates(duration_secs))
}

/// Exponential ON/OFF churn model for nonstationary catalogs.
#[derive(Debug, Clone, PartialEq)]
pub struct OnOffModel {
    pub mean_on_secs: f64,
    pub mean_off_secs: f64,
    /// Aggregate request rate maintained across the active objects.
    pub target_total_rate: f64,
}

impl OnOffModel {
    pub fn new(mean_on_secs: f64, mean_off_secs: f64, target_total_rate: f64) -> Result<Self> {
        let m = Self {
            mean_on_secs,
            mean_off_secs,
            target_total_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean_on_secs.is_finite() || self.mean_on_secs <= 0.0 {
            return Err(Error::invalid("mean ON duration must be positive"));
        }
        if !self.mean_off_secs.is_finite() || self.mean_off_secs <= 0.0 {
            return Err(Error::invalid("mean OFF duration must be positive"));
        }
        if !self.target_total_rate.is_finite() || self.target_total_rate < 0.0 {
            return Err(Error::invalid("target rate must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Long-run fraction of time an object spends ON.
    pub fn stationary_on_fraction(&self) -> f64 {
        self.mean_on_secs / (self.mean_on_secs + self.mean_off_secs)
    }

    /// Exact two-state transition probabilities over an interval `dt`,
    /// marginalizing over any number of exponential holding times:
    /// `(P(ON→OFF), P(OFF→ON))`.
    fn transition_probs(&self, dt: f64) -> (f64, f64) {
        let mu = 1.0 / self.mean_on_secs;
        let rho = 1.0 / self.mean_off_secs;
        let total = mu + rho;
        let mixing = 1.0 - (-total * dt).exp();
        (mu / total * mixing, rho / total * mixing)
    }
}

/// Advances every object's ON/OFF state by `dt` seconds and rescales
/// the per-provider rates so the aggregate request rate over active
/// objects stays at the model's target. Providers without an activity
/// mask are left untouched.
pub fn advance_catalog<R: Rng + ?Sized>(
    model: &OnOffModel,
    workloads: &mut [CpWorkload],
    dt_secs: f64,
    rng: &mut R,
) {
    if dt_secs <= 0.0 {
        return;
    }
    let (p_to_off, p_to_on) = model.transition_probs(dt_secs);
    let mut changed = false;
    for w in workloads.iter_mut() {
        let Some(mask) = w.active_mask.as_mut() else {
            continue;
        };
        let n_on = w.active_count as u64;
        let n_off = (mask.len() - w.active_count) as u64;
        let offs = sample_binomial(n_on, p_to_off, rng);
        let ons = sample_binomial(n_off, p_to_on, rng);
        if offs == 0 && ons == 0 {
            continue;
        }
        changed = true;
        // Pick the flip victims uniformly within each state class; the
        // per-object transitions are i.i.d. within a class, so a
        // binomial count plus a uniform subset is distribution-exact.
        if offs > 0 {
            flip_uniform(mask, true, offs as usize, rng);
        }
        if ons > 0 {
            flip_uniform(mask, false, ons as usize, rng);
        }
        let mut mass = 0.0;
        let mut count = 0usize;
        for (p, on) in w.popularity.probs().iter().zip(mask.iter()) {
            if *on {
                mass += p;
                count += 1;
            }
        }
        w.active_mass = mass;
        w.active_count = count;
    }
    if changed {
        rebalance_rates(model.target_total_rate, workloads);
    }
}

/// Rescales rates proportionally to each provider's stationary rate
/// weighted by its active popularity mass, so that the rates sum to
/// `target`.
pub fn rebalance_rates(target: f64, workloads: &mut [CpWorkload]) {
    let total: f64 = workloads
        .iter()
        .map(|w| w.base_rate * w.active_mass)
        .sum();
    if total <= 0.0 {
        for w in workloads.iter_mut() {
            w.rate = 0.0;
        }
        return;
    }
    for w in workloads.iter_mut() {
        w.rate = target * w.base_rate * w.active_mass / total;
    }
}

fn sample_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Flips `count` objects currently in `state`, chosen uniformly.
fn flip_uniform<R: Rng + ?Sized>(mask: &mut [bool], state: bool, count: usize, rng: &mut R) {
    let members: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, on)| (*on == state).then_some(i))
        .collect();
    for pos in rand::seq::index::sample(rng, members.len(), count.min(members.len())) {
        mask[members[pos]] = !state;
    }
}
