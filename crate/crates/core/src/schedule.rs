//! Step-size sequences for the partitioning loop.
//!
//! Three schedules are supported: `Reciprocal` (`a/k`), `Moderate`
//! (slow multiplicative decay), and `Conditional`, a three-phase
//! sequence with a constant bootstrap, a linearly decreasing adaptive
//! phase that halves the step whenever the current miss ratio beats the
//! 5th percentile of history, and a moderate tail. All schedules scale
//! their initial step from the first measured update vector, and can be
//! periodically reinitialized to track nonstationary workloads.

use crate::allocation::UpdateVector;
use crate::{Error, Result};

/// Default exponent offset for the moderate decay factor.
pub const DEFAULT_NU: f64 = 0.01;
/// Default ratio between the final and initial adaptive-phase step.
pub const DEFAULT_B_RATIO: f64 = 0.1;
/// Wall-clock length of the bootstrap phase used to derive `k_bs`.
pub const BOOTSTRAP_WALL_SECS: f64 = 360.0;
/// Wall-clock length of the adaptive phase used to derive `M`.
pub const ADAPTIVE_WALL_SECS: f64 = 3600.0;

/// Which step-size sequence to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Reciprocal,
    Moderate,
    Conditional,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Reciprocal => "reciprocal",
            ScheduleKind::Moderate => "moderate",
            ScheduleKind::Conditional => "conditional",
        }
    }
}

/// Static schedule parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// Exponent offset `ν` of the moderate decay factor.
    pub nu: f64,
    /// Last bootstrap iteration `k_bs` (conditional schedule).
    pub bootstrap_end: u64,
    /// Last adaptive iteration `M`.
    pub adaptive_end: u64,
    /// Final/initial step ratio `b = a·b_ratio`.
    pub b_ratio: f64,
    /// Reinitialization period in seconds; `None` never reinitializes.
    pub reinit_period: Option<f64>,
}

impl ScheduleConfig {
    pub fn new(
        kind: ScheduleKind,
        nu: f64,
        bootstrap_end: u64,
        adaptive_end: u64,
        b_ratio: f64,
        reinit_period: Option<f64>,
    ) -> Result<Self> {
        let cfg = Self {
            kind,
            nu,
            bootstrap_end,
            adaptive_end,
            b_ratio,
            reinit_period,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Derives the phase lengths from the slot duration: bootstrap runs
    /// for 6 minutes of wall clock and the adaptive phase for 1 hour,
    /// both rounded down to whole iterations (at least one each).
    pub fn with_phases_from_slot(kind: ScheduleKind, slot_secs: f64) -> Result<Self> {
        if !slot_secs.is_finite() || slot_secs <= 0.0 {
            return Err(Error::invalid(format!(
                "slot duration must be positive, got {slot_secs}"
            )));
        }
        let bootstrap = ((BOOTSTRAP_WALL_SECS / slot_secs).floor() as u64).max(1);
        let adaptive = ((ADAPTIVE_WALL_SECS / slot_secs).floor() as u64).max(bootstrap + 1);
        Self::new(kind, DEFAULT_NU, bootstrap, adaptive, DEFAULT_B_RATIO, None)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nu.is_finite() || self.nu <= 0.0 {
            return Err(Error::invalid(format!("nu must be positive, got {}", self.nu)));
        }
        if self.bootstrap_end == 0 {
            return Err(Error::invalid("bootstrap_end must be at least 1"));
        }
        if self.bootstrap_end >= self.adaptive_end {
            return Err(Error::invalid(format!(
                "bootstrap_end ({}) must be below adaptive_end ({})",
                self.bootstrap_end, self.adaptive_end
            )));
        }
        if !self.b_ratio.is_finite() || self.b_ratio <= 0.0 || self.b_ratio >= 1.0 {
            return Err(Error::invalid(format!(
                "b_ratio must lie in (0, 1), got {}",
                self.b_ratio
            )));
        }
        if let Some(tau) = self.reinit_period {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::invalid(format!(
                    "reinit_period must be positive, got {tau}"
                )));
            }
        }
        Ok(())
    }
}

/// Evolving schedule state: current step, iteration counter since the
/// last (re)initialization, and the miss-ratio history that drives the
/// conditional schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    a_current: f64,
    k: u64,
    a_init: f64,
    b: f64,
    miss_ratio_history: Vec<f64>,
    init_epoch: u64,
}

/// Builds the initial state from the first iteration's update vector.
///
/// Reciprocal and moderate scale the Euclidean norm of the first update
/// to `K'/P`, i.e. `a = (K'/P) / ‖ĝ⁽¹⁾‖₂`; the conditional schedule
/// uses the ℓ1 form `a = K' / ‖ĝ⁽¹⁾‖₁`. A zero first update falls back
/// to `a = 1`.
pub fn init_from_first_update(
    cfg: &ScheduleConfig,
    g1: &UpdateVector,
    k_prime: f64,
    p: usize,
) -> ScheduleState {
    let a_init = match cfg.kind {
        ScheduleKind::Reciprocal | ScheduleKind::Moderate => {
            let norm = g1.l2_norm();
            if norm > 0.0 {
                (k_prime / p as f64) / norm
            } else {
                1.0
            }
        }
        ScheduleKind::Conditional => {
            let norm = g1.l1_norm();
            if norm > 0.0 {
                k_prime / norm
            } else {
                1.0
            }
        }
    };
    let a_init = if a_init.is_finite() && a_init > 0.0 {
        a_init
    } else {
        1.0
    };
    ScheduleState {
        a_current: a_init,
        k: 1,
        a_init,
        b: a_init * cfg.b_ratio,
        miss_ratio_history: Vec::new(),
        init_epoch: 0,
    }
}

impl ScheduleState {
    pub fn a_current(&self) -> f64 {
        self.a_current
    }

    pub fn a_init(&self) -> f64 {
        self.a_init
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Iteration counter since the last (re)initialization, starting at 1.
    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn history(&self) -> &[f64] {
        &self.miss_ratio_history
    }

    /// Computes the step size for the current iteration, records the
    /// iteration's miss ratio, and advances the counter.
    pub fn next_step(mut self, cfg: &ScheduleConfig, miss_ratio: f64) -> Result<(f64, Self)> {
        if !miss_ratio.is_finite() || !(0.0..=1.0).contains(&miss_ratio) {
            return Err(Error::invalid(format!(
                "miss ratio must lie in [0, 1], got {miss_ratio}"
            )));
        }
        let k = self.k;
        let a_k = match cfg.kind {
            ScheduleKind::Reciprocal => self.a_init / k as f64,
            ScheduleKind::Moderate => self.a_current * moderate_factor(cfg.adaptive_end + k, cfg.nu),
            ScheduleKind::Conditional => {
                if k <= cfg.bootstrap_end {
                    self.a_init
                } else if k <= cfg.adaptive_end {
                    let a_prev = self.a_current;
                    let remaining = (cfg.adaptive_end - k + 1) as f64;
                    let linear = a_prev - (a_prev - self.b) / remaining;
                    if miss_ratio <= percentile_5th(&self.miss_ratio_history) {
                        (a_prev / 2.0).min(linear).max(self.b)
                    } else {
                        linear
                    }
                } else {
                    self.a_current * moderate_factor(k, cfg.nu)
                }
            }
        };
        self.miss_ratio_history.push(miss_ratio);
        self.k += 1;
        self.a_current = a_k;
        Ok((a_k, self))
    }

    /// Restarts the schedule from the current update vector once the
    /// simulation time crosses a fresh multiple of the reinitialization
    /// period; otherwise returns the state unchanged.
    pub fn maybe_reinitialize(
        self,
        cfg: &ScheduleConfig,
        sim_time_secs: f64,
        next_g: &UpdateVector,
        k_prime: f64,
        p: usize,
    ) -> Self {
        let Some(tau) = cfg.reinit_period else {
            return self;
        };
        let epoch = (sim_time_secs / tau).floor().max(0.0) as u64;
        if epoch > self.init_epoch {
            let mut fresh = init_from_first_update(cfg, next_g, k_prime, p);
            fresh.init_epoch = epoch;
            fresh
        } else {
            self
        }
    }
}

fn moderate_factor(k: u64, nu: f64) -> f64 {
    (1.0 - 1.0 / (1.0 + k as f64)).powf(0.5 + nu)
}

/// Nearest-rank 5th percentile: the `ceil(0.05·n)`-th smallest value.
fn percentile_5th(history: &[f64]) -> f64 {
    if history.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut sorted = history.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let rank = ((0.05 * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ScheduleKind) -> ScheduleConfig {
        ScheduleConfig::new(kind, DEFAULT_NU, 36, 360, DEFAULT_B_RATIO, None).unwrap()
    }

    // zero-sum first update with l2 norm 5 and l1 norm 7.07
    fn g_l2_5() -> UpdateVector {
        let a = 5.0 / 2.0f64.sqrt();
        UpdateVector::new(vec![a, -a]).unwrap()
    }

    // zero-sum first update with l1 norm 7
    fn g_l1_7() -> UpdateVector {
        UpdateVector::new(vec![3.5, -3.5]).unwrap()
    }

    #[test]
    fn init_examples() {
        // l2 norm 5 with K' = 98, P = 2 scales to (98/2)/5 = 9.8
        let s = init_from_first_update(&cfg(ScheduleKind::Reciprocal), &g_l2_5(), 98.0, 2);
        assert!((s.a_init() - 9.8).abs() < 1e-12);

        // l1 norm 7 with K' = 98 scales to 98/7 = 14
        let s = init_from_first_update(&cfg(ScheduleKind::Conditional), &g_l1_7(), 98.0, 2);
        assert!((s.a_init() - 14.0).abs() < 1e-12);

        let zero = UpdateVector::zero(2);
        let s = init_from_first_update(&cfg(ScheduleKind::Moderate), &zero, 98.0, 2);
        assert_eq!(s.a_init(), 1.0);
    }

    #[test]
    fn reciprocal_is_a_over_k() {
        let c = cfg(ScheduleKind::Reciprocal);
        let mut state = init_from_first_update(&c, &g_l2_5(), 98.0, 2);
        let a_init = state.a_init();
        assert!((a_init - 9.8).abs() < 1e-12);
        for k in 1..=50u64 {
            let (a, next) = state.next_step(&c, 0.5).unwrap();
            assert_eq!(a, a_init / k as f64);
            state = next;
        }
    }

    #[test]
    fn reciprocal_partial_sums_match_closed_forms() {
        // a/k sums diverge like a·H_k while the squares stay below a²·π²/6
        let a = 9.8f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let n = 10_000_000u64;
        for k in 1..=n {
            let ak = a / k as f64;
            sum += ak;
            sum_sq += ak * ak;
        }
        let harmonic = (n as f64).ln() + 0.577_215_664_901_532_9;
        assert!((sum - a * harmonic).abs() < 1e-3 * a);
        assert!(sum > 100.0);
        let basel = a * a * std::f64::consts::PI * std::f64::consts::PI / 6.0;
        assert!(sum_sq < basel);
        assert!(basel - sum_sq < a * a / n as f64 * 2.0);
    }

    #[test]
    fn conditional_bootstrap_keeps_initial_step() {
        let c = cfg(ScheduleKind::Conditional);
        let mut state = init_from_first_update(&c, &g_l1_7(), 98.0, 2);
        for _ in 1..=10u64 {
            let (a, next) = state.next_step(&c, 0.4).unwrap();
            assert_eq!(a, 14.0);
            state = next;
        }
        assert_eq!(state.iteration(), 11);
    }

    #[test]
    fn conditional_linear_branch_reaches_b_at_adaptive_end() {
        // a_prev = 10, b = 1.4, M = 360, k = 360: the linear decrease
        // lands exactly on b.
        let a_prev = 10.0f64;
        let b = 1.4;
        let linear = a_prev - (a_prev - b) / 1.0;
        assert!((linear - b).abs() < 1e-12);
    }

    #[test]
    fn conditional_halving_is_floored_at_b() {
        // a_prev = 2.0, b = 1.4, linear branch 1.9: halving to 1.0 is
        // clipped back up to b.
        let a_prev = 2.0f64;
        let b = 1.4;
        let linear = 1.9;
        let stepped = (a_prev / 2.0f64).min(linear).max(b);
        assert_eq!(stepped, 1.4);
    }

    #[test]
    fn conditional_phases_and_floor() {
        let c = ScheduleConfig::new(ScheduleKind::Conditional, DEFAULT_NU, 5, 9, 0.1, None).unwrap();
        let g = UpdateVector::new(vec![5.0, -5.0]).unwrap();
        let mut state = init_from_first_update(&c, &g, 10.0, 2);
        let a_init = state.a_init();
        let b = state.b();
        let mut steps = Vec::new();
        for _ in 1..=12u64 {
            // constant low miss ratio forces the halving branch
            let (a, next) = state.next_step(&c, 0.0).unwrap();
            steps.push(a);
            state = next;
        }
        for a in &steps[..5] {
            assert_eq!(*a, a_init);
        }
        for a in &steps[5..9] {
            assert!(*a >= b - 1e-15, "adaptive floor violated: {a} < {b}");
            assert!(*a < a_init);
        }
        // moderate tail: strictly decreasing multiplicative decay
        assert!(steps[9] < steps[8] + 1e-15);
        assert!((steps[9] - steps[8] * moderate_factor(10, DEFAULT_NU)).abs() < 1e-12);
        // non-increasing across adaptive and moderate phases
        for w in steps[5..].windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn moderate_factor_stays_in_unit_interval() {
        for k in 1..10_000u64 {
            let f = moderate_factor(k, DEFAULT_NU);
            assert!(f > 0.0 && f < 1.0);
        }
    }

    #[test]
    fn moderate_uses_offset_decay() {
        let c = cfg(ScheduleKind::Moderate);
        let g = g_l2_5();
        let state = init_from_first_update(&c, &g, 98.0, 2);
        let a0 = state.a_init();
        let (a1, state) = state.next_step(&c, 0.5).unwrap();
        assert!((a1 - a0 * moderate_factor(361, DEFAULT_NU)).abs() < 1e-12);
        let (a2, _) = state.next_step(&c, 0.5).unwrap();
        assert!((a2 - a1 * moderate_factor(362, DEFAULT_NU)).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_miss_ratio() {
        let c = cfg(ScheduleKind::Reciprocal);
        let g = g_l2_5();
        let state = init_from_first_update(&c, &g, 98.0, 2);
        assert!(state.clone().next_step(&c, -0.1).is_err());
        assert!(state.clone().next_step(&c, 1.1).is_err());
        assert!(state.next_step(&c, f64::NAN).is_err());
    }

    #[test]
    fn reinitialization_on_period_crossing() {
        let c = ScheduleConfig::new(
            ScheduleKind::Conditional,
            DEFAULT_NU,
            36,
            360,
            0.1,
            Some(10_800.0),
        )
        .unwrap();
        let g = g_l2_5();
        let mut state = init_from_first_update(&c, &g, 98.0, 2);
        for _ in 0..50 {
            let (_, next) = state.next_step(&c, 0.5).unwrap();
            state = next;
        }
        assert_eq!(state.iteration(), 51);

        // no crossing yet
        let state = state.maybe_reinitialize(&c, 9_000.0, &g, 98.0, 2);
        assert_eq!(state.iteration(), 51);

        // fresh crossing resets the counter and history
        let fresh_g = UpdateVector::new(vec![1.0, -1.0]).unwrap();
        let state = state.maybe_reinitialize(&c, 10_800.0, &fresh_g, 98.0, 2);
        assert_eq!(state.iteration(), 1);
        assert!(state.history().is_empty());
        assert!((state.a_init() - 98.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_period_never_reinitializes() {
        let c = cfg(ScheduleKind::Conditional);
        let g = g_l2_5();
        let state = init_from_first_update(&c, &g, 98.0, 2);
        let (_, state) = state.next_step(&c, 0.5).unwrap();
        let before = state.clone();
        let after = state.maybe_reinitialize(&c, 1e9, &g, 98.0, 2);
        assert_eq!(before, after);
    }

    #[test]
    fn one_day_period_untouched_after_three_hours() {
        let c = ScheduleConfig::new(
            ScheduleKind::Conditional,
            DEFAULT_NU,
            36,
            360,
            0.1,
            Some(86_400.0),
        )
        .unwrap();
        let g = g_l2_5();
        let state = init_from_first_update(&c, &g, 98.0, 2);
        let (_, state) = state.next_step(&c, 0.5).unwrap();
        let before = state.clone();
        let after = state.maybe_reinitialize(&c, 10_800.0, &g, 98.0, 2);
        assert_eq!(before, after);
    }

    #[test]
    fn config_validation() {
        assert!(ScheduleConfig::new(ScheduleKind::Conditional, 0.01, 36, 36, 0.1, None).is_err());
        assert!(ScheduleConfig::new(ScheduleKind::Conditional, 0.0, 36, 360, 0.1, None).is_err());
        assert!(ScheduleConfig::new(ScheduleKind::Conditional, 0.01, 36, 360, 1.0, None).is_err());
        assert!(ScheduleConfig::new(ScheduleKind::Conditional, 0.01, 0, 360, 0.1, None).is_err());
        assert!(
            ScheduleConfig::new(ScheduleKind::Conditional, 0.01, 36, 360, 0.1, Some(0.0)).is_err()
        );
    }

    #[test]
    fn phases_derived_from_slot_length() {
        let c = ScheduleConfig::with_phases_from_slot(ScheduleKind::Conditional, 10.0).unwrap();
        assert_eq!(c.bootstrap_end, 36);
        assert_eq!(c.adaptive_end, 360);
        let c = ScheduleConfig::with_phases_from_slot(ScheduleKind::Conditional, 100.0).unwrap();
        assert_eq!(c.bootstrap_end, 3);
        assert_eq!(c.adaptive_end, 36);
    }
}
