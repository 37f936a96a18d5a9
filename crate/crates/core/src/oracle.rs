//! Exact baselines for the partitioning problem: greedy marginal
//! allocation (optimal for separable convex miss curves), brute-force
//! enumeration for tiny instances, a grid minimizer for the
//! piecewise-linear interpolant, the uniform split, and the normalized
//! allocation error metric.

use crate::allocation::IntegerAllocation;
use crate::workload::{tabulate_miss_curve, CpWorkload};
use crate::{Error, Result};

/// Tabulated expected miss-intensity curves `L_p(0..=K)` for every
/// provider, each decreasing and convex.
#[derive(Debug, Clone, PartialEq)]
pub struct MissCurveSet {
    curves: Vec<Vec<f64>>,
    total_slots: u64,
}

impl MissCurveSet {
    /// Validates that all curves share length `K+1` and are decreasing
    /// and convex (non-decreasing forward differences).
    pub fn new(curves: Vec<Vec<f64>>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::invalid("curve set must contain at least one provider"));
        }
        let len = curves[0].len();
        if len < 2 {
            return Err(Error::invalid("curves must cover at least slot counts 0 and 1"));
        }
        for (p, curve) in curves.iter().enumerate() {
            if curve.len() != len {
                return Err(Error::invalid(format!(
                    "curve {p} has length {}, expected {len}",
                    curve.len()
                )));
            }
            let tol = 1e-9 * (1.0 + curve[0].abs());
            for s in 0..len - 1 {
                if curve[s + 1] > curve[s] + tol {
                    return Err(Error::invalid(format!(
                        "curve {p} increases at slot {s}"
                    )));
                }
            }
            for s in 0..len - 2 {
                let d0 = curve[s + 1] - curve[s];
                let d1 = curve[s + 2] - curve[s + 1];
                if d1 < d0 - tol {
                    return Err(Error::invalid(format!(
                        "curve {p} is not convex at slot {s}"
                    )));
                }
            }
        }
        Ok(Self {
            total_slots: (len - 1) as u64,
            curves,
        })
    }

    /// Tabulates the analytic miss curves of `workloads` up to `k` slots.
    pub fn from_workloads(workloads: &[CpWorkload], k: u64) -> Result<Self> {
        Self::new(
            workloads
                .iter()
                .map(|w| tabulate_miss_curve(w, k))
                .collect(),
        )
    }

    pub fn num_providers(&self) -> usize {
        self.curves.len()
    }

    pub fn total_slots(&self) -> u64 {
        self.total_slots
    }

    /// `L_p(s)`, clamped to the end of the table.
    pub fn value(&self, provider: usize, slots: u64) -> f64 {
        let s = (slots as usize).min(self.total_slots as usize);
        self.curves[provider][s]
    }

    /// Miss-intensity decrease from granting provider `p` its next slot.
    pub fn gain(&self, provider: usize, slots: u64) -> f64 {
        if slots >= self.total_slots {
            return 0.0;
        }
        let s = slots as usize;
        self.curves[provider][s] - self.curves[provider][s + 1]
    }

    /// Total expected miss intensity `Σ_p L_p(θ_p)`.
    pub fn total_miss(&self, alloc: &IntegerAllocation) -> f64 {
        alloc
            .slots()
            .iter()
            .enumerate()
            .map(|(p, s)| self.value(p, *s))
            .sum()
    }
}

/// Optimal integer allocation of `budget` slots via greedy marginal
/// allocation: each slot goes to the provider whose miss intensity
/// drops the most, ties to the lowest index. When no provider gains
/// (everything cacheable is cached) the remaining budget goes to
/// provider 0, where the objective is flat.
pub fn greedy_optimal(curves: &MissCurveSet, budget: u64) -> Result<IntegerAllocation> {
    if budget > curves.total_slots() {
        return Err(Error::invalid(format!(
            "budget {budget} exceeds the tabulated range {}",
            curves.total_slots()
        )));
    }
    let p = curves.num_providers();
    let mut slots = vec![0u64; p];
    for granted in 0..budget {
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in slots.iter().enumerate() {
            let g = curves.gain(i, *s);
            if g > 0.0 && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        match best {
            Some((i, _)) => slots[i] += 1,
            None => {
                slots[0] += budget - granted;
                break;
            }
        }
    }
    Ok(IntegerAllocation::new(slots))
}

/// Exhaustive minimizer of the total miss intensity over all integer
/// allocations with sum at most `budget`; ties resolve to the
/// lexicographically smallest vector. Guarded against combinatorial
/// blowup.
pub fn brute_force_optimal(curves: &MissCurveSet, budget: u64) -> Result<IntegerAllocation> {
    if budget > curves.total_slots() {
        return Err(Error::invalid(format!(
            "budget {budget} exceeds the tabulated range {}",
            curves.total_slots()
        )));
    }
    let p = curves.num_providers();
    let combos = compositions(budget, p);
    if combos > 1_000_000 {
        return Err(Error::InstanceTooLarge(format!(
            "{combos} candidate allocations exceed the enumeration bound"
        )));
    }
    let mut best_alloc = vec![0u64; p];
    let mut best_value = f64::INFINITY;
    let mut current = vec![0u64; p];
    search(curves, budget, 0, 0.0, &mut current, &mut best_alloc, &mut best_value);
    Ok(IntegerAllocation::new(best_alloc))
}

fn search(
    curves: &MissCurveSet,
    remaining: u64,
    provider: usize,
    partial: f64,
    current: &mut Vec<u64>,
    best_alloc: &mut Vec<u64>,
    best_value: &mut f64,
) {
    if provider == current.len() {
        if partial < *best_value {
            *best_value = partial;
            best_alloc.clone_from(current);
        }
        return;
    }
    for s in 0..=remaining {
        current[provider] = s;
        search(
            curves,
            remaining - s,
            provider + 1,
            partial + curves.value(provider, s),
            current,
            best_alloc,
            best_value,
        );
    }
    current[provider] = 0;
}

/// Number of compositions `C(budget + p - 1, p - 1)`, saturating well
/// above the enumeration bound.
fn compositions(budget: u64, p: usize) -> u128 {
    let mut result: u128 = 1;
    let n = budget as u128 + p as u128 - 1;
    let k = (p - 1) as u128;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
        if result > 10_000_000 {
            return result;
        }
    }
    result
}

/// Minimizes the piecewise-linear interpolant of the curves over
/// `{x ≥ 0, Σx = budget}` by greedy allocation in `grid`-sized
/// increments. `grid` must divide 1 so that steps never straddle a
/// breakpoint; marginal costs are nondecreasing along each curve, so
/// the greedy is exact on the grid.
pub fn interpolant_minimizer(
    curves: &MissCurveSet,
    budget: f64,
    grid: f64,
) -> Result<Vec<f64>> {
    if !grid.is_finite() || grid <= 0.0 || grid > 1.0 {
        return Err(Error::invalid(format!("grid must lie in (0, 1], got {grid}")));
    }
    let per_slot = (1.0 / grid).round();
    if ((1.0 / grid) - per_slot).abs() > 1e-9 {
        return Err(Error::invalid(format!("grid {grid} must divide 1")));
    }
    let per_slot = per_slot as u64;
    if !budget.is_finite() || budget < 0.0 {
        return Err(Error::invalid(format!(
            "budget must be finite and nonnegative, got {budget}"
        )));
    }
    let p = curves.num_providers();
    let mut units = vec![0u64; p];
    let steps = (budget / grid + 1e-9).floor() as u64;
    let remainder = (budget - steps as f64 * grid).max(0.0);

    let best_provider = |units: &[u64]| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, u) in units.iter().enumerate() {
            let cell = u / per_slot;
            let g = curves.gain(i, cell);
            if g > 0.0 && best.map_or(true, |(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        best.map(|(i, _)| i)
    };

    let mut taken = 0u64;
    while taken < steps {
        match best_provider(&units) {
            Some(i) => {
                units[i] += 1;
                taken += 1;
            }
            None => {
                // objective is flat: park the leftover budget on provider 0
                units[0] += steps - taken;
                break;
            }
        }
    }
    let mut result: Vec<f64> = units.iter().map(|u| *u as f64 * grid).collect();
    if remainder > 0.0 {
        let i = best_provider(&units).unwrap_or(0);
        result[i] += remainder;
    }
    Ok(result)
}

/// Normalized distance to the optimal allocation,
/// `max_j |θ_j - θ_j^opt| / K`.
pub fn error_metric(theta: &[f64], theta_opt: &IntegerAllocation, k: u64) -> f64 {
    assert_eq!(theta.len(), theta_opt.len(), "allocation lengths differ");
    assert!(k > 0, "cache size must be positive");
    theta
        .iter()
        .zip(theta_opt.slots())
        .map(|(t, o)| (t - *o as f64).abs())
        .fold(0.0, f64::max)
        / k as f64
}

/// Uniform baseline: `floor(K/P)` slots each, remainder to the first
/// providers.
pub fn uniform_allocation(p: usize, k: u64) -> IntegerAllocation {
    assert!(p >= 1, "provider count must be positive");
    let base = k / p as u64;
    let remainder = (k % p as u64) as usize;
    IntegerAllocation::new(
        (0..p)
            .map(|i| base + u64::from(i < remainder))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve_from(rate: f64, probs: &[f64], k: u64) -> Vec<f64> {
        let mut curve = Vec::with_capacity(k as usize + 1);
        let mut cached = 0.0;
        curve.push(rate);
        for s in 1..=k as usize {
            if s <= probs.len() {
                cached += probs[s - 1];
            }
            curve.push((rate * (1.0 - cached)).max(0.0));
        }
        curve
    }

    fn two_cp_example() -> MissCurveSet {
        let probs = [0.6, 0.3, 0.1];
        MissCurveSet::new(vec![
            curve_from(2.0, &probs, 3),
            curve_from(1.0, &probs, 3),
        ])
        .unwrap()
    }

    #[test]
    fn greedy_example_matches_enumeration() {
        let curves = two_cp_example();
        let opt = greedy_optimal(&curves, 3).unwrap();
        assert_eq!(opt.slots(), &[2, 1]);
        assert!((curves.total_miss(&opt) - 0.6).abs() < 1e-12);

        let brute = brute_force_optimal(&curves, 3).unwrap();
        assert!((curves.total_miss(&brute) - curves.total_miss(&opt)).abs() < 1e-12);
    }

    #[test]
    fn greedy_zero_budget() {
        let curves = two_cp_example();
        assert_eq!(greedy_optimal(&curves, 0).unwrap().slots(), &[0, 0]);
    }

    #[test]
    fn greedy_skips_zero_rate_provider() {
        let probs = [0.6, 0.3, 0.1];
        let curves = MissCurveSet::new(vec![
            curve_from(0.0, &probs, 3),
            curve_from(2.0, &probs, 3),
        ])
        .unwrap();
        let opt = greedy_optimal(&curves, 2).unwrap();
        assert_eq!(opt.slots()[0], 0);
        assert_eq!(opt.slots()[1], 2);
    }

    #[test]
    fn greedy_budget_beyond_range_is_rejected() {
        let curves = two_cp_example();
        assert!(greedy_optimal(&curves, 4).is_err());
    }

    #[test]
    fn greedy_miss_is_monotone_in_budget() {
        let probs: Vec<f64> = zipf_like(20);
        let curves = MissCurveSet::new(vec![
            curve_from(3.0, &probs, 20),
            curve_from(1.0, &probs, 20),
        ])
        .unwrap();
        let mut last = f64::INFINITY;
        for budget in 0..=20 {
            let miss = curves.total_miss(&greedy_optimal(&curves, budget).unwrap());
            assert!(miss <= last + 1e-12);
            last = miss;
        }
    }

    fn zipf_like(n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (1..=n).map(|i| 1.0 / (i as f64).powf(0.8)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    }

    #[test]
    fn brute_force_edge_cases() {
        let curves = two_cp_example();
        assert_eq!(brute_force_optimal(&curves, 0).unwrap().slots(), &[0, 0]);

        let single = MissCurveSet::new(vec![curve_from(2.0, &[0.6, 0.3, 0.1], 3)]).unwrap();
        assert_eq!(brute_force_optimal(&single, 3).unwrap().slots(), &[3]);
    }

    #[test]
    fn brute_force_rejects_huge_instances() {
        let probs = zipf_like(400);
        let curves = MissCurveSet::new(
            (0..8).map(|_| curve_from(1.0, &probs, 400)).collect(),
        )
        .unwrap();
        assert!(matches!(
            brute_force_optimal(&curves, 400),
            Err(crate::Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn interpolant_with_unit_grid_matches_integer_greedy() {
        let probs_a = zipf_like(30);
        let probs_b: Vec<f64> = zipf_like(25);
        let curves = MissCurveSet::new(vec![
            curve_from(5.0, &probs_a, 20),
            curve_from(2.0, &probs_b, 20),
        ])
        .unwrap();
        let greedy = greedy_optimal(&curves, 12).unwrap();
        let interp = interpolant_minimizer(&curves, 12.0, 1.0).unwrap();
        for (g, i) in greedy.slots().iter().zip(&interp) {
            assert!((*g as f64 - i).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolant_single_provider_takes_everything() {
        let curves = MissCurveSet::new(vec![curve_from(2.0, &zipf_like(30), 20)]).unwrap();
        let x = interpolant_minimizer(&curves, 7.5, 1.0 / 64.0).unwrap();
        assert!((x[0] - 7.5).abs() < 1e-9);
    }

    #[test]
    fn interpolant_symmetric_split() {
        let probs = zipf_like(30);
        let curves = MissCurveSet::new(vec![
            curve_from(2.0, &probs, 20),
            curve_from(2.0, &probs, 20),
        ])
        .unwrap();
        let x = interpolant_minimizer(&curves, 10.0, 1.0 / 64.0).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-9);
        assert!((x[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn interpolant_rejects_bad_grid() {
        let curves = two_cp_example();
        assert!(interpolant_minimizer(&curves, 2.0, 0.3).is_err());
        assert!(interpolant_minimizer(&curves, 2.0, 0.0).is_err());
    }

    #[test]
    fn error_metric_examples() {
        let opt = IntegerAllocation::new(vec![2, 1]);
        assert!((error_metric(&[1.0, 2.0], &opt, 3) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(error_metric(&[2.0, 1.0], &opt, 3), 0.0);
        let opt = IntegerAllocation::new(vec![2, 2]);
        assert!((error_metric(&[0.0, 4.0], &opt, 10) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_allocation(4, 10).slots(), &[3, 3, 2, 2]);
        assert_eq!(uniform_allocation(2, 4).slots(), &[2, 2]);
        assert_eq!(uniform_allocation(3, 0).slots(), &[0, 0, 0]);
    }

    #[test]
    fn curve_validation_rejects_bad_shapes() {
        // increasing curve
        assert!(MissCurveSet::new(vec![vec![1.0, 2.0, 3.0]]).is_err());
        // concave curve: differences -5 then -1 then -3
        assert!(MissCurveSet::new(vec![vec![10.0, 5.0, 4.0, 1.0]]).is_err());
        // mismatched lengths
        assert!(MissCurveSet::new(vec![vec![2.0, 1.0], vec![2.0, 1.0, 0.5]]).is_err());
    }
}
