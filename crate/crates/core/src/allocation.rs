//! Algorithm state types and the pure per-iteration operations:
//! zero-sum perturbation sampling, hypercube center rounding, paired
//! test-allocation construction, update vectors built from measured
//! miss-rate differences, and Euclidean projection onto the scaled
//! simplex.
//!
//! Everything here is a pure function of its inputs plus an explicit
//! rng handle, so values move freely across threads.

use rand::Rng;

use crate::{Error, Result};

/// Absolute tolerance for feasibility checks on real-valued allocations.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Real-valued allocation of `budget` cache slots across providers.
///
/// This is the algorithm's internal state: components are nonnegative
/// and sum to the reduced budget `K' = K - P/2`, which guarantees that
/// both perturbed integer allocations stay inside the deployable set.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualAllocation {
    values: Vec<f64>,
    budget: f64,
}

impl VirtualAllocation {
    /// Validates nonnegativity and that components sum to `budget`
    /// within [`FEASIBILITY_TOL`].
    pub fn new(values: Vec<f64>, budget: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("virtual allocation must not be empty"));
        }
        if !budget.is_finite() || budget < 0.0 {
            return Err(Error::invalid(format!(
                "allocation budget must be finite and nonnegative, got {budget}"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "virtual allocation components must be finite and nonnegative",
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - budget).abs() > FEASIBILITY_TOL {
            return Err(Error::invalid(format!(
                "virtual allocation sums to {sum}, expected budget {budget}"
            )));
        }
        Ok(Self { values, budget })
    }

    /// The uniform point with `budget / p` slots per provider.
    pub fn uniform(p: usize, budget: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("provider count must be positive"));
        }
        Self::new(vec![budget / p as f64; p], budget)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Deployable cache partition: nonnegative integer slot counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerAllocation {
    slots: Vec<u64>,
}

impl IntegerAllocation {
    pub fn new(slots: Vec<u64>) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[u64] {
        &self.slots
    }

    pub fn total(&self) -> u64 {
        self.slots.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.slots.iter().map(|s| *s as f64).collect()
    }
}

/// Zero-sum vector of `±1` direction signs, one per provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationVector {
    signs: Vec<i8>,
}

impl PerturbationVector {
    /// Validates that entries are `±1`, the length is even, and the
    /// signs sum to zero.
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.is_empty() || signs.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "perturbation length must be even and positive, got {}",
                signs.len()
            )));
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::invalid("perturbation entries must be +1 or -1"));
        }
        if signs.iter().map(|s| i64::from(*s)).sum::<i64>() != 0 {
            return Err(Error::invalid("perturbation signs must sum to zero"));
        }
        Ok(Self { signs })
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// Draws a perturbation uniformly from the `C(p, p/2)` zero-sum sign
/// vectors. Odd or zero `p` is rejected; callers handle odd provider
/// counts by adding a zero-rate provider first.
pub fn sample_perturbation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<PerturbationVector> {
    if p == 0 || p % 2 != 0 {
        return Err(Error::invalid(format!(
            "perturbations need an even positive provider count, got {p}"
        )));
    }
    let mut signs = vec![-1i8; p];
    for idx in rand::seq::index::sample(rng, p, p / 2) {
        signs[idx] = 1;
    }
    Ok(PerturbationVector { signs })
}

/// Maps each component to the center of its unit cell, `floor(x) + 1/2`.
pub fn center_point(theta: &VirtualAllocation) -> Vec<f64> {
    theta.values().iter().map(|v| v.floor() + 0.5).collect()
}

/// Builds the paired test allocations `Γ(θ) ± d/2`.
///
/// Both results are integral, nonnegative, and sum to at most
/// `K = K' + P/2`: with `d_j = +1` the plus side gets `floor(θ_j) + 1`
/// and the minus side `floor(θ_j)`, and vice versa.
pub fn make_test_allocations(
    theta: &VirtualAllocation,
    d: &PerturbationVector,
) -> Result<(IntegerAllocation, IntegerAllocation)> {
    if theta.len() != d.len() {
        return Err(Error::invalid(format!(
            "allocation has {} providers but perturbation has {}",
            theta.len(),
            d.len()
        )));
    }
    let mut plus = Vec::with_capacity(theta.len());
    let mut minus = Vec::with_capacity(theta.len());
    for (v, s) in theta.values().iter().zip(d.signs()) {
        let base = v.floor() as u64;
        if *s > 0 {
            plus.push(base + 1);
            minus.push(base);
        } else {
            plus.push(base);
            minus.push(base + 1);
        }
    }
    let plus = IntegerAllocation::new(plus);
    let minus = IntegerAllocation::new(minus);
    debug_assert!(plus.total() as f64 <= theta.budget() + theta.len() as f64 / 2.0 + 0.5);
    debug_assert!(minus.total() as f64 <= theta.budget() + theta.len() as f64 / 2.0 + 0.5);
    Ok((plus, minus))
}

/// Per-provider miss rates measured under the two test allocations of
/// one slot, in misses per second.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredMissPair {
    y_plus: Vec<f64>,
    y_minus: Vec<f64>,
}

impl MeasuredMissPair {
    pub fn new(y_plus: Vec<f64>, y_minus: Vec<f64>) -> Result<Self> {
        if y_plus.is_empty() || y_plus.len() != y_minus.len() {
            return Err(Error::invalid("measured rate vectors must share a positive length"));
        }
        if y_plus
            .iter()
            .chain(y_minus.iter())
            .any(|y| !y.is_finite() || *y < 0.0)
        {
            return Err(Error::invalid("measured rates must be finite and nonnegative"));
        }
        Ok(Self { y_plus, y_minus })
    }

    pub fn y_plus(&self) -> &[f64] {
        &self.y_plus
    }

    pub fn y_minus(&self) -> &[f64] {
        &self.y_minus
    }

    /// Componentwise difference `y⁺ - y⁻`.
    pub fn delta(&self) -> Vec<f64> {
        self.y_plus
            .iter()
            .zip(&self.y_minus)
            .map(|(p, m)| p - m)
            .collect()
    }
}

/// Zero-sum update direction, in misses per second per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateVector {
    components: Vec<f64>,
}

impl UpdateVector {
    /// Validates that the components sum to zero within
    /// [`FEASIBILITY_TOL`].
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("update vector must not be empty"));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("update components must be finite"));
        }
        let sum: f64 = components.iter().sum();
        if sum.abs() > FEASIBILITY_TOL {
            return Err(Error::invalid(format!(
                "update vector sums to {sum}, expected zero"
            )));
        }
        Ok(Self { components })
    }

    pub fn zero(p: usize) -> Self {
        Self {
            components: vec![0.0; p],
        }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn l1_norm(&self) -> f64 {
        self.components.iter().map(|c| c.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0.0)
    }
}

/// Turns a measured miss-rate difference into the zero-sum update
/// `δy ∘ d - (δyᵀ·d / P) · 1`, where `∘` is the Hadamard product.
pub fn compute_update(delta_y: &[f64], d: &PerturbationVector) -> Result<UpdateVector> {
    if delta_y.len() != d.len() {
        return Err(Error::invalid(format!(
            "rate difference has {} entries but perturbation has {}",
            delta_y.len(),
            d.len()
        )));
    }
    if delta_y.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("rate differences must be finite"));
    }
    let hadamard: Vec<f64> = delta_y
        .iter()
        .zip(d.signs())
        .map(|(y, s)| y * f64::from(*s))
        .collect();
    let mean = hadamard.iter().sum::<f64>() / d.len() as f64;
    UpdateVector::new(hadamard.into_iter().map(|h| h - mean).collect())
}

/// Euclidean projection onto the scaled simplex `{x ≥ 0, Σx = budget}`.
///
/// Sort-based active-set method: after sorting in decreasing order, the
/// water-filling threshold is fixed by the largest prefix whose clipped
/// components stay positive, and everything below it clips to zero.
/// Already-feasible inputs are returned unchanged, which makes the
/// projection exactly idempotent; the full path re-centers the support
/// onto the budget so that long chains of projected steps do not drift.
pub fn project_simplex(v: &[f64], budget: f64) -> Result<VirtualAllocation> {
    if v.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    if !budget.is_finite() || budget < 0.0 {
        return Err(Error::invalid(format!(
            "projection budget must be finite and nonnegative, got {budget}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("projection input must be finite"));
    }

    let tol = 1e-13 * budget.max(1.0);
    let sum: f64 = v.iter().sum();
    if (sum - budget).abs() <= tol && v.iter().all(|x| *x >= 0.0) {
        return VirtualAllocation::new(v.to_vec(), budget);
    }

    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let mut cumulative = 0.0;
    let mut threshold = None;
    for (i, u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - budget) / (i as f64 + 1.0);
        if u - t > 0.0 {
            threshold = Some(t);
        }
    }
    let mut x: Vec<f64> = match threshold {
        Some(tau) => v.iter().map(|vi| (vi - tau).max(0.0)).collect(),
        // No positive prefix exists only when the budget is zero.
        None => vec![0.0; v.len()],
    };

    for _ in 0..8 {
        let s: f64 = x.iter().sum();
        let diff = budget - s;
        if diff.abs() <= 0.5 * tol {
            break;
        }
        let support = x.iter().filter(|xi| **xi > 0.0).count();
        if support == 0 {
            break;
        }
        let correction = diff / support as f64;
        for xi in x.iter_mut() {
            if *xi > 0.0 {
                *xi = (*xi + correction).max(0.0);
            }
        }
    }

    VirtualAllocation::new(x, budget)
}

/// One projected update step `φ(θ - a·ĝ)`.
///
/// A zero update leaves the state untouched; schedules still advance in
/// the caller.
pub fn sdcp_step(
    theta: &VirtualAllocation,
    g_hat: &UpdateVector,
    a_k: f64,
) -> Result<VirtualAllocation> {
    if !a_k.is_finite() || a_k <= 0.0 {
        return Err(Error::invalid(format!(
            "step size must be positive and finite, got {a_k}"
        )));
    }
    if theta.len() != g_hat.components().len() {
        return Err(Error::invalid(format!(
            "allocation has {} providers but update has {}",
            theta.len(),
            g_hat.components().len()
        )));
    }
    if g_hat.is_zero() {
        return Ok(theta.clone());
    }
    let moved: Vec<f64> = theta
        .values()
        .iter()
        .zip(g_hat.components())
        .map(|(t, g)| t - a_k * g)
        .collect();
    project_simplex(&moved, theta.budget())
}
