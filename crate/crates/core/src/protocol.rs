//! Exchange mechanics between data owners.
//!
//! Each round the `n` owner models are split into random disjoint pairs.
//! Within a pair, `floor(gamma * lambda)` randomly chosen positions of the
//! flat parameter vectors are exchanged, so neither vector handed to the
//! analyzer is the one its owner trained. The analyzer then forms the
//! data-weighted average `sum_l rho_l * m_l`.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterVector;

/// Disjoint pairs of model indices. With odd `n`, one index sits out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
    pub leftover: Option<usize>,
}

/// Shuffles `0..n` and chunks consecutive entries into pairs; an odd final
/// entry becomes the leftover.
pub fn pair_models<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Pairing {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut chunks = order.chunks_exact(2);
    let pairs = chunks.by_ref().map(|c| (c[0], c[1])).collect();
    let leftover = chunks.remainder().first().copied();
    Pairing { pairs, leftover }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    gamma: f64,
}

impl HybridConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("exchange rate must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `floor(gamma * lambda)`.
    pub fn swap_count(&self, lambda: usize) -> usize {
        // Guard against products like 0.29 * 100 = 28.999999999999996.
        let exact = self.gamma * lambda as f64;
        ((exact + 1e-9 * exact.max(1.0)).floor() as usize).min(lambda)
    }
}

/// Uniform subset of `0..lambda` of size `floor(gamma * lambda)`, sorted.
pub fn select_swap_positions<R: Rng + ?Sized>(
    lambda: usize,
    hybrid: HybridConfig,
    rng: &mut R,
) -> Vec<usize> {
    let mut picked = index::sample(rng, lambda, hybrid.swap_count(lambda)).into_vec();
    picked.sort_unstable();
    picked
}

/// Exchanges the values at `positions` between `a` and `b`.
pub fn hybridize_pair(
    a: &ParameterVector,
    b: &ParameterVector,
    positions: &[usize],
) -> Result<(ParameterVector, ParameterVector)> {
    let (mut a, mut b) = (a.clone(), b.clone());
    swap_in_place(&mut a, &mut b, positions)?;
    Ok((a, b))
}

fn swap_in_place(a: &mut ParameterVector, b: &mut ParameterVector, positions: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "cannot hybridize vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(&bad) = positions.iter().find(|&&p| p >= a.len()) {
        return Err(Error::input(format!(
            "swap position {bad} out of range for length {}",
            a.len()
        )));
    }
    let (a, b) = (a.as_mut_slice(), b.as_mut_slice());
    for &p in positions {
        std::mem::swap(&mut a[p], &mut b[p]);
    }
    Ok(())
}

/// One round's pairing with the positions each pair exchanges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub pairing: Pairing,
    pub positions: Vec<Vec<usize>>,
}

/// Draws the pairing first, then an independent position set per pair, in pair order.
pub fn plan_round<R: Rng + ?Sized>(
    n: usize,
    lambda: usize,
    hybrid: HybridConfig,
    rng: &mut R,
) -> RoundPlan {
    let pairing = pair_models(n, rng);
    let positions = pairing
        .pairs
        .iter()
        .map(|_| select_swap_positions(lambda, hybrid, rng))
        .collect();
    RoundPlan { pairing, positions }
}

/// Applies a plan in place. Applying the same plan twice restores the input.
pub fn apply_plan(models: &mut [ParameterVector], plan: &RoundPlan) -> Result<()> {
    check_lengths(models)?;
    for (&(i, j), positions) in plan.pairing.pairs.iter().zip(&plan.positions) {
        if i == j || i >= models.len() || j >= models.len() {
            return Err(Error::input(format!("invalid pair ({i}, {j})")));
        }
        let (lo, hi) = (i.min(j), i.max(j));
        let (head, tail) = models.split_at_mut(hi);
        swap_in_place(&mut head[lo], &mut tail[0], positions)?;
    }
    Ok(())
}

/// Pairs the models at random and hybridizes each pair at rate `gamma`.
pub fn hybridize_round<R: Rng + ?Sized>(
    models: &[ParameterVector],
    hybrid: HybridConfig,
    rng: &mut R,
) -> Result<(Vec<ParameterVector>, RoundPlan)> {
    let lambda = check_lengths(models)?;
    let plan = plan_round(models.len(), lambda, hybrid, rng);
    let mut out = models.to_vec();
    apply_plan(&mut out, &plan)?;
    Ok((out, plan))
}

fn check_lengths(models: &[ParameterVector]) -> Result<usize> {
    let lambda = models
        .first()
        .ok_or_else(|| Error::input("no models"))?
        .len();
    if models.iter().any(|m| m.len() != lambda) {
        return Err(Error::input("models have different parameter counts"));
    }
    Ok(lambda)
}

/// Per-owner data fractions `rho_l`, non-negative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnerWeights(Vec<f64>);

impl OwnerWeights {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::input("no owner weights"));
        }
        if rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::input("owner weights must be finite and non-negative"));
        }
        let total: f64 = rho.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("owner weights sum to {total}, not 1")));
        }
        Ok(Self(rho))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// `rho_l = size_l / sum_k size_k`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(Error::input("owners hold no data"));
        }
        Self::new(sizes.iter().map(|&s| s as f64 / total as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `M_fed = sum_l rho_l * m_l`, element-wise.
pub fn federated_average(
    models: &[ParameterVector],
    weights: &OwnerWeights,
) -> Result<ParameterVector> {
    let lambda = check_lengths(models)?;
    if weights.0.len() != models.len() {
        return Err(Error::input(format!(
            "{} models but {} owner weights",
            models.len(),
            weights.0.len()
        )));
    }
    let mut acc = vec![0.0; lambda];
    for (m, &rho) in models.iter().zip(&weights.0) {
        for (a, v) in acc.iter_mut().zip(m.as_slice()) {
            *a += rho * v;
        }
    }
    ParameterVector::new(acc)
}
