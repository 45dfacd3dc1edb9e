//! Datasets with an explicit ordering, and seeded randomness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: an input vector (possibly empty) and an optional scalar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Option<f64>,
}

impl Point {
    pub fn scalar(x: f64) -> Self {
        Point {
            x: vec![x],
            y: None,
        }
    }

    pub fn labelled(x: Vec<f64>, y: f64) -> Self {
        Point { x, y: Some(y) }
    }
}

/// A sequence of observations presented in `ordering`.
///
/// Models that predict the data one point at a time read the points through
/// [`OrderedDataset::iter`]; the underlying storage order is irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedDataset {
    points: Vec<Point>,
    ordering: Vec<usize>,
}

impl OrderedDataset {
    /// Dataset with the identity ordering.
    pub fn new(points: Vec<Point>) -> Self {
        let ordering = (0..points.len()).collect();
        OrderedDataset { points, ordering }
    }

    pub fn with_ordering(points: Vec<Point>, ordering: Vec<usize>) -> Result<Self> {
        if ordering.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                actual: ordering.len(),
            });
        }
        let mut seen = vec![false; points.len()];
        for &i in &ordering {
            if i >= points.len() || seen[i] {
                return Err(Error::InvalidData(format!(
                    "ordering is not a permutation of 0..{}",
                    points.len()
                )));
            }
            seen[i] = true;
        }
        Ok(OrderedDataset { points, ordering })
    }

    /// Unlabelled scalar observations.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self::new(xs.iter().map(|&x| Point::scalar(x)).collect())
    }

    /// Scalar inputs with scalar targets.
    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        Ok(Self::new(
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| Point::labelled(vec![x], y))
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// Points in presentation order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Point> + '_ {
        self.ordering.iter().map(move |&i| &self.points[i])
    }

    /// The `i`-th point in presentation order.
    pub fn get(&self, i: usize) -> &Point {
        &self.points[self.ordering[i]]
    }

    /// The first `m` points under the ordering, as a new identity-ordered dataset.
    pub fn prefix(&self, m: usize) -> OrderedDataset {
        assert!(
            m <= self.len(),
            "prefix({m}) of a dataset of {}",
            self.len()
        );
        OrderedDataset::new(self.iter().take(m).cloned().collect())
    }

    /// Points from index `m` (0-based) onwards under the ordering.
    pub fn suffix(&self, m: usize) -> OrderedDataset {
        assert!(
            m <= self.len(),
            "suffix({m}) of a dataset of {}",
            self.len()
        );
        OrderedDataset::new(self.iter().skip(m).cloned().collect())
    }

    /// Same points, new presentation order.
    pub fn reordered(&self, ordering: Vec<usize>) -> Result<OrderedDataset> {
        OrderedDataset::with_ordering(self.points.clone(), ordering)
    }

    /// Scalar observations in order; errors if any point is not one-dimensional.
    pub fn scalars(&self) -> Result<Vec<f64>> {
        self.iter()
            .map(|p| match p.x.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::InvalidData(format!(
                    "expected scalar observations, found input of dimension {}",
                    p.x.len()
                ))),
            })
            .collect()
    }

    /// Targets in order; errors if any target is missing.
    pub fn targets(&self) -> Result<Vec<f64>> {
        self.iter()
            .map(|p| {
                p.y.ok_or_else(|| Error::InvalidData("observation without a target".into()))
            })
            .collect()
    }

    /// Inputs in order.
    pub fn inputs(&self) -> Vec<&[f64]> {
        self.iter().map(|p| p.x.as_slice()).collect()
    }

    /// Append the points of `other` after this dataset's points.
    pub fn concat(&self, other: &OrderedDataset) -> OrderedDataset {
        OrderedDataset::new(self.iter().chain(other.iter()).cloned().collect())
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a reproducible random stream.
///
/// Replicates derive their own stream with [`SeedSpec::child`]:
/// `child(master, i) = splitmix64(splitmix64(master) + γ·(i + 1))` where γ is the
/// 64-bit golden-ratio increment. The derived seed depends only on
/// `(master, i)`, so replicates can be evaluated in any order or in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    pub fn child(&self, index: u64) -> SeedSpec {
        let mixed = splitmix64(self.master_seed)
            .wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
        SeedSpec {
            master_seed: splitmix64(mixed),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.master_seed)
    }
}

/// The dataset under a uniformly random permutation fixed by `(seed, index)`.
pub fn make_ordering(
    dataset: &OrderedDataset,
    seed: SeedSpec,
    index: u64,
) -> Result<OrderedDataset> {
    if dataset.is_empty() {
        return Err(Error::InvalidData("cannot order an empty dataset".into()));
    }
    let mut ordering: Vec<usize> = (0..dataset.len()).collect();
    ordering.shuffle(&mut seed.child(index).rng());
    dataset.reordered(ordering)
}

/// Which presentation orders a conditional evidence is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orderings {
    /// The dataset's own ordering only.
    AsGiven,
    /// `count` uniformly random permutations derived from `seed`.
    Random { count: usize, seed: SeedSpec },
}

impl Orderings {
    pub fn random(count: usize, seed: SeedSpec) -> Self {
        Orderings::Random { count, seed }
    }

    pub fn count(&self) -> usize {
        match self {
            Orderings::AsGiven => 1,
            Orderings::Random { count, .. } => *count,
        }
    }

    /// The `k`-th ordered view of `data`.
    pub fn view(&self, data: &OrderedDataset, k: usize) -> Result<OrderedDataset> {
        match self {
            Orderings::AsGiven => Ok(data.clone()),
            Orderings::Random { seed, .. } => make_ordering(data, *seed, k as u64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::invalid("orderings", "need at least one ordering"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn single_point_ordering_is_identity() {
        let d = OrderedDataset::from_scalars(&[3.0]);
        for i in 0..10 {
            assert_eq!(
                make_ordering(&d, SeedSpec::new(i), i).unwrap().ordering(),
                &[0]
            );
        }
    }

    #[test]
    fn ordering_is_deterministic_and_leaves_input_alone() {
        let d = OrderedDataset::from_scalars(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = make_ordering(&d, SeedSpec::new(9), 4).unwrap();
        let b = make_ordering(&d, SeedSpec::new(9), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(d.ordering(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn permutations_are_uniform() {
        // 120 cells, 10,000 draws; chi-square with 119 dof has mean 119 and
        // sd ~15.4, so 200 is ~5 sd out.
        let d = OrderedDataset::from_scalars(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let seed = SeedSpec::new(2024);
        let draws = 10_000u64;
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        for i in 0..draws {
            *counts
                .entry(make_ordering(&d, seed, i).unwrap().ordering().to_vec())
                .or_default() += 1;
        }
        assert_eq!(counts.len(), 120);
        let expected = draws as f64 / 120.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 200.0, "chi2 = {chi2}");
        let sd = (expected * (1.0 - 1.0 / 120.0)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - expected).abs() < 5.0 * sd);
        }
    }

    #[test]
    fn prefix_follows_ordering() {
        let d = OrderedDataset::from_scalars(&[10.0, 11.0, 12.0])
            .reordered(vec![2, 0, 1])
            .unwrap();
        assert_eq!(d.prefix(2).scalars().unwrap(), vec![12.0, 10.0]);
        assert_eq!(d.suffix(2).scalars().unwrap(), vec![11.0]);
        assert!(d.prefix(0).is_empty());
    }

    #[test]
    fn rejects_non_permutation() {
        let pts = vec![Point::scalar(0.0), Point::scalar(1.0)];
        assert!(OrderedDataset::with_ordering(pts.clone(), vec![0, 0]).is_err());
        assert!(OrderedDataset::with_ordering(pts, vec![0]).is_err());
    }

    #[test]
    fn children_differ() {
        let s = SeedSpec::new(1);
        assert_ne!(s.child(0), s.child(1));
        assert_ne!(s.child(0), SeedSpec::new(2).child(0));
        assert_eq!(s.child(7), s.child(7));
    }
}
