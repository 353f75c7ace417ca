//! Compensated summation and deterministic reductions.

use std::ops::AddAssign;

use rayon::prelude::*;

/// Kahan-Babuska (Neumaier) compensated accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Leaf size of the reduction tree. Part of the numeric contract: changing it
/// changes reported digits.
pub const LEAF: usize = 1024;

/// Mergeable accumulator for [`tree_reduce`].
pub trait Accumulator: Send + Sized {
    fn merge(self, other: Self) -> Self;
}

/// Reduces `len` items with a tree whose shape depends only on `len`.
///
/// Items are grouped into consecutive leaves of [`LEAF`] indices, each leaf is
/// folded left to right by `leaf`, and leaf results are merged pairwise. The
/// result is therefore bit-identical for any thread count or scheduling.
pub fn tree_reduce<A, L>(len: usize, leaf: L) -> Option<A>
where
    A: Accumulator,
    L: Fn(std::ops::Range<usize>) -> A + Sync,
{
    if len == 0 {
        return None;
    }
    let leaves: Vec<A> = (0..len.div_ceil(LEAF))
        .into_par_iter()
        .map(|b| leaf(b * LEAF..((b + 1) * LEAF).min(len)))
        .collect();
    Some(pairwise(leaves))
}

fn pairwise<A: Accumulator>(mut level: Vec<A>) -> A {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(b)),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().expect("non-empty level")
}

/// Running mean and second moment of a real quantity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Population variance of the pushed values, clamped at zero.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.sum_sq / self.count as f64 - m * m).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

impl Accumulator for Moments {
    fn merge(self, o: Self) -> Self {
        Self {
            count: self.count + o.count,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }
}

/// Deterministic mean and standard error of `f(i)` for `i in 0..len`.
pub fn mean_and_stderr<F>(len: usize, f: F) -> Option<Moments>
where
    F: Fn(usize) -> f64 + Sync,
{
    tree_reduce(len, |range| {
        let mut m = Moments::default();
        for i in range {
            m.push(f(i));
        }
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = NeumaierSum::new();
        s += 1e100;
        s += 1.0;
        s += -1e100;
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn neumaier_long_sum_of_tenths() {
        let s: NeumaierSum = std::iter::repeat_n(0.1, 1_000_000).collect();
        let naive: f64 = std::iter::repeat_n(0.1, 1_000_000).sum();
        assert!((s.value() - 100_000.0).abs() <= 1e-9);
        assert!((naive - 100_000.0).abs() > (s.value() - 100_000.0).abs());
    }

    #[test]
    fn tree_reduce_independent_of_pool_size() {
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mean_and_stderr(100_003, f).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        assert_eq!(a.sum_sq.to_bits(), b.sum_sq.to_bits());
        assert_eq!(a.count, 100_003);
    }

    #[test]
    fn moments_basic() {
        let m = mean_and_stderr(4, |i| [1.0, 2.0, 3.0, 4.0][i]).unwrap();
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 1.25).abs() < 1e-15);
        assert!(mean_and_stderr(0, |_| 0.0).is_none());
    }
}
