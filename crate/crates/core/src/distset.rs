//! Pinned and pairwise distance sets under a polyhedral norm.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{FractalSpec, SamplePoint};
use crate::dyadic::{Dyadic, DyadicError};
use crate::norms::{pow2, PolyhedralNorm, Preset};
use crate::schedule::Window;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistsetError {
    #[error("points differ in dimension or precision ({0})")]
    DimensionMismatch(String),
    #[error(transparent)]
    Precision(#[from] DyadicError),
}

/// Which points a distance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairSource {
    /// The pinned point against sample `i`.
    Pinned(usize),
    /// Samples `i < j`.
    Pair(usize, usize),
}

impl fmt::Display for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairSource::Pinned(i) => write!(f, "x-{i}"),
            PairSource::Pair(i, j) => write!(f, "{i}-{j}"),
        }
    }
}

impl std::str::FromStr for PairSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('-').ok_or_else(|| format!("bad pair id {s:?}"))?;
        let parse = |t: &str| t.parse::<usize>().map_err(|e| format!("bad pair id {s:?}: {e}"));
        if a == "x" {
            Ok(PairSource::Pinned(parse(b)?))
        } else {
            Ok(PairSource::Pair(parse(a)?, parse(b)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceRecord {
    /// `|(x - y) . v^l|`, the norm of the difference.
    pub value: Dyadic,
    /// One-based index of the achieving functional (smallest on ties).
    pub achieving: usize,
    pub source: PairSource,
}

fn check_compatible(a: &SamplePoint, b: &SamplePoint) -> Result<(), DistsetError> {
    if a.d() != b.d() || a.precision() != b.precision() {
        return Err(DistsetError::DimensionMismatch(format!(
            "d={} prec={} vs d={} prec={}",
            a.d(),
            a.precision(),
            b.d(),
            b.precision()
        )));
    }
    Ok(())
}

/// Exact coordinate differences `x - y`.
pub fn difference(x: &SamplePoint, y: &SamplePoint) -> Vec<Dyadic> {
    (0..x.d())
        .map(|i| {
            Dyadic::new(
                BigInt::from(x.mantissa(i).clone()) - BigInt::from(y.mantissa(i).clone()),
                x.precision(),
            )
        })
        .collect()
}

fn record(
    x: &SamplePoint,
    y: &SamplePoint,
    norm: &PolyhedralNorm,
    source: PairSource,
) -> Result<DistanceRecord, DistsetError> {
    check_compatible(x, y)?;
    if x.d() != norm.d() {
        return Err(DistsetError::DimensionMismatch(format!(
            "points have d={}, norm has d={}",
            x.d(),
            norm.d()
        )));
    }
    let delta = difference(x, y);
    if delta.iter().all(Dyadic::is_zero) {
        // x = y: the achieving index is 1 by convention.
        return Ok(DistanceRecord {
            value: Dyadic::zero(),
            achieving: 1,
            source,
        });
    }
    let (achieving, value) = norm
        .argmax_with_value(&delta)
        .map_err(|e| DistsetError::DimensionMismatch(e.to_string()))?;
    Ok(DistanceRecord {
        value,
        achieving,
        source,
    })
}

/// One record per sample, in sample order.
pub fn pinned(
    x: &SamplePoint,
    ys: &[SamplePoint],
    norm: &PolyhedralNorm,
) -> Result<Vec<DistanceRecord>, DistsetError> {
    ys.par_iter()
        .enumerate()
        .map(|(i, y)| record(x, y, norm, PairSource::Pinned(i)))
        .collect()
}

/// Maps a lexicographic pair index to `(i, j)` with `i < j < n`.
fn unrank_pair(t: u64, n: u64) -> (usize, usize) {
    // Pairs starting at i occupy [off(i), off(i+1)), off(i) = i*n - i*(i+1)/2.
    let off = |i: u64| i * n - i * (i + 1) / 2;
    let (mut lo, mut hi) = (0u64, n - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if off(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = lo;
    let j = i + 1 + (t - off(i));
    (i as usize, j as usize)
}

/// Distances between distinct samples, sorted by source.
///
/// When there are more than `cap` pairs, `cap` of them are drawn uniformly
/// without replacement using `seed`.
pub fn pairwise(
    ys: &[SamplePoint],
    norm: &PolyhedralNorm,
    cap: usize,
    seed: u64,
) -> Result<Vec<DistanceRecord>, DistsetError> {
    let n = ys.len() as u64;
    let total = if n < 2 { 0 } else { n * (n - 1) / 2 };
    let mut ranks: Vec<u64> = if total <= cap as u64 {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7061_6972_7769_7365);
        rand::seq::index::sample(&mut rng, total as usize, cap)
            .into_iter()
            .map(|t| t as u64)
            .collect()
    };
    ranks.sort_unstable();
    ranks
        .par_iter()
        .map(|&t| {
            let (i, j) = unrank_pair(t, n);
            record(&ys[i], &ys[j], norm, PairSource::Pair(i, j))
        })
        .collect()
}

/// `2^-r floor(2^r |delta|_2)`, exact.
pub fn euclid_floor(delta: &[Dyadic], r: u32) -> Dyadic {
    let p = delta.iter().map(Dyadic::precision).max().unwrap_or(0);
    // sum of squares at precision 2p
    let sum: BigInt = delta
        .iter()
        .map(|v| {
            let m = v.floor_scaled(p);
            &m * &m
        })
        .sum();
    let sum = sum.magnitude().clone();
    let scaled: BigUint = if r >= p {
        sum << (2 * (r - p)) as usize
    } else {
        sum >> (2 * (p - r)) as usize
    };
    Dyadic::new(BigInt::from(scaled.sqrt()), r)
}

/// Floor-exact Euclidean pinned distances at scale `r`.
pub fn euclid_pinned(
    x: &SamplePoint,
    ys: &[SamplePoint],
    r: u32,
) -> Result<Vec<Dyadic>, DistsetError> {
    ys.par_iter()
        .map(|y| {
            check_compatible(x, y)?;
            Ok(euclid_floor(&difference(x, y), r))
        })
        .collect()
}

/// Constants `(c1, c2)` with `c1 |v|_2 <= |v|_P <= c2 |v|_2` for a preset norm in dimension `d`.
pub fn euclid_constants(preset: Preset, d: usize) -> (Dyadic, Dyadic) {
    // smallest e with 4^e >= d, so sqrt(d) <= 2^e
    let mut e = 0i64;
    while 4usize.pow(e as u32) < d {
        e += 1;
    }
    match preset {
        Preset::Linf => (pow2(-e), Dyadic::from_integer(1)),
        Preset::L1 => (Dyadic::from_integer(1), pow2(e)),
    }
}

/// Checks `c1 e <= p` and `p <= c2 (e + 2^-r)` for a floored Euclidean value `e`.
pub fn euclid_consistent(polyhedral: &Dyadic, euclid: &Dyadic, r: u32, c: &(Dyadic, Dyadic)) -> bool {
    let upper = &c.1 * &(euclid + &pow2(-(r as i64)));
    &c.0 * euclid <= *polyhedral && *polyhedral <= upper
}

/// Digit collapse status of one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCollapse {
    pub block: usize,
    pub window: Window,
    /// The window shrunk by one place at each end.
    pub checked: Window,
    /// The constant digit on `checked`, or `None` if it varies.
    pub digit: Option<bool>,
    /// Whether the digits are constant on the full window as well.
    pub full_window_constant: bool,
}

impl BlockCollapse {
    pub fn passed(&self) -> bool {
        self.digit.is_some() || self.checked.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalCollapse {
    pub functional: usize,
    pub blocks: Vec<BlockCollapse>,
}

impl FunctionalCollapse {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(BlockCollapse::passed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub achieving: usize,
    /// One entry per functional attaining the maximum; the achieving one first.
    pub functionals: Vec<FunctionalCollapse>,
}

impl CollapseReport {
    /// Pass iff the achieving functional collapses on every one of its blocks.
    pub fn passed(&self) -> bool {
        self.functionals[0].passed()
    }

    pub fn first_failure(&self) -> Option<&BlockCollapse> {
        self.functionals[0].blocks.iter().find(|b| !b.passed())
    }
}

fn constant_digit(z: &Dyadic, w: Window) -> Result<Option<bool>, DyadicError> {
    let mut places = w.places();
    let Some(first) = places.next() else {
        return Ok(None);
    };
    let d0 = z.bit(first)?;
    for j in places {
        if z.bit(j)? != d0 {
            return Ok(None);
        }
    }
    Ok(Some(d0))
}

/// Checks that the digits of `|(x - y) . v^l|` are constant on the windows of blocks using `l`.
pub fn collapse_check(
    x: &SamplePoint,
    y: &SamplePoint,
    spec: &FractalSpec,
) -> Result<CollapseReport, DistsetError> {
    check_compatible(x, y)?;
    let needed = spec.precision();
    if x.precision() < needed {
        return Err(DyadicError::PrecisionExceeded {
            place: needed,
            precision: x.precision(),
        }
        .into());
    }
    let delta = difference(x, y);
    let norm = spec.norm();
    let mut ties = if delta.iter().all(Dyadic::is_zero) {
        vec![1]
    } else {
        norm.maximizers(&delta)
            .map_err(|e| DistsetError::DimensionMismatch(e.to_string()))?
    };
    let achieving = ties[0];
    ties.sort_by_key(|&l| l != achieving);
    let sched = spec.schedule();
    let functionals = ties
        .into_iter()
        .map(|ell| {
            let z = norm.functional(ell).dot(&delta).abs();
            let blocks = sched
                .blocks_for(ell)
                .map(|k| {
                    let window = sched.window(k).expect("block in range");
                    let checked = window.shrunk();
                    Ok(BlockCollapse {
                        block: k,
                        window,
                        checked,
                        digit: constant_digit(&z, checked)?,
                        full_window_constant: window.is_empty()
                            || constant_digit(&z, window)?.is_some(),
                    })
                })
                .collect::<Result<Vec<_>, DyadicError>>()?;
            Ok(FunctionalCollapse {
                functional: ell,
                blocks,
            })
        })
        .collect::<Result<Vec<_>, DistsetError>>()?;
    Ok(CollapseReport {
        achieving,
        functionals,
    })
}

/// Distance values keyed by achieving functional.
pub fn group_by_functional(records: &[DistanceRecord]) -> BTreeMap<usize, Vec<Dyadic>> {
    let mut groups: BTreeMap<usize, Vec<Dyadic>> = BTreeMap::new();
    for r in records {
        groups.entry(r.achieving).or_default().push(r.value.clone());
    }
    groups
}

/// Nonzero values only; zero distances carry no dimension information.
pub fn nonzero_values(values: &[Dyadic]) -> Vec<Dyadic> {
    values.iter().filter(|v| !v.is_zero()).cloned().collect()
}
