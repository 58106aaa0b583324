//! Box counting, complexity profiles and dimension estimates.

use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use num_bigint::{BigInt, BigUint};
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{FractalSpec, SamplePoint};
use crate::dyadic::{Dyadic, DyadicError};
use crate::norms::Functional;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimensionError {
    #[error(transparent)]
    Precision(#[from] DyadicError),
    #[error(
        "budget of {budget} cubes exceeded at r = {r}; count lies in [{lower}, {upper}]"
    )]
    BudgetExceeded {
        r: u32,
        budget: u64,
        lower: BigUint,
        upper: BigUint,
    },
    #[error("scale r = {r} is out of range: {detail}")]
    ScaleTooLarge { r: u32, detail: String },
    #[error("checkpoint r = {0} has no recorded count")]
    MissingCheckpoint(u32),
    #[error("fewer than two entries in the requested range")]
    InsufficientData,
    #[error("entry at r = {0} is saturated")]
    SaturatedData(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    Exact,
    Sampled,
    /// Sampled with fewer than 100 samples per occupied cell.
    Saturated,
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountMode::Exact => "exact",
            CountMode::Sampled => "sampled",
            CountMode::Saturated => "saturated",
        })
    }
}

impl std::str::FromStr for CountMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(CountMode::Exact),
            "sampled" => Ok(CountMode::Sampled),
            "saturated" => Ok(CountMode::Saturated),
            _ => Err(format!("unknown count mode {s:?}")),
        }
    }
}

/// `log2` of a big count, accurate to f64 precision.
pub fn log2_big(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        n.to_f64().map(f64::log2).unwrap_or(f64::NEG_INFINITY)
    } else {
        let drop = bits - 64;
        (n >> drop as usize).to_f64().unwrap().log2() + drop as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxCount {
    pub r: u32,
    pub count: BigUint,
    pub mode: CountMode,
}

impl BoxCount {
    pub fn exact(r: u32, count: BigUint) -> Self {
        BoxCount {
            r,
            count,
            mode: CountMode::Exact,
        }
    }

    /// A count of `count` cells from `samples` points, flagged saturated below 100 samples per cell.
    pub fn sampled(r: u32, count: usize, samples: usize) -> Self {
        let mode = if (samples as u128) < 100 * count as u128 {
            CountMode::Saturated
        } else {
            CountMode::Sampled
        };
        BoxCount {
            r,
            count: BigUint::from(count),
            mode,
        }
    }

    pub fn log2_count(&self) -> f64 {
        log2_big(&self.count)
    }
}

/// Counts at several scales; `ambient` is `d` for sets and 1 for distances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxCountSeries {
    pub ambient: usize,
    entries: Vec<BoxCount>,
}

impl BoxCountSeries {
    pub fn new(ambient: usize) -> Self {
        BoxCountSeries {
            ambient,
            entries: Vec::new(),
        }
    }

    /// Inserts or replaces the entry at `entry.r`, keeping entries sorted.
    pub fn push(&mut self, entry: BoxCount) {
        match self.entries.binary_search_by_key(&entry.r, |e| e.r) {
            Ok(i) => self.entries[i] = entry,
            Err(i) => self.entries.insert(i, entry),
        }
    }

    pub fn entries(&self) -> &[BoxCount] {
        &self.entries
    }

    pub fn get(&self, r: u32) -> Option<&BoxCount> {
        self.entries
            .binary_search_by_key(&r, |e| e.r)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Number of distinct level-`r` cells occupied by `points`.
pub fn count_points(points: &[SamplePoint], r: u32) -> Result<usize, DimensionError> {
    if let Some(p) = points.iter().find(|p| p.precision() < r) {
        return Err(DyadicError::PrecisionExceeded {
            place: r,
            precision: p.precision(),
        }
        .into());
    }
    let cells: HashSet<Vec<BigUint>> = points
        .iter()
        .map(|p| (0..p.d()).map(|i| p.truncated_mantissa(i, r)).collect())
        .collect();
    Ok(cells.len())
}

/// Number of distinct level-`r` cells `floor(2^r z)` occupied by `values`.
pub fn count_values(values: &[Dyadic], r: u32) -> usize {
    let cells: HashSet<BigInt> = values.iter().map(|v| v.floor_scaled(r)).collect();
    cells.len()
}

/// `t mod 2^-a` in `[0, 2^-b)` for `t = x . v^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabConstraint {
    pub functional: usize,
    pub a: u32,
    pub b: u32,
}

/// The constraint of every block with a nonempty window, with its block index.
pub fn slab_constraints(spec: &FractalSpec) -> Vec<(usize, SlabConstraint)> {
    let sched = spec.schedule();
    (1..=spec.blocks())
        .filter_map(|k| {
            let w = sched.window(k).ok()?;
            (!w.is_empty()).then(|| {
                (
                    k,
                    SlabConstraint {
                        functional: sched.block_functional(k),
                        a: w.lo,
                        b: w.hi,
                    },
                )
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactCount {
    pub count: BigUint,
    /// Cubes examined during subdivision.
    pub examined: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Outside,
    Partial,
    Inside,
}

/// One constraint in integer units `2^-u`, prepared for a fixed target scale.
#[derive(Debug, Clone)]
struct Prepared {
    /// Child offsets `sum_{i in mask} w_i`, indexed by bit mask.
    offsets: Vec<i128>,
    neg: i128,
    pos: i128,
    q: u32,
    u: u32,
    period: i128,
    width: i128,
}

impl Prepared {
    #[inline]
    fn status(&self, base: i128, level: u32) -> Status {
        let shift = self.u - level - self.q;
        let lo = (base + self.neg) << shift;
        let hi = (base + self.pos) << shift;
        let m = lo.rem_euclid(self.period);
        if m + (hi - lo) <= self.width {
            Status::Inside
        } else if m < self.width || lo - m + self.period < hi {
            Status::Partial
        } else {
            Status::Outside
        }
    }
}

/// Exact counter of level-`r` dyadic cubes meeting every slab constraint.
///
/// A cube survives when, for each constraint, the range of `x . v` over the
/// cube meets the slab union. Cubes inside every slab are counted in bulk.
#[derive(Debug, Clone)]
pub struct ExactCounter {
    d: usize,
    constraints: Vec<(Functional, SlabConstraint)>,
}

const FRONTIER_TARGET: usize = 1 << 12;
const FLUSH_EVERY: u64 = 1 << 12;

impl ExactCounter {
    pub fn new(d: usize, constraints: Vec<(Functional, SlabConstraint)>) -> Self {
        ExactCounter { d, constraints }
    }

    pub fn from_spec(spec: &FractalSpec) -> Self {
        let constraints = slab_constraints(spec)
            .into_iter()
            .map(|(k, c)| (spec.block_functional(k).clone(), c))
            .collect();
        ExactCounter::new(spec.d(), constraints)
    }

    fn prepare(&self, r: u32) -> Result<Vec<Prepared>, DimensionError> {
        let too_large = |detail: String| DimensionError::ScaleTooLarge { r, detail };
        if self.d * r as usize > 127 || self.d > 16 {
            return Err(too_large(format!("2^(d r) with d = {} overflows", self.d)));
        }
        let mut out = Vec::new();
        for (f, c) in &self.constraints {
            let q = f.precision();
            let w: Vec<i128> = f
                .integer_coeffs()
                .iter()
                .map(|x| x.to_i128())
                .collect::<Option<_>>()
                .ok_or_else(|| too_large("coefficient does not fit in 128 bits".into()))?;
            let neg: i128 = w.iter().filter(|&&x| x < 0).sum();
            let pos: i128 = w.iter().filter(|&&x| x > 0).sum();
            let mass = (pos - neg) as u128;
            // Every level-r cube already spans a full period: mass 2^-(r+q) >= 2^-a.
            if BigUint::from(mass) << c.a >= BigUint::from(1u8) << (r + q) {
                continue;
            }
            let u = (r + q).max(c.b);
            let mass_bits = 128 - mass.leading_zeros();
            if mass_bits + u - q + 2 > 126 {
                return Err(too_large(format!(
                    "constraint units 2^-{u} overflow 128-bit arithmetic"
                )));
            }
            let period = 1i128 << (u - c.a);
            let offsets = (0..1usize << self.d)
                .map(|mask| {
                    (0..self.d)
                        .filter(|i| mask >> i & 1 == 1)
                        .map(|i| w[i])
                        .sum()
                })
                .collect();
            out.push(Prepared {
                offsets,
                neg,
                pos,
                q,
                u,
                period,
                width: 1i128 << (u - c.b),
            });
        }
        Ok(out)
    }

    /// Exact count of level-`r` cubes, examining at most `budget` cubes.
    pub fn count(&self, r: u32, budget: u64) -> Result<ExactCount, DimensionError> {
        let prepared = self.prepare(r)?;
        let nc = prepared.len();
        let d = self.d as u32;
        let bulk = |level: u32| 1u128 << (d * (r - level));
        let mut examined = 0u64;
        let mut settled = 0u128;
        // Breadth-first until the frontier is wide enough to split across threads.
        let mut level = 0u32;
        let mut frontier: Vec<i128> = vec![0; nc];
        let mut width = 1usize;
        loop {
            let mut next = Vec::new();
            let mut next_width = 0usize;
            let refine = level < r && width < FRONTIER_TARGET;
            for node in 0..width {
                let bases = &frontier[node * nc..(node + 1) * nc];
                examined += 1;
                match combined(&prepared, bases, level) {
                    Status::Outside => {}
                    Status::Inside => settled += bulk(level),
                    Status::Partial if level == r => settled += 1,
                    Status::Partial if refine => {
                        for mask in 0..1usize << d {
                            next.extend(
                                prepared
                                    .iter()
                                    .zip(bases)
                                    .map(|(p, b)| 2 * b + p.offsets[mask]),
                            );
                            next_width += 1;
                        }
                    }
                    Status::Partial => {
                        examined -= 1;
                        next.extend_from_slice(bases);
                        next_width += 1;
                    }
                }
            }
            if !refine {
                frontier = next;
                width = next_width;
                break;
            }
            frontier = next;
            width = next_width;
            level += 1;
            if examined > budget {
                return Err(self.exceeded(r, budget, settled, width as u128 * bulk(level)));
            }
        }
        if width == 0 {
            return finish(settled, examined, r, budget);
        }
        let counter = AtomicU64::new(examined);
        let abort = AtomicBool::new(false);
        let ctx = Dfs {
            prepared: &prepared,
            r,
            d,
            budget,
            counter: &counter,
            abort: &abort,
        };
        let results: Vec<(u128, u64)> = frontier
            .par_chunks(nc)
            .map(|bases| {
                let mut scratch = vec![0i128; nc * (r - level) as usize];
                let mut local = 0u64;
                let n = ctx.visit(level, bases, &mut scratch, &mut local);
                counter.fetch_add(local % FLUSH_EVERY, Ordering::Relaxed);
                (n, local)
            })
            .collect();
        let total_examined = examined + results.iter().map(|x| x.1).sum::<u64>();
        if abort.load(Ordering::Relaxed) || total_examined > budget {
            return Err(self.exceeded(r, budget, settled, width as u128 * bulk(level)));
        }
        let count = settled + results.iter().map(|x| x.0).sum::<u128>();
        finish(count, total_examined, r, budget)
    }

    fn exceeded(&self, r: u32, budget: u64, settled: u128, open: u128) -> DimensionError {
        DimensionError::BudgetExceeded {
            r,
            budget,
            lower: BigUint::from(settled),
            upper: BigUint::from(settled) + BigUint::from(open),
        }
    }
}

fn finish(count: u128, examined: u64, r: u32, budget: u64) -> Result<ExactCount, DimensionError> {
    if examined > budget {
        return Err(DimensionError::BudgetExceeded {
            r,
            budget,
            lower: BigUint::from(count),
            upper: BigUint::from(count),
        });
    }
    Ok(ExactCount {
        count: BigUint::from(count),
        examined,
    })
}

#[inline]
fn combined(prepared: &[Prepared], bases: &[i128], level: u32) -> Status {
    let mut all_inside = true;
    for (p, &b) in prepared.iter().zip(bases) {
        match p.status(b, level) {
            Status::Outside => return Status::Outside,
            Status::Partial => all_inside = false,
            Status::Inside => {}
        }
    }
    if all_inside {
        Status::Inside
    } else {
        Status::Partial
    }
}

struct Dfs<'a> {
    prepared: &'a [Prepared],
    r: u32,
    d: u32,
    budget: u64,
    counter: &'a AtomicU64,
    abort: &'a AtomicBool,
}

impl Dfs<'_> {
    fn visit(&self, level: u32, bases: &[i128], scratch: &mut [i128], local: &mut u64) -> u128 {
        *local += 1;
        if local.is_multiple_of(FLUSH_EVERY) {
            let seen = self.counter.fetch_add(FLUSH_EVERY, Ordering::Relaxed) + FLUSH_EVERY;
            if seen > self.budget {
                self.abort.store(true, Ordering::Relaxed);
            }
        }
        if self.abort.load(Ordering::Relaxed) {
            return 0;
        }
        match combined(self.prepared, bases, level) {
            Status::Outside => 0,
            Status::Inside => 1u128 << (self.d * (self.r - level)),
            Status::Partial if level == self.r => 1,
            Status::Partial => {
                let nc = self.prepared.len();
                let (child, rest) = scratch.split_at_mut(nc);
                let mut total = 0u128;
                for mask in 0..1usize << self.d {
                    for ((slot, p), b) in child.iter_mut().zip(self.prepared).zip(bases) {
                        *slot = 2 * b + p.offsets[mask];
                    }
                    total += self.visit(level + 1, child, rest, local);
                }
                total
            }
        }
    }
}

/// Exact count of level-`r` cubes meeting every constraint of `spec`.
pub fn count_exact(spec: &FractalSpec, r: u32, budget: u64) -> Result<ExactCount, DimensionError> {
    if r > spec.precision() {
        return Err(DimensionError::ScaleTooLarge {
            r,
            detail: format!("beyond the construction precision {}", spec.precision()),
        });
    }
    ExactCounter::from_spec(spec).count(r, budget)
}

/// Closed-form count when every functional is a coordinate projection `e_i`.
///
/// Each constraint then zeroes the digits of one coordinate on its window, so
/// the count factors into `2^(d r - constrained places)`.
pub fn decoupled_product_count(spec: &FractalSpec, r: u32) -> Option<BigUint> {
    let mut zeroed: Vec<HashSet<u32>> = vec![HashSet::new(); spec.d()];
    for (k, c) in slab_constraints(spec) {
        let f = spec.block_functional(k);
        let nonzero: Vec<usize> = (0..f.dim()).filter(|&i| !f.coeffs()[i].is_zero()).collect();
        if nonzero.len() != 1 || f.coeffs()[nonzero[0]] != Dyadic::from_integer(1) {
            return None;
        }
        zeroed[nonzero[0]].extend((c.a + 1..=c.b).filter(|&j| j <= r));
    }
    let lost: usize = zeroed.iter().map(HashSet::len).sum();
    Some(BigUint::from(1u32) << (spec.d() * r as usize - lost))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileBase {
    Set,
    /// Pinned distances achieved by the given functional.
    Distance(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileVariant {
    Ideal,
    CAware,
}

/// Piecewise-linear log-count profile with integer breakpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub variant: ProfileVariant,
    pub base: ProfileBase,
    /// `(r, P(r))`, strictly increasing in `r`, starting at `(0, 0)`.
    pub breakpoints: Vec<(u32, i64)>,
    /// Slope past the last breakpoint.
    pub tail_slope: i64,
}

impl ComplexityProfile {
    fn from_segments(
        variant: ProfileVariant,
        base: ProfileBase,
        tail_slope: i64,
        segments: impl IntoIterator<Item = (u32, i64)>,
    ) -> Self {
        let mut breakpoints = vec![(0u32, 0i64)];
        for (end, slope) in segments {
            let &(r0, p0) = breakpoints.last().unwrap();
            if end <= r0 {
                continue;
            }
            breakpoints.push((end, p0 + slope * i64::from(end - r0)));
        }
        ComplexityProfile {
            variant,
            base,
            breakpoints,
            tail_slope,
        }
    }

    pub fn eval(&self, r: u32) -> i64 {
        let i = self.breakpoints.partition_point(|&(b, _)| b <= r);
        let (r0, p0) = self.breakpoints[i - 1];
        let slope = match self.breakpoints.get(i) {
            Some(&(r1, p1)) => (p1 - p0) / i64::from(r1 - r0),
            None => self.tail_slope,
        };
        p0 + slope * i64::from(r - r0)
    }

    pub fn ratio(&self, r: u32) -> f64 {
        self.eval(r) as f64 / f64::from(r)
    }

    /// Slope of each segment between consecutive breakpoints.
    pub fn slopes(&self) -> Vec<i64> {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / i64::from(w[1].0 - w[0].0))
            .collect()
    }
}

pub fn profile(spec: &FractalSpec, base: ProfileBase, variant: ProfileVariant) -> ComplexityProfile {
    let sched = spec.schedule();
    let (free, reduced) = match base {
        ProfileBase::Set => (spec.d() as i64, spec.d() as i64 - 1),
        ProfileBase::Distance(_) => (1, 0),
    };
    let mut segments = vec![(sched.m(1), free)];
    for k in 1..=spec.blocks() {
        let mnext = sched.m(k + 1);
        let constrained = match base {
            ProfileBase::Set => true,
            ProfileBase::Distance(ell) => sched.block_functional(k) == ell,
        };
        if !constrained {
            segments.push((mnext, free));
            continue;
        }
        match variant {
            ProfileVariant::Ideal => {
                segments.push((sched.n(k), free));
                segments.push((mnext, reduced));
            }
            ProfileVariant::CAware => {
                let w = sched.window(k).expect("block in range");
                if !w.is_empty() {
                    segments.push((w.lo, free));
                    segments.push((w.hi, reduced));
                }
                segments.push((mnext, free));
            }
        }
    }
    ComplexityProfile::from_segments(variant, base, free, segments)
}

pub fn profile_ideal(spec: &FractalSpec, base: ProfileBase) -> ComplexityProfile {
    profile(spec, base, ProfileVariant::Ideal)
}

pub fn profile_c_aware(spec: &FractalSpec, base: ProfileBase) -> ComplexityProfile {
    profile(spec, base, ProfileVariant::CAware)
}

/// `min` over `checkpoints` of `log2(count) / r`.
pub fn dim_lower_estimate(series: &BoxCountSeries, checkpoints: &[u32]) -> Result<f64, DimensionError> {
    let mut best = f64::INFINITY;
    for &r in checkpoints {
        if r == 0 {
            continue;
        }
        let e = series.get(r).ok_or(DimensionError::MissingCheckpoint(r))?;
        best = best.min(e.log2_count() / f64::from(r));
    }
    if best.is_infinite() {
        return Err(DimensionError::InsufficientData);
    }
    Ok(best)
}

/// Set checkpoints `r = m_k`, `k = 1 ..= K+1`.
pub fn set_checkpoints(spec: &FractalSpec) -> Vec<u32> {
    spec.schedule().m_list().to_vec()
}

/// Set checkpoints together with the window ends `m_{k+1} - c`. Default `boxdim` scales.
pub fn set_estimate_checkpoints(spec: &FractalSpec) -> Vec<u32> {
    let sched = spec.schedule();
    let mut out = set_checkpoints(spec);
    out.extend((1..=spec.blocks()).filter_map(|k| sched.m(k + 1).checked_sub(sched.c())));
    out.retain(|&r| r >= 1);
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceCheckpoint {
    pub block: usize,
    /// Scale `m_{k+1} - c`.
    pub r: u32,
    /// `n_k`.
    pub bound: u32,
    /// `2c + ceil(log2 m_{k+1}) + 3`.
    pub slack: u32,
}

impl DistanceCheckpoint {
    pub fn limit(&self) -> u32 {
        self.bound + self.slack
    }
}

fn ceil_log2(n: u32) -> u32 {
    if n <= 1 {
        0
    } else {
        32 - (n - 1).leading_zeros()
    }
}

pub fn distance_checkpoints(spec: &FractalSpec, ell: usize) -> Vec<DistanceCheckpoint> {
    let sched = spec.schedule();
    let c = sched.c();
    sched
        .blocks_for(ell)
        .map(|k| {
            let mnext = sched.m(k + 1);
            DistanceCheckpoint {
                block: k,
                r: mnext.saturating_sub(c),
                bound: sched.n(k),
                slack: 2 * c + ceil_log2(mnext) + 3,
            }
        })
        .collect()
}

/// Least-squares slope of `log2(count)` against `r` over `[r_lo, r_hi]`.
pub fn slope(series: &BoxCountSeries, r_lo: u32, r_hi: u32) -> Result<f64, DimensionError> {
    let pts: Vec<&BoxCount> = series
        .entries()
        .iter()
        .filter(|e| (r_lo..=r_hi).contains(&e.r))
        .collect();
    if let Some(e) = pts.iter().find(|e| e.mode == CountMode::Saturated) {
        return Err(DimensionError::SaturatedData(e.r));
    }
    if pts.len() < 2 {
        return Err(DimensionError::InsufficientData);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|e| f64::from(e.r)).sum::<f64>() / n;
    let my = pts.iter().map(|e| e.log2_count()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|e| (f64::from(e.r) - mx) * (e.log2_count() - my)).sum();
    let sxx: f64 = pts.iter().map(|e| (f64::from(e.r) - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalconerReport {
    pub dim_set: f64,
    pub dim_distance: f64,
    pub d: usize,
    pub tol: f64,
    /// `dim_set - (d - 1) - tol`.
    pub required: f64,
    pub pass: bool,
}

pub fn falconer_check(dim_set: f64, dim_distance: f64, d: usize, tol: f64) -> FalconerReport {
    let required = dim_set - (d as f64 - 1.0) - tol;
    FalconerReport {
        dim_set,
        dim_distance,
        d,
        tol,
        required,
        pass: dim_distance >= required,
    }
}

/// Set series: exact counts while the budget allows, sampled counts after.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetSeries {
    pub series: BoxCountSeries,
    /// Largest scale counted exactly.
    pub exact_max: Option<u32>,
    /// The error that ended exact counting, if any.
    pub stopped_by: Option<DimensionError>,
}

/// Counts `E` at each of `scales` (ascending), switching to `samples` once exact counting stops.
pub fn set_series(
    spec: &FractalSpec,
    scales: &[u32],
    budget: u64,
    samples: &[SamplePoint],
) -> Result<SetSeries, DimensionError> {
    let mut scales = scales.to_vec();
    scales.sort_unstable();
    scales.dedup();
    let mut out = SetSeries {
        series: BoxCountSeries::new(spec.d()),
        exact_max: None,
        stopped_by: None,
    };
    for r in scales {
        if out.stopped_by.is_none() {
            match count_exact(spec, r, budget) {
                Ok(c) => {
                    out.series.push(BoxCount::exact(r, c.count));
                    out.exact_max = Some(r);
                    continue;
                }
                Err(e @ (DimensionError::BudgetExceeded { .. } | DimensionError::ScaleTooLarge { .. })) => {
                    out.stopped_by = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        if samples.is_empty() {
            continue;
        }
        let n = count_points(samples, r)?;
        out.series.push(BoxCount::sampled(r, n, samples.len()));
    }
    Ok(out)
}

/// Sampled count series of nonzero distance values at each of `scales`.
pub fn value_series(values: &[Dyadic], scales: &[u32]) -> BoxCountSeries {
    let nonzero: Vec<Dyadic> = values.iter().filter(|v| !v.is_zero()).cloned().collect();
    let mut series = BoxCountSeries::new(1);
    for &r in scales {
        series.push(BoxCount::sampled(r, count_values(&nonzero, r), nonzero.len()));
    }
    series
}

/// Measured distance count at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub functional: usize,
    pub checkpoint: DistanceCheckpoint,
    pub count: usize,
    pub log2_count: f64,
    pub pass: bool,
}

/// Per-functional distance counts at every checkpoint with `r <= r_max`.
pub fn distance_checkpoint_table(
    spec: &FractalSpec,
    groups: &std::collections::BTreeMap<usize, Vec<Dyadic>>,
    r_max: u32,
) -> Vec<CheckpointRow> {
    let empty = Vec::new();
    (1..=spec.norm().len())
        .flat_map(|ell| {
            let values: Vec<Dyadic> = groups
                .get(&ell)
                .unwrap_or(&empty)
                .iter()
                .filter(|v| !v.is_zero())
                .cloned()
                .collect();
            distance_checkpoints(spec, ell)
                .into_iter()
                .filter(move |c| c.r <= r_max && c.r >= 1)
                .map(move |c| {
                    let count = count_values(&values, c.r);
                    let log2_count = if count == 0 { 0.0 } else { (count as f64).log2() };
                    CheckpointRow {
                        functional: ell,
                        checkpoint: c,
                        count,
                        log2_count,
                        pass: log2_count <= f64::from(c.limit()),
                    }
                })
        })
        .collect()
}

/// Distance dimension estimate: the best functional's minimum checkpoint ratio.
///
/// Each group is a subset of the distance set, so the largest per-group
/// estimate is a lower estimate for the whole set.
pub fn distance_estimate(rows: &[CheckpointRow]) -> Option<f64> {
    let mut per: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for row in rows {
        let ratio = row.log2_count / f64::from(row.checkpoint.r);
        per.entry(row.functional)
            .and_modify(|v| *v = v.min(ratio))
            .or_insert(ratio);
    }
    per.values().copied().fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// Set dimension estimate over the exact entries at `r = m_k`.
pub fn set_estimate(spec: &FractalSpec, set: &SetSeries) -> Result<f64, DimensionError> {
    let exact_max = set.exact_max.ok_or(DimensionError::InsufficientData)?;
    let checkpoints: Vec<u32> = set_checkpoints(spec)
        .into_iter()
        .filter(|&r| r <= exact_max)
        .collect();
    dim_lower_estimate(&set.series, &checkpoints)
}
