//! Two-step digit construction of points in `E = intersection of F_k`.
//!
//! For each block `k` (functional `l = ((k-1) mod N) + 1`, pivot coordinate
//! `i_l`):
//!
//! 1. every coordinate except the pivot gets seeded random digits in places
//!    `m_k+1 ..= m_{k+1}`; the pivot gets random digits in `m_k+1 ..= n_k`;
//! 2. the pivot digits in `n_k+1 ..= m_{k+1}` are solved so that the truncated
//!    dot product `T = sum_i 2^-M floor(2^M x_i) v_i` (with `M = m_{k+1}`)
//!    has zeros on the window `(n_k+c, M-c]`, a one at `M-c+1` and a zero at
//!    `M-c+2`.
//!
//! The guard digits keep `T` a safe distance from the window boundary, so the
//! untruncated `x . v` has the same floors on the window and the point lies
//! in `F_k`.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::{Dyadic, DyadicError};
use crate::norms::{Functional, PolyhedralNorm};
use crate::rational::Rational;
use crate::schedule::{alpha_for, BlockSchedule, ScheduleError, ScheduleRule, Window};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstructError {
    #[error("invalid fractal spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("no pivot digits satisfy the block {k} pattern: {detail}")]
    NoSolution { k: usize, detail: String },
    #[error(transparent)]
    Precision(#[from] DyadicError),
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("constructed point fails {check} at block {k}")]
    VerificationFailed { k: usize, check: &'static str },
}

/// Everything that determines a constructed set and its sample points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractalSpec {
    s: Rational,
    norm: PolyhedralNorm,
    schedule: BlockSchedule,
    seed: u64,
}

impl FractalSpec {
    pub fn new(
        s: Rational,
        norm: PolyhedralNorm,
        schedule: BlockSchedule,
        seed: u64,
    ) -> Result<Self, ConstructError> {
        let alpha = alpha_for(s, norm.d())?;
        if schedule.alpha() != alpha {
            return Err(ConstructError::InvalidSpec(format!(
                "schedule alpha {} differs from s - (d-1) = {alpha}",
                schedule.alpha()
            )));
        }
        if !norm.satisfies_margin(schedule.c()) {
            return Err(ConstructError::InvalidSpec(format!(
                "c = {} is below the norm's minimum {}",
                schedule.c(),
                norm.min_c()
            )));
        }
        if schedule.n_functionals() != norm.len() {
            return Err(ConstructError::InvalidSpec(format!(
                "schedule cycles {} functionals, norm has {}",
                schedule.n_functionals(),
                norm.len()
            )));
        }
        Ok(FractalSpec {
            s,
            norm,
            schedule,
            seed,
        })
    }

    /// Generates the schedule for `s` and `norm`; `c = None` uses the norm's minimum.
    pub fn generate(
        s: Rational,
        norm: PolyhedralNorm,
        c: Option<u32>,
        rule: &ScheduleRule,
        seed: u64,
    ) -> Result<Self, ConstructError> {
        let alpha = alpha_for(s, norm.d())?;
        let c = c.unwrap_or_else(|| norm.min_c());
        let schedule = BlockSchedule::generate(alpha, c, norm.len(), rule)?;
        FractalSpec::new(s, norm, schedule, seed)
    }

    pub fn d(&self) -> usize {
        self.norm.d()
    }

    pub fn s(&self) -> Rational {
        self.s
    }

    pub fn alpha(&self) -> Rational {
        self.schedule.alpha()
    }

    pub fn norm(&self) -> &PolyhedralNorm {
        &self.norm
    }

    pub fn schedule(&self) -> &BlockSchedule {
        &self.schedule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> FractalSpec {
        FractalSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn blocks(&self) -> usize {
        self.schedule.blocks()
    }

    /// Digit precision of constructed points, `m_{K+1}`.
    pub fn precision(&self) -> u32 {
        self.schedule.precision()
    }

    /// Functional used by block `k`.
    pub fn block_functional(&self, k: usize) -> &Functional {
        self.norm.functional(self.schedule.block_functional(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pinned,
    Sample,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::Pinned => "x",
            Role::Sample => "y",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Role> {
        match tag {
            "x" => Some(Role::Pinned),
            "y" => Some(Role::Sample),
            _ => None,
        }
    }
}

/// A point of `[0,1)^d` stored as `d` coordinates of `precision` binary digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplePoint {
    /// `floor(2^precision * x_i)`; place `j` is bit `precision - j`.
    coords: Vec<BigUint>,
    precision: u32,
    role: Role,
}

impl SamplePoint {
    /// Fails if a mantissa does not fit in `precision` bits.
    pub fn from_mantissas(coords: Vec<BigUint>, precision: u32, role: Role) -> Option<Self> {
        if coords.iter().any(|c| c.bits() > precision as u64) {
            return None;
        }
        Some(SamplePoint {
            coords,
            precision,
            role,
        })
    }

    pub fn zero(d: usize, precision: u32, role: Role) -> Self {
        SamplePoint {
            coords: vec![BigUint::zero(); d],
            precision,
            role,
        }
    }

    pub fn d(&self) -> usize {
        self.coords.len()
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn mantissa(&self, i: usize) -> &BigUint {
        &self.coords[i]
    }

    pub fn mantissas(&self) -> &[BigUint] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Dyadic {
        Dyadic::new(BigInt::from(self.coords[i].clone()), self.precision)
    }

    pub fn coords(&self) -> Vec<Dyadic> {
        (0..self.d()).map(|i| self.coord(i)).collect()
    }

    /// Digit of coordinate `i` in place `j` (1-based).
    pub fn digit(&self, i: usize, j: u32) -> Result<bool, DyadicError> {
        if j == 0 || j > self.precision {
            return Err(DyadicError::PrecisionExceeded {
                place: j,
                precision: self.precision,
            });
        }
        Ok(self.coords[i].bit((self.precision - j) as u64))
    }

    pub fn flip_digit(&mut self, i: usize, j: u32) {
        let bit = (self.precision - j) as u64;
        let current = self.coords[i].bit(bit);
        self.coords[i].set_bit(bit, !current);
    }

    /// `floor(2^p * x_i)` for `p <= precision`.
    pub fn truncated_mantissa(&self, i: usize, p: u32) -> BigUint {
        &self.coords[i] >> (self.precision - p.min(self.precision)) as usize
    }

    /// `sum_i 2^-p floor(2^p x_i) v_i`, exact.
    pub fn truncated_dot(&self, f: &Functional, p: u32) -> Dyadic {
        let p = p.min(self.precision);
        f.coeffs()
            .iter()
            .enumerate()
            .map(|(i, v)| v * &Dyadic::new(BigInt::from(self.truncated_mantissa(i, p)), p))
            .sum()
    }

    /// `x . v` at the full stored precision.
    pub fn dot(&self, f: &Functional) -> Dyadic {
        self.truncated_dot(f, self.precision)
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }
}

/// Seeded, independent random streams for one point.
///
/// Each `(coordinate, block)` pair gets its own ChaCha8 stream keyed by
/// `(seed, role, index, coordinate, block)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointStreams {
    pub seed: u64,
    pub role: Role,
    pub index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PointStreams {
    pub fn new(seed: u64, role: Role, index: u64) -> Self {
        PointStreams { seed, role, index }
    }

    pub fn pinned(seed: u64) -> Self {
        PointStreams::new(seed, Role::Pinned, 0)
    }

    pub fn sample(seed: u64, index: u64) -> Self {
        PointStreams::new(seed, Role::Sample, index)
    }

    /// Stream for `coord` in `block` (block 0 holds the initial digits).
    pub fn rng(&self, coord: usize, block: usize) -> ChaCha8Rng {
        let role = match self.role {
            Role::Pinned => 0x7069_6e6e,
            Role::Sample => 0x7361_6d70,
        };
        let mut key = [0u8; 32];
        let mut h = splitmix64(self.seed);
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([role, self.index, coord as u64, block as u64])
        {
            h = splitmix64(h ^ word);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// `len` random bits from `rng` as an integer (first draw is most significant).
fn random_bits(rng: &mut ChaCha8Rng, len: u32) -> BigUint {
    if len == 0 {
        return BigUint::zero();
    }
    let words = len.div_ceil(32) as usize;
    let digits: Vec<u32> = (0..words).map(|_| rng.next_u32()).collect();
    let v = BigUint::from_slice(&digits);
    v >> (words as u32 * 32 - len) as usize
}

/// The pivot digits chosen for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotSolution {
    /// Pivot digits in places `n_k+1 ..= m_{k+1}`, place `m_{k+1}` least significant.
    pub digits: BigUint,
    pub places: std::ops::RangeInclusive<u32>,
}

/// Partially constructed point.
#[derive(Debug, Clone)]
pub struct PointBuilder<'a> {
    spec: &'a FractalSpec,
    streams: PointStreams,
    point: SamplePoint,
}

impl<'a> PointBuilder<'a> {
    pub fn new(spec: &'a FractalSpec, streams: PointStreams) -> Self {
        PointBuilder {
            spec,
            streams,
            point: SamplePoint::zero(spec.d(), spec.precision(), streams.role),
        }
    }

    pub fn point(&self) -> &SamplePoint {
        &self.point
    }

    /// Direct access for synthetic test states.
    pub fn point_mut(&mut self) -> &mut SamplePoint {
        &mut self.point
    }

    pub fn finish(self) -> SamplePoint {
        self.point
    }

    fn install(&mut self, coord: usize, hi: u32, bits: &BigUint) {
        let shift = (self.point.precision - hi) as usize;
        self.point.coords[coord] |= bits << shift;
    }

    fn fill(&mut self, coord: usize, block: usize, lo: u32, hi: u32) {
        if hi <= lo {
            return;
        }
        let mut rng = self.streams.rng(coord, block);
        let bits = random_bits(&mut rng, hi - lo);
        self.install(coord, hi, &bits);
    }

    /// Random digits in places `1..=m_1` of every coordinate.
    pub fn fill_initial(&mut self) {
        let m1 = self.spec.schedule().m(1);
        for i in 0..self.spec.d() {
            self.fill(i, 0, 0, m1);
        }
    }

    /// Step 1 of block `k`: random digits everywhere except the pivot's solved tail.
    pub fn fill_random_block(&mut self, k: usize) {
        let sched = self.spec.schedule();
        let (mk, mnext, nk) = (sched.m(k), sched.m(k + 1), sched.n(k));
        let pivot = self.spec.block_functional(k).pivot();
        for i in 0..self.spec.d() {
            let hi = if i == pivot { nk } else { mnext };
            self.fill(i, k, mk, hi);
        }
    }

    /// Step 2 of block `k`: choose the pivot digits in places `n_k+1 ..= m_{k+1}`.
    ///
    /// With the unknown digits at zero, the admissible truncated sums form the
    /// progression `S + u * v_pivot * 2^-M`. The target set is periodic with
    /// period `2^-(n_k+c)`; its width exceeds the progression gap, so the first
    /// target interval ahead of `S` contains a progression point. The smallest
    /// such `u` is returned and installed.
    pub fn solve_pivot(&mut self, k: usize) -> Result<PivotSolution, ConstructError> {
        let sched = self.spec.schedule();
        let (nk, mnext, c) = (sched.n(k), sched.m(k + 1), sched.c());
        let window = sched.window(k)?;
        let f = self.spec.block_functional(k);
        let pivot = f.pivot();
        let places = nk + 1..=mnext;
        if window.is_empty() {
            return Err(ConstructError::NoSolution {
                k,
                detail: format!("empty window {window:?}"),
            });
        }
        let q = f.precision();
        let w = f.integer_coeffs();
        // Units of 2^-(M+q).
        let s: BigInt = w
            .iter()
            .enumerate()
            .map(|(i, wi)| wi * BigInt::from(self.point.truncated_mantissa(i, mnext)))
            .sum();
        let gap = w[pivot].clone();
        let unit = |e: u32| BigInt::one() << e as usize;
        let period = unit(mnext + q - (nk + c));
        let target_lo = unit(q + c - 1);
        let width = unit(q + c - 2);
        if gap.sign() != Sign::Plus || gap >= width {
            return Err(ConstructError::NoSolution {
                k,
                detail: "pivot coefficient violates the margin condition".into(),
            });
        }
        let base = &s - s.mod_floor(&period);
        let limit = BigUint::one() << (mnext - nk) as usize;
        let mut found = None;
        for t in 0..4u32 {
            let lo = &base + &period * t + &target_lo;
            let hi = &lo + &width;
            if hi <= s {
                continue;
            }
            let need = if lo > s { &lo - &s } else { BigInt::zero() };
            let u = need.div_ceil(&gap);
            if &s + &u * &gap < hi {
                found = Some(u);
                break;
            }
        }
        let u = found
            .and_then(|u| u.to_biguint())
            .filter(|u| *u < limit)
            .ok_or_else(|| ConstructError::NoSolution {
                k,
                detail: "progression does not reach the target".into(),
            })?;
        self.install(pivot, mnext, &u);
        let t = self.point.truncated_dot(f, mnext);
        if !zo_pattern_holds(&t, window, mnext, c)? {
            return Err(ConstructError::NoSolution {
                k,
                detail: "post-check of the digit pattern failed".into(),
            });
        }
        Ok(PivotSolution { digits: u, places })
    }
}

/// Zeros on `window`, then a one at `M-c+1` and a zero at `M-c+2`.
pub fn zo_pattern_holds(t: &Dyadic, window: Window, m_next: u32, c: u32) -> Result<bool, DyadicError> {
    for j in window.places() {
        if t.bit(j)? {
            return Ok(false);
        }
    }
    let guard = m_next + 1 - c;
    Ok(t.bit(guard)? && !t.bit(guard + 1)?)
}

/// Builds one point of `E` from its streams and verifies every block.
pub fn build_point(spec: &FractalSpec, streams: PointStreams) -> Result<SamplePoint, ConstructError> {
    let mut b = PointBuilder::new(spec, streams);
    b.fill_initial();
    for k in 1..=spec.blocks() {
        b.fill_random_block(k);
        if !spec.schedule().is_degenerate() {
            b.solve_pivot(k)?;
        }
    }
    let point = b.finish();
    for k in 1..=spec.blocks() {
        if !membership(&point, spec, k)? {
            return Err(ConstructError::VerificationFailed { k, check: "membership" });
        }
        if !verify_carry(&point, spec, k)? {
            return Err(ConstructError::VerificationFailed { k, check: "carry" });
        }
    }
    Ok(point)
}

/// `count` sample points (role `y`, stream indices `0..count`), in index order.
pub fn sample_set(spec: &FractalSpec, count: usize) -> Result<Vec<SamplePoint>, ConstructError> {
    if count == 0 {
        return Err(ConstructError::EmptySample);
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| build_point(spec, PointStreams::sample(spec.seed(), i)))
        .collect()
}

pub fn pinned_point(spec: &FractalSpec) -> Result<SamplePoint, ConstructError> {
    build_point(spec, PointStreams::pinned(spec.seed()))
}

fn check_block_precision(pt: &SamplePoint, spec: &FractalSpec, k: usize) -> Result<Window, ConstructError> {
    let window = spec.schedule().window(k)?;
    let needed = spec.schedule().m(k + 1);
    if needed > pt.precision() {
        return Err(DyadicError::PrecisionExceeded {
            place: needed,
            precision: pt.precision(),
        }
        .into());
    }
    Ok(window)
}

/// First window place of block `k` where a digit of `x . v^l` is 1.
pub fn first_membership_violation(
    pt: &SamplePoint,
    spec: &FractalSpec,
    k: usize,
) -> Result<Option<u32>, ConstructError> {
    let window = check_block_precision(pt, spec, k)?;
    let dot = pt.dot(spec.block_functional(k));
    for j in window.places() {
        if dot.bit(j)? {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

/// Whether every window digit of `x . v^l` is zero for block `k`.
pub fn membership(pt: &SamplePoint, spec: &FractalSpec, k: usize) -> Result<bool, ConstructError> {
    first_membership_violation(pt, spec, k).map(|v| v.is_none())
}

/// First window place where the truncated and full dot products have different floors.
pub fn first_carry_violation(
    pt: &SamplePoint,
    spec: &FractalSpec,
    k: usize,
) -> Result<Option<u32>, ConstructError> {
    let window = check_block_precision(pt, spec, k)?;
    let f = spec.block_functional(k);
    let mnext = spec.schedule().m(k + 1);
    let truncated = pt.truncated_dot(f, mnext);
    let full = pt.dot(f);
    Ok(window
        .places()
        .find(|&j| truncated.floor_scaled(j) != full.floor_scaled(j)))
}

pub fn verify_carry(pt: &SamplePoint, spec: &FractalSpec, k: usize) -> Result<bool, ConstructError> {
    first_carry_violation(pt, spec, k).map(|v| v.is_none())
}

/// Whether the truncated dot product of block `k` carries the full guard pattern.
pub fn verify_pattern(pt: &SamplePoint, spec: &FractalSpec, k: usize) -> Result<bool, ConstructError> {
    let window = check_block_precision(pt, spec, k)?;
    if window.is_empty() {
        return Ok(true);
    }
    let mnext = spec.schedule().m(k + 1);
    let t = pt.truncated_dot(spec.block_functional(k), mnext);
    Ok(zo_pattern_holds(&t, window, mnext, spec.schedule().c())?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: usize,
    pub membership: bool,
    pub carry: bool,
    pub pattern: bool,
    /// First failing place, if any.
    pub place: Option<u32>,
}

impl BlockCheck {
    pub fn passed(&self) -> bool {
        self.membership && self.carry && self.pattern
    }
}

/// Membership, carry and pattern checks for every block of one point.
pub fn check_point(pt: &SamplePoint, spec: &FractalSpec) -> Result<Vec<BlockCheck>, ConstructError> {
    (1..=spec.blocks())
        .map(|k| {
            let member = first_membership_violation(pt, spec, k)?;
            let carry = first_carry_violation(pt, spec, k)?;
            let pattern = verify_pattern(pt, spec, k)?;
            let place = member.or(carry).or_else(|| {
                (!pattern).then(|| spec.schedule().m(k + 1) + 1 - spec.schedule().c())
            });
            Ok(BlockCheck {
                block: k,
                membership: member.is_none(),
                carry: carry.is_none(),
                pattern,
                place,
            })
        })
        .collect()
}

/// `x . v` as a float, for diagnostics only.
pub fn dot_f64(pt: &SamplePoint, f: &Functional) -> f64 {
    pt.dot(f).to_f64()
}
