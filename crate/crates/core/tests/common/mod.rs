#![allow(dead_code)]

use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polyfrac::construct::{ConstructError, FractalSpec, PointBuilder, PointStreams};
use polyfrac::dimension::{ExactCounter, SlabConstraint};
use polyfrac::dyadic::Dyadic;
use polyfrac::norms::{Functional, PolyhedralNorm, Preset};
use polyfrac::rational::Rational;
use polyfrac::schedule::ScheduleRule;

pub const DESK_M: [u32; 4] = [1, 16, 32, 96];

pub fn s_values() -> Vec<Rational> {
    vec![
        Rational::new(1, 1),
        Rational::new(5, 4),
        Rational::new(3, 2),
        Rational::new(7, 4),
        Rational::new(2, 1),
    ]
}

pub fn desk_spec(preset: Preset, s: Rational, seed: u64) -> FractalSpec {
    let norm = PolyhedralNorm::preset(preset, 2).unwrap();
    let rule = ScheduleRule::Explicit {
        m: DESK_M.to_vec(),
        widen: true,
    };
    FractalSpec::generate(s, norm, None, &rule, seed).unwrap()
}

/// Every (norm, s) pair of the d = 2 desk grid, seed 0.
pub fn desk_grid() -> Vec<(Preset, FractalSpec)> {
    [Preset::Linf, Preset::L1]
        .into_iter()
        .flat_map(|p| s_values().into_iter().map(move |s| (p, desk_spec(p, s, 0))))
        .collect()
}

pub fn to_ratio(x: &Dyadic) -> Ratio<BigInt> {
    Ratio::new(x.mantissa().clone(), BigInt::one() << x.precision() as usize)
}

/// Random norm in dimension `d` with small dyadic coefficients; `None` when degenerate.
pub fn random_norm(rng: &mut impl Rng, d: usize) -> Option<PolyhedralNorm> {
    let n = rng.random_range(d..=d + 2);
    let rows: Vec<Vec<(i64, u32)>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| (rng.random_range(-7..=7), rng.random_range(0..=2)))
                .collect()
        })
        .collect();
    PolyhedralNorm::custom(&rows).ok()
}

/// A random valid one- or two-block spec; `None` when the draw is rejected.
pub fn random_spec(rng: &mut impl Rng, max_len: u32) -> Option<FractalSpec> {
    let d = rng.random_range(1..=3usize);
    let norm = if rng.random_bool(0.5) {
        let preset = if rng.random_bool(0.5) { Preset::Linf } else { Preset::L1 };
        PolyhedralNorm::preset(preset, d).ok()?
    } else {
        random_norm(rng, d)?
    };
    let c = norm.min_c() + rng.random_range(0..=1);
    let alpha = Rational::new(rng.random_range(0..8), 8);
    let s = alpha + Rational::from_integer(d as i64 - 1);
    let m2 = rng.random_range(2..=max_len);
    let mut m = vec![1, m2];
    if rng.random_bool(0.3) {
        m.push(m2 + rng.random_range(1..=max_len));
    }
    let rule = ScheduleRule::Explicit { m, widen: true };
    FractalSpec::generate(s, norm, Some(c), &rule, rng.random()).ok()
}

/// Builder with blocks `1..k` solved and block `k` randomly filled.
pub fn builder_at(spec: &FractalSpec, seed: u64, k: usize) -> Result<PointBuilder<'_>, ConstructError> {
    let mut b = PointBuilder::new(spec, PointStreams::sample(seed, 0));
    b.fill_initial();
    for j in 1..k {
        b.fill_random_block(j);
        b.solve_pivot(j)?;
    }
    b.fill_random_block(k);
    Ok(b)
}

/// Smallest pivot bit-string satisfying the digit pattern, by trying all of them.
pub fn exhaustive_pivot(b: &PointBuilder<'_>, spec: &FractalSpec, k: usize) -> Option<BigUint> {
    let sched = spec.schedule();
    let (nk, mnext, c) = (sched.n(k), sched.m(k + 1), sched.c());
    let window = sched.window(k).ok()?;
    let f = spec.block_functional(k);
    let len = mnext - nk;
    (0u64..1 << len).find_map(|u| {
        let mut p = b.point().clone();
        for bit in 0..len {
            if u >> bit & 1 == 1 {
                p.flip_digit(f.pivot(), mnext - bit);
            }
        }
        let t = p.truncated_dot(f, mnext);
        polyfrac::construct::zo_pattern_holds(&t, window, mnext, c)
            .unwrap()
            .then(|| BigUint::from(u))
    })
}

/// Level-`r` cells of `[0,1)` whose image under `v` meets every slab union, by enumeration.
pub fn brute_slab_count_d1(v: &Dyadic, constraints: &[SlabConstraint], r: u32) -> u64 {
    let q = v.precision();
    let w = v.mantissa().clone();
    let fine = constraints.iter().map(|c| c.b).max().unwrap_or(0).max(r + q);
    let scale = BigInt::one() << (fine - r - q) as usize;
    (0u64..1 << r)
        .filter(|&i| {
            let a = &w * BigInt::from(i) * &scale;
            let b = &w * BigInt::from(i + 1) * &scale;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            constraints.iter().all(|c| {
                let period = BigInt::one() << (fine - c.a) as usize;
                let width = BigInt::one() << (fine - c.b) as usize;
                let mut t = lo.clone();
                while t < hi {
                    let m = num_integer::Integer::mod_floor(&t, &period);
                    if m < width {
                        return true;
                    }
                    t += &period - &m;
                }
                false
            })
        })
        .count() as u64
}

pub fn d1_counter(v: &Dyadic, constraints: &[SlabConstraint]) -> ExactCounter {
    let f = Functional::new(vec![v.clone()]).unwrap();
    ExactCounter::new(1, constraints.iter().map(|c| (f.clone(), *c)).collect())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
