//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use num_bigint::BigUint;
use num_integer::Integer;
use rand::Rng;

use polyfrac::construct::{
    check_point, membership, pinned_point, sample_set, ConstructError, FractalSpec, PointBuilder, PointStreams,
};
use polyfrac::dimension::{
    count_exact, decoupled_product_count, distance_checkpoint_table, distance_estimate, falconer_check, log2_big,
    profile_c_aware, profile_ideal, set_checkpoints, set_estimate, set_series, ProfileBase, SlabConstraint,
};
use polyfrac::distset::{collapse_check, group_by_functional, pinned};
use polyfrac::dyadic::Dyadic;
use polyfrac::io::{parse_points, write_points};
use polyfrac::norms::{PolyhedralNorm, Preset};
use polyfrac::rational::{format_rational, Rational};
use polyfrac::schedule::{BlockSchedule, ScheduleRule};

const SEEDS: u64 = 10;
const SAMPLES: usize = 1000;
const DISTANCE_SAMPLES: usize = 100_000;
const BUDGET: u64 = 100_000_000;
const TOL: f64 = 0.15;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

fn name(preset: Preset, s: Rational) -> String {
    let p = match preset {
        Preset::Linf => "linf",
        Preset::L1 => "l1",
    };
    format!("{p} s={}", format_rational(&s))
}

fn grid() -> Vec<(Preset, Rational)> {
    [Preset::Linf, Preset::L1]
        .into_iter()
        .flat_map(|p| s_values().into_iter().map(move |s| (p, s)))
        .collect()
}

/// Criteria 1-3 share the constructed points.
fn construction_criteria() -> (Outcome, Outcome, Outcome) {
    let (mut points, mut block_checks, mut pattern_places) = (0usize, 0usize, 0usize);
    let (mut c1_fail, mut carry_fail, mut collapse_fail, mut pairs) = (Vec::new(), 0usize, Vec::new(), 0usize);
    for (preset, s) in grid() {
        for seed in 0..SEEDS {
            let spec = desk_spec(preset, s, seed);
            let x = pinned_point(&spec).unwrap();
            let ys = sample_set(&spec, SAMPLES).unwrap();
            for (i, p) in std::iter::once(&x).chain(&ys).enumerate() {
                points += 1;
                for c in check_point(p, &spec).unwrap() {
                    block_checks += 1;
                    let w = spec.schedule().window(c.block).unwrap();
                    pattern_places += w.len() as usize + 2 * usize::from(!w.is_empty());
                    carry_fail += usize::from(!c.carry);
                    if !c.passed() && c1_fail.len() < 5 {
                        c1_fail.push(format!("{} seed {seed} point {i}: {c:?}", name(preset, s)));
                    }
                }
            }
            for (i, y) in ys.iter().enumerate() {
                pairs += 1;
                let report = collapse_check(&x, y, &spec).unwrap();
                if let Some(b) = report.first_failure() {
                    if collapse_fail.len() < 5 {
                        collapse_fail.push(format!("{} seed {seed} sample {i}: {b:?}", name(preset, s)));
                    }
                }
            }
        }
    }
    let mut c1 = Outcome::new(
        c1_fail.is_empty(),
        format!("{points} points, {block_checks} block checks, {pattern_places} pattern places"),
    );
    c1.details = c1_fail;

    let (synthetic, no_solution) = synthetic_blocks(100_000);
    let c2 = Outcome::new(
        carry_fail == 0 && no_solution.is_empty(),
        format!(
            "carry failures {carry_fail} of {block_checks}; {synthetic} synthetic blocks, {} without solution",
            no_solution.len()
        ),
    );
    let mut c3 = Outcome::new(collapse_fail.is_empty(), format!("{pairs} pinned pairs, shrunk windows constant"));
    c3.details = collapse_fail;
    let mut c2 = c2;
    c2.details = no_solution;
    (c1, c2, c3)
}

fn synthetic_blocks(target: usize) -> (usize, Vec<String>) {
    let mut rng = rng(2);
    let (mut solved, mut failures) = (0usize, Vec::new());
    while solved < target {
        let Some(spec) = random_spec(&mut rng, 64) else { continue };
        if spec.schedule().is_degenerate() {
            continue;
        }
        let mut b = PointBuilder::new(&spec, PointStreams::sample(rng.random(), 0));
        b.fill_initial();
        for k in 1..=spec.blocks() {
            b.fill_random_block(k);
            solved += 1;
            if let Err(e @ ConstructError::NoSolution { .. }) = b.solve_pivot(k) {
                failures.push(format!("{e}: {:?}", spec.schedule()));
                break;
            }
        }
    }
    (solved, failures)
}

fn criterion4() -> Outcome {
    let spec = desk_spec(Preset::Linf, Rational::new(3, 2), 0);
    let ideal = profile_ideal(&spec, ProfileBase::Set);
    let c_aware = profile_c_aware(&spec, ProfileBase::Set);
    let slack = (spec.norm().len() as u32 * 2 * spec.schedule().c() * spec.d() as u32) as f64;
    let mut pass = true;
    let mut details = Vec::new();
    let mut measured = Vec::new();
    for r in [8u32, 12, 16] {
        let exact = count_exact(&spec, r, BUDGET).unwrap().count;
        let l = log2_big(&exact);
        let sandwich = c_aware.eval(r) as f64 <= l && l <= ideal.eval(r) as f64 + slack;
        let product = decoupled_product_count(&spec, r) == Some(exact);
        pass &= sandwich && product;
        measured.push(format!("r={r} log2={l:.0}"));
        if !(sandwich && product) {
            details.push(format!("r={r}: sandwich {sandwich}, product {product}"));
        }
    }
    // The product equals the exact count for this norm (criterion 8), so it extends the trend past r = 16.
    let s = 1.5;
    let ratios: Vec<f64> = set_checkpoints(&spec)
        .into_iter()
        .skip(1)
        .map(|r| log2_big(&decoupled_product_count(&spec, r).unwrap()) / f64::from(r))
        .collect();
    let monotone = ratios.windows(2).all(|w| (w[1] - s).abs() <= (w[0] - s).abs());
    pass &= monotone;
    let at16 = ratios[0];
    let within = (at16 - s).abs() <= TOL;
    if !monotone {
        details.push(format!("ratios at m_k not monotone toward s: {ratios:?}"));
    }
    let mut o = Outcome::new(
        pass,
        format!(
            "{}; ratios at m_k {}; |ratio(16) - s| = {:.4} (within {TOL}: {within}, analytic c-aware value {}/16)",
            measured.join(", "),
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" "),
            (at16 - s).abs(),
            c_aware.eval(16)
        ),
    );
    o.details = details;
    o
}

fn criterion5() -> Outcome {
    let mut rows_checked = 0;
    let mut details = Vec::new();
    for preset in [Preset::Linf, Preset::L1] {
        let spec = desk_spec(preset, Rational::new(3, 2), 0);
        let x = pinned_point(&spec).unwrap();
        let ys = sample_set(&spec, DISTANCE_SAMPLES).unwrap();
        let records = pinned(&x, &ys, spec.norm()).unwrap();
        for row in distance_checkpoint_table(&spec, &group_by_functional(&records), 32) {
            rows_checked += 1;
            let line = format!(
                "{} l={} r={} log2={:.3} limit={}",
                name(preset, spec.s()),
                row.functional,
                row.checkpoint.r,
                row.log2_count,
                row.checkpoint.limit()
            );
            if !row.pass {
                details.push(line);
            }
        }
    }
    let mut o = Outcome::new(
        details.is_empty() && rows_checked > 0,
        format!("{rows_checked} checkpoints with r <= 32 at {DISTANCE_SAMPLES} samples"),
    );
    o.details = details;
    o
}

fn criterion6() -> Outcome {
    let mut failed: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut total = 0;
    let mut alpha_one_rows = 0;
    let mut alpha_one_ok = true;
    for (preset, s) in grid() {
        let base = desk_spec(preset, s, 0);
        let set = set_series(&base, &set_checkpoints(&base), BUDGET, &[]).unwrap();
        let dim_set = set_estimate(&base, &set).unwrap();
        for seed in 0..SEEDS {
            total += 1;
            let spec = base.with_seed(seed);
            let x = pinned_point(&spec).unwrap();
            let ys = sample_set(&spec, DISTANCE_SAMPLES).unwrap();
            let records = pinned(&x, &ys, spec.norm()).unwrap();
            let groups = group_by_functional(&records);
            let all_rows = distance_checkpoint_table(&spec, &groups, spec.precision());
            let gated: Vec<_> = all_rows.iter().filter(|r| r.checkpoint.r <= 32).copied().collect();
            let outcome = match distance_estimate(&gated) {
                Some(dist) => {
                    let report = falconer_check(dim_set, dist, spec.d(), TOL);
                    (!report.pass).then(|| {
                        format!("seed {seed}: dim_dist {dist:.4} < {:.4} (dim_set {dim_set:.4})", report.required)
                    })
                }
                None => Some(format!("seed {seed}: no distance checkpoint with r <= 32 (dim_set {dim_set:.4})")),
            };
            if let Some(msg) = outcome {
                failed.entry(name(preset, s)).or_default().push(msg);
            }
            if preset == Preset::Linf && s == Rational::from_integer(2) {
                for row in &all_rows {
                    alpha_one_rows += 1;
                    alpha_one_ok &= row.pass;
                }
            }
        }
    }
    let n_failed: usize = failed.values().map(Vec::len).sum();
    let mut o = Outcome::new(
        n_failed == 0 && alpha_one_ok,
        format!(
            "{} of {total} specs pass at {DISTANCE_SAMPLES} samples; s=2 linf bound side {} ({alpha_one_rows} rows)",
            total - n_failed,
            if alpha_one_ok { "holds" } else { "FAILS" }
        ),
    );
    for (spec, msgs) in failed {
        o.details.push(format!("{spec}: {} seeds fail, e.g. {}", msgs.len(), msgs[0]));
    }
    o
}

fn criterion7() -> Outcome {
    let mut rng = rng(7);
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok && !failures.contains(&what.to_string()) {
            failures.push(what.to_string());
        }
    };
    let small = |rng: &mut rand_chacha::ChaCha8Rng| Dyadic::new(rng.random_range(-(1i64 << 30)..1i64 << 30), rng.random_range(0..40));

    // Norm axioms on 10^4 random vectors.
    let norms: Vec<PolyhedralNorm> = vec![
        PolyhedralNorm::preset(Preset::Linf, 2).unwrap(),
        PolyhedralNorm::preset(Preset::L1, 2).unwrap(),
        PolyhedralNorm::preset(Preset::L1, 3).unwrap(),
    ];
    for i in 0..10_000 {
        let norm = &norms[i % norms.len()];
        let x: Vec<Dyadic> = (0..norm.d()).map(|_| small(&mut rng)).collect();
        let y: Vec<Dyadic> = (0..norm.d()).map(|_| small(&mut rng)).collect();
        let l = small(&mut rng);
        let nx = norm.eval(&x).unwrap();
        let sum: Vec<Dyadic> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let scaled: Vec<Dyadic> = x.iter().map(|a| a * &l).collect();
        check(nx.is_zero() == x.iter().all(Dyadic::is_zero), "norm definiteness");
        check(norm.eval(&sum).unwrap() <= &nx + &norm.eval(&y).unwrap(), "norm triangle inequality");
        check(norm.eval(&scaled).unwrap() == &l.abs() * &nx, "norm homogeneity");
    }

    // Dyadic round trips against exact rationals.
    for _ in 0..10_000 {
        let x = small(&mut rng);
        let j = rng.random_range(0..60);
        let r = to_ratio(&x);
        let scaled = (r.clone() * num_rational::Ratio::from_integer(num_bigint::BigInt::from(1) << j as usize)).floor();
        check(x.floor_scaled(j) == scaled.to_integer(), "dyadic floor");
        check(to_ratio(&(&x.truncate(j) + &x.mod_pow2(j))) == r, "dyadic truncate + mod");
        check(x.with_precision(x.precision() + 7).as_ref() == Some(&x), "dyadic precision round trip");
        if j <= x.precision() {
            check(x.bit(j).unwrap() == scaled.to_integer().is_odd(), "dyadic bit");
        }
    }

    // Margin minimality on random norms.
    for _ in 0..1000 {
        let d = rng.random_range(1..=3);
        if let Some(norm) = random_norm(&mut rng, d) {
            let c = norm.min_c();
            check(norm.satisfies_margin(c) && (c == 1 || !norm.satisfies_margin(c - 1)), "min_c minimality");
        }
    }

    // Schedule generate -> validate -> rebuild.
    for _ in 0..1000 {
        let alpha = Rational::new(rng.random_range(0..=8), 8);
        let mut m = vec![1u32];
        for _ in 0..rng.random_range(1..=4) {
            let last = *m.last().unwrap();
            m.push(last + rng.random_range(1..100));
        }
        let rule = ScheduleRule::Explicit { m, widen: true };
        let Ok(sched) = BlockSchedule::generate(alpha, rng.random_range(1..=5), rng.random_range(1..=3), &rule) else {
            check(false, "schedule generation with widening");
            continue;
        };
        let rebuilt = BlockSchedule::from_parts(
            sched.c(),
            sched.m_list().to_vec(),
            sched.n_list().to_vec(),
            sched.alpha(),
            sched.n_functionals(),
        );
        check(sched.validate().passed() && rebuilt.as_ref() == Ok(&sched), "schedule round trip");
    }

    // Mutation sensitivity, determinism and points-file round trip.
    let mut mutations = 0;
    for (preset, s) in grid() {
        let spec = desk_spec(preset, s, 3);
        let points = sample_set(&spec, 50).unwrap();
        for p in &points {
            for k in 1..=spec.blocks() {
                let pivot = spec.block_functional(k).pivot();
                for j in spec.schedule().window(k).unwrap().places() {
                    let mut bad = p.clone();
                    bad.flip_digit(pivot, j);
                    mutations += 1;
                    check(!membership(&bad, &spec, k).unwrap(), "mutation sensitivity");
                }
            }
        }
        let text = write_points(&points);
        check(write_points(&sample_set(&spec, 50).unwrap()) == text, "byte-identical reruns");
        check(parse_points(&text).unwrap() == points, "points-file round trip");
    }

    let mut o = Outcome::new(
        failures.is_empty(),
        format!("norms, dyadics, margins, schedules, {mutations} mutations, determinism, points files"),
    );
    o.details = failures;
    o
}

fn criterion8() -> Outcome {
    let mut details = Vec::new();
    let mut product_checks = 0;
    for s in s_values() {
        let spec = desk_spec(Preset::Linf, s, 0);
        for r in 1..=16 {
            product_checks += 1;
            let exact = count_exact(&spec, r, BUDGET).unwrap().count;
            if decoupled_product_count(&spec, r) != Some(exact) {
                details.push(format!("product mismatch s={} r={r}", format_rational(&s)));
            }
        }
    }

    let mut rng = rng(8);
    let mut slab_checks = 0;
    for _ in 0..200 {
        let v = Dyadic::new(rng.random_range(1..=15), rng.random_range(0..=3));
        let constraints: Vec<SlabConstraint> = (0..rng.random_range(1..=3))
            .map(|_| {
                let a = rng.random_range(0..=10);
                SlabConstraint {
                    functional: 1,
                    a,
                    b: rng.random_range(a + 1..=a + 4),
                }
            })
            .collect();
        let counter = d1_counter(&v, &constraints);
        for r in 0..=12 {
            slab_checks += 1;
            let exact = counter.count(r, 1 << 24).unwrap().count;
            if exact != BigUint::from(brute_slab_count_d1(&v, &constraints, r)) {
                details.push(format!("slab mismatch v={v} {constraints:?} r={r}"));
            }
        }
    }

    let mut solver_checks = 0;
    let mut specs: Vec<FractalSpec> = desk_grid().into_iter().map(|(_, s)| s).collect();
    while specs.len() < 200 {
        if let Some(spec) = random_spec(&mut rng, 24) {
            specs.push(spec);
        }
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.schedule().is_degenerate() {
            continue;
        }
        for k in 1..=spec.blocks() {
            if spec.schedule().m(k + 1) - spec.schedule().n(k) > 16 {
                continue;
            }
            let mut b = builder_at(spec, i as u64, k).unwrap();
            let oracle = exhaustive_pivot(&b, spec, k);
            let solved = b.solve_pivot(k).ok().map(|s| s.digits);
            solver_checks += 1;
            if solved.is_none() || solved != oracle {
                details.push(format!("solver mismatch block {k} of {:?}", spec.schedule()));
            }
        }
    }
    let mut o = Outcome::new(
        details.is_empty(),
        format!("{product_checks} product, {slab_checks} slab, {solver_checks} solver comparisons"),
    );
    o.details = details;
    o
}

fn main() -> ExitCode {
    polyfrac::init_threads();
    let start = Instant::now();
    let mut outcomes: Vec<(u32, Outcome)> = Vec::new();
    let (c1, c2, c3) = construction_criteria();
    outcomes.extend([(1, c1), (2, c2), (3, c3)]);
    outcomes.push((4, criterion4()));
    outcomes.push((5, criterion5()));
    outcomes.push((6, criterion6()));
    outcomes.push((7, criterion7()));
    outcomes.push((8, criterion8()));
    let mut all = true;
    for (n, o) in &outcomes {
        all &= o.pass;
        println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.summary);
        for d in &o.details {
            println!("    {d}");
        }
    }
    println!("acceptance finished in {:.1?}", start.elapsed());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
