use std::fs;
use std::path::{Path, PathBuf};

use polyfrac::construct::{check_point, pinned_point, sample_set, FractalSpec, SamplePoint};
use polyfrac::dimension::{
    distance_checkpoint_table, distance_estimate, falconer_check, profile_c_aware, profile_ideal,
    set_checkpoints, set_estimate, set_estimate_checkpoints, set_series, value_series,
    BoxCountSeries, DimensionError, ProfileBase,
};
use polyfrac::distset::{
    collapse_check, difference, euclid_floor, euclid_pinned, group_by_functional, pairwise, pinned,
    PairSource,
};
use polyfrac::io::{
    boxcount_svg, parse_distances, parse_points, split_roles, write_boxcount, write_distances, write_points,
    write_profile, ConfigDocument, EuclidColumn, RunManifest,
};
use polyfrac::rational::format_rational;

use crate::{Cli, Command, Failure};

struct Run {
    config: ConfigDocument,
    spec: FractalSpec,
}

fn load(cli: &Cli) -> Result<Run, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("--config is required"))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let mut config = ConfigDocument::from_json(&text).map_err(Failure::config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(samples) = cli.samples {
        config.samples = samples;
    }
    if let Some(budget) = cli.budget {
        config.budget = budget;
    }
    let spec = config.resolve().map_err(Failure::config)?;
    Ok(Run { config, spec })
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn write_manifest(cli: &Cli, run: &Run, command: &str, outputs: &[&str]) -> Result<(), Failure> {
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let manifest = RunManifest::new(
        &run.config,
        &run.spec,
        command,
        outputs.iter().map(|s| s.to_string()).collect(),
        concat!("polyfrac ", env!("CARGO_PKG_VERSION")),
        timestamp,
    );
    write(&cli.out.join("manifest.json"), &manifest.to_json())
}

fn points_path(cli: &Cli, default: &str) -> PathBuf {
    cli.points.clone().unwrap_or_else(|| cli.out.join(default))
}

fn read_points(path: &Path, spec: &FractalSpec) -> Result<Vec<SamplePoint>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let points = parse_points(&text).map_err(Failure::config)?;
    let first = &points[0];
    if first.d() != spec.d() || first.precision() != spec.precision() {
        return Err(Failure::config(format!(
            "{} holds d={} prec={}, config expects d={} prec={}",
            path.display(),
            first.d(),
            first.precision(),
            spec.d(),
            spec.precision()
        )));
    }
    Ok(points)
}

fn build(spec: &FractalSpec, samples: usize, with_pinned: bool) -> Result<Vec<SamplePoint>, Failure> {
    let mut points = Vec::with_capacity(samples + 1);
    if with_pinned {
        points.push(pinned_point(spec).map_err(Failure::verification)?);
    }
    if samples > 0 {
        points.extend(sample_set(spec, samples).map_err(Failure::verification)?);
    }
    Ok(points)
}

fn describe(spec: &FractalSpec) -> String {
    let sched = spec.schedule();
    format!(
        "d={} s={} alpha={} c={} N={} m={:?} n={:?}",
        spec.d(),
        format_rational(&spec.s()),
        format_rational(&spec.alpha()),
        sched.c(),
        spec.norm().len(),
        sched.m_list(),
        sched.n_list()
    )
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let run = load(cli)?;
    match cli.command {
        Command::Construct => construct(cli, &run, true),
        Command::Sample => construct(cli, &run, false),
        Command::Distset => distset(cli, &run),
        Command::Boxdim => boxdim(cli, &run),
        Command::Profile => profile(cli, &run),
        Command::Verify => verify(cli, &run),
    }
}

fn construct(cli: &Cli, run: &Run, with_pinned: bool) -> Result<(), Failure> {
    let spec = &run.spec;
    println!("{}", describe(spec));
    let points = build(spec, run.config.samples, with_pinned)?;
    for (i, p) in points.iter().enumerate() {
        let checks = check_point(p, spec).map_err(Failure::verification)?;
        if let Some(bad) = checks.iter().find(|c| !c.passed()) {
            return Err(Failure::verification(format!(
                "point {i} block {}: membership={} carry={} pattern={} place={:?}",
                bad.block, bad.membership, bad.carry, bad.pattern, bad.place
            )));
        }
    }
    let (name, command) = if with_pinned {
        ("points.txt", "construct")
    } else {
        ("samples.txt", "sample")
    };
    write(&cli.out.join(name), &write_points(&points))?;
    write_manifest(cli, run, command, &[name])?;
    println!(
        "wrote {} points (prec {}) to {}; all blocks verified",
        points.len(),
        spec.precision(),
        cli.out.join(name).display()
    );
    Ok(())
}

fn distset(cli: &Cli, run: &Run) -> Result<(), Failure> {
    let spec = &run.spec;
    let points = read_points(&points_path(cli, "points.txt"), spec)?;
    let (x, ys) = split_roles(points);
    let norm = spec.norm();
    let (records, euclid) = if cli.pairwise {
        let records = pairwise(&ys, norm, cli.cap, run.config.seed).map_err(Failure::config)?;
        let euclid = cli.euclid.map(|r| {
            records
                .iter()
                .map(|rec| match rec.source {
                    PairSource::Pair(i, j) => euclid_floor(&difference(&ys[i], &ys[j]), r),
                    PairSource::Pinned(_) => unreachable!("pairwise records only"),
                })
                .collect::<Vec<_>>()
        });
        (records, euclid)
    } else {
        let x = x.ok_or_else(|| Failure::config("points file has no pinned (x) point"))?;
        let records = pinned(&x, &ys, norm).map_err(Failure::config)?;
        let euclid = match cli.euclid {
            Some(r) => Some(euclid_pinned(&x, &ys, r).map_err(Failure::config)?),
            None => None,
        };
        (records, euclid)
    };
    let column = cli.euclid.zip(euclid.as_deref()).map(|(r, values)| EuclidColumn { r, values });
    let text = write_distances(&run.config.hash(), &records, column);
    let path = cli.out.join("distances.csv");
    write(&path, &text)?;
    let groups = group_by_functional(&records);
    println!("{} distance records written to {}", records.len(), path.display());
    for (ell, values) in &groups {
        println!("  functional {ell}: {} records", values.len());
    }
    Ok(())
}

fn boxdim(cli: &Cli, run: &Run) -> Result<(), Failure> {
    let spec = &run.spec;
    let hash = run.config.hash();
    let points = match &cli.points {
        Some(path) => read_points(path, spec)?,
        None => build(spec, run.config.samples, true)?,
    };
    let (x, ys) = split_roles(points);
    let scales: Vec<u32> = run
        .config
        .scale_list()
        .map_err(Failure::config)?
        .unwrap_or_else(|| set_estimate_checkpoints(spec))
        .into_iter()
        .filter(|&r| r >= 1 && r <= spec.precision())
        .collect();
    println!("{}", describe(spec));
    let set = set_series(spec, &scales, run.config.budget, &ys).map_err(Failure::config)?;
    if set.exact_max.is_none() {
        if let Some(e @ DimensionError::BudgetExceeded { .. }) = &set.stopped_by {
            return Err(Failure::budget(e));
        }
    }
    let ideal = profile_ideal(spec, ProfileBase::Set);
    let c_aware = profile_c_aware(spec, ProfileBase::Set);
    println!("set series (samples = {}):", ys.len());
    println!("  {:>5} {:>12} {:>10} {:>9} {:>8} {:>8} {:>8}", "r", "count", "log2", "mode", "ratio", "P_c", "P_id");
    for e in set.series.entries() {
        println!(
            "  {:>5} {:>12} {:>10.4} {:>9} {:>8.4} {:>8} {:>8}",
            e.r,
            e.count.to_string(),
            e.log2_count(),
            e.mode,
            e.log2_count() / f64::from(e.r),
            c_aware.eval(e.r),
            ideal.eval(e.r)
        );
    }
    if let Some(e) = &set.stopped_by {
        println!("  exact counting stopped: {e}");
    }
    let dim_set = set_estimate(spec, &set).ok();
    match dim_set {
        Some(v) => println!("set lower estimate over exact checkpoints: {v:.4}"),
        None => println!("set lower estimate: unavailable (no exact checkpoint)"),
    }
    let mut outputs = vec!["boxcount_set.csv".to_string()];
    write(&cli.out.join(&outputs[0]), &write_boxcount(&hash, "set", &set.series))?;

    let mut failed = false;
    let mut distance_series: Vec<(String, BoxCountSeries)> = Vec::new();
    let records = match (&cli.distances, &x) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            let (file_hash, records) = parse_distances(&text).map_err(Failure::config)?;
            if file_hash != hash {
                return Err(Failure::config(format!(
                    "{} was produced under manifest {file_hash}, this run is {hash}",
                    path.display()
                )));
            }
            Some(records)
        }
        (None, Some(x)) => Some(pinned(x, &ys, spec.norm()).map_err(Failure::config)?),
        (None, None) => None,
    };
    if let Some(records) = records {
        let groups = group_by_functional(&records);
        let rows = distance_checkpoint_table(spec, &groups, spec.precision());
        println!("distance checkpoints (gated for r <= {}):", cli.rmax);
        println!("  {:>3} {:>5} {:>5} {:>6} {:>8} {:>9} {:>6}", "l", "k", "r", "bound", "limit", "log2", "result");
        for row in &rows {
            let gated = row.checkpoint.r <= cli.rmax;
            failed |= gated && !row.pass;
            println!(
                "  {:>3} {:>5} {:>5} {:>6} {:>8} {:>9.4} {:>6}",
                row.functional,
                row.checkpoint.block,
                row.checkpoint.r,
                row.checkpoint.bound,
                row.checkpoint.limit(),
                row.log2_count,
                match (gated, row.pass) {
                    (false, _) => "info",
                    (true, true) => "pass",
                    (true, false) => "FAIL",
                }
            );
        }
        for ell in 1..=spec.norm().len() {
            let mut scales: Vec<u32> = rows
                .iter()
                .filter(|r| r.functional == ell)
                .map(|r| r.checkpoint.r)
                .chain(scales.iter().copied())
                .collect();
            scales.sort_unstable();
            scales.dedup();
            let values = groups.get(&ell).cloned().unwrap_or_default();
            let series = value_series(&values, &scales);
            let name = format!("boxcount_distance_l{ell}.csv");
            write(&cli.out.join(&name), &write_boxcount(&hash, &format!("distance-l{ell}"), &series))?;
            outputs.push(name);
            distance_series.push((format!("distance l{ell}"), series));
        }
        if cli.falconer {
            let gated: Vec<_> = rows.iter().filter(|r| r.checkpoint.r <= cli.rmax).copied().collect();
            match (dim_set, distance_estimate(&gated)) {
                (Some(e), Some(dist)) => {
                    let report = falconer_check(e, dist, spec.d(), cli.tol);
                    println!(
                        "falconer: dim_dist {:.4} >= dim_set {:.4} - {} - {} = {:.4}: {}",
                        report.dim_distance,
                        report.dim_set,
                        spec.d() - 1,
                        report.tol,
                        report.required,
                        if report.pass { "pass" } else { "FAIL" }
                    );
                    failed |= !report.pass;
                }
                _ => println!("falconer: estimates unavailable"),
            }
        }
    } else {
        println!("no pinned point or distance file: distance series skipped");
    }
    if cli.svg {
        let mut all: Vec<(&str, &BoxCountSeries)> = vec![("set", &set.series)];
        all.extend(distance_series.iter().map(|(n, s)| (n.as_str(), s)));
        write(&cli.out.join("boxcount.svg"), &boxcount_svg(&all))?;
        outputs.push("boxcount.svg".into());
    }
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(cli, run, "boxdim", &refs)?;
    if failed {
        return Err(Failure::verification("a gated distance checkpoint or the falconer check failed"));
    }
    Ok(())
}

fn profile(cli: &Cli, run: &Run) -> Result<(), Failure> {
    let spec = &run.spec;
    let hash = run.config.hash();
    let r_max = spec.precision();
    println!("{}", describe(spec));
    if spec.schedule().is_degenerate() {
        println!("note: alpha = 1, every window is empty; the profiles are unconstrained");
    }
    let mut outputs = Vec::new();
    let mut bases = vec![(ProfileBase::Set, "set".to_string())];
    bases.extend((1..=spec.norm().len()).map(|l| (ProfileBase::Distance(l), format!("distance-l{l}"))));
    for (base, name) in &bases {
        let ideal = profile_ideal(spec, *base);
        let c_aware = profile_c_aware(spec, *base);
        let file = format!("profile_{}.csv", name.replace('-', "_"));
        write(&cli.out.join(&file), &write_profile(&hash, name, &ideal, &c_aware, r_max))?;
        outputs.push(file);
        if *base == ProfileBase::Set {
            println!("set profile ratios at r = m_k:");
            for r in set_checkpoints(spec).into_iter().skip(1) {
                println!(
                    "  r={r:>5}  P_ideal={:>6} ({:.6})  P_c_aware={:>6} ({:.6})",
                    ideal.eval(r),
                    ideal.ratio(r),
                    c_aware.eval(r),
                    c_aware.ratio(r)
                );
            }
        }
    }
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(cli, run, "profile", &refs)?;
    println!("wrote {} profile tables to {}", outputs.len(), cli.out.display());
    Ok(())
}

fn verify(cli: &Cli, run: &Run) -> Result<(), Failure> {
    let spec = &run.spec;
    let path = points_path(cli, "points.txt");
    let points = read_points(&path, spec)?;
    let mut block_checks = 0usize;
    for (i, p) in points.iter().enumerate() {
        for c in check_point(p, spec).map_err(Failure::verification)? {
            block_checks += 1;
            if !c.passed() {
                let which = if !c.membership {
                    "membership"
                } else if !c.carry {
                    "carry"
                } else {
                    "pattern"
                };
                return Err(Failure::verification(format!(
                    "point {i} block {} place {} fails {which}",
                    c.block,
                    c.place.map_or("?".into(), |p| p.to_string())
                )));
            }
        }
    }
    let (x, ys) = split_roles(points);
    let mut collapse_checks = 0usize;
    let mut boundary_notes = 0usize;
    if let Some(x) = &x {
        for (i, y) in ys.iter().enumerate() {
            let report = collapse_check(x, y, spec).map_err(Failure::verification)?;
            collapse_checks += 1;
            if let Some(b) = report.first_failure() {
                return Err(Failure::verification(format!(
                    "collapse: pinned vs sample {i} block {} (functional {}) not constant on places {}..={}",
                    b.block, report.achieving, b.checked.lo + 1, b.checked.hi
                )));
            }
            boundary_notes += report.functionals[0]
                .blocks
                .iter()
                .filter(|b| !b.full_window_constant)
                .count();
        }
    }
    println!(
        "verified {} block checks and {} collapse checks in {}",
        block_checks,
        collapse_checks,
        path.display()
    );
    if boundary_notes > 0 {
        println!("note: {boundary_notes} windows vary only at their boundary places");
    }
    Ok(())
}
