//! Configuration documents, run manifests and the versioned text formats.

use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_traits::Num;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::construct::{FractalSpec, Role, SamplePoint};
use crate::dimension::{BoxCountSeries, ComplexityProfile};
use crate::distset::{DistanceRecord, PairSource};
use crate::dyadic::Dyadic;
use crate::norms::{PolyhedralNorm, Preset};
use crate::rational::{format_rational, parse_rational, Rational};
use crate::schedule::ScheduleRule;

pub const POINTS_HEADER: &str = "polyfrac-points v1";
pub const DISTANCES_HEADER: &str = "polyfrac-distances v1";
pub const BOXCOUNT_HEADER: &str = "polyfrac-boxcount v1";
pub const PROFILE_HEADER: &str = "polyfrac-profile v1";
pub const MANIFEST_FORMAT: &str = "polyfrac-manifest v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed {kind} file at line {line}: {detail}")]
    Malformed {
        kind: &'static str,
        line: usize,
        detail: String,
    },
}

fn config_err(e: impl std::fmt::Display) -> FormatError {
    FormatError::Config(e.to_string())
}

fn rational_loose<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    let text = match &v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(serde::de::Error::custom(format!("expected a rational, got {other}"))),
    };
    parse_rational(&text).map_err(serde::de::Error::custom)
}

fn rational_string<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NormConfig {
    Preset { preset: Preset },
    Custom { custom: Vec<Vec<(i64, u32)>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MarginConfig {
    Fixed(u32),
    Named(String),
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricConfig {
    pub rule: String,
    #[serde(default = "default_base")]
    pub base: u32,
    #[serde(deserialize_with = "rational_loose", serialize_with = "rational_string")]
    pub ratio: Rational,
}

fn default_base() -> u32 {
    16
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MConfig {
    List(Vec<u32>),
    Rule(GeometricConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub c: MarginConfig,
    pub m: MConfig,
    #[serde(default)]
    pub widen: bool,
    #[serde(rename = "K", alias = "k", default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalesConfig {
    List(Vec<u32>),
    Named(String),
}

impl Default for ScalesConfig {
    fn default() -> Self {
        ScalesConfig::Named("checkpoints".into())
    }
}

/// A run configuration as written by the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(alias = "dimension")]
    pub d: usize,
    #[serde(deserialize_with = "rational_loose", serialize_with = "rational_string")]
    pub s: Rational,
    pub norm: NormConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub scales: ScalesConfig,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

fn default_samples() -> usize {
    1000
}

fn default_budget() -> u64 {
    100_000_000
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl ConfigDocument {
    /// Parses a config, or the config embedded in a run manifest.
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(config_err)?;
        let value = match value.get("format").and_then(|f| f.as_str()) {
            Some(MANIFEST_FORMAT) => value
                .get("config")
                .cloned()
                .ok_or_else(|| config_err("manifest has no config"))?,
            _ => value,
        };
        serde_json::from_value(value).map_err(config_err)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the normalized config, shared by every file of one analysis.
    pub fn hash(&self) -> String {
        hex_digest(self.to_json().as_bytes())[..16].to_string()
    }

    pub fn norm(&self) -> Result<PolyhedralNorm, FormatError> {
        let norm = match &self.norm {
            NormConfig::Preset { preset } => PolyhedralNorm::preset(*preset, self.d),
            NormConfig::Custom { custom } => PolyhedralNorm::custom(custom),
        }
        .map_err(config_err)?;
        if norm.d() != self.d {
            return Err(config_err(format!(
                "norm has dimension {}, config says d = {}",
                norm.d(),
                self.d
            )));
        }
        Ok(norm)
    }

    pub fn margin(&self) -> Result<Option<u32>, FormatError> {
        match &self.schedule.c {
            MarginConfig::Fixed(c) => Ok(Some(*c)),
            MarginConfig::Named(s) if s == "auto" => Ok(None),
            MarginConfig::Named(s) => Err(config_err(format!("c must be \"auto\" or an integer, got {s:?}"))),
        }
    }

    pub fn rule(&self) -> Result<ScheduleRule, FormatError> {
        match &self.schedule.m {
            MConfig::List(m) => {
                let m = match self.schedule.blocks {
                    Some(k) if k + 1 > m.len() => {
                        return Err(config_err(format!(
                            "K = {k} needs {} entries of m, got {}",
                            k + 1,
                            m.len()
                        )))
                    }
                    Some(k) => m[..=k].to_vec(),
                    None => m.clone(),
                };
                Ok(ScheduleRule::Explicit {
                    m,
                    widen: self.schedule.widen,
                })
            }
            MConfig::Rule(g) => {
                if g.rule != "geometric" {
                    return Err(config_err(format!("unknown schedule rule {:?}", g.rule)));
                }
                Ok(ScheduleRule::Geometric {
                    blocks: self.schedule.blocks.unwrap_or(4),
                    base: g.base,
                    ratio: g.ratio,
                })
            }
        }
    }

    pub fn resolve(&self) -> Result<FractalSpec, FormatError> {
        FractalSpec::generate(self.s, self.norm()?, self.margin()?, &self.rule()?, self.seed)
            .map_err(config_err)
    }

    /// Scales listed in the config, or `None` for checkpoint scales.
    pub fn scale_list(&self) -> Result<Option<Vec<u32>>, FormatError> {
        match &self.scales {
            ScalesConfig::List(v) => Ok(Some(v.clone())),
            ScalesConfig::Named(s) if s == "checkpoints" => Ok(None),
            ScalesConfig::Named(s) => Err(config_err(format!("scales must be a list or \"checkpoints\", got {s:?}"))),
        }
    }
}

/// Every derived quantity of a spec, for the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSpec {
    pub d: usize,
    pub s: String,
    pub alpha: String,
    pub c: u32,
    #[serde(rename = "N")]
    pub n_functionals: usize,
    #[serde(rename = "K")]
    pub blocks: usize,
    pub m: Vec<u32>,
    pub n: Vec<u32>,
    /// One-based pivot coordinate of each functional.
    pub pivots: Vec<usize>,
    pub functionals: Vec<Vec<String>>,
    pub precision: u32,
    pub seed: u64,
}

impl ResolvedSpec {
    pub fn new(spec: &FractalSpec) -> Self {
        let sched = spec.schedule();
        ResolvedSpec {
            d: spec.d(),
            s: format_rational(&spec.s()),
            alpha: format_rational(&spec.alpha()),
            c: sched.c(),
            n_functionals: spec.norm().len(),
            blocks: spec.blocks(),
            m: sched.m_list().to_vec(),
            n: sched.n_list().to_vec(),
            pivots: spec.norm().functionals().iter().map(|f| f.pivot() + 1).collect(),
            functionals: spec
                .norm()
                .functionals()
                .iter()
                .map(|f| f.coeffs().iter().map(Dyadic::to_string).collect())
                .collect(),
            precision: spec.precision(),
            seed: spec.seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool: String,
    pub timestamp: String,
    pub config_hash: String,
    pub command: String,
    pub outputs: Vec<String>,
    pub resolved: ResolvedSpec,
    pub config: ConfigDocument,
}

impl RunManifest {
    pub fn new(
        config: &ConfigDocument,
        spec: &FractalSpec,
        command: &str,
        outputs: Vec<String>,
        tool: &str,
        timestamp: String,
    ) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            tool: tool.into(),
            timestamp,
            config_hash: config.hash(),
            command: command.into(),
            outputs,
            resolved: ResolvedSpec::new(spec),
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

fn hex_width(precision: u32) -> usize {
    precision.div_ceil(4) as usize
}

/// Serializes points in the `polyfrac-points v1` format.
pub fn write_points(points: &[SamplePoint]) -> String {
    let (d, prec) = points.first().map(|p| (p.d(), p.precision())).unwrap_or((0, 0));
    let width = hex_width(prec);
    let mut out = format!("{POINTS_HEADER}\nd={d} prec={prec} count={}\n", points.len());
    for p in points {
        out.push_str(p.role().tag());
        for m in p.mantissas() {
            let _ = write!(out, " {:0>width$}", m.to_str_radix(16));
        }
        out.push('\n');
    }
    out
}

fn malformed(kind: &'static str, line: usize, detail: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        kind,
        line,
        detail: detail.into(),
    }
}

fn header_field(token: Option<&str>, key: &str, kind: &'static str) -> Result<u64, FormatError> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed(kind, 2, format!("expected {key}=<int>")))
}

/// Parses a `polyfrac-points v1` file; at least one point is required.
pub fn parse_points(text: &str) -> Result<Vec<SamplePoint>, FormatError> {
    const KIND: &str = "points";
    let mut lines = text.lines();
    if lines.next() != Some(POINTS_HEADER) {
        return Err(malformed(KIND, 1, format!("expected {POINTS_HEADER:?}")));
    }
    let header = lines.next().ok_or_else(|| malformed(KIND, 2, "missing header"))?;
    let mut tokens = header.split(' ');
    let d = header_field(tokens.next(), "d", KIND)? as usize;
    let prec = u32::try_from(header_field(tokens.next(), "prec", KIND)?)
        .map_err(|_| malformed(KIND, 2, "precision too large"))?;
    let count = header_field(tokens.next(), "count", KIND)? as usize;
    if tokens.next().is_some() {
        return Err(malformed(KIND, 2, "trailing fields"));
    }
    if count == 0 {
        return Err(malformed(KIND, 2, "no points"));
    }
    let width = hex_width(prec);
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let no = i + 3;
        let mut fields = line.split(' ');
        let role = fields
            .next()
            .and_then(Role::from_tag)
            .ok_or_else(|| malformed(KIND, no, "role must be x or y"))?;
        let coords = fields
            .map(|h| {
                if h.len() != width || !h.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
                    return Err(malformed(KIND, no, format!("bad mantissa {h:?}")));
                }
                BigUint::from_str_radix(h, 16).map_err(|e| malformed(KIND, no, e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if coords.len() != d {
            return Err(malformed(KIND, no, format!("expected {d} coordinates")));
        }
        let p = SamplePoint::from_mantissas(coords, prec, role)
            .ok_or_else(|| malformed(KIND, no, "mantissa exceeds precision"))?;
        points.push(p);
    }
    if points.len() != count {
        return Err(malformed(KIND, 2, format!("count={count} but {} points", points.len())));
    }
    Ok(points)
}

/// Splits a points list into the pinned point and the samples.
pub fn split_roles(points: Vec<SamplePoint>) -> (Option<SamplePoint>, Vec<SamplePoint>) {
    let mut pinned = None;
    let mut samples = Vec::new();
    for p in points {
        match p.role() {
            Role::Pinned if pinned.is_none() => pinned = Some(p),
            _ => samples.push(p),
        }
    }
    (pinned, samples)
}

/// Reads the `# manifest=<hash>` comment of a CSV file.
pub fn manifest_hash(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| !l.is_empty())
        .find_map(|l| l.strip_prefix("# manifest="))
}

/// Euclidean column: scale `r` and one floored value per record.
pub struct EuclidColumn<'a> {
    pub r: u32,
    pub values: &'a [Dyadic],
}

pub fn write_distances(hash: &str, records: &[DistanceRecord], euclid: Option<EuclidColumn<'_>>) -> String {
    let mut out = format!("{DISTANCES_HEADER}\n# manifest={hash}\n");
    out.push_str("pair_id,ell,mantissa_hex,prec");
    if let Some(e) = &euclid {
        let _ = write!(out, ",euclid_hex_r{}", e.r);
    }
    out.push('\n');
    for (i, rec) in records.iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{}",
            rec.source,
            rec.achieving,
            rec.value.mantissa().magnitude().to_str_radix(16),
            rec.value.precision()
        );
        if let Some(e) = &euclid {
            let _ = write!(out, ",{}", e.values[i].floor_scaled(e.r).magnitude().to_str_radix(16));
        }
        out.push('\n');
    }
    out
}

/// Parses a distance CSV into its manifest hash and records.
pub fn parse_distances(text: &str) -> Result<(String, Vec<DistanceRecord>), FormatError> {
    const KIND: &str = "distance";
    let mut lines = text.lines().enumerate();
    if lines.next().map(|l| l.1) != Some(DISTANCES_HEADER) {
        return Err(malformed(KIND, 1, format!("expected {DISTANCES_HEADER:?}")));
    }
    let hash = manifest_hash(text)
        .ok_or_else(|| malformed(KIND, 2, "missing manifest hash"))?
        .to_string();
    let mut records = Vec::new();
    let mut seen_columns = false;
    for (i, line) in lines {
        let no = i + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_columns {
            if !line.starts_with("pair_id,ell,mantissa_hex,prec") {
                return Err(malformed(KIND, no, "bad column header"));
            }
            seen_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 4 {
            return Err(malformed(KIND, no, "expected at least 4 columns"));
        }
        let source: PairSource = f[0].parse().map_err(|e: String| malformed(KIND, no, e))?;
        let achieving: usize = f[1].parse().map_err(|_| malformed(KIND, no, "bad ell"))?;
        let mantissa = BigInt::from_str_radix(f[2], 16).map_err(|_| malformed(KIND, no, "bad mantissa"))?;
        let prec: u32 = f[3].parse().map_err(|_| malformed(KIND, no, "bad prec"))?;
        records.push(DistanceRecord {
            value: Dyadic::new(mantissa, prec),
            achieving,
            source,
        });
    }
    Ok((hash, records))
}

pub fn write_boxcount(hash: &str, series_name: &str, series: &BoxCountSeries) -> String {
    let mut out = format!(
        "{BOXCOUNT_HEADER}\n# manifest={hash}\n# series={series_name} ambient={}\nr,count,log2_count,mode\n",
        series.ambient
    );
    for e in series.entries() {
        let _ = writeln!(out, "{},{},{:.6},{}", e.r, e.count, e.log2_count(), e.mode);
    }
    out
}

/// Profile table at every integer scale `1..=r_max`.
pub fn write_profile(
    hash: &str,
    base_name: &str,
    ideal: &ComplexityProfile,
    c_aware: &ComplexityProfile,
    r_max: u32,
) -> String {
    let mut out = format!(
        "{PROFILE_HEADER}\n# manifest={hash}\n# base={base_name}\nr,P_ideal,P_c_aware,ratio_ideal,ratio_c_aware\n"
    );
    for r in 1..=r_max {
        let _ = writeln!(
            out,
            "{r},{},{},{:.6},{:.6}",
            ideal.eval(r),
            c_aware.eval(r),
            ideal.ratio(r),
            c_aware.ratio(r)
        );
    }
    out
}

/// Minimal SVG line chart of `log2(count)` against `r`.
pub fn boxcount_svg(series: &[(&str, &BoxCountSeries)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.entries().iter().map(|e| (f64::from(e.r), e.log2_count())))
        .collect();
    let xmax = pts.iter().map(|p| p.0).fold(1.0, f64::max);
    let ymax = pts.iter().map(|p| p.1).fold(1.0, f64::max);
    let sx = |x: f64| pad + x / xmax * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <line x1=\"{pad}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <text x=\"{xm}\" y=\"{yl}\" font-size=\"12\">r (max {xmax})</text>\n\
         <text x=\"4\" y=\"{pad}\" font-size=\"12\">log2 N (max {ymax:.1})</text>\n",
        y0 = h - pad,
        x1 = w - pad,
        xm = w / 2.0,
        yl = h - 8.0,
    );
    for (i, (name, s)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        let path: Vec<String> = s
            .entries()
            .iter()
            .map(|e| format!("{:.1},{:.1}", sx(f64::from(e.r)), sy(e.log2_count())))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>",
            path.join(" "),
            w - pad - 120.0,
            pad + 14.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    out
}
