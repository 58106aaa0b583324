//! Block schedules `(m_k, n_k, c)`.
//!
//! Block `k` owns digit places `m_k+1 ..= m_{k+1}`. Inside it, places up to
//! `n_k` are free and the window `(n_k + c, m_{k+1} - c]` is constrained.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("s = {s} is outside [d-1, d] for d = {d}")]
    OutOfRange { s: String, d: usize },
    #[error("infeasible schedule at block {k}: {detail}")]
    InfeasibleSchedule { k: usize, detail: String },
    #[error("block index {k} outside 1..={blocks}")]
    IndexOutOfRange { k: usize, blocks: usize },
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

/// `alpha = s - (d - 1)`.
pub fn alpha_for(s: Rational, d: usize) -> Result<Rational, ScheduleError> {
    let lo = Rational::from_integer(d as i64 - 1);
    let hi = Rational::from_integer(d as i64);
    if d == 0 || s < lo || s > hi {
        return Err(ScheduleError::OutOfRange {
            s: s.to_string(),
            d,
        });
    }
    Ok(s - lo)
}

/// The constrained digit places `(lo, hi]` of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// Exclusive lower end, `n_k + c`.
    pub lo: u32,
    /// Inclusive upper end, `m_{k+1} - c`.
    pub hi: u32,
}

impl Window {
    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn len(&self) -> u32 {
        self.hi.saturating_sub(self.lo)
    }

    pub fn places(&self) -> std::ops::RangeInclusive<u32> {
        self.lo + 1..=self.hi
    }

    pub fn contains(&self, j: u32) -> bool {
        self.lo < j && j <= self.hi
    }

    /// The window with one place removed at each end.
    pub fn shrunk(&self) -> Window {
        Window {
            lo: self.lo + 1,
            hi: self.hi.saturating_sub(1).max(self.lo + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleRule {
    /// A fixed `m_1..m_{K+1}`. With `widen`, entries are raised where needed.
    Explicit { m: Vec<u32>, widen: bool },
    /// `m_2 = base`, `m_{k+1} = max(k m_k, ceil(ratio m_k))`, always widened.
    Geometric {
        blocks: usize,
        base: u32,
        #[serde(with = "crate::rational::as_string")]
        ratio: Rational,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Holds trivially (no constrained places when alpha = 1).
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub constraint: String,
    pub block: Option<usize>,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    fn push(&mut self, constraint: &str, block: Option<usize>, ok: bool, detail: String) {
        self.checks.push(ConstraintCheck {
            constraint: constraint.to_string(),
            block,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    c: u32,
    m: Vec<u32>,
    n: Vec<u32>,
    #[serde(with = "crate::rational::as_string")]
    alpha: Rational,
    n_functionals: usize,
}

/// `m_k + ceil(alpha (m_{k+1} - m_k))`.
pub fn free_end(alpha: Rational, m_k: u32, m_next: u32) -> u32 {
    let len = (m_next - m_k) as i64;
    let scaled = Ratio::from_integer(len) * alpha;
    m_k + scaled.numer().div_ceil(scaled.denom()) as u32
}

fn window_nonempty(alpha: Rational, c: u32, m_k: u32, m_next: u32) -> bool {
    m_next > m_k && free_end(alpha, m_k, m_next) + c < m_next.saturating_sub(c)
}

/// Smallest `m_{k+1} >= lower` whose window is nonempty.
fn widen_to_feasible(alpha: Rational, c: u32, m_k: u32, lower: u32) -> Option<u32> {
    let mut m_next = lower.max(m_k + 1);
    // Window length grows like (1 - alpha) * L, so this terminates for alpha < 1.
    let limit = m_next.checked_add(1 << 24)?;
    while !window_nonempty(alpha, c, m_k, m_next) {
        m_next += 1;
        if m_next > limit {
            return None;
        }
    }
    Some(m_next)
}

impl BlockSchedule {
    /// Generates a schedule for `alpha`, margin `c` and `n_functionals` functionals.
    pub fn generate(
        alpha: Rational,
        c: u32,
        n_functionals: usize,
        rule: &ScheduleRule,
    ) -> Result<Self, ScheduleError> {
        check_alpha(alpha)?;
        if n_functionals == 0 {
            return Err(ScheduleError::Invalid("norm has no functionals".into()));
        }
        let degenerate = alpha == Rational::one();
        let m = match rule {
            ScheduleRule::Explicit { m, widen } => {
                if m.first() != Some(&1) {
                    return Err(ScheduleError::Invalid(format!(
                        "m must start with m_1 = 1, got {m:?}"
                    )));
                }
                if !widen {
                    m.clone()
                } else {
                    let mut out = vec![1u32];
                    for (k, &given) in m.iter().enumerate().skip(1) {
                        let prev = out[k - 1];
                        let mut lower = given.max(k as u32 * prev);
                        if k == 1 {
                            lower = lower.max(2 * c + 1);
                        }
                        // Windows are empty for alpha = 1; only the growth bound applies.
                        let next = if degenerate {
                            Some(lower.max(prev + 1))
                        } else {
                            widen_to_feasible(alpha, c, prev, lower)
                        }
                        .ok_or_else(|| ScheduleError::InfeasibleSchedule {
                            k,
                            detail: "no feasible widening".into(),
                        })?;
                        out.push(next);
                    }
                    out
                }
            }
            ScheduleRule::Geometric {
                blocks,
                base,
                ratio,
            } => {
                if *ratio < Rational::one() {
                    return Err(ScheduleError::Invalid(format!(
                        "geometric ratio {ratio} must be at least 1"
                    )));
                }
                let mut out = vec![1u32];
                for k in 1..=*blocks {
                    let prev = out[k - 1];
                    let grown = (*ratio * Rational::from_integer(prev as i64)).ceil().to_integer() as u32;
                    let mut lower = (k as u32 * prev).max(grown);
                    if k == 1 {
                        lower = lower.max(*base).max(2 * c + 1);
                    }
                    let next = if degenerate {
                        lower.max(prev + 1)
                    } else {
                        widen_to_feasible(alpha, c, prev, lower).ok_or_else(|| {
                            ScheduleError::InfeasibleSchedule {
                                k,
                                detail: "no feasible widening".into(),
                            }
                        })?
                    };
                    out.push(next);
                }
                out
            }
        };
        let n = m
            .windows(2)
            .map(|w| {
                if w[1] > w[0] {
                    free_end(alpha, w[0], w[1])
                } else {
                    w[0]
                }
            })
            .collect();
        let schedule = BlockSchedule {
            c,
            m,
            n,
            alpha,
            n_functionals,
        };
        let report = schedule.validate();
        if let Some(fail) = report.failures().next() {
            return Err(ScheduleError::InfeasibleSchedule {
                k: fail.block.unwrap_or(0),
                detail: format!("{}: {}", fail.constraint, fail.detail),
            });
        }
        Ok(schedule)
    }

    /// Reassembles a schedule from stored parts, rejecting anything that fails validation.
    pub fn from_parts(
        c: u32,
        m: Vec<u32>,
        n: Vec<u32>,
        alpha: Rational,
        n_functionals: usize,
    ) -> Result<Self, ScheduleError> {
        let schedule = BlockSchedule {
            c,
            m,
            n,
            alpha,
            n_functionals,
        };
        let report = schedule.validate();
        if !report.passed() {
            let msgs: Vec<String> = report
                .failures()
                .map(|f| format!("{} ({})", f.constraint, f.detail))
                .collect();
            return Err(ScheduleError::Invalid(msgs.join("; ")));
        }
        Ok(schedule)
    }

    /// Checks every schedule constraint and reports each one.
    pub fn validate(&self) -> ScheduleReport {
        let mut r = ScheduleReport { checks: Vec::new() };
        let alpha_ok = self.alpha >= Rational::zero() && self.alpha <= Rational::one();
        r.push("alpha in [0,1]", None, alpha_ok, format!("alpha = {}", self.alpha));
        r.push(
            "N >= 1",
            None,
            self.n_functionals >= 1,
            format!("N = {}", self.n_functionals),
        );
        r.push(
            "m_1 = 1",
            None,
            self.m.first() == Some(&1),
            format!("m = {:?}", self.m),
        );
        let increasing = self.m.windows(2).all(|w| w[0] < w[1]);
        r.push("m strictly increasing", None, increasing, String::new());
        if let Some(&m2) = self.m.get(1) {
            r.push("2c < m_2", Some(1), 2 * self.c < m2, format!("2c = {}, m_2 = {m2}", 2 * self.c));
        }
        r.push(
            "n has K entries",
            None,
            self.n.len() + 1 == self.m.len(),
            format!("|m| = {}, |n| = {}", self.m.len(), self.n.len()),
        );
        let degenerate = self.alpha == Rational::one();
        for k in 1..self.m.len() {
            let (mk, mn) = (self.m[k - 1], self.m[k]);
            let bound = k as u64 * mk as u64;
            r.push(
                "k m_k <= m_{k+1}",
                Some(k),
                bound <= mn as u64,
                format!("{k}*{mk} = {bound} vs m_{} = {mn}", k + 1),
            );
            let Some(&nk) = self.n.get(k - 1) else { continue };
            if alpha_ok && mn > mk {
                let expected = free_end(self.alpha, mk, mn);
                r.push(
                    "n_k = m_k + ceil(alpha (m_{k+1} - m_k))",
                    Some(k),
                    nk == expected,
                    format!("n_{k} = {nk}, expected {expected}"),
                );
            }
            let detail = format!(
                "n_{k} + c = {}, m_{} - c = {}",
                nk + self.c,
                k + 1,
                i64::from(mn) - i64::from(self.c)
            );
            if degenerate {
                r.checks.push(ConstraintCheck {
                    constraint: "n_k + c < m_{k+1} - c".into(),
                    block: Some(k),
                    status: CheckStatus::Vacuous,
                    detail: format!("alpha = 1, no constrained places; {detail}"),
                });
            } else {
                r.push(
                    "n_k + c < m_{k+1} - c",
                    Some(k),
                    i64::from(nk + self.c) < i64::from(mn) - i64::from(self.c),
                    detail,
                );
            }
        }
        r
    }

    pub fn c(&self) -> u32 {
        self.c
    }

    pub fn alpha(&self) -> Rational {
        self.alpha
    }

    pub fn n_functionals(&self) -> usize {
        self.n_functionals
    }

    /// Number of blocks `K`.
    pub fn blocks(&self) -> usize {
        self.n.len()
    }

    pub fn m_list(&self) -> &[u32] {
        &self.m
    }

    pub fn n_list(&self) -> &[u32] {
        &self.n
    }

    /// `m_k`, one-based, for `k` in `1..=K+1`.
    pub fn m(&self, k: usize) -> u32 {
        self.m[k - 1]
    }

    /// `n_k`, one-based.
    pub fn n(&self, k: usize) -> u32 {
        self.n[k - 1]
    }

    /// Stored digit precision of constructed points, `m_{K+1}`.
    pub fn precision(&self) -> u32 {
        *self.m.last().expect("schedule has at least m_1")
    }

    /// `alpha = 1`: every window is empty and the construction is unconstrained.
    pub fn is_degenerate(&self) -> bool {
        self.alpha == Rational::one()
    }

    fn check_block(&self, k: usize) -> Result<(), ScheduleError> {
        if k == 0 || k > self.blocks() {
            return Err(ScheduleError::IndexOutOfRange {
                k,
                blocks: self.blocks(),
            });
        }
        Ok(())
    }

    /// Constrained places `(n_k + c, m_{k+1} - c]` of block `k`.
    pub fn window(&self, k: usize) -> Result<Window, ScheduleError> {
        self.check_block(k)?;
        let lo = self.n(k) + self.c;
        let hi = self.m(k + 1).saturating_sub(self.c);
        Ok(Window { lo, hi: hi.max(lo) })
    }

    /// One-based functional index used by block `k`: `((k - 1) mod N) + 1`.
    pub fn block_functional(&self, k: usize) -> usize {
        block_functional(k, self.n_functionals)
    }

    /// Blocks whose constraint uses functional `ell`.
    pub fn blocks_for(&self, ell: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=self.blocks()).filter(move |&k| self.block_functional(k) == ell)
    }
}

pub fn block_functional(k: usize, n_functionals: usize) -> usize {
    (k.max(1) - 1) % n_functionals.max(1) + 1
}

fn check_alpha(alpha: Rational) -> Result<(), ScheduleError> {
    if alpha < Rational::zero() || alpha > Rational::one() {
        return Err(ScheduleError::Invalid(format!("alpha = {alpha} outside [0,1]")));
    }
    Ok(())
}
