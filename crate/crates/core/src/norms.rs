//! Polyhedral norms `||x||_P = max_l |x . v^l|` with dyadic facet functionals.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::Dyadic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormError {
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("argmax is undefined for the zero vector")]
    ZeroVector,
    #[error("functionals span rank {rank} < d = {d}")]
    DegenerateNorm { rank: usize, d: usize },
    #[error("functional {index} has a zero pivot coordinate")]
    BadPivot { index: usize },
    #[error("coefficient {0} is not a dyadic rational")]
    NonDyadicCoefficient(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

/// One facet functional `v^l` with its pivot coordinate `i_l`.
///
/// The functional is sign-normalized so that the pivot coefficient is
/// positive; `|x . v|` is unchanged by the flip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Functional {
    coeffs: Vec<Dyadic>,
    pivot: usize,
}

impl Functional {
    /// Picks the first nonzero coordinate as pivot and flips the sign if needed.
    pub fn new(coeffs: Vec<Dyadic>) -> Result<Self, NormError> {
        let pivot = coeffs
            .iter()
            .position(|c| !c.is_zero())
            .ok_or(NormError::BadPivot { index: 0 })?;
        let coeffs = if coeffs[pivot].is_negative() {
            coeffs.iter().map(|c| -c).collect()
        } else {
            coeffs
        };
        Ok(Functional { coeffs, pivot })
    }

    /// Explicit pivot; fails if that coordinate is zero.
    pub fn with_pivot(coeffs: Vec<Dyadic>, pivot: usize) -> Result<Self, NormError> {
        match coeffs.get(pivot) {
            Some(c) if !c.is_zero() => {}
            _ => return Err(NormError::BadPivot { index: pivot }),
        }
        let coeffs = if coeffs[pivot].is_negative() {
            coeffs.iter().map(|c| -c).collect()
        } else {
            coeffs
        };
        Ok(Functional { coeffs, pivot })
    }

    pub fn from_ints(coeffs: &[i64]) -> Result<Self, NormError> {
        Functional::new(coeffs.iter().map(|&c| Dyadic::from_integer(c)).collect())
    }

    pub fn coeffs(&self) -> &[Dyadic] {
        &self.coeffs
    }

    /// Zero-based pivot coordinate.
    pub fn pivot(&self) -> usize {
        self.pivot
    }

    pub fn pivot_coeff(&self) -> &Dyadic {
        &self.coeffs[self.pivot]
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Largest coefficient precision; `coeff * 2^q` is an integer for all coefficients.
    pub fn precision(&self) -> u32 {
        self.coeffs.iter().map(Dyadic::precision).max().unwrap_or(0)
    }

    /// Coefficients scaled by `2^precision()`, as exact integers.
    pub fn integer_coeffs(&self) -> Vec<BigInt> {
        let q = self.precision();
        self.coeffs.iter().map(|c| c.floor_scaled(q)).collect()
    }

    pub fn l1_mass(&self) -> Dyadic {
        self.coeffs.iter().map(Dyadic::abs).sum()
    }

    pub fn dot(&self, x: &[Dyadic]) -> Dyadic {
        self.coeffs.iter().zip(x).map(|(v, xi)| v * xi).sum()
    }
}

/// A norm on `R^d` given by `N >= d` spanning functionals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyhedralNorm {
    d: usize,
    functionals: Vec<Functional>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormReport {
    pub d: usize,
    pub n_functionals: usize,
    pub rank: usize,
    /// Zero-based pivot coordinate per functional.
    pub pivots: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Linf,
    L1,
}

impl std::str::FromStr for Preset {
    type Err = NormError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linf" => Ok(Preset::Linf),
            "l1" => Ok(Preset::L1),
            other => Err(NormError::UnknownPreset(other.to_string())),
        }
    }
}

impl PolyhedralNorm {
    /// Validates dimensions, pivots and the spanning condition.
    pub fn new(d: usize, functionals: Vec<Functional>) -> Result<Self, NormError> {
        let norm = PolyhedralNorm { d, functionals };
        norm.validate()?;
        Ok(norm)
    }

    pub fn preset(preset: Preset, d: usize) -> Result<Self, NormError> {
        if d == 0 {
            return Err(NormError::ZeroDimension);
        }
        let functionals = match preset {
            Preset::Linf => (0..d)
                .map(|i| {
                    let mut v = vec![0i64; d];
                    v[i] = 1;
                    Functional::from_ints(&v)
                })
                .collect::<Result<Vec<_>, _>>()?,
            // max over sign patterns of |x . (1, +-1, ..., +-1)| is sum |x_i|
            Preset::L1 => (0..1u64 << (d - 1))
                .map(|mask| {
                    let v: Vec<i64> = (0..d)
                        .map(|i| {
                            if i == 0 {
                                1
                            } else if mask >> (d - 1 - i) & 1 == 1 {
                                -1
                            } else {
                                1
                            }
                        })
                        .collect();
                    Functional::from_ints(&v)
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        PolyhedralNorm::new(d, functionals)
    }

    /// Builds a norm from `[mantissa, precision]` pairs, one row per functional.
    pub fn custom(table: &[Vec<(i64, u32)>]) -> Result<Self, NormError> {
        let d = table.first().map(Vec::len).ok_or(NormError::ZeroDimension)?;
        let functionals = table
            .iter()
            .map(|row| Functional::new(row.iter().map(|&(m, p)| Dyadic::new(m, p)).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        PolyhedralNorm::new(d, functionals)
    }

    /// Builds a norm from exact rationals, rejecting non-dyadic denominators.
    pub fn from_rationals(table: &[Vec<Ratio<i64>>]) -> Result<Self, NormError> {
        let d = table.first().map(Vec::len).ok_or(NormError::ZeroDimension)?;
        let functionals = table
            .iter()
            .map(|row| {
                row.iter()
                    .map(ratio_to_dyadic)
                    .collect::<Result<Vec<_>, _>>()
                    .and_then(Functional::new)
            })
            .collect::<Result<Vec<_>, _>>()?;
        PolyhedralNorm::new(d, functionals)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    /// Functional `l`, one-based.
    pub fn functional(&self, ell: usize) -> &Functional {
        &self.functionals[ell - 1]
    }

    fn check_dim(&self, x: &[Dyadic]) -> Result<(), NormError> {
        if x.len() != self.d {
            return Err(NormError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[Dyadic]) -> Result<Dyadic, NormError> {
        self.check_dim(x)?;
        Ok(self
            .functionals
            .iter()
            .map(|f| f.dot(x).abs())
            .max()
            .unwrap_or_default())
    }

    /// Smallest one-based index attaining the maximum, with that value.
    pub fn argmax_with_value(&self, x: &[Dyadic]) -> Result<(usize, Dyadic), NormError> {
        self.check_dim(x)?;
        let mut best: Option<(usize, Dyadic)> = None;
        for (i, f) in self.functionals.iter().enumerate() {
            let v = f.dot(x).abs();
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((i + 1, v));
            }
        }
        match best {
            Some((_, ref v)) if v.is_zero() => Err(NormError::ZeroVector),
            Some(b) => Ok(b),
            None => Err(NormError::ZeroVector),
        }
    }

    pub fn argmax(&self, x: &[Dyadic]) -> Result<usize, NormError> {
        self.argmax_with_value(x).map(|(ell, _)| ell)
    }

    /// All one-based indices attaining the maximum.
    pub fn maximizers(&self, x: &[Dyadic]) -> Result<Vec<usize>, NormError> {
        let (_, best) = self.argmax_with_value(x)?;
        Ok(self
            .functionals
            .iter()
            .enumerate()
            .filter(|(_, f)| f.dot(x).abs() == best)
            .map(|(i, _)| i + 1)
            .collect())
    }

    pub fn validate(&self) -> Result<NormReport, NormError> {
        if self.d == 0 {
            return Err(NormError::ZeroDimension);
        }
        for (i, f) in self.functionals.iter().enumerate() {
            if f.dim() != self.d {
                return Err(NormError::DimensionMismatch {
                    expected: self.d,
                    got: f.dim(),
                });
            }
            if *f.pivot_coeff() <= Dyadic::zero() {
                return Err(NormError::BadPivot { index: i + 1 });
            }
        }
        let rank = self.rank();
        if rank < self.d {
            return Err(NormError::DegenerateNorm { rank, d: self.d });
        }
        Ok(NormReport {
            d: self.d,
            n_functionals: self.functionals.len(),
            rank,
            pivots: self.functionals.iter().map(Functional::pivot).collect(),
        })
    }

    /// Rank of the coefficient matrix by fraction-free elimination over the integers.
    fn rank(&self) -> usize {
        let q = self.functionals.iter().map(Functional::precision).max().unwrap_or(0);
        let mut rows: Vec<Vec<BigInt>> = self
            .functionals
            .iter()
            .map(|f| f.coeffs().iter().map(|c| c.floor_scaled(q)).collect())
            .collect();
        let mut rank = 0;
        for col in 0..self.d {
            let Some(pr) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
                continue;
            };
            rows.swap(rank, pr);
            let pivot_row = rows[rank].clone();
            for row in rows.iter_mut().skip(rank + 1) {
                if row[col].is_zero() {
                    continue;
                }
                let factor = row[col].clone();
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x = &*x * &pivot_row[col] - &factor * p;
                }
            }
            rank += 1;
        }
        rank
    }

    /// Smallest `c >= 1` with `max(sum_i |v_i|, 1 / v_pivot) <= 2^(c-3)` for every functional.
    pub fn min_c(&self) -> u32 {
        (1..)
            .find(|&c| self.satisfies_margin(c))
            .expect("a valid norm always admits a margin constant")
    }

    /// Whether `c` satisfies the margin condition for every functional.
    pub fn satisfies_margin(&self, c: u32) -> bool {
        self.functionals.iter().all(|f| {
            let bound = pow2(c as i64 - 3);
            let mass_ok = f.l1_mass() <= bound;
            // 1 / v <= 2^(c-3)  <=>  v * 2^(c-3) >= 1
            let pivot_ok = f.pivot_coeff() * &bound >= Dyadic::from_integer(1);
            mass_ok && pivot_ok
        })
    }
}

/// `2^e` as a dyadic, for any sign of `e`.
pub fn pow2(e: i64) -> Dyadic {
    if e >= 0 {
        Dyadic::from_integer(BigInt::one() << e as usize)
    } else {
        Dyadic::new(1, (-e) as u32)
    }
}

pub fn ratio_to_dyadic(r: &Ratio<i64>) -> Result<Dyadic, NormError> {
    let den = *r.denom();
    if den <= 0 || den & (den - 1) != 0 {
        return Err(NormError::NonDyadicCoefficient(r.to_string()));
    }
    Ok(Dyadic::new(*r.numer(), den.trailing_zeros()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(m: i64, p: u32) -> Dyadic {
        Dyadic::new(m, p)
    }

    #[test]
    fn eval_examples() {
        let linf = PolyhedralNorm::preset(Preset::Linf, 2).unwrap();
        assert_eq!(linf.eval(&[q(3, 2), q(1, 1)]).unwrap(), q(3, 2));
        let l1 = PolyhedralNorm::preset(Preset::L1, 2).unwrap();
        assert_eq!(l1.eval(&[q(3, 2), q(-1, 1)]).unwrap(), q(5, 2));
        assert_eq!(l1.eval(&[q(0, 0), q(0, 4)]).unwrap(), Dyadic::zero());
        assert_eq!(
            l1.eval(&[q(1, 1)]),
            Err(NormError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn argmax_examples() {
        let linf = PolyhedralNorm::preset(Preset::Linf, 2).unwrap();
        assert_eq!(linf.argmax(&[q(1, 1), q(1, 1)]).unwrap(), 1);
        assert_eq!(linf.argmax(&[q(1, 2), q(1, 1)]).unwrap(), 2);
        let l1 = PolyhedralNorm::preset(Preset::L1, 2).unwrap();
        assert_eq!(l1.argmax(&[q(1, 1), q(1, 2)]).unwrap(), 1);
        assert_eq!(
            l1.argmax(&[Dyadic::zero(), Dyadic::zero()]),
            Err(NormError::ZeroVector)
        );
        assert_eq!(linf.maximizers(&[q(1, 1), q(-1, 1)]).unwrap(), vec![1, 2]);
    }

    #[test]
    fn validate_examples() {
        let r = PolyhedralNorm::preset(Preset::Linf, 3).unwrap().validate().unwrap();
        assert_eq!(r.n_functionals, 3);
        let bad = PolyhedralNorm::new(
            2,
            vec![
                Functional::from_ints(&[1, 0]).unwrap(),
                Functional::from_ints(&[2, 0]).unwrap(),
            ],
        );
        assert_eq!(bad, Err(NormError::DegenerateNorm { rank: 1, d: 2 }));
        let l1 = PolyhedralNorm::preset(Preset::L1, 3).unwrap();
        assert_eq!(l1.len(), 4);
        assert_eq!(l1.validate().unwrap().rank, 3);
        assert!(Functional::from_ints(&[0, 0]).is_err());
        assert_eq!(
            Functional::with_pivot(vec![q(1, 0), q(0, 0)], 1),
            Err(NormError::BadPivot { index: 1 })
        );
    }

    #[test]
    fn preset_shapes() {
        let l1 = PolyhedralNorm::preset(Preset::L1, 2).unwrap();
        let rows: Vec<Vec<Dyadic>> = l1.functionals().iter().map(|f| f.coeffs().to_vec()).collect();
        assert_eq!(rows, vec![vec![q(1, 0), q(1, 0)], vec![q(1, 0), q(-1, 0)]]);
        let l13 = PolyhedralNorm::preset(Preset::L1, 3).unwrap();
        for f in l13.functionals() {
            assert_eq!(f.coeffs()[0], q(1, 0));
            assert!(f.coeffs()[1..].iter().all(|c| c.abs() == q(1, 0)));
        }
    }

    #[test]
    fn min_c_examples() {
        assert_eq!(PolyhedralNorm::preset(Preset::Linf, 2).unwrap().min_c(), 3);
        assert_eq!(PolyhedralNorm::preset(Preset::L1, 2).unwrap().min_c(), 4);
        let quarter = PolyhedralNorm::custom(&[vec![(1, 2), (0, 0)], vec![(0, 0), (1, 0)]]).unwrap();
        assert_eq!(quarter.min_c(), 5);
    }

    #[test]
    fn sign_normalization() {
        let f = Functional::new(vec![q(-1, 1), q(3, 0)]).unwrap();
        assert_eq!(f.pivot(), 0);
        assert_eq!(f.coeffs(), &[q(1, 1), q(-3, 0)]);
        let g = Functional::new(vec![q(0, 0), q(-1, 2)]).unwrap();
        assert_eq!(g.pivot(), 1);
        assert_eq!(g.pivot_coeff(), &q(1, 2));
    }

    #[test]
    fn non_dyadic_rejected() {
        let third = Ratio::new(1, 3);
        assert!(matches!(
            PolyhedralNorm::from_rationals(&[vec![third, Ratio::from_integer(0)]]),
            Err(NormError::NonDyadicCoefficient(_))
        ));
        let ok = PolyhedralNorm::from_rationals(&[
            vec![Ratio::new(1, 2), Ratio::from_integer(0)],
            vec![Ratio::from_integer(0), Ratio::new(-3, 4)],
        ])
        .unwrap();
        assert_eq!(ok.functional(2).pivot_coeff(), &q(3, 2));
    }
}
