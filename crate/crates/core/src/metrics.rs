//! Error metrics between ground truth `y` and estimates `y_hat`.
//!
//! `r2` uses the total sum of squares `sum (y_i - mean(y))^2` and is
//! undefined for constant `y`. MAPE is a percentage and is infinite as soon
//! as any `y_i` is zero. NMAE and NRMSE divide by `max y` and are
//! percentages too.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mape<T> {
    Value(T),
    Infinite,
}

impl<T: Scalar> fmt::Display for Mape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mape::Value(v) => write!(f, "{v}"),
            Mape::Infinite => f.write_str("inf"),
        }
    }
}

impl<T: Scalar> Serialize for Mape<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Mape::Value(v) => v.serialize(s),
            Mape::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrMarker<T> {
    Number(T),
    Marker(String),
}

impl<'de, T: Scalar> Deserialize<'de> for Mape<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrMarker::<T>::deserialize(d)? {
            NumberOrMarker::Number(v) => Ok(Mape::Value(v)),
            NumberOrMarker::Marker(m) if m == "inf" => Ok(Mape::Infinite),
            NumberOrMarker::Marker(m) => Err(de::Error::custom(format!("unexpected MAPE marker `{m}`"))),
        }
    }
}

fn serialize_r2<T: Scalar, S: Serializer>(v: &Option<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => x.serialize(s),
        None => s.serialize_str("undefined"),
    }
}

fn deserialize_r2<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<T>, D::Error> {
    match NumberOrMarker::<T>::deserialize(d)? {
        NumberOrMarker::Number(v) => Ok(Some(v)),
        NumberOrMarker::Marker(m) if m == "undefined" => Ok(None),
        NumberOrMarker::Marker(m) => Err(de::Error::custom(format!("unexpected R2 marker `{m}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub mae: T,
    pub rmse: T,
    #[serde(serialize_with = "serialize_r2", deserialize_with = "deserialize_r2")]
    pub r2: Option<T>,
    pub mape: Mape<T>,
    pub nmae_pct: T,
    pub nrmse_pct: T,
    pub n: usize,
    pub max_y: T,
}

fn check<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn mae<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check(y, y_hat)?;
    let s: T = y.iter().zip(y_hat).map(|(&a, &b)| (b - a).abs()).sum();
    Ok(s / T::from_usize_lossy(y.len()))
}

pub fn rmse<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<T> {
    check(y, y_hat)?;
    let s: T = y.iter().zip(y_hat).map(|(&a, &b)| (b - a) * (b - a)).sum();
    Ok((s / T::from_usize_lossy(y.len())).sqrt())
}

/// `None` when `y` is constant.
pub fn r2<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<Option<T>> {
    check(y, y_hat)?;
    let mean = y.iter().copied().sum::<T>() / T::from_usize_lossy(y.len());
    let ss_tot: T = y.iter().map(|&a| (a - mean) * (a - mean)).sum();
    if ss_tot == T::zero() {
        return Ok(None);
    }
    let ss_res: T = y.iter().zip(y_hat).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(Some(T::one() - ss_res / ss_tot))
}

pub fn mape<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<Mape<T>> {
    check(y, y_hat)?;
    if y.iter().any(|&a| a == T::zero()) {
        return Ok(Mape::Infinite);
    }
    let s: T = y.iter().zip(y_hat).map(|(&a, &b)| (b - a).abs() / a).sum();
    Ok(Mape::Value(s / T::from_usize_lossy(y.len()) * T::lit(100.0)))
}

fn max_of<T: Scalar>(y: &[T]) -> Result<T> {
    let m = y
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    if !(m > T::zero()) {
        return Err(Error::Numeric("max of ground truth must be > 0 for normalization".into()));
    }
    Ok(m)
}

pub fn normalize_by_max<T: Scalar>(value: T, max_y: T) -> Result<T> {
    if !(max_y > T::zero()) {
        return Err(Error::Numeric("max of ground truth must be > 0 for normalization".into()));
    }
    Ok(value / max_y * T::lit(100.0))
}

pub fn nmae<T: Scalar>(mae_value: T, y: &[T]) -> Result<T> {
    normalize_by_max(mae_value, max_of(y)?)
}

pub fn nrmse<T: Scalar>(rmse_value: T, y: &[T]) -> Result<T> {
    normalize_by_max(rmse_value, max_of(y)?)
}

pub fn evaluate<T: Scalar>(y: &[T], y_hat: &[T]) -> Result<EvalReport<T>> {
    let mae_v = mae(y, y_hat)?;
    let rmse_v = rmse(y, y_hat)?;
    let max_y = max_of(y)?;
    Ok(EvalReport {
        mae: mae_v,
        rmse: rmse_v,
        r2: r2(y, y_hat)?,
        mape: mape(y, y_hat)?,
        nmae_pct: normalize_by_max(mae_v, max_y)?,
        nrmse_pct: normalize_by_max(rmse_v, max_y)?,
        n: y.len(),
        max_y,
    })
}
