//! Node-valued fields.
//!
//! A [`ScalarField`] carries one real value per node of a space. Quantities
//! that are only trustworthy away from the boundary (anything built from Γ
//! applied to Γ) come back as a [`MaskedField`], which records which nodes
//! were evaluated.

use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(len, 0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn exp(&self) -> Self {
        self.map(f64::exp)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::SizeMismatch { expected, found: self.len() });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: Self) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: Self) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: Self) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|x| -x)
    }
}

/// Field values restricted to a subset of nodes. Excluded nodes hold `NaN`.
#[derive(Debug, Clone)]
pub struct MaskedField {
    values: Vec<f64>,
    valid: Vec<bool>,
}

/// Equal masks and equal values on valid nodes.
impl PartialEq for MaskedField {
    fn eq(&self, other: &Self) -> bool {
        self.valid == other.valid && self.iter_valid().zip(other.iter_valid()).all(|(a, b)| a.1 == b.1)
    }
}

impl MaskedField {
    pub fn new(values: Vec<f64>, valid: Vec<bool>) -> Self {
        debug_assert_eq!(values.len(), valid.len());
        let values = values.into_iter().zip(&valid).map(|(v, &ok)| if ok { v } else { f64::NAN }).collect();
        Self { values, valid }
    }

    pub fn from_fn(valid: Vec<bool>, f: impl Fn(usize) -> f64) -> Self {
        let values = valid.iter().enumerate().map(|(i, &ok)| if ok { f(i) } else { f64::NAN }).collect();
        Self { values, valid }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.values[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn excluded(&self) -> Vec<usize> {
        self.valid.iter().enumerate().filter(|(_, &ok)| !ok).map(|(i, _)| i).collect()
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter(|(i, _)| self.valid[*i]).map(|(i, &v)| (i, v))
    }

    /// Combine two masked fields node-wise over the intersection of their masks.
    pub fn zip_with(&self, other: &MaskedField, f: impl Fn(f64, f64) -> f64) -> MaskedField {
        let valid: Vec<bool> = self.valid.iter().zip(&other.valid).map(|(a, b)| *a && *b).collect();
        MaskedField::from_fn(valid, |i| f(self.values[i], other.values[i]))
    }

    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> MaskedField {
        MaskedField::from_fn(self.valid.clone(), |i| f(i, self.values[i]))
    }

    pub fn restrict(&self, mask: &[bool]) -> MaskedField {
        let valid = self.valid.iter().zip(mask).map(|(a, b)| *a && *b).collect();
        MaskedField::new(self.values.clone(), valid)
    }

    pub fn min_valid(&self) -> Option<(usize, f64)> {
        self.iter_valid().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter_valid().fold(0.0, |m, (_, v)| m.max(v.abs()))
    }
}

/// The pair `(w, v)`: `d' = e^w d` and `m' = e^v m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalPair {
    pub w: ScalarField,
    pub v: ScalarField,
}

impl ConformalPair {
    pub fn new(w: ScalarField, v: ScalarField) -> Result<Self> {
        w.check_len(v.len())?;
        if let Some(bad) = w.iter().chain(v.iter()).find(|x| !x.is_finite()) {
            return Err(Error::InvalidSpace(format!("conformal pair contains non-finite value {bad}")));
        }
        Ok(Self { w, v })
    }

    pub fn identity(len: usize) -> Self {
        Self { w: ScalarField::zeros(len), v: ScalarField::zeros(len) }
    }

    /// `v = n·w`, the measure weight that matches an n-dimensional volume.
    pub fn volume_matched(w: ScalarField, n: f64) -> Self {
        let v = w.scale(n);
        Self { w, v }
    }

    pub fn inverse(&self) -> Self {
        Self { w: -&self.w, v: -&self.v }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}
