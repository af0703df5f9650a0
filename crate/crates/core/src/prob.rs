//! Finite distributions, sparse joint tables and information functionals.
//!
//! All logarithms are natural, so every value is in nats. The convention
//! `0 ln 0 = 0` holds throughout and zero-mass entries are never stored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution before renormalization.
pub const NORM_TOL: f64 = 1e-12;

/// `x ln x` with the continuous extension at zero.
#[inline]
pub fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

fn check_entries(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let mut sum = 0.0;
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeProbability { index, value });
        }
        sum += value;
    }
    Ok(sum)
}

/// Probability vector over `{0, ..., len-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dist {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Dist {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Dist::new(v)
    }
}

impl From<Dist> for Vec<f64> {
    fn from(d: Dist) -> Vec<f64> {
        d.probs
    }
}

impl Dist {
    /// Validates a probability vector. A total within `NORM_TOL` of 1 is
    /// renormalized; anything further off is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum = check_entries(&probs)?;
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self::scaled(probs, sum))
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum = check_entries(&weights)?;
        if sum <= 0.0 {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self::scaled(weights, sum))
    }

    fn scaled(mut probs: Vec<f64>, sum: f64) -> Self {
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Dist { probs }
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform distribution needs a nonempty alphabet");
        Dist { probs: vec![1.0 / len as f64; len] }
    }

    /// Point mass at `index`.
    pub fn point(len: usize, index: usize) -> Self {
        assert!(index < len);
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Dist { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Index drawn by inverse-CDF from a uniform variate `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// Shannon entropy `-sum p ln p` in nats.
pub fn entropy(d: &Dist) -> f64 {
    -d.probs.iter().map(|&p| xlnx(p)).sum::<f64>()
}

/// Sparse joint law over `rows x cols`. Only positive entries are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl JointTable {
    /// Builds a table from `(row, col, prob)` triples. Repeated cells add up.
    /// Total mass must be within `NORM_TOL` of 1.
    pub fn new(rows: usize, cols: usize, cells: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let (entries, sum) = Self::collect(rows, cols, cells)?;
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self::scaled(rows, cols, entries, sum))
    }

    /// Like [`JointTable::new`] but normalizes any positive total.
    pub fn from_weights(rows: usize, cols: usize, cells: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let (entries, sum) = Self::collect(rows, cols, cells)?;
        if sum <= 0.0 {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self::scaled(rows, cols, entries, sum))
    }

    /// Dense row-major matrix of joint probabilities.
    pub fn from_dense(matrix: &[Vec<f64>]) -> Result<Self> {
        let rows = matrix.len();
        let cols = matrix.first().map_or(0, |r| r.len());
        for r in matrix {
            if r.len() != cols {
                return Err(Error::LengthMismatch { expected: cols, got: r.len() });
            }
        }
        Self::new(
            rows,
            cols,
            matrix.iter().enumerate().flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &p)| (i, j, p))),
        )
    }

    /// Independent coupling of two marginals.
    pub fn product(a: &Dist, b: &Dist) -> Self {
        let mut entries = BTreeMap::new();
        for (i, &pa) in a.probs().iter().enumerate() {
            for (j, &pb) in b.probs().iter().enumerate() {
                if pa * pb > 0.0 {
                    entries.insert((i, j), pa * pb);
                }
            }
        }
        let sum: f64 = entries.values().sum();
        Self::scaled(a.len(), b.len(), entries, sum)
    }

    fn collect(
        rows: usize,
        cols: usize,
        cells: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<(BTreeMap<(usize, usize), f64>, f64)> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty);
        }
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (idx, (r, c, p)) in cells.into_iter().enumerate() {
            if r >= rows {
                return Err(Error::OutOfRange { index: r, size: rows });
            }
            if c >= cols {
                return Err(Error::OutOfRange { index: c, size: cols });
            }
            if !p.is_finite() {
                return Err(Error::NonFinite { index: idx });
            }
            if p < 0.0 {
                return Err(Error::NegativeProbability { index: idx, value: p });
            }
            if p > 0.0 {
                *entries.entry((r, c)).or_insert(0.0) += p;
            }
        }
        let sum = entries.values().sum();
        Ok((entries, sum))
    }

    fn scaled(rows: usize, cols: usize, mut entries: BTreeMap<(usize, usize), f64>, sum: f64) -> Self {
        if sum != 1.0 {
            entries.values_mut().for_each(|p| *p /= sum);
        }
        JointTable { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored (positive) cells.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries.get(&(r, c)).copied().unwrap_or(0.0)
    }

    /// Positive cells in `(row, col)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(r, c), &p)| (r, c, p))
    }

    fn row_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.rows];
        for (&(r, _), &p) in &self.entries {
            w[r] += p;
        }
        w
    }

    fn col_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.cols];
        for (&(_, c), &p) in &self.entries {
            w[c] += p;
        }
        w
    }

    pub fn row_marginal(&self) -> Dist {
        Dist::from_weights(self.row_weights()).expect("table has positive mass")
    }

    pub fn col_marginal(&self) -> Dist {
        Dist::from_weights(self.col_weights()).expect("table has positive mass")
    }

    pub fn transpose(&self) -> Self {
        JointTable {
            rows: self.cols,
            cols: self.rows,
            entries: self.entries.iter().map(|(&(r, c), &p)| ((c, r), p)).collect(),
        }
    }

    /// Push-forward of the table through symbol maps on each coordinate.
    pub fn map(&self, rows: usize, cols: usize, fr: impl Fn(usize) -> usize, fc: impl Fn(usize) -> usize) -> Result<Self> {
        Self::from_weights(rows, cols, self.iter().map(|(r, c, p)| (fr(r), fc(c), p)))
    }

    /// Entropy of the joint law.
    pub fn joint_entropy(&self) -> f64 {
        -self.entries.values().map(|&p| xlnx(p)).sum::<f64>()
    }
}

/// `I(row; col) = sum p(r,c) ln[p(r,c) / (p(r) p(c))]`.
pub fn mutual_info(j: &JointTable) -> f64 {
    let pr = j.row_weights();
    let pc = j.col_weights();
    let i: f64 = j.iter().map(|(r, c, p)| p * (p / (pr[r] * pc[c])).ln()).sum();
    i.max(0.0)
}

/// `H(row | col) = H(row, col) - H(col)`.
pub fn cond_entropy(j: &JointTable) -> f64 {
    (j.joint_entropy() - entropy(&j.col_marginal())).max(0.0)
}

/// Information density `ln[p(r,c) / (p(r) p(c))]` at a support point.
pub fn info_density(j: &JointTable, r: usize, c: usize) -> Result<f64> {
    let p = j.get(r, c);
    if p <= 0.0 {
        return Err(Error::Domain(format!("cell ({r}, {c}) has zero mass; information density undefined")));
    }
    let pr: f64 = j.iter().filter(|&(rr, _, _)| rr == r).map(|(_, _, q)| q).sum();
    let pc: f64 = j.iter().filter(|&(_, cc, _)| cc == c).map(|(_, _, q)| q).sum();
    Ok((p / (pr * pc)).ln())
}
