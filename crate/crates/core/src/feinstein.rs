//! Feinstein codes for noisy computations.
//!
//! A code is a list of entries `(y_i, A_i, Gamma_i)`: an output block of the
//! perfect function, a set of inputs in its fiber, and a decoding region of
//! device outputs. The regions are disjoint, every input in `A_i` lands in
//! `Gamma_i` with probability at least `1 - epsilon`, and `A_i` carries more
//! than `1 - lambda` of the fiber's conditional mass.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{BlockSpace, DEFAULT_ENUM_CAP};
use crate::channels::Hookup;
use crate::error::{Error, Result};
use crate::processes::typical_predicate;

/// Strict margin applied to both code conditions during construction, so that
/// verification with a different summation order still passes.
pub const CONSTRUCTION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeEntry {
    pub y: usize,
    /// Input block codes, increasing.
    pub a: Vec<usize>,
    /// Device output block codes, increasing.
    pub gamma: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeinsteinCode {
    pub n: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub x_space: BlockSpace,
    pub y_space: BlockSpace,
    pub z_space: BlockSpace,
    pub entries: Vec<CodeEntry>,
    /// Set when no entry was admissible and the single fallback entry was used.
    pub trivial: bool,
}

impl FeinsteinCode {
    /// Number of entries `M`.
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Index of the entry whose decoding region contains `z`, if any.
    pub fn decode(&self, z: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.gamma.binary_search(&z).is_ok())
    }

    /// Lookup table from output code to entry index.
    pub fn decoder_table(&self) -> Result<Vec<Option<usize>>> {
        let mut t = vec![None; self.z_space.size_capped(DEFAULT_ENUM_CAP)?];
        for (i, e) in self.entries.iter().enumerate() {
            for &z in &e.gamma {
                t[z].get_or_insert(i);
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeinsteinOptions {
    /// Tolerance of the conditional typicality filter applied to fibers.
    pub typical_eps: f64,
}

impl Default for FeinsteinOptions {
    fn default() -> Self {
        FeinsteinOptions { typical_eps: 0.1 }
    }
}

fn check_params(epsilon: f64, lambda: f64) -> Result<()> {
    for (name, v) in [("epsilon", epsilon), ("lambda", lambda)] {
        if !(v > 0.0 && v < 0.5) {
            return Err(Error::Domain(format!("{name} = {v} must lie in (0, 1/2)")));
        }
    }
    Ok(())
}

/// Inputs of a set grouped by identical device rows: `(representative, mass)`.
fn group_by_class(h: &Hookup, xs: &[(usize, f64)]) -> (Vec<(usize, f64)>, Vec<usize>) {
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut classes: Vec<(usize, f64)> = Vec::new();
    let mut member_class = Vec::with_capacity(xs.len());
    for &(x, p) in xs {
        let c = h.device_class(x);
        let i = *index.entry(c).or_insert_with(|| {
            classes.push((x, 0.0));
            classes.len() - 1
        });
        classes[i].1 += p;
        member_class.push(i);
    }
    (classes, member_class)
}

fn dense_row(h: &Hookup, x: usize, len: usize) -> Vec<f64> {
    let mut row = vec![0.0; len];
    for (z, p) in h.z_given_x(x) {
        row[z] = p;
    }
    row
}

/// Shortest prefix of `order` making the entry admissible; returns its length.
fn admissible_prefix(order: &[usize], class_rows: &[Vec<f64>], class_mass: &[f64], epsilon: f64, lambda: f64) -> Option<usize> {
    let need_row = 1.0 - epsilon + CONSTRUCTION_MARGIN;
    let need_mass = 1.0 - lambda + CONSTRUCTION_MARGIN;
    let mut acc = vec![0.0; class_rows.len()];
    let mut covered = 0.0;
    for (k, &z) in order.iter().enumerate() {
        for (c, row) in class_rows.iter().enumerate() {
            let before = acc[c];
            acc[c] += row[z];
            if before < need_row && acc[c] >= need_row {
                covered += class_mass[c];
            }
        }
        if covered > need_mass {
            return Some(k + 1);
        }
    }
    None
}

/// Tries to build an entry for `y` from the inputs in `base` (with their
/// conditional masses given `y`) using only outputs not yet `used`.
fn try_entry(h: &Hookup, y: usize, zy: &[f64], base: &[(usize, f64)], used: &[bool], pz: &[f64], epsilon: f64, lambda: f64) -> Option<CodeEntry> {
    let nz = used.len();
    let (classes, member_class) = group_by_class(h, base);
    let class_rows: Vec<Vec<f64>> = classes.iter().map(|&(x, _)| dense_row(h, x, nz)).collect();
    let class_mass: Vec<f64> = classes.iter().map(|c| c.1).collect();
    let mut free: Vec<usize> = (0..nz).filter(|&z| !used[z] && zy[z] > 0.0).collect();
    // information density order, then conditional mass order
    free.sort_by(|&a, &b| (zy[b] / pz[b]).total_cmp(&(zy[a] / pz[a])).then(a.cmp(&b)));
    let by_density = free.clone();
    free.sort_by(|&a, &b| zy[b].total_cmp(&zy[a]).then(a.cmp(&b)));
    let by_mass = free;
    let k1 = admissible_prefix(&by_density, &class_rows, &class_mass, epsilon, lambda);
    let k2 = admissible_prefix(&by_mass, &class_rows, &class_mass, epsilon, lambda);
    let (order, k) = match (k1, k2) {
        (Some(a), Some(b)) if b < a => (by_mass, b),
        (Some(a), _) => (by_density, a),
        (None, Some(b)) => (by_mass, b),
        (None, None) => return None,
    };
    let mut gamma: Vec<usize> = order[..k].to_vec();
    gamma.sort_unstable();
    let need_row = 1.0 - epsilon + CONSTRUCTION_MARGIN;
    let good: Vec<bool> = class_rows.iter().map(|row| gamma.iter().map(|&z| row[z]).sum::<f64>() >= need_row).collect();
    let mut a: Vec<usize> = base.iter().zip(&member_class).filter(|(_, &c)| good[c]).map(|(&(x, _), _)| x).collect();
    a.sort_unstable();
    Some(CodeEntry { y, a, gamma })
}

/// Candidate outputs in decreasing probability, ties by increasing code.
pub fn candidate_order(h: &Hookup) -> Vec<usize> {
    let mut ys = h.y_support();
    ys.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ys.into_iter().map(|(y, _)| y).collect()
}

/// Greedy exhaustion over all candidate outputs in the canonical order.
pub fn greedy_construct(h: &Hookup, epsilon: f64, lambda: f64, opts: &FeinsteinOptions) -> Result<FeinsteinCode> {
    greedy_with_order(h, epsilon, lambda, &candidate_order(h), opts)
}

/// Greedy exhaustion over candidates in the given order. Each candidate first
/// tries its conditionally typical inputs and falls back to its whole fiber;
/// the decoding region is the shorter admissible prefix of the free outputs
/// sorted by information density or by conditional mass.
pub fn greedy_with_order(h: &Hookup, epsilon: f64, lambda: f64, order: &[usize], opts: &FeinsteinOptions) -> Result<FeinsteinCode> {
    check_params(epsilon, lambda)?;
    let nz = h.z_space.size_capped(DEFAULT_ENUM_CAP)?;
    let pz = h.z_law();
    let n = h.n;
    let target = h.cond_entropy_x_given_y() / n as f64;
    let mut used = vec![false; nz];
    let mut entries = Vec::new();
    for &y in order {
        // an admissible entry needs (1 - lambda)(1 - epsilon) of P(. | y) on free outputs
        let zy = h.z_given_y(y);
        let free_mass: f64 = zy.iter().zip(&used).filter(|(_, &u)| !u).map(|(p, _)| p).sum();
        if free_mass < (1.0 - lambda) * (1.0 - epsilon) {
            continue;
        }
        // the whole fiber on all free outputs bounds what any entry for y can reach
        let reach: f64 = h
            .fiber_classes(y)
            .into_iter()
            .filter(|&(x, _)| h.z_given_x(x).into_iter().filter(|&(z, _)| !used[z]).map(|(_, p)| p).sum::<f64>() >= 1.0 - epsilon + CONSTRUCTION_MARGIN)
            .map(|(_, m)| m)
            .sum();
        if reach <= 1.0 - lambda + CONSTRUCTION_MARGIN {
            continue;
        }
        let fiber = h.fiber(y);
        let typical: Vec<(usize, f64)> =
            fiber.iter().copied().filter(|&(_, p)| typical_predicate(p.ln(), n, target, opts.typical_eps)).collect();
        let typical_mass: f64 = typical.iter().map(|t| t.1).sum();
        let mut entry = None;
        if typical_mass > 1.0 - lambda + CONSTRUCTION_MARGIN && typical.len() < fiber.len() {
            entry = try_entry(h, y, &zy, &typical, &used, &pz, epsilon, lambda);
        }
        if entry.is_none() {
            entry = try_entry(h, y, &zy, &fiber, &used, &pz, epsilon, lambda);
        }
        if let Some(e) = entry {
            for &z in &e.gamma {
                used[z] = true;
            }
            entries.push(e);
        }
    }
    let trivial = entries.is_empty();
    if trivial {
        if let Some(&y) = candidate_order(h).first() {
            let a = h.fiber(y).into_iter().map(|(x, _)| x).collect();
            entries.push(CodeEntry { y, a, gamma: (0..nz).collect() });
        }
    }
    Ok(FeinsteinCode {
        n,
        epsilon,
        lambda,
        x_space: h.x_space,
        y_space: h.y_space,
        z_space: h.z_space,
        entries,
        trivial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryCheck {
    pub y: usize,
    /// `epsilon - max_{x in A} P(Gamma^c | x)`.
    pub epsilon_slack: f64,
    /// `P(A | y) - (1 - lambda)`; must be strictly positive.
    pub lambda_slack: f64,
    /// Inputs of `A` outside the fiber of `y`.
    pub outside_fiber: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub entries: Vec<EntryCheck>,
    /// `(i, j, z)`: regions `i` and `j` share output `z` (first witness per pair).
    pub overlaps: Vec<(usize, usize, usize)>,
    pub violations: usize,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

fn check_dims(code: &FeinsteinCode, h: &Hookup) -> Result<()> {
    if code.n != h.n || code.x_space != h.x_space || code.y_space != h.y_space || code.z_space != h.z_space {
        return Err(Error::LengthMismatch { expected: h.n, got: code.n });
    }
    Ok(())
}

/// Checks every code condition directly against the hookup tables.
pub fn verify(code: &FeinsteinCode, h: &Hookup) -> Result<VerifyReport> {
    check_dims(code, h)?;
    let nz = h.z_space.size_capped(DEFAULT_ENUM_CAP)?;
    let mut owner: Vec<Option<usize>> = vec![None; nz];
    let mut overlaps = Vec::new();
    for (i, e) in code.entries.iter().enumerate() {
        for &z in &e.gamma {
            if z >= nz {
                return Err(Error::OutOfRange { index: z, size: nz });
            }
            match owner[z] {
                Some(j) if !overlaps.iter().any(|&(a, b, _)| a == j && b == i) => overlaps.push((j, i, z)),
                Some(_) => {}
                None => owner[z] = Some(i),
            }
        }
    }
    let entries: Vec<EntryCheck> = code
        .entries
        .par_iter()
        .map(|e| {
            let fiber: HashMap<usize, f64> = h.fiber(e.y).into_iter().collect();
            let members: Vec<(usize, f64)> = e.a.iter().filter_map(|x| fiber.get(x).map(|&p| (*x, p))).collect();
            let outside_fiber = e.a.len() - members.len();
            let (classes, _) = group_by_class(h, &members);
            let in_gamma: Vec<bool> = {
                let mut v = vec![false; nz];
                e.gamma.iter().for_each(|&z| v[z] = true);
                v
            };
            let worst = classes
                .iter()
                .map(|&(x, _)| 1.0 - h.z_given_x(x).into_iter().filter(|&(z, _)| in_gamma[z]).map(|(_, p)| p).sum::<f64>())
                .fold(0.0, f64::max);
            let mass: f64 = members.iter().map(|m| m.1).sum();
            EntryCheck { y: e.y, epsilon_slack: code.epsilon - worst, lambda_slack: mass - (1.0 - code.lambda), outside_fiber }
        })
        .collect();
    let violations = overlaps.len()
        + entries.iter().filter(|c| c.epsilon_slack < 0.0 || c.lambda_slack <= 0.0 || c.outside_fiber > 0).count();
    Ok(VerifyReport { entries, overlaps, violations })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnusedOutput {
    pub y: usize,
    pub prob: f64,
    /// `P(union of regions | y)`.
    pub union_given_y: f64,
    /// Mass of the best possible `A` on the free outputs, given `y`.
    pub extension_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalityReport {
    /// Unused outputs that would admit one more entry.
    pub extensible: Vec<usize>,
    pub unused: Vec<UnusedOutput>,
    /// Every unused output with positive mass has `P(union | y) > lambda * epsilon`.
    pub statement1: bool,
    /// `P_Z(union)`.
    pub union_mass: f64,
    /// `min((1 - lambda)(1 - epsilon), lambda * epsilon) * P(candidate outputs)`.
    pub statement2_bound: f64,
    pub statement2: bool,
    /// `M >= 1`.
    pub nonempty: bool,
}

impl MaximalityReport {
    pub fn inextensible(&self) -> bool {
        self.extensible.is_empty()
    }
}

/// Searches every unused output for a possible extension and evaluates the
/// two inequalities that hold for inextensible codes.
pub fn maximality_check(code: &FeinsteinCode, h: &Hookup) -> Result<MaximalityReport> {
    check_dims(code, h)?;
    let nz = h.z_space.size_capped(DEFAULT_ENUM_CAP)?;
    let mut in_union = vec![false; nz];
    for e in &code.entries {
        e.gamma.iter().for_each(|&z| in_union[z] = true);
    }
    let pz = h.z_law();
    let union_mass: f64 = (0..nz).filter(|&z| in_union[z]).map(|z| pz[z]).sum();
    let taken: std::collections::HashSet<usize> = code.entries.iter().map(|e| e.y).collect();
    let support = h.y_support();
    let total: f64 = support.iter().map(|s| s.1).sum();
    let unused: Vec<UnusedOutput> = support
        .par_iter()
        .filter(|(y, _)| !taken.contains(y))
        .map(|&(y, prob)| {
            let zy = h.z_given_y(y);
            let union_given_y = (0..nz).filter(|&z| in_union[z]).map(|z| zy[z]).sum();
            let fiber = h.fiber(y);
            let (classes, _) = group_by_class(h, &fiber);
            let extension_mass = classes
                .iter()
                .filter(|&&(x, _)| {
                    let hit: f64 = h.z_given_x(x).into_iter().filter(|&(z, _)| in_union[z]).map(|(_, p)| p).sum();
                    1.0 - hit >= 1.0 - code.epsilon
                })
                .map(|c| c.1)
                .sum();
            UnusedOutput { y, prob, union_given_y, extension_mass }
        })
        .collect();
    let extensible = unused.iter().filter(|u| u.extension_mass > 1.0 - code.lambda).map(|u| u.y).collect();
    let le = code.lambda * code.epsilon;
    let statement1 = unused.iter().all(|u| u.union_given_y > le);
    let statement2_bound = ((1.0 - code.lambda) * (1.0 - code.epsilon)).min(le) * total;
    Ok(MaximalityReport {
        extensible,
        statement1,
        statement2: union_mass > statement2_bound,
        union_mass,
        statement2_bound,
        nonempty: !code.entries.is_empty(),
        unused,
    })
}

/// `floor(exp(n (R - H(X^n | f^n) / n)))`, the code size promised at rate `R`.
/// `R` must lie below the hookup's measured typical input rate.
pub fn feinstein_rate_size(h: &Hookup, rate: f64) -> Result<u64> {
    let b = h.rate();
    if rate >= b {
        return Err(Error::Precondition(format!("rate {rate} is not below the typical input rate {b}")));
    }
    let exponent = h.n as f64 * rate - h.cond_entropy_x_given_y();
    let m = (exponent.exp() + 1e-9).floor();
    Ok(if m >= u64::MAX as f64 { u64::MAX } else { m as u64 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryDoc {
    y: Vec<usize>,
    a: Vec<Vec<usize>>,
    gamma: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeDoc {
    n: usize,
    epsilon: f64,
    lambda: f64,
    x_space: BlockSpace,
    y_space: BlockSpace,
    z_space: BlockSpace,
    trivial: bool,
    entries: Vec<EntryDoc>,
}

impl Serialize for FeinsteinCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = CodeDoc {
            n: self.n,
            epsilon: self.epsilon,
            lambda: self.lambda,
            x_space: self.x_space,
            y_space: self.y_space,
            z_space: self.z_space,
            trivial: self.trivial,
            entries: self
                .entries
                .iter()
                .map(|e| EntryDoc {
                    y: self.y_space.decode(e.y),
                    a: e.a.iter().map(|&x| self.x_space.decode(x)).collect(),
                    gamma: e.gamma.iter().map(|&z| self.z_space.decode(z)).collect(),
                })
                .collect(),
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeinsteinCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = CodeDoc::deserialize(d)?;
        let encode = |sp: &BlockSpace, b: &[usize]| -> std::result::Result<usize, D::Error> {
            sp.check(b).map_err(D::Error::custom)?;
            Ok(sp.encode(b))
        };
        let mut entries = Vec::with_capacity(doc.entries.len());
        for e in &doc.entries {
            let mut a = e.a.iter().map(|b| encode(&doc.x_space, b)).collect::<std::result::Result<Vec<_>, _>>()?;
            let mut gamma = e.gamma.iter().map(|b| encode(&doc.z_space, b)).collect::<std::result::Result<Vec<_>, _>>()?;
            a.sort_unstable();
            gamma.sort_unstable();
            entries.push(CodeEntry { y: encode(&doc.y_space, &e.y)?, a, gamma });
        }
        Ok(FeinsteinCode {
            n: doc.n,
            epsilon: doc.epsilon,
            lambda: doc.lambda,
            x_space: doc.x_space,
            y_space: doc.y_space,
            z_space: doc.z_space,
            entries,
            trivial: doc.trivial,
        })
    }
}
