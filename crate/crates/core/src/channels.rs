//! Block functions, block kernels and their pairing into noisy computations.
//!
//! A [`BlockFn`] is a deterministic map on blocks; a [`BlockKernel`] is a
//! conditional law on output blocks given an input block. Per-symbol functions
//! and memoryless kernels apply at any block length; table-backed ones only
//! at their own length.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::blocks::{BlockSpace, DEFAULT_ENUM_CAP};
use crate::error::{Error, Result};
use crate::prob::{entropy, xlnx, Dist, JointTable};
use crate::processes::{extend_capped, Source};

#[derive(Debug, Clone, PartialEq)]
enum FnMap {
    PerSymbol(Vec<usize>),
    Table { len_in: usize, len_out: usize, table: Vec<usize> },
}

/// Deterministic map from input blocks to output blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFn {
    in_alphabet: usize,
    out_alphabet: usize,
    /// Input length beyond which the output prefix depends only on the input
    /// prefix of the same length.
    pub horizon: usize,
    map: FnMap,
}

impl BlockFn {
    /// Applies `table[s]` at every position.
    pub fn per_symbol(in_alphabet: usize, out_alphabet: usize, table: Vec<usize>) -> Result<Self> {
        if table.len() != in_alphabet {
            return Err(Error::LengthMismatch { expected: in_alphabet, got: table.len() });
        }
        if let Some(&s) = table.iter().find(|&&s| s >= out_alphabet) {
            return Err(Error::OutOfRange { index: s, size: out_alphabet });
        }
        Ok(BlockFn { in_alphabet, out_alphabet, horizon: 1, map: FnMap::PerSymbol(table) })
    }

    /// Explicit table indexed by input block code, giving output block codes.
    pub fn from_table(in_alphabet: usize, len_in: usize, out_alphabet: usize, len_out: usize, table: Vec<usize>) -> Result<Self> {
        let rows = BlockSpace::new(in_alphabet, len_in).size()?;
        if table.len() != rows {
            return Err(Error::LengthMismatch { expected: rows, got: table.len() });
        }
        let outs = BlockSpace::new(out_alphabet, len_out).count();
        if let Some(&s) = table.iter().find(|&&s| s as u128 >= outs) {
            return Err(Error::OutOfRange { index: s, size: outs as usize });
        }
        Ok(BlockFn { in_alphabet, out_alphabet, horizon: len_in, map: FnMap::Table { len_in, len_out, table } })
    }

    pub fn identity(alphabet: usize) -> Self {
        BlockFn::per_symbol(alphabet, alphabet, (0..alphabet).collect()).expect("identity table is valid")
    }

    pub fn constant(in_alphabet: usize, out_alphabet: usize, value: usize) -> Result<Self> {
        BlockFn::per_symbol(in_alphabet, out_alphabet, vec![value; in_alphabet])
    }

    /// Gate on a pair of bits packed as the symbol `2 * a + b`.
    pub fn bit_pair(gate: impl Fn(bool, bool) -> bool) -> Self {
        let table = (0..4).map(|s| gate(s & 2 != 0, s & 1 != 0) as usize).collect();
        BlockFn::per_symbol(4, 2, table).expect("pair gate table is valid")
    }

    pub fn and() -> Self {
        Self::bit_pair(|a, b| a && b)
    }

    pub fn or() -> Self {
        Self::bit_pair(|a, b| a || b)
    }

    pub fn xor() -> Self {
        Self::bit_pair(|a, b| a ^ b)
    }

    pub fn in_alphabet(&self) -> usize {
        self.in_alphabet
    }

    pub fn out_alphabet(&self) -> usize {
        self.out_alphabet
    }

    /// Symbol table when the function acts position by position.
    pub fn symbol_table(&self) -> Option<&[usize]> {
        match &self.map {
            FnMap::PerSymbol(t) => Some(t),
            FnMap::Table { .. } => None,
        }
    }

    /// Output length for input blocks of length `n`.
    pub fn out_len(&self, n: usize) -> Result<usize> {
        match &self.map {
            FnMap::PerSymbol(_) => Ok(n),
            FnMap::Table { len_in, len_out, .. } if *len_in == n => Ok(*len_out),
            FnMap::Table { len_in, .. } => Err(Error::LengthMismatch { expected: *len_in, got: n }),
        }
    }

    /// Applies the map to a block code of an `n`-block.
    pub fn apply_code(&self, n: usize, x: usize) -> usize {
        match &self.map {
            FnMap::PerSymbol(t) => {
                let sp_in = BlockSpace::new(self.in_alphabet, n);
                let sp_out = BlockSpace::new(self.out_alphabet, n);
                sp_out.encode(&sp_in.decode(x).into_iter().map(|s| t[s]).collect::<Vec<_>>())
            }
            FnMap::Table { table, .. } => table[x],
        }
    }

    pub fn apply(&self, x: &[usize]) -> Vec<usize> {
        match &self.map {
            FnMap::PerSymbol(t) => x.iter().map(|&s| t[s]).collect(),
            FnMap::Table { len_in, len_out, table } => {
                let code = BlockSpace::new(self.in_alphabet, *len_in).encode(x);
                BlockSpace::new(self.out_alphabet, *len_out).decode(table[code])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum KernelLaw {
    Memoryless(Vec<Dist>),
    Block { len_in: usize, len_out: usize, rows: Vec<Vec<(usize, f64)>> },
}

/// Conditional law of output blocks given input blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockKernel {
    in_alphabet: usize,
    out_alphabet: usize,
    law: KernelLaw,
}

impl BlockKernel {
    /// Memoryless kernel: row `a` of `matrix` is the output law for input
    /// symbol `a`, applied independently at each position.
    pub fn memoryless(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let out_alphabet = matrix.first().map(|r| r.len()).ok_or(Error::Empty)?;
        let mut rows = Vec::with_capacity(matrix.len());
        for r in matrix {
            if r.len() != out_alphabet {
                return Err(Error::LengthMismatch { expected: out_alphabet, got: r.len() });
            }
            rows.push(Dist::new(r)?);
        }
        Ok(BlockKernel { in_alphabet: rows.len(), out_alphabet, law: KernelLaw::Memoryless(rows) })
    }

    /// Binary symmetric kernel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Self::memoryless(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Output independent of the input.
    pub fn totally_noisy(in_alphabet: usize, out_law: &Dist) -> Self {
        BlockKernel {
            in_alphabet,
            out_alphabet: out_law.len(),
            law: KernelLaw::Memoryless(vec![out_law.clone(); in_alphabet]),
        }
    }

    /// Explicit block table of sparse rows, one per input block code.
    pub fn from_rows(in_alphabet: usize, len_in: usize, out_alphabet: usize, len_out: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let expected = BlockSpace::new(in_alphabet, len_in).size()?;
        if rows.len() != expected {
            return Err(Error::LengthMismatch { expected, got: rows.len() });
        }
        let outs = BlockSpace::new(out_alphabet, len_out).count();
        let mut clean = Vec::with_capacity(rows.len());
        for row in rows {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (z, p) in row {
                if z as u128 >= outs {
                    return Err(Error::OutOfRange { index: z, size: outs as usize });
                }
                if !(p >= 0.0) {
                    return Err(Error::NegativeProbability { index: z, value: p });
                }
                if p > 0.0 {
                    *acc.entry(z).or_insert(0.0) += p;
                }
            }
            let sum: f64 = acc.values().sum();
            if (sum - 1.0).abs() > crate::prob::NORM_TOL {
                return Err(Error::NotNormalized { sum });
            }
            clean.push(acc.into_iter().map(|(z, p)| (z, p / sum)).collect());
        }
        Ok(BlockKernel { in_alphabet, out_alphabet, law: KernelLaw::Block { len_in, len_out, rows: clean } })
    }

    /// Point-mass kernel at `f(x)`.
    pub fn deterministic(f: &BlockFn) -> Self {
        match &f.map {
            FnMap::PerSymbol(t) => BlockKernel {
                in_alphabet: f.in_alphabet,
                out_alphabet: f.out_alphabet,
                law: KernelLaw::Memoryless(t.iter().map(|&s| Dist::point(f.out_alphabet, s)).collect()),
            },
            FnMap::Table { len_in, len_out, table } => BlockKernel {
                in_alphabet: f.in_alphabet,
                out_alphabet: f.out_alphabet,
                law: KernelLaw::Block { len_in: *len_in, len_out: *len_out, rows: table.iter().map(|&y| vec![(y, 1.0)]).collect() },
            },
        }
    }

    /// `first` followed by `second`: `law(x)(z) = sum_y first(x)(y) second(y)(z)`.
    pub fn cascade(first: &BlockKernel, second: &BlockKernel) -> Result<Self> {
        if first.out_alphabet != second.in_alphabet {
            return Err(Error::AlphabetMismatch(format!(
                "first kernel emits {} symbols, second accepts {}",
                first.out_alphabet, second.in_alphabet
            )));
        }
        if let (KernelLaw::Memoryless(a), KernelLaw::Memoryless(b)) = (&first.law, &second.law) {
            let rows = a
                .iter()
                .map(|ra| {
                    let mut out = vec![0.0; second.out_alphabet];
                    for (y, &p) in ra.probs().iter().enumerate() {
                        for (z, &r) in b[y].probs().iter().enumerate() {
                            out[z] += p * r;
                        }
                    }
                    Dist::from_weights(out).expect("stochastic product")
                })
                .collect();
            return Ok(BlockKernel { in_alphabet: first.in_alphabet, out_alphabet: second.out_alphabet, law: KernelLaw::Memoryless(rows) });
        }
        let len_in = match (&first.law, &second.law) {
            (KernelLaw::Block { len_in, .. }, _) => *len_in,
            (KernelLaw::Memoryless(_), KernelLaw::Block { len_in, .. }) => *len_in,
            _ => unreachable!(),
        };
        let mid = first.out_len(len_in)?;
        let len_out = second.out_len(mid)?;
        let n_rows = BlockSpace::new(first.in_alphabet, len_in).size_capped(DEFAULT_ENUM_CAP)?;
        let rows = (0..n_rows)
            .map(|x| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for (y, p) in first.row(len_in, x) {
                    for (z, r) in second.row(mid, y) {
                        *acc.entry(z).or_insert(0.0) += p * r;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        Ok(BlockKernel { in_alphabet: first.in_alphabet, out_alphabet: second.out_alphabet, law: KernelLaw::Block { len_in, len_out, rows } })
    }

    pub fn in_alphabet(&self) -> usize {
        self.in_alphabet
    }

    pub fn out_alphabet(&self) -> usize {
        self.out_alphabet
    }

    /// Per-symbol rows when the kernel is memoryless.
    pub fn symbol_rows(&self) -> Option<&[Dist]> {
        match &self.law {
            KernelLaw::Memoryless(rows) => Some(rows),
            KernelLaw::Block { .. } => None,
        }
    }

    /// Output length for input blocks of length `n`.
    pub fn out_len(&self, n: usize) -> Result<usize> {
        match &self.law {
            KernelLaw::Memoryless(_) => Ok(n),
            KernelLaw::Block { len_in, len_out, .. } if *len_in == n => Ok(*len_out),
            KernelLaw::Block { len_in, .. } => Err(Error::LengthMismatch { expected: *len_in, got: n }),
        }
    }

    /// Sparse output law of input block code `x` at input length `n`, in
    /// increasing output code order.
    pub fn row(&self, n: usize, x: usize) -> Vec<(usize, f64)> {
        match &self.law {
            KernelLaw::Memoryless(rows) => {
                let block = BlockSpace::new(self.in_alphabet, n).decode(x);
                let mut acc: Vec<(usize, f64)> = vec![(0, 1.0)];
                for &a in &block {
                    let r = rows[a].probs();
                    let mut next = Vec::with_capacity(acc.len() * r.len());
                    for &(z, p) in &acc {
                        for (s, &w) in r.iter().enumerate() {
                            if w > 0.0 {
                                next.push((z * self.out_alphabet + s, p * w));
                            }
                        }
                    }
                    acc = next;
                }
                acc
            }
            KernelLaw::Block { rows, .. } => rows[x].clone(),
        }
    }

    /// `P(z | x)` for block codes at input length `n`.
    pub fn prob(&self, n: usize, x: usize, z: usize) -> f64 {
        match &self.law {
            KernelLaw::Memoryless(rows) => {
                let xs = BlockSpace::new(self.in_alphabet, n).decode(x);
                let zs = BlockSpace::new(self.out_alphabet, n).decode(z);
                xs.iter().zip(&zs).map(|(&a, &c)| rows[a].p(c)).product()
            }
            KernelLaw::Block { rows, .. } => rows[x].iter().find(|&&(zz, _)| zz == z).map_or(0.0, |&(_, p)| p),
        }
    }

    /// Draws an output block for input block `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[usize], rng: &mut R) -> Vec<usize> {
        match &self.law {
            KernelLaw::Memoryless(rows) => x.iter().map(|&a| rows[a].sample_with(rng.gen::<f64>())).collect(),
            KernelLaw::Block { len_in, len_out, rows } => {
                let code = BlockSpace::new(self.in_alphabet, *len_in).encode(x);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let row = &rows[code];
                let mut pick = row.last().map_or(0, |&(z, _)| z);
                for &(z, p) in row {
                    acc += p;
                    if u < acc {
                        pick = z;
                        break;
                    }
                }
                BlockSpace::new(self.out_alphabet, *len_out).decode(pick)
            }
        }
    }
}

/// A perfect function `f` and a random device `F` reading the same input.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyComputation {
    pub f: BlockFn,
    pub device: BlockKernel,
}

/// Pairs `f` with `F` into the channel product `f x F`.
pub fn product(f: BlockFn, device: BlockKernel) -> Result<NoisyComputation> {
    if f.in_alphabet != device.in_alphabet {
        return Err(Error::AlphabetMismatch(format!(
            "function reads {} symbols, device reads {}",
            f.in_alphabet, device.in_alphabet
        )));
    }
    if let (FnMap::Table { len_in: a, .. }, KernelLaw::Block { len_in: b, .. }) = (&f.map, &device.law) {
        if a != b {
            return Err(Error::LengthMismatch { expected: *a, got: *b });
        }
    }
    Ok(NoisyComputation { f, device })
}

impl NoisyComputation {
    pub fn in_alphabet(&self) -> usize {
        self.f.in_alphabet
    }

    /// Symbol table of `f` and rows of `F` when both act per symbol.
    pub fn single_letter(&self) -> Option<(&[usize], &[Dist])> {
        Some((self.f.symbol_table()?, self.device.symbol_rows()?))
    }

    /// Block length forced by table-backed parts, if any.
    pub fn natural_len(&self) -> Option<usize> {
        match (&self.f.map, &self.device.law) {
            (FnMap::Table { len_in, .. }, _) => Some(*len_in),
            (_, KernelLaw::Block { len_in, .. }) => Some(*len_in),
            _ => None,
        }
    }

    /// Checks that both parts accept `n`-blocks; returns `(len_y, len_z)`.
    pub fn lengths(&self, n: usize) -> Result<(usize, usize)> {
        Ok((self.f.out_len(n)?, self.device.out_len(n)?))
    }

    /// Conditional law of `(f(x), F(x))` given `x`, as `((y, z), p)` cells.
    pub fn cond_law(&self, n: usize, x: usize) -> Vec<((usize, usize), f64)> {
        let y = self.f.apply_code(n, x);
        self.device.row(n, x).into_iter().map(|(z, p)| ((y, z), p)).collect()
    }
}

#[derive(Debug, Clone)]
enum HookupRepr {
    Enumerated {
        /// Support of the input law: `(x, P(x))` in code order.
        px: Vec<(usize, f64)>,
        y_of: Vec<usize>,
        rows: Vec<Vec<(usize, f64)>>,
        class_of: Vec<usize>,
        fibers: BTreeMap<usize, Vec<usize>>,
        py: BTreeMap<usize, f64>,
        joint: JointTable,
        pz: Vec<f64>,
    },
    Factorized {
        base: Dist,
        f: Vec<usize>,
        rows: Vec<Dist>,
        /// Smallest input symbol whose device row equals this symbol's row.
        canon: Vec<usize>,
        y_law: Vec<f64>,
        z_law: Vec<f64>,
        z_given_y: Vec<Vec<f64>>,
    },
}

/// Law of `(X^n, f^n(X^n), F^n(X^n))` for a source fed into a noisy computation.
#[derive(Debug, Clone)]
pub struct Hookup {
    pub n: usize,
    pub x_space: BlockSpace,
    pub y_space: BlockSpace,
    pub z_space: BlockSpace,
    repr: HookupRepr,
}

/// Builds the hookup by enumerating every input block.
pub fn hookup(s: &Source, nc: &NoisyComputation, n: usize) -> Result<Hookup> {
    hookup_capped(s, nc, n, DEFAULT_ENUM_CAP)
}

pub fn hookup_capped(s: &Source, nc: &NoisyComputation, n: usize, cap: usize) -> Result<Hookup> {
    check_source(s, nc)?;
    let (ly, lz) = nc.lengths(n)?;
    let law = extend_capped(s, n, cap)?;
    let y_space = BlockSpace::new(nc.f.out_alphabet, ly);
    let z_space = BlockSpace::new(nc.device.out_alphabet, lz);
    let z_count = z_space.size_capped(cap)?;
    let mut px = Vec::new();
    let mut y_of = Vec::new();
    let mut rows = Vec::new();
    let mut class_of = Vec::new();
    let mut classes: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
    let mut fibers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut py: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pz = vec![0.0; z_count];
    for (x, &p) in law.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let idx = px.len();
        let y = nc.f.apply_code(n, x);
        let row = nc.device.row(n, x);
        let key: Vec<(usize, u64)> = row.iter().map(|&(z, q)| (z, q.to_bits())).collect();
        let next_class = classes.len();
        class_of.push(*classes.entry(key).or_insert(next_class));
        for &(z, q) in &row {
            *cells.entry((y, z)).or_insert(0.0) += p * q;
            pz[z] += p * q;
        }
        px.push((x, p));
        y_of.push(y);
        rows.push(row);
        fibers.entry(y).or_default().push(idx);
        *py.entry(y).or_insert(0.0) += p;
    }
    let y_count = y_space.size()?;
    let joint = JointTable::from_weights(y_count, z_count, cells.into_iter().map(|((y, z), p)| (y, z, p)))?;
    Ok(Hookup {
        n,
        x_space: BlockSpace::new(s.alphabet_size(), n),
        y_space,
        z_space,
        repr: HookupRepr::Enumerated { px, y_of, rows, class_of, fibers, py, joint, pz },
    })
}

/// Builds the hookup in product form for an i.i.d. source and a per-symbol
/// function with a memoryless device. Only the output space is enumerated.
pub fn hookup_factorized(s: &Source, nc: &NoisyComputation, n: usize) -> Result<Hookup> {
    check_source(s, nc)?;
    let Source::Iid { base } = s else {
        return Err(Error::Precondition("factorized hookup needs an i.i.d. source".into()));
    };
    let Some((f, rows)) = nc.single_letter() else {
        return Err(Error::Precondition("factorized hookup needs a per-symbol function and a memoryless device".into()));
    };
    let qy = nc.f.out_alphabet;
    let qz = nc.device.out_alphabet;
    let y_space = BlockSpace::new(qy, n);
    let z_space = BlockSpace::new(qz, n);
    z_space.size_capped(DEFAULT_ENUM_CAP)?;
    y_space.size_capped(DEFAULT_ENUM_CAP)?;
    let mut y_law = vec![0.0; qy];
    let mut joint = vec![vec![0.0; qz]; qy];
    for (a, &p) in base.probs().iter().enumerate() {
        y_law[f[a]] += p;
        for (c, &w) in rows[a].probs().iter().enumerate() {
            joint[f[a]][c] += p * w;
        }
    }
    let z_law: Vec<f64> = (0..qz).map(|c| (0..qy).map(|b| joint[b][c]).sum()).collect();
    let z_given_y = (0..qy)
        .map(|b| (0..qz).map(|c| if y_law[b] > 0.0 { joint[b][c] / y_law[b] } else { 0.0 }).collect())
        .collect();
    let canon = (0..rows.len()).map(|a| (0..=a).find(|&b| rows[b] == rows[a]).unwrap()).collect();
    Ok(Hookup {
        n,
        x_space: BlockSpace::new(base.len(), n),
        y_space,
        z_space,
        repr: HookupRepr::Factorized { base: base.clone(), f: f.to_vec(), rows: rows.to_vec(), canon, y_law, z_law, z_given_y },
    })
}

/// Factorized form when the instance allows it, enumeration otherwise.
pub fn hookup_auto(s: &Source, nc: &NoisyComputation, n: usize) -> Result<Hookup> {
    if s.is_iid() && nc.single_letter().is_some() {
        hookup_factorized(s, nc, n)
    } else {
        hookup(s, nc, n)
    }
}

fn check_source(s: &Source, nc: &NoisyComputation) -> Result<()> {
    if s.alphabet_size() != nc.in_alphabet() {
        return Err(Error::AlphabetMismatch(format!(
            "source emits {} symbols, computation reads {}",
            s.alphabet_size(),
            nc.in_alphabet()
        )));
    }
    Ok(())
}

/// Expands per-position factors into a dense law over block codes.
fn product_dense(n: usize, q: usize, factor: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut acc = vec![1.0];
    for pos in 0..n {
        let mut next = Vec::with_capacity(acc.len() * q);
        for &p in &acc {
            for s in 0..q {
                next.push(p * factor(pos, s));
            }
        }
        acc = next;
    }
    acc
}

impl Hookup {
    pub fn is_factorized(&self) -> bool {
        matches!(self.repr, HookupRepr::Factorized { .. })
    }

    /// Blocks `y = f(x)` with positive mass, in code order.
    pub fn y_support(&self) -> Vec<(usize, f64)> {
        match &self.repr {
            HookupRepr::Enumerated { py, .. } => py.iter().map(|(&y, &p)| (y, p)).collect(),
            HookupRepr::Factorized { y_law, .. } => {
                let q = y_law.len();
                product_dense(self.n, q, |_, s| y_law[s]).into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect()
            }
        }
    }

    pub fn y_prob(&self, y: usize) -> f64 {
        match &self.repr {
            HookupRepr::Enumerated { py, .. } => py.get(&y).copied().unwrap_or(0.0),
            HookupRepr::Factorized { y_law, .. } => self.y_space.decode(y).iter().map(|&b| y_law[b]).product(),
        }
    }

    /// `(x, P(x | y))` over the fiber of `y`, in code order.
    pub fn fiber(&self, y: usize) -> Vec<(usize, f64)> {
        match &self.repr {
            HookupRepr::Enumerated { px, fibers, py, .. } => {
                let total = py.get(&y).copied().unwrap_or(0.0);
                fibers.get(&y).map_or_else(Vec::new, |idx| idx.iter().map(|&i| (px[i].0, px[i].1 / total)).collect())
            }
            HookupRepr::Factorized { base, f, y_law, .. } => {
                let yb = self.y_space.decode(y);
                let q = base.len();
                let mut acc: Vec<(usize, f64)> = vec![(0, 1.0)];
                for &b in &yb {
                    let mut next = Vec::new();
                    for &(x, p) in &acc {
                        for a in 0..q {
                            if f[a] == b && base.p(a) > 0.0 {
                                next.push((x * q + a, p * base.p(a) / y_law[b]));
                            }
                        }
                    }
                    acc = next;
                }
                acc
            }
        }
    }

    /// Device output law for input block `x`.
    pub fn z_given_x(&self, x: usize) -> Vec<(usize, f64)> {
        match &self.repr {
            HookupRepr::Enumerated { px, rows, .. } => match px.binary_search_by_key(&x, |&(c, _)| c) {
                Ok(i) => rows[i].clone(),
                Err(_) => Vec::new(),
            },
            HookupRepr::Factorized { rows, .. } => {
                let xb = self.x_space.decode(x);
                let qz = self.z_space.q;
                product_dense(self.n, qz, |pos, c| rows[xb[pos]].p(c)).into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect()
            }
        }
    }

    /// Label shared by inputs whose device output laws coincide.
    pub fn device_class(&self, x: usize) -> usize {
        match &self.repr {
            HookupRepr::Enumerated { px, class_of, .. } => {
                px.binary_search_by_key(&x, |&(c, _)| c).map(|i| class_of[i]).unwrap_or(usize::MAX)
            }
            HookupRepr::Factorized { canon, .. } => {
                let xb: Vec<usize> = self.x_space.decode(x).into_iter().map(|a| canon[a]).collect();
                self.x_space.encode(&xb)
            }
        }
    }

    /// Fiber of `y` grouped by device class: `(member, P(class | y))` with a
    /// representative member per class, in order of first member code.
    pub fn fiber_classes(&self, y: usize) -> Vec<(usize, f64)> {
        match &self.repr {
            HookupRepr::Enumerated { px, fibers, py, class_of, .. } => {
                let total = py.get(&y).copied().unwrap_or(0.0);
                let mut seen: HashMap<usize, usize> = HashMap::new();
                let mut out: Vec<(usize, f64)> = Vec::new();
                for &i in fibers.get(&y).map_or(&[][..], |v| v.as_slice()) {
                    let slot = *seen.entry(class_of[i]).or_insert_with(|| {
                        out.push((px[i].0, 0.0));
                        out.len() - 1
                    });
                    out[slot].1 += px[i].1 / total;
                }
                out
            }
            HookupRepr::Factorized { base, f, canon, y_law, .. } => {
                let q = base.len();
                let mut acc: Vec<(usize, f64)> = vec![(0, 1.0)];
                for &b in &self.y_space.decode(y) {
                    // one representative per canonical class inside f^{-1}(b)
                    let mut groups: Vec<(usize, usize, f64)> = Vec::new();
                    for a in 0..q {
                        if f[a] == b && base.p(a) > 0.0 {
                            match groups.iter_mut().find(|g| g.0 == canon[a]) {
                                Some(g) => g.2 += base.p(a) / y_law[b],
                                None => groups.push((canon[a], a, base.p(a) / y_law[b])),
                            }
                        }
                    }
                    let mut next = Vec::with_capacity(acc.len() * groups.len());
                    for &(x, p) in &acc {
                        for &(_, a, w) in &groups {
                            next.push((x * q + a, p * w));
                        }
                    }
                    acc = next;
                }
                acc
            }
        }
    }

    /// Dense `P(z | y)` over the output space.
    pub fn z_given_y(&self, y: usize) -> Vec<f64> {
        match &self.repr {
            HookupRepr::Enumerated { joint, py, .. } => {
                let mut out = vec![0.0; self.z_space.count() as usize];
                let total = py.get(&y).copied().unwrap_or(0.0);
                if total > 0.0 {
                    for (r, c, p) in joint.iter().filter(|&(r, _, _)| r == y) {
                        let _ = r;
                        out[c] = p / total;
                    }
                }
                out
            }
            HookupRepr::Factorized { z_given_y, .. } => {
                let yb = self.y_space.decode(y);
                product_dense(self.n, self.z_space.q, |pos, c| z_given_y[yb[pos]][c])
            }
        }
    }

    /// Dense `P(z)` over the output space.
    pub fn z_law(&self) -> Vec<f64> {
        match &self.repr {
            HookupRepr::Enumerated { pz, .. } => pz.clone(),
            HookupRepr::Factorized { z_law, .. } => product_dense(self.n, self.z_space.q, |_, c| z_law[c]),
        }
    }

    /// `(P(x), f(x), F(x) law)` for one input block.
    pub fn triple(&self, x: usize) -> (f64, usize, Vec<(usize, f64)>) {
        let p = match &self.repr {
            HookupRepr::Enumerated { px, .. } => px.binary_search_by_key(&x, |&(c, _)| c).map_or(0.0, |i| px[i].1),
            HookupRepr::Factorized { base, .. } => self.x_space.decode(x).iter().map(|&a| base.p(a)).product(),
        };
        let y = match &self.repr {
            HookupRepr::Enumerated { px, y_of, .. } => px.binary_search_by_key(&x, |&(c, _)| c).map_or_else(
                |_| usize::MAX,
                |i| y_of[i],
            ),
            HookupRepr::Factorized { f, .. } => {
                let xb: Vec<usize> = self.x_space.decode(x).into_iter().map(|a| f[a]).collect();
                self.y_space.encode(&xb)
            }
        };
        (p, y, self.z_given_x(x))
    }

    /// Joint law of `(f(X^n), F(X^n))`.
    pub fn joint(&self) -> Result<JointTable> {
        match &self.repr {
            HookupRepr::Enumerated { joint, .. } => Ok(joint.clone()),
            HookupRepr::Factorized { .. } => {
                let ny = self.y_space.size_capped(DEFAULT_ENUM_CAP)?;
                let nz = self.z_space.size_capped(DEFAULT_ENUM_CAP)?;
                let cells = ny as u128 * nz as u128;
                if cells > DEFAULT_ENUM_CAP as u128 {
                    return Err(Error::EnumerationLimit { requested: cells, cap: DEFAULT_ENUM_CAP });
                }
                let mut out = Vec::new();
                for (y, p) in self.y_support() {
                    for (z, q) in self.z_given_y(y).into_iter().enumerate() {
                        out.push((y, z, p * q));
                    }
                }
                JointTable::from_weights(ny, nz, out)
            }
        }
    }

    /// `H(X^n)` in nats (whole block, not per symbol).
    pub fn entropy_x(&self) -> f64 {
        match &self.repr {
            HookupRepr::Enumerated { px, .. } => -px.iter().map(|&(_, p)| xlnx(p)).sum::<f64>(),
            HookupRepr::Factorized { base, .. } => self.n as f64 * entropy(base),
        }
    }

    /// `H(f^n(X^n))` in nats.
    pub fn entropy_y(&self) -> f64 {
        match &self.repr {
            HookupRepr::Enumerated { py, .. } => -py.values().map(|&p| xlnx(p)).sum::<f64>(),
            HookupRepr::Factorized { y_law, .. } => -(self.n as f64) * y_law.iter().map(|&p| xlnx(p)).sum::<f64>(),
        }
    }

    /// `H(X^n | f^n(X^n)) = H(X^n) - H(f^n(X^n))` since `f` is deterministic.
    pub fn cond_entropy_x_given_y(&self) -> f64 {
        (self.entropy_x() - self.entropy_y()).max(0.0)
    }

    /// `H(f^n(X^n) | F^n(X^n))` in nats.
    pub fn cond_entropy_y_given_z(&self) -> f64 {
        match &self.repr {
            HookupRepr::Enumerated { joint, .. } => crate::prob::cond_entropy(joint),
            HookupRepr::Factorized { y_law, z_given_y, z_law, .. } => {
                let mut hyz = 0.0;
                for (b, &pb) in y_law.iter().enumerate() {
                    for &w in &z_given_y[b] {
                        hyz -= xlnx(pb * w);
                    }
                }
                let hz = -z_law.iter().map(|&p| xlnx(p)).sum::<f64>();
                self.n as f64 * (hyz - hz).max(0.0)
            }
        }
    }

    /// `I(f^n(X^n); F^n(X^n))` in nats.
    pub fn mutual_info_yz(&self) -> f64 {
        (self.entropy_y() - self.cond_entropy_y_given_z()).max(0.0)
    }

    /// Finite-length rate `[H(X^n) - H(f^n(X^n) | F^n(X^n))] / n`.
    pub fn rate(&self) -> f64 {
        (self.entropy_x() - self.cond_entropy_y_given_z()) / self.n as f64
    }
}

/// Finite-string function lifted to fixed-length blocks with blank padding.
#[derive(Clone)]
pub struct LiftedFunction {
    pub name: String,
    inner: Arc<dyn Fn(&[usize]) -> Option<Vec<usize>> + Send + Sync>,
    pub in_alphabet: usize,
    pub out_alphabet: usize,
    pub blank_in: usize,
    pub blank_out: usize,
}

impl fmt::Debug for LiftedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiftedFunction")
            .field("name", &self.name)
            .field("in_alphabet", &self.in_alphabet)
            .field("out_alphabet", &self.out_alphabet)
            .field("blank_in", &self.blank_in)
            .field("blank_out", &self.blank_out)
            .finish()
    }
}

impl LiftedFunction {
    /// `inner` returns `None` outside its domain. Strings ending in the input
    /// blank are never in the domain.
    pub fn new(
        name: impl Into<String>,
        in_alphabet: usize,
        out_alphabet: usize,
        blank_in: usize,
        blank_out: usize,
        inner: impl Fn(&[usize]) -> Option<Vec<usize>> + Send + Sync + 'static,
    ) -> Result<Self> {
        if blank_in >= in_alphabet {
            return Err(Error::OutOfRange { index: blank_in, size: in_alphabet });
        }
        if blank_out >= out_alphabet {
            return Err(Error::OutOfRange { index: blank_out, size: out_alphabet });
        }
        Ok(LiftedFunction { name: name.into(), inner: Arc::new(inner), in_alphabet, out_alphabet, blank_in, blank_out })
    }

    /// Big-endian binary increment over `{0, 1}` with blank symbol 2 on both
    /// sides. A carry out of the top bit lengthens the string.
    pub fn binary_increment() -> Self {
        Self::new("increment", 3, 3, 2, 2, |u| {
            if u.iter().any(|&s| s > 1) {
                return None;
            }
            let mut out = u.to_vec();
            for s in out.iter_mut().rev() {
                if *s == 0 {
                    *s = 1;
                    return Some(out);
                }
                *s = 0;
            }
            out.insert(0, 1);
            Some(out)
        })
        .expect("blank symbols in range")
    }

    /// The inner function, with the empty string mapped to itself.
    pub fn inner(&self, u: &[usize]) -> Option<Vec<usize>> {
        if u.is_empty() {
            return Some(Vec::new());
        }
        if u.last() == Some(&self.blank_in) {
            return None;
        }
        (self.inner)(u)
    }

    /// Pads a finite input string with the input blank to length `n`.
    pub fn pad_input(&self, u: &[usize], n: usize) -> Result<Vec<usize>> {
        if u.len() > n {
            return Err(Error::BlockOverflow { len: u.len(), n });
        }
        let mut x = u.to_vec();
        x.resize(n, self.blank_in);
        Ok(x)
    }

    /// Strips trailing output blanks.
    pub fn strip_output(&self, y: &[usize]) -> Vec<usize> {
        let end = y.iter().rposition(|&s| s != self.blank_out).map_or(0, |i| i + 1);
        y[..end].to_vec()
    }

    /// The lifted map on one block: strip trailing input blanks, apply the
    /// inner function (all blanks outside the domain), pad with output blanks
    /// to `out_len`.
    pub fn apply_block(&self, x: &[usize], out_len: usize) -> Result<Vec<usize>> {
        let end = x.iter().rposition(|&s| s != self.blank_in).map_or(0, |i| i + 1);
        let out = self.inner(&x[..end]).unwrap_or_default();
        if out.len() > out_len {
            return Err(Error::BlockOverflow { len: out.len(), n: out_len });
        }
        let mut y = out;
        y.resize(out_len, self.blank_out);
        Ok(y)
    }
}

/// Block function from `n`-blocks to `out_len`-blocks induced by a lifted
/// finite-string function. Every input block is evaluated, so an overflow
/// anywhere is reported here.
pub fn lift_finite_fn(lifted: &LiftedFunction, n: usize, out_len: usize) -> Result<BlockFn> {
    let sp_in = BlockSpace::new(lifted.in_alphabet, n);
    let sp_out = BlockSpace::new(lifted.out_alphabet, out_len);
    let count = sp_in.size_capped(DEFAULT_ENUM_CAP)?;
    let table = (0..count)
        .map(|x| lifted.apply_block(&sp_in.decode(x), out_len).map(|y| sp_out.encode(&y)))
        .collect::<Result<Vec<_>>>()?;
    let mut f = BlockFn::from_table(lifted.in_alphabet, n, lifted.out_alphabet, out_len, table)?;
    f.horizon = n;
    Ok(f)
}
