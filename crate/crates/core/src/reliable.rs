//! Reliable computation through a noisy device: an encoder `U` from typical
//! blocks of a source `X'` into inputs of a Feinstein code, the device, and a
//! decoder `V` from code outputs back to values of the target function `g`.
//!
//! Typical blocks are never listed. For an i.i.d. source and a per-symbol `g`
//! the typical blocks with a given `g`-image are counted and ranked through
//! their type classes, so the encoder works at sizes far beyond enumeration.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::{BlockSpace, DEFAULT_ENUM_CAP};
use crate::capacity::{single_letter_terms, CapacityReport};
use crate::channels::{hookup_auto, BlockFn, Hookup, NoisyComputation};
use crate::error::{Error, Result};
use crate::feinstein::{greedy_construct, FeinsteinCode, FeinsteinOptions};
use crate::prob::{entropy, Dist};
use crate::processes::{typical_predicate, Source};

/// Attempts per trial when rejection-sampling a typical block.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

fn binomials(k: usize) -> Vec<Vec<u128>> {
    let mut t = vec![vec![0u128; k + 1]; k + 1];
    for n in 0..=k {
        t[n][0] = 1;
        for r in 1..=n {
            t[n][r] = t[n - 1][r - 1].saturating_add(if r <= n - 1 { t[n - 1][r] } else { 0 });
        }
    }
    t
}

/// Counting and ranking of the typical `k`-blocks of an i.i.d. source inside
/// the fibers of a per-symbol map `g`.
#[derive(Debug, Clone)]
pub struct TypicalFiberIndex {
    pub k: usize,
    pub epsilon: f64,
    base: Dist,
    g: Vec<usize>,
    qb: usize,
    /// Symbols of each `g`-fiber, increasing.
    fiber_syms: Vec<Vec<usize>>,
    /// Count vectors of typical type classes.
    types: Vec<Vec<usize>>,
    binom: Vec<Vec<u128>>,
}

impl TypicalFiberIndex {
    pub fn new(base: &Dist, g: &BlockFn, k: usize, epsilon: f64) -> Result<Self> {
        let Some(table) = g.symbol_table() else {
            return Err(Error::Precondition("encoder needs a per-symbol target function".into()));
        };
        if table.len() != base.len() {
            return Err(Error::AlphabetMismatch(format!("source emits {} symbols, g reads {}", base.len(), table.len())));
        }
        if k == 0 || k > 120 {
            return Err(Error::Domain(format!("block length k = {k} out of range")));
        }
        let q = base.len();
        let qb = g.out_alphabet();
        let mut fiber_syms = vec![Vec::new(); qb];
        for (a, &b) in table.iter().enumerate() {
            fiber_syms[b].push(a);
        }
        let rate = entropy(base);
        let mut types = Vec::new();
        let mut counts = vec![0usize; q];
        fn rec(pos: usize, left: usize, counts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
            if pos + 1 == counts.len() {
                counts[pos] = left;
                f(counts);
                return;
            }
            for c in 0..=left {
                counts[pos] = c;
                rec(pos + 1, left - c, counts, f);
            }
        }
        rec(0, k, &mut counts, &mut |c| {
            let logp: f64 = c.iter().zip(base.probs()).map(|(&n, &p)| if n == 0 { 0.0 } else { n as f64 * p.ln() }).sum();
            if typical_predicate(logp, k, rate, epsilon) {
                types.push(c.to_vec());
            }
        });
        Ok(TypicalFiberIndex { k, epsilon, base: base.clone(), g: table.to_vec(), qb, fiber_syms, types, binom: binomials(k) })
    }

    pub fn source(&self) -> &Dist {
        &self.base
    }

    fn multinomial(&self, total: usize, parts: impl Iterator<Item = usize>) -> u128 {
        let mut left = total;
        let mut out: u128 = 1;
        for d in parts {
            if d > left {
                return 0;
            }
            out = out.saturating_mul(self.binom[left][d]);
            left -= d;
        }
        if left == 0 {
            out
        } else {
            0
        }
    }

    /// Ways to complete a prefix with symbol counts `prefix` into a typical
    /// block, when `remaining[b]` positions still need a symbol mapped to `b`.
    fn completions(&self, prefix: &[usize], remaining: &[usize]) -> u128 {
        let mut total: u128 = 0;
        'types: for c in &self.types {
            if c.iter().zip(prefix).any(|(&a, &p)| a < p) {
                continue;
            }
            let mut ways: u128 = 1;
            for (b, syms) in self.fiber_syms.iter().enumerate() {
                let m = self.multinomial(remaining[b], syms.iter().map(|&a| c[a] - prefix[a]));
                if m == 0 {
                    continue 'types;
                }
                ways = ways.saturating_mul(m);
            }
            total = total.saturating_add(ways);
        }
        total
    }

    fn image_counts(&self, w: &[usize]) -> Vec<usize> {
        let mut r = vec![0usize; self.qb];
        w.iter().for_each(|&b| r[b] += 1);
        r
    }

    /// Number of typical blocks whose `g`-image has symbol counts `r`.
    pub fn fiber_size(&self, r: &[usize]) -> u128 {
        self.completions(&vec![0; self.base.len()], r)
    }

    /// Probability of the typical blocks with one particular `g`-image whose
    /// symbol counts are `r`.
    pub fn fiber_mass(&self, r: &[usize]) -> f64 {
        let logs: Vec<f64> = self.base.probs().iter().map(|p| p.ln()).collect();
        let mut total = 0.0;
        'types: for c in &self.types {
            let mut ways: u128 = 1;
            for (b, syms) in self.fiber_syms.iter().enumerate() {
                let m = self.multinomial(r[b], syms.iter().map(|&a| c[a]));
                if m == 0 {
                    continue 'types;
                }
                ways = ways.saturating_mul(m);
            }
            let lp: f64 = c.iter().zip(&logs).map(|(&n, &l)| if n == 0 { 0.0 } else { n as f64 * l }).sum();
            total += ways as f64 * lp.exp();
        }
        total
    }

    /// Probability of the whole typical set.
    pub fn typical_mass(&self) -> f64 {
        let logs: Vec<f64> = self.base.probs().iter().map(|p| p.ln()).collect();
        self.types
            .iter()
            .map(|c| {
                let lp: f64 = c.iter().zip(&logs).map(|(&n, &l)| if n == 0 { 0.0 } else { n as f64 * l }).sum();
                self.multinomial(self.k, c.iter().copied()) as f64 * lp.exp()
            })
            .sum()
    }

    pub fn is_typical(&self, x: &[usize]) -> bool {
        let mut c = vec![0usize; self.base.len()];
        x.iter().for_each(|&a| c[a] += 1);
        self.types.binary_search(&c).is_ok()
    }

    pub fn image(&self, x: &[usize]) -> Vec<usize> {
        x.iter().map(|&a| self.g[a]).collect()
    }

    /// Lexicographic rank of a typical block among the typical blocks with the
    /// same `g`-image.
    pub fn rank(&self, x: &[usize]) -> u128 {
        let mut remaining = self.image_counts(&self.image(x));
        let mut prefix = vec![0usize; self.base.len()];
        let mut rank: u128 = 0;
        for &a in x {
            let b = self.g[a];
            remaining[b] -= 1;
            for &smaller in self.fiber_syms[b].iter().take_while(|&&s| s < a) {
                prefix[smaller] += 1;
                rank = rank.saturating_add(self.completions(&prefix, &remaining));
                prefix[smaller] -= 1;
            }
            prefix[a] += 1;
        }
        rank
    }

    /// Draws blocks from the source until one is typical.
    pub fn sample_typical<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<usize>> {
        for _ in 0..MAX_REJECTIONS {
            let x: Vec<usize> = (0..self.k).map(|_| self.base.sample_with(rng.gen::<f64>())).collect();
            if self.is_typical(&x) {
                return Some(x);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CodecEntry {
    pub y: usize,
    /// Target value decoded from this entry, if the entry hosts a group.
    pub w: Option<usize>,
}

/// Encoder/decoder pair built on a Feinstein code.
#[derive(Debug, Clone)]
pub struct Codec {
    pub k: usize,
    pub n: usize,
    /// `R` with `R n = H(X') k`.
    pub rate_nats: f64,
    pub index: TypicalFiberIndex,
    pub code: Arc<FeinsteinCode>,
    pub entries: Vec<CodecEntry>,
    /// Target value -> code entries holding its typical blocks, in fill order.
    pub groups: BTreeMap<usize, Vec<usize>>,
    pub injective_decoding: bool,
    /// Typical blocks without a codeword.
    pub unplaced: u128,
    /// `P(block has a codeword | typical)`.
    pub placed_mass: f64,
    pub w_space: BlockSpace,
    decoder: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecOptions {
    /// Typicality tolerance of the encoder domain.
    pub typical_eps: f64,
    /// Keep going when the code cannot host every typical block.
    pub partial: bool,
}

impl Default for CodecOptions {
    fn default() -> Self {
        CodecOptions { typical_eps: 0.1, partial: false }
    }
}

/// Groups the typical blocks of each `g`-image onto disjoint runs of code
/// entries, largest images by probability first, largest entries first.
pub fn build_codec(source: &Source, g: &BlockFn, k: usize, code: Arc<FeinsteinCode>, h: &Hookup, opts: &CodecOptions) -> Result<Codec> {
    let Source::Iid { base } = source else {
        return Err(Error::Precondition("encoder needs an i.i.d. source".into()));
    };
    let index = TypicalFiberIndex::new(base, g, k, opts.typical_eps)?;
    let n = code.n;
    if h.n != n {
        return Err(Error::LengthMismatch { expected: n, got: h.n });
    }
    let rate = k as f64 * entropy(base) / n as f64;
    let measured = h.rate();
    if rate >= measured && !opts.partial {
        return Err(Error::CapacityExceeded { reason: format!("rate {rate:.6} is not below the measured typical input rate {measured:.6}"), unplaced: 0 });
    }
    let w_space = BlockSpace::new(g.out_alphabet(), k);
    let nw = w_space.size_capped(DEFAULT_ENUM_CAP)?;
    let typical_mass = index.typical_mass();
    if typical_mass <= 0.0 {
        return Err(Error::Domain("the typical set of the encoder source is empty".into()));
    }
    let mut by_counts: HashMap<Vec<usize>, (u128, f64)> = HashMap::new();
    let mut images: Vec<(usize, u128, f64)> = Vec::new();
    for w in 0..nw {
        let r = index.image_counts(&w_space.decode(w));
        let &mut (size, mass) = by_counts.entry(r.clone()).or_insert_with(|| (index.fiber_size(&r), index.fiber_mass(&r)));
        if size > 0 {
            images.push((w, size, mass));
        }
    }
    images.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let mut order: Vec<usize> = (0..code.entries.len()).collect();
    order.sort_by(|&a, &b| code.entries[b].a.len().cmp(&code.entries[a].a.len()).then(a.cmp(&b)));
    let mut next = 0;
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut entries: Vec<CodecEntry> = code.entries.iter().map(|e| CodecEntry { y: e.y, w: None }).collect();
    let mut unplaced: u128 = 0;
    let mut unplaced_mass = 0.0;
    for &(w, size, mass) in &images {
        let mut room: u128 = 0;
        let mut taken = Vec::new();
        while room < size && next < order.len() {
            let e = order[next];
            next += 1;
            room += code.entries[e].a.len() as u128;
            entries[e].w = Some(w);
            taken.push(e);
        }
        if room < size {
            unplaced += size - room;
            unplaced_mass += mass * (size - room) as f64 / size as f64;
        }
        if !taken.is_empty() {
            groups.insert(w, taken);
        }
    }
    if unplaced > 0 && !opts.partial {
        return Err(Error::CapacityExceeded {
            reason: format!("{} target values need more than the {} code entries", images.len(), code.entries.len()),
            unplaced,
        });
    }
    let injective_decoding = unplaced == 0 && groups.values().all(|v| v.len() == 1);
    let decoder = code.decoder_table()?;
    Ok(Codec {
        k,
        n,
        rate_nats: rate,
        index,
        code,
        entries,
        groups,
        injective_decoding,
        unplaced,
        placed_mass: (1.0 - unplaced_mass / typical_mass).clamp(0.0, 1.0),
        w_space,
        decoder,
    })
}

impl Codec {
    /// Input block assigned to a typical source block, if it has one.
    pub fn encode(&self, x: &[usize]) -> Option<usize> {
        let w = self.w_space.encode(&self.index.image(x));
        let mut r = self.index.rank(x);
        for &e in self.groups.get(&w)? {
            let a = &self.code.entries[e].a;
            if r < a.len() as u128 {
                return Some(a[r as usize]);
            }
            r -= a.len() as u128;
        }
        None
    }

    /// Target value attached to the code entry with output `y`.
    pub fn decode_output(&self, y: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.y == y).and_then(|e| e.w)
    }

    /// Decoder applied to a device output. Outputs outside every decoding
    /// region give no value, unless only one target value is possible.
    pub fn decode(&self, z: usize) -> Option<usize> {
        match self.decoder.get(z).copied().flatten() {
            Some(j) => self.entries[j].w,
            None if self.groups.len() == 1 => self.groups.keys().next().copied(),
            None => None,
        }
    }

    /// Recomputes the injective-decoding flag from the current groups.
    pub fn refresh_flags(&mut self) {
        self.injective_decoding = self.unplaced == 0 && self.groups.values().all(|v| v.len() == 1);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compatibility {
    pub holds: bool,
    /// Result of the converse implication, checked when decoding is injective.
    pub equivalence: Option<bool>,
    /// Two source blocks violating the checked condition.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
    pub encoder_injective: bool,
    /// Every codeword lies in some `A_i`.
    pub inside_code: bool,
    pub checked: usize,
}

/// Exhaustive check over the encoder domain that equal `f`-values of
/// codewords imply equal `g`-values (and the converse for injective codecs).
pub fn is_compatible(codec: &Codec, g: &BlockFn, f: &BlockFn) -> Result<Compatibility> {
    let q = codec.index.source().len();
    let xs = BlockSpace::new(q, codec.k);
    let count = xs.size_capped(DEFAULT_ENUM_CAP)?;
    let mut members: Vec<(usize, usize, usize)> = Vec::new();
    for code in 0..count {
        let x = xs.decode(code);
        if !codec.index.is_typical(&x) {
            continue;
        }
        if let Some(u) = codec.encode(&x) {
            let gv = BlockSpace::new(g.out_alphabet(), codec.k).encode(&g.apply(&x));
            members.push((code, u, gv));
        }
    }
    let mut seen_u: HashMap<usize, usize> = HashMap::new();
    let encoder_injective = members.iter().all(|&(c, u, _)| *seen_u.entry(u).or_insert(c) == c);
    let in_code: std::collections::HashSet<usize> = codec.code.entries.iter().flat_map(|e| e.a.iter().copied()).collect();
    let inside_code = members.iter().all(|m| in_code.contains(&m.1));
    let mut by_f: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut by_g: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut witness = None;
    let mut eq_witness = None;
    for &(c, u, gv) in &members {
        let fv = f.apply_code(codec.n, u);
        let (c0, g0) = *by_f.entry(fv).or_insert((c, gv));
        if g0 != gv && witness.is_none() {
            witness = Some((xs.decode(c0), xs.decode(c)));
        }
        let (c1, f1) = *by_g.entry(gv).or_insert((c, fv));
        if f1 != fv && eq_witness.is_none() {
            eq_witness = Some((xs.decode(c1), xs.decode(c)));
        }
    }
    let holds = witness.is_none();
    let equivalence = codec.injective_decoding.then_some(eq_witness.is_none());
    if holds && equivalence == Some(false) {
        witness = eq_witness;
    }
    Ok(Compatibility {
        holds: holds && equivalence != Some(false),
        equivalence,
        witness,
        encoder_injective,
        inside_code,
        checked: members.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub trials: u64,
    pub failures: u64,
    pub p_hat: f64,
    /// 95% Wilson score interval.
    pub wilson_interval: (f64, f64),
}

pub fn wilson_interval(failures: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if failures == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if failures == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

impl ErrorEstimate {
    pub fn new(trials: u64, failures: u64) -> Self {
        ErrorEstimate { trials, failures, p_hat: failures as f64 / trials as f64, wilson_interval: wilson_interval(failures, trials) }
    }
}

/// Monte Carlo estimate of the decoding error probability. Trial `i` draws
/// from its own stream `(seed, i)`, so the result does not depend on threads.
pub fn simulate(codec: &Codec, nc: &NoisyComputation, trials: u64, seed: u64) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(Error::Domain("trials must be positive".into()));
    }
    if codec.index.typical_mass() < 1e-6 {
        return Err(Error::Precondition("typical set too light for rejection sampling".into()));
    }
    let xs = BlockSpace::new(nc.in_alphabet(), codec.n);
    let zs = BlockSpace::new(nc.device.out_alphabet(), nc.device.out_len(codec.n)?);
    let failures: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let Some(x) = codec.index.sample_typical(&mut rng) else { return 1 };
            let w = codec.w_space.encode(&codec.index.image(&x));
            let Some(u) = codec.encode(&x) else { return 1 };
            let z = nc.device.sample(&xs.decode(u), &mut rng);
            (codec.decode(zs.encode(&z)) != Some(w)) as u64
        })
        .sum();
    Ok(ErrorEstimate::new(trials, failures))
}

/// Exact decoding error probability given a typical source block, by
/// enumerating the encoder domain.
pub fn expected_error(codec: &Codec, h: &Hookup) -> Result<f64> {
    let q = codec.index.source().len();
    let xs = BlockSpace::new(q, codec.k);
    let count = xs.size_capped(DEFAULT_ENUM_CAP)?;
    let base = codec.index.source();
    let mut fail = 0.0;
    let mut total = 0.0;
    for code in 0..count {
        let x = xs.decode(code);
        if !codec.index.is_typical(&x) {
            continue;
        }
        let p: f64 = x.iter().map(|&a| base.p(a)).product();
        total += p;
        let w = codec.w_space.encode(&codec.index.image(&x));
        let ok = match codec.encode(&x) {
            Some(u) => h.z_given_x(u).into_iter().filter(|&(z, _)| codec.decode(z) == Some(w)).map(|(_, pz)| pz).sum(),
            None => 0.0,
        };
        fail += p * (1.0 - ok);
    }
    Ok(fail / total)
}

/// Symbol law on the domain of `g` with `H(g(X')) = split * total` and
/// `H(X' | g(X')) = (1 - split) * total`, when one exists in the family.
///
/// The image law mixes a point mass on the value with the largest fiber with
/// the uniform law on all values; each fiber law mixes a point mass on its
/// smallest symbol with the uniform law on the fiber.
pub fn split_source(g: &BlockFn, total: f64, split: f64) -> Option<Dist> {
    let table = g.symbol_table()?;
    let mut fibers: Vec<Vec<usize>> = vec![Vec::new(); g.out_alphabet()];
    for (a, &b) in table.iter().enumerate() {
        fibers[b].push(a);
    }
    let values: Vec<usize> = (0..fibers.len()).filter(|&b| !fibers[b].is_empty()).collect();
    let b0 = *values.iter().max_by(|&&a, &&b| fibers[a].len().cmp(&fibers[b].len()).then(b.cmp(&a)))?;
    let mu = |t: f64| -> Vec<f64> {
        let mut m = vec![0.0; fibers.len()];
        for &b in &values {
            m[b] = t / values.len() as f64;
        }
        m[b0] += 1.0 - t;
        m
    };
    let h = |v: &[f64]| -> f64 { -v.iter().map(|&p| crate::prob::xlnx(p)).sum::<f64>() };
    let bisect = |f: &dyn Fn(f64) -> f64, target: f64| -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let target_g = split * total;
    if target_g > h(&mu(1.0)) + 1e-12 || total < 0.0 {
        return None;
    }
    let t = if target_g <= 0.0 { 0.0 } else { bisect(&|t| h(&mu(t)), target_g) };
    let m = mu(t);
    let nu = |b: usize, s: f64| -> Vec<f64> {
        let len = fibers[b].len() as f64;
        let mut v = vec![s / len; fibers[b].len()];
        v[0] += 1.0 - s;
        v
    };
    let cond = |s: f64| -> f64 { values.iter().map(|&b| m[b] * h(&nu(b, s))).sum() };
    let target_c = total - h(&m);
    if target_c > cond(1.0) + 1e-12 {
        return None;
    }
    let s = if target_c <= 0.0 { 0.0 } else { bisect(&cond, target_c) };
    let mut law = vec![0.0; table.len()];
    for &b in &values {
        for (i, &a) in fibers[b].iter().enumerate() {
            law[a] = m[b] * nu(b, s)[i];
        }
    }
    Dist::new(law).ok()
}

/// Reference setup for rate sweeps: the computation, the target function and
/// the capacity-achieving input law of the code.
#[derive(Debug, Clone)]
pub struct SweepInstance {
    pub nc: NoisyComputation,
    pub g: BlockFn,
    pub input_law: Dist,
    pub capacity: f64,
    /// Share of the capacity carried by `I(f(X); F(X))` at the input law.
    pub split: f64,
}

impl SweepInstance {
    pub fn new(nc: NoisyComputation, g: BlockFn, cap: &CapacityReport) -> Result<Self> {
        let Some((f, rows)) = nc.single_letter() else {
            return Err(Error::Precondition("sweep needs a per-symbol function and a memoryless device".into()));
        };
        let (_, hy, hc) = single_letter_terms(cap.argmax.probs(), f, rows, nc.f.out_alphabet());
        let split = if cap.value_nats > 0.0 { ((hy - hc) / cap.value_nats).clamp(0.0, 1.0) } else { 0.0 };
        Ok(SweepInstance { nc, g, input_law: cap.argmax.clone(), capacity: cap.value_nats, split })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Code error levels tried in increasing order; the smallest one that
    /// hosts every typical block is used.
    pub epsilon_grid: Vec<f64>,
    pub lambda: f64,
    pub typical_eps: f64,
    pub feinstein: FeinsteinOptions,
    /// Candidate ratios `k/n` as `(k, n)` pairs.
    pub ratios: Vec<(usize, usize)>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            epsilon_grid: vec![0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49],
            lambda: 0.1,
            typical_eps: 0.1,
            feinstein: FeinsteinOptions::default(),
            ratios: vec![(1, 3), (1, 2), (2, 3), (1, 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rate_nats: f64,
    pub k: usize,
    pub n: usize,
    pub trials: u64,
    pub failures: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
    pub code_epsilon: f64,
    pub code_size: usize,
    /// Every typical block has a codeword and the rate is below the measured rate.
    pub feasible: bool,
    pub placed_mass: f64,
}

/// Smallest ratio `k/n` from `ratios` giving an integer `k` at every block
/// length in `ns` and a source entropy `rate * n / k` the target domain can carry.
pub fn block_ratio(g: &BlockFn, rate: f64, ns: &[usize], ratios: &[(usize, usize)]) -> Option<(usize, usize)> {
    let hmax = (g.in_alphabet() as f64).ln();
    let mut sorted = ratios.to_vec();
    sorted.sort_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)).then(a.1.cmp(&b.1)));
    sorted.into_iter().find(|&(num, den)| {
        num > 0 && ns.iter().all(|n| n * num % den == 0) && rate * den as f64 / num as f64 <= hmax + 1e-12
    })
}

/// Picks a codec for rate `rate` with `k` source symbols per block of length
/// `h.n`: the smallest code error level admitting a complete codec, otherwise
/// the partial codec placing the most typical mass.
pub fn choose_codec(inst: &SweepInstance, h: &Hookup, codes: &mut Vec<(f64, Arc<FeinsteinCode>)>, rate: f64, k: usize, opts: &SweepOptions) -> Result<Codec> {
    let total = rate * h.n as f64 / k as f64;
    let src = Source::iid(
        split_near(&inst.g, total, inst.split).ok_or_else(|| Error::Precondition(format!("no source law of entropy {total} on the target domain")))?,
    );
    let mut best: Option<Codec> = None;
    for &eps in &opts.epsilon_grid {
        let code = match codes.iter().find(|c| c.0 == eps) {
            Some(c) => c.1.clone(),
            None => {
                let c = Arc::new(greedy_construct(h, eps, opts.lambda, &opts.feinstein)?);
                codes.push((eps, c.clone()));
                c
            }
        };
        let copts = CodecOptions { typical_eps: opts.typical_eps, partial: true };
        let codec = build_codec(&src, &inst.g, k, code, h, &copts)?;
        if codec.unplaced == 0 && codec.rate_nats < h.rate() {
            return Ok(codec);
        }
        if best.as_ref().map_or(true, |b| codec.placed_mass > b.placed_mass) {
            best = Some(codec);
        }
    }
    best.ok_or_else(|| Error::Precondition("empty code error grid".into()))
}

/// `split_source` at the requested split, or at the nearest feasible split
/// on a 0.01 grid.
fn split_near(g: &BlockFn, total: f64, split: f64) -> Option<Dist> {
    if let Some(d) = split_source(g, total, split) {
        return Some(d);
    }
    (1..=100).find_map(|i| {
        let d = i as f64 * 0.01;
        split_source(g, total, (split + d).min(1.0)).or_else(|| split_source(g, total, (split - d).max(0.0)))
    })
}

/// Error probability over a grid of rates (nats per device use) and device
/// block lengths. Each rate keeps one ratio `k/n` across all block lengths.
pub fn rate_sweep(inst: &SweepInstance, rates: &[f64], ns: &[usize], trials: u64, seed: u64, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    let source = Source::iid(inst.input_law.clone());
    let ratios: Vec<(usize, usize)> = rates
        .iter()
        .map(|&r| block_ratio(&inst.g, r, ns, &opts.ratios).ok_or_else(|| Error::Precondition(format!("no block ratio carries rate {r}"))))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &n in ns {
        let h = hookup_auto(&source, &inst.nc, n)?;
        let mut codes = Vec::new();
        for (&rate, &(num, den)) in rates.iter().zip(&ratios) {
            let codec = choose_codec(inst, &h, &mut codes, rate, n * num / den, opts)?;
            let est = simulate(&codec, &inst.nc, trials, seed)?;
            rows.push(SweepRow {
                rate_nats: rate,
                k: codec.k,
                n,
                trials,
                failures: est.failures,
                p_hat: est.p_hat,
                ci_lo: est.wilson_interval.0,
                ci_hi: est.wilson_interval.1,
                seed,
                code_epsilon: codec.code.epsilon,
                code_size: codec.code.size(),
                feasible: codec.unplaced == 0 && codec.rate_nats < h.rate(),
                placed_mass: codec.placed_mass,
            });
        }
    }
    Ok(rows)
}
