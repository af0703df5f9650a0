//! Sources over a finite alphabet: i.i.d. and first-order Markov laws, their
//! n-th extensions, seeded sampling, and typical-set enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{BlockSpace, DEFAULT_ENUM_CAP};
use crate::error::{Error, Result};
use crate::prob::{entropy, Dist, JointTable};

/// Discrete source: an i.i.d. marginal or a Markov chain with initial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    Iid { base: Dist },
    Markov { init: Dist, transition: Vec<Dist> },
}

impl Source {
    pub fn iid(base: Dist) -> Self {
        Source::Iid { base }
    }

    pub fn markov(init: Dist, transition: Vec<Dist>) -> Result<Self> {
        let s = Source::Markov { init, transition };
        s.validate()?;
        Ok(s)
    }

    /// Shape checks for values built through serde.
    pub fn validate(&self) -> Result<()> {
        if let Source::Markov { init, transition } = self {
            let q = init.len();
            if transition.len() != q {
                return Err(Error::LengthMismatch { expected: q, got: transition.len() });
            }
            for row in transition {
                if row.len() != q {
                    return Err(Error::LengthMismatch { expected: q, got: row.len() });
                }
            }
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            Source::Iid { base } => base.len(),
            Source::Markov { init, .. } => init.len(),
        }
    }

    pub fn is_iid(&self) -> bool {
        matches!(self, Source::Iid { .. })
    }

    /// Probability of a finite block.
    pub fn block_prob(&self, block: &[usize]) -> f64 {
        match self {
            Source::Iid { base } => block.iter().map(|&s| base.p(s)).product(),
            Source::Markov { init, transition } => {
                let Some((&first, rest)) = block.split_first() else { return 1.0 };
                let mut p = init.p(first);
                let mut prev = first;
                for &s in rest {
                    p *= transition[prev].p(s);
                    prev = s;
                }
                p
            }
        }
    }

    /// Natural log of the block probability; `-inf` off the support.
    pub fn block_log_prob(&self, block: &[usize]) -> f64 {
        let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        match self {
            Source::Iid { base } => block.iter().map(|&s| ln(base.p(s))).sum(),
            Source::Markov { init, transition } => {
                let Some((&first, rest)) = block.split_first() else { return 0.0 };
                let mut lp = ln(init.p(first));
                let mut prev = first;
                for &s in rest {
                    lp += ln(transition[prev].p(s));
                    prev = s;
                }
                lp
            }
        }
    }

    /// Stationary law. For Markov chains this requires irreducibility and is
    /// found by power iteration on the lazy chain `(P + I) / 2`, which has the
    /// same fixed point and no periodicity.
    pub fn stationary(&self) -> Result<Dist> {
        match self {
            Source::Iid { base } => Ok(base.clone()),
            Source::Markov { transition, .. } => {
                if !irreducible(transition) {
                    return Err(Error::ReducibleChain);
                }
                let q = transition.len();
                let mut pi = vec![1.0 / q as f64; q];
                const MAX_ITER: usize = 1_000_000;
                for _ in 0..MAX_ITER {
                    let mut next = vec![0.0; q];
                    for (i, row) in transition.iter().enumerate() {
                        next[i] += 0.5 * pi[i];
                        for (j, &p) in row.probs().iter().enumerate() {
                            next[j] += 0.5 * pi[i] * p;
                        }
                    }
                    let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
                    pi = next;
                    if diff < 1e-13 {
                        return Dist::from_weights(pi);
                    }
                }
                Err(Error::NoConvergence { iterations: MAX_ITER })
            }
        }
    }

    /// Entropy rate in nats per symbol.
    pub fn entropy_rate(&self) -> Result<f64> {
        match self {
            Source::Iid { base } => Ok(entropy(base)),
            Source::Markov { transition, .. } => {
                let pi = self.stationary()?;
                Ok(transition.iter().zip(pi.probs()).map(|(row, &w)| w * entropy(row)).sum())
            }
        }
    }

    /// Draws one block of length `n` from an RNG stream.
    pub fn sample_block<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        match self {
            Source::Iid { base } => {
                for _ in 0..n {
                    out.push(base.sample_with(rng.gen::<f64>()));
                }
            }
            Source::Markov { init, transition } => {
                if n == 0 {
                    return out;
                }
                let mut s = init.sample_with(rng.gen::<f64>());
                out.push(s);
                for _ in 1..n {
                    s = transition[s].sample_with(rng.gen::<f64>());
                    out.push(s);
                }
            }
        }
        out
    }
}

fn irreducible(transition: &[Dist]) -> bool {
    let q = transition.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; q];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..q {
                let edge = if forward { transition[i].p(j) } else { transition[j].p(i) };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    q > 0 && reach(true) && reach(false)
}

/// Law of the first `n` symbols, indexed by block code.
pub fn extend(s: &Source, n: usize) -> Result<Dist> {
    extend_capped(s, n, DEFAULT_ENUM_CAP)
}

pub fn extend_capped(s: &Source, n: usize, cap: usize) -> Result<Dist> {
    if n == 0 {
        return Err(Error::Precondition("block length must be at least 1".into()));
    }
    let q = s.alphabet_size();
    BlockSpace::new(q, n).size_capped(cap)?;
    let mut probs = match s {
        Source::Iid { base } => base.probs().to_vec(),
        Source::Markov { init, .. } => init.probs().to_vec(),
    };
    for _ in 1..n {
        let mut next = Vec::with_capacity(probs.len() * q);
        for (code, &p) in probs.iter().enumerate() {
            let row = match s {
                Source::Iid { base } => base,
                Source::Markov { transition, .. } => &transition[code % q],
            };
            next.extend(row.probs().iter().map(|&r| p * r));
        }
        probs = next;
    }
    Dist::from_weights(probs)
}

/// Deterministic block draw: the same `(source, n, seed)` gives the same block.
pub fn sample(s: &Source, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    s.sample_block(n, &mut rng)
}

/// Membership predicate `|-ln p / n - rate| < epsilon` for a block of
/// log-probability `log_p` and length `n`.
#[inline]
pub fn typical_predicate(log_p: f64, n: usize, rate: f64, epsilon: f64) -> bool {
    log_p.is_finite() && (-log_p / n as f64 - rate).abs() < epsilon
}

/// Whether a block is epsilon-typical for the source's entropy rate.
pub fn is_typical(s: &Source, block: &[usize], epsilon: f64) -> Result<bool> {
    let rate = s.entropy_rate()?;
    Ok(typical_predicate(s.block_log_prob(block), block.len(), rate, epsilon))
}

/// Epsilon-typical blocks of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalSet {
    pub n: usize,
    pub epsilon: f64,
    pub target_rate: f64,
    /// Member block codes in increasing (lexicographic) order.
    pub members: Vec<usize>,
    /// Source probability of the whole set.
    pub mass: f64,
}

impl TypicalSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, code: usize) -> bool {
        self.members.binary_search(&code).is_ok()
    }
}

/// Typical set against the analytic entropy rate.
pub fn typical_set(s: &Source, n: usize, epsilon: f64) -> Result<TypicalSet> {
    typical_set_capped(s, n, epsilon, DEFAULT_ENUM_CAP)
}

/// As [`typical_set`]. For i.i.d. sources the blocks are generated per type
/// class, so `cap` bounds the member count rather than `|A|^n`; Markov
/// sources are filtered over the full extension.
pub fn typical_set_capped(s: &Source, n: usize, epsilon: f64, cap: usize) -> Result<TypicalSet> {
    if n == 0 {
        return Err(Error::Precondition("block length must be at least 1".into()));
    }
    let rate = s.entropy_rate()?;
    let space = BlockSpace::new(s.alphabet_size(), n);
    let (members, mass) = match s {
        Source::Iid { base } => iid_typical(base, space, rate, epsilon, cap)?,
        Source::Markov { .. } => {
            let law = extend_capped(s, n, cap)?;
            let mut members = Vec::new();
            let mut mass = 0.0;
            for (code, &p) in law.probs().iter().enumerate() {
                if typical_predicate(p.ln(), n, rate, epsilon) {
                    members.push(code);
                    mass += p;
                }
            }
            (members, mass)
        }
    };
    Ok(TypicalSet { n, epsilon, target_rate: rate, members, mass })
}

fn iid_typical(base: &Dist, space: BlockSpace, rate: f64, epsilon: f64, cap: usize) -> Result<(Vec<usize>, f64)> {
    let q = base.len();
    let n = space.n;
    let mut counts = vec![0usize; q];
    let mut typical_types: Vec<Vec<usize>> = Vec::new();
    let mut total: u128 = 0;
    compositions(n, q, 0, &mut counts, &mut |c| {
        let logp: f64 = c.iter().zip(base.probs()).map(|(&k, &p)| if k == 0 { 0.0 } else { k as f64 * p.ln() }).sum();
        if logp.is_finite() && (-logp / n as f64 - rate).abs() < epsilon {
            total += multinomial(n, c);
            typical_types.push(c.to_vec());
        }
    });
    if total > cap as u128 {
        return Err(Error::EnumerationLimit { requested: total, cap });
    }
    let mut members = Vec::with_capacity(total as usize);
    let mut mass = 0.0;
    for c in &typical_types {
        let p: f64 = c.iter().zip(base.probs()).map(|(&k, &p)| p.powi(k as i32)).product();
        let before = members.len();
        let mut remaining = c.clone();
        let mut block = vec![0usize; n];
        arrangements(0, &mut remaining, &mut block, &mut |b| members.push(space.encode(b)));
        mass += p * (members.len() - before) as f64;
    }
    members.sort_unstable();
    Ok((members, mass))
}

fn compositions(n: usize, q: usize, idx: usize, counts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if idx + 1 == q {
        counts[idx] = n;
        f(counts);
        return;
    }
    for k in 0..=n {
        counts[idx] = k;
        compositions(n - k, q, idx + 1, counts, f);
    }
}

fn arrangements(pos: usize, remaining: &mut [usize], block: &mut [usize], f: &mut impl FnMut(&[usize])) {
    if pos == block.len() {
        f(block);
        return;
    }
    for s in 0..remaining.len() {
        if remaining[s] > 0 {
            remaining[s] -= 1;
            block[pos] = s;
            arrangements(pos + 1, remaining, block, f);
            remaining[s] += 1;
        }
    }
}

fn multinomial(n: usize, counts: &[usize]) -> u128 {
    let mut acc: u128 = 1;
    let mut used = 0usize;
    for &k in counts {
        for i in 1..=k {
            used += 1;
            acc = acc * used as u128 / i as u128;
        }
    }
    debug_assert_eq!(used, n);
    acc
}

/// Blocks `x` (rows of `joint`, length `n`) with
/// `|-ln P(x | y) / n - target| < epsilon` for the given column `y`.
pub fn cond_typical_set(joint: &JointTable, n: usize, epsilon: f64, y: usize, target: f64) -> Result<Vec<usize>> {
    if y >= joint.cols() {
        return Err(Error::OutOfRange { index: y, size: joint.cols() });
    }
    let column: Vec<(usize, f64)> = joint.iter().filter(|&(_, c, _)| c == y).map(|(r, _, p)| (r, p)).collect();
    let py: f64 = column.iter().map(|&(_, p)| p).sum();
    if py <= 0.0 {
        return Err(Error::Domain(format!("conditioning block {y} has zero mass")));
    }
    Ok(column.into_iter().filter(|&(_, p)| typical_predicate((p / py).ln(), n, target, epsilon)).map(|(r, _)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern(p0: f64) -> Source {
        Source::iid(Dist::new(vec![p0, 1.0 - p0]).unwrap())
    }

    #[test]
    fn extend_examples() {
        let d = extend(&bern(1.0), 3).unwrap();
        assert_eq!(d.support(), vec![0]);
        let u = extend(&bern(0.5), 2).unwrap();
        assert!(u.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!(matches!(extend(&bern(0.5), 21), Err(Error::EnumerationLimit { .. })));
    }

    #[test]
    fn markov_extension_matches_path_products() {
        let init = Dist::new(vec![0.6, 0.4]).unwrap();
        let rows = vec![Dist::new(vec![0.9, 0.1]).unwrap(), Dist::new(vec![0.3, 0.7]).unwrap()];
        let s = Source::markov(init, rows).unwrap();
        let law = extend(&s, 3).unwrap();
        let m = [[0.9, 0.1], [0.3, 0.7]];
        let i0 = [0.6, 0.4];
        let sp = BlockSpace::new(2, 3);
        for code in 0..8 {
            let b = sp.decode(code);
            let oracle = i0[b[0]] * m[b[0]][b[1]] * m[b[1]][b[2]];
            assert!((law.p(code) - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn markov_entropy_rate_and_reducible_rejection() {
        let init = Dist::uniform(2);
        let s = Source::markov(init.clone(), vec![Dist::new(vec![0.9, 0.1]).unwrap(), Dist::new(vec![0.3, 0.7]).unwrap()]).unwrap();
        // stationary law of this chain is (3/4, 1/4)
        let pi = s.stationary().unwrap();
        assert!((pi.p(0) - 0.75).abs() < 1e-12);
        let h = |p: f64| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        assert!((s.entropy_rate().unwrap() - (0.75 * h(0.1) + 0.25 * h(0.3))).abs() < 1e-12);
        let periodic = Source::markov(init.clone(), vec![Dist::point(2, 1), Dist::point(2, 0)]).unwrap();
        assert!((periodic.stationary().unwrap().p(0) - 0.5).abs() < 1e-12);
        let reducible = Source::markov(init, vec![Dist::point(2, 0), Dist::uniform(2)]).unwrap();
        assert_eq!(reducible.entropy_rate(), Err(Error::ReducibleChain));
    }

    #[test]
    fn sampling_is_deterministic() {
        assert!(sample(&bern(1.0), 50, 7).iter().all(|&s| s == 0));
        let s = bern(0.3);
        assert_eq!(sample(&s, 100, 42), sample(&s, 100, 42));
        assert_ne!(sample(&s, 100, 42), sample(&s, 100, 43));
    }

    #[test]
    fn sample_frequencies_within_three_sigma() {
        let s = Source::iid(Dist::new(vec![0.2, 0.5, 0.3]).unwrap());
        let block = sample(&s, 100_000, 11);
        for (sym, p) in [0.2f64, 0.5, 0.3].into_iter().enumerate() {
            let freq = block.iter().filter(|&&b| b == sym).count() as f64 / 1e5;
            let sigma = (p * (1.0 - p) / 1e5).sqrt();
            assert!((freq - p).abs() < 3.0 * sigma, "symbol {sym}: {freq}");
        }
    }

    #[test]
    fn typical_set_examples() {
        let t = typical_set(&bern(1.0), 5, 0.1).unwrap();
        assert_eq!(t.members, vec![0]);
        assert!((t.mass - 1.0).abs() < 1e-15);
        let u = typical_set(&bern(0.5), 6, 0.01).unwrap();
        assert_eq!(u.len(), 64);

        // brute-force filter over all 1024 blocks
        let s = bern(0.3);
        let h = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
        let sp = BlockSpace::new(2, 10);
        let oracle: Vec<usize> = (0..1024)
            .filter(|&c| {
                let b = sp.decode(c);
                let lp: f64 = b.iter().map(|&x| if x == 0 { 0.3f64.ln() } else { 0.7f64.ln() }).sum();
                (-lp / 10.0 - h).abs() < 0.1
            })
            .collect();
        let t = typical_set(&s, 10, 0.1).unwrap();
        assert_eq!(t.members, oracle);
    }

    #[test]
    fn iid_type_classes_agree_with_full_filter() {
        let s = Source::iid(Dist::new(vec![0.5, 0.3, 0.2]).unwrap());
        let by_type = typical_set(&s, 7, 0.15).unwrap();
        let m = Source::markov(
            Dist::new(vec![0.5, 0.3, 0.2]).unwrap(),
            vec![Dist::new(vec![0.5, 0.3, 0.2]).unwrap(); 3],
        )
        .unwrap();
        let by_filter = typical_set(&m, 7, 0.15).unwrap();
        assert_eq!(by_type.members, by_filter.members);
        assert!((by_type.mass - by_filter.mass).abs() < 1e-12);
    }

    #[test]
    fn cond_typical_examples() {
        // identity coupling of 4 blocks, target 0
        let id = JointTable::new(4, 4, (0..4).map(|i| (i, i, 0.25))).unwrap();
        assert_eq!(cond_typical_set(&id, 2, 0.05, 2, 0.0).unwrap(), vec![2]);
        assert!(matches!(cond_typical_set(&JointTable::new(2, 2, [(0, 0, 1.0)]).unwrap(), 1, 0.1, 1, 0.0), Err(Error::Domain(_))));

        // product coupling reduces to the marginal typical set
        let s = bern(0.3);
        let law = extend(&s, 6).unwrap();
        let other = Dist::new(vec![0.4, 0.6]).unwrap();
        let prod = JointTable::product(&law, &other);
        let h = s.entropy_rate().unwrap();
        let t = typical_set(&s, 6, 0.2).unwrap();
        assert_eq!(cond_typical_set(&prod, 6, 0.2, 1, h).unwrap(), t.members);
    }
}
