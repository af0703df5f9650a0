//! Typical input rate and typical input capacity of noisy computations, plus
//! classical channel capacity for comparison.
//!
//! The capacity optimizer maximizes `H(X) - H(f(X) | F(X))` over i.i.d. laws
//! (or order-1 Markov laws) with multi-start projected gradient ascent, and
//! cross-checks against an exhaustive simplex grid when the alphabet is small.
//! Values over these families are lower bounds on the supremum over all
//! stationary ergodic sources.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{hookup, product, BlockFn, BlockKernel, NoisyComputation};
use crate::error::{Error, Result};
use crate::prob::{entropy, xlnx, Dist};
use crate::processes::Source;

/// Cap on observation sequences walked when computing hidden-chain block
/// entropies.
pub const HIDDEN_LEAF_CAP: usize = 1 << 26;

/// Block length used to extrapolate limit rates that do not single-letterize.
pub const DEFAULT_EXTRAPOLATION_N: usize = 12;

/// Typical input rate of a hookup, with its two components per symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Block length used; `None` for an exact limit.
    pub n: Option<usize>,
    /// Whether the limit was estimated from finite block lengths.
    pub extrapolated: bool,
    pub rate_nats: f64,
    pub entropy_x: f64,
    pub cond_entropy_y_given_z: f64,
}

impl RateReport {
    fn new(n: Option<usize>, extrapolated: bool, entropy_x: f64, cond_entropy_y_given_z: f64) -> Self {
        RateReport { n, extrapolated, rate_nats: entropy_x - cond_entropy_y_given_z, entropy_x, cond_entropy_y_given_z }
    }
}

/// `H(X)`, `H(f(X))` and `H(f(X) | F(X))` for one input symbol drawn from `p`.
/// `p` may be unnormalized.
pub fn single_letter_terms(p: &[f64], f: &[usize], rows: &[Dist], qy: usize) -> (f64, f64, f64) {
    let total: f64 = p.iter().sum();
    let qz = rows[0].len();
    let mut hx = 0.0;
    let mut py = vec![0.0; qy];
    let mut pyz = vec![0.0; qy * qz];
    let mut pz = vec![0.0; qz];
    for (a, &w) in p.iter().enumerate() {
        let pa = w / total;
        if pa <= 0.0 {
            continue;
        }
        hx -= xlnx(pa);
        py[f[a]] += pa;
        for (c, &r) in rows[a].probs().iter().enumerate() {
            pyz[f[a] * qz + c] += pa * r;
            pz[c] += pa * r;
        }
    }
    let hy = -py.iter().map(|&v| xlnx(v)).sum::<f64>();
    let hyz = -pyz.iter().map(|&v| xlnx(v)).sum::<f64>();
    let hz = -pz.iter().map(|&v| xlnx(v)).sum::<f64>();
    (hx, hy, (hyz - hz).max(0.0))
}

/// Block entropies `H(O^t)`, `t = 0..=n`, of the observation process of a
/// hidden chain with initial law `init`, transitions `trans` and emission
/// matrix `emit[state][obs]`.
pub fn hidden_block_entropies(init: &[f64], trans: &[Vec<f64>], emit: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
    let q_obs = emit[0].len();
    let leaves = (q_obs as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if leaves > HIDDEN_LEAF_CAP as u128 {
        return Err(Error::EnumerationLimit { requested: leaves, cap: HIDDEN_LEAF_CAP });
    }
    let mut h = vec![0.0; n + 1];
    // alpha at depth t is the joint of (O^t, X_t); `pred` is the law of the next state.
    fn walk(depth: usize, pred: &[f64], trans: &[Vec<f64>], emit: &[Vec<f64>], n: usize, h: &mut [f64]) {
        let q_obs = emit[0].len();
        let states = pred.len();
        let mut alpha = vec![0.0; states];
        let mut next = vec![0.0; states];
        for o in 0..q_obs {
            let mut mass = 0.0;
            for x in 0..states {
                alpha[x] = pred[x] * emit[x][o];
                mass += alpha[x];
            }
            if mass <= 0.0 {
                continue;
            }
            h[depth + 1] -= xlnx(mass);
            if depth + 1 < n {
                next.iter_mut().for_each(|v| *v = 0.0);
                for (x, &ax) in alpha.iter().enumerate() {
                    if ax > 0.0 {
                        for (x2, &t) in trans[x].iter().enumerate() {
                            next[x2] += ax * t;
                        }
                    }
                }
                walk(depth + 1, &next, trans, emit, n, h);
            }
        }
    }
    if n > 0 {
        walk(0, init, trans, emit, n, &mut h);
    }
    Ok(h)
}

fn chain_parts(s: &Source) -> (Vec<f64>, Vec<Vec<f64>>) {
    match s {
        Source::Iid { base } => (base.probs().to_vec(), vec![base.probs().to_vec(); base.len()]),
        Source::Markov { init, transition } => (init.probs().to_vec(), transition.iter().map(|r| r.probs().to_vec()).collect()),
    }
}

/// `H(X^n)` in nats, by propagating the one-step marginals.
fn source_block_entropy(s: &Source, n: usize) -> f64 {
    match s {
        Source::Iid { base } => n as f64 * entropy(base),
        Source::Markov { init, transition } => {
            if n == 0 {
                return 0.0;
            }
            let row_h: Vec<f64> = transition.iter().map(entropy).collect();
            let mut mu = init.probs().to_vec();
            let mut h = entropy(init);
            for _ in 1..n {
                h += mu.iter().zip(&row_h).map(|(m, r)| m * r).sum::<f64>();
                let mut next = vec![0.0; mu.len()];
                for (a, &m) in mu.iter().enumerate() {
                    for (b, &t) in transition[a].probs().iter().enumerate() {
                        next[b] += m * t;
                    }
                }
                mu = next;
            }
            h
        }
    }
}

/// `H(f^t | F^t)` for `t = 0..=n` when `f` is per-symbol and `F` memoryless.
fn hidden_cond_entropies(s: &Source, f: &[usize], rows: &[Dist], qy: usize, n: usize) -> Result<Vec<f64>> {
    let (init, trans) = chain_parts(s);
    let qz = rows[0].len();
    let emit_yz: Vec<Vec<f64>> = (0..f.len())
        .map(|a| {
            let mut e = vec![0.0; qy * qz];
            for c in 0..qz {
                e[f[a] * qz + c] = rows[a].p(c);
            }
            e
        })
        .collect();
    let emit_z: Vec<Vec<f64>> = rows.iter().map(|r| r.probs().to_vec()).collect();
    let hyz = hidden_block_entropies(&init, &trans, &emit_yz, n)?;
    let hz = hidden_block_entropies(&init, &trans, &emit_z, n)?;
    Ok(hyz.iter().zip(&hz).map(|(a, b)| (a - b).max(0.0)).collect())
}

/// Exact `B^n = [H(X^n) - H(f^n(X^n) | F^n(X^n))] / n`.
pub fn typical_input_rate_n(s: &Source, nc: &NoisyComputation, n: usize) -> Result<RateReport> {
    if n == 0 {
        return Err(Error::Domain("block length must be positive".into()));
    }
    if let Some((f, rows)) = nc.single_letter() {
        if s.alphabet_size() != f.len() {
            return Err(Error::AlphabetMismatch(format!("source emits {} symbols, computation reads {}", s.alphabet_size(), f.len())));
        }
        let nf = n as f64;
        if let Source::Iid { base } = s {
            let (hx, _, hc) = single_letter_terms(base.probs(), f, rows, nc.f.out_alphabet());
            return Ok(RateReport::new(Some(n), false, hx, hc));
        }
        let hc = hidden_cond_entropies(s, f, rows, nc.f.out_alphabet(), n)?[n];
        return Ok(RateReport::new(Some(n), false, source_block_entropy(s, n) / nf, hc / nf));
    }
    let h = hookup(s, nc, n)?;
    let nf = n as f64;
    Ok(RateReport::new(Some(n), false, h.entropy_x() / nf, h.cond_entropy_y_given_z() / nf))
}

/// Limit rate `B = H(X) - H(f(X) | F(X))` (entropy rates). Exact for i.i.d.
/// sources with a single-letter computation; for Markov sources the
/// conditional term is estimated by its increment at block length `n`.
pub fn typical_input_rate(s: &Source, nc: &NoisyComputation) -> Result<RateReport> {
    typical_input_rate_at(s, nc, DEFAULT_EXTRAPOLATION_N)
}

pub fn typical_input_rate_at(s: &Source, nc: &NoisyComputation, n: usize) -> Result<RateReport> {
    let Some((f, rows)) = nc.single_letter() else {
        return Err(Error::Precondition(
            "limit rate needs a per-symbol function and a memoryless device; use typical_input_rate_n at the table length".into(),
        ));
    };
    match s {
        Source::Iid { .. } => {
            let r = typical_input_rate_n(s, nc, 1)?;
            Ok(RateReport { n: None, ..r })
        }
        Source::Markov { .. } => {
            if n < 2 {
                return Err(Error::Domain("extrapolation needs n >= 2".into()));
            }
            let hc = hidden_cond_entropies(s, f, rows, nc.f.out_alphabet(), n)?;
            Ok(RateReport::new(Some(n), true, s.entropy_rate()?, hc[n] - hc[n - 1]))
        }
    }
}

/// Input-law family searched by the capacity optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Iid,
    Markov1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grid,
    Gradient,
    Both,
    /// Alternating maximization for classical channel capacity.
    Alternating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityOptions {
    pub restarts: usize,
    pub fd_step: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Run the grid oracle; `None` runs it whenever the alphabet allows.
    pub grid: Option<bool>,
    /// Overrides the alphabet-dependent grid resolution.
    pub grid_resolution: Option<f64>,
    /// Block length for the Markov objective increment.
    pub markov_n: usize,
    /// Floor mixed into every Markov transition row.
    pub markov_floor: f64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            restarts: 20,
            fd_step: 1e-5,
            max_iter: 2000,
            seed: 0,
            grid: None,
            grid_resolution: None,
            markov_n: 6,
            markov_floor: 1e-6,
        }
    }
}

/// Grid step used for an input alphabet of size `q`, if the grid is feasible.
pub fn default_grid_resolution(q: usize) -> Option<f64> {
    match q {
        0 | 1 => Some(1.0),
        2..=4 => Some(0.01),
        5 => Some(0.02),
        6 => Some(0.04),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub value_nats: f64,
    /// Single-letter input law attaining the value (stationary law for Markov).
    pub argmax: Dist,
    /// Transition rows of the optimizing chain, for the Markov family.
    pub transition: Option<Vec<Dist>>,
    pub method: Method,
    pub family: Family,
    /// Lower end is the attained value. The upper end, when present, bounds
    /// the supremum over the family.
    pub bracket: (f64, Option<f64>),
    pub grid_value: Option<f64>,
    pub gradient_value: Option<f64>,
    pub grid_resolution: Option<f64>,
    /// False when no gradient restart reached stationarity.
    pub converged: bool,
    pub label: String,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Objective over a product of simplices (one block per i.i.d. law or per
/// transition row). Blocks passed in may be unnormalized.
type Objective<'a> = dyn Fn(&[Vec<f64>]) -> f64 + Sync + 'a;

fn normalized(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|b| {
            let s: f64 = b.iter().sum();
            b.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn fd_gradient(obj: &Objective, x: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    let mut g: Vec<Vec<f64>> = x.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut work = x.to_vec();
    for i in 0..x.len() {
        for j in 0..x[i].len() {
            let v = x[i][j];
            work[i][j] = v + h;
            let up = obj(&work);
            if v >= h {
                work[i][j] = v - h;
                g[i][j] = (up - obj(&work)) / (2.0 * h);
            } else {
                work[i][j] = v;
                g[i][j] = (up - obj(&work)) / h;
            }
            work[i][j] = v;
        }
    }
    g
}

/// Projected gradient ascent with backtracking. Returns the point, its value
/// and whether it reached stationarity.
fn ascend(obj: &Objective, start: Vec<Vec<f64>>, opts: &CapacityOptions) -> (Vec<Vec<f64>>, f64, bool) {
    let mut x = start;
    let mut val = obj(&x);
    let mut step = 1.0;
    for _ in 0..opts.max_iter {
        let g = fd_gradient(obj, &x, opts.fd_step);
        let mut t = step;
        let mut moved = false;
        while t > 1e-14 {
            let cand: Vec<Vec<f64>> = x
                .iter()
                .zip(&g)
                .map(|(b, gb)| project_simplex(&b.iter().zip(gb).map(|(v, d)| v + t * d).collect::<Vec<_>>()))
                .collect();
            let shift: f64 = cand.iter().zip(&x).flat_map(|(c, b)| c.iter().zip(b).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max);
            if shift < 1e-13 {
                return (x, val, true);
            }
            let lin: f64 = cand.iter().zip(&x).zip(&g).flat_map(|((c, b), gb)| c.iter().zip(b).zip(gb).map(|((u, v), d)| (u - v) * d)).sum();
            let cv = obj(&cand);
            if cv >= val + 1e-4 * lin && cv > val {
                x = cand;
                let gain = cv - val;
                val = cv;
                moved = true;
                step = (t * 2.0).min(16.0);
                if gain < 1e-15 {
                    return (x, val, true);
                }
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return (x, val, true);
        }
    }
    (x, val, false)
}

fn dirichlet<R: Rng>(q: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..q).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn lex_less(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            _ => {}
        }
    }
    false
}

/// Values within this distance count as ties for argmax selection.
const TIE_TOL: f64 = 1e-12;

fn multistart(obj: &Objective, shape: &[usize], opts: &CapacityOptions) -> (Vec<Vec<f64>>, f64, bool) {
    let runs: Vec<(Vec<Vec<f64>>, f64, bool)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start: Vec<Vec<f64>> = if r == 0 {
                shape.iter().map(|&q| vec![1.0 / q as f64; q]).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                shape.iter().map(|&q| dirichlet(q, &mut rng)).collect()
            };
            ascend(obj, start, opts)
        })
        .collect();
    let converged = runs.iter().any(|r| r.2);
    let mut best = runs[0].clone();
    for r in runs.into_iter().skip(1) {
        if r.1 > best.1 + TIE_TOL || ((r.1 - best.1).abs() <= TIE_TOL && lex_less(&r.0, &best.0)) {
            best = r;
        }
    }
    (best.0, best.1, converged)
}

/// Visits every point of the simplex grid with step `1/steps` in
/// lexicographic order of the probability vector.
fn grid_search(q: usize, steps: usize, obj: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut best = (vec![0.0; q], f64::NEG_INFINITY);
    let mut counts = vec![0usize; q];
    fn rec(pos: usize, left: usize, steps: usize, counts: &mut Vec<usize>, obj: &dyn Fn(&[f64]) -> f64, best: &mut (Vec<f64>, f64)) {
        let q = counts.len();
        if pos == q - 1 {
            counts[pos] = left;
            let p: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            let v = obj(&p);
            if v > best.1 + TIE_TOL {
                *best = (p, v);
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, steps, counts, obj, best);
        }
    }
    rec(0, steps, steps, &mut counts, obj, &mut best);
    best
}

/// Continuity bound on an entropy over `d` outcomes for total variation `t`.
fn entropy_modulus(t: f64, d: usize) -> f64 {
    if d <= 1 || t <= 0.0 {
        return 0.0;
    }
    let t = t.min(1.0 - 1.0 / d as f64);
    t * ((d - 1) as f64).ln() - xlnx(t) - xlnx(1.0 - t)
}

/// Typical input capacity `C_f(F)` over the chosen family of input laws.
pub fn capacity(nc: &NoisyComputation, family: Family, opts: &CapacityOptions) -> Result<CapacityReport> {
    match family {
        Family::Iid => capacity_iid(nc, opts),
        Family::Markov1 => capacity_markov(nc, opts),
    }
}

fn capacity_iid(nc: &NoisyComputation, opts: &CapacityOptions) -> Result<CapacityReport> {
    let q = nc.in_alphabet();
    let qy = nc.f.out_alphabet();
    let single = nc.single_letter();
    // Block-table computations are scored at their own length with i.i.d. symbols.
    let m = nc.natural_len().unwrap_or(1);
    let point = |p: &[f64]| -> f64 {
        if let Some((f, rows)) = single {
            let (hx, _, hc) = single_letter_terms(p, f, rows, qy);
            hx - hc
        } else {
            let s: f64 = p.iter().sum();
            let Ok(base) = Dist::new(p.iter().map(|v| v / s).collect()) else {
                return f64::NEG_INFINITY;
            };
            typical_input_rate_n(&Source::iid(base), nc, m).map_or(f64::NEG_INFINITY, |r| r.rate_nats)
        }
    };
    let obj = |x: &[Vec<f64>]| point(&x[0]);
    let (gx, gv, converged) = multistart(&obj, &[q], opts);
    let resolution = opts.grid_resolution.or_else(|| default_grid_resolution(q));
    let run_grid = opts.grid.unwrap_or(resolution.is_some()) && resolution.is_some();
    let grad_p = normalized(&gx).remove(0);
    let (value, argmax, method, grid_value, bracket_hi) = if run_grid {
        let res = resolution.unwrap();
        let steps = (1.0 / res).round() as usize;
        let (pg, vg) = grid_search(q, steps, &point);
        let (value, argmax) = if gv > vg + TIE_TOL { (gv, grad_p) } else { (vg, pg) };
        // the nearest grid point is within total variation q * res / 2
        let hi = single.map(|(_, rows)| {
            let qz = rows[0].len();
            let t = q as f64 * res / 2.0;
            vg + entropy_modulus(t, q) + entropy_modulus(t, qy * qz) + entropy_modulus(t, qz)
        });
        (value, argmax, Method::Both, Some(vg), hi)
    } else {
        (gv, grad_p, Method::Gradient, None, None)
    };
    Ok(CapacityReport {
        value_nats: value.max(0.0),
        argmax: Dist::new(argmax)?,
        transition: None,
        method,
        family: Family::Iid,
        bracket: (value.max(0.0), bracket_hi.map(|h| h.max(value))),
        grid_value,
        gradient_value: Some(gv),
        grid_resolution: if run_grid { resolution } else { None },
        converged,
        label: "iid-capacity (lower bound)".into(),
    })
}

fn capacity_markov(nc: &NoisyComputation, opts: &CapacityOptions) -> Result<CapacityReport> {
    let Some((f, rows)) = nc.single_letter() else {
        return Err(Error::Precondition("Markov family needs a per-symbol function and a memoryless device".into()));
    };
    let q = nc.in_alphabet();
    let qy = nc.f.out_alphabet();
    let n = opts.markov_n.max(2);
    let floor = opts.markov_floor;
    let chain = |x: &[Vec<f64>]| -> Option<Source> {
        let trans: Vec<Dist> = normalized(x)
            .into_iter()
            .map(|r| Dist::from_weights(r.into_iter().map(|v| (1.0 - q as f64 * floor) * v + floor).collect()))
            .collect::<Result<_>>()
            .ok()?;
        let probe = Source::markov(Dist::uniform(q), trans.clone()).ok()?;
        let pi = probe.stationary().ok()?;
        Source::markov(pi, trans).ok()
    };
    let obj = |x: &[Vec<f64>]| -> f64 {
        let Some(s) = chain(x) else { return f64::NEG_INFINITY };
        let Ok(hc) = hidden_cond_entropies(&s, f, rows, qy, n) else { return f64::NEG_INFINITY };
        s.entropy_rate().unwrap_or(f64::NEG_INFINITY) - (hc[n] - hc[n - 1])
    };
    let shape = vec![q; q];
    let (x, v, converged) = multistart(&obj, &shape, opts);
    let s = chain(&x).ok_or_else(|| Error::Domain("optimizer left the irreducible chains".into()))?;
    let Source::Markov { init, transition } = s else { unreachable!() };
    Ok(CapacityReport {
        value_nats: v.max(0.0),
        argmax: init,
        transition: Some(transition),
        method: Method::Gradient,
        family: Family::Markov1,
        bracket: (v.max(0.0), None),
        grid_value: None,
        gradient_value: Some(v),
        grid_resolution: None,
        converged,
        label: "markov1-capacity (lower bound)".into(),
    })
}

/// Classical capacity `max_P I(X; F(X))` of a memoryless kernel by
/// alternating maximization, stopped when the dual gap is below `1e-9`.
pub fn channel_capacity(device: &BlockKernel) -> Result<CapacityReport> {
    let Some(rows) = device.symbol_rows() else {
        return Err(Error::Precondition("channel capacity needs a memoryless kernel".into()));
    };
    let q = rows.len();
    let qz = device.out_alphabet();
    let mut p = vec![1.0 / q as f64; q];
    let divergences = |p: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; qz];
        for (a, &pa) in p.iter().enumerate() {
            for (c, &w) in rows[a].probs().iter().enumerate() {
                out[c] += pa * w;
            }
        }
        let d: Vec<f64> = rows
            .iter()
            .map(|r| r.probs().iter().zip(&out).filter(|(&w, _)| w > 0.0).map(|(&w, &o)| w * (w / o).ln()).sum())
            .collect();
        let i = p.iter().zip(&d).map(|(a, b)| a * b).sum();
        (d, i)
    };
    let mut converged = false;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..1_000_000 {
        let (d, i) = divergences(&p);
        lo = i;
        hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 {
            converged = true;
            break;
        }
        let w: Vec<f64> = p.iter().zip(&d).map(|(&pa, &da)| pa * da.exp()).collect();
        let s: f64 = w.iter().sum();
        p = w.into_iter().map(|v| v / s).collect();
    }
    Ok(CapacityReport {
        value_nats: lo.max(0.0),
        argmax: Dist::new(p)?,
        transition: None,
        method: Method::Alternating,
        family: Family::Iid,
        bracket: (lo.max(0.0), Some(hi.max(0.0))),
        grid_value: None,
        gradient_value: None,
        grid_resolution: None,
        converged,
        label: "channel capacity".into(),
    })
}

/// Capacity of a noisy input channel `nu` against the typical input capacity
/// of computing `f` after it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyInputComparison {
    pub channel: CapacityReport,
    pub computation: CapacityReport,
}

impl NoisyInputComparison {
    /// `C_nu <= C_f(nu f)` up to `tol` plus the grid resolution.
    pub fn holds(&self, tol: f64) -> bool {
        self.channel.value_nats <= self.computation.value_nats + tol + self.computation.grid_resolution.unwrap_or(0.0)
    }
}

pub fn compare_noisy_input(nu: &BlockKernel, f: &BlockFn, opts: &CapacityOptions) -> Result<NoisyInputComparison> {
    if f.symbol_table().is_none() {
        return Err(Error::Precondition("noisy-input comparison needs a per-symbol function".into()));
    }
    let channel = channel_capacity(nu)?;
    let device = BlockKernel::cascade(nu, &BlockKernel::deterministic(f))?;
    let computation = capacity(&product(f.clone(), device)?, Family::Iid, opts)?;
    Ok(NoisyInputComparison { channel, computation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::product;

    fn and_bsc(p: f64) -> NoisyComputation {
        let dev = BlockKernel::cascade(&BlockKernel::deterministic(&BlockFn::and()), &BlockKernel::bsc(p).unwrap()).unwrap();
        product(BlockFn::and(), dev).unwrap()
    }

    #[test]
    fn rate_examples() {
        let id = product(BlockFn::identity(2), BlockKernel::deterministic(&BlockFn::identity(2))).unwrap();
        let r = typical_input_rate_n(&Source::iid(Dist::uniform(2)), &id, 3).unwrap();
        assert!((r.rate_nats - 2f64.ln()).abs() < 1e-12);

        let noisy = product(BlockFn::and(), BlockKernel::totally_noisy(4, &Dist::new(vec![0.5, 0.5]).unwrap())).unwrap();
        let r = typical_input_rate_n(&Source::iid(Dist::uniform(4)), &noisy, 1).unwrap();
        let oracle = 4f64.ln() - (0.75 * (4.0f64 / 3.0).ln() + 0.25 * 4f64.ln());
        assert!((r.rate_nats - oracle).abs() < 1e-12);
        assert!((r.rate_nats - (r.entropy_x - r.cond_entropy_y_given_z)).abs() < 1e-12);

        // single-letter additivity, checked against the enumerated hookup
        let nc = and_bsc(0.1);
        let s = Source::iid(Dist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let r1 = typical_input_rate_n(&s, &nc, 1).unwrap().rate_nats;
        let h4 = hookup(&s, &nc, 4).unwrap();
        assert!((h4.rate() - r1).abs() < 1e-12);
    }

    #[test]
    fn markov_rate_matches_enumeration() {
        let s = Source::markov(
            Dist::new(vec![0.5, 0.5]).unwrap(),
            vec![Dist::new(vec![0.9, 0.1]).unwrap(), Dist::new(vec![0.3, 0.7]).unwrap()],
        )
        .unwrap();
        let nc = product(BlockFn::identity(2), BlockKernel::bsc(0.1).unwrap()).unwrap();
        for n in 1..=5 {
            let hidden = typical_input_rate_n(&s, &nc, n).unwrap();
            let h = hookup(&s, &nc, n).unwrap();
            assert!((hidden.rate_nats - h.rate()).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn limit_cases_of_the_rate() {
        let s = Source::iid(Dist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let perfect = product(BlockFn::and(), BlockKernel::deterministic(&BlockFn::and())).unwrap();
        let r = typical_input_rate(&s, &perfect).unwrap();
        assert!((r.rate_nats - entropy(&Dist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap())).abs() < 1e-12);
        let noisy = product(BlockFn::and(), BlockKernel::totally_noisy(4, &Dist::uniform(2))).unwrap();
        let r = typical_input_rate(&s, &noisy).unwrap();
        let h_y = entropy(&Dist::new(vec![0.6, 0.4]).unwrap());
        assert!((r.rate_nats - (r.entropy_x - h_y)).abs() < 1e-12);
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.8, -0.2]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.35).abs() < 1e-12 && (p[1] - 0.65).abs() < 1e-12 && p[2] == 0.0);
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn channel_capacity_examples() {
        let id = channel_capacity(&BlockKernel::deterministic(&BlockFn::identity(2))).unwrap();
        assert!((id.value_nats - 2f64.ln()).abs() < 1e-9);
        let bsc = channel_capacity(&BlockKernel::bsc(0.1).unwrap()).unwrap();
        let h2 = -(0.1f64 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
        assert!((bsc.value_nats - (2f64.ln() - h2)).abs() < 1e-9);
        assert!((bsc.value_nats - 0.368064).abs() < 1e-6);
        let flat = channel_capacity(&BlockKernel::totally_noisy(3, &Dist::uniform(2))).unwrap();
        assert!(flat.value_nats.abs() < 1e-12);
    }

    #[test]
    fn capacity_examples() {
        let opts = CapacityOptions { restarts: 4, ..Default::default() };
        let noisy = product(BlockFn::and(), BlockKernel::totally_noisy(4, &Dist::uniform(2))).unwrap();
        let c = capacity(&noisy, Family::Iid, &opts).unwrap();
        assert!((c.value_nats - 3f64.ln()).abs() <= 0.01, "{c:?}");
        assert!(c.argmax.p(3) < 0.02);

        let perfect = product(BlockFn::and(), BlockKernel::deterministic(&BlockFn::and())).unwrap();
        let c = capacity(&perfect, Family::Iid, &opts).unwrap();
        assert!((c.value_nats - 4f64.ln()).abs() < 1e-9);
        let (lo, hi) = c.bracket;
        assert!(lo <= c.value_nats && hi.unwrap() >= c.value_nats);

        let bij = product(BlockFn::identity(2), BlockKernel::bsc(0.1).unwrap()).unwrap();
        let c = capacity(&bij, Family::Iid, &opts).unwrap();
        assert!((c.value_nats - 0.368064).abs() < 1e-6);
        assert_eq!(c.label, "iid-capacity (lower bound)");
    }

    #[test]
    fn reference_instance_capacity() {
        let opts = CapacityOptions { restarts: 4, ..Default::default() };
        let c = capacity(&and_bsc(0.1), Family::Iid, &opts).unwrap();
        let g = c.gradient_value.unwrap();
        let grid = c.grid_value.unwrap();
        assert!(g >= grid - 0.01);
        assert!(c.value_nats <= 4f64.ln());
        // symmetric in the three inputs mapped to 0
        assert!((c.argmax.p(0) - c.argmax.p(2)).abs() < 0.02);
    }

    #[test]
    fn markov_family_at_least_iid_on_small_instance() {
        let nc = product(BlockFn::identity(2), BlockKernel::bsc(0.2).unwrap()).unwrap();
        let opts = CapacityOptions { restarts: 2, max_iter: 200, markov_n: 4, ..Default::default() };
        let m = capacity(&nc, Family::Markov1, &opts).unwrap();
        let i = channel_capacity(&BlockKernel::bsc(0.2).unwrap()).unwrap();
        assert!(m.value_nats >= i.value_nats - 1e-4, "{} vs {}", m.value_nats, i.value_nats);
        assert!(m.value_nats <= 2f64.ln());
    }

    #[test]
    fn noisy_input_examples() {
        let opts = CapacityOptions { restarts: 4, ..Default::default() };
        let nu = BlockKernel::bsc(0.1).unwrap();
        let cmp = compare_noisy_input(&nu, &BlockFn::identity(2), &opts).unwrap();
        assert!((cmp.channel.value_nats - cmp.computation.value_nats).abs() < 1e-6);
        let clean = BlockKernel::deterministic(&BlockFn::identity(4));
        let cmp = compare_noisy_input(&clean, &BlockFn::and(), &opts).unwrap();
        assert!((cmp.channel.value_nats - 4f64.ln()).abs() < 1e-9);
        assert!((cmp.computation.value_nats - 4f64.ln()).abs() < 1e-9);
    }
}
