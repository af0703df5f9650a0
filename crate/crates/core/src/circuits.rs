//! Boolean circuits whose gates flip their output independently with a fixed
//! probability, viewed as memoryless devices on `k`-bit symbols.
//!
//! Wires `0..inputs` carry the circuit inputs and wire `inputs + i` carries
//! the output of gate `i`. A `k`-bit symbol lists its bits with the first
//! input most significant, so the symbol of bits `(a, b)` is `2a + b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{product, BlockFn, BlockKernel, NoisyComputation};
use crate::error::{Error, Result};
use crate::prob::Dist;

/// Largest gate count for exact fault enumeration.
pub const EXACT_GATE_CAP: usize = 20;

/// Largest input width; symbols index tables of size `2^inputs`.
pub const MAX_CIRCUIT_INPUTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    And,
    Or,
    Not,
    Xor,
    Nand,
}

impl GateKind {
    fn eval(self, bits: impl Iterator<Item = bool>) -> bool {
        let mut bits = bits;
        match self {
            GateKind::And => bits.all(|b| b),
            GateKind::Or => bits.any(|b| b),
            GateKind::Not => !bits.next().unwrap_or(false),
            GateKind::Xor => bits.fold(false, |acc, b| acc ^ b),
            GateKind::Nand => !bits.all(|b| b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub inputs: usize,
    /// Wires read as circuit outputs, most significant first.
    pub outputs: Vec<usize>,
    pub gates: Vec<Gate>,
    pub gate_flip_prob: f64,
}

impl CircuitSpec {
    pub fn new(inputs: usize, gates: Vec<Gate>, outputs: Vec<usize>, gate_flip_prob: f64) -> Result<Self> {
        let c = CircuitSpec { inputs, outputs, gates, gate_flip_prob };
        c.validate()?;
        Ok(c)
    }

    /// `(a AND b) OR (c AND (a OR b))` on three inputs.
    pub fn majority3(gate_flip_prob: f64) -> Result<Self> {
        let g = |kind, inputs: &[usize]| Gate { kind, inputs: inputs.to_vec() };
        CircuitSpec::new(
            3,
            vec![g(GateKind::And, &[0, 1]), g(GateKind::Or, &[0, 1]), g(GateKind::And, &[2, 4]), g(GateKind::Or, &[3, 5])],
            vec![6],
            gate_flip_prob,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.inputs > MAX_CIRCUIT_INPUTS {
            return Err(Error::Domain(format!("circuit needs 1..={MAX_CIRCUIT_INPUTS} inputs, got {}", self.inputs)));
        }
        if !(0.0..0.5).contains(&self.gate_flip_prob) {
            return Err(Error::Domain(format!("gate flip probability {} outside [0, 1/2)", self.gate_flip_prob)));
        }
        for (i, gate) in self.gates.iter().enumerate() {
            let arity_ok = match gate.kind {
                GateKind::Not => gate.inputs.len() == 1,
                _ => gate.inputs.len() >= 2,
            };
            if !arity_ok {
                return Err(Error::Domain(format!("gate {i} ({:?}) has {} inputs", gate.kind, gate.inputs.len())));
            }
            if let Some(&w) = gate.inputs.iter().find(|&&w| w >= self.inputs + i) {
                return Err(Error::Domain(format!("gate {i} reads wire {w}, which is not driven before it")));
            }
        }
        if self.outputs.is_empty() || self.outputs.len() > MAX_CIRCUIT_INPUTS {
            return Err(Error::Domain(format!("circuit needs 1..={MAX_CIRCUIT_INPUTS} outputs")));
        }
        if let Some(&w) = self.outputs.iter().find(|&&w| w >= self.inputs + self.gates.len()) {
            return Err(Error::Domain(format!("output wire {w} does not exist")));
        }
        Ok(())
    }

    pub fn in_alphabet(&self) -> usize {
        1 << self.inputs
    }

    pub fn out_alphabet(&self) -> usize {
        1 << self.outputs.len()
    }

    /// Output symbol for input symbol `x` when gate `i` flips iff bit `i` of
    /// `faults` is set.
    pub fn eval(&self, x: usize, faults: u64) -> usize {
        let mut wires = Vec::with_capacity(self.inputs + self.gates.len());
        wires.extend((0..self.inputs).map(|i| (x >> (self.inputs - 1 - i)) & 1 == 1));
        for (i, gate) in self.gates.iter().enumerate() {
            let v = gate.kind.eval(gate.inputs.iter().map(|&w| wires[w]));
            wires.push(v ^ ((faults >> i) & 1 == 1));
        }
        self.outputs.iter().fold(0, |acc, &w| (acc << 1) | wires[w] as usize)
    }

    pub fn truth_table(&self) -> BlockFn {
        let table = (0..self.in_alphabet()).map(|x| self.eval(x, 0)).collect();
        BlockFn::per_symbol(self.in_alphabet(), self.out_alphabet(), table).expect("outputs fit the output alphabet")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    Exact,
    MonteCarlo,
    /// Exact when the gate count allows it, Monte Carlo otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelOptions {
    pub mode: KernelMode,
    /// Requested standard error of every Monte Carlo entry.
    pub std_err: f64,
    pub seed: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { mode: KernelMode::Exact, std_err: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CircuitKernel {
    pub kernel: BlockKernel,
    pub exact: bool,
    /// Fault patterns drawn per input symbol; 0 in exact mode.
    pub samples_per_row: u64,
    /// Largest estimated standard error over all entries.
    pub max_std_err: f64,
    /// Largest deviation of a row sum from 1 before renormalization.
    pub max_drift: f64,
}

/// Memoryless device induced by the circuit on `k`-bit symbols.
pub fn circuit_to_kernel(c: &CircuitSpec, opts: &KernelOptions) -> Result<CircuitKernel> {
    c.validate()?;
    let exact = match opts.mode {
        KernelMode::Exact if c.gates.len() > EXACT_GATE_CAP => {
            return Err(Error::EnumerationLimit { requested: 1u128 << c.gates.len(), cap: 1 << EXACT_GATE_CAP })
        }
        KernelMode::Exact => true,
        KernelMode::MonteCarlo => false,
        KernelMode::Auto => c.gates.len() <= EXACT_GATE_CAP,
    };
    if exact {
        exact_kernel(c)
    } else {
        monte_carlo_kernel(c, opts)
    }
}

fn exact_kernel(c: &CircuitSpec) -> Result<CircuitKernel> {
    let g = c.gates.len();
    let xi = c.gate_flip_prob;
    let qz = c.out_alphabet();
    let rows: Vec<Vec<f64>> = (0..c.in_alphabet())
        .into_par_iter()
        .map(|x| {
            let mut row = vec![0.0; qz];
            for faults in 0..(1u64 << g) {
                let k = faults.count_ones() as i32;
                let p = xi.powi(k) * (1.0 - xi).powi(g as i32 - k);
                row[c.eval(x, faults)] += p;
            }
            row
        })
        .collect();
    let max_drift = rows.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    Ok(CircuitKernel { kernel: BlockKernel::memoryless(rows)?, exact: true, samples_per_row: 0, max_std_err: 0.0, max_drift })
}

fn monte_carlo_kernel(c: &CircuitSpec, opts: &KernelOptions) -> Result<CircuitKernel> {
    if !(opts.std_err > 0.0 && opts.std_err < 0.5) {
        return Err(Error::Domain(format!("standard error target {} outside (0, 1/2)", opts.std_err)));
    }
    // a Bernoulli entry has variance at most 1/4
    let samples = (0.25 / (opts.std_err * opts.std_err)).ceil() as u64;
    let g = c.gates.len();
    let xi = c.gate_flip_prob;
    let qz = c.out_alphabet();
    let rows: Vec<Vec<f64>> = (0..c.in_alphabet())
        .into_par_iter()
        .map(|x| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(x as u64);
            let mut counts = vec![0u64; qz];
            for _ in 0..samples {
                let mut faults = 0u64;
                for i in 0..g.min(64) {
                    if rng.gen::<f64>() < xi {
                        faults |= 1 << i;
                    }
                }
                counts[c.eval(x, faults)] += 1;
            }
            counts.into_iter().map(|n| n as f64 / samples as f64).collect()
        })
        .collect();
    let max_std_err = rows.iter().flatten().map(|&p| (p * (1.0 - p) / samples as f64).sqrt()).fold(0.0, f64::max);
    let max_drift = rows.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    Ok(CircuitKernel { kernel: BlockKernel::memoryless(rows)?, exact: false, samples_per_row: samples, max_std_err, max_drift })
}

/// Noisy computation of the circuit's truth table by the faulty circuit.
pub fn noisy_circuit(c: &CircuitSpec, opts: &KernelOptions) -> Result<(NoisyComputation, CircuitKernel)> {
    let ck = circuit_to_kernel(c, opts)?;
    let nc = product(c.truth_table(), ck.kernel.clone())?;
    Ok((nc, ck))
}

/// Intended function `f` computed by a device that deterministically
/// evaluates the function `g` that was actually built.
pub fn design_error_channel(f_intended: &BlockFn, g_built: &BlockFn) -> Result<NoisyComputation> {
    if f_intended.in_alphabet() != g_built.in_alphabet() || f_intended.out_alphabet() != g_built.out_alphabet() {
        return Err(Error::AlphabetMismatch(format!(
            "intended {}->{} vs built {}->{}",
            f_intended.in_alphabet(),
            f_intended.out_alphabet(),
            g_built.in_alphabet(),
            g_built.out_alphabet()
        )));
    }
    product(f_intended.clone(), BlockKernel::deterministic(g_built))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub k: usize,
    pub n: usize,
    /// Circuit size factor `n / k`; encoder and decoder sizes are excluded.
    pub lambda: f64,
    /// `(H / C, H / (C - epsilon)]`.
    pub bounds: (f64, f64),
}

/// Default largest `k` searched by [`blowup`].
pub const DEFAULT_BLOWUP_MAX_K: usize = 12;

/// Smallest ratio `n / k` with `k <= max_k` in `(H / C, H / (C - epsilon)]`.
pub fn blowup(capacity_nats: f64, source_entropy_nats: f64, epsilon: f64, max_k: usize) -> Result<BlowupReport> {
    if !(epsilon > 0.0) || !(capacity_nats > epsilon) {
        return Err(Error::Domain(format!("bracket undefined for C = {capacity_nats}, epsilon = {epsilon}")));
    }
    if !(source_entropy_nats > 0.0) || !source_entropy_nats.is_finite() || max_k == 0 {
        return Err(Error::Domain("source entropy must be positive and max_k nonzero".into()));
    }
    let lo = source_entropy_nats / capacity_nats;
    let hi = source_entropy_nats / (capacity_nats - epsilon);
    let mut best: Option<(usize, usize)> = None;
    for k in 1..=max_k {
        // smallest n with n / k > lo
        let n = (lo * k as f64).floor() as usize + 1;
        if n as f64 / k as f64 > hi {
            continue;
        }
        // strictly smaller values only, so equal ratios keep the smallest k
        if best.map_or(true, |(bn, bk)| n * bk < bn * k) {
            best = Some((n, k));
        }
    }
    let (n, k) = best.ok_or_else(|| Error::Domain(format!("no ratio with k <= {max_k} in ({lo}, {hi}]")))?;
    Ok(BlowupReport { k, n, lambda: n as f64 / k as f64, bounds: (lo, hi) })
}

/// Rows of the kernel as distributions, for reports.
pub fn kernel_rows(k: &CircuitKernel) -> Vec<Dist> {
    k.kernel.symbol_rows().map(|r| r.to_vec()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity, CapacityOptions, Family};
    use crate::feinstein::{greedy_construct, verify, FeinsteinOptions};
    use crate::processes::Source;

    fn single(kind: GateKind, xi: f64) -> CircuitSpec {
        CircuitSpec::new(2, vec![Gate { kind, inputs: vec![0, 1] }], vec![2], xi).unwrap()
    }

    #[test]
    fn noiseless_circuit_is_its_truth_table() {
        let c = CircuitSpec::majority3(0.0).unwrap();
        let ck = circuit_to_kernel(&c, &KernelOptions::default()).unwrap();
        let det = BlockKernel::deterministic(&c.truth_table());
        let (a, b) = (kernel_rows(&ck), det.symbol_rows().unwrap());
        assert_eq!(a.len(), 8);
        for (x, (r, s)) in a.iter().zip(b).enumerate() {
            assert_eq!(r.probs(), s.probs());
            let ones = x.count_ones();
            assert_eq!(r.p(1), if ones >= 2 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn single_gate_fault() {
        let ck = circuit_to_kernel(&single(GateKind::And, 0.1), &KernelOptions::default()).unwrap();
        let rows = kernel_rows(&ck);
        assert!((rows[3].p(1) - 0.9).abs() < 1e-15);
        assert!((rows[0].p(1) - 0.1).abs() < 1e-15);
        let nand = kernel_rows(&circuit_to_kernel(&single(GateKind::Nand, 0.0), &KernelOptions::default()).unwrap());
        assert_eq!(nand.iter().map(|r| r.p(1)).collect::<Vec<_>>(), vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn majority_exact_matches_monte_carlo() {
        let c = CircuitSpec::majority3(0.05).unwrap();
        let exact = circuit_to_kernel(&c, &KernelOptions::default()).unwrap();
        assert!(exact.max_drift < 1e-12);
        let opts = KernelOptions { mode: KernelMode::MonteCarlo, std_err: 2e-3, seed: 7 };
        let mc = circuit_to_kernel(&c, &opts).unwrap();
        assert!(!mc.exact && mc.samples_per_row == 62_500);
        for (e, m) in kernel_rows(&exact).iter().zip(kernel_rows(&mc)) {
            let p = e.p(1);
            let se = (p * (1.0 - p) / mc.samples_per_row as f64).sqrt();
            assert!((m.p(1) - p).abs() <= 3.0 * se + 1e-12, "{} vs {}", m.p(1), p);
        }
        // exhaustive oracle for one row: output 1 on input 110
        let mut p1 = 0.0;
        for faults in 0..16u64 {
            let k = faults.count_ones() as i32;
            let ab = true ^ (faults & 1 == 1);
            let a_or_b = true ^ (faults & 2 == 2);
            let c_and = (false && a_or_b) ^ (faults & 4 == 4);
            let out = (ab || c_and) ^ (faults & 8 == 8);
            if out {
                p1 += 0.05f64.powi(k) * 0.95f64.powi(4 - k);
            }
        }
        assert!((kernel_rows(&exact)[6].p(1) - p1).abs() < 1e-15);
    }

    #[test]
    fn exact_cap_and_validation() {
        let gates = (0..21).map(|i| Gate { kind: GateKind::Not, inputs: vec![i] }).collect();
        let c = CircuitSpec::new(1, gates, vec![21], 0.1).unwrap();
        assert!(matches!(circuit_to_kernel(&c, &KernelOptions::default()), Err(Error::EnumerationLimit { .. })));
        let auto = circuit_to_kernel(&c, &KernelOptions { mode: KernelMode::Auto, std_err: 0.01, seed: 1 }).unwrap();
        assert!(!auto.exact);
        assert!(CircuitSpec::new(2, vec![Gate { kind: GateKind::And, inputs: vec![0, 2] }], vec![2], 0.1).is_err());
        assert!(CircuitSpec::new(2, vec![Gate { kind: GateKind::Not, inputs: vec![0, 1] }], vec![2], 0.1).is_err());
        assert!(CircuitSpec::new(2, vec![Gate { kind: GateKind::And, inputs: vec![0, 1] }], vec![3], 0.1).is_err());
        assert!(CircuitSpec::new(2, vec![Gate { kind: GateKind::And, inputs: vec![0, 1] }], vec![2], 0.5).is_err());
    }

    #[test]
    fn design_error_limits() {
        let opts = CapacityOptions::default();
        let same = design_error_channel(&BlockFn::xor(), &BlockFn::xor()).unwrap();
        assert!((capacity(&same, Family::Iid, &opts).unwrap().value_nats - 4f64.ln()).abs() < 1e-6);
        let stuck = design_error_channel(&BlockFn::xor(), &BlockFn::constant(4, 2, 0).unwrap()).unwrap();
        let rep = capacity(&stuck, Family::Iid, &opts).unwrap();
        // with a constant device only H(X | f(X)) survives, at most ln 2
        assert!((rep.value_nats - 2f64.ln()).abs() < 1e-6);
        assert!(rep.grid_value.unwrap() <= rep.value_nats + 1e-9);
        assert!(design_error_channel(&BlockFn::xor(), &BlockFn::identity(4)).is_err());
    }

    #[test]
    fn design_error_pipeline() {
        let nc = design_error_channel(&BlockFn::xor(), &BlockFn::or()).unwrap();
        let rep = capacity(&nc, Family::Iid, &CapacityOptions::default()).unwrap();
        assert!(rep.value_nats > 2f64.ln() && rep.value_nats < 4f64.ln());
        let h = crate::channels::hookup_auto(&Source::iid(rep.argmax.clone()), &nc, 8).unwrap();
        let code = greedy_construct(&h, 0.1, 0.1, &FeinsteinOptions::default()).unwrap();
        assert!(code.size() >= 1);
        assert!(verify(&code, &h).unwrap().ok());
    }

    #[test]
    fn blowup_examples() {
        let r = blowup(0.368064, 2f64.ln(), 0.05, DEFAULT_BLOWUP_MAX_K).unwrap();
        assert_eq!((r.n, r.k), (17, 9));
        assert!((r.bounds.0 - 1.8832).abs() < 1e-4 && (r.bounds.1 - 2.1792).abs() < 1e-3);
        let at = blowup(1.0, 1.0, 0.1, DEFAULT_BLOWUP_MAX_K).unwrap();
        assert_eq!(at.bounds.0, 1.0);
        assert!(at.lambda > 1.0 && at.lambda <= at.bounds.1);
        let narrow = blowup(0.5, 0.6, 1e-3, 1000).unwrap();
        let wide = blowup(0.5, 0.6, 1e-1, 1000).unwrap();
        assert!(narrow.bounds.1 - narrow.bounds.0 < 0.01 * (wide.bounds.1 - wide.bounds.0));
        assert!(narrow.lambda > 1.2 && narrow.lambda <= narrow.bounds.1);
        assert!(blowup(0.1, 1.0, 0.1, 12).is_err());
    }

    #[test]
    fn majority_capacity_degrades_with_noise() {
        let opts = CapacityOptions { restarts: 6, ..Default::default() };
        let mut last = f64::INFINITY;
        for i in 0..=10 {
            let xi = 0.02 * i as f64;
            let (nc, _) = noisy_circuit(&CircuitSpec::majority3(xi).unwrap(), &KernelOptions::default()).unwrap();
            let c = capacity(&nc, Family::Iid, &opts).unwrap().value_nats;
            if i == 0 {
                assert!((c - 8f64.ln()).abs() < 1e-6);
            }
            assert!(c <= last + 1e-7, "xi {xi}: {c} > {last}");
            last = c;
        }
    }
}
