//! JSON experiment definitions and their translation into library objects.

use noisy_computation::capacity::{Family, Method};
use noisy_computation::channels::{product, BlockFn, BlockKernel, NoisyComputation};
use noisy_computation::circuits::{circuit_to_kernel, CircuitKernel, CircuitSpec, KernelMode, KernelOptions};
use noisy_computation::prob::Dist;
use noisy_computation::processes::Source;
use noisy_computation::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceDef,
    #[serde(default)]
    pub seed: u64,
    pub capacity: Option<CapacitySection>,
    pub feinstein: Option<FeinsteinSection>,
    pub simulate: Option<SimulateSection>,
    pub sweep: Option<SweepSection>,
    pub circuit: Option<CircuitSection>,
}

/// Either a function `f` with a device, or a noisy circuit computing its own
/// truth table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDef {
    pub f: Option<FnDef>,
    pub device: Option<KernelDef>,
    pub circuit: Option<CircuitDef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitDef {
    pub netlist: CircuitSpec,
    #[serde(default = "default_mode")]
    pub mode: KernelMode,
    #[serde(default = "default_std_err")]
    pub std_err: f64,
}

fn default_mode() -> KernelMode {
    KernelMode::Exact
}

fn default_std_err() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FnDef {
    Identity { alphabet: usize },
    And,
    Or,
    Xor,
    Nand,
    Constant { in_alphabet: usize, out_alphabet: usize, value: usize },
    Table { in_alphabet: usize, out_alphabet: usize, table: Vec<usize> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelDef {
    Bsc { p: f64 },
    Matrix { rows: Vec<Vec<f64>> },
    TotallyNoisy { in_alphabet: usize, out_law: Vec<f64> },
    Deterministic { f: FnDef },
    Cascade { stages: Vec<KernelDef> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceDef {
    Iid { probs: Vec<f64> },
    Markov { init: Vec<f64>, transition: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    #[serde(default = "default_family")]
    pub family: Family,
    /// `grid`, `gradient`, `both` or `alternating` (classical capacity of the device).
    pub method: Option<Method>,
    pub restarts: Option<usize>,
    pub grid_resolution: Option<f64>,
    pub markov_n: Option<usize>,
}

fn default_family() -> Family {
    Family::Iid
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeinsteinSection {
    pub n: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub typical_eps: Option<f64>,
    /// Input source; defaults to the capacity-achieving i.i.d. law.
    pub source: Option<SourceDef>,
    #[serde(default)]
    pub maximality: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub k: usize,
    pub g: FnDef,
    /// Law of the source whose `g`-values are computed.
    pub source: SourceDef,
    /// Input law of the code; defaults to the capacity-achieving i.i.d. law.
    pub input: Option<SourceDef>,
    pub code_epsilon: f64,
    pub lambda: f64,
    #[serde(default = "default_typical_eps")]
    pub typical_eps: f64,
    pub trials: u64,
    #[serde(default)]
    pub partial: bool,
}

fn default_typical_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub g: FnDef,
    /// Rates as fractions of the measured i.i.d. capacity.
    pub rate_fractions: Vec<f64>,
    pub ns: Vec<usize>,
    pub trials: u64,
    pub epsilon_grid: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub typical_eps: Option<f64>,
    pub ratios: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub source_entropy_nats: f64,
    pub epsilon: f64,
    #[serde(default = "default_max_k")]
    pub max_k: usize,
}

fn default_max_k() -> usize {
    noisy_computation::circuits::DEFAULT_BLOWUP_MAX_K
}

/// Parses a config, reporting the JSON path of the first offending field.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(ok: bool, path: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::schema(path, msg))
    }
}

fn unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        let i = &self.instance;
        check(
            (i.f.is_some() && i.device.is_some() && i.circuit.is_none()) || (i.f.is_none() && i.device.is_none() && i.circuit.is_some()),
            "instance",
            "give either `f` and `device`, or `circuit`",
        )?;
        if let Some(c) = &self.capacity {
            check(c.restarts.map_or(true, |r| r > 0), "capacity.restarts", "must be positive")?;
            check(c.grid_resolution.map_or(true, unit), "capacity.grid_resolution", "must lie in (0, 1)")?;
        }
        if let Some(s) = &self.feinstein {
            check(s.n > 0, "feinstein.n", "must be positive")?;
            check(unit(s.epsilon), "feinstein.epsilon", "must lie in (0, 1)")?;
            check(unit(s.lambda), "feinstein.lambda", "must lie in (0, 1)")?;
        }
        if let Some(s) = &self.simulate {
            check(s.trials > 0, "simulate.trials", "must be positive")?;
            check(s.n > 0, "simulate.n", "must be positive")?;
            check(s.k > 0, "simulate.k", "must be positive")?;
            check(unit(s.code_epsilon), "simulate.code_epsilon", "must lie in (0, 1)")?;
            check(unit(s.lambda), "simulate.lambda", "must lie in (0, 1)")?;
            check(s.typical_eps > 0.0, "simulate.typical_eps", "must be positive")?;
        }
        if let Some(s) = &self.sweep {
            check(s.trials > 0, "sweep.trials", "must be positive")?;
            check(!s.ns.is_empty() && s.ns.iter().all(|&n| n > 0), "sweep.ns", "must list positive block lengths")?;
            check(!s.rate_fractions.is_empty() && s.rate_fractions.iter().all(|r| *r >= 0.0), "sweep.rate_fractions", "must list nonnegative fractions")?;
            check(s.epsilon_grid.as_ref().map_or(true, |g| !g.is_empty() && g.iter().copied().all(unit)), "sweep.epsilon_grid", "must list values in (0, 1)")?;
            check(s.ratios.as_ref().map_or(true, |r| !r.is_empty() && r.iter().all(|&(k, n)| k > 0 && n > 0)), "sweep.ratios", "must list positive (k, n) pairs")?;
        }
        if let Some(s) = &self.circuit {
            check(i.circuit.is_some(), "circuit", "needs `instance.circuit`")?;
            check(s.source_entropy_nats > 0.0, "circuit.source_entropy_nats", "must be positive")?;
            check(s.epsilon > 0.0, "circuit.epsilon", "must be positive")?;
            check(s.max_k > 0, "circuit.max_k", "must be positive")?;
        }
        Ok(())
    }
}

fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Schema { .. } => e,
        other => Error::schema(path, other.to_string()),
    })
}

impl FnDef {
    pub fn build(&self, path: &str) -> Result<BlockFn> {
        match self {
            FnDef::Identity { alphabet } => {
                check(*alphabet > 0, path, "identity needs a positive alphabet")?;
                Ok(BlockFn::identity(*alphabet))
            }
            FnDef::And => Ok(BlockFn::and()),
            FnDef::Or => Ok(BlockFn::or()),
            FnDef::Xor => Ok(BlockFn::xor()),
            FnDef::Nand => Ok(BlockFn::bit_pair(|a, b| !(a && b))),
            FnDef::Constant { in_alphabet, out_alphabet, value } => at(path, BlockFn::constant(*in_alphabet, *out_alphabet, *value)),
            FnDef::Table { in_alphabet, out_alphabet, table } => {
                check(table.len() == *in_alphabet, &format!("{path}.table"), "needs one entry per input symbol")?;
                at(path, BlockFn::per_symbol(*in_alphabet, *out_alphabet, table.clone()))
            }
        }
    }
}

impl KernelDef {
    pub fn build(&self, path: &str) -> Result<BlockKernel> {
        match self {
            KernelDef::Bsc { p } => at(path, BlockKernel::bsc(*p)),
            KernelDef::Matrix { rows } => at(path, BlockKernel::memoryless(rows.clone())),
            KernelDef::TotallyNoisy { in_alphabet, out_law } => {
                let law = at(&format!("{path}.out_law"), Dist::new(out_law.clone()))?;
                Ok(BlockKernel::totally_noisy(*in_alphabet, &law))
            }
            KernelDef::Deterministic { f } => Ok(BlockKernel::deterministic(&f.build(&format!("{path}.f"))?)),
            KernelDef::Cascade { stages } => {
                let mut it = stages.iter().enumerate();
                let Some((_, first)) = it.next() else {
                    return Err(Error::schema(format!("{path}.stages"), "needs at least one stage"));
                };
                let mut k = first.build(&format!("{path}.stages[0]"))?;
                for (i, stage) in it {
                    let p = format!("{path}.stages[{i}]");
                    k = at(&p, BlockKernel::cascade(&k, &stage.build(&p)?))?;
                }
                Ok(k)
            }
        }
    }
}

impl SourceDef {
    pub fn build(&self, path: &str) -> Result<Source> {
        match self {
            SourceDef::Iid { probs } => Ok(Source::iid(at(&format!("{path}.probs"), Dist::new(probs.clone()))?)),
            SourceDef::Markov { init, transition } => {
                let init = at(&format!("{path}.init"), Dist::new(init.clone()))?;
                let rows = transition
                    .iter()
                    .enumerate()
                    .map(|(i, r)| at(&format!("{path}.transition[{i}]"), Dist::new(r.clone())))
                    .collect::<Result<Vec<_>>>()?;
                at(path, Source::markov(init, rows))
            }
        }
    }
}

/// The noisy computation of the instance, plus the circuit kernel details
/// when the device is a circuit.
pub fn build_instance(cfg: &ExperimentConfig) -> Result<(NoisyComputation, Option<CircuitKernel>)> {
    let i = &cfg.instance;
    if let Some(c) = &i.circuit {
        at("instance.circuit.netlist", c.netlist.validate())?;
        let opts = KernelOptions { mode: c.mode, std_err: c.std_err, seed: cfg.seed };
        let ck = circuit_to_kernel(&c.netlist, &opts).map_err(|e| match e {
            Error::EnumerationLimit { .. } => e,
            other => Error::schema("instance.circuit", other.to_string()),
        })?;
        let nc = at("instance.circuit", product(c.netlist.truth_table(), ck.kernel.clone()))?;
        return Ok((nc, Some(ck)));
    }
    let f = i.f.as_ref().expect("validated").build("instance.f")?;
    let device = i.device.as_ref().expect("validated").build("instance.device")?;
    Ok((at("instance", product(f, device))?, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"instance": {"f": {"kind": "and"}, "device": {"kind": "cascade", "stages": [
        {"kind": "deterministic", "f": {"kind": "and"}}, {"kind": "bsc", "p": 0.1}]}}"#;

    #[test]
    fn parses_reference_instance() {
        let cfg = parse(&format!("{BASE}}}")).unwrap();
        let (nc, ck) = build_instance(&cfg).unwrap();
        assert!(ck.is_none());
        assert_eq!(nc.in_alphabet(), 4);
        let rows = nc.device.symbol_rows().unwrap();
        assert!((rows[3].p(1) - 0.9).abs() < 1e-15 && (rows[0].p(1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let bad = format!(r#"{BASE}, "simulate": {{"n": 6, "k": 3, "g": {{"kind": "and"}}, "source": {{"kind": "iid", "probs": [0.25, 0.25, 0.25, 0.25]}}, "code_epsilon": 0.1, "lambda": 0.1, "trials": 0}}}}"#);
        match parse(&bad) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "simulate.trials"),
            other => panic!("{other:?}"),
        }
        let typo = format!(r#"{BASE}, "feinstein": {{"n": 6, "epsilon": 0.1, "lamda": 0.1}}}}"#);
        match parse(&typo) {
            Err(Error::Schema { path, msg }) => assert!(path.starts_with("feinstein") && msg.contains("lamda"), "{path}: {msg}"),
            other => panic!("{other:?}"),
        }
        let bad_p = r#"{"instance": {"f": {"kind": "and"}, "device": {"kind": "bsc", "p": 1.5}}}"#;
        let cfg = parse(bad_p).unwrap();
        match build_instance(&cfg) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "instance.device"),
            other => panic!("{other:?}"),
        }
    }
}
