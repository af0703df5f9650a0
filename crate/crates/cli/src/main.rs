mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use noisy_computation::capacity::{capacity, channel_capacity, CapacityOptions, CapacityReport, Family, Method};
use noisy_computation::channels::{hookup_auto, NoisyComputation};
use noisy_computation::circuits::{blowup, kernel_rows};
use noisy_computation::feinstein::{greedy_construct, maximality_check, verify, FeinsteinOptions};
use noisy_computation::processes::Source;
use noisy_computation::reliable::{build_codec, is_compatible, rate_sweep, simulate, CodecOptions, SweepInstance, SweepOptions};
use noisy_computation::{Error, Result};
use serde_json::{json, Value};

use config::ExperimentConfig;
use output::{fmt9, sha256_hex, to_json, Csv};

/// Largest source block space for the exhaustive compatibility report.
const COMPAT_REPORT_CAP: u128 = 1 << 16;

#[derive(Parser)]
#[command(name = "ncomp", version, about = "Capacity, codes and error experiments for noisy computations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment definition (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every artifact of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Add columns and fields in bits next to the nats values.
    #[arg(long, global = true)]
    bits: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Typical input capacity of the instance.
    Capacity,
    /// Greedy Feinstein code with its verification report.
    Feinstein,
    /// Monte Carlo error of one encoder/decoder pair.
    Simulate,
    /// Error over a grid of rates and block lengths.
    Sweep,
    /// Noisy circuit kernel, its capacity and the blow-up factor.
    Circuit,
}

struct Run {
    cfg: ExperimentConfig,
    hash: String,
    seed: u64,
    bits: bool,
}

/// Named output files; the first one is also printed.
type Artifacts = Vec<(String, String)>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Schema { .. } => 2,
                Error::EnumerationLimit { .. } => {
                    eprintln!(
                        "hint: lower n, use a per-symbol f with a memoryless device so blocks factor, or set the circuit mode to monte_carlo"
                    );
                    3
                }
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| Error::schema("--config", "a config file is required"))?;
    let bytes = std::fs::read(path).map_err(|e| Error::Precondition(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::schema("<root>", "config is not UTF-8"))?;
    let cfg = config::parse(&text)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::schema("--threads", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| Error::Precondition(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(cfg.seed);
    let run = Run { cfg, hash: sha256_hex(&bytes), seed, bits: cli.bits };
    let artifacts = match cli.command {
        Command::Capacity => run.capacity()?,
        Command::Feinstein => run.feinstein()?,
        Command::Simulate => run.simulate()?,
        Command::Sweep => run.sweep()?,
        Command::Circuit => run.circuit()?,
    };
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Precondition(format!("cannot create {}: {e}", dir.display())))?;
        for (name, body) in &artifacts {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::Precondition(format!("cannot write {}: {e}", p.display())))?;
        }
    }
    print!("{}", artifacts[0].1);
    Ok(())
}

fn need<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section.as_ref().ok_or_else(|| Error::schema(name, "section is required by this command"))
}

fn to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

impl Run {
    fn header(&self, command: &str) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("command".into(), json!(command));
        m.insert("config_sha256".into(), json!(self.hash));
        m.insert("seed".into(), json!(self.seed));
        m
    }

    fn capacity_options(&self) -> CapacityOptions {
        let mut o = CapacityOptions { seed: self.seed, ..Default::default() };
        if let Some(c) = &self.cfg.capacity {
            if let Some(r) = c.restarts {
                o.restarts = r;
            }
            o.grid_resolution = c.grid_resolution;
            if let Some(m) = c.markov_n {
                o.markov_n = m;
            }
            o.grid = match c.method {
                Some(Method::Gradient) => Some(false),
                Some(Method::Grid | Method::Both) => Some(true),
                _ => None,
            };
        }
        o
    }

    fn instance_capacity(&self, nc: &NoisyComputation) -> Result<CapacityReport> {
        let family = self.cfg.capacity.as_ref().map_or(Family::Iid, |c| c.family);
        match self.cfg.capacity.as_ref().and_then(|c| c.method) {
            Some(Method::Alternating) => channel_capacity(&nc.device),
            _ => capacity(nc, family, &self.capacity_options()),
        }
    }

    /// Capacity-achieving i.i.d. law, the default input of codes.
    fn default_input(&self, nc: &NoisyComputation) -> Result<Source> {
        Ok(Source::iid(capacity(nc, Family::Iid, &self.capacity_options())?.argmax))
    }

    fn capacity(&self) -> Result<Artifacts> {
        let (nc, _) = config::build_instance(&self.cfg)?;
        let report = self.instance_capacity(&nc)?;
        let mut m = self.header("capacity");
        if self.bits {
            m.insert("value_bits".into(), json!(to_bits(report.value_nats)));
        }
        m.insert("report".into(), json!(report));
        Ok(vec![("capacity.json".into(), to_json(Value::Object(m)))])
    }

    fn feinstein(&self) -> Result<Artifacts> {
        let s = need(&self.cfg.feinstein, "feinstein")?;
        let (nc, _) = config::build_instance(&self.cfg)?;
        let source = match &s.source {
            Some(d) => d.build("feinstein.source")?,
            None => self.default_input(&nc)?,
        };
        let h = hookup_auto(&source, &nc, s.n)?;
        let mut opts = FeinsteinOptions::default();
        if let Some(t) = s.typical_eps {
            opts.typical_eps = t;
        }
        let code = greedy_construct(&h, s.epsilon, s.lambda, &opts)?;
        let report = verify(&code, &h)?;
        let mut m = self.header("feinstein");
        m.insert("n".into(), json!(s.n));
        m.insert("epsilon".into(), json!(s.epsilon));
        m.insert("lambda".into(), json!(s.lambda));
        m.insert("size".into(), json!(code.size()));
        m.insert("trivial".into(), json!(code.trivial));
        let entries: Vec<Value> = code
            .entries
            .iter()
            .map(|e| json!({"y": h.y_space.decode(e.y), "a_size": e.a.len(), "gamma_size": e.gamma.len()}))
            .collect();
        m.insert("entries".into(), json!(entries));
        m.insert("verify".into(), json!(report));
        if s.maximality {
            m.insert("maximality".into(), json!(maximality_check(&code, &h)?));
        }
        let full = serde_json::to_value(&code).map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(vec![("feinstein.json".into(), to_json(Value::Object(m))), ("feinstein_code.json".into(), to_json(full))])
    }

    fn simulate(&self) -> Result<Artifacts> {
        let s = need(&self.cfg.simulate, "simulate")?;
        let (nc, _) = config::build_instance(&self.cfg)?;
        let input = match &s.input {
            Some(d) => d.build("simulate.input")?,
            None => self.default_input(&nc)?,
        };
        let g = s.g.build("simulate.g")?;
        let source = s.source.build("simulate.source")?;
        let h = hookup_auto(&input, &nc, s.n)?;
        let code = Arc::new(greedy_construct(&h, s.code_epsilon, s.lambda, &FeinsteinOptions::default())?);
        let codec = build_codec(&source, &g, s.k, code, &h, &CodecOptions { typical_eps: s.typical_eps, partial: s.partial })?;
        let est = simulate(&codec, &nc, s.trials, self.seed)?;
        let mut header = vec!["R_nats", "k", "n", "trials", "failures", "p_hat", "ci_lo", "ci_hi", "seed"];
        let mut row = vec![
            fmt9(codec.rate_nats),
            s.k.to_string(),
            s.n.to_string(),
            est.trials.to_string(),
            est.failures.to_string(),
            fmt9(est.p_hat),
            fmt9(est.wilson_interval.0),
            fmt9(est.wilson_interval.1),
            self.seed.to_string(),
        ];
        if self.bits {
            header.push("R_bits");
            row.push(fmt9(to_bits(codec.rate_nats)));
        }
        let mut csv = Csv::new(&self.hash, self.seed, &header);
        csv.row(&row);
        let mut m = self.header("simulate");
        m.insert("rate_nats".into(), json!(codec.rate_nats));
        m.insert("code_size".into(), json!(codec.code.size()));
        m.insert("groups".into(), json!(codec.groups.len()));
        m.insert("injective_decoding".into(), json!(codec.injective_decoding));
        m.insert("unplaced".into(), json!(codec.unplaced.to_string()));
        m.insert("placed_mass".into(), json!(codec.placed_mass));
        m.insert("typical_eps".into(), json!(s.typical_eps));
        m.insert("estimate".into(), json!(est));
        let space = (g.in_alphabet() as u128).checked_pow(s.k as u32);
        if space.is_some_and(|v| v <= COMPAT_REPORT_CAP) {
            m.insert("compatibility".into(), json!(is_compatible(&codec, &g, &nc.f)?));
        }
        Ok(vec![("simulate.csv".into(), csv.finish()), ("simulate.json".into(), to_json(Value::Object(m)))])
    }

    fn sweep(&self) -> Result<Artifacts> {
        let s = need(&self.cfg.sweep, "sweep")?;
        let (nc, _) = config::build_instance(&self.cfg)?;
        let g = s.g.build("sweep.g")?;
        let cap = capacity(&nc, Family::Iid, &self.capacity_options())?;
        let inst = SweepInstance::new(nc, g, &cap)?;
        let mut opts = SweepOptions::default();
        if let Some(e) = &s.epsilon_grid {
            opts.epsilon_grid = e.clone();
        }
        if let Some(l) = s.lambda {
            opts.lambda = l;
        }
        if let Some(t) = s.typical_eps {
            opts.typical_eps = t;
        }
        if let Some(r) = &s.ratios {
            opts.ratios = r.clone();
        }
        let rates: Vec<f64> = s.rate_fractions.iter().map(|f| f * inst.capacity).collect();
        let rows = rate_sweep(&inst, &rates, &s.ns, s.trials, self.seed, &opts)?;
        let mut header = vec![
            "R_nats", "k", "n", "trials", "failures", "p_hat", "ci_lo", "ci_hi", "seed", "rate_fraction", "code_epsilon", "code_size", "feasible", "placed_mass",
        ];
        if self.bits {
            header.push("R_bits");
        }
        let mut csv = Csv::new(&self.hash, self.seed, &header);
        for r in &rows {
            let frac = s.rate_fractions[rates.iter().position(|&x| x == r.rate_nats).expect("row rate comes from the grid")];
            let mut cells = vec![
                fmt9(r.rate_nats),
                r.k.to_string(),
                r.n.to_string(),
                r.trials.to_string(),
                r.failures.to_string(),
                fmt9(r.p_hat),
                fmt9(r.ci_lo),
                fmt9(r.ci_hi),
                r.seed.to_string(),
                fmt9(frac),
                fmt9(r.code_epsilon),
                r.code_size.to_string(),
                r.feasible.to_string(),
                fmt9(r.placed_mass),
            ];
            if self.bits {
                cells.push(fmt9(to_bits(r.rate_nats)));
            }
            csv.row(&cells);
        }
        let mut m = self.header("sweep");
        m.insert("capacity_nats".into(), json!(inst.capacity));
        m.insert("input_law".into(), json!(inst.input_law.probs()));
        m.insert("split".into(), json!(inst.split));
        m.insert("typical_eps".into(), json!(opts.typical_eps));
        m.insert("rows".into(), json!(rows));
        Ok(vec![("sweep.csv".into(), csv.finish()), ("sweep.json".into(), to_json(Value::Object(m)))])
    }

    fn circuit(&self) -> Result<Artifacts> {
        let s = need(&self.cfg.circuit, "circuit")?;
        let (nc, ck) = config::build_instance(&self.cfg)?;
        let ck = ck.expect("validated: circuit section requires a circuit instance");
        let cap = self.instance_capacity(&nc)?;
        let report = blowup(cap.value_nats, s.source_entropy_nats, s.epsilon, s.max_k)?;
        let rows: Vec<Vec<f64>> = kernel_rows(&ck).iter().map(|d| d.probs().to_vec()).collect();
        let mut m = self.header("circuit");
        m.insert(
            "kernel".into(),
            json!({
                "exact": ck.exact,
                "samples_per_row": ck.samples_per_row,
                "max_std_err": ck.max_std_err,
                "max_drift": ck.max_drift,
                "rows": rows,
            }),
        );
        m.insert("truth_table".into(), json!(nc.f.symbol_table()));
        m.insert("capacity".into(), json!(cap));
        m.insert("blowup".into(), json!(report));
        m.insert("blowup_scope".into(), json!("circuit size ratio n/k only; encoder and decoder sizes are not included"));
        if self.bits {
            m.insert("capacity_bits".into(), json!(to_bits(cap.value_nats)));
        }
        Ok(vec![("circuit.json".into(), to_json(Value::Object(m)))])
    }
}
