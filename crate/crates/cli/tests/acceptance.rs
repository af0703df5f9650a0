//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Random batteries use `ChaCha8Rng` seeded with the criterion number.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use noisy_computation::blocks::BlockSpace;
use noisy_computation::capacity::{capacity, channel_capacity, compare_noisy_input, CapacityOptions, Family};
use noisy_computation::channels::{hookup_auto, lift_finite_fn, product, BlockFn, BlockKernel, LiftedFunction};
use noisy_computation::circuits::{circuit_to_kernel, kernel_rows, CircuitSpec, KernelOptions};
use noisy_computation::feinstein::{greedy_construct, maximality_check, verify, FeinsteinOptions};
use noisy_computation::prob::{cond_entropy, entropy, mutual_info, Dist, JointTable};
use noisy_computation::processes::{is_typical, typical_set, Source};
use noisy_computation::reliable::{build_codec, is_compatible, rate_sweep, split_source, CodecOptions, SweepInstance, SweepOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENTROPY_TOL: f64 = 1e-10;
const CAPACITY_TOL: f64 = 1e-6;
const BIJECTIVE_TOL: f64 = 1e-4;
const BSC_CAPACITY: f64 = 0.368064;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dirichlet(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| dirichlet(rng, cols)).collect()
}

fn random_map(rng: &mut ChaCha8Rng, q: usize, qb: usize) -> Vec<usize> {
    // every output value is hit when q >= qb
    let mut t: Vec<usize> = (0..q).map(|a| if a < qb { a } else { rng.gen_range(0..qb) }).collect();
    for i in (1..q).rev() {
        t.swap(i, rng.gen_range(0..=i));
    }
    t
}

fn and_bsc() -> noisy_computation::channels::NoisyComputation {
    let dev = BlockKernel::cascade(&BlockKernel::deterministic(&BlockFn::and()), &BlockKernel::bsc(0.1).unwrap()).unwrap();
    product(BlockFn::and(), dev).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    let mut coarsening_failures = 0;
    for _ in 0..100 {
        let q = rng.gen_range(2..=5);
        let qb = rng.gen_range(1..=q);
        let j = JointTable::from_dense(&random_matrix(&mut rng, q, q).iter().map(|r| r.iter().map(|v| v / q as f64).collect()).collect::<Vec<_>>()).unwrap();
        let (hx, hy, hxy) = (entropy(&j.row_marginal()), entropy(&j.col_marginal()), j.joint_entropy());
        let h_x_given_y = cond_entropy(&j);
        let h_y_given_x = cond_entropy(&j.transpose());
        worst[0] = worst[0].max((hxy - (hx + h_y_given_x)).abs()).max((hxy - (hy + h_x_given_y)).abs());
        worst[1] = worst[1].max((mutual_info(&j) - (hx - h_x_given_y)).abs());
        worst[2] = worst[2].max((-mutual_info(&j)).max(-h_x_given_y).max(-h_y_given_x).max(0.0));
        let f = random_map(&mut rng, q, qb);
        let jf = j.map(qb, qb, |a| f[a], |b| f[b]).unwrap();
        let gap = cond_entropy(&jf) - h_x_given_y;
        worst[3] = worst[3].max(gap);
        if gap > ENTROPY_TOL {
            coarsening_failures += 1;
        }
    }
    let pass = worst[..3].iter().all(|&w| w <= ENTROPY_TOL) && coarsening_failures == 0;
    outcome(
        pass,
        format!(
            "chain {:.1e}, I identity {:.1e}, negativity {:.1e}, H(f(X)|f(Y)) - H(X|Y) max {:.3e} ({} of 100 above tol {ENTROPY_TOL:e})",
            worst[0], worst[1], worst[2], worst[3], coarsening_failures
        ),
    )
}

fn criterion_2() -> Outcome {
    let base = Dist::new(vec![0.3, 0.7]).unwrap();
    let s = Source::iid(base.clone());
    let h = entropy(&base);
    let eps = 0.05;
    let delta = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples = 10_000;
    let hits = (0..samples).filter(|_| is_typical(&s, &s.sample_block(1000, &mut rng), eps).unwrap()).count();
    let mass = hits as f64 / samples as f64;
    let mut pass = mass >= 0.99;
    let mut detail = format!("P(A^1000) = {mass:.4} (need >= 0.99); counts");
    for n in 14..=18 {
        let count = typical_set(&s, n, eps).unwrap().len() as f64;
        let lo = (1.0 - delta) * (n as f64 * (h - eps)).exp();
        let hi = (n as f64 * (h + eps)).exp();
        let ok = lo <= count && count <= hi;
        pass &= ok;
        detail.push_str(&format!(" n={n}: {count} in [{lo:.1}, {hi:.1}] {}", if ok { "ok" } else { "OUT" }));
    }
    outcome(pass, detail)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = CapacityOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let q = rng.gen_range(2..=4);
        let r = rng.gen_range(2..=4);
        let perm = random_map(&mut rng, q, q);
        let dev = BlockKernel::memoryless(random_matrix(&mut rng, q, r)).unwrap();
        let cf = capacity(&product(BlockFn::per_symbol(q, q, perm).unwrap(), dev.clone()).unwrap(), Family::Iid, &opts).unwrap();
        let c = channel_capacity(&dev).unwrap();
        worst = worst.max((cf.value_nats - c.value_nats).abs());
    }
    let bsc = channel_capacity(&BlockKernel::bsc(0.1).unwrap()).unwrap().value_nats;
    let closed = 2f64.ln() + 0.1 * 0.1f64.ln() + 0.9 * 0.9f64.ln();
    let noisy = product(BlockFn::and(), BlockKernel::totally_noisy(4, &Dist::uniform(2))).unwrap();
    let tn = capacity(&noisy, Family::Iid, &opts).unwrap();
    let res = tn.grid_resolution.unwrap_or(0.0);
    let pass = worst <= BIJECTIVE_TOL && (bsc - closed).abs() <= 1e-6 && (bsc - BSC_CAPACITY).abs() <= 1e-6 && (tn.value_nats - 3f64.ln()).abs() <= res && tn.grid_value.is_some();
    outcome(
        pass,
        format!(
            "bijective max gap {worst:.2e} (tol {BIJECTIVE_TOL:e}); BSC(0.1) {bsc:.7} vs closed form {closed:.7}; totally noisy AND {:.6} vs ln 3 {:.6} (grid {res})",
            tn.value_nats,
            3f64.ln()
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = CapacityOptions::default();
    let mut fails_a = 0;
    let mut fails_b = 0;
    let mut worst_a = f64::NEG_INFINITY;
    let mut worst_b = f64::NEG_INFINITY;
    for _ in 0..100 {
        let q = rng.gen_range(2..=4);
        let qb = rng.gen_range(1..=q);
        let r = rng.gen_range(2..=3);
        let f = BlockFn::per_symbol(q, qb, random_map(&mut rng, q, qb)).unwrap();
        let dev = BlockKernel::memoryless(random_matrix(&mut rng, q, r)).unwrap();
        let cf = capacity(&product(f, dev.clone()).unwrap(), Family::Iid, &opts).unwrap();
        let c = channel_capacity(&dev).unwrap().value_nats;
        let gap = c - cf.value_nats - cf.grid_resolution.unwrap_or(0.0);
        worst_a = worst_a.max(gap);
        if gap > CAPACITY_TOL {
            fails_a += 1;
        }
    }
    for _ in 0..100 {
        let q = rng.gen_range(2..=4);
        let qb = rng.gen_range(1..=q);
        let f = BlockFn::per_symbol(q, qb, random_map(&mut rng, q, qb)).unwrap();
        let nu = BlockKernel::memoryless(random_matrix(&mut rng, q, q)).unwrap();
        let cmp = compare_noisy_input(&nu, &f, &opts).unwrap();
        worst_b = worst_b.max(cmp.channel.value_nats - cmp.computation.value_nats - cmp.computation.grid_resolution.unwrap_or(0.0));
        if !cmp.holds(CAPACITY_TOL) {
            fails_b += 1;
        }
    }
    outcome(
        fails_a == 0 && fails_b == 0,
        format!(
            "C(F) <= C_f(F): {fails_a} of 100 fail (max excess {worst_a:.2e}); C_nu <= C_f(nu f): {fails_b} of 100 fail (max excess {worst_b:.2e}); tol {CAPACITY_TOL:e} + grid"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut inextensible = 0;
    let mut statement_failures = 0;
    let mut sizes = Vec::new();
    for _ in 0..50 {
        let q = rng.gen_range(2..=4);
        let qb = rng.gen_range(2..=q.max(2));
        let r = rng.gen_range(2..=3);
        let n = rng.gen_range(2..=6);
        let f = BlockFn::per_symbol(q, qb, random_map(&mut rng, q, qb)).unwrap();
        let dev = BlockKernel::memoryless(random_matrix(&mut rng, q, r)).unwrap();
        let nc = product(f, dev).unwrap();
        let s = Source::iid(Dist::new(dirichlet(&mut rng, q)).unwrap());
        let eps = [0.05, 0.1, 0.2, 0.3][rng.gen_range(0..4)];
        let lambda = [0.1, 0.2][rng.gen_range(0..2)];
        let h = hookup_auto(&s, &nc, n).unwrap();
        let code = greedy_construct(&h, eps, lambda, &FeinsteinOptions::default()).unwrap();
        let report = verify(&code, &h).unwrap();
        violations += report.violations + report.overlaps.len();
        let m = maximality_check(&code, &h).unwrap();
        if m.inextensible() {
            inextensible += 1;
            if !(m.statement1 && m.statement2) {
                statement_failures += 1;
            }
        }
        sizes.push(code.size());
    }
    outcome(
        violations == 0 && statement_failures == 0 && inextensible > 0,
        format!(
            "50 codes (sizes {}..={}), {violations} verify violations; {inextensible} inextensible, {statement_failures} with a failed maximality statement",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    )
}

fn criterion_6() -> Outcome {
    let and = and_bsc();
    let xor_or = product(BlockFn::xor(), BlockKernel::deterministic(&BlockFn::or())).unwrap();
    let mut built = 0;
    let mut injective = 0;
    let mut failures = Vec::new();
    for (name, nc, g) in [("and+bsc", &and, BlockFn::and()), ("xor/or", &xor_or, BlockFn::xor())] {
        let cap = capacity(nc, Family::Iid, &CapacityOptions::default()).unwrap();
        for n in [4usize, 6, 8] {
            let h = hookup_auto(&Source::iid(cap.argmax.clone()), nc, n).unwrap();
            for eps in [0.05, 0.2, 0.4] {
                let code = Arc::new(greedy_construct(&h, eps, 0.1, &FeinsteinOptions::default()).unwrap());
                for k in 1..=4 {
                    for frac in [0.3, 0.6, 0.9] {
                        let total = frac * 4f64.ln();
                        let Some(src) = split_source(&g, total, 0.3) else { continue };
                        let opts = CodecOptions { typical_eps: 0.3, partial: true };
                        let Ok(codec) = build_codec(&Source::iid(src), &g, k, code.clone(), &h, &opts) else { continue };
                        built += 1;
                        injective += codec.injective_decoding as usize;
                        let c = is_compatible(&codec, &g, &nc.f).unwrap();
                        let ok = c.holds && c.encoder_injective && c.inside_code && (!codec.injective_decoding || c.equivalence == Some(true));
                        if !ok {
                            failures.push(format!("{name} n={n} eps={eps} k={k} frac={frac}"));
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty() && built > 0 && injective > 0,
        format!("{built} codecs checked ({injective} injective), {} failures {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    )
}

fn criterion_7() -> Outcome {
    let nc = and_bsc();
    let cap = capacity(&nc, Family::Iid, &CapacityOptions::default()).unwrap();
    let inst = SweepInstance::new(nc, BlockFn::and(), &cap).unwrap();
    let c = inst.capacity;
    let rows = rate_sweep(&inst, &[0.5 * c, 1.2 * c], &[6, 9, 12], 10_000, 2024, &SweepOptions::default()).unwrap();
    let at = |frac: f64, n: usize| rows.iter().find(|r| r.n == n && (r.rate_nats - frac * c).abs() < 1e-12).unwrap();
    let (lo6, lo12) = (at(0.5, 6), at(0.5, 12));
    let below = lo12.p_hat < lo6.p_hat && lo12.ci_hi < lo6.ci_lo;
    let above = [6, 9, 12].iter().all(|&n| at(1.2, n).p_hat >= 0.2);
    let cell = |r: &noisy_computation::reliable::SweepRow| format!("n={} k={} p={:.4} [{:.4}, {:.4}]", r.n, r.k, r.p_hat, r.ci_lo, r.ci_hi);
    outcome(
        below && above,
        format!(
            "0.5C: {} vs {} ({}) | 1.2C: {}; {}; {} ({})",
            cell(lo6),
            cell(lo12),
            if below { "decreasing" } else { "NOT decreasing" },
            cell(at(1.2, 6)),
            cell(at(1.2, 9)),
            cell(at(1.2, 12)),
            if above { "all >= 0.2" } else { "some < 0.2" }
        ),
    )
}

fn criterion_8() -> Outcome {
    let lifted = LiftedFunction::binary_increment();
    let n = 8;
    let f = lift_finite_fn(&lifted, n, n + 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sp_in = BlockSpace::new(3, n);
    let sp_out = BlockSpace::new(3, n + 1);
    let mut mismatches = 0;
    for _ in 0..100 {
        let len = rng.gen_range(0..=n);
        let u: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let x = lifted.pad_input(&u, n).unwrap();
        let y = sp_out.decode(f.apply_code(n, sp_in.encode(&x)));
        if Some(lifted.strip_output(&y)) != lifted.inner(&u) {
            mismatches += 1;
        }
    }
    let mut blank_failures = 0;
    for _ in 0..100 {
        // a blank followed by a non-blank is outside the domain
        let mut x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let i = rng.gen_range(0..n - 1);
        x[i] = 2;
        x[rng.gen_range(i + 1..n)] = rng.gen_range(0..2);
        let y = sp_out.decode(f.apply_code(n, sp_in.encode(&x)));
        if y.iter().any(|&s| s != lifted.blank_out) {
            blank_failures += 1;
        }
    }
    outcome(mismatches == 0 && blank_failures == 0, format!("{mismatches} of 100 domain strings differ; {blank_failures} of 100 out-of-domain blocks not all blank"))
}

fn ncomp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ncomp")).args(args).current_dir(env!("CARGO_MANIFEST_DIR")).output().expect("ncomp runs")
}

fn criterion_9() -> Outcome {
    let c = CircuitSpec::majority3(0.0).unwrap();
    let rows = kernel_rows(&circuit_to_kernel(&c, &KernelOptions::default()).unwrap());
    let det = BlockKernel::deterministic(&c.truth_table());
    let exact = rows.iter().zip(det.symbol_rows().unwrap()).all(|(a, b)| a.probs() == b.probs());
    let out = ncomp(&["circuit", "--config", "configs/majority_circuit.json"]);
    if !out.status.success() {
        return outcome(false, format!("ncomp circuit failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let b = &v["blowup"];
    let (lo, hi) = (b["bounds"][0].as_f64().unwrap(), b["bounds"][1].as_f64().unwrap());
    let (n, k) = (b["n"].as_u64().unwrap(), b["k"].as_u64().unwrap());
    let lambda = n as f64 / k as f64;
    let inside = lo < lambda && lambda <= hi;
    outcome(exact && inside, format!("noiseless kernel equals truth table: {exact}; Lambda = {n}/{k} = {lambda:.6} in ({lo}, {hi}]: {inside}"))
}

fn criterion_10() -> Outcome {
    let runs: [&[&str]; 6] = [
        &["capacity", "--config", "configs/and_bsc.json"],
        &["feinstein", "--config", "configs/and_bsc.json"],
        &["simulate", "--config", "configs/and_bsc.json", "--threads", "2"],
        &["sweep", "--config", "configs/threshold_sweep.json", "--seed", "7", "--threads", "2"],
        &["circuit", "--config", "configs/majority_circuit.json", "--bits"],
        &["capacity", "--config", "configs/totally_noisy_and.json"],
    ];
    let mut differing = Vec::new();
    for args in runs {
        let a = ncomp(args);
        let b = ncomp(args);
        if !a.status.success() || a.stdout != b.stdout || a.stdout.is_empty() {
            differing.push(args[0]);
        }
    }
    outcome(differing.is_empty(), format!("{} invocations repeated; differing or failed: {:?}", runs.len(), differing))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("entropy algebra", criterion_1, Duration::from_secs(1)),
        ("AEP mass and counts", criterion_2, Duration::from_secs(30)),
        ("capacity reductions", criterion_3, Duration::from_secs(300)),
        ("capacity inequalities", criterion_4, Duration::from_secs(300)),
        ("Feinstein constructor", criterion_5, Duration::from_secs(300)),
        ("codec compatibility", criterion_6, Duration::from_secs(300)),
        ("coding threshold", criterion_7, Duration::from_secs(600)),
        ("lifting", criterion_8, Duration::from_secs(60)),
        ("circuit example", criterion_9, Duration::from_secs(120)),
        ("reproducibility", criterion_10, Duration::from_secs(600)),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let took = t.elapsed();
        let pass = o.pass && took <= *budget;
        println!(
            "criterion {:>2} {} {name}: {} [{:.2}s, budget {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
