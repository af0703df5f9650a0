use noisy_computation::blocks::BlockSpace;
use noisy_computation::capacity::{capacity, channel_capacity, project_simplex, CapacityOptions, Family};
use noisy_computation::channels::{hookup_auto, product, BlockFn, BlockKernel};
use noisy_computation::circuits::{circuit_to_kernel, kernel_rows, CircuitSpec, KernelMode, KernelOptions};
use noisy_computation::feinstein::{greedy_construct, maximality_check, verify, FeinsteinOptions};
use noisy_computation::prob::{cond_entropy, entropy, mutual_info, Dist, JointTable};
use noisy_computation::processes::{is_typical, typical_set, Source};
use noisy_computation::reliable::wilson_interval;
use proptest::prelude::*;

fn weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len)
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(weights(cols), rows).prop_map(|m| m.iter().map(|r| normalized(r)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_identities(m in (2usize..5, 2usize..5).prop_flat_map(|(r, c)| matrix(r, c))) {
        let rows = m.len() as f64;
        let dense: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v / rows).collect()).collect();
        let j = JointTable::from_dense(&dense).unwrap();
        let (hx, hy) = (entropy(&j.row_marginal()), entropy(&j.col_marginal()));
        prop_assert!((j.joint_entropy() - hy - cond_entropy(&j)).abs() < 1e-10);
        prop_assert!((mutual_info(&j) - (hx + hy - j.joint_entropy())).abs() < 1e-10);
        prop_assert!(mutual_info(&j) >= -1e-12);
        prop_assert!(hx <= (m.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn block_codes_round_trip(q in 2usize..5, block in prop::collection::vec(0usize..4, 1..8)) {
        let block: Vec<usize> = block.into_iter().map(|s| s % q).collect();
        let sp = BlockSpace::new(q, block.len());
        let code = sp.encode(&block);
        prop_assert!((code as u128) < sp.count());
        prop_assert_eq!(sp.decode(code), block);
    }

    #[test]
    fn typical_members_pass_the_predicate(w in weights(3), n in 1usize..7, eps in 0.05f64..0.5) {
        let s = Source::iid(Dist::new(normalized(&w)).unwrap());
        let t = typical_set(&s, n, eps).unwrap();
        let sp = BlockSpace::new(3, n);
        let members = t.members.len();
        let all = sp.size().unwrap();
        let count = (0..all).filter(|&c| is_typical(&s, &sp.decode(c), eps).unwrap()).count();
        prop_assert_eq!(members, count);
        prop_assert!(t.mass <= 1.0 + 1e-12);
    }

    #[test]
    fn projection_lands_on_the_simplex(v in prop::collection::vec(-2.0f64..2.0, 1..6)) {
        let p = project_simplex(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
        let failures = ((trials as f64) * frac).floor() as u64;
        let (lo, hi) = wilson_interval(failures, trials);
        let p = failures as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn greedy_codes_verify_and_are_inextensible(
        dev in matrix(4, 2),
        src in weights(4),
        n in 2usize..5,
        eps in 0.05f64..0.4,
    ) {
        let nc = product(BlockFn::and(), BlockKernel::memoryless(dev).unwrap()).unwrap();
        let h = hookup_auto(&Source::iid(Dist::new(normalized(&src)).unwrap()), &nc, n).unwrap();
        let code = greedy_construct(&h, eps, 0.1, &FeinsteinOptions::default()).unwrap();
        prop_assert!(verify(&code, &h).unwrap().ok());
        let m = maximality_check(&code, &h).unwrap();
        prop_assert!(m.inextensible() && m.statement1 && m.statement2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn computing_capacity_dominates_channel_capacity(dev in matrix(3, 3), table in prop::collection::vec(0usize..2, 3)) {
        let f = BlockFn::per_symbol(3, 2, table).unwrap();
        let k = BlockKernel::memoryless(dev).unwrap();
        let cf = capacity(&product(f, k.clone()).unwrap(), Family::Iid, &CapacityOptions::default()).unwrap();
        let c = channel_capacity(&k).unwrap();
        prop_assert!(c.value_nats <= cf.value_nats + 1e-6 + cf.grid_resolution.unwrap_or(0.0));
        prop_assert!(cf.value_nats <= cf.bracket.1.unwrap_or(f64::INFINITY) + 1e-9);
    }
}

/// Coarsening both sides of a joint law can raise the conditional entropy:
/// X is a function of Y, yet f(X) is not a function of f(Y).
#[test]
fn coarsening_can_raise_conditional_entropy() {
    let j = JointTable::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
    let f = [0, 0, 1];
    let jf = j.map(2, 2, |a| f[a], |b| f[b]).unwrap();
    assert!(cond_entropy(&j).abs() < 1e-12);
    assert!((cond_entropy(&jf) - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn monte_carlo_kernel_tracks_exact_kernel() {
    let c = CircuitSpec::majority3(0.05).unwrap();
    let exact = kernel_rows(&circuit_to_kernel(&c, &KernelOptions::default()).unwrap());
    let mc = circuit_to_kernel(&c, &KernelOptions { mode: KernelMode::MonteCarlo, std_err: 2e-3, seed: 9 }).unwrap();
    for (a, b) in exact.iter().zip(kernel_rows(&mc)) {
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 5.0 * 2e-3, "{x} {y}");
        }
    }
}
