//! Operation microbenchmarks and the per-round cost-model check.

use std::time::{Duration, Instant};

use num_bigint::{BigUint, RandBigInt};
use ppls_core::paillier::{keygen, OpCounters, OpCounts};
use ppls_core::protocol::{run_local, PartyOutcome};
use ppls_core::{Error, Result};
use rand::thread_rng;

use crate::config::Args;
use crate::report::Report;
use crate::roles::{load, setups};

/// Mean seconds per operation.
#[derive(Debug, Clone, Copy)]
struct OpTimes {
    e: f64,
    d: f64,
    ac: f64,
    me: f64,
    mi: f64,
    mm: f64,
}

impl OpTimes {
    fn cost(&self, c: &OpCounts) -> f64 {
        c.e as f64 * self.e
            + c.d as f64 * self.d
            + c.ac as f64 * self.ac
            + c.me as f64 * self.me
            + c.mi as f64 * self.mi
            + c.mm as f64 * self.mm
    }
}

fn time_each(reps: u32, mut op: impl FnMut(usize)) -> f64 {
    let start = Instant::now();
    for i in 0..reps as usize {
        op(i);
    }
    start.elapsed().as_secs_f64() / f64::from(reps)
}

fn microbench(keybits: u32, reps: u32) -> Result<OpTimes> {
    let mut rng = thread_rng();
    let (pk, sk) = keygen(keybits, &mut rng)?;
    let ctr = OpCounters::new();
    let n = pk.modulus().clone();
    let plains: Vec<BigUint> = (0..reps).map(|_| rng.gen_biguint_below(&n)).collect();
    let scalars: Vec<BigUint> = (0..reps).map(|_| rng.gen_biguint_below(&n)).collect();
    let mut cts = Vec::with_capacity(reps as usize);
    let e = time_each(reps, |i| cts.push(pk.encrypt(&plains[i], &mut rng, &ctr).expect("in range")));
    let d = time_each(reps, |i| {
        sk.decrypt(&cts[i], &ctr).expect("valid ciphertext");
    });
    let ac = time_each(reps, |i| {
        pk.add_plain(&cts[i], &scalars[i], &ctr).expect("same key");
    });
    let me = time_each(reps, |i| {
        pk.scalar_mul(&cts[i], &scalars[i], &ctr).expect("same key");
    });
    let mi = time_each(reps, |i| {
        pk.negate(&cts[i], &ctr).expect("invertible");
    });
    let k = cts.len();
    let mm = time_each(reps, |i| {
        pk.add(&cts[i], &cts[(i + 1) % k], &ctr).expect("same key");
    });
    Ok(OpTimes { e, d, ac, me, mi, mm })
}

/// Per-round and setup counts that the cost model fixes exactly.
pub fn check_counts(n: u64, bob: &PartyOutcome, alice: &PartyOutcome) -> Result<()> {
    if bob.setup_counts.e != n * n + n {
        return Err(Error::CostModelViolation(format!(
            "Bob setup used {} encryptions, model says {}",
            bob.setup_counts.e,
            n * n + n
        )));
    }
    if alice.round_counts.len() != bob.round_counts.len() {
        return Err(Error::CostModelViolation("parties measured different round counts".into()));
    }
    for (i, (a, b)) in alice.round_counts.iter().zip(&bob.round_counts).enumerate() {
        if a.me != n * n {
            return Err(Error::CostModelViolation(format!("round {i}: Alice used {} ME, model says {}", a.me, n * n)));
        }
        if b.d != n {
            return Err(Error::CostModelViolation(format!("round {i}: Bob used {} D, model says {n}", b.d)));
        }
    }
    Ok(())
}

pub fn run(args: &Args) -> Result<()> {
    let data = load(&args.data)?;
    let config = args.party_config()?;
    if args.bench_reps == 0 {
        return Err(Error::InvalidParameter("--bench-reps must be positive".into()));
    }
    let times = microbench(args.keybits, args.bench_reps)?;

    let (bob, alice) = setups(args, &config, &data)?;
    let run = run_local(bob, alice, Duration::from_secs(args.timeout))?;
    let n = run.bob.params.n as u64;
    let iters = f64::from(run.bob.params.iterations);
    check_counts(n, &run.bob, &run.alice)?;

    let nf = n as f64;
    let t = times;
    let setup_bob = nf * nf * t.e + nf * (t.e + t.d);
    let round_alice = nf * nf * (t.me + t.mm) + nf * (2.0 * t.mm + t.mi + t.e + t.d);
    let round_bob = nf * (t.d + t.e + t.mm);
    let formula = setup_bob + iters * (round_alice + round_bob);
    let from_counts = t.cost(&run.bob.total_counts) + t.cost(&run.alice.total_counts);

    let mut report = Report::new();
    report.put("role", "bench");
    report.put("n", n);
    report.put("iterations", run.bob.params.iterations);
    report.put("keybits", args.keybits);
    report.put("reps", args.bench_reps);
    for (name, v) in [("e", t.e), ("d", t.d), ("ac", t.ac), ("me", t.me), ("mi", t.mi), ("mm", t.mm)] {
        report.put(format!("op_us.{name}"), format!("{:.3}", v * 1e6));
    }
    report.counts("bob.setup", &run.bob.setup_counts);
    if let (Some(a), Some(b)) = (run.alice.round_counts.first(), run.bob.round_counts.first()) {
        report.counts("alice.round", a);
        report.counts("bob.round", b);
    }
    report.put("cost_model", "counts match");
    report.put("predicted_ms.formula", format!("{:.3}", formula * 1e3));
    report.put("predicted_ms.counts", format!("{:.3}", from_counts * 1e3));
    report.put("measured_ms", format!("{:.3}", run.elapsed.as_secs_f64() * 1e3));
    report.meter(&run.meter, run.bob.params.iterations);
    print!("{}", report.render());
    report.write(args.report.as_deref())
}
