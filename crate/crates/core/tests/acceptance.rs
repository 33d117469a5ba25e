//! Acceptance runner. Evaluates every criterion at its stated tolerance and
//! prints one PASS/FAIL line each. Exits non-zero if any criterion fails.

mod common;

use std::net::TcpListener;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use common::*;
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed};
use ppls_core::fixedpoint::{pow10, rational_from_f64, ScalePlan, ScaledInt};
use ppls_core::oracle::{gd_fixedpoint, rationals_to_f64, relative_error, solve_normal_equations, Dataset};
use ppls_core::paillier::{keygen, OpCounters, PaillierPrivateKey};
use ppls_core::protocol::{run_alice, run_bob, SessionParams, TestHooks};
use ppls_core::transport::{deserialize, serialize, Channel, TcpChannel};
use ppls_core::Error;
use rand::Rng;

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Shared by criteria 1 and 7.
struct Batch {
    mismatches: Vec<usize>,
    failures: Vec<(usize, String)>,
    violations: usize,
    fields: usize,
    runs: usize,
    seconds: f64,
}

fn criterion_1_batch() -> Batch {
    let mut rng = seeded(2026);
    let started = Instant::now();
    let mut batch = Batch { mismatches: vec![], failures: vec![], violations: 0, fields: 0, runs: 0, seconds: 0.0 };
    for k in 0..50 {
        let inst = random_instance(&mut rng);
        match inst.run(1000 + k as u64) {
            Ok(report) => {
                batch.runs += 1;
                let expected = inst.oracle();
                if report.bob.theta != expected || report.alice.theta != expected {
                    batch.mismatches.push(k);
                }
                batch.violations += report.audit.violations.len();
                batch.fields += report.audit.fields_checked;
            }
            Err(e) => batch.failures.push((k, e.to_string())),
        }
    }
    batch.seconds = started.elapsed().as_secs_f64();
    batch
}

fn criterion_1(batch: &Batch) -> Outcome {
    ensure(batch.failures.is_empty(), || format!("runs failed: {:?}", batch.failures))?;
    ensure(batch.mismatches.is_empty(), || format!("θ differs from the oracle on instances {:?}", batch.mismatches))?;
    Ok(format!("{} instances bit-identical, encrypted runs took {:.1}s", batch.runs, batch.seconds))
}

fn reference_decrypt(n: u64, lambda: u64, c: u64) -> u64 {
    // L(c^λ mod N²) · L(g^λ mod N²)^-1 mod N with g = N + 1.
    let nn = n * n;
    let l = |u: u64| (u - 1) / n;
    let pow = |b: u64, e: u64| BigUint::from(b).modpow(&BigUint::from(e), &BigUint::from(nn));
    let lc = l(u64::try_from(pow(c, lambda)).unwrap());
    let lg = l(u64::try_from(pow(n + 1, lambda)).unwrap());
    let mu = (0..n).find(|m| (lg * m) % n == 1).expect("invertible");
    (lc * mu) % n
}

fn criterion_2() -> Outcome {
    let ctr = OpCounters::new();
    let mut rng = seeded(3);
    let mut checks = 0u64;
    for bits in [256, 512] {
        let (pk, sk) = keygen(bits, &mut rng).map_err(|e| e.to_string())?;
        let n = pk.modulus().clone();
        for _ in 0..1000 {
            let m1 = rng.gen_biguint_below(&n);
            let m2 = rng.gen_biguint_below(&n);
            let a = rng.gen_biguint_below(&n);
            let c1 = pk.encrypt(&m1, &mut rng, &ctr).unwrap();
            let c2 = pk.encrypt(&m2, &mut rng, &ctr).unwrap();
            let sum = sk.decrypt(&pk.add(&c1, &c2, &ctr).unwrap(), &ctr).unwrap();
            ensure(sum == (&m1 + &m2) % &n, || format!("additive property failed at {bits} bits"))?;
            let prod = sk.decrypt(&pk.scalar_mul(&c1, &a, &ctr).unwrap(), &ctr).unwrap();
            ensure(prod == (&a * &m1) % &n, || format!("scalar property failed at {bits} bits"))?;
            checks += 2;
        }
    }

    // N = 35: every unit of Z_{N²} is a ciphertext; check both properties
    // over all pairs and all scalars against the textbook decryption.
    let sk = PaillierPrivateKey::from_primes(BigUint::from(5u8), BigUint::from(7u8)).map_err(|e| e.to_string())?;
    let pk = sk.public_key();
    let units: Vec<u64> = (1..1225u64).filter(|v| v.gcd(&35) == 1).collect();
    let dec = |v: u64| {
        let c = pk.ciphertext_from_value(BigUint::from(v)).unwrap();
        u64::try_from(sk.decrypt(&c, &ctr).unwrap()).unwrap()
    };
    let plain: Vec<u64> = units.iter().map(|&v| dec(v)).collect();
    for (&v, &p) in units.iter().zip(&plain) {
        ensure(p == reference_decrypt(35, 12, v), || format!("decryption of {v} differs from the reference"))?;
    }
    for (i, &c1) in units.iter().enumerate() {
        for (j, &c2) in units.iter().enumerate() {
            let v = pk
                .add(&pk.ciphertext_from_value(c1.into()).unwrap(), &pk.ciphertext_from_value(c2.into()).unwrap(), &ctr)
                .unwrap();
            let got = u64::try_from(sk.decrypt(&v, &ctr).unwrap()).unwrap();
            ensure(got == (plain[i] + plain[j]) % 35, || format!("toy additive property failed at {c1}·{c2}"))?;
            checks += 1;
        }
        for a in 0..35u64 {
            let v = pk.scalar_mul(&pk.ciphertext_from_value(c1.into()).unwrap(), &a.into(), &ctr).unwrap();
            let got = u64::try_from(sk.decrypt(&v, &ctr).unwrap()).unwrap();
            ensure(got == (a * plain[i]) % 35, || format!("toy scalar property failed at {c1}^{a}"))?;
            ensure(got == reference_decrypt(35, 12, u64::try_from(v.value()).unwrap()), || "reference mismatch".into())?;
            checks += 1;
        }
    }
    Ok(format!("{checks} checks, zero failures"))
}

trait GenBig {
    fn gen_biguint_below(&mut self, bound: &BigUint) -> BigUint;
}

impl<R: Rng> GenBig for R {
    fn gen_biguint_below(&mut self, bound: &BigUint) -> BigUint {
        num_bigint::RandBigInt::gen_biguint_below(self, bound)
    }
}

fn criterion_3() -> Outcome {
    let mut rng = seeded(4);
    let mut worst = 0.0f64;
    for s in [2u32, 4, 6, 8] {
        let half_ulp = BigRational::new(BigInt::one(), pow10(s) * 2);
        for _ in 0..10_000 {
            let r: f64 = rng.gen_range(-1000.0..1000.0);
            let exact = rational_from_f64(r).unwrap();
            let enc = ScaledInt::encode(r, s).map_err(|e| e.to_string())?;
            let err = (enc.to_rational() - &exact).abs();
            ensure(err < half_ulp, || format!("r={r} s={s}: encoding error not below 10^-s/2"))?;
            let decoded = rational_from_f64(enc.decode()).unwrap();
            let err = (decoded - &exact).abs();
            ensure(err < half_ulp, || format!("r={r} s={s}: decoded error not below 10^-s/2"))?;
            let ratio = rationals_to_f64(&[err / &half_ulp])[0];
            worst = worst.max(ratio);
        }
    }
    Ok(format!("40000 reals, worst error {worst:.6} of the bound"))
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
}

fn oracle_params(data: &Dataset, iterations: u32, s: u32) -> SessionParams {
    let (bob, alice) = data.split_at(data.m() / 2).unwrap();
    let mut cfg = config("0.1", iterations, s, 2048, bounds("1", "4", "10"));
    cfg.scale_plan = ScalePlan::new(s, s);
    let pb = cfg.proposal(bob.n(), bob.m()).unwrap();
    let pa = cfg.proposal(alice.n(), alice.m()).unwrap();
    SessionParams::negotiate(&pb, &pa).unwrap()
}

fn criterion_4() -> Outcome {
    let data = Dataset::from_csv_path(&data_path("synthetic.csv")).map_err(|e| e.to_string())?;
    ensure(data.n() == 3 && data.m() == 100, || "bundled synthetic set has the wrong shape".into())?;
    let exact = rationals_to_f64(&solve_normal_equations(&data).map_err(|e| e.to_string())?);
    let error_at = |iterations: u32, s: u32| -> std::result::Result<f64, String> {
        let theta = gd_fixedpoint(&data, &oracle_params(&data, iterations, s)).map_err(|e| e.to_string())?;
        Ok(relative_error(&theta.iter().map(ScaledInt::decode).collect::<Vec<_>>(), &exact))
    };
    let mut errors = Vec::new();
    for s in [4, 6, 8, 10] {
        errors.push(error_at(50_000, s)?);
    }
    ensure(errors.windows(2).all(|w| w[1] <= w[0]), || format!("errors over s=4,6,8,10 not non-increasing: {}", sci(&errors)))?;
    let final_error = error_at(200_000, 10)?;
    ensure(final_error <= 1e-6, || format!("s=10 N=200000 error {final_error:.3e} above 1e-6"))?;
    Ok(format!("N=50000 errors [{}]; s=10 N=200000 error {final_error:.2e}", sci(&errors)))
}

fn per_iteration_bytes(report: &ppls_core::protocol::RunReport, iterations: u32) -> std::result::Result<u64, String> {
    let first = report.meter.by_iteration(1);
    for i in 1..=iterations {
        let t = report.meter.by_iteration(i);
        ensure(t.messages == 5, || format!("iteration {i} carried {} messages", t.messages))?;
        ensure(t.bytes == first.bytes, || format!("iteration {i} carried {} bytes, iteration 1 {}", t.bytes, first.bytes))?;
    }
    Ok(first.bytes)
}

fn criterion_5() -> Outcome {
    let mut rng = seeded(5);
    let mut by_m = Vec::new();
    for m in [100usize, 1000, 10000] {
        let data = random_data(&mut rng, 3, m, 0.1, 3);
        let inst = Instance { data, m1: m / 3, config: config("0.1", 3, 6, TEST_KEYBITS, bounds("1", "7", "10")) };
        let report = inst.run(m as u64).map_err(|e| e.to_string())?;
        by_m.push(per_iteration_bytes(&report, 3)?);
    }
    ensure(by_m.iter().all(|&b| b == by_m[0]), || format!("per-iteration bytes vary with m: {by_m:?}"))?;

    let mut by_n = Vec::new();
    for n in 1..=8usize {
        let data = random_data(&mut rng, n, 40, 0.05, 2);
        let y = format!("{}", 2 * n + 1);
        let inst = Instance { data, m1: 20, config: config("0.05", 2, 4, TEST_KEYBITS, bounds("1", &y, "10")) };
        let report = inst.run(n as u64).map_err(|e| e.to_string())?;
        by_n.push(per_iteration_bytes(&report, 2)? as f64);
    }
    // Least-squares fit of bytes = a n² + b n + c over n = 1..8.
    let rows: Vec<[f64; 3]> = (1..=8).map(|n| [(n * n) as f64, n as f64, 1.0]).collect();
    let coef = least_squares(&rows, &by_n);
    let ciphertext_bytes = f64::from(TEST_KEYBITS) * 2.0 / 8.0;
    ensure((coef[0] - ciphertext_bytes).abs() <= 0.1 * ciphertext_bytes, || {
        format!("quadratic coefficient {:.2} not within 10% of {ciphertext_bytes}", coef[0])
    })?;
    let worst = rows
        .iter()
        .zip(&by_n)
        .map(|(r, b)| ((coef[0] * r[0] + coef[1] * r[1] + coef[2]) - b).abs() / b)
        .fold(0.0, f64::max);
    ensure(worst <= 0.1, || format!("quadratic model misses by {:.1}%", worst * 100.0))?;
    Ok(format!(
        "bytes/iter {} for m=100,1000,10000; 5 messages/iter; fit a={:.2} b={:.2} c={:.2}",
        by_m[0], coef[0], coef[1], coef[2]
    ))
}

/// Solves the 3-column normal equations by Cramer's rule.
fn least_squares(rows: &[[f64; 3]], b: &[f64]) -> [f64; 3] {
    let mut a = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for (r, y) in rows.iter().zip(b) {
        for i in 0..3 {
            v[i] += r[i] * y;
            for j in 0..3 {
                a[i][j] += r[i] * r[j];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = v[i];
        }
        *slot = det(&m) / d;
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = seeded(6);
    let mut detail = Vec::new();
    for n in [2usize, 4, 8] {
        let data = random_data(&mut rng, n, 30, 0.05, 3);
        let y = format!("{}", 2 * n + 1);
        let inst = Instance { data, m1: 15, config: config("0.05", 3, 4, TEST_KEYBITS, bounds("1", &y, "10")) };
        let report = inst.run(60 + n as u64).map_err(|e| e.to_string())?;
        let nn = (n * n) as u64;
        ensure(report.bob.setup_counts.e == nn + n as u64, || {
            format!("n={n}: Bob setup used {} encryptions, expected {}", report.bob.setup_counts.e, nn + n as u64)
        })?;
        ensure(report.alice.round_counts.len() == 3 && report.bob.round_counts.len() == 3, || {
            format!("n={n}: expected 3 measured rounds")
        })?;
        for (i, (a, b)) in report.alice.round_counts.iter().zip(&report.bob.round_counts).enumerate() {
            ensure(a.me == nn, || format!("n={n} round {i}: Alice used {} ME, expected {nn}", a.me))?;
            ensure(b.d == n as u64, || format!("n={n} round {i}: Bob used {} D, expected {n}", b.d))?;
        }
        detail.push(format!("n={n} ok"));
    }
    Ok(detail.join(", "))
}

fn criterion_7(batch: &Batch) -> Outcome {
    ensure(batch.runs == 50, || format!("only {} honest runs completed", batch.runs))?;
    ensure(batch.violations == 0, || format!("{} violations in honest runs", batch.violations))?;
    let mut rng = seeded(7);
    let data = random_data(&mut rng, 2, 20, 0.1, 10);
    let inst = Instance { data, m1: 10, config: config("0.1", 10, 4, TEST_KEYBITS, bounds("1", "5", "10")) };
    let leak = TestHooks { leak_raw_row_at: Some(4), ..Default::default() };
    let err = inst.run_with(70, leak, TestHooks::default()).err();
    ensure(matches!(err, Some(Error::ExposureViolation(_))), || format!("injected leak gave {err:?}"))?;
    let reuse = TestHooks { reuse_gradient_pad_at: Some(4), ..Default::default() };
    let err = inst.run_with(71, TestHooks::default(), reuse).err();
    ensure(matches!(err, Some(Error::ExposureViolation(_))), || format!("pad reuse gave {err:?}"))?;
    Ok(format!("{} fields over 50 honest runs clean; leak and pad reuse both rejected", batch.fields))
}

fn criterion_8() -> Outcome {
    let mut rng = seeded(8);
    let data = random_data(&mut rng, 3, 50, 0.1, 20);
    let inst = Instance { data, m1: 21, config: config("0.1", 20, 6, TEST_KEYBITS, bounds("1", "7", "10")) };
    let local = inst.run(80).map_err(|e| e.to_string())?;

    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap();
    let (bob, alice) = inst.setups(80, TestHooks::default(), TestHooks::default());
    let alice_thread = thread::spawn(move || {
        let mut ch = TcpChannel::connect(addr, TIMEOUT)?;
        run_alice(alice.config, alice.data, alice.options, &mut ch)
    });
    let mut ch = TcpChannel::accept(&listener, TIMEOUT).map_err(|e| e.to_string())?;
    let bob_out = run_bob(bob.config, bob.data, bob.options, &mut ch).map_err(|e| e.to_string())?;
    let alice_out = alice_thread.join().unwrap().map_err(|e| e.to_string())?;
    ensure(bob_out.theta == local.bob.theta && alice_out.theta == local.alice.theta, || "θ differs between TCP and in-process".into())?;
    ensure(ch.meter() == &local.meter, || {
        format!("meter totals differ: tcp {:?} local {:?}", ch.meter().total(), local.meter.total())
    })?;

    let frames: Vec<Vec<u8>> = collect_messages(&inst, 81).iter().map(|m| serialize(m).unwrap()).collect();
    let mut rejected = 0;
    for _ in 0..100_000 {
        let frame = &frames[rng.gen_range(0..frames.len())];
        let input = mutate(&mut rng, frame);
        match panic::catch_unwind(|| deserialize(&input)) {
            Err(_) => return Err(format!("decoder panicked on {} bytes", input.len())),
            Ok(Ok(msg)) => ensure(serialize(&msg).ok().as_deref() == Some(&input[..]), || "non-canonical frame accepted".into())?,
            Ok(Err(Error::Frame { .. })) => rejected += 1,
            Ok(Err(other)) => return Err(format!("unstructured decode error {other:?}")),
        }
    }
    Ok(format!(
        "θ and {} bytes identical over TCP; 100000 fuzzed frames, {rejected} structured rejections, no panics",
        local.meter.total().bytes
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = seeded(9);
    let data = random_data(&mut rng, 2, 20, 0.1, 10);
    let mut inst = Instance { data, m1: 10, config: config("0.1", 10, 8, 64, bounds("1", "5", "10")) };
    let err = inst.run(90).err();
    ensure(matches!(err, Some(Error::KeyTooSmall(_))), || format!("keybits=64 gave {err:?}"))?;

    inst.config = config("0.1", 10, 4, TEST_KEYBITS, bounds("1", "5", "10"));
    let mut outlier = inst.clone();
    let (x, mut y): (Vec<Vec<BigRational>>, Vec<BigRational>) = (inst.data.x().to_vec(), inst.data.y().to_vec());
    y[15] = BigRational::from_integer(BigInt::from(1) << 200);
    outlier.data = Dataset::new(x, y).unwrap();
    let err = outlier.run(91).err();
    ensure(matches!(err, Some(Error::CapacityOverflow(_))), || format!("out-of-bound label gave {err:?}"))?;

    let mut tight = inst.clone();
    tight.config.bounds = bounds("1", "5", "0.01");
    let err = tight.run(92).err();
    ensure(matches!(err, Some(Error::CapacityOverflow(_))), || format!("θ exceeding its bound gave {err:?}"))?;
    Ok("key-too-small at setup; out-of-bound data and θ abort with capacity-overflow".into())
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let started = Instant::now();
    let batch = criterion_1_batch();
    let criteria: Vec<(&str, Check)> = vec![
        ("1 oracle bit-equality", Box::new(|| criterion_1(&batch))),
        ("2 paillier properties", Box::new(criterion_2)),
        ("3 fixed-point error bound", Box::new(criterion_3)),
        ("4 convergence trend", Box::new(criterion_4)),
        ("5 communication", Box::new(criterion_5)),
        ("6 cost-model counts", Box::new(criterion_6)),
        ("7 safe-exposure audit", Box::new(|| criterion_7(&batch))),
        ("8 transport conformance", Box::new(criterion_8)),
        ("9 capacity guard", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let result = panic::catch_unwind(panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail}) [{:.1}s]", t.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail}) [{:.1}s]", t.elapsed().as_secs_f64());
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
