//! Instance generation and run helpers shared by the integration tests.
#![allow(dead_code)]

use std::time::Duration;

use ppls_core::fixedpoint::{ScalePlan, ScaledInt};
use ppls_core::oracle::{gd_fixedpoint, gd_real_with, Dataset};
use ppls_core::protocol::{
    run_local, Bounds, ExactRational, PartyConfig, PartyOptions, PartySetup, RunReport, SessionParams, TestHooks,
    Theta0,
};
use ppls_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const TEST_KEYBITS: u32 = 512;
pub const TIMEOUT: Duration = Duration::from_secs(120);

pub fn rational(text: &str) -> ExactRational {
    ExactRational::parse_decimal(text).expect("decimal literal")
}

pub fn bounds(x: &str, y: &str, theta: &str) -> Bounds {
    Bounds { x: rational(x), y: rational(y), theta: rational(theta) }
}

pub fn config(alpha: &str, iterations: u32, s: u32, keybits: u32, bounds: Bounds) -> PartyConfig {
    PartyConfig {
        alpha: rational(alpha),
        iterations,
        scale_plan: ScalePlan::new(s, s),
        kappa: 40,
        keybits,
        theta0: Theta0::Zero,
        bounds,
    }
}

/// A dataset split between Bob (first `m1` rows) and Alice, with the
/// configuration both sides will propose.
#[derive(Debug, Clone)]
pub struct Instance {
    pub data: Dataset,
    pub m1: usize,
    pub config: PartyConfig,
}

impl Instance {
    pub fn parts(&self) -> (Dataset, Dataset) {
        self.data.split_at(self.m1).expect("valid split")
    }

    pub fn params(&self) -> SessionParams {
        let (bob, alice) = self.parts();
        let pb = self.config.proposal(bob.n(), bob.m()).unwrap();
        let pa = self.config.proposal(alice.n(), alice.m()).unwrap();
        SessionParams::negotiate(&pb, &pa).unwrap()
    }

    pub fn oracle(&self) -> Vec<ScaledInt> {
        gd_fixedpoint(&self.data, &self.params()).expect("oracle run")
    }

    pub fn setups(&self, seed: u64, bob_hooks: TestHooks, alice_hooks: TestHooks) -> (PartySetup, PartySetup) {
        let (bob, alice) = self.parts();
        let bob = PartySetup {
            config: self.config.clone(),
            data: bob,
            options: PartyOptions { seed: Some(seed), keypair: None, hooks: bob_hooks },
        };
        let alice = PartySetup {
            config: self.config.clone(),
            data: alice,
            options: PartyOptions { seed: Some(seed ^ 0x5a5a_5a5a), keypair: None, hooks: alice_hooks },
        };
        (bob, alice)
    }

    pub fn run_with(&self, seed: u64, bob_hooks: TestHooks, alice_hooks: TestHooks) -> Result<RunReport> {
        let (bob, alice) = self.setups(seed, bob_hooks, alice_hooks);
        run_local(bob, alice, TIMEOUT)
    }

    pub fn run(&self, seed: u64) -> Result<RunReport> {
        self.run_with(seed, TestHooks::default(), TestHooks::default())
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Features uniform in [-1, 1] with three decimals, labels from a random
/// θ* in [-2, 2] plus small noise. Redrawn until the real-valued descent
/// stays well inside the declared θ bound.
pub fn random_data(rng: &mut ChaCha20Rng, n: usize, m: usize, alpha: f64, iterations: u64) -> Dataset {
    loop {
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| round3(rng.gen_range(-1.0..1.0))).collect()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| round3(row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1)))
            .collect();
        let data = Dataset::from_f64(&x, &y).unwrap();
        let mut peak = 0.0f64;
        let ok = gd_real_with(&data, alpha, iterations, &vec![0.0; n], |_, t| {
            peak = t.iter().fold(peak, |p, v| p.max(v.abs()));
        })
        .is_ok();
        if ok && peak < 5.0 {
            return data;
        }
    }
}

/// The criterion-1 sampling: n in {1,2,3,5}, m in 10..=200, random split,
/// s in {4,6}, α in {0.05, 0.1}, N in {50, 200}.
pub fn random_instance(rng: &mut ChaCha20Rng) -> Instance {
    let n = [1, 2, 3, 5][rng.gen_range(0..4)];
    let m = rng.gen_range(10..=200);
    let m1 = rng.gen_range(1..m);
    let s = [4, 6][rng.gen_range(0..2)];
    let alpha = ["0.05", "0.1"][rng.gen_range(0..2)];
    let iterations = [50, 200][rng.gen_range(0..2)];
    let data = random_data(rng, n, m, alpha.parse().unwrap(), iterations as u64);
    let y_bound = format!("{}", 2 * n + 1);
    Instance { data, m1, config: config(alpha, iterations, s, TEST_KEYBITS, bounds("1", &y_bound, "10")) }
}

pub fn seeded(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn mantissas(theta: &[ScaledInt]) -> Vec<num_bigint::BigInt> {
    theta.iter().map(|t| t.mantissa().clone()).collect()
}

/// Steps both state machines on one thread and returns every message in
/// send order.
pub fn collect_messages(inst: &Instance, seed: u64) -> Vec<ppls_core::transport::ProtocolMessage> {
    use ppls_core::protocol::{Alice, Bob};
    let (b, a) = inst.setups(seed, TestHooks::default(), TestHooks::default());
    let mut bob = Bob::new(b.config, b.data, b.options);
    let mut alice = Alice::new(a.config, a.data, a.options);
    bob.start().unwrap();
    alice.start().unwrap();
    let mut log = Vec::new();
    let mut to_alice: std::collections::VecDeque<_> = bob.take_outbox().into();
    let mut to_bob = std::collections::VecDeque::new();
    while !(bob.is_done() && alice.is_done()) {
        if let Some(msg) = to_alice.pop_front() {
            log.push(msg.clone());
            alice.handle(msg).unwrap();
            to_bob.extend(alice.take_outbox());
        } else if let Some(msg) = to_bob.pop_front() {
            log.push(msg.clone());
            bob.handle(msg).unwrap();
            to_alice.extend(bob.take_outbox());
        } else {
            panic!("both parties idle before finishing");
        }
    }
    log
}

/// Mutates a valid frame: byte flips, truncation, extension, or splices
/// into the header fields.
pub fn mutate(rng: &mut ChaCha20Rng, frame: &[u8]) -> Vec<u8> {
    let mut out = frame.to_vec();
    match rng.gen_range(0..6) {
        0 => {
            for _ in 0..rng.gen_range(1..8) {
                let i = rng.gen_range(0..out.len());
                out[i] ^= 1 << rng.gen_range(0..8);
            }
        }
        1 => out.truncate(rng.gen_range(0..out.len())),
        2 => out.extend((0..rng.gen_range(1..16)).map(|_| rng.gen::<u8>())),
        3 => {
            let i = rng.gen_range(0..out.len().min(ppls_core::transport::HEADER_LEN));
            out[i] = rng.gen();
        }
        4 => {
            let i = rng.gen_range(0..out.len());
            out[i] = rng.gen();
        }
        _ => {
            let len = rng.gen_range(0..64);
            out = (0..len).map(|_| rng.gen()).collect();
            if len >= 4 {
                out[..4].copy_from_slice(&ppls_core::transport::MAGIC);
            }
        }
    }
    out
}
