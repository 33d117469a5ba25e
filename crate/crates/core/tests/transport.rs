mod common;

use std::net::TcpListener;
use std::panic;
use std::thread;

use common::*;
use ppls_core::protocol::{run_alice, run_bob};
use ppls_core::transport::{deserialize, serialize, Channel, TcpChannel};
use ppls_core::Error;

fn small() -> Instance {
    let mut rng = seeded(21);
    let data = random_data(&mut rng, 3, 30, 0.1, 10);
    Instance { data, m1: 17, config: config("0.1", 10, 4, TEST_KEYBITS, bounds("1", "7", "10")) }
}

#[test]
fn tcp_and_in_process_agree() {
    let inst = small();
    let local = inst.run(42).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (bob, alice) = inst.setups(42, Default::default(), Default::default());
    let alice_thread = thread::spawn(move || {
        let mut ch = TcpChannel::connect(addr, TIMEOUT).unwrap();
        run_alice(alice.config, alice.data, alice.options, &mut ch).map(|o| (o, ch.meter().clone()))
    });
    let mut ch = TcpChannel::accept(&listener, TIMEOUT).unwrap();
    let bob_out = run_bob(bob.config, bob.data, bob.options, &mut ch).unwrap();
    let (alice_out, alice_meter) = alice_thread.join().unwrap().unwrap();

    assert_eq!(bob_out.theta, local.bob.theta);
    assert_eq!(alice_out.theta, local.alice.theta);
    assert_eq!(ch.meter().total(), local.meter.total());
    assert_eq!(alice_meter.total(), local.meter.total());
    assert_eq!(ch.meter(), &local.meter);
}

#[test]
fn real_frames_round_trip() {
    for msg in collect_messages(&small(), 5) {
        let bytes = serialize(&msg).unwrap();
        assert_eq!(deserialize(&bytes).unwrap(), msg);
    }
}

#[test]
fn mutated_frames_give_structured_errors() {
    let frames: Vec<Vec<u8>> = collect_messages(&small(), 6).iter().map(|m| serialize(m).unwrap()).collect();
    let mut rng = seeded(77);
    for _ in 0..5000 {
        let frame = &frames[rand::Rng::gen_range(&mut rng, 0..frames.len())];
        let input = mutate(&mut rng, frame);
        let result = panic::catch_unwind(|| deserialize(&input));
        match result {
            Err(_) => panic!("decoder panicked on {input:02x?}"),
            Ok(Ok(msg)) => assert_eq!(serialize(&msg).unwrap(), input, "accepted a non-canonical frame"),
            Ok(Err(Error::Frame { .. })) => {}
            Ok(Err(other)) => panic!("unstructured error {other:?}"),
        }
    }
}
