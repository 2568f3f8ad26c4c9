mod common;

use common::*;
use neoward::devices::{DeviceServer, Drainer};
use neoward_core::clock::{ScaledClock, SimClock, SystemClock};
use neoward_core::store::RecordKind;
use neoward_core::transport::{FrameSink, TcpFrameSink};
use neoward_core::vitalsim::{DeviceConfig, Scenario, SimDevice};
use std::io::Write;
use std::net::TcpStream;
use std::time::{Duration, Instant};

fn wait_for(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(10));
    }
}

#[test]
fn simulated_devices_stream_over_tcp() {
    let gw = gateway(&SimClock::new(NOW_MS));
    let drainer = Drainer::spawn(gw.clone(), Duration::from_millis(200));
    let server = DeviceServer::bind("127.0.0.1:0".parse().unwrap(), gw.clone(), drainer.wake()).unwrap();
    let addr = server.local_addr();
    let handles: Vec<_> = (1..=4u64)
        .map(|id| {
            std::thread::spawn(move || {
                let mut sink = TcpFrameSink::connect(addr).unwrap();
                let mut cfg = DeviceConfig::new(id, 2);
                cfg.realtime = true;
                let s = Scenario::stable(120, id);
                SimDevice::new(cfg, FLEET.device_key(id)).unwrap().run(&s, &mut sink, &ScaledClock::new(200.0)).unwrap()
            })
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap().samples, 120);
    }
    wait_for(|| gw.store().count(RecordKind::Vital) == 480);
    let st = gw.stats();
    assert_eq!((st.samples, st.rejects, st.ring_dropped), (480, 0, 0));
    assert!(st.latency.p99_ms < 50.0, "{:?}", st.latency);
    server.shutdown();
    drainer.shutdown();
}

#[test]
fn garbage_and_forged_frames_do_not_land() {
    let gw = gateway(&SimClock::new(NOW_MS));
    let drainer = Drainer::spawn(gw.clone(), Duration::from_millis(200));
    let server = DeviceServer::bind("127.0.0.1:0".parse().unwrap(), gw.clone(), drainer.wake()).unwrap();
    let mut raw = TcpStream::connect(server.local_addr()).unwrap();
    raw.write_all(&[0xAB; 64]).unwrap();
    drop(raw);

    // a frame sealed under the wrong key passes framing but fails authentication
    let wrong = neoward_core::transport::FleetKey([1; 32]);
    let mut sink = TcpFrameSink::connect(server.local_addr()).unwrap();
    SimDevice::new(DeviceConfig::new(3, 1), wrong.device_key(3)).unwrap().run(&Scenario::stable(5, 1), &mut sink, &SystemClock).unwrap();
    wait_for(|| gw.stats().rejects >= 5);
    assert_eq!(gw.store().count(RecordKind::Vital), 0);
    server.shutdown();
    drainer.shutdown();
}

#[test]
fn device_can_reconnect() {
    let gw = gateway(&SimClock::new(NOW_MS));
    let drainer = Drainer::spawn(gw.clone(), Duration::from_millis(200));
    let server = DeviceServer::bind("127.0.0.1:0".parse().unwrap(), gw.clone(), drainer.wake()).unwrap();
    let mut dev = SimDevice::new(DeviceConfig::new(8, 1), FLEET.device_key(8)).unwrap();
    let mut s = Scenario::stable(10, 2);
    let mut sink = TcpFrameSink::connect(server.local_addr()).unwrap();
    dev.run(&s, &mut sink, &SystemClock).unwrap();
    drop(sink);
    s.start_ms += 10_000;
    let mut sink = TcpFrameSink::connect(server.local_addr()).unwrap();
    dev.run(&s, &mut sink, &SystemClock).unwrap();
    sink.reconnect().unwrap();
    wait_for(|| gw.store().count(RecordKind::Vital) == 20);
    assert_eq!(gw.stats().rejects, 0);
    server.shutdown();
    drainer.shutdown();
}
