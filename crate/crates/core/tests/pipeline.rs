use neoward_core::clock::SimClock;
use neoward_core::store::{RecordKey, RecordKind, Store};
use neoward_core::transport::{decode_batch, encode_batch, memory_channel, FleetKey, FrameType, Receiver, RejectKind};
use neoward_core::vitalsim::{DeviceConfig, Scenario, SimDevice};
use neoward_core::VitalSample;

const FLEET: FleetKey = FleetKey([9; 32]);

fn received(dev: u64, secs: u64, interval: u8) -> Vec<VitalSample> {
    let (mut sink, source) = memory_channel();
    let mut d = SimDevice::new(DeviceConfig::new(dev, interval), FLEET.device_key(dev)).unwrap();
    d.run(&Scenario::stable(secs, dev), &mut sink, &SimClock::new(0)).unwrap();
    let mut rx = Receiver::new(FLEET);
    let mut out = Vec::new();
    for bytes in source.drain() {
        let f = rx.accept(&bytes).unwrap();
        if f.frame_type == FrameType::VitalsBatch {
            out.extend(decode_batch(&f.payload, f.device_id).unwrap());
        }
    }
    out
}

#[test]
fn device_to_disk_and_back() {
    let samples = received(17, 300, 5);
    assert_eq!(samples.len(), 300);
    assert!(samples.windows(2).all(|w| w[1].t_ms - w[0].t_ms == 1000));
    assert!(samples.iter().all(|s| s.device_id == 17));

    let dir = tempfile::tempdir().unwrap();
    let key = [3; 32];
    {
        let store = Store::open(dir.path(), &key).unwrap();
        for (i, s) in samples.iter().enumerate() {
            store.put(RecordKey { kind: RecordKind::Vital, device_id: 17, record_id: i as u64 }, s.t_ms, encode_batch(&[*s]).unwrap()).unwrap();
        }
        store.sync_all().unwrap();
    }
    let store = Store::open(dir.path(), &key).unwrap();
    assert_eq!(store.count(RecordKind::Vital), 300);
    let back: Vec<VitalSample> = store.range(RecordKind::Vital, 17, 0, u64::MAX).iter().flat_map(|r| decode_batch(&r.payload, 17).unwrap()).collect();
    assert_eq!(back, samples);
}

#[test]
fn replayed_and_cross_device_frames_are_refused() {
    let (mut sink, source) = memory_channel();
    let mut d = SimDevice::new(DeviceConfig::new(5, 1), FLEET.device_key(5)).unwrap();
    d.run(&Scenario::stable(4, 5), &mut sink, &SimClock::new(0)).unwrap();
    let frames = source.drain();
    let mut rx = Receiver::new(FLEET);
    for f in &frames {
        rx.accept(f).unwrap();
    }
    let replay = rx.accept(&frames[frames.len() - 1]).unwrap_err();
    assert_eq!(replay.reject_kind(), RejectKind::Replay);

    // rewriting the device id breaks the CRC before the key is even derived
    let mut forged = frames[0].clone();
    forged[4..12].copy_from_slice(&6u64.to_le_bytes());
    assert_eq!(Receiver::new(FLEET).accept(&forged).unwrap_err().reject_kind(), RejectKind::Corruption);
}
