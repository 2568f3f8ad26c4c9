//! One vitals batch on the wire, then what a receiver says about damaged copies.
//!
//! ```text
//! cargo run -p neoward --example wire_frame
//! ```

use neoward_core::transport::{encode_batch, FleetKey, FrameSender, FrameType, Receiver, BASELINE_BYTES_PER_SAMPLE};
use neoward_core::vitalsim::{generate_sample, Scenario};

fn hexdump(bytes: &[u8]) {
    for (i, row) in bytes.chunks(16).enumerate() {
        let hex: Vec<String> = row.iter().map(|b| format!("{b:02x}")).collect();
        println!("  {:04x}  {}", i * 16, hex.join(" "));
    }
}

fn main() {
    let fleet = FleetKey([0x42; 32]);
    let s = Scenario::stable(60, 1);
    let batch: Vec<_> = (0..5).map(|i| generate_sample(&s, 7, s.start_ms + i * 1000).unwrap()).collect();
    let plain = encode_batch(&batch).unwrap();
    println!("5 samples -> {} payload bytes ({} uncompressed)", plain.len(), 5 * BASELINE_BYTES_PER_SAMPLE);

    let mut tx = FrameSender::new(7, fleet.device_key(7));
    let frame = tx.build(FrameType::VitalsBatch, &plain).unwrap();
    println!("frame, {} bytes:", frame.len());
    hexdump(&frame);

    let mut rx = Receiver::new(fleet.clone());
    let ok = rx.accept(&frame).unwrap();
    println!("accepted seq {} from device {}", ok.seq, ok.device_id);
    println!("replayed: {}", rx.accept(&frame).unwrap_err());

    for (at, what) in [(0, "magic"), (3, "frame type"), (13, "seq"), (30, "ciphertext"), (frame.len() - 1, "crc")] {
        let mut bad = frame.clone();
        bad[at] ^= 0x04;
        let e = Receiver::new(fleet.clone()).accept(&bad).unwrap_err();
        println!("flip in {what:<10} -> {:?}: {e}", e.reject_kind());
    }
}
