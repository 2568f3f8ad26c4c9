//! Push one store to a fresh aggregation server across the latency and loss
//! grid, on simulated time.
//!
//! ```text
//! cargo run -p neoward --example sync_under_loss
//! ```

use neoward_core::clock::{Clock, SimClock};
use neoward_core::store::{RecordKey, RecordKind, Store};
use neoward_core::sync::{store_digest, sync_once, AggregationServer, ImpairedLink, LocalLink, NetworkCondition, SyncConfig};
use std::sync::Arc;

fn main() {
    let cfg = SyncConfig { batch_size: 100, ..SyncConfig::default() };
    println!("{:>8} {:>5} {:>7} {:>6} {:>5} {:>9}  digest", "latency", "loss", "rounds", "retry", "lost", "sim time");
    for latency in [50, 500, 2000] {
        for loss in [0.0, 0.15, 0.30] {
            let store = Store::in_memory(&[1; 32]);
            for i in 0..1000 {
                store.put(RecordKey { kind: RecordKind::Vital, device_id: 1 + i % 4, record_id: i }, i * 1000, vec![i as u8; 26]).unwrap();
            }
            let server = Arc::new(AggregationServer::in_memory());
            let clock = SimClock::new(0);
            let cond = NetworkCondition::new(latency, latency, loss, latency + (loss * 100.0) as u64).unwrap();
            let mut link = ImpairedLink::new(LocalLink(server.clone()), cond, Arc::new(clock.clone()));
            let (mut rounds, mut retries) = (0, 0);
            while store.sync_cursor().unwrap() < store.head_cursor() {
                retries += sync_once(&store, &mut link, &cfg, &clock).unwrap().retries;
                rounds += 1;
            }
            let same = server.digest() == store_digest(&store, &RecordKind::ALL);
            println!(
                "{latency:>6}ms {loss:>5.2} {rounds:>7} {retries:>6} {:>5} {:>8.1}s  {}",
                link.requests_lost + link.responses_lost,
                clock.now_ms() as f64 / 1000.0,
                if same { "equal" } else { "DIFFERENT" }
            );
        }
    }
}
