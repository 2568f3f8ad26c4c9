//! Device-facing TCP listener.
//!
//! Devices write raw frames back to back. The first frame header names the
//! device; after that every frame goes through the device's own
//! `DeviceIngest` into its ring, one thread per connection. A single
//! [`Drainer`] thread empties the rings into the store whenever a
//! connection signals new data, and runs gateway housekeeping once a second.

use neoward_core::gateway::{Gateway, GatewayError};
use neoward_core::transport::{read_frame, FrameHeader, HEADER_LEN};
use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

/// Wake-up flag shared by connections and the drainer.
#[derive(Default)]
pub struct Wake {
    pending: Mutex<bool>,
    cv: Condvar,
}

impl Wake {
    pub fn notify(&self) {
        *self.pending.lock().expect("wake poisoned") = true;
        self.cv.notify_one();
    }

    fn wait(&self, timeout: Duration) {
        let mut p = self.pending.lock().expect("wake poisoned");
        if !*p {
            p = self.cv.wait_timeout(p, timeout).expect("wake poisoned").0;
        }
        *p = false;
    }
}

pub struct Drainer {
    stop: Arc<AtomicBool>,
    wake: Arc<Wake>,
    handle: Option<JoinHandle<()>>,
}

impl Drainer {
    pub fn spawn(gateway: Arc<Gateway>, tick_every: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let wake = Arc::new(Wake::default());
        let (s, w) = (stop.clone(), wake.clone());
        let handle = std::thread::Builder::new()
            .name("drainer".into())
            .spawn(move || {
                let mut last_tick = Instant::now();
                while !s.load(Ordering::Acquire) {
                    w.wait(Duration::from_millis(100));
                    gateway.drain();
                    if last_tick.elapsed() >= tick_every {
                        last_tick = Instant::now();
                        if let Err(e) = gateway.tick(gateway.clock().now_ms()) {
                            tracing::warn!(error = %e, "gateway tick failed");
                        }
                    }
                }
                gateway.drain();
            })
            .expect("spawn drainer");
        Drainer { stop, wake, handle: Some(handle) }
    }

    pub fn wake(&self) -> Arc<Wake> {
        self.wake.clone()
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.wake.notify();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Drainer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Accepts device connections until shut down.
pub struct DeviceServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl DeviceServer {
    pub fn bind(addr: SocketAddr, gateway: Arc<Gateway>, wake: Arc<Wake>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let s = stop.clone();
        let handle = std::thread::Builder::new().name("device-accept".into()).spawn(move || {
            for conn in listener.incoming() {
                if s.load(Ordering::Acquire) {
                    break;
                }
                let stream = match conn {
                    Ok(c) => c,
                    Err(e) => {
                        tracing::warn!(error = %e, "device accept failed");
                        continue;
                    }
                };
                let (gw, wk) = (gateway.clone(), wake.clone());
                let _ = std::thread::Builder::new().name("device-conn".into()).spawn(move || {
                    let peer = stream.peer_addr().ok();
                    if let Err(e) = serve_connection(stream, &gw, &wk) {
                        tracing::info!(?peer, error = %e, "device connection closed");
                    }
                });
            }
        })?;
        Ok(DeviceServer { addr, stop, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::Release);
        // unblock accept()
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for DeviceServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConnError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Transport(#[from] neoward_core::transport::TransportError),
}

/// Serve one device connection to completion.
pub fn serve_connection(stream: TcpStream, gateway: &Arc<Gateway>, wake: &Wake) -> Result<(), ConnError> {
    stream.set_nodelay(true).ok();
    let mut r = BufReader::new(stream);
    let Some(first) = read_frame(&mut r)? else {
        return Ok(());
    };
    let device_id = FrameHeader::parse(&first[..HEADER_LEN])?.device_id;
    let mut ingest = connect_with_retry(gateway, device_id)?;
    let mut frame = Some(first);
    loop {
        let bytes = match frame.take() {
            Some(f) => f,
            None => match read_frame(&mut r)? {
                Some(f) => f,
                None => return Ok(()),
            },
        };
        // Rejected frames are counted by the gateway; keep reading.
        if ingest.receive(&bytes).is_ok() {
            wake.notify();
        }
    }
}

/// A reconnecting device can race its old connection's teardown.
fn connect_with_retry(gateway: &Arc<Gateway>, device_id: u64) -> Result<neoward_core::gateway::DeviceIngest, GatewayError> {
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        match gateway.connect(device_id) {
            Err(GatewayError::Conflict(_)) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
            other => return other,
        }
    }
}
