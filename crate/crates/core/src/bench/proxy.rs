use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tracing::{debug, warn};

/// A TCP relay that holds every chunk of bytes for a one-way delay plus
/// |N(0, jitter)| before forwarding it, in each direction independently.
///
/// Release times never decrease within a direction, so byte order is kept.
/// Relaying runs on plain threads, whose sleeps are far finer than the
/// async timer wheel.
pub struct DelayProxy {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<thread::JoinHandle<()>>,
}

impl DelayProxy {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        for s in self.streams.lock().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for DelayProxy {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Starts a proxy on `listen` forwarding to `upstream`. When the upstream
/// cannot be reached the client connection is closed immediately.
pub fn delay_proxy(
    listen: &str,
    upstream: &str,
    one_way_delay_ms: f64,
    jitter_ms: f64,
    seed: u64,
) -> std::io::Result<DelayProxy> {
    if !(one_way_delay_ms >= 0.0 && jitter_ms >= 0.0) {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "delay and jitter must be non-negative"));
    }
    let upstream = upstream
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "upstream address did not resolve"))?;
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let streams: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
    let shape = Shape { delay: Duration::from_secs_f64(one_way_delay_ms / 1000.0), jitter_ms };

    let accept = {
        let stop = stop.clone();
        let streams = streams.clone();
        let conn_counter = AtomicU64::new(0);
        thread::Builder::new().name("sdm-proxy-accept".into()).spawn(move || {
            for client in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(client) = client else { continue };
                let server = match TcpStream::connect_timeout(&upstream, Duration::from_secs(2)) {
                    Ok(s) => s,
                    Err(e) => {
                        warn!(%upstream, error = %e, "upstream unreachable; dropping client");
                        let _ = client.shutdown(Shutdown::Both);
                        continue;
                    }
                };
                let n = conn_counter.fetch_add(1, Ordering::Relaxed);
                let _ = client.set_nodelay(true);
                let _ = server.set_nodelay(true);
                if let (Ok(c2), Ok(s2)) = (client.try_clone(), server.try_clone()) {
                    streams.lock().extend([c2, s2]);
                }
                for (dir, (from, to)) in [(client.try_clone(), server.try_clone()), (server.try_clone(), client.try_clone())]
                    .into_iter()
                    .enumerate()
                {
                    if let (Ok(from), Ok(to)) = (from, to) {
                        let rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2 * n + dir as u64));
                        relay(from, to, shape, rng);
                    }
                }
            }
            debug!("proxy accept loop stopped");
        })?
    };
    Ok(DelayProxy { addr, stop, streams, accept: Some(accept) })
}

#[derive(Clone, Copy)]
struct Shape {
    delay: Duration,
    jitter_ms: f64,
}

/// One direction: a reader thread stamps chunks with release times, a
/// writer thread sleeps until each is due.
fn relay(mut from: TcpStream, mut to: TcpStream, shape: Shape, mut rng: ChaCha8Rng) {
    let (tx, rx) = mpsc::channel::<(Instant, Vec<u8>)>();
    let normal = Normal::new(0.0, shape.jitter_ms.max(0.0)).ok();
    let _ = thread::Builder::new().name("sdm-proxy-read".into()).spawn(move || {
        let mut buf = vec![0u8; 16 * 1024];
        let mut last = Instant::now();
        loop {
            let n = match from.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            let extra = match normal {
                Some(d) if shape.jitter_ms > 0.0 => Duration::from_secs_f64(d.sample(&mut rng).abs() / 1000.0),
                _ => Duration::ZERO,
            };
            let release = (Instant::now() + shape.delay + extra).max(last);
            last = release;
            if tx.send((release, buf[..n].to_vec())).is_err() {
                break;
            }
        }
    });
    let _ = thread::Builder::new().name("sdm-proxy-write".into()).spawn(move || {
        for (release, chunk) in rx {
            let now = Instant::now();
            if release > now {
                thread::sleep(release - now);
            }
            if to.write_all(&chunk).is_err() {
                break;
            }
        }
        let _ = to.shutdown(Shutdown::Write);
    });
}
