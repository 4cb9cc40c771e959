//! Sources: rate-controlled replay of a record iterator, and a line-based
//! TCP listener. Both assign `seq` at ingestion.

use std::io::{self, BufRead, BufReader};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crate::dataset::{ReadItem, Record};
use crate::types::Tuple;

use super::config::{ClockMode, Rate};

pub(crate) fn wall_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// A tuple plus the instant it was ingested, for latency measurement.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub tuple: Tuple,
    pub at: Instant,
}

/// Shared counters updated by the source.
#[derive(Debug, Default)]
pub struct SourceStats {
    pub ingested: AtomicU64,
    pub malformed: AtomicU64,
}

/// Stamps records with seq and ts.
#[derive(Debug)]
pub struct Stamper {
    next_seq: u64,
    clock: ClockMode,
}

impl Stamper {
    pub fn new(clock: ClockMode) -> Self {
        Stamper { next_seq: 0, clock }
    }

    pub fn stamp(&mut self, record: Record) -> Ingested {
        let seq = self.next_seq;
        self.next_seq += 1;
        let ts = match self.clock {
            ClockMode::Wall => wall_ms(),
            ClockMode::Logical => seq,
        };
        Ingested {
            tuple: Tuple {
                ts,
                seq,
                text: record.text,
                true_label: record.label,
            },
            at: Instant::now(),
        }
    }
}

/// Sleeps so that the i-th emitted item leaves no earlier than
/// `start + i / rate`.
#[derive(Debug)]
pub struct Pacer {
    rate: Rate,
    start: Instant,
    emitted: u64,
}

impl Pacer {
    pub fn new(rate: Rate) -> Self {
        Pacer {
            rate,
            start: Instant::now(),
            emitted: 0,
        }
    }

    pub fn wait(&mut self) {
        if let Rate::PerSecond(r) = self.rate {
            let due = self.start + Duration::from_secs_f64(self.emitted as f64 / r);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        self.emitted += 1;
    }
}

/// Replays records into `emit` at the requested rate. `emit` returning
/// false stops the replay (downstream gone). Malformed rows are counted and
/// skipped; an I/O error ends the replay with that error.
pub fn replay<I, F>(
    items: I,
    rate: Rate,
    clock: ClockMode,
    limit: Option<u64>,
    shutdown: &AtomicBool,
    stats: &SourceStats,
    mut emit: F,
) -> io::Result<()>
where
    I: IntoIterator<Item = ReadItem>,
    F: FnMut(Ingested) -> bool,
{
    let mut stamper = Stamper::new(clock);
    let mut pacer = Pacer::new(rate);
    for item in items {
        if shutdown.load(Ordering::Relaxed) {
            break;
        }
        if limit.is_some_and(|l| stats.ingested.load(Ordering::Relaxed) >= l) {
            break;
        }
        match item? {
            Ok(record) => {
                pacer.wait();
                stats.ingested.fetch_add(1, Ordering::Relaxed);
                if !emit(stamper.stamp(record)) {
                    break;
                }
            }
            Err(e) => {
                log::debug!("skipping malformed input: {e}");
                stats.malformed.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
    Ok(())
}

const POLL: Duration = Duration::from_millis(50);

/// Accepts connections on `listener` one at a time and emits every
/// non-blank line as a tuple, until `shutdown` is set. A connection being
/// read is drained to EOF or shutdown before the next one is accepted.
pub fn socket_source<F>(
    listener: TcpListener,
    clock: ClockMode,
    shutdown: &AtomicBool,
    stats: &SourceStats,
    mut emit: F,
) -> io::Result<()>
where
    F: FnMut(Ingested) -> bool,
{
    listener.set_nonblocking(true)?;
    let mut stamper = Stamper::new(clock);
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("accepted connection from {peer}");
                if !read_connection(stream, &mut stamper, shutdown, stats, &mut emit)? {
                    return Ok(());
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Returns false when downstream is gone.
fn read_connection<F>(
    stream: TcpStream,
    stamper: &mut Stamper,
    shutdown: &AtomicBool,
    stats: &SourceStats,
    emit: &mut F,
) -> io::Result<bool>
where
    F: FnMut(Ingested) -> bool,
{
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => {
                if !buf.is_empty() && !handle_line(&buf, stamper, stats, emit) {
                    return Ok(false);
                }
                return Ok(true);
            }
            Ok(_) => {
                if buf.last() == Some(&b'\n') {
                    if !handle_line(&buf, stamper, stats, emit) {
                        return Ok(false);
                    }
                    buf.clear();
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if shutdown.load(Ordering::Relaxed) {
                    return Ok(true);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => return Ok(true),
            Err(e) => return Err(e),
        }
    }
}

fn handle_line<F>(bytes: &[u8], stamper: &mut Stamper, stats: &SourceStats, emit: &mut F) -> bool
where
    F: FnMut(Ingested) -> bool,
{
    let Ok(line) = std::str::from_utf8(bytes) else {
        stats.malformed.fetch_add(1, Ordering::Relaxed);
        return true;
    };
    let text = line.trim_end_matches(['\n', '\r']);
    if text.trim().is_empty() {
        return true;
    }
    stats.ingested.fetch_add(1, Ordering::Relaxed);
    emit(stamper.stamp(Record {
        label: None,
        text: text.to_string(),
        fields: Vec::new(),
    }))
}

/// Round-robin assignment of a seq to one of `n` workers.
pub fn partition(seq: u64, n: usize) -> usize {
    (seq % n as u64) as usize
}
