//! Parallel reconstruction controller: a victim loop dispatching prime
//! slices to a fixed pool of worker threads ("thieves"), with cooperative
//! preemption and two-way result return.
//!
//! Concurrency contract: black-box applies run concurrently and share
//! nothing mutable; the builder, generator and statistics stay confined to
//! the victim thread; the per-packet preemption flag is the only shared
//! mutable state; worker results transfer ownership back to the victim.
//! The reconstructed value is independent of worker count, batch size and
//! preemption timing — only the apply counts vary.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::time::Instant;

use crate::blackbox::ResidueBlackBox;
use crate::builders::{Builder, Probe};
use crate::controller::RunStats;
use crate::error::{CraError, Result};
use crate::primes::{CoPrimeSlice, PrimeGenerator};

/// One unit of stolen work: a reserved prime slice plus the preemption flag
/// the victim may raise. Once the flag is set the worker returns within one
/// black-box apply.
#[derive(Debug, Clone)]
pub struct WorkPacket {
    pub slice: CoPrimeSlice,
    pub preempt_flag: Arc<AtomicBool>,
}

impl WorkPacket {
    pub fn new(slice: CoPrimeSlice) -> Self {
        WorkPacket {
            slice,
            preempt_flag: Arc::new(AtomicBool::new(false)),
        }
    }
}

/// Residues a worker actually computed, paired with the primes consumed.
/// `completed` is false when preemption cut the slice short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerResult {
    pub residues: Vec<Vec<u64>>,
    pub primes: Vec<u64>,
    pub completed: bool,
}

/// Carves `n_thieves` disjoint slices of `batch` primes each out of the
/// generator.
pub fn splitter(
    generator: &mut PrimeGenerator,
    n_thieves: usize,
    batch: usize,
) -> Result<Vec<WorkPacket>> {
    (0..n_thieves)
        .map(|_| Ok(WorkPacket::new(generator.make_slice(batch)?)))
        .collect()
}

/// Worker body: walks the slice, polling the preemption flag before each
/// prime, and returns the (partial) residue and prime lists.
pub fn thief_entry(packet: &WorkPacket, blackbox: &dyn ResidueBlackBox) -> WorkerResult {
    let mut residues = Vec::with_capacity(packet.slice.len());
    let mut primes = Vec::with_capacity(packet.slice.len());
    let mut completed = true;
    for &p in packet.slice.primes() {
        if packet.preempt_flag.load(Ordering::Acquire) {
            completed = false;
            break;
        }
        residues.push(blackbox.apply(p));
        primes.push(p);
    }
    WorkerResult {
        residues,
        primes,
        completed,
    }
}

/// Trips if builder methods are ever entered concurrently. The victim owns
/// the builder exclusively, so a trip means the confinement contract broke.
struct ReentrancyGuard<B> {
    builder: B,
    entered: AtomicBool,
}

impl<B> ReentrancyGuard<B> {
    fn new(builder: B) -> Self {
        ReentrancyGuard {
            builder,
            entered: AtomicBool::new(false),
        }
    }

    fn with<T>(&mut self, f: impl FnOnce(&mut B) -> T) -> T {
        if self.entered.swap(true, Ordering::AcqRel) {
            panic!("builder entered concurrently: exclusive-section discipline violated");
        }
        let out = f(&mut self.builder);
        self.entered.store(false, Ordering::Release);
        out
    }
}

/// Tuning knobs for [`run_parallel`].
#[derive(Debug, Clone, Copy)]
pub struct ParallelOptions {
    /// Worker threads in addition to the victim; 0 degenerates to a purely
    /// sequential loop.
    pub workers: usize,
    /// Primes per dispatched slice, and per victim round.
    pub batch: usize,
    /// Preempt-and-fold every this many victim rounds.
    pub sync_every: usize,
}

impl Default for ParallelOptions {
    fn default() -> Self {
        ParallelOptions {
            workers: 1,
            batch: 4,
            sync_every: 1,
        }
    }
}

struct WorkerLink {
    packets: Sender<WorkPacket>,
    results: Receiver<std::result::Result<WorkerResult, String>>,
    outstanding: Option<Arc<AtomicBool>>,
}

impl WorkerLink {
    fn recv(&mut self) -> Result<WorkerResult> {
        match self.results.recv() {
            Ok(Ok(res)) => Ok(res),
            Ok(Err(msg)) => Err(CraError::Worker(msg)),
            Err(_) => Err(CraError::Worker("worker exited unexpectedly".into())),
        }
    }
}

fn termination_check<B: Builder>(
    guard: &mut ReentrancyGuard<&mut B>,
    blackbox: &dyn ResidueBlackBox,
    generator: &mut PrimeGenerator,
    stats: &mut RunStats,
) -> Result<bool> {
    let keep_going = guard.with(|b| {
        b.not_terminated(&mut Probe {
            blackbox,
            generator,
            stats,
        })
    })?;
    Ok(!keep_going)
}

fn dispatch_round(
    links: &mut [WorkerLink],
    generator: &mut PrimeGenerator,
    batch: usize,
) -> Result<()> {
    for link in links.iter_mut() {
        let packet = WorkPacket::new(generator.make_slice(batch)?);
        link.outstanding = Some(packet.preempt_flag.clone());
        let _ = link.packets.send(packet);
    }
    Ok(())
}

/// Parallel variant of [`crate::controller::run`]. The victim processes its
/// own batch of primes per round; workers chew dispatched slices
/// concurrently. At each synchronization step outstanding workers are
/// preempted in order, their results folded into the builder inside the
/// victim's exclusive section, and fresh slices dispatched. Termination is
/// tested after every folded residue so checkpoint-style strategies never
/// step over their test points. On termination all workers are preempted
/// and drained; drained residues count as applies but are not folded.
pub fn run_parallel<B: Builder>(
    blackbox: &(dyn ResidueBlackBox + Sync),
    builder: &mut B,
    generator: &mut PrimeGenerator,
    options: ParallelOptions,
) -> Result<(B::Output, RunStats)> {
    let batch = options.batch.max(1);
    let sync_every = options.sync_every.max(1);
    let mut stats = RunStats::default();
    let start = Instant::now();
    builder.initialize();
    let mut guard = ReentrancyGuard::new(builder);

    let outcome: Result<()> = std::thread::scope(|scope| {
        let mut links: Vec<WorkerLink> = Vec::with_capacity(options.workers);
        for _ in 0..options.workers {
            let (packet_tx, packet_rx) = channel::<WorkPacket>();
            let (result_tx, result_rx) = channel();
            scope.spawn(move || {
                while let Ok(packet) = packet_rx.recv() {
                    let outcome = catch_unwind(AssertUnwindSafe(|| thief_entry(&packet, blackbox)))
                        .map_err(|e| panic_message(&e));
                    if result_tx.send(outcome).is_err() {
                        break;
                    }
                }
            });
            links.push(WorkerLink {
                packets: packet_tx,
                results: result_rx,
                outstanding: None,
            });
        }

        let mut drive = || -> Result<()> {
            let mut done = termination_check(&mut guard, blackbox, generator, &mut stats)?;
            if !done {
                dispatch_round(&mut links, generator, batch)?;
            }
            let mut rounds = 0usize;
            'main: while !done {
                // The victim works on its own list of moduli.
                for _ in 0..batch {
                    let p = generator.next_coprime()?;
                    let v = blackbox.apply(p);
                    stats.applies += 1;
                    guard.with(|b| b.update(&v, p, &mut stats))?;
                    done = termination_check(&mut guard, blackbox, generator, &mut stats)?;
                    if done {
                        break 'main;
                    }
                }

                rounds += 1;
                if !rounds.is_multiple_of(sync_every) {
                    continue;
                }

                // Synchronization step: preempt, collect in order, fold.
                for link in links.iter() {
                    if let Some(flag) = &link.outstanding {
                        flag.store(true, Ordering::Release);
                    }
                }
                for link in links.iter_mut() {
                    if link.outstanding.take().is_none() {
                        continue;
                    }
                    let result = link.recv()?;
                    stats.applies += result.primes.len() as u64;
                    if done {
                        continue; // drained, not folded
                    }
                    for (v, p) in result.residues.iter().zip(&result.primes) {
                        guard.with(|b| b.update(v, *p, &mut stats))?;
                        done = termination_check(&mut guard, blackbox, generator, &mut stats)?;
                        if done {
                            break;
                        }
                    }
                }
                if done {
                    break 'main;
                }
                dispatch_round(&mut links, generator, batch)?;
            }
            Ok(())
        };
        let drove = drive();

        // Preempt and drain whatever is still in flight, successful or not.
        for link in links.iter() {
            if let Some(flag) = &link.outstanding {
                flag.store(true, Ordering::Release);
            }
        }
        let mut drain_err = None;
        for link in links.iter_mut() {
            if link.outstanding.take().is_some() {
                match link.recv() {
                    Ok(result) => stats.applies += result.primes.len() as u64,
                    Err(e) => drain_err = drain_err.or(Some(e)),
                }
            }
        }
        drove.and(match drain_err {
            Some(e) => Err(e),
            None => Ok(()),
        })
    });
    outcome?;

    let out = guard.with(|b| b.reconstruct(&mut stats))?;
    stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((out, stats))
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}
