//! Discrete-event simulation of the master/worker job stream.
//!
//! Jobs arrive at the master and are served one at a time in arrival
//! order. Each job runs its iterations back to back. At the start of an
//! iteration every worker with `kappa_p > 0` pays its communication delay
//! once, then runs its tasks one after another. With purging on, the
//! iteration ends at the `K`-th result and the remaining tasks are
//! dropped; with purging off it ends when every task has finished.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::codeopt::CodeParams;
use crate::error::{Error, Result};
use crate::stochastic::{keyed_stream, ArrivalModel, RandomStream, TaskTimeDistribution, WorkerProfile};

const ARRIVAL_STREAM: u64 = 0x4152_5256;
const TASK_STREAM: u64 = 0x5441_534B;

/// Share of `J` above which a backlog at the last arrival is reported.
pub const GROWING_QUEUE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub workers: Vec<WorkerProfile>,
    pub arrival: ArrivalModel,
    /// Tasks per worker; sums to `round(K * Omega)`.
    pub split: Vec<usize>,
    pub code: CodeParams,
    pub iterations: usize,
    pub jobs: usize,
    pub purging: bool,
    pub seed: u64,
    /// Keep per-worker busy intervals and finish times.
    #[serde(default = "default_trace")]
    pub trace: bool,
}

fn default_trace() -> bool {
    true
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("job count must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations per job must be >= 1".into()));
        }
        if self.workers.is_empty() {
            return Err(Error::InvalidArgument("no workers".into()));
        }
        if self.split.len() != self.workers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.workers.len(),
                actual: self.split.len(),
            });
        }
        self.arrival.validate()?;
        self.code.validate()?;
        for w in &self.workers {
            w.task_distribution(self.code.complexity).validate()?;
        }
        let n = self.code.total_tasks();
        let assigned: usize = self.split.iter().sum();
        if assigned != n {
            return Err(Error::InvalidArgument(format!(
                "split assigns {assigned} tasks, code needs round(K * Omega) = {n}"
            )));
        }
        if self.code.k > n {
            return Err(Error::InvalidArgument(format!("K = {} exceeds {n} tasks", self.code.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    JobArrival { job: usize },
    TaskComplete { worker: usize, job: usize, iteration: usize },
    IterationComplete { job: usize, iteration: usize },
    JobComplete { job: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobRecord {
    pub job: usize,
    pub arrival: f64,
    pub start: f64,
    pub completion: f64,
}

impl JobRecord {
    pub fn delay(&self) -> f64 {
        self.completion - self.arrival
    }
}

/// One busy stretch of a worker: from iteration start until its last
/// result or until the iteration was purged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusyInterval {
    pub start: f64,
    pub end: f64,
    pub job: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub job: usize,
    pub iteration: usize,
    pub start: f64,
    pub end: f64,
    pub results: usize,
    pub dispatched: usize,
    /// Per worker: time from iteration start until its last result, or
    /// `None` when it was idle or purged before finishing.
    pub worker_finish: Vec<Option<f64>>,
}

impl IterationRecord {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub jobs: Vec<JobRecord>,
    /// Durations of every iteration in service order.
    pub iteration_durations: Vec<f64>,
    /// Empty unless tracing was requested.
    pub iterations: Vec<IterationRecord>,
    /// Empty unless tracing was requested.
    pub busy: Vec<Vec<BusyInterval>>,
    pub tasks_purged: usize,
    /// Jobs waiting (not in service) when the last job arrived.
    pub backlog_at_last_arrival: usize,
    pub growing_queue: bool,
}

impl SimResult {
    pub fn delays(&self) -> Vec<f64> {
        self.jobs.iter().map(JobRecord::delay).collect()
    }
}

struct WorkerRun {
    rng: RandomStream,
    remaining: usize,
}

struct ActiveIteration {
    job: usize,
    iteration: usize,
    start: f64,
    results: usize,
    closing: bool,
    runs: Vec<Option<WorkerRun>>,
    finish: Vec<Option<f64>>,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    task_laws: Vec<TaskTimeDistribution>,
    heap: BinaryHeap<Event>,
    sequence: u64,
    total_tasks: usize,
}

impl Engine<'_> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event { time, sequence: self.sequence, kind });
        self.sequence += 1;
    }

    fn start_iteration(&mut self, now: f64, job: usize, iteration: usize) -> ActiveIteration {
        let p_count = self.cfg.workers.len();
        let mut runs = Vec::with_capacity(p_count);
        for p in 0..p_count {
            let kappa = self.cfg.split[p];
            if kappa == 0 {
                runs.push(None);
                continue;
            }
            let mut rng = keyed_stream(
                self.cfg.seed,
                &[TASK_STREAM, p as u64, job as u64, iteration as u64],
            );
            let first = self.task_laws[p].sample(&mut rng);
            let at = now + self.cfg.workers[p].comm_delay() + first;
            self.push(at, EventKind::TaskComplete { worker: p, job, iteration });
            runs.push(Some(WorkerRun { rng, remaining: kappa - 1 }));
        }
        ActiveIteration {
            job,
            iteration,
            start: now,
            results: 0,
            closing: false,
            runs,
            finish: vec![None; p_count],
        }
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let p_count = config.workers.len();
    let mut engine = Engine {
        cfg: config,
        task_laws: config
            .workers
            .iter()
            .map(|w| w.task_distribution(config.code.complexity))
            .collect(),
        heap: BinaryHeap::new(),
        sequence: 0,
        total_tasks: config.code.total_tasks(),
    };
    let arrival_law = config.arrival.sampler();
    let mut arrival_rng = keyed_stream(config.seed, &[ARRIVAL_STREAM]);

    let mut arrivals = vec![0.0; config.jobs];
    let mut waiting: VecDeque<usize> = VecDeque::new();
    let mut in_service: Option<(usize, f64)> = None;
    let mut active: Option<ActiveIteration> = None;

    let mut jobs = Vec::with_capacity(config.jobs);
    let mut durations = Vec::with_capacity(config.jobs * config.iterations);
    let mut records = Vec::new();
    let mut busy = vec![Vec::new(); if config.trace { p_count } else { 0 }];
    let mut purged = 0;
    let mut backlog = 0;

    let first = arrival_law.sample(&mut arrival_rng);
    engine.push(first, EventKind::JobArrival { job: 0 });

    while let Some(ev) = engine.heap.pop() {
        let now = ev.time;
        match ev.kind {
            EventKind::JobArrival { job } => {
                arrivals[job] = now;
                waiting.push_back(job);
                if job + 1 < config.jobs {
                    let gap = arrival_law.sample(&mut arrival_rng);
                    engine.push(now + gap, EventKind::JobArrival { job: job + 1 });
                } else {
                    backlog = waiting.len() - usize::from(in_service.is_none());
                }
                if in_service.is_none() {
                    let next = waiting.pop_front().expect("just queued");
                    in_service = Some((next, now));
                    active = Some(engine.start_iteration(now, next, 0));
                }
            }
            EventKind::TaskComplete { worker, job, iteration } => {
                let Some(it) = active.as_mut() else { continue };
                if it.job != job || it.iteration != iteration || it.closing {
                    continue;
                }
                it.results += 1;
                let run = it.runs[worker].as_mut().expect("worker holds tasks");
                if run.remaining > 0 {
                    run.remaining -= 1;
                    let s = engine.task_laws[worker].sample(&mut run.rng);
                    engine.push(now + s, EventKind::TaskComplete { worker, job, iteration });
                } else {
                    it.finish[worker] = Some(now - it.start);
                }
                let done = if config.purging {
                    it.results >= config.code.k
                } else {
                    it.results == engine.total_tasks
                };
                if done {
                    it.closing = true;
                    engine.push(now, EventKind::IterationComplete { job, iteration });
                }
            }
            EventKind::IterationComplete { job, iteration } => {
                let it = active.take().expect("iteration in progress");
                debug_assert_eq!((it.job, it.iteration), (job, iteration));
                purged += engine.total_tasks - it.results;
                durations.push(now - it.start);
                if config.trace {
                    for (p, run) in it.runs.iter().enumerate() {
                        if run.is_some() {
                            let end = it.finish[p].map_or(now, |f| it.start + f);
                            busy[p].push(BusyInterval { start: it.start, end, job, iteration });
                        }
                    }
                    records.push(IterationRecord {
                        job,
                        iteration,
                        start: it.start,
                        end: now,
                        results: it.results,
                        dispatched: engine.total_tasks,
                        worker_finish: it.finish,
                    });
                }
                if iteration + 1 < config.iterations {
                    active = Some(engine.start_iteration(now, job, iteration + 1));
                } else {
                    engine.push(now, EventKind::JobComplete { job });
                }
            }
            EventKind::JobComplete { job } => {
                let (_, start) = in_service.take().expect("job in service");
                jobs.push(JobRecord { job, arrival: arrivals[job], start, completion: now });
                if let Some(next) = waiting.pop_front() {
                    in_service = Some((next, now));
                    active = Some(engine.start_iteration(now, next, 0));
                }
            }
        }
    }

    Ok(SimResult {
        jobs,
        iteration_durations: durations,
        iterations: records,
        busy,
        tasks_purged: purged,
        backlog_at_last_arrival: backlog,
        growing_queue: backlog as f64 > GROWING_QUEUE_FRACTION * config.jobs as f64,
    })
}

/// Runs every named split with the same seed, so arrivals and the task
/// times of each `(worker, job, iteration, task)` coincide across splits.
pub fn compare_splits(config: &SimConfig, splits: &[(String, Vec<usize>)]) -> Result<Vec<(String, SimResult)>> {
    splits
        .iter()
        .map(|(name, split)| {
            let cfg = SimConfig { split: split.clone(), ..config.clone() };
            Ok((name.clone(), run_simulation(&cfg)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStatistics {
    pub mean: f64,
    pub second_moment: f64,
    /// Standard error of the mean, treating delays as independent.
    pub std_error: f64,
}

pub fn sample_statistics(xs: &[f64]) -> Result<DelayStatistics> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no completed jobs".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let second_moment = xs.iter().map(|x| x * x).sum::<f64>() / n;
    let std_error = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(DelayStatistics { mean, second_moment, std_error })
}

pub fn delay_statistics(result: &SimResult) -> Result<DelayStatistics> {
    sample_statistics(&result.delays())
}

/// Standard error of the mean from `batches` contiguous batch means.
/// Successive queueing delays are correlated, so this is the honest
/// error bar for a single long run.
pub fn batch_means_std_error(xs: &[f64], batches: usize) -> Result<f64> {
    if batches < 2 || xs.len() < batches {
        return Err(Error::InvalidArgument(format!(
            "need at least {batches} >= 2 observations for batch means, got {}",
            xs.len()
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    Ok(sample_statistics(&means)?.std_error)
}
