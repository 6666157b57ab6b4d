use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::thread;

use coded_stream::analytics::{self, iteration_moments, lower_bound, queue_stats, QueueStats};
use coded_stream::codeopt::{enumerate_candidates, optimize_code, CodeParams};
use coded_stream::export::{read_matrix, write_candidates, write_delays, write_matrix, write_table, write_trace};
use coded_stream::gradcode::{
    decode_coefficients, fractional_repetition_code, validate_code, GradientCodeMatrix,
};
use coded_stream::loadsplit::{optimal_split, LoadSplit, SplitConfig};
use coded_stream::simulator::{batch_means_std_error, delay_statistics, run_simulation, SimConfig, SimResult};
use coded_stream::stochastic::{ArrivalModel, WorkerProfile};

use crate::config::{Experiment, SplitChoice, SplitKind};
use crate::CliError;

const SPLIT_TOLERANCE: f64 = 1e-12;
const BATCHES: usize = 20;

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(out)?;
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_summary(out: &Path, rows: &[(&str, String)]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
    write_table(create(out, "summary.csv")?, &["metric", "value"], &rows)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn optimal(workers: &[WorkerProfile], code: &CodeParams, gamma: f64) -> Result<LoadSplit, CliError> {
    let cfg = SplitConfig::new(gamma, code.total_tasks(), SPLIT_TOLERANCE)?;
    Ok(optimal_split(workers, code.complexity, &cfg)?)
}

fn chosen_split(exp: &Experiment, code: &CodeParams) -> Result<LoadSplit, CliError> {
    let workers = exp.require_workers()?;
    match &exp.split {
        SplitChoice::Named(SplitKind::Optimal) => optimal(workers, code, exp.gamma),
        SplitChoice::Named(SplitKind::Uniform) => Ok(LoadSplit::uniform(workers.len(), code.total_tasks())?),
        SplitChoice::Explicit(kappa) => {
            let total: usize = kappa.iter().sum();
            if total != code.total_tasks() {
                return Err(CliError::Config(format!(
                    "explicit split assigns {total} tasks, code needs {}",
                    code.total_tasks()
                )));
            }
            Ok(LoadSplit::explicit(kappa.clone()))
        }
    }
}

fn sim_config(exp: &Experiment, code: CodeParams, split: &LoadSplit, trace: bool) -> Result<SimConfig, CliError> {
    Ok(SimConfig {
        workers: exp.require_workers()?.to_vec(),
        arrival: exp.require_arrival()?,
        split: split.kappa_int.clone(),
        code,
        iterations: exp.sim.iterations,
        jobs: exp.sim.jobs,
        purging: exp.sim.purging,
        seed: exp.seed,
        trace,
    })
}

fn split_line(name: &str, split: &LoadSplit, mismatch: f64) -> String {
    format!(
        "{name:>8}: kappa {:?} (relaxed {:?}), theta {}, active {:?}, mismatch {mismatch:e}",
        split.kappa_int,
        split.kappa_real.iter().map(|k| (k * 1e4).round() / 1e4).collect::<Vec<_>>(),
        split.theta.map_or("-".to_string(), |t| format!("{t:.6}")),
        split.active,
    )
}

pub fn split(exp: &Experiment, out: &Path) -> Result<(), CliError> {
    let workers = exp.require_workers()?;
    let code = exp.code_params()?;
    let best = optimal(workers, &code, exp.gamma)?;
    let uniform = LoadSplit::uniform(workers.len(), code.total_tasks())?;
    let mut rows = Vec::new();
    for (name, s) in [("optimal", &best), ("uniform", &uniform)] {
        let m = analytics::mismatch(s, workers, code.complexity, exp.gamma)?;
        let kappa: Vec<f64> = s.kappa_int.iter().map(|&k| k as f64).collect();
        let scores = analytics::scores(&kappa, workers, code.complexity, exp.gamma)?;
        println!("{}", split_line(name, s, m));
        for (p, w) in workers.iter().enumerate() {
            rows.push(vec![
                name.to_string(),
                p.to_string(),
                w.id.to_string(),
                s.kappa_real[p].to_string(),
                s.kappa_int[p].to_string(),
                scores[p].to_string(),
                opt(s.theta),
                m.to_string(),
            ]);
        }
    }
    write_table(
        create(out, "summary.csv")?,
        &["split", "worker", "id", "kappa_real", "kappa", "score", "theta", "mismatch"],
        &rows,
    )?;
    Ok(())
}

fn stats_rows(stats: &QueueStats) -> Vec<(&'static str, String)> {
    vec![
        ("service_mean", stats.service.mean.to_string()),
        ("service_second_moment", stats.service.second_moment.to_string()),
        ("rho", stats.rho.to_string()),
        ("stable", stats.stable.to_string()),
        ("arrival_scv", stats.ca2.to_string()),
        ("service_scv", stats.cs2.to_string()),
        ("delay_kingman", opt(stats.delay_kingman)),
        ("delay_pk", opt(stats.delay_pk)),
    ]
}

pub fn analyze(exp: &Experiment, out: &Path) -> Result<(), CliError> {
    let workers = exp.require_workers()?;
    let arrival = exp.require_arrival()?;
    let code = exp.code_params()?;
    let split = chosen_split(exp, &code)?;
    let itr = iteration_moments(&split, workers, code.complexity)?;
    let stats = queue_stats(&itr, exp.sim.iterations, &arrival)?;
    let bound = lower_bound(workers, code.complexity, code.k, exp.sim.iterations)?;
    let mut rows = vec![
        ("iteration_mean", itr.mean.to_string()),
        ("iteration_second_moment", itr.second_moment.to_string()),
    ];
    rows.extend(stats_rows(&stats));
    rows.push(("lower_bound", bound.to_string()));
    for (k, v) in &rows {
        println!("{k:>24} {v}");
    }
    if !stats.stable {
        eprintln!("warning: utilization {} >= 1, the queue is unstable", stats.rho);
    }
    write_summary(out, &rows)
}

fn simulated_rows(res: &SimResult) -> Result<Vec<(&'static str, String)>, CliError> {
    let st = delay_statistics(res)?;
    let batch = batch_means_std_error(&res.delays(), BATCHES).ok();
    Ok(vec![
        ("jobs", res.jobs.len().to_string()),
        ("mean_delay", st.mean.to_string()),
        ("second_moment_delay", st.second_moment.to_string()),
        ("std_error", st.std_error.to_string()),
        ("batch_means_std_error", opt(batch)),
        ("tasks_purged", res.tasks_purged.to_string()),
        ("backlog_at_last_arrival", res.backlog_at_last_arrival.to_string()),
        ("growing_queue", res.growing_queue.to_string()),
    ])
}

pub fn simulate(exp: &Experiment, out: &Path) -> Result<(), CliError> {
    let code = exp.code_params()?;
    let split = chosen_split(exp, &code)?;
    let cfg = sim_config(exp, code, &split, exp.sim.trace)?;
    let res = run_simulation(&cfg)?;
    write_delays(create(out, "delays.csv")?, &res)?;
    if exp.sim.trace {
        write_trace(create(out, "trace.csv")?, &res)?;
    }
    let mut rows = vec![
        ("split", format!("{:?}", split.kappa_int)),
        ("purging", exp.sim.purging.to_string()),
        ("seed", exp.seed.to_string()),
    ];
    rows.extend(simulated_rows(&res)?);
    rows.push(("lower_bound", lower_bound(&cfg.workers, code.complexity, code.k, exp.sim.iterations)?.to_string()));
    for (k, v) in &rows {
        println!("{k:>24} {v}");
    }
    if res.growing_queue {
        eprintln!(
            "warning: {} jobs were waiting at the last arrival; the queue is growing",
            res.backlog_at_last_arrival
        );
    }
    write_summary(out, &rows)
}

struct SweepPoint {
    row: Vec<String>,
    line: String,
}

fn sweep_point(exp: &Experiment, workers: &[WorkerProfile], arrival: &ArrivalModel, omega: f64) -> Result<SweepPoint, CliError> {
    let code = exp.code_params_at(omega)?;
    let best = optimal(workers, &code, exp.gamma)?;
    let uniform = LoadSplit::uniform(workers.len(), code.total_tasks())?;
    let sim_opt = run_simulation(&sim_config(exp, code, &best, false)?)?;
    let sim_uni = run_simulation(&sim_config(exp, code, &uniform, false)?)?;
    let itr = iteration_moments(&best, workers, code.complexity)?;
    let stats = queue_stats(&itr, exp.sim.iterations, arrival)?;
    let theory = stats.delay_pk.or(stats.delay_kingman);
    let bound = lower_bound(workers, code.complexity, code.k, exp.sim.iterations)?;
    let d_opt = delay_statistics(&sim_opt)?.mean;
    let d_uni = delay_statistics(&sim_uni)?.mean;
    let line = format!(
        "Omega {omega}: optimal {d_opt:.4}, uniform {d_uni:.4}, theory {}, bound {bound:.4}{}",
        theory.map_or("unstable".to_string(), |t| format!("{t:.4}")),
        if sim_opt.growing_queue || sim_uni.growing_queue { " (growing queue)" } else { "" }
    );
    let row = vec![
        omega.to_string(),
        d_opt.to_string(),
        d_uni.to_string(),
        opt(theory),
        bound.to_string(),
        stats.rho.to_string(),
        stats.stable.to_string(),
        sim_opt.growing_queue.to_string(),
        sim_uni.growing_queue.to_string(),
    ];
    Ok(SweepPoint { row, line })
}

/// Grid points run in parallel; rows keep grid order.
pub fn sweep_omega(exp: &Experiment, out: &Path) -> Result<(), CliError> {
    let workers = exp.require_workers()?;
    let arrival = exp.require_arrival()?;
    let grid = exp
        .sim
        .omega_grid
        .clone()
        .ok_or_else(|| CliError::Config("sweep-omega needs sim.omega_grid".into()))?;
    if grid.is_empty() {
        return Err(CliError::Config("sim.omega_grid is empty".into()));
    }
    let points: Vec<Result<SweepPoint, CliError>> = thread::scope(|scope| {
        let handles: Vec<_> = grid
            .iter()
            .map(|&omega| scope.spawn(move || sweep_point(exp, workers, &arrival, omega)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for point in points {
        let point = point?;
        println!("{}", point.line);
        rows.push(point.row);
    }
    write_table(
        create(out, "summary.csv")?,
        &[
            "Omega",
            "delay_optimal_sim",
            "delay_uniform_sim",
            "delay_theory_nopurge",
            "lower_bound",
            "rho_nopurge",
            "stable_nopurge",
            "optimal_growing_queue",
            "uniform_growing_queue",
        ],
        &rows,
    )?;
    Ok(())
}

pub fn optimize_code_cmd(exp: &Experiment, out: &Path) -> Result<(), CliError> {
    let workers = exp.require_workers()?;
    let spec = exp
        .code
        .candidates
        .as_ref()
        .ok_or_else(|| CliError::Config("optimize-code needs code.candidates".into()))?;
    let candidates = enumerate_candidates(spec).map_err(|e| CliError::Config(e.to_string()))?;
    let search = optimize_code(workers, &candidates, exp.gamma, SPLIT_TOLERANCE)?;
    for (c, why) in &search.excluded {
        eprintln!("warning: candidate K={} C={} Omega={} excluded: {why}", c.k, c.complexity, c.omega);
    }
    write_candidates(create(out, "candidates.csv")?, &search)?;
    let row = &search.table[search.best_index];
    let rows = vec![
        ("K", search.best.k.to_string()),
        ("C", search.best.complexity.to_string()),
        ("Omega", search.best.omega.to_string()),
        ("theta", row.theta.to_string()),
        ("active_workers", row.active_workers.to_string()),
        ("mismatch", search.best_mismatch.to_string()),
        ("split", format!("{:?}", search.best_split.kappa_int)),
        ("candidates", search.table.len().to_string()),
        ("excluded", search.excluded.len().to_string()),
    ];
    for (k, v) in &rows {
        println!("{k:>16} {v}");
    }
    write_summary(out, &rows)
}

fn load_matrix(exp: &Experiment, out: &Path) -> Result<GradientCodeMatrix, CliError> {
    let k = exp.code.k.ok_or_else(|| CliError::Config("code.k is required".into()))?;
    let sources = [exp.code.matrix.is_some(), exp.code.matrix_file.is_some(), exp.code.chunks.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(CliError::Config(
            "give exactly one of code.matrix, code.matrix_file or code.chunks".into(),
        ));
    }
    let bad = |e: coded_stream::Error| CliError::Config(e.to_string());
    if let Some(rows) = &exp.code.matrix {
        return GradientCodeMatrix::from_rows(rows, k).map_err(bad);
    }
    if let Some(path) = exp.matrix_path() {
        let file = File::open(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let m = read_matrix(file).map_err(bad)?;
        return GradientCodeMatrix::new(m, k).map_err(bad);
    }
    let chunks = exp.code.chunks.expect("checked above");
    let per_task = exp
        .code
        .chunks_per_task
        .ok_or_else(|| CliError::Config("code.chunks needs code.chunks_per_task".into()))?;
    let code = fractional_repetition_code(k, exp.omega(), chunks, per_task)?;
    write_matrix(create(out, "matrix.csv")?, code.matrix())?;
    Ok(code)
}

pub fn validate_code_cmd(exp: &Experiment, out: &Path) -> Result<(), CliError> {
    let code = load_matrix(exp, out)?;
    let v = validate_code(&code)?;
    let mut rows = vec![
        ("tasks", code.tasks().to_string()),
        ("chunks", code.chunks().to_string()),
        ("k", code.k().to_string()),
        ("chunks_per_task", code.d().map_or("mixed".to_string(), |d| d.to_string())),
        ("valid", v.valid.to_string()),
        ("subsets_checked", v.subsets_checked.to_string()),
    ];
    match &v.failing_subset {
        Some(s) => rows.push(("failing_subset", format!("{s:?}"))),
        None => {
            let first: Vec<usize> = (0..code.k()).collect();
            let lambda = decode_coefficients(&code, &first)?;
            rows.push(("decode_first_subset", format!("{lambda:?}")));
        }
    }
    for (k, v) in &rows {
        println!("{k:>20} {v}");
    }
    write_summary(out, &rows)
}
