//! End-to-end pipeline: read, chunk, cluster in parallel, collect, write.
//!
//! The clustering phase runs on a fixed-size worker pool pulling tasks from a
//! shared queue (task point counts are skewed by sky density, so static
//! splitting would idle workers). Results are collected in task-pixel order
//! no matter which worker finished them when, and every per-task random
//! stream is derived from (run seed, task pixel), so the output is identical
//! for any worker count and schedule.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use thiserror::Error;

use crate::chunk::{build_chunks, validate_resolutions, ResolutionCheck};
use crate::cluster::cluster_task;
use crate::config::EngineConfig;
use crate::healpix::{PixelId, Resolution};
use crate::io::{
    read_observations, write_assignments, write_catalog, AssignmentRecord, CatalogRecord,
    ObservationRecord, ReadError,
};
use crate::merge::merge_results;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: ReadError,
    },
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("task for pixel {pixel} panicked")]
    TaskPanicked { pixel: PixelId },
}

/// Wall time and volume counters for one run.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub read_secs: f64,
    pub chunk_secs: f64,
    pub cluster_secs: f64,
    pub collect_secs: f64,
    pub write_secs: f64,
    pub observations: usize,
    pub tasks: usize,
    pub clusters: usize,
    pub discarded_duplicates: u64,
    pub peak_memory_bytes: u64,
}

impl RunReport {
    /// The labeled line format consumed by scripts and the summary file.
    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("phase=read seconds={:.6}", self.read_secs),
            format!("phase=chunk seconds={:.6}", self.chunk_secs),
            format!("phase=cluster seconds={:.6}", self.cluster_secs),
            format!("phase=collect seconds={:.6}", self.collect_secs),
            format!("phase=write seconds={:.6}", self.write_secs),
            format!("observations={}", self.observations),
            format!("tasks={}", self.tasks),
            format!("clusters={}", self.clusters),
            format!("discarded_duplicates={}", self.discarded_duplicates),
            format!("peak_memory_bytes={}", self.peak_memory_bytes),
        ]
    }
}

/// Peak resident set size of this process, if the platform exposes it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

/// Run `f` over every task on exactly `worker_count` workers; results come
/// back ordered by task pixel id. A panicking task aborts the whole map with
/// a diagnostic naming its pixel.
pub fn parallel_map_tasks<T, R, F>(
    mut tasks: Vec<(PixelId, T)>,
    worker_count: usize,
    f: F,
) -> Result<Vec<(PixelId, R)>, PipelineError>
where
    T: Send + Sync,
    R: Send,
    F: Fn(PixelId, &T) -> R + Sync,
{
    tasks.sort_by_key(|(pixel, _)| *pixel);
    let workers = worker_count.max(1);
    let cursor = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let panicked: Mutex<Option<PixelId>> = Mutex::new(None);
    let slots: Vec<Mutex<Option<R>>> = tasks.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    return;
                }
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    return;
                }
                let (pixel, task) = &tasks[i];
                match catch_unwind(AssertUnwindSafe(|| f(*pixel, task))) {
                    Ok(result) => {
                        *slots[i].lock().expect("result slot") = Some(result);
                    }
                    Err(_) => {
                        *panicked.lock().expect("panic slot") = Some(*pixel);
                        failed.store(true, Ordering::Relaxed);
                        return;
                    }
                }
            });
        }
    });

    if let Some(pixel) = *panicked.lock().expect("panic slot") {
        return Err(PipelineError::TaskPanicked { pixel });
    }
    Ok(tasks
        .into_iter()
        .zip(slots)
        .map(|((pixel, _), slot)| {
            let result = slot.into_inner().expect("slot lock").expect("all tasks ran");
            (pixel, result)
        })
        .collect())
}

/// Catalog and assignments produced from observations already in memory.
pub struct EngineOutput {
    pub catalog: Vec<CatalogRecord>,
    pub assignments: Vec<AssignmentRecord>,
    pub tasks: usize,
    pub clusters: usize,
    pub discarded_duplicates: u64,
    pub chunk_secs: f64,
    pub cluster_secs: f64,
    pub collect_secs: f64,
}

/// Chunk, cluster and merge a set of observations.
pub fn run_in_memory(
    observations: &[ObservationRecord],
    config: &EngineConfig,
    threads: usize,
    seed: u64,
) -> Result<EngineOutput, PipelineError> {
    config
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let task_res = Resolution::new(config.task_k as u32).expect("validated");
    let overlap_res = Resolution::new(config.overlap_k as u32).expect("validated");
    let id_res = Resolution::new(config.id_k as u32).expect("validated");
    let index_res = Resolution::new(config.catalog_index_k as u32).expect("validated");

    match validate_resolutions(task_res, overlap_res, config.cluster_radius_arcsec) {
        ResolutionCheck::Error(msg) => return Err(PipelineError::Config(msg)),
        ResolutionCheck::Warning(msg) => log::warn!("{msg}"),
        ResolutionCheck::Ok => {}
    }

    let chunk_start = Instant::now();
    let mut chunks = build_chunks(observations, task_res, overlap_res);
    let pixels = chunks.task_pixels();
    let tasks: Vec<(PixelId, (Vec<u32>, Vec<u32>))> = pixels
        .into_iter()
        .map(|p| {
            let cell = chunks.cells.remove(&p).unwrap_or_default();
            let overlap = chunks.overlaps.remove(&p).unwrap_or_default();
            (p, (cell, overlap))
        })
        .collect();
    let task_count = tasks.len();
    let chunk_secs = chunk_start.elapsed().as_secs_f64();

    let cluster_start = Instant::now();
    let strategy = config.strategy;
    let results = parallel_map_tasks(tasks, threads, |pixel, (cell, overlap)| {
        cluster_task(observations, cell, overlap, pixel, task_res, strategy, config, seed)
    })?;
    let cluster_secs = cluster_start.elapsed().as_secs_f64();

    let collect_start = Instant::now();
    let mut catalog = merge_results(
        results.into_iter().map(|(_, map)| map),
        config.cluster_duplicates_arcsec,
        index_res,
    );
    let records = catalog.generate_catalog_ids(id_res);
    let assignments = catalog.build_assignments(observations);
    let collect_secs = collect_start.elapsed().as_secs_f64();

    Ok(EngineOutput {
        catalog: records,
        assignments,
        tasks: task_count,
        clusters: catalog.clusters.len(),
        discarded_duplicates: catalog.merged_duplicates,
        chunk_secs,
        cluster_secs,
        collect_secs,
    })
}

/// File-to-file pipeline run. Phase timings and counters go to the report;
/// the caller decides where the report lines are printed.
pub fn run_pipeline(
    config: &EngineConfig,
    input: &Path,
    catalog_path: &Path,
    assignments_path: &Path,
    threads: usize,
    seed: u64,
) -> Result<RunReport, PipelineError> {
    config
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let read_start = Instant::now();
    let file = File::open(input).map_err(|e| PipelineError::Io {
        path: input.to_path_buf(),
        source: e,
    })?;
    let observations =
        read_observations(BufReader::new(file)).map_err(|e| match e {
            ReadError::Io(io) => PipelineError::Io { path: input.to_path_buf(), source: io },
            other => PipelineError::Input { path: input.to_path_buf(), source: other },
        })?;
    let read_secs = read_start.elapsed().as_secs_f64();

    let mut output = run_in_memory(&observations, config, threads, seed)?;

    let write_start = Instant::now();
    write_file(catalog_path, |w| write_catalog(w, &mut output.catalog))?;
    write_file(assignments_path, |w| write_assignments(w, &mut output.assignments))?;
    let write_secs = write_start.elapsed().as_secs_f64();

    Ok(RunReport {
        read_secs,
        chunk_secs: output.chunk_secs,
        cluster_secs: output.cluster_secs,
        collect_secs: output.collect_secs,
        write_secs,
        observations: observations.len(),
        tasks: output.tasks,
        clusters: output.clusters,
        discarded_duplicates: output.discarded_duplicates,
        peak_memory_bytes: peak_rss_bytes().unwrap_or(0),
    })
}

fn write_file<F>(path: &Path, write: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io_err = |e| PipelineError::Io { path: path.to_path_buf(), source: e };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    write(&mut writer).map_err(io_err)?;
    writer.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_is_ordered_and_complete() {
        let tasks: Vec<(PixelId, u64)> = (0..100).rev().map(|i| (PixelId(i), i as u64)).collect();
        for workers in [1, 8] {
            let results = parallel_map_tasks(tasks.clone(), workers, |pixel, v| {
                pixel.0 as u64 * 10 + v % 10
            })
            .unwrap();
            assert_eq!(results.len(), 100);
            for (i, (pixel, _)) in results.iter().enumerate() {
                assert_eq!(pixel.0, i as i64);
            }
        }
    }

    #[test]
    fn sequential_equals_parallel() {
        let tasks: Vec<(PixelId, u64)> = (0..64).map(|i| (PixelId(i), i as u64)).collect();
        let one = parallel_map_tasks(tasks.clone(), 1, |_, v| v * v).unwrap();
        let eight = parallel_map_tasks(tasks, 8, |_, v| v * v).unwrap();
        assert_eq!(one, eight);
    }

    #[test]
    fn panic_names_the_task_pixel() {
        let tasks: Vec<(PixelId, u64)> = (0..10).map(|i| (PixelId(i), i as u64)).collect();
        let err = parallel_map_tasks(tasks, 4, |pixel, _| {
            if pixel.0 == 7 {
                panic!("boom");
            }
            pixel.0
        })
        .unwrap_err();
        assert!(err.to_string().contains('7'), "{err}");
    }

    #[test]
    fn empty_task_list() {
        let results =
            parallel_map_tasks(Vec::<(PixelId, ())>::new(), 4, |_, _| 1u8).unwrap();
        assert!(results.is_empty());
    }
}
