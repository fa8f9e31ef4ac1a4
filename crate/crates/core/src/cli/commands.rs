use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::artifact::{align_sources, load_aligned, write_aligned};
use super::config::{named_path, DatasetSpec, Job, RunConfig};
use super::reference::{ReferenceTable, DATASETS, SOURCES};
use super::report::{Cell, Grid};
use super::{CliError, CliResult};
use crate::embedding_io::{export_table, load_named_table, AlignedEmbeddingSet, EmbeddingTable, TableFormat};
use crate::error::{Error, Result};
use crate::eval::{evaluate, load_dataset, SimilarityDataset};
use crate::methods::{build, load_checkpoint, save_checkpoint, MetaModel};
use crate::nn::{grad_check as check_net, Activation, DenseNet, InitScale, LossKind};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub(super) fn align(rc: &RunConfig) -> CliResult<()> {
    let (set, info) = align_sources(&rc.sources)?;
    write_aligned(&set, &info, &rc.out)?;
    println!(
        "aligned {} shared words across {} sources (dims {:?}) -> {}",
        set.len(),
        set.n_sources(),
        set.dims(),
        rc.out.join("manifest.txt").display()
    );
    Ok(())
}

/// The aligned set for a training run: read from `--aligned`, or built from
/// the sources and saved under `<out>/aligned`.
fn training_set(rc: &RunConfig) -> CliResult<AlignedEmbeddingSet> {
    match (&rc.aligned, rc.sources.is_empty()) {
        (Some(dir), _) => Ok(load_aligned(dir)?),
        (None, false) => {
            let (set, info) = align_sources(&rc.sources)?;
            write_aligned(&set, &info, &rc.out.join("aligned"))?;
            Ok(set)
        }
        (None, true) => Err(CliError::Usage("give --sources or --aligned".into())),
    }
}

struct Trained {
    id: String,
    job: Job,
    result: Result<(MetaModel, EmbeddingTable)>,
}

/// Trains every job in a worker pool; results come back in job order.
fn run_grid(rc: &RunConfig, set: &AlignedEmbeddingSet, jobs: Vec<Job>) -> CliResult<Vec<Trained>> {
    let names: Vec<String> = set.sources().iter().map(|s| s.name().to_string()).collect();
    with_pool(rc.jobs, || {
        jobs.into_par_iter()
            .map(|job| {
                let id = job.id(&names);
                log::info!("training {id}");
                let result = build(set, &job.spec, &job.config(&rc.meta)).and_then(|model| {
                    let mut table = model.table(set)?;
                    table.set_name(id.clone());
                    Ok((model, table))
                });
                match &result {
                    Ok(_) => log::info!("finished {id}"),
                    Err(e) => log::warn!("{id} failed: {e}"),
                }
                Trained { id, job, result }
            })
            .collect()
    })
}

/// Writes meta tables, checkpoints, traces and `summary.txt`; returns the
/// number of failed cells.
fn write_grid(out: &Path, trained: &[Trained]) -> Result<usize> {
    for sub in ["meta", "checkpoints", "traces"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut summary = String::from("id\tstatus\tmeta_dim\tepochs\tfinal_loss\tdetail\n");
    let mut failed = 0;
    for t in trained {
        match &t.result {
            Ok((model, table)) => {
                export_table(table, out.join("meta").join(format!("{}.txt", t.id)))?;
                save_checkpoint(model, out.join("checkpoints").join(format!("{}.json", t.id)))?;
                let final_loss = match model.loss_trace.last() {
                    Some(last) => {
                        let mut trace = String::from("epoch\tloss\n");
                        for (i, l) in model.loss_trace.iter().enumerate() {
                            trace.push_str(&format!("{}\t{l}\n", i + 1));
                        }
                        let path = out.join("traces").join(format!("{}.tsv", t.id));
                        fs::write(&path, trace).map_err(|e| Error::io(&path, e))?;
                        last.to_string()
                    }
                    None => "-".into(),
                };
                summary.push_str(&format!(
                    "{}\tok\t{}\t{}\t{final_loss}\t\n",
                    t.id,
                    model.meta_dim,
                    model.loss_trace.len()
                ));
            }
            Err(e) => {
                failed += 1;
                summary.push_str(&format!("{}\tfailed\t-\t-\t-\t{e}\n", t.id));
            }
        }
    }
    write_file(&out.join("summary.txt"), &summary)?;
    Ok(failed)
}

fn grid_outcome(failed: usize, total: usize, what: &str) -> CliResult<()> {
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Partial(format!("{failed} of {total} {what} failed")))
    }
}

pub(super) fn train(rc: &RunConfig) -> CliResult<()> {
    let set = training_set(rc)?;
    let names: Vec<String> = set.sources().iter().map(|s| s.name().to_string()).collect();
    let jobs = rc.jobs(&names)?;
    let total = jobs.len();
    let trained = run_grid(rc, &set, jobs)?;
    let failed = write_grid(&rc.out, &trained)?;
    for t in &trained {
        match &t.result {
            Ok((model, _)) => println!("ok      {} (dim {})", t.id, model.meta_dim),
            Err(e) => println!("FAILED  {}: {e}", t.id),
        }
    }
    println!("summary -> {}", rc.out.join("summary.txt").display());
    grid_outcome(failed, total, "grid cells")
}

/// Tables named on the command line; directories contribute every `.txt` file.
fn collect_tables(args: &[String]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for arg in args {
        let (name, path) = named_path(arg);
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            out.extend(files.into_iter().map(|p| named_path(&p.to_string_lossy())));
        } else {
            out.push((name, path));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no meta tables found".into()));
    }
    Ok(out)
}

fn load_datasets(specs: &[DatasetSpec]) -> Result<Vec<SimilarityDataset>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("give at least one dataset (--datasets name=path)".into()));
    }
    specs.iter().map(|d| load_dataset(&d.path, &d.name, d.delimiter)).collect()
}

fn score(table: &EmbeddingTable, dataset: &SimilarityDataset, reference: Option<f64>) -> Cell {
    match evaluate(table, dataset) {
        Ok(entry) => Cell::Scored { entry, reference },
        Err(e) => Cell::Failed(e.to_string()),
    }
}

fn write_report(grid: &Grid, out: Option<&Path>, stem: &str) -> Result<()> {
    let text = grid.render_text();
    print!("{text}");
    if let Some(dir) = out {
        write_file(&dir.join(format!("{stem}.txt")), &text)?;
        write_file(&dir.join(format!("{stem}.jsonl")), &grid.render_jsonl())?;
    }
    Ok(())
}

pub(super) fn eval(table_args: &[String], datasets: &[DatasetSpec], out: Option<&Path>) -> CliResult<()> {
    let tables = collect_tables(table_args)?
        .par_iter()
        .map(|(name, path)| load_named_table(path, name, TableFormat::Auto))
        .collect::<Result<Vec<_>>>()?;
    let datasets = load_datasets(datasets)?;
    let rows = tables
        .par_iter()
        .map(|t| (t.name().to_string(), datasets.iter().map(|d| score(t, d, None)).collect()))
        .collect();
    let grid = Grid {
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        rows,
        with_reference: false,
    };
    write_report(&grid, out, "report")?;
    grid_outcome(grid.failures(), tables.len() * datasets.len(), "evaluation cells")
}

/// Checks that the six reference sources and datasets were supplied and exist.
fn check_reproduction_inputs(rc: &RunConfig) -> Result<()> {
    let mut problems = Vec::new();
    for name in SOURCES {
        match rc.sources.iter().find(|s| s.name == name) {
            None => problems.push(format!("source `{name}` not given (--sources {name}=PATH)")),
            Some(s) if !s.path.is_file() => problems.push(format!("source `{name}`: {} not found", s.path.display())),
            Some(_) => {}
        }
    }
    for name in DATASETS {
        match rc.datasets.iter().find(|d| d.name == name) {
            None => problems.push(format!("dataset `{name}` not given (--datasets {name}=PATH)")),
            Some(d) if !d.path.is_file() => problems.push(format!("dataset `{name}`: {} not found", d.path.display())),
            Some(_) => {}
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingInput(format!(
            "reproduction needs the six pretrained source embeddings ({}) and six similarity datasets ({}), which are not bundled:\n  {}",
            SOURCES.join(", "),
            DATASETS.join(", "),
            problems.join("\n  ")
        )))
    }
}

pub(super) fn reproduce(rc: &RunConfig) -> CliResult<()> {
    check_reproduction_inputs(rc)?;
    // Reference sources first, in column order, then any extras.
    let mut rc = rc.clone();
    rc.sources.sort_by_key(|s| SOURCES.iter().position(|&n| n == s.name).unwrap_or(SOURCES.len()));
    rc.datasets.sort_by_key(|d| DATASETS.iter().position(|&n| n == d.name).unwrap_or(DATASETS.len()));
    let (set, info) = align_sources(&rc.sources)?;
    write_aligned(&set, &info, &rc.out.join("aligned"))?;
    let names: Vec<String> = set.sources().iter().map(|s| s.name().to_string()).collect();
    let datasets = load_datasets(&rc.datasets)?;
    let jobs = rc.jobs(&names)?;
    let trained = run_grid(&rc, &set, jobs)?;
    let train_failures = write_grid(&rc.out, &trained)?;

    let reference = ReferenceTable::bundled();
    let mut rows: Vec<(String, Vec<Cell>)> = set
        .sources()
        .par_iter()
        .map(|src| {
            let cells = datasets
                .iter()
                .map(|d| score(src, d, reference.source(src.name(), &d.name)))
                .collect();
            (src.name().to_string(), cells)
        })
        .collect();
    rows.extend(
        trained
            .par_iter()
            .map(|t| {
                let cells = datasets
                    .iter()
                    .map(|d| match &t.result {
                        Ok((_, table)) => {
                            let spec = &t.job.spec;
                            let target = spec.target.and_then(|i| names.get(i)).map(String::as_str);
                            let r = match t.job.rank {
                                Some(_) => None,
                                None => reference.method(spec.method, spec.loss, target, &d.name),
                            };
                            score(table, d, r)
                        }
                        Err(e) => Cell::Failed(format!("training failed: {e}")),
                    })
                    .collect();
                (t.id.clone(), cells)
            })
            .collect::<Vec<_>>(),
    );
    let grid = Grid {
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        rows,
        with_reference: true,
    };
    write_report(&grid, Some(&rc.out), "reproduce")?;
    let failed = grid.failures();
    if failed > 0 || train_failures > 0 {
        return Err(CliError::Partial(format!(
            "{train_failures} training cells and {failed} evaluation cells failed (see {})",
            rc.out.join("summary.txt").display()
        )));
    }
    Ok(())
}

pub(super) fn export(checkpoint: &Path, aligned: &Path, out: &Path) -> CliResult<()> {
    let model = load_checkpoint(checkpoint)?;
    let set = load_aligned(aligned)?;
    let mut table = model.table(&set)?;
    if let Some(stem) = out.file_stem() {
        table.set_name(stem.to_string_lossy());
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    export_table(&table, out)?;
    println!("{} words x {} dims -> {}", table.len(), table.dim(), out.display());
    Ok(())
}

const ARCHITECTURES: [&str; 3] = ["linear", "tanh", "tanh-log-softmax"];

/// A small random network of the named architecture.
fn grad_check_net(arch: &str, seed: u64) -> Result<DenseNet> {
    let (dims, acts): (&[usize], &[Activation]) = match arch {
        "linear" => (&[6, 4], &[Activation::Linear]),
        "tanh" => (&[6, 5, 4], &[Activation::Tanh, Activation::Linear]),
        "tanh-log-softmax" => (&[6, 5, 4], &[Activation::Tanh, Activation::LogSoftmax]),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown architecture `{other}` (expected {})",
                ARCHITECTURES.join(", ")
            )))
        }
    };
    DenseNet::new(dims, acts, 0.0, InitScale::Std(0.5), seed)
}

pub(super) fn grad_check(losses: &[String], archs: &[String], seeds: u64, seed: u64, step: f64, tolerance: f64) -> CliResult<()> {
    let losses: Vec<LossKind> = if losses.is_empty() {
        LossKind::ALL.to_vec()
    } else {
        losses.iter().map(|l| l.parse()).collect::<Result<_>>()?
    };
    let archs: Vec<String> = if archs.is_empty() {
        ARCHITECTURES.iter().map(|a| a.to_string()).collect()
    } else {
        archs.to_vec()
    };
    if seeds == 0 || !step.is_finite() || step <= 0.0 {
        return Err(CliError::Usage("--seeds and --step must be positive".into()));
    }
    let mut failed = 0;
    println!("loss  architecture        max_rel_error  status");
    for &loss in &losses {
        for arch in &archs {
            let mut worst = 0.0f64;
            for s in seed..seed + seeds {
                let net = grad_check_net(arch, s)?;
                let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x9e37_79b9);
                let x = ndarray::Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
                let y = ndarray::Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
                worst = worst.max(check_net(&net, loss, x.view(), y.view(), step)?);
            }
            let ok = worst < tolerance;
            failed += usize::from(!ok);
            println!(
                "{:<5} {:<18} {:>14.3e}  {}",
                loss.as_str(),
                arch,
                worst,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    grid_outcome(failed, losses.len() * archs.len(), "gradient checks")
}
