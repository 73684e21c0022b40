use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::SocketAddr;
use std::ops::ControlFlow;
use std::path::Path;

use clipmap_core::embed::{pca2, run_tsne_observed};
use clipmap_core::ingest::load_dataset;
use clipmap_core::labels::{labels_from_export, parse_export};
use clipmap_core::metrics::{homogeneity_completeness, kmeans, knn_accuracy, DEFAULT_KNN_K};
use clipmap_core::session::{now_millis, EmbeddingView};
use clipmap_core::{ClipId, Error, Result, SessionState};
use clipmap_server::{AppState, ServerConfig};
use log::info;
use serde::Serialize;

use crate::TsneArgs;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn progress_logger(total_label: &'static str) -> impl FnMut(clipmap_core::embed::Progress) -> ControlFlow<()> {
    move |p| {
        if p.iteration % 250 == 0 || p.iteration == p.total {
            match p.kl {
                Some(kl) => info!("{total_label} {}/{} KL {kl:.4}", p.iteration, p.total),
                None => info!("{total_label} {}/{}", p.iteration, p.total),
            }
        }
        ControlFlow::Continue(())
    }
}

pub fn run_extractor(cmd: &str, manifest: &Path) -> Result<()> {
    info!("running extractor: {cmd}");
    let status = std::process::Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .env("CLIPMAP_MANIFEST", manifest)
        .status()
        .map_err(|e| Error::io("sh", e))?;
    if !status.success() {
        return Err(Error::Validation(format!("extractor command failed with {status}")));
    }
    Ok(())
}

pub fn ingest(manifest: &Path, out: &Path, budget: Option<f64>, tsne: &TsneArgs) -> Result<()> {
    let dataset = load_dataset(manifest)?;
    let manifest = fs::canonicalize(manifest).map_err(|e| Error::io(manifest, e))?;
    info!(
        "loaded {} clips from {} videos, {} dims",
        dataset.len(),
        dataset.videos.len(),
        dataset.dim()
    );
    let mut session = SessionState::new(dataset, Some(manifest));
    if let Some(b) = budget {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::Param(format!("budget must be >= 0, got {b}")));
        }
    }
    session.budget_seconds = budget;
    session.tsne = tsne.apply(&session.tsne)?;
    session.save(out)
}

pub fn embed(session_path: &Path, tsne: &TsneArgs, pca: bool, out: Option<&Path>) -> Result<()> {
    let mut session = SessionState::load(session_path)?;
    session.tsne = tsne.apply(&session.tsne)?;
    let dataset = session.dataset.clone();
    let embedding = if pca {
        pca2(&dataset.feature_matrix(), dataset.dim())?
    } else {
        run_tsne_observed(
            &dataset.feature_matrix(),
            dataset.dim(),
            &session.tsne,
            progress_logger("iteration"),
        )?
    };
    if let Some(kl) = embedding.final_kl() {
        info!("final KL divergence {kl:.4}");
    }
    if let Some(path) = out {
        write(path, &embedding.to_json()?)?;
    }
    session.set_embedding(EmbeddingView::new(dataset.round, &dataset, embedding)?)?;
    session.save(session_path)
}

#[derive(Serialize)]
struct MetricsOutput {
    #[serde(flatten)]
    report: clipmap_core::MetricsReport,
    round: u32,
    labeled: usize,
    unlabeled: usize,
    cumulative_toa_seconds: f64,
}

pub fn metrics(session_path: &Path, seed: u64) -> Result<()> {
    let session = SessionState::load(session_path)?;
    if session.embedding.is_none() {
        return Err(Error::NotReady(
            "session has no embedding; run `clipmap embed` first".into(),
        ));
    }
    let counts = session.pool_counts();
    print_json(&MetricsOutput {
        report: session.metrics_report(seed),
        round: session.round,
        labeled: counts.labeled,
        unlabeled: counts.unlabeled,
        cumulative_toa_seconds: session.cumulative_toa(),
    })
}

#[derive(Debug, Serialize)]
struct EmulateRow {
    perplexity: f64,
    knn_accuracy: Option<f64>,
    homogeneity: Option<f64>,
    completeness: Option<f64>,
    error: Option<String>,
}

pub fn emulate(
    session_path: &Path,
    perplexities: &[f64],
    labels: Option<&Path>,
    tsne: &TsneArgs,
    json: bool,
) -> Result<()> {
    let session = SessionState::load(session_path)?;
    let dataset = session.dataset.clone();
    let classes: BTreeMap<ClipId, String> = match labels {
        Some(path) => labels_from_export(&dataset, &parse_export(&read(path)?)?)
            .into_iter()
            .collect(),
        None => session
            .labels()
            .current_assignments()
            .into_iter()
            .map(|a| (a.clip_id.clone(), a.class_name.clone()))
            .collect(),
    };
    let rows: Vec<usize> = (0..dataset.len())
        .filter(|&r| classes.contains_key(&dataset.clips()[r].clip_id))
        .collect();
    if rows.len() < 2 {
        return Err(Error::Validation("emulate needs at least two labeled clips".into()));
    }
    let truth: Vec<&str> = rows
        .iter()
        .map(|&r| classes[&dataset.clips()[r].clip_id].as_str())
        .collect();
    let k = truth.iter().collect::<BTreeSet<_>>().len();
    let base = tsne.apply(&session.tsne)?;
    let features = dataset.feature_matrix();

    let mut table = Vec::new();
    for &perplexity in perplexities {
        let config = clipmap_core::TsneConfig {
            perplexity,
            ..base.clone()
        };
        info!("perplexity {perplexity}");
        let row = match run_tsne_observed(&features, dataset.dim(), &config, progress_logger("iteration")) {
            Ok(embedding) => {
                let points: Vec<[f64; 2]> = rows.iter().map(|&r| embedding.points[r]).collect();
                let knn = knn_accuracy(&points, &truth, DEFAULT_KNN_K)?;
                let km = kmeans(&points, k, config.seed)?;
                let (h, c) = homogeneity_completeness(&km.assignment, &truth)?;
                EmulateRow {
                    perplexity,
                    knn_accuracy: Some(knn),
                    homogeneity: Some(h),
                    completeness: Some(c),
                    error: None,
                }
            }
            Err(e @ (Error::Param(_) | Error::Validation(_))) => EmulateRow {
                perplexity,
                knn_accuracy: None,
                homogeneity: None,
                completeness: None,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        table.push(row);
    }

    if json {
        return print_json(&table);
    }
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", 100.0 * v));
    println!("{} labeled clips, {k} classes, k-means k = {k}", rows.len());
    println!(
        "{:>10}  {:>8}  {:>12}  {:>12}",
        "perplexity", "4-NN", "homogeneity", "completeness"
    );
    for r in &table {
        print!(
            "{:>10}  {:>8}  {:>12}  {:>12}",
            r.perplexity,
            cell(r.knn_accuracy),
            cell(r.homogeneity),
            cell(r.completeness)
        );
        match &r.error {
            Some(e) => println!("  ({e})"),
            None => println!(),
        }
    }
    Ok(())
}

pub fn batch(session_path: &Path, videos: usize, seed: u64) -> Result<()> {
    let mut session = SessionState::load(session_path)?;
    let selection = session.select_unlabeled_batch(videos, seed);
    session.save(session_path)?;
    print_json(&selection)
}

pub fn round(session_path: &Path, toa: Option<f64>, manifest: Option<&Path>) -> Result<()> {
    let mut session = SessionState::load(session_path)?;
    if let Some(seconds) = toa {
        session.record_toa(seconds)?;
    }
    let mut next = session.clone();
    let outcome = next.advance_round(manifest)?;
    if outcome.embedding_stale || outcome.refreshed {
        let view = next.compute_embedding(progress_logger("iteration"))?;
        next.set_embedding(view)?;
    }
    next.save(session_path)?;
    print_json(&outcome)
}

pub fn export(session_path: &Path, out: Option<&Path>) -> Result<()> {
    let text = SessionState::load(session_path)?.export_json()?;
    match out {
        Some(path) => write(path, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn import_labels(session_path: &Path, labels: &Path) -> Result<()> {
    let mut session = SessionState::load(session_path)?;
    let export = parse_export(&read(labels)?)?;
    let applied = session.import_labels(&export, now_millis())?;
    session.save(session_path)?;
    info!("applied labels to {applied} clips");
    Ok(())
}

pub fn serve(session_path: &Path, addr: SocketAddr) -> Result<()> {
    let session = SessionState::load(session_path)?;
    let state = AppState::new(
        session,
        ServerConfig {
            session_path: Some(session_path.to_path_buf()),
            metrics_seed: 0,
        },
    );
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io(session_path, e))?;
    runtime
        .block_on(clipmap_server::serve(state, addr))
        .map_err(|e| Error::io(addr.to_string(), e))
}
