use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use irtkit::dataio::{load, Dataset};
use irtkit::dkt::train_dkt;
use irtkit::eval::{
    consolidate, cross_validate, make_split, render_comparison, sweep, write_comparison_csv, EvalReport,
    ModelFamily, ModelSpec,
};
use irtkit::irt::{fit_hirt, fit_irt, FitReport};
use irtkit::params::{write_dkt, ParameterFile};

use crate::config::{ModelSection, RunConfig};
use crate::output::{read_manifest, RunDir};

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let format = cfg.format()?;
    let path = cfg.dataset_path()?;
    Ok(load(path, format, &cfg.labels(format), cfg.dataset.keep_duplicates)?)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    if cfg.dataset.format.is_none() {
        bail!("ingest needs --format (assistments, kdd or canonical)");
    }
    let d = load_dataset(cfg)?;
    let run = RunDir::acquire(cfg.out_dir()?)?;
    d.write_canonical_file(run.path("dataset.csv"))?;
    let summary = d.summary();
    run.write_text("summary.txt", &format!("{summary}{}", d.provenance().log_text()))?;
    run.write_manifest("ingest", cfg, Some(&d.content_hash()))?;
    print!("{summary}");
    Ok(())
}

fn print_fit(report: &FitReport) {
    println!(
        "objective {:.6} after {} iterations (gradient {:.2e}, converged: {})",
        report.objective, report.iterations, report.gradient_norm, report.converged
    );
    if !report.converged {
        eprintln!("warning: the optimizer stopped at the iteration limit before converging");
    }
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.model.spec()?;
    let d = load_dataset(cfg)?;
    let opts = cfg.fit_options();
    let run = RunDir::acquire(cfg.out_dir()?)?;
    match &spec {
        ModelSpec::Irt | ModelSpec::Tirt { .. } => {
            let fit = fit_irt(&d, &opts)?;
            print_fit(&fit.report);
            let hyper = match spec {
                ModelSpec::Tirt { gamma2 } => vec![("gamma2".to_owned(), gamma2)],
                _ => Vec::new(),
            };
            let file = ParameterFile::from_irt(spec.family().as_str(), hyper, &fit.params, &d);
            file.write(run.create("params.csv")?)?;
        }
        ModelSpec::Hirt { sigma2, tau2 } => {
            let fit = fit_hirt(&d, *sigma2, *tau2, &opts)?;
            print_fit(&fit.report);
            ParameterFile::from_hirt(&fit.params, &d).write(run.create("params.csv")?)?;
        }
        ModelSpec::Dkt(hp) => {
            let trained = train_dkt(&d, hp)?;
            let ce = &trained.report.cross_entropy;
            println!(
                "cross-entropy {:.6} -> {:.6} over {} epochs",
                ce[0],
                ce[ce.len() - 1],
                ce.len() - 1
            );
            write_dkt(&trained.params, run.create("dkt.ckpt")?)?;
        }
        ModelSpec::Window { .. } | ModelSpec::Constant => {
            bail!("model `{}` has no parameters to fit", spec.family())
        }
    }
    run.write_manifest("fit", cfg, Some(&d.content_hash()))?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, command: &str) -> Result<()> {
    let spec = cfg.model.spec()?;
    let d = load_dataset(cfg)?;
    let plan = make_split(d.n_students(), cfg.split_seed())?;
    let run = RunDir::acquire(cfg.out_dir()?)?;
    let cv = cross_validate(&spec, &d, &plan, &cfg.fit_options())?;
    cv.report.write_metrics_csv(run.create("metrics.csv")?)?;
    for (k, log) in cv.logs.iter().enumerate() {
        log.write_csv(&d, run.create(&format!("predictions_fold{k}.csv"))?)?;
    }
    let mut text = format!("{}\n", cv.report);
    for (k, v) in &cv.report.hyperparameters {
        text.push_str(&format!("{k} = {v}\n"));
    }
    run.write_text("report.txt", &text)?;
    run.write_manifest(command, cfg, Some(&cv.report.dataset_hash))?;
    print!("{text}");
    Ok(())
}

pub fn baseline(cfg: &RunConfig) -> Result<()> {
    if cfg.model.family.as_deref().is_some_and(|f| f != "window") {
        bail!("baseline runs the window model; use evaluate for `{}`", cfg.model.family.as_deref().unwrap_or(""));
    }
    let mut cfg = cfg.clone();
    cfg.model.family = Some(ModelFamily::Window.to_string());
    evaluate(&cfg, "baseline")
}

pub fn sweep_cmd(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.sweep.grid(&cfg.model)?;
    let d = load_dataset(cfg)?;
    let plan = make_split(d.n_students(), cfg.split_seed())?;
    let run = RunDir::acquire(cfg.out_dir()?)?;
    let res = sweep(&grid, &d, &plan, &cfg.fit_options())?;
    res.write_csv(run.create("sweep.csv")?)?;
    let best = RunConfig { model: ModelSection::from_spec(&res.best), ..Default::default() };
    run.write_text("best.toml", &best.to_toml())?;
    run.write_manifest("sweep", cfg, Some(&d.content_hash()))?;
    let mut out = std::io::stdout().lock();
    for r in &res.rows {
        let auc = r.auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{:<60} acc {:.4} auc {auc}", r.spec.label(), r.accuracy)?;
    }
    writeln!(out, "best: {}", res.best.label())?;
    Ok(())
}

fn metrics_source(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join("metrics.csv"), path.to_owned())
    } else {
        let dir = path.parent().map(Path::to_owned).unwrap_or_default();
        (path.to_owned(), dir)
    }
}

pub fn report(inputs: &[PathBuf], out_dir: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    for input in inputs {
        let (metrics, dir) = metrics_source(input);
        let (label, hash) = read_manifest(&dir).unwrap_or_else(|| {
            eprintln!("warning: no manifest next to {}; dataset unknown", metrics.display());
            ("unknown".into(), String::new())
        });
        let f = std::fs::File::open(&metrics).with_context(|| format!("opening {}", metrics.display()))?;
        reports.push((label, EvalReport::read_metrics_csv(f, &hash)?));
    }
    let (rows, warnings) = consolidate(&reports);
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let text = render_comparison(&rows);
    if let Some(dir) = out_dir {
        let run = RunDir::acquire(dir)?;
        write_comparison_csv(&rows, run.create("comparison.csv")?)?;
        run.write_text("comparison.txt", &text)?;
    }
    print!("{text}");
    Ok(())
}
