use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{RunOutput, Snapshot, Testbed};
use crate::error::Result;

/// Write `config.json`, `metrics.csv`, `params_trace.csv`,
/// `member_errors.csv`, `particle_counts.csv` and `snapshots/` under `dir`.
///
/// Every CSV has one header plus one row per assimilation index, and floats
/// use the shortest round-trip representation, so identical runs give
/// identical bytes.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("snapshots"))?;
    fs::write(dir.join("config.json"), out.config.to_json()? + "\n")?;
    write_metrics(out, &dir.join("metrics.csv"))?;
    write_params(out, &dir.join("params_trace.csv"))?;
    write_wide(out, &dir.join("member_errors.csv"), "err", |r, i| r.member_errors[i].to_string())?;
    write_wide(out, &dir.join("particle_counts.csv"), "n", |r, i| r.particle_counts[i].to_string())?;
    for (i, m) in out.members.iter().enumerate() {
        write_snapshot(m, &dir.join("snapshots").join(format!("member_{i:03}.csv")))?;
    }
    write_snapshot(&out.truth, &dir.join("snapshots").join("truth.csv"))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn write_metrics(out: &RunOutput, path: &Path) -> Result<()> {
    let state = match out.config.testbed {
        Testbed::Adv1d(_) => "rrmse",
        Testbed::Vortex2d(_) => "e_omega",
    };
    let mut header = vec![
        "step".to_string(),
        "time".to_string(),
        format!("{state}_forecast"),
        format!("{state}_analysis"),
    ];
    for p in &out.param_names {
        header.push(format!("rrmse_{p}_forecast"));
        header.push(format!("rrmse_{p}_analysis"));
    }
    header.push("mean_particles".into());
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for r in &out.records {
        let mut row = vec![
            r.step.to_string(),
            r.time.to_string(),
            r.state_forecast.to_string(),
            r.state_analysis.to_string(),
        ];
        for (f, a) in r.param_forecast.iter().zip(&r.param_analysis) {
            row.push(f.to_string());
            row.push(a.to_string());
        }
        row.push(r.mean_particles().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_params(out: &RunOutput, path: &Path) -> Result<()> {
    let n = out.config.members;
    let mut header = vec!["step".to_string()];
    for p in &out.param_names {
        header.extend((0..n).map(|i| format!("{p}_{i}")));
    }
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for r in &out.records {
        let mut row = vec![r.step.to_string()];
        for k in 0..out.param_names.len() {
            row.extend(r.params.iter().map(|p| p[k].to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_wide(
    out: &RunOutput,
    path: &Path,
    prefix: &str,
    cell: impl Fn(&super::MetricsRecord, usize) -> String,
) -> Result<()> {
    let n = out.config.members;
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for r in &out.records {
        let mut row = vec![r.step.to_string()];
        row.extend((0..n).map(|i| cell(r, i)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_snapshot(s: &Snapshot, path: &Path) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    match s {
        Snapshot::Particles1D(p) => p.write_csv(f),
        Snapshot::Grid1D(g) => g.write_csv(f),
        Snapshot::Particles2D(p) => p.write_csv(f),
    }
}
