//! Reading and writing the workspace artifacts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use wander_core::ingest::{parse_events, parse_timestamp, write_events, Dataset, ParseMode, ParseOptions, EVENTS_V1};
use wander_core::labeling::{Status, UserLabel};
use wander_core::metrics::SeriesRow;
use wander_core::prediction::{Family, FeatureMatrix, FeatureSchema, RangeKind};

/// Shortest representation that round-trips; empty for missing values.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("bad number `{s}`"))?))
    }
}

/// Epoch seconds or an ISO-8601 date/date-time.
pub fn parse_instant(s: &str) -> Result<i64> {
    s.parse::<i64>()
        .ok()
        .or_else(|| parse_timestamp(s))
        .ok_or_else(|| anyhow!("`{s}` is neither epoch seconds nor an ISO-8601 date"))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{}", l.as_ref())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_events<'a>(path: &Path, events: impl IntoIterator<Item = &'a wander_core::ingest::PostEvent>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_events(&mut w, events)?;
    w.flush()?;
    Ok(())
}

/// Events written by `ingest` (already validated).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let opts = ParseOptions {
        mode: ParseMode::Strict,
        ..ParseOptions::default()
    };
    let out = parse_events(BufReader::new(File::open(path)?), EVENTS_V1, &opts)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(Dataset::build(out.events))
}

pub fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["user", "x_kind", "x", "metric", "value", "missing_flag"])?;
    for r in rows {
        w.write_record([
            r.user.as_str(),
            &r.x_kind.to_string(),
            &r.x.to_string(),
            &r.metric,
            &fmt_opt(r.value),
            if r.value.is_none() { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    let mut out = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec?;
        out.push(SeriesRow {
            user: rec[0].to_string(),
            x_kind: rec[1].parse()?,
            x: rec[2].parse()?,
            metric: rec[3].to_string(),
            value: parse_opt(&rec[4])?,
        });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[UserLabel]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for l in labels {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<UserLabel>> {
    let mut out = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec?;
        out.push(UserLabel {
            user: rec[0].to_string(),
            status: rec[1].parse::<Status>()?,
            quartile: rec[2].parse()?,
            future_post_count: rec[3].parse()?,
        });
    }
    Ok(out)
}

pub fn matrix_file(range: RangeKind, x: usize) -> String {
    format!("matrix_{range}_{x}.csv")
}

/// One CSV per matrix (`user, departing, target, features...`), plus a
/// schema file naming each column's family.
pub fn write_matrices(
    dir: &Path,
    departing: &BTreeMap<&str, bool>,
    target: &BTreeMap<&str, f64>,
    matrices: &[FeatureMatrix],
) -> Result<()> {
    let mut schema = csv_writer(&dir.join("schema.csv"))?;
    schema.write_record(["range", "x", "column", "family"])?;
    let mut omitted = Vec::new();
    for m in matrices {
        for (name, fam) in m.schema.names.iter().zip(&m.schema.families) {
            schema.write_record([m.range.to_string(), m.x.to_string(), name.clone(), fam.to_string()])?;
        }
        omitted.extend(m.omitted.iter().map(|o| format!("{}_{}: {o}", m.range, m.x)));
        let mut w = csv_writer(&dir.join(matrix_file(m.range, m.x)))?;
        let mut header = vec!["user".to_string(), "departing".into(), "target".into()];
        header.extend(m.schema.names.iter().cloned());
        w.write_record(&header)?;
        for (u, row) in m.users.iter().zip(&m.rows) {
            let mut rec = vec![
                u.clone(),
                (departing[u.as_str()] as u8).to_string(),
                target[u.as_str()].to_string(),
            ];
            rec.extend(row.iter().map(|v| fmt_opt(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    schema.flush()?;
    write_lines(&dir.join("omitted.txt"), omitted)?;
    Ok(())
}

fn parse_range(s: &str) -> Result<RangeKind> {
    match s {
        "first" => Ok(RangeKind::First),
        "last" => Ok(RangeKind::Last),
        _ => bail!("unknown range `{s}`"),
    }
}

fn parse_family(s: &str) -> Result<Family> {
    Family::ALL
        .into_iter()
        .find(|f| f.name() == s)
        .ok_or_else(|| anyhow!("unknown feature family `{s}`"))
}

pub struct LoadedMatrices {
    pub users: Vec<String>,
    pub departing: Vec<bool>,
    pub target: Vec<f64>,
    pub matrices: Vec<FeatureMatrix>,
}

pub fn read_matrices(dir: &Path) -> Result<LoadedMatrices> {
    let mut schemas: BTreeMap<(RangeKind, usize), FeatureSchema> = BTreeMap::new();
    for rec in csv_reader(&dir.join("schema.csv"))?.records() {
        let rec = rec?;
        let s = schemas
            .entry((parse_range(&rec[0])?, rec[1].parse()?))
            .or_insert_with(|| FeatureSchema { names: Vec::new(), families: Vec::new() });
        s.names.push(rec[2].to_string());
        s.families.push(parse_family(&rec[3])?);
    }
    // matrices with no feature columns leave no schema rows
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().to_string();
        if let Some(rest) = name.strip_prefix("matrix_").and_then(|r| r.strip_suffix(".csv")) {
            let (range, x) = rest.split_once('_').ok_or_else(|| anyhow!("bad matrix file {name}"))?;
            schemas
                .entry((parse_range(range)?, x.parse()?))
                .or_insert_with(|| FeatureSchema { names: Vec::new(), families: Vec::new() });
        }
    }
    let mut out = LoadedMatrices {
        users: Vec::new(),
        departing: Vec::new(),
        target: Vec::new(),
        matrices: Vec::new(),
    };
    for (i, ((range, x), schema)) in schemas.into_iter().enumerate() {
        let mut users = Vec::new();
        let mut rows = Vec::new();
        let mut departing = Vec::new();
        let mut target = Vec::new();
        for rec in csv_reader(&dir.join(matrix_file(range, x)))?.records() {
            let rec = rec?;
            users.push(rec[0].to_string());
            departing.push(&rec[1] == "1");
            target.push(rec[2].parse::<f64>()?);
            rows.push(rec.iter().skip(3).map(parse_opt).collect::<Result<Vec<_>>>()?);
        }
        if i == 0 {
            out.users = users.clone();
            out.departing = departing;
            out.target = target;
        } else if users != out.users {
            bail!("feature matrices list different users; rerun `wander features`");
        }
        out.matrices.push(FeatureMatrix {
            range,
            x,
            schema,
            users,
            rows,
            omitted: Vec::new(),
        });
    }
    Ok(out)
}
