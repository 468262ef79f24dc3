//! CSV formatting and the observed-statistics file format.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that values round-trip exactly. Lines end in `\n`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use dprmdi_core::channel::{Observation, ObservedStats, Setting};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

pub fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| anyhow!("flushing CSV: {e}"))?;
    Ok(String::from_utf8(bytes)?)
}

/// Writes `content` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

pub const STATS_HEADER: [&str; 4] = ["alice_setting", "bob_setting", "gain", "error_rate"];

pub fn stats_to_csv(stats: &ObservedStats) -> Result<String> {
    let mut w = writer();
    w.write_record(STATS_HEADER)?;
    for (a, b, obs) in stats.iter() {
        w.write_record([a.name(), b.name(), &fmt_f64(obs.gain), &fmt_f64(obs.error_rate)])?;
    }
    finish(w)
}

/// Parses a statistics CSV; every (Alice, Bob) setting pair must appear exactly once.
pub fn stats_from_csv(reader: impl Read) -> Result<ObservedStats> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols != STATS_HEADER {
        bail!(
            "expected header {:?}, found {:?}",
            STATS_HEADER.join(","),
            cols.join(",")
        );
    }
    let mut seen: BTreeMap<(Setting, Setting), Observation> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = || -> Result<((Setting, Setting), Observation)> {
            if rec.len() != 4 {
                bail!("expected 4 fields, found {}", rec.len());
            }
            let a: Setting = rec[0].parse()?;
            let b: Setting = rec[1].parse()?;
            let gain: f64 = rec[2].parse().map_err(|e| anyhow!("gain {:?}: {e}", &rec[2]))?;
            let err: f64 = rec[3].parse().map_err(|e| anyhow!("error_rate {:?}: {e}", &rec[3]))?;
            Ok(((a, b), Observation::new(gain, err)?))
        };
        let (key, obs) = parse().with_context(|| format!("line {line}"))?;
        if seen.insert(key, obs).is_some() {
            bail!("line {line}: duplicate entry for ({}, {})", key.0, key.1);
        }
    }
    let missing: Vec<String> = Setting::ALL
        .iter()
        .flat_map(|&a| Setting::ALL.iter().map(move |&b| (a, b)))
        .filter(|k| !seen.contains_key(k))
        .map(|(a, b)| format!("({a}, {b})"))
        .collect();
    if !missing.is_empty() {
        bail!("missing setting pairs: {}", missing.join(", "));
    }
    Ok(ObservedStats::from_fn(|a, b| seen[&(a, b)]))
}

pub fn load_stats(path: &Path) -> Result<ObservedStats> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    stats_from_csv(f).with_context(|| format!("in {}", path.display()))
}
