//! CSV and JSON output with a provenance header.
//!
//! Every CSV starts with `#` comment lines naming the tool, its version, the
//! configuration hash and the seed. Floats are written in shortest
//! round-trip form so identical inputs give identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{ShiftEntry, ShiftMap};
use crate::error::{Error, Result};
use crate::geometry::SiteIndex;
use crate::spectroscopy::Trace;

pub const TOOL: &str = "lightsync";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# tool={} version={} config_hash={} seed={}\n",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

pub fn shift_map_csv(map: &ShiftMap, provenance: &Provenance) -> String {
    let mut out = provenance.header();
    out.push_str(&format!(
        "# scene_hash={} compensation_power_w={} displacement_m={},{}\n",
        map.metadata.scene_hash,
        map.metadata.compensation_power,
        map.metadata.displacement[0],
        map.metadata.displacement[1]
    ));
    out.push_str("row,col,label,shift_Hz\n");
    for e in &map.entries {
        out.push_str(&format!("{},{},{},{}\n", e.index.row, e.index.col, e.label, e.shift_hz));
    }
    out
}

#[derive(Debug, Deserialize)]
struct MapRow {
    row: usize,
    col: usize,
    label: String,
    #[serde(rename = "shift_Hz")]
    shift_hz: f64,
}

/// Parse map rows; `#` lines are ignored. Labels must agree with indices.
pub fn parse_shift_map_csv(text: &str) -> Result<Vec<ShiftEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for row in reader.deserialize::<MapRow>() {
        let row = row?;
        let index = SiteIndex::new(row.row, row.col);
        if index.label() != row.label {
            return Err(Error::Config(format!(
                "label {} does not match row {} col {}",
                row.label, row.row, row.col
            )));
        }
        entries.push(ShiftEntry {
            index,
            label: row.label,
            shift_hz: row.shift_hz,
        });
    }
    if entries.is_empty() {
        return Err(Error::Empty("shift map file"));
    }
    Ok(entries)
}

pub fn trace_csv(trace: &Trace, provenance: &Provenance, site: &str) -> String {
    let mut out = provenance.header();
    out.push_str(&format!("# site={site}\n"));
    out.push_str("time_s,population,population_stderr\n");
    for i in 0..trace.len() {
        out.push_str(&format!("{},{},{}\n", trace.times[i], trace.population[i], trace.stderr[i]));
    }
    out
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    time_s: f64,
    population: f64,
    population_stderr: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Trace> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut trace = Trace {
        times: Vec::new(),
        population: Vec::new(),
        stderr: Vec::new(),
    };
    for row in reader.deserialize::<TraceRow>() {
        let row = row?;
        trace.times.push(row.time_s);
        trace.population.push(row.population);
        trace.stderr.push(row.population_stderr);
    }
    Ok(trace)
}

/// A JSON document with provenance fields merged in front.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn to_json<T: Serialize>(provenance: &Provenance, body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Report { provenance, body })?;
    s.push('\n');
    Ok(s)
}

/// Write every file or none: contents are staged as temporaries next to
/// their targets and renamed once all writes succeeded.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::new();
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, target) in &staged {
        fs::rename(tmp, target)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::MapMetadata;

    #[test]
    fn map_round_trip() {
        let map = ShiftMap {
            entries: vec![
                ShiftEntry {
                    index: SiteIndex::new(1, 0),
                    label: "b1".into(),
                    shift_hz: -123.456789012345,
                },
                ShiftEntry {
                    index: SiteIndex::new(4, 4),
                    label: "e5".into(),
                    shift_hz: 1e-12,
                },
            ],
            metadata: MapMetadata {
                scene_hash: "abc".into(),
                compensation_power: 0.0,
                displacement: [8e-6, 0.0],
            },
        };
        let text = shift_map_csv(&map, &Provenance::new("h", 7));
        assert!(text.starts_with("# tool=lightsync version="));
        let back = parse_shift_map_csv(&text).unwrap();
        assert_eq!(back, map.entries);
    }

    #[test]
    fn mislabelled_rows_rejected() {
        let text = "row,col,label,shift_Hz\n0,0,b1,1.0\n";
        assert!(parse_shift_map_csv(text).is_err());
        assert!(parse_shift_map_csv("row,col,label,shift_Hz\n").is_err());
    }

    #[test]
    fn trace_round_trip() {
        let t = Trace {
            times: vec![0.0, 0.001],
            population: vec![0.0, 0.25],
            stderr: vec![0.0, 0.01],
        };
        let back = parse_trace_csv(&trace_csv(&t, &Provenance::new("h", 1), "e5")).unwrap();
        assert_eq!(back, t);
    }
}
