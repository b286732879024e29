//! Snapshot dataset files.
//!
//! A dataset starts with one line holding a JSON [`DatasetHeader`]. Records
//! follow, one per snapshot: seed, `K`, transmitter and receiver positions
//! (`2K` values each, metres) and the channel matrix as `2K^2` values
//! (row-major, real and imaginary parts interleaved). The binary encoding
//! stores the seed and `K` as little-endian `u64` and every other value as a
//! little-endian `f64`; the text encoding writes each record on its own line
//! with space-separated decimals that parse back to the same bits.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use iwgt_core::channelsim::{generate_snapshot, snapshot_seed, ChannelSnapshot, Point, ScenarioConfig, Topology};
use iwgt_core::netgraph::{build_graph, compute_norm_stats, InterferenceGraph, NormStats};
use iwgt_core::scenarios::{parse_strong_id, scenario, strong_id, strong_interference_snapshot, STRONG_SIGMA2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::parallel;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Binary,
    Text,
}

/// The generator a dataset was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Scenario { config: ScenarioConfig },
    /// Synthetic gains with unit power ceiling; see
    /// [`iwgt_core::scenarios::strong_interference_snapshot`].
    StrongInterference { k: usize },
}

impl Source {
    /// Resolves a library scenario (`D1`..`D20`, `D1-toy`..`D20-toy`) or a
    /// strong-interference family (`strong-k<K>`).
    pub fn named(name: &str) -> Result<Self> {
        if let Some(config) = scenario(name) {
            return Ok(Source::Scenario { config });
        }
        match parse_strong_id(name) {
            Some(k) => Ok(Source::StrongInterference { k }),
            None => Err(Error::Config(format!("unknown scenario `{name}`"))),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Source::Scenario { config } => config.scenario_id.clone(),
            Source::StrongInterference { k } => strong_id(*k),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Source::Scenario { config } => config.k,
            Source::StrongInterference { k } => *k,
        }
    }

    /// Receiver noise power in watts.
    pub fn sigma2(&self) -> Result<f64> {
        match self {
            Source::Scenario { config } => Ok(config.noise_watts()?),
            Source::StrongInterference { .. } => Ok(STRONG_SIGMA2),
        }
    }

    /// Transmit power ceiling in watts.
    pub fn p_max(&self) -> f64 {
        match self {
            Source::Scenario { config } => config.p_max_watts(),
            Source::StrongInterference { .. } => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Source::Scenario { config } => Ok(config.validate()?),
            Source::StrongInterference { k: 0 } => Err(Error::Config("k must be at least 1".into())),
            Source::StrongInterference { .. } => Ok(()),
        }
    }

    pub fn snapshot(&self, seed: u64) -> Result<ChannelSnapshot> {
        Ok(match self {
            Source::Scenario { config } => generate_snapshot(config, seed)?,
            Source::StrongInterference { k } => strong_interference_snapshot(*k, seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub encoding: Encoding,
    pub source: Source,
    pub n_snapshots: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub snapshots: Vec<ChannelSnapshot>,
}

impl Dataset {
    /// Snapshot `i` is drawn with seed `base_seed + i`. Generation runs in
    /// parallel; the result does not depend on the schedule.
    pub fn generate(source: Source, n: usize, base_seed: u64, encoding: Encoding) -> Result<Self> {
        source.validate()?;
        let snapshots = parallel::install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| source.snapshot(snapshot_seed(base_seed, i)))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Dataset {
            header: DatasetHeader {
                format_version: DATASET_VERSION,
                encoding,
                source,
                n_snapshots: n,
                base_seed,
            },
            snapshots,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn norm_stats(&self) -> Result<NormStats> {
        Ok(compute_norm_stats(self.snapshots.iter())?)
    }

    pub fn p_max(&self) -> f64 {
        self.header.source.p_max()
    }

    pub fn graphs(&self, stats: &NormStats) -> Result<Vec<InterferenceGraph>> {
        let sigma2 = self.header.source.sigma2()?;
        self.snapshots
            .iter()
            .map(|s| Ok(build_graph(s, stats, sigma2)?))
            .collect()
    }

    /// The first `n` snapshots as a dataset of their own.
    pub fn head(&self, n: usize) -> Dataset {
        let snapshots: Vec<_> = self.snapshots.iter().take(n).cloned().collect();
        Dataset {
            header: DatasetHeader {
                n_snapshots: snapshots.len(),
                ..self.header.clone()
            },
            snapshots,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header).map_err(|e| Error::Config(e.to_string()))?;
        out.push(b'\n');
        for s in &self.snapshots {
            match self.header.encoding {
                Encoding::Binary => {
                    out.extend_from_slice(&s.seed.to_le_bytes());
                    out.extend_from_slice(&(s.k() as u64).to_le_bytes());
                    for v in record_values(s) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Encoding::Text => {
                    let mut line = format!("{} {}", s.seed, s.k());
                    for v in record_values(s) {
                        line.push(' ');
                        line.push_str(&format!("{v:e}"));
                    }
                    line.push('\n');
                    out.extend_from_slice(line.as_bytes());
                }
            }
        }
        Ok(out)
    }

    /// Writes atomically: the file appears only once fully written.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: DatasetHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::corrupt(path, format!("dataset header: {e}")))?;
        if header.format_version != DATASET_VERSION {
            return Err(Error::format(
                path,
                FormatError::Version {
                    found: header.format_version,
                    expected: DATASET_VERSION,
                },
            ));
        }
        header.source.validate().map_err(|e| Error::corrupt(path, e.to_string()))?;
        let mut body = Vec::new();
        reader.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
        let snapshots = match header.encoding {
            Encoding::Binary => parse_binary(path, &header, &body)?,
            Encoding::Text => parse_text(path, &header, &body)?,
        };
        Ok(Dataset { header, snapshots })
    }
}

fn record_values(s: &ChannelSnapshot) -> impl Iterator<Item = f64> + '_ {
    let t = &s.topology;
    t.tx_pos
        .iter()
        .chain(&t.rx_pos)
        .flat_map(|p| [p.x, p.y])
        .chain(s.gains.iter().flat_map(|h| [h.re, h.im]))
}

fn record_len(k: usize) -> usize {
    4 * k + 2 * k * k
}

fn snapshot_from(seed: u64, k: usize, v: &[f64], id: &str) -> ChannelSnapshot {
    let point = |i: usize| Point::new(v[2 * i], v[2 * i + 1]);
    ChannelSnapshot {
        topology: Topology {
            tx_pos: (0..k).map(point).collect(),
            rx_pos: (k..2 * k).map(point).collect(),
        },
        gains: v[4 * k..].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        seed,
        scenario_id: id.to_string(),
    }
}

fn check_k(path: &Path, header: &DatasetHeader, i: usize, k: usize) -> Result<()> {
    if k != header.source.k() {
        return Err(Error::format(
            path,
            FormatError::Shape(format!("record {i} has K = {k}, header says {}", header.source.k())),
        ));
    }
    Ok(())
}

fn parse_binary(path: &Path, header: &DatasetHeader, body: &[u8]) -> Result<Vec<ChannelSnapshot>> {
    let k = header.source.k();
    let per = 16 + 8 * record_len(k);
    let expected = (per * header.n_snapshots) as u64;
    if (body.len() as u64) < expected {
        return Err(Error::format(
            path,
            FormatError::Truncated {
                expected,
                found: body.len() as u64,
            },
        ));
    }
    if body.len() as u64 > expected {
        return Err(Error::corrupt(path, "trailing bytes after the last record"));
    }
    let id = header.source.id();
    body.chunks_exact(per)
        .enumerate()
        .map(|(i, rec)| {
            let word = |j: usize| <[u8; 8]>::try_from(&rec[8 * j..8 * j + 8]).expect("8 bytes");
            let seed = u64::from_le_bytes(word(0));
            check_k(path, header, i, u64::from_le_bytes(word(1)) as usize)?;
            let v: Vec<f64> = (2..per / 8).map(|j| f64::from_le_bytes(word(j))).collect();
            Ok(snapshot_from(seed, k, &v, &id))
        })
        .collect()
}

fn parse_text(path: &Path, header: &DatasetHeader, body: &[u8]) -> Result<Vec<ChannelSnapshot>> {
    let text = std::str::from_utf8(body).map_err(|_| Error::corrupt(path, "records are not UTF-8"))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != header.n_snapshots {
        return Err(Error::corrupt(
            path,
            format!("header promises {} records, found {}", header.n_snapshots, lines.len()),
        ));
    }
    let id = header.source.id();
    let k = header.source.k();
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::corrupt(path, format!("record {i}: {what}"));
            let mut it = line.split_ascii_whitespace();
            let seed: u64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad seed"))?;
            let kk: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad K"))?;
            check_k(path, header, i, kk)?;
            let v = it.map(|s| s.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad("bad number"))?;
            if v.len() != record_len(k) {
                return Err(bad("wrong number of values"));
            }
            Ok(snapshot_from(seed, k, &v, &id))
        })
        .collect()
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Normalization statistics as a standalone JSON file.
pub fn write_stats(path: &Path, stats: &NormStats) -> Result<()> {
    let mut s = serde_json::to_string_pretty(stats).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_stats(path: &Path) -> Result<NormStats> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stats: NormStats = serde_json::from_str(&s).map_err(|e| Error::corrupt(path, e.to_string()))?;
    stats.validate().map_err(|e| Error::corrupt(path, e.to_string()))?;
    Ok(stats)
}
