//! Sample CSVs: a header naming the state coordinates, an optional `weight`
//! column, `#` comment lines.
//!
//! ```text
//! # rkhs-cc samples v1: x,y,xdot,ydot[,weight]
//! x,y,xdot,ydot,weight
//! 0.1,-0.02,1.0,0.01,1
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::constraint::Sample;
use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::io::{csv_line, fmt_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleLayout {
    /// `x, y, xdot, ydot`.
    Planar,
    /// `q1, q2, q1dot, q2dot`.
    Joint,
}

impl SampleLayout {
    pub fn columns(&self) -> [&'static str; 4] {
        match self {
            Self::Planar => ["x", "y", "xdot", "ydot"],
            Self::Joint => ["q1", "q2", "q1dot", "q2dot"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub layout: SampleLayout,
    pub set: WeightedSampleSet<Sample>,
}

impl SampleFile {
    /// Joint-layout files split into angle (`w1`) and velocity (`w2`) halves.
    pub fn split_joint(&self) -> (Vec<Sample>, Vec<Sample>) {
        self.set
            .values()
            .iter()
            .map(|s| (s[..2].to_vec(), s[2..].to_vec()))
            .unzip()
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

pub fn parse_samples<R: Read>(input: R) -> Result<SampleFile> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: csv_line(&e),
        msg: e.to_string(),
    })?;
    let find = |name: &str| headers.iter().position(|h| h == name);
    let layout = [SampleLayout::Planar, SampleLayout::Joint]
        .into_iter()
        .find(|l| l.columns().iter().all(|c| find(c).is_some()))
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!(
                "header must contain x,y,xdot,ydot or q1,q2,q1dot,q2dot; got {:?}",
                headers.iter().collect::<Vec<_>>()
            ),
        })?;
    let cols: Vec<usize> = layout.columns().iter().map(|c| find(c).unwrap()).collect();
    let weight_col = find("weight");
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: csv_line(&e),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("non-numeric cell {raw:?}"),
                })
        };
        values.push(cols.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        weights.push(match weight_col {
            Some(i) => cell(i)?,
            None => 1.0,
        });
    }
    if values.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no sample rows".into(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Parse {
            line: 0,
            msg: format!("weights sum to {total}"),
        });
    }
    let set = WeightedSampleSet::normalized(values, weights)?;
    Ok(SampleFile { layout, set })
}

pub fn ingest_samples(path: &Path) -> Result<SampleFile> {
    parse_samples(std::fs::File::open(path)?)
}

pub fn write_samples<W: Write>(out: W, layout: SampleLayout, set: &WeightedSampleSet<Sample>) -> Result<()> {
    let mut out = out;
    let cols = layout.columns();
    writeln!(out, "# rkhs-cc samples v1: {},weight", cols.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = cols.to_vec();
    header.push("weight");
    w.write_record(&header)?;
    for (s, wt) in set.iter() {
        let mut row: Vec<String> = s.iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(wt));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A numeric CSV table: header names and rows of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    }

    /// Rows projected onto `names`, in that order.
    pub fn select(&self, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        let cols = names.iter().map(|n| self.column(n)).collect::<Result<Vec<_>>>()?;
        Ok(self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect())
    }
}

pub fn parse_table<R: Read>(input: R) -> Result<Table> {
    let mut rdr = reader(input);
    let perr = |e: csv::Error| Error::Parse {
        line: csv_line(&e),
        msg: e.to_string(),
    };
    let headers: Vec<String> = rdr.headers().map_err(perr)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(perr)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = rec
            .iter()
            .map(|raw| {
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("non-numeric cell {raw:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    Ok(Table { headers, rows })
}

/// Reference trajectory rows `t,x,y,xdot,ydot,xddot,yddot` with strictly
/// increasing `t`.
pub fn parse_reference<R: Read>(input: R) -> Result<Vec<[f64; 7]>> {
    let t = parse_table(input)?;
    let rows = t.select(&["t", "x", "y", "xdot", "ydot", "xddot", "yddot"])?;
    let rows: Vec<[f64; 7]> = rows.into_iter().map(|r| std::array::from_fn(|i| r[i])).collect();
    if let Some(k) = rows.windows(2).position(|w| w[1][0] <= w[0][0]) {
        return Err(Error::Parse {
            line: k + 3,
            msg: "t must be strictly increasing".into(),
        });
    }
    Ok(rows)
}

/// Held-out draws for validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Holdout {
    /// Robot states and one state set per obstacle (`o1_x, o1_y, ...`).
    Planar {
        robot: Vec<Sample>,
        obstacles: Vec<Vec<Sample>>,
    },
    Joint {
        q: Vec<Sample>,
        qd: Vec<Sample>,
    },
}

pub fn parse_holdout<R: Read>(input: R) -> Result<Holdout> {
    let t = parse_table(input)?;
    if t.column("q1").is_ok() {
        let q = t.select(&["q1", "q2"])?;
        let qd = t.select(&["q1dot", "q2dot"])?;
        return Ok(Holdout::Joint { q, qd });
    }
    let robot = t.select(&SampleLayout::Planar.columns())?;
    let mut obstacles = Vec::new();
    loop {
        let k = obstacles.len() + 1;
        let names = ["x", "y", "xdot", "ydot"].map(|c| format!("o{k}_{c}"));
        if t.column(&names[0]).is_err() {
            break;
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        obstacles.push(t.select(&refs)?);
    }
    if obstacles.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "holdout needs q1,q2,q1dot,q2dot or x,y,xdot,ydot plus o1_x,o1_y,o1_xdot,o1_ydot".into(),
        });
    }
    Ok(Holdout::Planar { robot, obstacles })
}

/// Which distribution a snapshot row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotSource {
    Embedded,
    Desired,
}

/// `value,weight,which` rows for the embedded set at `u*` and the desired
/// set; optionally stable-sorted by value.
pub fn write_distribution_snapshot<W: Write>(
    out: W,
    embedded: &WeightedSampleSet<f64>,
    desired: &WeightedSampleSet<f64>,
    sort_by_value: bool,
) -> Result<()> {
    let mut rows: Vec<(f64, f64, SnapshotSource)> = embedded
        .iter()
        .map(|(v, w)| (*v, w, SnapshotSource::Embedded))
        .chain(desired.iter().map(|(v, w)| (*v, w, SnapshotSource::Desired)))
        .collect();
    if sort_by_value {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let mut out = out;
    writeln!(out, "# rkhs-cc distribution snapshot v1: value,weight,which")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "weight", "which"])?;
    for (v, wt, src) in rows {
        let which = match src {
            SnapshotSource::Embedded => "embedded",
            SnapshotSource::Desired => "desired",
        };
        w.write_record([fmt_f64(v), fmt_f64(wt), which.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
