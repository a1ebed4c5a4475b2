//! Per-seed report rows and per-run aggregate summaries.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::io::{csv_line, fmt_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seed: u64,
    pub solver: String,
    pub degree: u32,
    pub rho1: f64,
    pub rho2: f64,
    pub u_star: Vec<f64>,
    pub cost: f64,
    pub mmd: f64,
    pub objective: f64,
    pub empirical_eta: Option<f64>,
    pub n: usize,
    pub n_w1: usize,
    pub n_w2: usize,
    pub n_holdout: usize,
    /// Omitted unless timing is requested (keeps reports reproducible).
    pub wall_ms: Option<f64>,
    /// Per-constraint satisfaction (multi-obstacle runs).
    pub constraint_eta: Vec<f64>,
}

fn header(dim: usize, extra: usize) -> Vec<String> {
    let mut h: Vec<String> = ["seed", "solver", "d", "rho1", "rho2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if dim == 1 {
        h.push("u_star".into());
    } else {
        h.extend((1..=dim).map(|i| format!("u{i}")));
    }
    h.extend(
        [
            "J",
            "mmd",
            "objective",
            "empirical_eta",
            "n",
            "n_w1",
            "n_w2",
            "N_holdout",
            "wall_ms",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h.extend((1..=extra).map(|i| format!("eta_c{i}")));
    h
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes a schema comment, a header and one row per report. All rows must
/// share the decision dimension.
pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let dim = rows.first().map(|r| r.u_star.len()).unwrap_or(1);
    let extra = rows.first().map(|r| r.constraint_eta.len()).unwrap_or(0);
    if rows
        .iter()
        .any(|r| r.u_star.len() != dim || r.constraint_eta.len() != extra)
    {
        return Err(Error::InvalidInput("report rows have mixed shapes".into()));
    }
    let header = header(dim, extra);
    let mut out = out;
    writeln!(out, "# rkhs-cc report v1: {}", header.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.seed.to_string(),
            r.solver.clone(),
            r.degree.to_string(),
            fmt_f64(r.rho1),
            fmt_f64(r.rho2),
        ];
        rec.extend(r.u_star.iter().map(|u| fmt_f64(*u)));
        rec.extend([
            fmt_f64(r.cost),
            fmt_f64(r.mmd),
            fmt_f64(r.objective),
            opt(r.empirical_eta),
            r.n.to_string(),
            r.n_w1.to_string(),
            r.n_w2.to_string(),
            r.n_holdout.to_string(),
            opt(r.wall_ms),
        ]);
        rec.extend(r.constraint_eta.iter().map(|e| fmt_f64(*e)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_report<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let perr = |e: csv::Error| Error::Parse {
        line: csv_line(&e),
        msg: e.to_string(),
    };
    let headers: Vec<String> = rdr.headers().map_err(perr)?.iter().map(String::from).collect();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let u_cols: Vec<usize> = match headers.iter().position(|h| h == "u_star") {
        Some(i) => vec![i],
        None => {
            let mut v = Vec::new();
            while let Some(i) = headers.iter().position(|h| *h == format!("u{}", v.len() + 1)) {
                v.push(i);
            }
            if v.is_empty() {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing decision columns (u_star or u1..um)".into(),
                });
            }
            v
        }
    };
    let mut eta_cols = Vec::new();
    while let Some(i) = headers
        .iter()
        .position(|h| *h == format!("eta_c{}", eta_cols.len() + 1))
    {
        eta_cols.push(i);
    }
    let idx = [
        "seed",
        "solver",
        "d",
        "rho1",
        "rho2",
        "J",
        "mmd",
        "objective",
        "empirical_eta",
        "n",
        "n_w1",
        "n_w2",
        "N_holdout",
        "wall_ms",
    ]
    .map(col);
    let mut cols = [0usize; 14];
    for (c, i) in cols.iter_mut().zip(idx) {
        *c = i?;
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(perr)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let raw = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize, what: &str| Error::Parse {
            line,
            msg: format!("column {:?}: expected {what}, got {:?}", headers[i], raw(i)),
        };
        let float = |i: usize| raw(i).parse::<f64>().map_err(|_| bad(i, "a number"));
        let opt_float = |i: usize| -> Result<Option<f64>> {
            if raw(i).is_empty() {
                Ok(None)
            } else {
                float(i).map(Some)
            }
        };
        let int = |i: usize| raw(i).parse::<usize>().map_err(|_| bad(i, "a nonnegative integer"));
        rows.push(ReportRow {
            seed: raw(cols[0]).parse().map_err(|_| bad(cols[0], "an integer seed"))?,
            solver: raw(cols[1]).to_string(),
            degree: raw(cols[2]).parse().map_err(|_| bad(cols[2], "an integer degree"))?,
            rho1: float(cols[3])?,
            rho2: float(cols[4])?,
            u_star: u_cols.iter().map(|&i| float(i)).collect::<Result<_>>()?,
            cost: float(cols[5])?,
            mmd: float(cols[6])?,
            objective: float(cols[7])?,
            empirical_eta: opt_float(cols[8])?,
            n: int(cols[9])?,
            n_w1: int(cols[10])?,
            n_w2: int(cols[11])?,
            n_holdout: int(cols[12])?,
            wall_ms: opt_float(cols[13])?,
            constraint_eta: eta_cols.iter().map(|&i| float(i)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Aggregate over the seeds of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub solver: String,
    pub degree: u32,
    pub rho1: f64,
    pub rho2: f64,
    pub seeds: usize,
    pub mean_cost: f64,
    pub mean_eta: Option<f64>,
    pub min_eta: Option<f64>,
    pub n: usize,
    pub n_w1: usize,
    pub n_w2: usize,
    pub n_holdout: usize,
}

impl SummaryRow {
    pub fn from_rows(label: &str, rows: &[ReportRow]) -> Option<Self> {
        let first = rows.first()?;
        let k = rows.len() as f64;
        let etas: Vec<f64> = rows.iter().filter_map(|r| r.empirical_eta).collect();
        let (mean_eta, min_eta) = if etas.len() == rows.len() {
            (
                Some(etas.iter().sum::<f64>() / k),
                Some(etas.iter().copied().fold(f64::INFINITY, f64::min)),
            )
        } else {
            (None, None)
        };
        Some(Self {
            label: label.to_string(),
            solver: first.solver.clone(),
            degree: first.degree,
            rho1: first.rho1,
            rho2: first.rho2,
            seeds: rows.len(),
            mean_cost: rows.iter().map(|r| r.cost).sum::<f64>() / k,
            mean_eta,
            min_eta,
            n: first.n,
            n_w1: first.n_w1,
            n_w2: first.n_w2,
            n_holdout: first.n_holdout,
        })
    }
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let header = [
        "label",
        "solver",
        "d",
        "rho1",
        "rho2",
        "seeds",
        "mean_J",
        "mean_eta",
        "min_eta",
        "n",
        "n_w1",
        "n_w2",
        "N_holdout",
    ];
    let mut out = out;
    writeln!(out, "# rkhs-cc summary v1: {}", header.join(","))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.solver.clone(),
            r.degree.to_string(),
            fmt_f64(r.rho1),
            fmt_f64(r.rho2),
            r.seeds.to_string(),
            fmt_f64(r.mean_cost),
            opt(r.mean_eta),
            opt(r.min_eta),
            r.n.to_string(),
            r.n_w1.to_string(),
            r.n_w2.to_string(),
            r.n_holdout.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(u: Vec<f64>) -> ReportRow {
        ReportRow {
            seed: 7,
            solver: "rkhs".into(),
            degree: 3,
            rho1: 100.0,
            rho2: 1.0,
            u_star: u,
            cost: 0.1 + 0.2,
            mmd: 1e-17,
            objective: 0.3,
            empirical_eta: Some(0.96321),
            n: 40,
            n_w1: 20,
            n_w2: 20,
            n_holdout: 100_000,
            wall_ms: None,
            constraint_eta: vec![],
        }
    }

    #[test]
    fn roundtrip_scalar_and_vector() {
        for rows in [
            vec![row(vec![0.4123456789012345])],
            vec![row(vec![1.0, -2.5]), row(vec![3.0, 1e-300])],
        ] {
            let mut buf = Vec::new();
            write_report(&mut buf, &rows).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert!(text.starts_with("# rkhs-cc report v1"));
            assert_eq!(parse_report(buf.as_slice()).unwrap(), rows);
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let err = parse_report("seed,solver\n1,rkhs\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
