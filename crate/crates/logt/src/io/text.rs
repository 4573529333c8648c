//! Ground-truth and CSV text formats.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{EvalReport, GroundTruth};
use crate::model::RankedResult;

/// Parses the ground-truth text format, one line per query:
///
/// ```text
/// query_id | relevant ids | ignore ids
/// ```
///
/// The ignore field is optional; ids are whitespace-separated. Lines may
/// appear in any order; queries without a line get an empty relevant set
/// (they are skipped and flagged during evaluation). `#` starts a comment.
pub fn parse_ground_truth(path: &Path, num_queries: usize) -> Result<GroundTruth> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut relevant = vec![Vec::new(); num_queries];
    let mut ignore = vec![Vec::new(); num_queries];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('|');
        let qid: usize = fields
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::MalformedFile(format!("line {}: bad query id", lineno + 1)))?;
        if qid >= num_queries {
            return Err(Error::MalformedFile(format!(
                "line {}: query id {qid} out of range ({num_queries} queries)",
                lineno + 1
            )));
        }
        let parse_ids = |field: &str| -> Result<Vec<u32>> {
            field
                .split_whitespace()
                .map(|t| {
                    t.parse::<u32>().map_err(|_| {
                        Error::MalformedFile(format!("line {}: bad id `{t}`", lineno + 1))
                    })
                })
                .collect()
        };
        relevant[qid] = parse_ids(fields.next().unwrap_or(""))?;
        ignore[qid] = parse_ids(fields.next().unwrap_or(""))?;
        if fields.next().is_some() {
            return Err(Error::MalformedFile(format!(
                "line {}: too many `|` fields",
                lineno + 1
            )));
        }
    }
    GroundTruth::with_ignores(relevant, ignore)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for (qid, (rel, ign)) in gt.relevant.iter().zip(&gt.ignore).enumerate() {
        let rel: Vec<String> = rel.iter().map(|i| i.to_string()).collect();
        if ign.is_empty() {
            writeln!(out, "{qid} | {}", rel.join(" "))?;
        } else {
            let ign: Vec<String> = ign.iter().map(|i| i.to_string()).collect();
            writeln!(out, "{qid} | {} | {}", rel.join(" "), ign.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes ranked results: `query_id,rank,vector_id,score,suppressed_flag`.
///
/// Kept entries get ranks from 1; entries removed by correction follow with
/// rank 0 and flag 1, exposing what the suppression pass did.
pub fn write_results_csv(path: &Path, results: &[RankedResult]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "query_id,rank,vector_id,score,suppressed_flag")?;
    for (qid, r) in results.iter().enumerate() {
        for (rank, (i, s)) in r.entries.iter().enumerate() {
            writeln!(out, "{qid},{},{i},{s:.9},0", rank + 1)?;
        }
        for (i, s) in &r.suppressed {
            writeln!(out, "{qid},0,{i},{s:.9},1")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the per-query evaluation table:
/// `query_id,ap,decode_ops,measurements,seconds`. Skipped queries (empty
/// relevant set) leave the `ap` field blank.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "query_id,ap,decode_ops,measurements,seconds")?;
    for (qid, q) in report.per_query.iter().enumerate() {
        let ap = q.ap.map(|a| format!("{a:.6}")).unwrap_or_default();
        writeln!(
            out,
            "{qid},{ap},{},{},{:.6}",
            q.decode_ops, q.measurements, q.seconds
        )?;
    }
    out.flush()?;
    Ok(())
}
