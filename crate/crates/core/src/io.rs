//! Text file formats.
//!
//! Every file written here starts with a version line `% nodepred-<kind>
//! <major>.<minor>`. Readers reject other major versions. Edge lists and
//! feature files may also come from elsewhere, so for those the version line
//! is optional; any other `%` line is a comment.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{CompositionTable, TEST_BUCKETS, TRAIN_BUCKETS};
use crate::examples::{Example, ExampleScope, ExampleSet, Purity};
use crate::graph::{Graph, Partition};
use crate::matrix::Matrix;
use crate::train::TrainReport;

pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_VERSION: &str = "1.0";

pub mod kind {
    pub const EDGES: &str = "edges";
    pub const FEATURES: &str = "features";
    pub const PARTITION: &str = "partition";
    pub const EXAMPLES: &str = "examples";
    pub const CHECKPOINT: &str = "checkpoint";
    pub const TRAIN_REPORT: &str = "train-report";
    pub const EVAL_REPORT: &str = "eval-report";
    pub const SYNTH_METADATA: &str = "synth-metadata";
    pub const MANIFEST: &str = "manifest";
    pub const LOSS_CURVE: &str = "loss-curve";
    pub const COMPOSITION: &str = "composition";
    pub const GRADCHECK: &str = "gradcheck";
    pub const SWEEP: &str = "sweep";
    pub const REPLAY: &str = "replay";
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Prefixes parse errors with the file they came from.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}


pub fn version_line(kind: &str) -> String {
    format!("% nodepred-{kind} {FORMAT_VERSION}")
}

/// Parses a `% nodepred-<kind> <version>` line. `Ok(None)` if the line is
/// not a version line at all.
fn parse_version_line(line: &str, kind: &str) -> Result<Option<()>> {
    let Some(rest) = line.trim().strip_prefix("% nodepred-") else {
        return Ok(None);
    };
    let mut parts = rest.split_whitespace();
    let found_kind = parts.next().unwrap_or("");
    let version = parts.next().unwrap_or("");
    if found_kind != kind {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected a {kind} file, found {found_kind}"),
        });
    }
    let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major != Some(FORMAT_MAJOR) {
        return Err(Error::UnsupportedVersion {
            kind: kind.to_string(),
            found: version.to_string(),
            supported: FORMAT_MAJOR,
        });
    }
    Ok(Some(()))
}

/// Checks the mandatory version line and returns the rest of the text.
pub fn strip_version<'a>(text: &'a str, kind: &str) -> Result<&'a str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    match parse_version_line(first, kind)? {
        Some(()) => Ok(rest),
        None => Err(Error::Parse {
            line: 1,
            msg: format!("missing {} version line", kind),
        }),
    }
}

/// Checks an optional leading version line.
fn check_optional_version(text: &str, kind: &str) -> Result<()> {
    if let Some(first) = text.lines().next() {
        parse_version_line(first, kind)?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::with_capacity(16 * g.num_edges() + 64);
    let _ = writeln!(out, "{}", version_line(kind::EDGES));
    let _ = writeln!(out, "#nodes {} directed {}", g.num_nodes(), u8::from(g.is_directed()));
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    out
}

/// Reads `#nodes <N> directed <0|1>` followed by `u v` lines.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    check_optional_version(text, kind::EDGES)?;
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty edge list"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (n, directed) = match fields.as_slice() {
        ["#nodes", n, "directed", d] => {
            let n: usize = n.parse().map_err(|_| parse_err(hline, format!("bad node count {n:?}")))?;
            let d = match *d {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(hline, format!("directed flag must be 0 or 1, got {other:?}"))),
            };
            (n, d)
        }
        _ => return Err(parse_err(hline, "expected header `#nodes <N> directed <0|1>`")),
    };
    let mut edges = Vec::new();
    for (ln, line) in lines {
        let mut it = line.split_whitespace();
        let (Some(u), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(ln, "expected two node indices"));
        };
        let u: usize = u.parse().map_err(|_| parse_err(ln, format!("bad node index {u:?}")))?;
        let v: usize = v.parse().map_err(|_| parse_err(ln, format!("bad node index {v:?}")))?;
        if u >= n || v >= n {
            return Err(parse_err(ln, format!("edge ({u}, {v}) outside 0..{n}")));
        }
        if u == v {
            return Err(parse_err(ln, format!("self-loop on node {u}")));
        }
        edges.push((u, v));
    }
    Graph::new(n, directed, edges)
}

pub fn read_edge_list(path: &Path) -> Result<Graph> {
    in_file(path, parse_edge_list(&read_text(path)?))
}

pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    write_text(path, &format_edge_list(g))
}

pub fn format_features(m: &Matrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", version_line(kind::FEATURES));
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// One comma-separated row of reals per node.
pub fn parse_features(text: &str) -> Result<Matrix> {
    check_optional_version(text, kind::FEATURES)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in content_lines(text) {
        let row = line
            .split(',')
            .map(|t| {
                let t = t.trim();
                match t.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(parse_err(ln, format!("bad feature value {t:?}"))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(ln, format!("{} values, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "feature file has no rows"));
    }
    Matrix::from_rows(&rows)
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    in_file(path, parse_features(&read_text(path)?))
}

pub fn write_features(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &format_features(m))
}

pub fn format_partition(p: &Partition) -> String {
    let mut out = String::with_capacity(6 * p.num_nodes() + 32);
    let _ = writeln!(out, "{}", version_line(kind::PARTITION));
    for &t in p.test_flags() {
        out.push_str(if t { "test\n" } else { "train\n" });
    }
    out
}

/// One `train` or `test` label per node, in node order.
pub fn parse_partition(text: &str) -> Result<Partition> {
    let body = strip_version(text, kind::PARTITION)?;
    let mut flags = Vec::new();
    for (ln, line) in content_lines(body) {
        flags.push(match line {
            "train" => false,
            "test" => true,
            other => return Err(parse_err(ln + 1, format!("expected train or test, got {other:?}"))),
        });
    }
    Partition::from_test_flags(flags)
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    in_file(path, parse_partition(&read_text(path)?))
}

pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    write_text(path, &format_partition(p))
}

/// One `label target k_pure k_spur member...` record per example, after
/// `%`-comment lines carrying the set's metadata.
pub fn format_examples(set: &ExampleSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", version_line(kind::EXAMPLES));
    let scope = match set.scope {
        ExampleScope::Train => "train",
        ExampleScope::Test => "test",
    };
    let _ = writeln!(out, "% scope {scope} purity {} seed {}", set.purity, set.seed);
    let _ = writeln!(out, "% skipped {} {}", set.skipped_positive, set.skipped_negative);
    for ex in &set.examples {
        let _ = write!(out, "{} {} {} {}", ex.label, ex.target, ex.pure_count, ex.spurious_count);
        for m in &ex.members {
            let _ = write!(out, " {m}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_examples(text: &str) -> Result<ExampleSet> {
    let body = strip_version(text, kind::EXAMPLES)?;
    let mut scope = None;
    let mut purity = None;
    let mut seed = 0;
    let mut skipped = (0, 0);
    let mut examples = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let ln = i + 2;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('%') {
            let f: Vec<&str> = meta.split_whitespace().collect();
            match f.as_slice() {
                ["scope", s, "purity", p, "seed", sd] => {
                    scope = Some(match *s {
                        "train" => ExampleScope::Train,
                        "test" => ExampleScope::Test,
                        other => return Err(parse_err(ln, format!("unknown scope {other:?}"))),
                    });
                    purity = Some(p.parse::<Purity>()?);
                    seed = sd.parse().map_err(|_| parse_err(ln, "bad seed"))?;
                }
                ["skipped", a, b] => {
                    skipped = (
                        a.parse().map_err(|_| parse_err(ln, "bad skip count"))?,
                        b.parse().map_err(|_| parse_err(ln, "bad skip count"))?,
                    );
                }
                _ => {}
            }
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(ln, format!("bad integer {t:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        if nums.len() < 5 {
            return Err(parse_err(ln, "record needs label, target, counts and at least one member"));
        }
        let label = match nums[0] {
            0 => 0,
            1 => 1,
            other => return Err(parse_err(ln, format!("label must be 0 or 1, got {other}"))),
        };
        let members = nums[4..].to_vec();
        if nums[2] + nums[3] != members.len() {
            return Err(parse_err(ln, "pure and spurious counts do not add up to the member count"));
        }
        examples.push(Example {
            members,
            target: nums[1],
            label,
            pure_count: nums[2],
            spurious_count: nums[3],
        });
    }
    Ok(ExampleSet {
        examples,
        purity: purity.ok_or_else(|| parse_err(2, "missing scope/purity line"))?,
        scope: scope.ok_or_else(|| parse_err(2, "missing scope/purity line"))?,
        seed,
        skipped_positive: skipped.0,
        skipped_negative: skipped.1,
    })
}

pub fn read_examples(path: &Path) -> Result<ExampleSet> {
    in_file(path, parse_examples(&read_text(path)?))
}

pub fn write_examples(path: &Path, set: &ExampleSet) -> Result<()> {
    write_text(path, &format_examples(set))
}

/// Version line followed by pretty-printed JSON.
pub fn format_json<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    let mut out = version_line(kind);
    out.push('\n');
    out.push_str(&serde_json::to_string_pretty(value)?);
    out.push('\n');
    Ok(out)
}

pub fn parse_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    Ok(serde_json::from_str(strip_version(text, kind)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    write_text(path, &format_json(kind, value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    in_file(path, parse_json(kind, &read_text(path)?))
}

/// `epoch,train_loss,val_loss`, one row per finished epoch.
pub fn format_loss_curve(report: &TrainReport) -> String {
    let mut out = version_line(kind::LOSS_CURVE);
    out.push_str("\nepoch,train_loss,val_loss\n");
    for (i, (t, v)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
        let _ = writeln!(out, "{},{t},{v}", i + 1);
    }
    out
}

/// `train_members,test_members,correct,total`, one row per bucket pair.
pub fn format_composition(table: &CompositionTable) -> String {
    let mut out = version_line(kind::COMPOSITION);
    out.push_str("\ntrain_members,test_members,correct,total\n");
    for (r, row) in table.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                CompositionTable::label(r, TRAIN_BUCKETS),
                CompositionTable::label(c, TEST_BUCKETS),
                cell.correct,
                cell.total
            );
        }
    }
    out
}
