//! Line-oriented plain-text instance files.
//!
//! ```text
//! PROBLEM TSP            PROBLEM CVRP           PROBLEM FFSP
//! N 3                    N 2 CAP 30             JOBS 2 STAGES 1
//! 0.1 0.2                DEPOT 0.5 0.5          MACHINES 2
//! 0.3 0.4                0.1 0.2 4              3 4
//! 0.5 0.6                0.3 0.4 7              5 2
//! ```
//!
//! Batch files concatenate instances separated by a blank line. Floats are
//! written in shortest round-trip form, so serialize/parse is lossless.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::{CvrpInstance, FfspInstance, Instance, Stage, TspInstance};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Syntax { line, message: message.into() })
}

pub fn serialize_instance(instance: &Instance) -> String {
    let mut out = String::new();
    match instance {
        Instance::Tsp(t) => {
            let _ = writeln!(out, "PROBLEM TSP\nN {}", t.n());
            for [x, y] in t.coords() {
                let _ = writeln!(out, "{x} {y}");
            }
        }
        Instance::Cvrp(c) => {
            let [dx, dy] = c.depot();
            let _ = writeln!(out, "PROBLEM CVRP\nN {} CAP {}\nDEPOT {dx} {dy}", c.n(), c.capacity());
            for ([x, y], d) in c.customers().iter().zip(c.demands()) {
                let _ = writeln!(out, "{x} {y} {d}");
            }
        }
        Instance::Ffsp(f) => {
            let _ = writeln!(out, "PROBLEM FFSP\nJOBS {} STAGES {}", f.num_jobs(), f.num_stages());
            for stage in f.stages() {
                let _ = writeln!(out, "MACHINES {}", stage.machines.len());
                for times in &stage.machines {
                    let row: Vec<String> = times.iter().map(|t| t.to_string()).collect();
                    let _ = writeln!(out, "{}", row.join(" "));
                }
            }
        }
    }
    out
}

pub fn serialize_batch(instances: &[Instance]) -> String {
    instances.iter().map(serialize_instance).collect::<Vec<_>>().join("\n")
}

/// Parses a text that holds exactly one instance.
pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let mut batch = parse_batch(text)?;
    match batch.len() {
        1 => Ok(batch.remove(0)),
        0 => err(1, "no instance found"),
        k => err(1, format!("expected one instance, found {k}")),
    }
}

pub fn parse_batch(text: &str) -> Result<Vec<Instance>, ParseError> {
    let mut chunks: Vec<Vec<(usize, &str)>> = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if !current.is_empty() {
                chunks.push(std::mem::take(&mut current));
            }
        } else {
            current.push((i + 1, line));
        }
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks.iter().map(|c| parse_chunk(c)).collect()
}

pub fn read_batch(path: impl AsRef<Path>) -> Result<Vec<Instance>, ParseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParseError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_batch(&text)
}

pub fn write_batch(path: impl AsRef<Path>, instances: &[Instance]) -> Result<(), ParseError> {
    let path = path.as_ref();
    std::fs::write(path, serialize_batch(instances))
        .map_err(|e| ParseError::Io { path: path.display().to_string(), message: e.to_string() })
}

struct Lines<'a> {
    lines: &'a [(usize, &'a str)],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), ParseError> {
        match self.lines.get(self.pos) {
            Some(&(no, text)) => {
                self.pos += 1;
                Ok((no, text.split_whitespace().collect()))
            }
            None => {
                let after = self.lines.last().map_or(1, |l| l.0 + 1);
                err(after, format!("unexpected end of instance, expected {what}"))
            }
        }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }
}

fn num<T: FromStr>(line: usize, tok: &str, what: &str) -> Result<T, ParseError> {
    tok.parse().map_err(|_| ParseError::Syntax { line, message: format!("invalid {what} `{tok}`") })
}

fn keyword(line: usize, toks: &[&str], expected: &[&str]) -> Result<(), ParseError> {
    let ok = toks.len() == expected.len() * 2 && expected.iter().enumerate().all(|(i, k)| toks[2 * i] == *k);
    if ok {
        Ok(())
    } else {
        let shape: Vec<String> = expected.iter().map(|k| format!("{k} <value>")).collect();
        err(line, format!("expected `{}`", shape.join(" ")))
    }
}

fn point(line: usize, toks: &[&str]) -> Result<[f64; 2], ParseError> {
    Ok([num(line, toks[0], "x coordinate")?, num(line, toks[1], "y coordinate")?])
}

fn parse_chunk(lines: &[(usize, &str)]) -> Result<Instance, ParseError> {
    let mut it = Lines { lines, pos: 0 };
    let (no, head) = it.next("PROBLEM header")?;
    if head.len() != 2 || head[0] != "PROBLEM" {
        return err(no, "expected `PROBLEM <TSP|CVRP|FFSP>`");
    }
    let instance = match head[1] {
        "TSP" => parse_tsp(&mut it)?,
        "CVRP" => parse_cvrp(&mut it)?,
        "FFSP" => parse_ffsp(&mut it)?,
        other => return err(no, format!("unknown problem `{other}`")),
    };
    if let Some(&(extra, _)) = lines.get(it.pos) {
        return err(extra, "trailing line after complete instance (missing blank separator?)");
    }
    Ok(instance)
}

fn count_mismatch(header: usize, declared: usize, what: &str, found: usize) -> ParseError {
    ParseError::Syntax { line: header, message: format!("header declares {declared} {what} but {found} follow") }
}

fn parse_tsp(it: &mut Lines<'_>) -> Result<Instance, ParseError> {
    let (hno, h) = it.next("`N <n>`")?;
    keyword(hno, &h, &["N"])?;
    let n: usize = num(hno, h[1], "node count")?;
    let body = it.lines.len() - it.pos;
    if body != n {
        return Err(count_mismatch(hno, n, "coordinate lines", body));
    }
    let mut coords = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, toks) = it.next("coordinate line")?;
        if toks.len() != 2 {
            return err(no, "expected `x y`");
        }
        coords.push(point(no, &toks)?);
    }
    TspInstance::new(coords).map(Instance::Tsp).or_else(|e| err(hno, e.to_string()))
}

fn parse_cvrp(it: &mut Lines<'_>) -> Result<Instance, ParseError> {
    let (hno, h) = it.next("`N <n> CAP <c>`")?;
    keyword(hno, &h, &["N", "CAP"])?;
    let n: usize = num(hno, h[1], "customer count")?;
    let cap: u32 = num(hno, h[3], "capacity")?;
    let (dno, d) = it.next("`DEPOT x y`")?;
    if d.len() != 3 || d[0] != "DEPOT" {
        return err(dno, "expected `DEPOT x y`");
    }
    let depot = point(dno, &d[1..])?;
    let body = it.lines.len() - it.pos;
    if body != n {
        return Err(count_mismatch(hno, n, "customer lines", body));
    }
    let mut customers = Vec::with_capacity(n);
    let mut demands = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, toks) = it.next("customer line")?;
        if toks.len() != 3 {
            return err(no, "expected `x y demand`");
        }
        customers.push(point(no, &toks)?);
        let demand: u32 = num(no, toks[2], "demand")?;
        if demand > cap {
            return err(no, format!("demand {demand} exceeds capacity {cap}"));
        }
        demands.push(demand);
    }
    CvrpInstance::new(depot, customers, demands, cap).map(Instance::Cvrp).or_else(|e| err(hno, e.to_string()))
}

fn parse_ffsp(it: &mut Lines<'_>) -> Result<Instance, ParseError> {
    let (hno, h) = it.next("`JOBS <j> STAGES <s>`")?;
    keyword(hno, &h, &["JOBS", "STAGES"])?;
    let jobs: usize = num(hno, h[1], "job count")?;
    let num_stages: usize = num(hno, h[3], "stage count")?;
    let mut stages = Vec::with_capacity(num_stages);
    for _ in 0..num_stages {
        let (mno, m) = it.next("`MACHINES <m>`")?;
        keyword(mno, &m, &["MACHINES"])?;
        let machines: usize = num(mno, m[1], "machine count")?;
        let mut rows = Vec::with_capacity(machines);
        for _ in 0..machines {
            let (no, toks) = it.next("processing-time row")?;
            if toks.len() != jobs {
                return err(no, format!("expected {jobs} processing times, found {}", toks.len()));
            }
            let row = toks.iter().map(|t| num(no, t, "processing time")).collect::<Result<Vec<u32>, _>>()?;
            rows.push(row);
        }
        stages.push(Stage { machines: rows });
    }
    let last = it.last_line();
    FfspInstance::new(jobs, stages).map(Instance::Ffsp).or_else(|e| err(last, e.to_string()))
}
