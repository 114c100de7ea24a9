//! CSV serialization for event samples and histograms.
//!
//! All numbers are written with 17 significant digits (`{:.16e}`), which
//! round-trips `f64` exactly: reading a file back yields bit-identical
//! values. Readers are strict — malformed rows fail with the file, row and
//! reason; they never skip or repair.
//!
//! Formats:
//! * flat events: `event_id,weight,x0,..,x{d-1}`
//! * paired events: `event_id,weight,gen_present,g0,..,sim_present,s0,..`
//!   where a missing side has presence `0` and empty feature cells
//! * histogram: `bin_lo,bin_hi,content`
//!
//! `event_id` is the 0-based position; readers require ids to be exactly
//! `0..n` in order, which keeps ids and in-memory indices interchangeable
//! everywhere else in the crate.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::{EventSet, PairedEvent};
use crate::error::{Error, Result};
use crate::hist::Histogram1D;

/// 17 significant digits — exact f64 round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Serialization(format!("non-finite {what}: {x}")))
    }
}

pub fn write_events(path: &Path, events: &EventSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = ["event_id", "weight"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..events.dim()).map(|k| format!("x{k}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..events.n_events() {
        let mut fields = Vec::with_capacity(2 + events.dim());
        fields.push(i.to_string());
        fields.push(fmt_f64(check_finite(events.weights()[i], "weight")?));
        for &x in events.row(i) {
            fields.push(fmt_f64(check_finite(x, "feature")?));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<EventSet> {
    let mut reader = csv_reader(path)?;
    let headers = read_header(&mut reader, path)?;
    if headers.len() < 3 || headers[0] != "event_id" || headers[1] != "weight" {
        return Err(parse_err(
            path,
            1,
            "expected header event_id,weight,x0,...".into(),
        ));
    }
    let dim = headers.len() - 2;
    for (k, h) in headers[2..].iter().enumerate() {
        if h != &format!("x{k}") {
            return Err(parse_err(path, 1, format!("expected column x{k}, got {h}")));
        }
    }

    let mut events = EventSet::new(dim);
    let mut row_buf = vec![0.0; dim];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 2, e.to_string()))?;
        let row = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.len() != dim + 2 {
            return Err(parse_err(
                path,
                row,
                format!("expected {} fields, got {}", dim + 2, record.len()),
            ));
        }
        check_event_id(&record[0], i, path, row)?;
        let w = parse_field(&record[1], "weight", path, row)?;
        for k in 0..dim {
            row_buf[k] = parse_field(&record[k + 2], &format!("x{k}"), path, row)?;
        }
        events.push(&row_buf, w);
    }
    if events.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} contains no events",
            path.display()
        )));
    }
    Ok(events)
}

pub fn write_pairs(path: &Path, pairs: &[PairedEvent]) -> Result<()> {
    let (gen_dim, sim_dim) = crate::dataset::paired_dims(pairs)?;
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = vec!["event_id".to_string(), "weight".to_string()];
    header.push("gen_present".to_string());
    header.extend((0..gen_dim).map(|k| format!("g{k}")));
    header.push("sim_present".to_string());
    header.extend((0..sim_dim).map(|k| format!("s{k}")));
    writeln!(out, "{}", header.join(","))?;

    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for (i, p) in pairs.iter().enumerate() {
        fields.clear();
        fields.push(i.to_string());
        fields.push(fmt_f64(check_finite(p.weight, "weight")?));
        write_side(&mut fields, p.gen.as_deref(), gen_dim)?;
        write_side(&mut fields, p.sim.as_deref(), sim_dim)?;
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn write_side(fields: &mut Vec<String>, side: Option<&[f64]>, dim: usize) -> Result<()> {
    match side {
        Some(xs) => {
            fields.push("1".to_string());
            for &x in xs {
                fields.push(fmt_f64(check_finite(x, "feature")?));
            }
        }
        None => {
            fields.push("0".to_string());
            for _ in 0..dim {
                fields.push(String::new());
            }
        }
    }
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairedEvent>> {
    let mut reader = csv_reader(path)?;
    let headers = read_header(&mut reader, path)?;
    let (gen_dim, sim_dim) = parse_paired_header(&headers, path)?;

    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 2, e.to_string()))?;
        let row = record.position().map_or(i + 2, |p| p.line() as usize);
        let expected = 4 + gen_dim + sim_dim;
        if record.len() != expected {
            return Err(parse_err(
                path,
                row,
                format!("expected {expected} fields, got {}", record.len()),
            ));
        }
        check_event_id(&record[0], i, path, row)?;
        let weight = parse_field(&record[1], "weight", path, row)?;
        let gen = read_side(&record, 2, gen_dim, "g", path, row)?;
        let sim = read_side(&record, 3 + gen_dim, sim_dim, "s", path, row)?;
        let pair = PairedEvent { gen, sim, weight };
        pair.validate()
            .map_err(|e| parse_err(path, row, e.to_string()))?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} contains no events",
            path.display()
        )));
    }
    Ok(pairs)
}

fn read_side(
    record: &csv::StringRecord,
    start: usize,
    dim: usize,
    prefix: &str,
    path: &Path,
    row: usize,
) -> Result<Option<Vec<f64>>> {
    let present = match &record[start] {
        "1" => true,
        "0" => false,
        other => {
            return Err(parse_err(
                path,
                row,
                format!("presence flag must be 0 or 1, got {other:?}"),
            ))
        }
    };
    let cells = (0..dim).map(|k| &record[start + 1 + k]);
    if present {
        let mut xs = Vec::with_capacity(dim);
        for (k, cell) in cells.enumerate() {
            xs.push(parse_field(cell, &format!("{prefix}{k}"), path, row)?);
        }
        Ok(Some(xs))
    } else {
        for (k, cell) in cells.enumerate() {
            if !cell.is_empty() {
                return Err(parse_err(
                    path,
                    row,
                    format!("{prefix}{k} must be empty when the side is absent, got {cell:?}"),
                ));
            }
        }
        Ok(None)
    }
}

fn parse_paired_header(headers: &[String], path: &Path) -> Result<(usize, usize)> {
    let bad = |msg: String| parse_err(path, 1, msg);
    if headers.len() < 6
        || headers[0] != "event_id"
        || headers[1] != "weight"
        || headers[2] != "gen_present"
    {
        return Err(bad(
            "expected header event_id,weight,gen_present,g0,..,sim_present,s0,..".into(),
        ));
    }
    let sim_flag = headers
        .iter()
        .position(|h| h == "sim_present")
        .ok_or_else(|| bad("missing sim_present column".into()))?;
    let gen_dim = sim_flag - 3;
    let sim_dim = headers.len() - sim_flag - 1;
    if gen_dim == 0 || sim_dim == 0 {
        return Err(bad("need at least one feature per side".into()));
    }
    for (k, h) in headers[3..sim_flag].iter().enumerate() {
        if h != &format!("g{k}") {
            return Err(bad(format!("expected column g{k}, got {h}")));
        }
    }
    for (k, h) in headers[sim_flag + 1..].iter().enumerate() {
        if h != &format!("s{k}") {
            return Err(bad(format!("expected column s{k}, got {h}")));
        }
    }
    Ok((gen_dim, sim_dim))
}

pub fn write_histogram(path: &Path, hist: &Histogram1D) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "bin_lo,bin_hi,content")?;
    for i in 0..hist.n_bins() {
        writeln!(
            out,
            "{},{},{}",
            fmt_f64(hist.edges[i]),
            fmt_f64(hist.edges[i + 1]),
            fmt_f64(check_finite(hist.contents[i], "bin content")?)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_histogram(path: &Path) -> Result<Histogram1D> {
    let mut reader = csv_reader(path)?;
    let headers = read_header(&mut reader, path)?;
    if headers != ["bin_lo", "bin_hi", "content"] {
        return Err(parse_err(path, 1, "expected header bin_lo,bin_hi,content".into()));
    }
    let mut edges: Vec<f64> = Vec::new();
    let mut contents = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, i + 2, e.to_string()))?;
        let row = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(parse_err(path, row, format!("expected 3 fields, got {}", record.len())));
        }
        let lo = parse_field(&record[0], "bin_lo", path, row)?;
        let hi = parse_field(&record[1], "bin_hi", path, row)?;
        let c = parse_field(&record[2], "content", path, row)?;
        match edges.last() {
            None => edges.push(lo),
            Some(&prev_hi) => {
                if prev_hi != lo {
                    return Err(parse_err(
                        path,
                        row,
                        format!("bins not contiguous: previous bin ends at {prev_hi}, this one starts at {lo}"),
                    ));
                }
            }
        }
        edges.push(hi);
        contents.push(c);
    }
    if contents.is_empty() {
        return Err(Error::EmptyInput(format!("{} contains no bins", path.display())));
    }
    let hist = Histogram1D::new(edges)?;
    hist.with_contents(contents)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file)))
}

fn read_header(reader: &mut csv::Reader<BufReader<File>>, path: &Path) -> Result<Vec<String>> {
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok(headers.iter().map(|s| s.to_string()).collect())
}

fn parse_field(cell: &str, name: &str, path: &Path, row: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(path, row, format!("cannot parse {name} from {cell:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, row, format!("{name} is not finite: {cell:?}")));
    }
    Ok(v)
}

fn check_event_id(cell: &str, expected: usize, path: &Path, row: usize) -> Result<()> {
    let id: usize = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(path, row, format!("cannot parse event_id from {cell:?}")))?;
    if id != expected {
        return Err(parse_err(
            path,
            row,
            format!("event_id {id} out of order, expected {expected}"),
        ));
    }
    Ok(())
}

fn parse_err(path: &Path, row: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        message,
    }
}
