//! Output formatting: every float is rounded to 12 significant digits.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// `x` rounded to 12 significant digits, printed in the shortest form that parses back to
/// the rounded value.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("float formatting round-trips")
}

pub fn fmt12(x: f64) -> String {
    let r = round12(x);
    if r.is_finite() && (r == 0.0 || (1e-6..1e16).contains(&r.abs())) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round12).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

pub struct Emitter {
    sink: Box<dyn Write>,
    format: Option<Format>,
}

impl Emitter {
    pub fn new(path: Option<&Path>, format: Option<Format>) -> io::Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        };
        Ok(Emitter { sink, format })
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn text(&mut self, s: &str) -> io::Result<()> {
        writeln!(self.sink, "{s}")
    }

    pub fn json<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        let mut v = serde_json::to_value(value).map_err(io::Error::other)?;
        round_value(&mut v);
        serde_json::to_writer_pretty(&mut self.sink, &v).map_err(io::Error::other)?;
        writeln!(self.sink)
    }

    pub fn csv(&mut self, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        writeln!(self.sink, "{}", header.join(","))?;
        for r in rows {
            writeln!(self.sink, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.sink.flush()
    }
}
