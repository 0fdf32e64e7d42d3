use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Append-only line-delimited metric log: `step<TAB>key<TAB>value`, with
/// values printed as 17-significant-digit scientific notation so parsing
/// them back is lossless.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(MetricsWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn log(&mut self, step: u64, key: &str, value: f64) -> Result<()> {
        writeln!(self.out, "{step}\t{key}\t{value:.16e}")?;
        Ok(())
    }

    pub fn log_all(&mut self, step: u64, entries: &[(&str, f64)]) -> Result<()> {
        for (key, value) in entries {
            self.log(step, key, *value)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<(u64, String, f64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let step = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("metrics line {}: bad step", lineno + 1)))?;
        let key = parts
            .next()
            .ok_or_else(|| Error::Config(format!("metrics line {}: missing key", lineno + 1)))?
            .to_string();
        let value = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("metrics line {}: bad value", lineno + 1)))?;
        out.push((step, key, value));
    }
    Ok(out)
}
