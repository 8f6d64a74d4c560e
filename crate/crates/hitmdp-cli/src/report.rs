//! Run reports: a resolved-configuration header, the certificate in use,
//! and one results table, printable as aligned text or written as CSV.

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use hitmdp::weight::WeightCertificate;

/// Literal placed in hitting-time cells when every run was censored.
pub const CENSORED: &str = "CENSORED";

/// Locale-independent shortest round-trip rendering of a finite number.
pub fn num(x: f64) -> String {
    debug_assert!(x.is_finite(), "report cells must be finite");
    format!("{x}")
}

pub struct RunReport {
    pub command: String,
    /// Resolved configuration, in display order.
    pub settings: Vec<(String, String)>,
    /// Certificate constants `(c_bar, beta, gamma)` backing the run.
    pub certificate: Option<(f64, f64, f64)>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub wall: Duration,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            settings: Vec::new(),
            certificate: None,
            headers: Vec::new(),
            rows: Vec::new(),
            wall: Duration::ZERO,
        }
    }

    pub fn setting(&mut self, key: &str, value: impl Into<String>) {
        self.settings.push((key.to_string(), value.into()));
    }

    pub fn certificate(&mut self, cert: &WeightCertificate) {
        self.certificate = Some((cert.cost_bound(), cert.drift_bound(), cert.modulus()));
    }

    pub fn print(&self) {
        println!("command: {}", self.command);
        for (key, value) in &self.settings {
            println!("{key}: {value}");
        }
        if let Some((c_bar, beta, gamma)) = self.certificate {
            println!(
                "certificate: c_bar={} beta={} gamma={}",
                num(c_bar),
                num(beta),
                num(gamma)
            );
        }
        println!("wall_clock_s: {}", num(self.wall.as_secs_f64()));
        if self.headers.is_empty() {
            return;
        }
        println!();

        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let render = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        println!("{}", render(&self.headers).trim_end());
        for row in &self.rows {
            println!("{}", render(row).trim_end());
        }
    }

    /// Writes the results table with a fixed column order and documented
    /// headers.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(&self.headers)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        writer.into_inner().map_err(std::io::Error::other)?.flush()
    }
}
