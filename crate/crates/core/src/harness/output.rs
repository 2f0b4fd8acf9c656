//! CSV and SVG emission. Floats use Rust's shortest round-trip formatting,
//! so files parse back to the exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::aggregate::{MetricSeries, RunSeries};
use super::config::ExperimentConfig;
use super::experiment::ExperimentOutput;
use super::ratio::RatioRow;
use crate::error::{Error, Result};

fn opt(v: Option<&Vec<f64>>, i: usize) -> String {
    v.map(|s| s[i].to_string()).unwrap_or_default()
}

/// `k,E_dist,E_c,E_dist_std,E_c_std`.
pub fn errors_csv(m: &MetricSeries) -> String {
    let mut s = String::from("k,E_dist,E_c,E_dist_std,E_c_std\n");
    for i in 0..m.k.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.k[i],
            m.e_dist[i],
            opt(m.e_c.as_ref(), i),
            m.e_dist_std[i],
            opt(m.e_c_std.as_ref(), i)
        );
    }
    s
}

/// `k,k_E_dist,k_E_c`.
pub fn k_errors_csv(m: &MetricSeries) -> String {
    let mut s = String::from("k,k_E_dist,k_E_c\n");
    for i in 0..m.k.len() {
        let _ = writeln!(s, "{},{},{}", m.k[i], m.k_e_dist[i], opt(m.k_e_c.as_ref(), i));
    }
    s
}

/// `k,E_dist,E_c` for every slot of one run.
pub fn raw_csv(r: &RunSeries) -> String {
    let mut s = String::with_capacity(r.e_dist.len() * 48);
    s.push_str("k,E_dist,E_c\n");
    for (k, e) in r.e_dist.iter().enumerate() {
        let _ = writeln!(s, "{k},{e},{}", opt(r.e_c.as_ref(), k));
    }
    s
}

pub fn parse_raw_csv(run: usize, run_key: u64, text: &str) -> Result<RunSeries> {
    let mut lines = text.lines();
    if lines.next() != Some("k,E_dist,E_c") {
        return Err(Error::parse("bad raw header"));
    }
    let mut e_dist = Vec::new();
    let mut e_c = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::parse(format!("bad raw row `{line}`")));
        }
        e_dist.push(f[1].parse().map_err(|e| Error::parse(format!("`{line}`: {e}")))?);
        if !f[2].is_empty() {
            e_c.push(f[2].parse().map_err(|e| Error::parse(format!("`{line}`: {e}")))?);
        }
    }
    let e_c = (e_c.len() == e_dist.len()).then_some(e_c);
    Ok(RunSeries { run, run_key, e_dist, e_c })
}

/// `n,k,ratio,ratio_std`.
pub fn ratio_csv(rows: &[RatioRow]) -> String {
    let mut s = String::from("n,k,ratio,ratio_std\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.n, r.k, r.ratio, r.ratio_std);
    }
    s
}

/// `k,max_error`.
pub fn averaging_csv(max_error: &[f64]) -> String {
    let mut s = String::from("k,max_error\n");
    for (k, e) in max_error.iter().enumerate() {
        let _ = writeln!(s, "{k},{e}");
    }
    s
}

/// Log–log line plot of the aggregated curves.
pub fn svg_plot(m: &MetricSeries) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 50.0;
    let mut curves: Vec<(&str, &[f64])> = vec![("#1f77b4", &m.e_dist)];
    if let Some(c) = &m.e_c {
        curves.push(("#d62728", c));
    }
    let pts = |c: &[f64]| -> Vec<(f64, f64)> {
        m.k.iter().zip(c).filter(|(k, v)| **k > 0.0 && **v > 0.0).map(|(k, v)| (k.log10(), v.log10())).collect()
    };
    let all: Vec<(f64, f64)> = curves.iter().flat_map(|(_, c)| pts(c)).collect();
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    if all.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0).max(1e-12) * (H - 2.0 * PAD);
    let _ = write!(
        svg,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = write!(svg, r#"<text x="{}" y="{}" font-size="12">log10 k</text>"#, W / 2.0, H - 15.0);
    let _ = write!(svg, r#"<text x="5" y="{}" font-size="12">log10 E</text>"#, PAD - 10.0);
    for (color, c) in &curves {
        let path: Vec<String> = pts(c).iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = write!(svg, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, path.join(" "));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Streams raw per-run files into `<dir>/raw/`.
#[derive(Debug)]
pub struct RawWriter {
    dir: PathBuf,
}

impl RawWriter {
    pub fn new(out_dir: &Path) -> Result<Self> {
        let dir = out_dir.join("raw");
        fs::create_dir_all(&dir)?;
        Ok(RawWriter { dir })
    }

    pub fn path(&self, run: usize) -> PathBuf {
        self.dir.join(format!("run_{run:05}.csv"))
    }

    pub fn write(&self, r: &RunSeries) -> Result<()> {
        fs::write(self.path(r.run), raw_csv(r))?;
        Ok(())
    }
}

/// Writes the resolved config, aggregates, plot, optimum and dataset.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    fs::write(dir.join("errors.csv"), errors_csv(&out.series))?;
    fs::write(dir.join("k_errors.csv"), k_errors_csv(&out.series))?;
    fs::write(dir.join("errors.svg"), svg_plot(&out.series))?;
    fs::write(dir.join("optimum.txt"), out.setup.optimum.to_text())?;
    if let Some(d) = &out.setup.dataset {
        fs::write(dir.join("dataset.csv"), d.to_csv())?;
    }
    Ok(())
}

/// Files under `original/raw` that are missing or differ under `replayed/raw`.
pub fn compare_raw(original: &Path, replayed: &Path) -> Result<Vec<String>> {
    let mut names: Vec<_> = fs::read_dir(original.join("raw"))?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    let mut mismatched = Vec::new();
    for name in names {
        let a = fs::read(original.join("raw").join(&name))?;
        let b = fs::read(replayed.join("raw").join(&name)).ok();
        if b.as_deref() != Some(a.as_slice()) {
            mismatched.push(name.to_string_lossy().into_owned());
        }
    }
    Ok(mismatched)
}
