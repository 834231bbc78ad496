//! Configuration documents, result files and the SVG heatmap.
//!
//! Every artifact is plain text and deterministic: identical results give
//! byte-identical files. Files are written to a temporary name in the target
//! directory and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use crate::analysis::{ReleaseDirection, StorageMetrics, TransportMetrics};
use crate::dynamics::{normalized_profile, Trajectory};
use crate::error::{Error, Result};
use crate::protocols::{
    DispersionSummary, ExperimentConfig, ExperimentResult, Metrics, ReductionPoint, ReductionSummary, ResultData,
    ScanRow,
};

pub const UNITS_HEADER: &str =
    "# units: energies and rates in kappa, times in 1/kappa, phases in radians (\"pi/2\" style literals accepted)";
pub const TRAJECTORY_HEADER: &str = "t,site,re,im";
pub const SCAN_HEADER: &str = "phi,q,reE,imE,vg";
pub const REDUCTION_HEADER: &str = "j,u_b_abs,adiabaticity_ratio,adiabaticity_warning,max_profile_error,manifold_residual";

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SCAN_FILE: &str = "scan.csv";
pub const REDUCTION_FILE: &str = "reduction.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const HEATMAP_FILE: &str = "heatmap.svg";

/// Writes `contents` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::config("out", format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn toml_error_key(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if marker != "unknown variant `" {
                if let Some(key) = rest.split('`').next() {
                    return key.to_string();
                }
            }
        }
    }
    if let Some(span) = err.span() {
        let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
        let line = text[line_start..].lines().next().unwrap_or("");
        if let Some((key, _)) = line.split_once('=') {
            return key.trim().to_string();
        }
        let header = line.trim().trim_matches(|c| c == '[' || c == ']');
        if !header.is_empty() {
            return header.to_string();
        }
    }
    "document".to_string()
}

/// Parses a configuration document. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config {
        key: toml_error_key(text, &e),
        message: e.message().replace('\n', " "),
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// TOML text of a configuration, without any provenance table.
pub fn config_to_toml(cfg: &ExperimentConfig) -> Result<String> {
    let mut bare = cfg.clone();
    bare.provenance = None;
    toml::to_string(&bare).map_err(|e| Error::config("document", e.to_string()))
}

/// SHA-256 (hex) of the canonical TOML of the resolved configuration.
pub fn config_hash(resolved: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(config_to_toml(resolved)?.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Resolved configuration plus a `[provenance]` table. Loading it back as a
/// config reproduces the run.
pub fn manifest(result: &ExperimentResult) -> Result<String> {
    let mut cfg = result.config.clone();
    let mut prov = toml::Table::new();
    prov.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    prov.insert("config_hash".into(), config_hash(&result.config)?.into());
    prov.insert(
        "methods".into(),
        toml::Value::Array(result.method_tags.iter().map(|t| t.as_str().into()).collect()),
    );
    cfg.provenance = Some(prov);
    let body = toml::to_string(&cfg).map_err(|e| Error::config("document", e.to_string()))?;
    Ok(format!("{UNITS_HEADER}\n{body}"))
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{field}: `{s}` is not a number"),
    })
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * traj.len() * traj.dim() + 16);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let t = fmt17(*t);
        for (site, c) in traj.site_labels.iter().zip(state) {
            let _ = writeln!(out, "{t},{site},{},{}", fmt17(c.re), fmt17(c.im));
        }
    }
    out
}

/// Contents of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub site_labels: Vec<i64>,
    pub states: Vec<Vec<C64>>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{TRAJECTORY_HEADER}`"),
            })
        }
    }
    let mut table = TrajectoryTable {
        times: vec![],
        site_labels: vec![],
        states: vec![],
    };
    let mut labels_done = false;
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line: n,
                message: format!("expected 4 fields, found {}", f.len()),
            });
        }
        let t = parse_f64(n, "t", f[0])?;
        let site: i64 = f[1].trim().parse().map_err(|_| Error::Parse {
            line: n,
            message: format!("site: `{}` is not an integer", f[1]),
        })?;
        let c = C64::new(parse_f64(n, "re", f[2])?, parse_f64(n, "im", f[3])?);
        if table.times.last().is_none_or(|&last| last.to_bits() != t.to_bits()) {
            if !table.states.is_empty() {
                labels_done = true;
                if table.states.last().map(Vec::len) != Some(table.site_labels.len()) {
                    return Err(Error::Parse {
                        line: n,
                        message: "ragged time block".into(),
                    });
                }
            }
            table.times.push(t);
            table.states.push(Vec::with_capacity(table.site_labels.len()));
        }
        let block = table.states.last_mut().expect("pushed");
        if labels_done {
            if table.site_labels.get(block.len()) != Some(&site) {
                return Err(Error::Parse {
                    line: n,
                    message: format!("site {site} out of order"),
                });
            }
        } else {
            if table.site_labels.last().is_some_and(|&s| s >= site) {
                return Err(Error::Parse {
                    line: n,
                    message: format!("site {site} out of order"),
                });
            }
            table.site_labels.push(site);
        }
        block.push(c);
    }
    if table.states.last().is_some_and(|b| b.len() != table.site_labels.len()) {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "truncated final time block".into(),
        });
    }
    Ok(table)
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt17(r.phi),
            fmt17(r.q),
            fmt17(r.energy.re),
            fmt17(r.energy.im),
            fmt17(r.group_velocity)
        );
    }
    out
}

pub fn parse_scan_csv(text: &str) -> Result<Vec<ScanRow>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(SCAN_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{SCAN_HEADER}`"),
        });
    }
    let mut rows = vec![];
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 5 fields, found {}", f.len()),
            });
        }
        let v: Vec<f64> = f
            .iter()
            .zip(["phi", "q", "reE", "imE", "vg"])
            .map(|(s, name)| parse_f64(i + 1, name, s))
            .collect::<Result<_>>()?;
        rows.push(ScanRow {
            phi: v[0],
            q: v[1],
            energy: C64::new(v[2], v[3]),
            group_velocity: v[4],
        });
    }
    Ok(rows)
}

pub fn reduction_csv(points: &[ReductionPoint]) -> String {
    let mut out = String::from(REDUCTION_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(p.j),
            fmt17(p.u_b_abs),
            fmt17(p.adiabaticity_ratio),
            p.adiabaticity_warning,
            fmt17(p.max_profile_error),
            fmt17(p.manifold_residual)
        );
    }
    out
}

fn num(x: f64) -> String {
    // Shortest string that parses back to the same double.
    format!("{x:?}")
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

/// Flat `(key, value)` pairs for a result: every metric field followed by
/// provenance.
pub fn metrics_record(result: &ExperimentResult) -> Result<Vec<(String, String)>> {
    let mut rec = vec![("experiment".to_string(), result.config.experiment.as_str().to_string())];
    rec.extend(metrics_pairs(&result.metrics));
    rec.push((
        "preset".into(),
        result.config.preset.clone().unwrap_or_else(|| "none".into()),
    ));
    rec.push(("config_hash".into(), config_hash(&result.config)?));
    rec.push(("methods".into(), result.method_tags.join(",")));
    if let Some(edge) = result.edge_fraction_max {
        rec.push(("edge_fraction_max".into(), num(edge)));
    }
    Ok(rec)
}

pub fn metrics_pairs(m: &Metrics) -> Vec<(String, String)> {
    let mut rec: Vec<(String, String)> = vec![];
    let mut put = |k: &str, v: String| rec.push((k.to_string(), v));
    match m {
        Metrics::Transport(t) => {
            put("velocity_estimate", num(t.velocity_estimate));
            put("reflection_fraction", num(t.reflection_fraction));
            put("transmission_fraction", num(t.transmission_fraction));
            put("interior_fraction", num(t.interior_fraction));
            put("centroid_series", join(&t.centroid_series));
        }
        Metrics::Storage(s) => {
            put("efficiency", num(s.efficiency));
            put("shape_fidelity", num(s.shape_fidelity));
            put("fit_width", num(s.fit_width));
            put("incident_velocity", num(s.incident_velocity));
            put("release_velocity", num(s.release_velocity));
            put("release_direction", s.release_direction.as_str().into());
            put("capture_fraction_min", num(s.capture_fraction_min));
        }
        Metrics::Dispersion(d) => {
            put("phis", join(&d.phis));
            put("argmax_q", join(&d.argmax_q));
            put("max_im", join(&d.max_im));
        }
        Metrics::Reduction(r) => {
            let col = |f: fn(&ReductionPoint) -> f64| join(&r.points.iter().map(f).collect::<Vec<_>>());
            put("j_values", col(|p| p.j));
            put("u_b_abs", col(|p| p.u_b_abs));
            put("adiabaticity_ratio", col(|p| p.adiabaticity_ratio));
            put(
                "adiabaticity_warning",
                r.points.iter().map(|p| p.adiabaticity_warning.to_string()).collect::<Vec<_>>().join(","),
            );
            put("max_profile_error", col(|p| p.max_profile_error));
            put("manifold_residual", col(|p| p.manifold_residual));
            put("monotone", r.monotone.to_string());
        }
    }
    rec
}

pub fn metrics_text(record: &[(String, String)]) -> String {
    record.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "{k} = {v}");
        s
    })
}

pub fn parse_metrics(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split_once(" = ")
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: "expected `key = value`".into(),
                })
        })
        .collect()
}

fn lookup<'a>(rec: &'a [(String, String)], key: &str) -> Result<&'a str> {
    rec.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::config(key, "missing from metrics"))
}

fn get_f64(rec: &[(String, String)], key: &str) -> Result<f64> {
    lookup(rec, key)?
        .parse()
        .map_err(|_| Error::config(key, "not a number"))
}

fn get_list(rec: &[(String, String)], key: &str) -> Result<Vec<f64>> {
    let v = lookup(rec, key)?;
    if v.is_empty() {
        return Ok(vec![]);
    }
    v.split(',')
        .map(|s| s.parse().map_err(|_| Error::config(key, format!("`{s}` is not a number"))))
        .collect()
}

fn get_bools(rec: &[(String, String)], key: &str) -> Result<Vec<bool>> {
    lookup(rec, key)?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::config(key, format!("`{s}` is not a boolean"))))
        .collect()
}

/// Rebuilds typed metrics from a parsed record.
pub fn metrics_from_record(rec: &[(String, String)]) -> Result<Metrics> {
    Ok(match lookup(rec, "experiment")? {
        "transport_single_site" | "transport_gaussian" => Metrics::Transport(TransportMetrics {
            centroid_series: get_list(rec, "centroid_series")?,
            velocity_estimate: get_f64(rec, "velocity_estimate")?,
            reflection_fraction: get_f64(rec, "reflection_fraction")?,
            transmission_fraction: get_f64(rec, "transmission_fraction")?,
            interior_fraction: get_f64(rec, "interior_fraction")?,
        }),
        "storage" => Metrics::Storage(StorageMetrics {
            efficiency: get_f64(rec, "efficiency")?,
            shape_fidelity: get_f64(rec, "shape_fidelity")?,
            fit_width: get_f64(rec, "fit_width")?,
            incident_velocity: get_f64(rec, "incident_velocity")?,
            release_velocity: get_f64(rec, "release_velocity")?,
            release_direction: lookup(rec, "release_direction")?.parse::<ReleaseDirection>()?,
            capture_fraction_min: get_f64(rec, "capture_fraction_min")?,
        }),
        "dispersion_scan" => Metrics::Dispersion(DispersionSummary {
            phis: get_list(rec, "phis")?,
            argmax_q: get_list(rec, "argmax_q")?,
            max_im: get_list(rec, "max_im")?,
        }),
        "reduction_check" => {
            let j = get_list(rec, "j_values")?;
            let u = get_list(rec, "u_b_abs")?;
            let ratio = get_list(rec, "adiabaticity_ratio")?;
            let warn = get_bools(rec, "adiabaticity_warning")?;
            let err = get_list(rec, "max_profile_error")?;
            let res = get_list(rec, "manifold_residual")?;
            if [u.len(), ratio.len(), warn.len(), err.len(), res.len()].iter().any(|&l| l != j.len()) {
                return Err(Error::config("j_values", "reduction columns differ in length"));
            }
            let points = (0..j.len())
                .map(|k| ReductionPoint {
                    j: j[k],
                    u_b_abs: u[k],
                    adiabaticity_ratio: ratio[k],
                    adiabaticity_warning: warn[k],
                    max_profile_error: err[k],
                    manifold_residual: res[k],
                })
                .collect();
            Metrics::Reduction(ReductionSummary {
                points,
                monotone: lookup(rec, "monotone")?
                    .parse()
                    .map_err(|_| Error::config("monotone", "not a boolean"))?,
            })
        }
        other => return Err(Error::config("experiment", format!("unknown experiment `{other}`"))),
    })
}

pub const HEATMAP_LEVELS: usize = 256;

/// Fixed 256-entry color table from dark navy to pale yellow:
/// `r = i`, `g = 255 (i/255)^1.8`, `b = 40 + 0.3 i`. Red rises strictly and
/// the other channels never fall, so luminance is strictly increasing.
pub fn heatmap_lut() -> Vec<[u8; 3]> {
    (0..HEATMAP_LEVELS)
        .map(|i| {
            let x = i as f64 / 255.0;
            [i as u8, (255.0 * x.powf(1.8)).round() as u8, (40.0 + 0.3 * i as f64).round() as u8]
        })
        .collect()
}

/// Relative luminance (sRGB, linearized) of a color.
pub fn luminance(rgb: [u8; 3]) -> f64 {
    let lin = |v: u8| {
        let c = v as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    0.2126 * lin(rgb[0]) + 0.7152 * lin(rgb[1]) + 0.0722 * lin(rgb[2])
}

/// LUT index of every cell, `[sample][site]`, from `|rho_n(t_k)|` scaled by
/// its maximum over the whole trajectory.
pub fn heatmap_levels(traj: &Trajectory) -> Result<Vec<Vec<u8>>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let rho: Vec<Vec<f64>> = (0..traj.len())
        .map(|k| normalized_profile(&traj.snapshot(k)))
        .collect::<Result<_>>()?;
    let peak = rho.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let top = (HEATMAP_LEVELS - 1) as f64;
    Ok(rho
        .iter()
        .map(|row| row.iter().map(|&x| (x / peak * top).round().clamp(0.0, top) as u8).collect())
        .collect())
}

const CELL: usize = 2;
const LEFT: usize = 70;
const TOP: usize = 20;
const BOTTOM: usize = 50;
const BAR_GAP: usize = 20;
const BAR_WIDTH: usize = 16;
const RIGHT: usize = 70;

/// SVG of `|rho_n(t)|`: sites run left to right, time runs downwards.
pub fn render_heatmap(traj: &Trajectory) -> Result<String> {
    let levels = heatmap_levels(traj)?;
    let lut = heatmap_lut();
    let (rows, cols) = (levels.len(), traj.dim());
    let plot_w = cols * CELL;
    let plot_h = rows * CELL;
    let plot_h_bar = plot_h.max(HEATMAP_LEVELS / 2);
    let width = LEFT + plot_w + BAR_GAP + BAR_WIDTH + RIGHT;
    let height = TOP + plot_h.max(plot_h_bar) + BOTTOM;
    let mut s = String::with_capacity(rows * cols * 40 + 20_000);
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    s.push_str("<style>rect{shape-rendering:crispEdges}");
    for (i, c) in lut.iter().enumerate() {
        let _ = write!(s, ".c{i}{{fill:#{:02x}{:02x}{:02x}}}", c[0], c[1], c[2]);
    }
    s.push_str("text{font-family:sans-serif;font-size:11px}</style>\n");
    let _ = writeln!(s, "<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>");
    let _ = writeln!(s, "<g id=\"cells\" transform=\"translate({LEFT},{TOP}) scale({CELL})\">");
    for (k, row) in levels.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            let _ = write!(s, "<rect x=\"{n}\" y=\"{k}\" width=\"1\" height=\"1\" class=\"c{v}\"/>");
        }
        s.push('\n');
    }
    s.push_str("</g>\n");

    let first = traj.site_labels[0];
    let last = traj.site_labels[cols - 1];
    let t0 = traj.times[0];
    let t1 = traj.times[rows - 1];
    let axis_y = TOP + plot_h;
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    let _ = writeln!(s, "<text x=\"{LEFT}\" y=\"{}\">{first}</text>", axis_y + 14);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{last}</text>",
        LEFT + plot_w,
        axis_y + 14
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">site n</text>",
        LEFT + plot_w / 2,
        axis_y + 32
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t0}</text>", LEFT - 4, TOP + 10);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t1}</text>", LEFT - 4, axis_y);
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">time (1/kappa)</text>",
        TOP + plot_h / 2,
        TOP + plot_h / 2
    );

    let bar_x = LEFT + plot_w + BAR_GAP;
    let bar_h = plot_h_bar;
    let _ = writeln!(s, "<g id=\"colorbar\">");
    for i in 0..HEATMAP_LEVELS {
        // Brightest level on top.
        let y0 = TOP + (HEATMAP_LEVELS - 1 - i) * bar_h / HEATMAP_LEVELS;
        let y1 = TOP + (HEATMAP_LEVELS - i) * bar_h / HEATMAP_LEVELS;
        let _ = write!(
            s,
            "<rect x=\"{bar_x}\" y=\"{y0}\" width=\"{BAR_WIDTH}\" height=\"{}\" class=\"c{i}\"/>",
            (y1 - y0).max(1)
        );
    }
    let _ = writeln!(s, "\n</g>");
    let label_x = bar_x + BAR_WIDTH + 4;
    let _ = writeln!(s, "<text x=\"{label_x}\" y=\"{}\">max</text>", TOP + 10);
    let _ = writeln!(s, "<text x=\"{label_x}\" y=\"{}\">0</text>", TOP + bar_h);
    let _ = writeln!(s, "<text x=\"{label_x}\" y=\"{}\">|rho|</text>", TOP + bar_h / 2);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes every artifact of `result` into `dir` and returns the paths.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![];
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    match &result.data {
        ResultData::Trajectory(traj) => {
            put(TRAJECTORY_FILE, trajectory_csv(traj))?;
            if svg {
                put(HEATMAP_FILE, render_heatmap(traj)?)?;
            }
        }
        ResultData::Scan(rows) => put(SCAN_FILE, scan_csv(rows))?,
        ResultData::Reduction(points) => put(REDUCTION_FILE, reduction_csv(points))?,
    }
    put(METRICS_FILE, metrics_text(&metrics_record(result)?))?;
    put(MANIFEST_FILE, manifest(result)?)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Method;
    use crate::protocols::{preset, run};

    fn tiny_traj() -> Trajectory {
        let states = vec![
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.1, -0.2), C64::new(1.0 / 3.0, 1e-300), C64::new(-0.0, 5e-17)],
        ];
        Trajectory::from_states(vec![0.0, 0.1], states, vec![-1, 0, 1], Method::Rk4 { dt: 0.01 })
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let traj = tiny_traj();
        let text = trajectory_csv(&traj);
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        let back = parse_trajectory_csv(&text).unwrap();
        assert_eq!(back.site_labels, traj.site_labels);
        for (a, b) in back.times.iter().zip(&traj.times) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (ra, rb) in back.states.iter().zip(&traj.states) {
            for (a, b) in ra.iter().zip(rb) {
                assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
            }
        }
    }

    #[test]
    fn trajectory_parse_errors() {
        assert!(parse_trajectory_csv("a,b\n").is_err());
        assert!(parse_trajectory_csv("t,site,re,im\n0,1,2\n").is_err());
        assert!(parse_trajectory_csv("t,site,re,im\n0,1,x,0\n").is_err());
        assert!(parse_trajectory_csv("t,site,re,im\n0,1,0,0\n0,0,0,0\n").is_err());
        assert!(parse_trajectory_csv("t,site,re,im\n0,0,0,0\n0,1,0,0\n1,0,0,0\n").is_err());
    }

    #[test]
    fn metrics_round_trip() {
        let m = Metrics::Storage(StorageMetrics {
            efficiency: 0.1 + 0.2,
            shape_fidelity: 0.99,
            fit_width: 7.25,
            incident_velocity: 2.0,
            release_velocity: -1.987654321,
            release_direction: ReleaseDirection::Reversed,
            capture_fraction_min: 1.0 / 3.0,
        });
        let mut rec = vec![("experiment".to_string(), "storage".to_string())];
        rec.extend(metrics_pairs(&m));
        let back = parse_metrics(&metrics_text(&rec)).unwrap();
        assert_eq!(back, rec);
        assert_eq!(metrics_from_record(&back).unwrap(), m);
    }

    #[test]
    fn metrics_keys_present() {
        let r = run(&preset("fig2").unwrap()).unwrap();
        let rec = metrics_record(&r).unwrap();
        let keys: Vec<&str> = rec.iter().map(|(k, _)| k.as_str()).collect();
        for k in ["experiment", "phis", "argmax_q", "max_im", "preset", "config_hash"] {
            assert!(keys.contains(&k), "{k}");
        }
    }

    #[test]
    fn scan_round_trip() {
        let r = run(&preset("fig2").unwrap()).unwrap();
        let ResultData::Scan(rows) = &r.data else { panic!() };
        assert_eq!(&parse_scan_csv(&scan_csv(rows)).unwrap(), rows);
    }

    #[test]
    fn lut_luminance_is_monotone() {
        let lut = heatmap_lut();
        assert_eq!(lut.len(), HEATMAP_LEVELS);
        for w in lut.windows(2) {
            assert!(luminance(w[1]) > luminance(w[0]), "{:?} -> {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn heatmap_cells_and_determinism() {
        let traj = tiny_traj();
        let levels = heatmap_levels(&traj).unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[0], vec![255, 0, 0]);
        let svg = render_heatmap(&traj).unwrap();
        assert_eq!(svg, render_heatmap(&traj).unwrap());
        assert_eq!(svg.matches("<rect x=\"").count(), 6 + HEATMAP_LEVELS + 1);
    }

    #[test]
    fn heatmap_uniform_row() {
        let traj = Trajectory::from_states(
            vec![0.0],
            vec![vec![C64::new(0.5, 0.0); 4]],
            vec![0, 1, 2, 3],
            Method::Rk4 { dt: 0.1 },
        );
        assert_eq!(heatmap_levels(&traj).unwrap(), vec![vec![255u8; 4]]);
        let empty = Trajectory::from_states(vec![], vec![], vec![0], Method::Rk4 { dt: 0.1 });
        assert!(matches!(render_heatmap(&empty), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn config_errors_name_the_key() {
        let err = parse_config("experiment = \"storage\"\n[lattice]\nkappa = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "bogus"), "{err}");
        let err = parse_config("experiment = \"storage\"\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "lattice"), "{err}");
        let err = parse_config("experiment = \"storage\"\n[lattice]\nkappa = \"x\"\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "kappa"), "{err}");
        let err = parse_config("experiment = \"nope\"\n[lattice]\nkappa = 1\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "experiment"), "{err}");
    }

    #[test]
    fn manifest_reloads_to_resolved_config() {
        let r = run(&preset("fig2").unwrap()).unwrap();
        let text = manifest(&r).unwrap();
        assert!(text.starts_with(UNITS_HEADER));
        let back = parse_config(&text).unwrap();
        assert!(back.provenance.is_some());
        assert_eq!(back.resolve().unwrap(), r.config);
        assert_eq!(config_hash(&back.resolve().unwrap()).unwrap(), config_hash(&r.config).unwrap());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
