//! Tables, overlays, comparisons and charts built from finished reports.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb as Pixel, RgbImage};
use serde::Serialize;

use crate::classmap::{ClassMap, LesionClass};
use crate::error::{Error, Result};
use crate::mask::MaskImage;
use crate::metrics::{relative_improvement, MetricReport};
use crate::transfer::{rank_row, TransferMatrix};

pub const TABLE_I_FILE: &str = "table_i.tsv";
pub const TABLE_II_FILE: &str = "table_ii_dice.tsv";
pub const TABLE_III_FILE: &str = "table_iii_iou.tsv";
pub const TABLE_IV_FILE: &str = "table_iv.tsv";
pub const REPORTS_JSON: &str = "reports.json";

const BEST: &str = "*";
const SECOND: &str = "+";
const MISSING: &str = "-";

#[derive(Debug, Clone)]
pub struct OverlayImage {
    pub image: RgbImage,
    pub alpha: f64,
}

impl OverlayImage {
    pub fn save(&self, path: &Path) -> Result<()> {
        create_parent(path)?;
        self.image.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Blends each lesion pixel's class color over `image`:
/// round((1 − alpha)·base + alpha·color). Background pixels are copied.
pub fn render_overlay(image: &RgbImage, mask: &MaskImage, cmap: &ClassMap, alpha: f64) -> Result<OverlayImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(vec![format!("overlay alpha {alpha} is outside [0, 1]")]));
    }
    let dims = (image.width() as usize, image.height() as usize);
    if dims != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: mask.dims(),
        });
    }
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let label = mask.get(x as usize, y as usize);
        if !cmap.contains_index(label) {
            return Err(Error::InvalidLabel {
                label,
                x: x as usize,
                y: y as usize,
            });
        }
        if let Some(color) = cmap.color(label) {
            for (c, target) in px.0.iter_mut().zip(color.0) {
                *c = ((1.0 - alpha) * f64::from(*c) + alpha * f64::from(target)).round() as u8;
            }
        }
    }
    Ok(OverlayImage { image: out, alpha })
}

/// Labels of pixels whose color is exactly a class color; everything else
/// is background.
pub fn recover_labels(overlay: &RgbImage, cmap: &ClassMap) -> MaskImage {
    let (w, h) = (overlay.width() as usize, overlay.height() as usize);
    let labels = overlay
        .pixels()
        .map(|p| cmap.class_for_color(crate::classmap::Rgb(p.0)).unwrap_or(0))
        .collect();
    MaskImage::new(w, h, labels).expect("labels come from the class map")
}

fn fmt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(v) => format!("{v:.decimals$}"),
        None => MISSING.to_string(),
    }
}

/// Marks every cell equal to its column's maximum after rounding.
fn mark_columns(rows: &[Vec<Option<f64>>], decimals: usize) -> Vec<Vec<String>> {
    let cols = rows.first().map_or(0, Vec::len);
    let rounded = |v: f64| format!("{v:.decimals$}").parse::<f64>().unwrap_or(v);
    let best: Vec<Option<f64>> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r[c]).map(rounded).reduce(f64::max))
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(c, v)| {
                    let mut s = fmt(*v, decimals);
                    if v.is_some_and(|v| Some(rounded(v)) == best[c]) {
                        s.push_str(BEST);
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn render(header: &[String], labels: &[&str], cells: Vec<Vec<String>>) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for (label, row) in labels.iter().zip(cells) {
        out.push_str(label);
        for c in row {
            out.push('\t');
            out.push_str(&c);
        }
        out.push('\n');
    }
    out
}

/// Model × tpr/ppv/f1, 4 decimals, column best marked `*`.
pub fn table_i_tsv(reports: &[MetricReport]) -> String {
    let rows: Vec<Vec<Option<f64>>> = reports
        .iter()
        .map(|r| vec![r.micro_tpr, r.micro_ppv, r.micro_f1])
        .collect();
    let header = ["model", "tpr", "ppv", "f1"].map(String::from);
    let labels: Vec<&str> = reports.iter().map(MetricReport::label).collect();
    render(&header, &labels, mark_columns(&rows, 4))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassMetric {
    Dice,
    Iou,
}

impl ClassMetric {
    fn of(self, report: &MetricReport, class: LesionClass) -> Option<f64> {
        let s = report.class(class)?;
        match self {
            ClassMetric::Dice => s.dice,
            ClassMetric::Iou => s.iou,
        }
    }

    fn mean(self, report: &MetricReport) -> Option<f64> {
        match self {
            ClassMetric::Dice => report.mean_dice,
            ClassMetric::Iou => report.mean_iou,
        }
    }
}

/// Lesion classes in published column order.
pub const TABLE_CLASSES: [LesionClass; 5] = [
    LesionClass::Irf,
    LesionClass::Srf,
    LesionClass::Ca,
    LesionClass::He,
    LesionClass::Drusen,
];

/// Model × five lesion classes + mean, 3 decimals, column best marked `*`.
pub fn class_table_tsv(reports: &[MetricReport], metric: ClassMetric) -> String {
    let rows: Vec<Vec<Option<f64>>> = reports
        .iter()
        .map(|r| {
            let mut row: Vec<Option<f64>> = TABLE_CLASSES.iter().map(|&c| metric.of(r, c)).collect();
            row.push(metric.mean(r));
            row
        })
        .collect();
    let mut header = vec!["model".to_string()];
    header.extend(TABLE_CLASSES.iter().map(|c| c.name().to_string()));
    header.push("mean".into());
    let labels: Vec<&str> = reports.iter().map(MetricReport::label).collect();
    render(&header, &labels, mark_columns(&rows, 3))
}

/// Pairs × architectures mean IoU, 3 decimals. Per row the best is marked
/// `*` and the second `+`; incomplete rows are left unmarked.
pub fn table_iv_tsv(matrix: &TransferMatrix) -> String {
    let mut header = vec!["pair".to_string()];
    header.extend(matrix.architectures.iter().map(|a| a.short_code().to_string()));
    let labels: Vec<String> = matrix.pairs.iter().map(|p| p.label()).collect();
    let cells = matrix
        .pairs
        .iter()
        .map(|&pair| {
            let ranking = rank_row(matrix, pair).ok();
            matrix
                .architectures
                .iter()
                .map(|&arch| {
                    let mut s = fmt(matrix.cell(pair, arch).map(|c| c.mean_iou), 3);
                    if let Some(r) = &ranking {
                        match r.order.iter().position(|a| *a == arch) {
                            Some(0) => s.push_str(BEST),
                            Some(1) => s.push_str(SECOND),
                            _ => {}
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    render(&header, &labels, cells)
}

#[derive(Serialize)]
struct Mirror<'a> {
    reports: &'a [MetricReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    transfer: Option<&'a TransferMatrix>,
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    create_parent(&path)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the rounded tables plus a full-precision JSON mirror into
/// `out_dir` and returns the written paths.
pub fn emit_tables(reports: &[MetricReport], matrix: Option<&TransferMatrix>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![
        write(out_dir.join(TABLE_I_FILE), &table_i_tsv(reports))?,
        write(out_dir.join(TABLE_II_FILE), &class_table_tsv(reports, ClassMetric::Dice))?,
        write(out_dir.join(TABLE_III_FILE), &class_table_tsv(reports, ClassMetric::Iou))?,
    ];
    if let Some(m) = matrix {
        written.push(write(out_dir.join(TABLE_IV_FILE), &table_iv_tsv(m))?);
    }
    let mirror = Mirror {
        reports,
        transfer: matrix,
    };
    written.push(write(out_dir.join(REPORTS_JSON), &(serde_json::to_string_pretty(&mirror)? + "\n"))?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub metric: String,
    pub a_label: String,
    pub b_label: String,
    pub a: f64,
    pub b: f64,
    /// a − b
    pub delta: f64,
    /// 100·(a − b)/a
    pub relative_percent: f64,
    pub summary: String,
}

/// Absolute and relative difference of `metric` between two reports.
pub fn compare(a: &MetricReport, b: &MetricReport, metric: &str) -> Result<Comparison> {
    let get = |r: &MetricReport| {
        r.metric(metric).ok_or_else(|| Error::MissingMetric {
            report: r.label().to_string(),
            metric: metric.to_string(),
        })
    };
    let (va, vb) = (get(a)?, get(b)?);
    let relative_percent = if va == vb { 0.0 } else { 100.0 * relative_improvement(va, vb)? };
    let summary = format!(
        "{} leads {} by {:.2}% on {metric} ({:+.4})",
        a.label(),
        b.label(),
        relative_percent,
        va - vb
    );
    Ok(Comparison {
        metric: metric.to_string(),
        a_label: a.label().to_string(),
        b_label: b.label().to_string(),
        a: va,
        b: vb,
        delta: va - vb,
        relative_percent,
        summary,
    })
}

const CHART_BAR: u32 = 12;
const CHART_GAP: u32 = 8;
const CHART_HEIGHT: u32 = 200;

/// Grouped bar chart PNG: one group per lesion class, one bar per report,
/// bar height proportional to the class score. Bars take the class color.
pub fn class_bar_chart(reports: &[MetricReport], metric: ClassMetric, cmap: &ClassMap) -> RgbImage {
    let n = reports.len().max(1) as u32;
    let group = n * CHART_BAR + CHART_GAP;
    let width = CHART_GAP + group * TABLE_CLASSES.len() as u32;
    let mut img = RgbImage::from_pixel(width, CHART_HEIGHT + 2, Pixel([255, 255, 255]));
    for x in 0..width {
        img.put_pixel(x, CHART_HEIGHT, Pixel([0, 0, 0]));
    }
    for (g, &class) in TABLE_CLASSES.iter().enumerate() {
        let color = cmap.color(class.index()).map_or([128, 128, 128], |c| c.0);
        for (i, r) in reports.iter().enumerate() {
            let Some(v) = metric.of(r, class) else { continue };
            let h = (v.clamp(0.0, 1.0) * f64::from(CHART_HEIGHT)).round() as u32;
            let x0 = CHART_GAP + g as u32 * group + i as u32 * CHART_BAR;
            // shade alternate reports so neighbours stay distinguishable
            let shade = if i % 2 == 0 { 1.0 } else { 0.6 };
            let px = Pixel(color.map(|c| (f64::from(c) * shade) as u8));
            for x in x0..x0 + CHART_BAR - 1 {
                for y in CHART_HEIGHT - h..CHART_HEIGHT {
                    img.put_pixel(x, y, px);
                }
            }
        }
    }
    img
}

pub fn save_bar_chart(reports: &[MetricReport], metric: ClassMetric, cmap: &ClassMap, path: &Path) -> Result<()> {
    create_parent(path)?;
    class_bar_chart(reports, metric, cmap)
        .save(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}
