//! Visualization: colormapped depth images and variance-profile plots.
//!
//! Output is always an 8-bit RGB buffer built pixel by pixel, so identical
//! inputs produce identical bytes.

use depthfill_core::DepthGrid;
use thiserror::Error;

type Canvas = image::ImageBuffer<image::Rgb<u8>, Vec<u8>>;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("nothing to render: input has no valid values")]
    EmptyInput,
    #[error("malformed profile CSV at line {line}: {reason}")]
    MalformedProfile { line: usize, reason: String },
}

/// Perceptual dark-violet to yellow ramp, sampled at 16 evenly spaced
/// control points and linearly interpolated between them.
const COLORMAP_ANCHORS: [[f64; 3]; 16] = [
    [0.267, 0.005, 0.329],
    [0.283, 0.100, 0.424],
    [0.277, 0.185, 0.490],
    [0.254, 0.265, 0.530],
    [0.222, 0.339, 0.549],
    [0.191, 0.407, 0.556],
    [0.164, 0.471, 0.558],
    [0.140, 0.534, 0.555],
    [0.120, 0.596, 0.544],
    [0.135, 0.659, 0.518],
    [0.208, 0.719, 0.473],
    [0.328, 0.773, 0.406],
    [0.478, 0.821, 0.318],
    [0.647, 0.858, 0.210],
    [0.825, 0.885, 0.106],
    [0.993, 0.906, 0.144],
];

const PLOT_WIDTH: u32 = 640;
const PLOT_HEIGHT: u32 = 480;
const MARGIN_LEFT: u32 = 60;
const MARGIN_RIGHT: u32 = 20;
const MARGIN_TOP: u32 = 20;
const MARGIN_BOTTOM: u32 = 40;

const AXIS_COLOR: image::Rgb<u8> = image::Rgb([0, 0, 0]);
const MEAN_COLOR: image::Rgb<u8> = image::Rgb([96, 96, 96]);
const BAND_COLOR: image::Rgb<u8> = image::Rgb([173, 203, 230]);
const ANALYTIC_COLOR: image::Rgb<u8> = image::Rgb([40, 70, 160]);
const LINE_PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

pub fn sample_colormap(t: f64) -> image::Rgb<u8> {
    let x = t.clamp(0.0, 1.0) * (COLORMAP_ANCHORS.len() - 1) as f64;
    let i = (x.floor() as usize).min(COLORMAP_ANCHORS.len() - 2);
    let frac = x - i as f64;
    let mut rgb = [0u8; 3];
    for ch in 0..3 {
        let v = COLORMAP_ANCHORS[i][ch] * (1.0 - frac) + COLORMAP_ANCHORS[i + 1][ch] * frac;
        rgb[ch] = (v * 255.0).round() as u8;
    }
    image::Rgb(rgb)
}

/// Colormaps a depth grid normalized over the [p2, p98] percentile range of
/// its valid values (clamped outside, so the minimum maps to the ramp start
/// and the maximum to its end). Invalid pixels are black; a degenerate
/// percentile range renders uniformly at the ramp midpoint.
pub fn colormap_image(grid: &DepthGrid) -> Result<Canvas, RenderError> {
    let mut sorted: Vec<f64> = grid.valid_values().collect();
    if sorted.is_empty() {
        return Err(RenderError::EmptyInput);
    }
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, 2.0);
    let hi = percentile(&sorted, 98.0);
    let span = hi - lo;

    let (height, width) = grid.shape();
    let mut canvas = Canvas::new(width as u32, height as u32);
    for row in 0..height {
        for col in 0..width {
            let color = match grid.get(row, col) {
                None => image::Rgb([0, 0, 0]),
                Some(v) => {
                    let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
                    sample_colormap(t)
                }
            };
            canvas.put_pixel(col as u32, row as u32, color);
        }
    }
    Ok(canvas)
}

/// Linear-interpolation percentile of an ascending slice, `p` in [0, 100].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

struct Profile {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_profile(csv: &str) -> Result<Profile, RenderError> {
    let mut lines = csv.lines().enumerate();
    let (_, header) = lines.next().ok_or(RenderError::EmptyInput)?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if columns.first().map(String::as_str) != Some("distance") || columns.len() < 2 {
        return Err(RenderError::MalformedProfile {
            line: 1,
            reason: format!("expected a `distance,...` header, got `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(RenderError::MalformedProfile {
                line: idx + 1,
                reason: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| RenderError::MalformedProfile {
                line: idx + 1,
                reason: format!("`{}` is not a number", field.trim()),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(RenderError::EmptyInput);
    }
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Ok(Profile { columns, rows })
}

/// Renders a variance-profile CSV as a fixed-size plot.
///
/// The 1D schema `distance,analytic_var,empirical_var,ci95` draws the
/// mean (zero) line, the empirical mean +/- ci95 band, and the analytic
/// +/- 1.96 sigma envelope. Any other `distance,<name>,...` schema draws
/// one polyline per column against a zero-based axis.
pub fn profile_plot(csv: &str) -> Result<Canvas, RenderError> {
    let profile = parse_profile(csv)?;
    let names: Vec<&str> = profile.columns.iter().skip(1).map(String::as_str).collect();
    if names == ["analytic_var", "empirical_var", "ci95"] {
        plot_variance_band(&profile)
    } else {
        plot_polylines(&profile)
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x_px(&self, x: f64) -> u32 {
        let w = (PLOT_WIDTH - MARGIN_LEFT - MARGIN_RIGHT - 1) as f64;
        let t = if self.x_max > self.x_min {
            (x - self.x_min) / (self.x_max - self.x_min)
        } else {
            0.5
        };
        MARGIN_LEFT + (t.clamp(0.0, 1.0) * w).round() as u32
    }

    fn y_px(&self, y: f64) -> u32 {
        let h = (PLOT_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM - 1) as f64;
        let t = (y - self.y_min) / (self.y_max - self.y_min);
        // Pixel rows grow downward.
        MARGIN_TOP + ((1.0 - t.clamp(0.0, 1.0)) * h).round() as u32
    }
}

fn blank_canvas() -> Canvas {
    Canvas::from_pixel(PLOT_WIDTH, PLOT_HEIGHT, image::Rgb([255, 255, 255]))
}

fn draw_axes(canvas: &mut Canvas) {
    let bottom = PLOT_HEIGHT - MARGIN_BOTTOM;
    for x in MARGIN_LEFT..=PLOT_WIDTH - MARGIN_RIGHT - 1 {
        canvas.put_pixel(x, bottom, AXIS_COLOR);
    }
    for y in MARGIN_TOP..=bottom {
        canvas.put_pixel(MARGIN_LEFT, y, AXIS_COLOR);
    }
}

fn draw_vspan(canvas: &mut Canvas, x: u32, y0: u32, y1: u32, color: image::Rgb<u8>) {
    for y in y0.min(y1)..=y0.max(y1) {
        canvas.put_pixel(x, y, color);
    }
}

fn draw_line(canvas: &mut Canvas, a: (u32, u32), b: (u32, u32), color: image::Rgb<u8>) {
    let (mut x0, mut y0) = (a.0 as i64, a.1 as i64);
    let (x1, y1) = (b.0 as i64, b.1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        canvas.put_pixel(x0 as u32, y0 as u32, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Piecewise-linear interpolation of column `col` at abscissa `x` over rows
/// sorted by their first field.
fn interp_column(rows: &[Vec<f64>], col: usize, x: f64) -> f64 {
    let first = &rows[0];
    if x <= first[0] {
        return first[col];
    }
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if x <= b[0] {
            let span = b[0] - a[0];
            if span <= 0.0 {
                return b[col];
            }
            let t = (x - a[0]) / span;
            return a[col] * (1.0 - t) + b[col] * t;
        }
    }
    rows[rows.len() - 1][col]
}

fn plot_variance_band(profile: &Profile) -> Result<Canvas, RenderError> {
    let rows = &profile.rows;
    let mut y_max = 0.0f64;
    for row in rows {
        y_max = y_max.max(row[3]).max(1.96 * row[1].max(0.0).sqrt());
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    let frame = Frame {
        x_min: rows[0][0],
        x_max: rows[rows.len() - 1][0],
        y_min: -1.05 * y_max,
        y_max: 1.05 * y_max,
    };
    let mut canvas = blank_canvas();

    let x_left = frame.x_px(frame.x_min);
    let x_right = frame.x_px(frame.x_max);
    for x in x_left..=x_right {
        let t = if x_right > x_left {
            (x - x_left) as f64 / (x_right - x_left) as f64
        } else {
            0.0
        };
        let at = frame.x_min + t * (frame.x_max - frame.x_min);
        let ci = interp_column(rows, 3, at);
        draw_vspan(&mut canvas, x, frame.y_px(-ci), frame.y_px(ci), BAND_COLOR);
    }
    for x in x_left..=x_right {
        canvas.put_pixel(x, frame.y_px(0.0), MEAN_COLOR);
    }
    for pair in rows.windows(2) {
        for sign in [-1.0, 1.0] {
            let env = |row: &Vec<f64>| sign * 1.96 * row[1].max(0.0).sqrt();
            draw_line(
                &mut canvas,
                (frame.x_px(pair[0][0]), frame.y_px(env(&pair[0]))),
                (frame.x_px(pair[1][0]), frame.y_px(env(&pair[1]))),
                ANALYTIC_COLOR,
            );
        }
    }
    draw_axes(&mut canvas);
    Ok(canvas)
}

fn plot_polylines(profile: &Profile) -> Result<Canvas, RenderError> {
    let rows = &profile.rows;
    let mut y_max = 0.0f64;
    for row in rows {
        for &v in &row[1..] {
            y_max = y_max.max(v);
        }
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    let frame = Frame {
        x_min: rows[0][0],
        x_max: rows[rows.len() - 1][0],
        y_min: 0.0,
        y_max: 1.05 * y_max,
    };
    let mut canvas = blank_canvas();
    for col in 1..profile.columns.len() {
        let color = image::Rgb(LINE_PALETTE[(col - 1) % LINE_PALETTE.len()]);
        for pair in rows.windows(2) {
            draw_line(
                &mut canvas,
                (frame.x_px(pair[0][0]), frame.y_px(pair[0][col])),
                (frame.x_px(pair[1][0]), frame.y_px(pair[1][col])),
                color,
            );
        }
        if rows.len() == 1 {
            canvas.put_pixel(frame.x_px(rows[0][0]), frame.y_px(rows[0][col]), color);
        }
    }
    draw_axes(&mut canvas);
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use depthfill_core::DepthSpace;

    #[test]
    fn constant_grid_renders_uniform_with_black_invalids() {
        let mut valid = vec![true; 64];
        valid[10] = false;
        let grid =
            DepthGrid::new(8, 8, vec![3.0; 64], valid, DepthSpace::Linear).unwrap();
        let img = colormap_image(&grid).unwrap();
        let reference = sample_colormap(0.5);
        for row in 0..8u32 {
            for col in 0..8u32 {
                let px = *img.get_pixel(col, row);
                if (row, col) == (1, 2) {
                    assert_eq!(px, image::Rgb([0, 0, 0]));
                } else {
                    assert_eq!(px, reference);
                }
            }
        }
    }

    #[test]
    fn extremes_hit_the_colormap_endpoints() {
        let values: Vec<f64> = (0..100).map(|i| 1.0 + i as f64).collect();
        let grid = DepthGrid::from_dense(10, 10, values, DepthSpace::Linear).unwrap();
        let img = colormap_image(&grid).unwrap();
        let start = image::Rgb([
            (COLORMAP_ANCHORS[0][0] * 255.0).round() as u8,
            (COLORMAP_ANCHORS[0][1] * 255.0).round() as u8,
            (COLORMAP_ANCHORS[0][2] * 255.0).round() as u8,
        ]);
        let end = image::Rgb([
            (COLORMAP_ANCHORS[15][0] * 255.0).round() as u8,
            (COLORMAP_ANCHORS[15][1] * 255.0).round() as u8,
            (COLORMAP_ANCHORS[15][2] * 255.0).round() as u8,
        ]);
        assert_eq!(*img.get_pixel(0, 0), start);
        assert_eq!(*img.get_pixel(9, 9), end);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let grid =
            DepthGrid::new(4, 4, vec![0.0; 16], vec![false; 16], DepthSpace::Linear).unwrap();
        assert!(matches!(colormap_image(&grid), Err(RenderError::EmptyInput)));
    }

    #[test]
    fn variance_profile_plots_band_and_envelope() {
        let mut csv = String::from("distance,analytic_var,empirical_var,ci95\n");
        for n in 1..=32 {
            let var = 1e-4 * n as f64;
            csv.push_str(&format!("{n},{var},{var},{}\n", 1.96 * var.sqrt()));
        }
        let img = profile_plot(&csv).unwrap();
        assert_eq!((img.width(), img.height()), (PLOT_WIDTH, PLOT_HEIGHT));
        let band_pixels = img.pixels().filter(|p| **p == BAND_COLOR).count();
        let envelope_pixels = img.pixels().filter(|p| **p == ANALYTIC_COLOR).count();
        assert!(band_pixels > 100, "band pixels {band_pixels}");
        assert!(envelope_pixels > 50, "envelope pixels {envelope_pixels}");
        // Pure function of the text: identical bytes on a second render.
        assert_eq!(img.as_raw(), profile_plot(&csv).unwrap().as_raw());
    }

    #[test]
    fn solver_std_schema_plots_one_line_per_column() {
        let mut csv = String::from("distance,std_r1,std_r3\n");
        for n in 0..16 {
            csv.push_str(&format!("{n},{},{}\n", 0.1 * n as f64, 0.05 * n as f64));
        }
        let img = profile_plot(&csv).unwrap();
        let first = img.pixels().filter(|p| p.0 == LINE_PALETTE[0]).count();
        let second = img.pixels().filter(|p| p.0 == LINE_PALETTE[1]).count();
        assert!(first > 50 && second > 50, "line pixels {first}/{second}");
    }

    #[test]
    fn malformed_profiles_are_rejected_with_line_numbers() {
        assert!(matches!(
            profile_plot("wrong,header\n1,2\n"),
            Err(RenderError::MalformedProfile { line: 1, .. })
        ));
        assert!(matches!(
            profile_plot("distance,ci95\n"),
            Err(RenderError::EmptyInput)
        ));
        assert!(matches!(
            profile_plot("distance,ci95\n1,2\n3,oops\n"),
            Err(RenderError::MalformedProfile { line: 3, .. })
        ));
        assert!(matches!(
            profile_plot("distance,ci95\n1,2,3\n"),
            Err(RenderError::MalformedProfile { line: 2, .. })
        ));
    }
}
