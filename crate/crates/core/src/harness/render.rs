use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Binary PGM (P5, maxval 255). `rows` is row-major, top row first, values
/// in [0, 1]. Each `comments` entry becomes one `#` header line.
pub fn pgm_bytes(width: usize, height: usize, rows: &[f64], comments: &[String]) -> Result<Vec<u8>> {
    if rows.len() != width * height {
        return Err(Error::Shape(format!(
            "image {width}×{height} needs {} values, got {}",
            width * height,
            rows.len()
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::EmptyInput("image has no pixels".into()));
    }
    let mut header = String::from("P5\n");
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(header, "# {line}");
        }
    }
    let _ = write!(header, "{width} {height}\n255\n");
    let mut out = header.into_bytes();
    out.extend(rows.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// One heatmap channel as an image: column = x index, top row = largest y
/// index, scaled so the peak is white.
pub fn heatmap_image(channel: &[f64], w: usize, h: usize) -> Result<Vec<f64>> {
    if channel.len() != w * h {
        return Err(Error::Shape(format!("heatmap {w}×{h} needs {} values, got {}", w * h, channel.len())));
    }
    let peak = channel.iter().copied().fold(0.0f64, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let mut rows = Vec::with_capacity(w * h);
    for j in (0..h).rev() {
        for i in 0..w {
            rows.push(channel[i * h + j] * scale);
        }
    }
    Ok(rows)
}

/// Rounds a distribution to thousandths that still sum to 1000, giving the
/// leftover units to the largest remainders.
fn thousandths(row: &[f64]) -> Vec<u64> {
    let total: f64 = row.iter().sum();
    let scaled: Vec<f64> = row.iter().map(|v| v / total * 1000.0).collect();
    let mut units: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let short = 1000u64.saturating_sub(units.iter().sum());
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| (scaled[b] - scaled[b].floor()).total_cmp(&(scaled[a] - scaled[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().take(short as usize) {
        units[k] += 1;
    }
    units
}

/// Attention weights as text: one row per head, one column per token.
pub fn attention_table(tokens: &[String], attention: &[f64]) -> Result<String> {
    let n = tokens.len();
    if n == 0 || attention.len() != 4 * n {
        return Err(Error::Shape(format!(
            "attention of length {} does not match {n} tokens",
            attention.len()
        )));
    }
    let widths: Vec<usize> = tokens.iter().map(|t| t.chars().count().max(5)).collect();
    let mut out = String::from("head");
    for (t, w) in tokens.iter().zip(&widths) {
        let _ = write!(out, " {t:>w$}");
    }
    out.push('\n');
    for (k, row) in attention.chunks(n).enumerate() {
        let _ = write!(out, "a{}  ", k + 1);
        for (v, w) in thousandths(row).iter().zip(&widths) {
            let _ = write!(out, " {:>w$}", format!("{}.{:03}", v / 1000, v % 1000));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let bytes = pgm_bytes(2, 1, &[0.0, 1.0], &["hi".into()]).unwrap();
        assert_eq!(bytes, b"P5\n# hi\n2 1\n255\n\x00\xff".to_vec());
    }

    #[test]
    fn heatmap_orientation() {
        // w = 2, h = 2, mass at i = 2, j = 2 (top right).
        let rows = heatmap_image(&[0.0, 0.0, 0.0, 0.5], 2, 2).unwrap();
        assert_eq!(rows, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn table_shape() {
        let t = attention_table(&["a".into(), "b".into()], &[0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.25, 0.75]).unwrap();
        assert_eq!(t.lines().count(), 5);
        assert!(t.lines().nth(1).unwrap().ends_with("0.500 0.500"));
        assert!(t.lines().nth(4).unwrap().ends_with("0.250 0.750"));
    }

    #[test]
    fn printed_rows_sum_to_one() {
        assert_eq!(thousandths(&[1.0 / 3.0; 3]), vec![334, 333, 333]);
        assert_eq!(thousandths(&[0.1235, 0.1235, 0.753]).iter().sum::<u64>(), 1000);
    }
}
