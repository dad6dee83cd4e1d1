use std::io::Write;
use std::path::Path;

/// Writes `rows` (values in [-range_db, 0]) as a binary 8-bit PGM, one
/// image row per spectrogram row.
pub fn write_pgm(path: &Path, rows: &[Vec<f64>], range_db: f64) -> std::io::Result<()> {
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = Vec::with_capacity(32 + width * height);
    write!(out, "P5\n{width} {height}\n255\n")?;
    for row in rows {
        for v in row {
            let level = ((v + range_db) / range_db * 255.0).round().clamp(0.0, 255.0);
            out.push(level as u8);
        }
    }
    std::fs::write(path, out)
}
