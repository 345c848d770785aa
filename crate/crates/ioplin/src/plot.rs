//! Minimal raster line plots for PR curves.

use ioplin_core::metrics::PrPoint;
use ioplin_core::Raster;

const SIZE: usize = 320;
const MARGIN: usize = 24;

fn put(img: &mut Raster, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        for (c, &v) in color.iter().enumerate() {
            img.set(x as usize, y as usize, c, v);
        }
    }
}

/// Bresenham segment.
fn line(img: &mut Raster, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
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

fn to_px(recall: f64, precision: f64) -> (i64, i64) {
    let span = (SIZE - 2 * MARGIN) as f64;
    let x = MARGIN as f64 + recall.clamp(0.0, 1.0) * span;
    let y = (SIZE - MARGIN) as f64 - precision.clamp(0.0, 1.0) * span;
    (x.round() as i64, y.round() as i64)
}

/// Precision (vertical) against recall (horizontal) on a white canvas with a
/// light grid at 0.1 steps.
pub fn render_pr_curve(points: &[PrPoint]) -> Raster {
    let mut img = Raster::filled(SIZE, SIZE, 3, 255);
    for i in 0..=10 {
        let v = f64::from(i) / 10.0;
        let shade = if i == 0 || i == 10 { [0, 0, 0] } else { [225, 225, 225] };
        line(&mut img, to_px(v, 0.0), to_px(v, 1.0), shade);
        line(&mut img, to_px(0.0, v), to_px(1.0, v), shade);
    }
    let mut prev = points.first().map(|p| to_px(0.0, p.precision));
    for p in points {
        let cur = to_px(p.recall, p.precision);
        if let Some(prev) = prev {
            line(&mut img, prev, cur, [200, 30, 30]);
        }
        prev = Some(cur);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_pixels_are_drawn() {
        let pts = [
            PrPoint { recall: 0.5, precision: 1.0, threshold: 0.9 },
            PrPoint { recall: 1.0, precision: 0.5, threshold: 0.1 },
        ];
        let img = render_pr_curve(&pts);
        let (x, y) = to_px(0.75, 0.75);
        let red = |x: i64, y: i64| img.get(x as usize, y as usize, 0) == 200 && img.get(x as usize, y as usize, 1) == 30;
        assert!((-1..=1).any(|d| red(x, y + d)));
        assert_eq!(img.get(5, 5, 0), 255);
    }
}
