use crate::{Error, Raster, Result};

/// Bilinear resample of the whole image onto a `size x size` square (aspect
/// ratio is not preserved). Pixel centers are aligned, so a unit scale is the
/// identity.
pub fn make_thumbnail(image: &Raster, size: usize) -> Result<Raster> {
    if size == 0 {
        return Err(Error::InvalidArgument("thumbnail size must be > 0".into()));
    }
    let (w, h, c) = (image.width(), image.height(), image.channels());
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("cannot thumbnail an empty image".into()));
    }
    let sx = w as f64 / size as f64;
    let sy = h as f64 / size as f64;
    let sample = |o: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let f = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = libm::floor(f) as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, f - lo as f64)
    };

    let mut out = Raster::new(size, size, c);
    for oy in 0..size {
        let (y0, y1, fy) = sample(oy, sy, h);
        for ox in 0..size {
            let (x0, x1, fx) = sample(ox, sx, w);
            for ch in 0..c {
                let p = |x, y| f64::from(image.get(x, y, ch));
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.set(ox, oy, ch, libm::round(v).clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_scale_is_byte_identical() {
        let img = Raster::from_fn(16, 16, |x, y| (x * 13 + y * 7) as u8);
        assert_eq!(make_thumbnail(&img, 16).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Raster::filled(256, 192, 1, 140);
        let t = make_thumbnail(&img, 64).unwrap();
        assert!(t.as_slice().iter().all(|&v| v == 140));
    }

    #[test]
    fn checkerboard_to_one_pixel_is_the_mean() {
        let img = Raster::from_fn(2, 2, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let t = make_thumbnail(&img, 1).unwrap();
        assert!((i32::from(t.get(0, 0, 0)) - 127).abs() <= 1, "{}", t.get(0, 0, 0));
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(make_thumbnail(&Raster::new(4, 4, 1), 0).is_err());
    }
}
