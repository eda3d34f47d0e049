use serde::{Deserialize, Serialize};

use super::geometry::{polygon_distance, Vec2};

/// Gray levels, as bytes; pixel intensity is `level / 255`.
pub mod level {
    pub const BACKGROUND: u8 = 51;
    pub const GOAL: u8 = 102;
    pub const FIXTURE: u8 = 128;
    pub const OBJECT: u8 = 179;
    pub const PALM: u8 = 217;
    pub const FINGER: u8 = 255;
}

/// Single-channel image, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Pixels scaled into `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn write_unit_into(&self, out: &mut Vec<f64>) {
        out.extend(self.pixels.iter().map(|&p| p as f64 / 255.0));
    }

    pub fn count_level(&self, value: u8) -> usize {
        self.pixels.iter().filter(|&&p| p == value).count()
    }

    pub fn count_diff(&self, other: &Image) -> usize {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Axis-aligned world rectangle mapped onto the full image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub min: Vec2,
    pub max: Vec2,
}

/// Rasterizer with conservative coverage: a pixel is painted when its
/// centre lies within half a pixel of the shape, so shapes in contact always
/// produce touching or overlapping silhouettes.
pub struct Canvas {
    pub image: Image,
    camera: Camera,
    pixel: Vec2,
}

impl Canvas {
    pub fn new(width: usize, height: usize, camera: Camera) -> Self {
        let span = camera.max - camera.min;
        Self {
            image: Image::filled(width, height, level::BACKGROUND),
            camera,
            pixel: Vec2::new(span.x / width as f64, span.y / height as f64),
        }
    }

    fn pixel_center(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            self.camera.min.x + (col as f64 + 0.5) * self.pixel.x,
            self.camera.max.y - (row as f64 + 0.5) * self.pixel.y,
        )
    }

    fn tolerance(&self) -> f64 {
        0.5 * self.pixel.x.max(self.pixel.y)
    }

    fn paint_where(&mut self, lo: Vec2, hi: Vec2, value: u8, inside: impl Fn(Vec2) -> bool) {
        let tol = self.tolerance();
        let (w, h) = (self.image.width, self.image.height);
        let to_col = |x: f64| ((x - self.camera.min.x) / self.pixel.x).floor();
        let to_row = |y: f64| ((self.camera.max.y - y) / self.pixel.y).floor();
        let c0 = to_col(lo.x - tol).max(0.0) as usize;
        let c1 = (to_col(hi.x + tol).min(w as f64 - 1.0)).max(-1.0);
        let r0 = to_row(hi.y + tol).max(0.0) as usize;
        let r1 = (to_row(lo.y - tol).min(h as f64 - 1.0)).max(-1.0);
        if c1 < 0.0 || r1 < 0.0 {
            return;
        }
        for row in r0..=r1 as usize {
            for col in c0..=c1 as usize {
                if inside(self.pixel_center(col, row)) {
                    self.image.pixels[row * w + col] = value;
                }
            }
        }
    }

    pub fn fill_polygon(&mut self, poly: &[Vec2], value: u8) {
        let lo = poly
            .iter()
            .fold(Vec2::new(f64::INFINITY, f64::INFINITY), |a, v| Vec2::new(a.x.min(v.x), a.y.min(v.y)));
        let hi = poly.iter().fold(
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            |a, v| Vec2::new(a.x.max(v.x), a.y.max(v.y)),
        );
        let tol = self.tolerance();
        self.paint_where(lo, hi, value, |p| polygon_distance(poly, p).0 <= tol);
    }

    pub fn fill_disk(&mut self, center: Vec2, radius: f64, value: u8) {
        let r = Vec2::new(radius, radius);
        let tol = self.tolerance();
        self.paint_where(center - r, center + r, value, |p| {
            (p - center).length() - radius <= tol
        });
    }

    pub fn fill_rect(&mut self, lo: Vec2, hi: Vec2, value: u8) {
        let poly = [
            lo,
            Vec2::new(hi.x, lo.y),
            hi,
            Vec2::new(lo.x, hi.y),
        ];
        self.fill_polygon(&poly, value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera {
            min: Vec2::new(-1.0, -1.0),
            max: Vec2::new(1.0, 1.0),
        }
    }

    #[test]
    fn empty_canvas_is_uniform() {
        let c = Canvas::new(8, 8, cam());
        assert_eq!(c.image.count_level(level::BACKGROUND), 64);
    }

    #[test]
    fn tiny_disk_still_covers_a_pixel() {
        let mut c = Canvas::new(10, 10, cam());
        c.fill_disk(Vec2::new(0.1, 0.1), 1e-3, level::FINGER);
        assert!(c.image.count_level(level::FINGER) >= 1);
    }

    #[test]
    fn touching_shapes_have_adjacent_silhouettes() {
        let mut a = Canvas::new(20, 20, cam());
        a.fill_rect(Vec2::new(-0.5, -0.5), Vec2::new(0.0, 0.5), level::OBJECT);
        a.fill_disk(Vec2::new(0.03, 0.0), 0.03, level::FINGER);
        // Some finger pixel must be 8-adjacent to (or replace) an object pixel.
        let img = &a.image;
        let mut ok = false;
        for r in 0..20usize {
            for col in 0..20usize {
                if img.get(col, r) != level::FINGER {
                    continue;
                }
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (r as i64 + dr, col as i64 + dc);
                        if (0..20).contains(&rr) && (0..20).contains(&cc) && img.get(cc as usize, rr as usize) == level::OBJECT {
                            ok = true;
                        }
                    }
                }
            }
        }
        assert!(ok);
    }
}
