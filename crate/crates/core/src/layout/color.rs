use serde::{Deserialize, Serialize};

/// 8-bit RGB triple, serialized as `[r, g, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }

    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

pub const GRAY: Rgb = Rgb::new(170, 170, 170);

/// Three-stop color ramps for magnitudes in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    /// green -> yellow -> red
    #[default]
    Traffic,
    /// blue -> pale yellow -> vermilion, distinguishable with red-green deficiency
    Diverging,
    Grayscale,
}

impl Palette {
    fn stops(self) -> [[u8; 3]; 3] {
        match self {
            Palette::Traffic => [[46, 204, 64], [255, 220, 0], [255, 65, 54]],
            Palette::Diverging => [[44, 123, 182], [255, 255, 191], [215, 25, 28]],
            Palette::Grayscale => [[230, 230, 230], [140, 140, 140], [40, 40, 40]],
        }
    }

    pub fn color(self, x: f64) -> Rgb {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        let [lo, mid, hi] = self.stops();
        let (a, b, t) = if x <= 0.5 { (lo, mid, x * 2.0) } else { (mid, hi, (x - 0.5) * 2.0) };
        let mut out = [0u8; 3];
        for c in 0..3 {
            let v = a[c] as f64 + (b[c] as f64 - a[c] as f64) * t;
            // round half up
            out[c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    }
}

/// Default fault/status color ramp. Input is clamped to `[0, 1]`.
pub fn color_scale(x: f64) -> Rgb {
    Palette::Traffic.color(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_quarter() {
        assert_eq!(color_scale(0.0), Rgb::new(46, 204, 64));
        assert_eq!(color_scale(0.5), Rgb::new(255, 220, 0));
        assert_eq!(color_scale(1.0), Rgb::new(255, 65, 54));
        assert_eq!(color_scale(0.25), Rgb::new(151, 212, 32));
    }

    #[test]
    fn clamps() {
        assert_eq!(color_scale(-3.0), color_scale(0.0));
        assert_eq!(color_scale(7.0), color_scale(1.0));
    }

    #[test]
    fn channel_monotonicity() {
        let mut prev = color_scale(0.0);
        for i in 1..=1000 {
            let x = i as f64 / 1000.0;
            let c = color_scale(x);
            assert!(c.0[0] >= prev.0[0]);
            if x > 0.5 {
                assert!(c.0[1] <= prev.0[1]);
            }
            prev = c;
        }
    }

    #[test]
    fn hex_format() {
        assert_eq!(Rgb::new(255, 0, 16).hex(), "#ff0010");
    }
}
