//! Procedural stand-in for a thin/thick digit dataset: the primary label is
//! the glyph shape, the confounder label is the stroke thickness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LabeledImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Glyph {
    /// Plus-shaped cross, `y1 = 0`.
    Cross,
    /// Square outline, `y1 = 1`.
    Square,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyGenerator {
    pub side: usize,
    /// Half extent of the glyph around its center, in pixels.
    pub half_size: usize,
    /// Maximum absolute integer shift per axis.
    pub jitter: i64,
    pub noise_sigma: f64,
    /// Group id of the first generated sample; ids increase by one.
    pub first_group: u64,
}

impl Default for ToyGenerator {
    fn default() -> Self {
        Self {
            side: 16,
            half_size: 3,
            jitter: 2,
            noise_sigma: 0.05,
            first_group: 0,
        }
    }
}

impl ToyGenerator {
    /// Renders one glyph without noise.
    pub fn render(&self, glyph: Glyph, thick: bool, dx: i64, dy: i64) -> Vec<f32> {
        let s = self.side as i64;
        let c = s / 2;
        let a = self.half_size as i64;
        let mut img = vec![0f32; self.side * self.side];
        let on_thin = |x: i64, y: i64| -> bool {
            let (u, v) = (x - c - dx, y - c - dy);
            match glyph {
                Glyph::Cross => (u == 0 && v.abs() <= a) || (v == 0 && u.abs() <= a),
                Glyph::Square => u.abs().max(v.abs()) == a,
            }
        };
        for y in 0..s {
            for x in 0..s {
                let hit = if thick {
                    (-1..=1).any(|oy| (-1..=1).any(|ox| on_thin(x + ox, y + oy)))
                } else {
                    on_thin(x, y)
                };
                if hit {
                    img[(y * s + x) as usize] = 1.0;
                }
            }
        }
        img
    }

    /// All four `(y1, y2)` cells in equal proportion: sample `i` falls in
    /// cell `i mod 4`.
    pub fn generate(&self, count: usize, seed: u64) -> Vec<LabeledImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
        (0..count)
            .map(|i| {
                let cell = i % 4;
                let (y1, y2) = ((cell / 2) as u8, (cell % 2) as u8);
                let glyph = if y1 == 0 { Glyph::Cross } else { Glyph::Square };
                let dx = rng.gen_range(-self.jitter..=self.jitter);
                let dy = rng.gen_range(-self.jitter..=self.jitter);
                let mut pixels = self.render(glyph, y2 == 1, dx, dy);
                if self.noise_sigma > 0.0 {
                    for p in &mut pixels {
                        *p = (*p as f64 + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32;
                    }
                }
                LabeledImage {
                    side: self.side,
                    pixels,
                    y1,
                    y2,
                    group: self.first_group + i as u64,
                }
            })
            .collect()
    }
}

/// 16×16 glyphs with the default generator.
pub fn generate_toy(count: usize, seed: u64) -> Vec<LabeledImage> {
    ToyGenerator::default().generate(count, seed)
}
