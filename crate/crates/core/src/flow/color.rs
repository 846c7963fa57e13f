use super::FlowField;
use crate::raster::Image;

/// The Middlebury flow color wheel: hue encodes direction, saturation
/// encodes magnitude relative to `max`, zero flow is white.
#[derive(Debug, Clone)]
pub struct ColorWheel {
    colors: Vec<[f32; 3]>,
}

impl Default for ColorWheel {
    fn default() -> Self {
        // segment lengths red→yellow→green→cyan→blue→magenta→red
        const SEGMENTS: [(usize, [f32; 3], [f32; 3]); 6] = [
            (15, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
            (6, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
            (4, [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]),
            (11, [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]),
            (13, [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]),
            (6, [1.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
        ];
        let mut colors = Vec::with_capacity(55);
        for (n, from, to) in SEGMENTS {
            for i in 0..n {
                let t = i as f32 / n as f32;
                colors.push([0, 1, 2].map(|k| from[k] + (to[k] - from[k]) * t));
            }
        }
        ColorWheel { colors }
    }
}

impl ColorWheel {
    /// Color of pixel-unit flow `(du, dv)` normalized by `max`.
    pub fn color(&self, du: f64, dv: f64, max: f64) -> [f32; 3] {
        let (u, v) = (du / max, dv / max);
        let rad = (u * u + v * v).sqrt();
        let a = (-v).atan2(-u) / std::f64::consts::PI;
        let n = self.colors.len();
        let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
        let k0 = fk.floor() as usize % n;
        let k1 = (k0 + 1) % n;
        let f = (fk - fk.floor()) as f32;
        let mut out = [0.0f32; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let col = (1.0 - f) * self.colors[k0][c] + f * self.colors[k1][c];
            *o = if rad <= 1.0 {
                1.0 - rad as f32 * (1.0 - col)
            } else {
                col * 0.75
            };
        }
        out
    }
}

/// Renders a flow field with the color wheel. Equirect flow is converted to
/// pixel units first; `max` defaults to the largest valid magnitude.
/// Invalid pixels are black.
pub fn flow_to_color(field: &FlowField, max: Option<f64>) -> (Image, f64) {
    let px: Vec<Option<(f64, f64)>> = (0..field.len())
        .map(|i| {
            field.is_valid(i).then(|| {
                if field.is_equirect() {
                    field.equirect_to_pixels(field.u[i], field.v[i])
                } else {
                    (field.u[i], field.v[i])
                }
            })
        })
        .collect();
    let max = max.unwrap_or_else(|| {
        px.iter()
            .flatten()
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f64::max)
    });
    let max = if max > 0.0 { max } else { 1.0 };
    let wheel = ColorWheel::default();
    let (w, h) = field.spec.dims();
    let mut img = Image::new(w, h, 3);
    for (i, p) in px.iter().enumerate() {
        if let Some((u, v)) = p {
            img.data[i * 3..i * 3 + 3].copy_from_slice(&wheel.color(*u, *v, max));
        }
    }
    (img, max)
}
