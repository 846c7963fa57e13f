use super::ErrorMap;
use crate::raster::Image;

/// Black → red → yellow → white. Zero error is black.
pub fn hot_colormap(t: f64) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0);
    [
        (3.0 * t).min(1.0) as f32,
        (3.0 * t - 1.0).clamp(0.0, 1.0) as f32,
        (3.0 * t - 2.0).clamp(0.0, 1.0) as f32,
    ]
}

/// Heatmap of an error map normalised by `max` (or the map's own maximum).
/// Returns the image and the normalisation actually used. Pixels that were
/// not evaluated are black.
pub fn error_map_image(map: &ErrorMap, max: Option<f64>) -> (Image, f64) {
    let max = max.unwrap_or_else(|| map.max());
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut img = Image::new(map.width, map.height, 3);
    for (i, v) in map.values.iter().enumerate() {
        if let Some(v) = v {
            img.data[i * 3..i * 3 + 3].copy_from_slice(&hot_colormap(v * scale));
        }
    }
    (img, max)
}

impl super::EvalReport {
    /// Renders the EPE or SD map and records the normalisation.
    pub fn heatmap(&mut self, sd: bool, max: Option<f64>) -> Image {
        let map = if sd { &self.sd_map } else { &self.epe_map };
        let (img, used) = error_map_image(map, max);
        self.heatmap_max = Some(used);
        img
    }
}
