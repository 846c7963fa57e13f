use super::{ChartId, PixelInfo, Projection, ProjectionSpec};
use crate::sphere::{Direction3, Vec3};

/// Faces in chart-id order. The four equator faces run left to right in the
/// middle strip of the cross; top sits above front and bottom below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeFace {
    Front,
    Right,
    Back,
    Left,
    Top,
    Bottom,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Right,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Top,
        CubeFace::Bottom,
    ];

    pub fn from_chart(c: ChartId) -> Option<CubeFace> {
        Self::ALL.get(c as usize).copied()
    }

    /// (normal, right, up) in world coordinates.
    fn basis(self) -> (Vec3, Vec3, Vec3) {
        let x = Vec3(1.0, 0.0, 0.0);
        let y = Vec3(0.0, 1.0, 0.0);
        let z = Vec3(0.0, 0.0, 1.0);
        let neg = |v: Vec3| v * -1.0;
        match self {
            CubeFace::Front => (x, z, y),
            CubeFace::Right => (z, neg(x), y),
            CubeFace::Back => (neg(x), neg(z), y),
            CubeFace::Left => (neg(z), x, y),
            CubeFace::Top => (y, z, neg(x)),
            CubeFace::Bottom => (neg(y), z, x),
        }
    }

    /// Cross-layout cell (column, row) in face units.
    fn cell(self) -> (usize, usize) {
        match self {
            CubeFace::Front => (0, 1),
            CubeFace::Right => (1, 1),
            CubeFace::Back => (2, 1),
            CubeFace::Left => (3, 1),
            CubeFace::Top => (0, 0),
            CubeFace::Bottom => (0, 2),
        }
    }
}

/// Cube map in a cross layout on a `(4F + 2p) × (3F + 2p)` canvas.
///
/// Each face is extended by up to `p` pixels of neighbouring content on any
/// side not already adjoined by a face of the cross. Padding is the
/// neighbour face folded flat across the shared edge, so the canvas is C⁰
/// continuous across every face boundary. Pixels that fall in the padding
/// of two faces, or of none, are dead.
#[derive(Debug, Clone)]
pub struct CubePadding {
    face: usize,
    pad: usize,
}

impl CubePadding {
    pub fn new(face: usize, pad: usize) -> Self {
        CubePadding { face, pad }
    }

    pub fn face_size(&self) -> usize {
        self.face
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    fn origin(&self, face: CubeFace) -> (f64, f64) {
        let (c, r) = face.cell();
        (
            (self.pad + c * self.face) as f64,
            (self.pad + r * self.face) as f64,
        )
    }

    /// Face-plane coordinates `(a, b)`, both in [−1, 1] on the face itself;
    /// `b` increases upward.
    pub fn face_coords(&self, face: CubeFace, px: f64, py: f64) -> (f64, f64) {
        let (ox, oy) = self.origin(face);
        let f = self.face as f64;
        let a = (px - ox + 0.5) / f * 2.0 - 1.0;
        let b = 1.0 - (py - oy + 0.5) / f * 2.0;
        (a, b)
    }

    fn canvas_coords(&self, face: CubeFace, a: f64, b: f64) -> (f64, f64) {
        let (ox, oy) = self.origin(face);
        let f = self.face as f64;
        (
            ox - 0.5 + (a + 1.0) * 0.5 * f,
            oy - 0.5 + (1.0 - b) * 0.5 * f,
        )
    }

    /// Integer-pixel cell test: which face square contains the pixel, if any.
    fn face_at(&self, x: usize, y: usize) -> Option<CubeFace> {
        let (x, y) = (x.checked_sub(self.pad)?, y.checked_sub(self.pad)?);
        let cell = (x / self.face, y / self.face);
        CubeFace::ALL.into_iter().find(|f| f.cell() == cell)
    }

    /// Faces whose side padding contains the pixel.
    fn pad_owners(&self, x: usize, y: usize) -> impl Iterator<Item = CubeFace> + '_ {
        let (x, y) = (x as i64, y as i64);
        let (f, p) = (self.face as i64, self.pad as i64);
        CubeFace::ALL.into_iter().filter(move |face| {
            let (c, r) = face.cell();
            let x0 = p + c as i64 * f;
            let y0 = p + r as i64 * f;
            let inside_x = x >= x0 && x < x0 + f;
            let inside_y = y >= y0 && y < y0 + f;
            let near_x = (x >= x0 - p && x < x0) || (x >= x0 + f && x < x0 + f + p);
            let near_y = (y >= y0 - p && y < y0) || (y >= y0 + f && y < y0 + f + p);
            (inside_x && near_y) || (inside_y && near_x)
        })
    }
}

impl Projection for CubePadding {
    fn spec(&self) -> ProjectionSpec {
        ProjectionSpec::CubePadding {
            face: self.face,
            pad: self.pad,
        }
    }

    fn width(&self) -> usize {
        4 * self.face + 2 * self.pad
    }

    fn height(&self) -> usize {
        3 * self.face + 2 * self.pad
    }

    fn chart_count(&self) -> usize {
        6
    }

    fn pixel_info(&self, x: usize, y: usize) -> Option<PixelInfo> {
        if x >= self.width() || y >= self.height() {
            return None;
        }
        if let Some(face) = self.face_at(x, y) {
            return Some(PixelInfo {
                chart: face as ChartId,
                owned: true,
            });
        }
        let mut owners = self.pad_owners(x, y);
        match (owners.next(), owners.next()) {
            (Some(face), None) => Some(PixelInfo {
                chart: face as ChartId,
                owned: false,
            }),
            _ => None,
        }
    }

    fn chart_to_dir(&self, chart: ChartId, px: f64, py: f64) -> Option<Direction3> {
        let face = CubeFace::from_chart(chart)?;
        let (n, r, u) = face.basis();
        let (a, b) = self.face_coords(face, px, py);
        let point = if a.abs() <= 1.0 && b.abs() <= 1.0 {
            n + r * a + u * b
        } else if b.abs() <= 1.0 && a.abs() <= 3.0 {
            // fold across the left/right edge onto the neighbour face
            n * (2.0 - a.abs()) + r * a.signum() + u * b
        } else if a.abs() <= 1.0 && b.abs() <= 3.0 {
            n * (2.0 - b.abs()) + r * a + u * b.signum()
        } else {
            return None;
        };
        point.normalized()
    }

    fn dir_to_chart(&self, chart: ChartId, d: Direction3) -> Option<(f64, f64)> {
        let face = CubeFace::from_chart(chart)?;
        let (n, r, u) = face.basis();
        let (dn, dr, du) = (n.dot(d), r.dot(d), u.dot(d));
        let (a, b) = if dn > 0.0 && dr.abs() <= dn && du.abs() <= dn {
            (dr / dn, du / dn)
        } else if dr.abs() >= du.abs() && dr.abs() > 0.0 {
            // on the left/right neighbour: unfold
            let s = dr.abs();
            let (qn, qu) = (dn / s, du / s);
            if qu.abs() > 1.0 || qn < -1.0 {
                return None;
            }
            (dr.signum() * (2.0 - qn), qu)
        } else if du.abs() > 0.0 {
            let s = du.abs();
            let (qn, qr) = (dn / s, dr / s);
            if qr.abs() > 1.0 || qn < -1.0 {
                return None;
            }
            (qr, du.signum() * (2.0 - qn))
        } else {
            return None;
        };
        Some(self.canvas_coords(face, a, b))
    }

    fn owner(&self, d: Direction3) -> ChartId {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, face) in CubeFace::ALL.into_iter().enumerate() {
            let v = face.basis().0.dot(d);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best as ChartId
    }
}
